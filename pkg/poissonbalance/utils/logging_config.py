import logging
import logging.config
import os
from typing import Any, Dict, Optional


def build_logging_config(level: str = "INFO", log_file: Optional[str] = None) -> Dict[str, Any]:
    handlers: Dict[str, Any] = {
        'console': {
            'class': 'logging.StreamHandler',
            'level': level,
            'formatter': 'default',
            'stream': 'ext://sys.stderr',
        },
    }
    active = ['console']
    if log_file:
        handlers['file'] = {
            'class': 'logging.handlers.RotatingFileHandler',
            'level': 'DEBUG',
            'formatter': 'detailed',
            'filename': log_file,
            'maxBytes': 10485760,  # 10MB
            'backupCount': 5,
        }
        active.append('file')

    return {
        'version': 1,
        'disable_existing_loggers': False,
        'formatters': {
            'default': {
                'format': '[%(asctime)s] %(levelname)s in %(module)s: %(message)s',
            },
            'detailed': {
                'format': '[%(asctime)s] %(levelname)s in %(module)s [%(pathname)s:%(lineno)d]: %(message)s',
            },
        },
        'handlers': handlers,
        'loggers': {
            '': {  # root logger
                'level': 'WARNING',
                'handlers': active,
            },
            'poissonbalance': {
                'level': 'DEBUG' if log_file else level,
                'handlers': active,
                'propagate': False,
            },
        },
    }


def setup_logging(level: str = "INFO", log_file: Optional[str] = None):
    """Setup logging configuration"""
    if log_file:
        directory = os.path.dirname(os.path.abspath(log_file))
        os.makedirs(directory, exist_ok=True)

    logging.config.dictConfig(build_logging_config(level.upper(), log_file))

    logger = logging.getLogger(__name__)
    logger.debug("Logging configured successfully")
