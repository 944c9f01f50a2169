import csv
import io
import json
import logging
import os
from typing import Any, Dict, Iterable, Optional, Sequence

from pydantic import ValidationError

from poissonbalance.api.schemas import AssignmentDocument, InstanceDocument
from poissonbalance.exceptions import InstanceFormatError
from poissonbalance.models.instance_model import Assignment, JobInstance

logger = logging.getLogger(__name__)


def _load_json(path: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise InstanceFormatError(f"file not found: {path}")
    except OSError as e:
        raise InstanceFormatError(f"cannot read {path}: {e}")
    except json.JSONDecodeError as e:
        raise InstanceFormatError(f"{path} is not valid JSON: {e}")


def parse_instance(data: Any, source: str = "<document>") -> JobInstance:
    """Validate an instance document and turn it into a JobInstance"""
    try:
        doc = InstanceDocument.model_validate(data)
    except ValidationError as e:
        raise InstanceFormatError(f"invalid instance in {source}: {e}")
    return JobInstance(machines=doc.machines, sizes=tuple(doc.jobs))


def read_instance(path: str) -> JobInstance:
    instance = parse_instance(_load_json(path), source=path)
    logger.info(f"Loaded instance from {path}: n={instance.n}, m={instance.machines}")
    return instance


def assignment_document(assignment: Assignment, expected_max: float,
                        algorithm: str, epsilon: float) -> AssignmentDocument:
    return AssignmentDocument(
        assignment=list(assignment.mapping),
        loads=list(assignment.loads),
        expected_max=expected_max,
        algorithm=algorithm,
        epsilon=epsilon,
    )


def write_assignment(doc: AssignmentDocument, path: Optional[str] = None) -> str:
    """Write the document to `path`, or return it as text when no path is given"""
    text = doc.model_dump_json(indent=2)
    if path:
        _write_text(path, text)
        logger.info(f"Wrote assignment document to {path}")
    return text


def rows_to_csv(header: Sequence[str], rows: Iterable[Dict[str, Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(header), extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def write_csv(path: str, header: Sequence[str], rows: Iterable[Dict[str, Any]]) -> str:
    _write_text(path, rows_to_csv(header, rows))
    logger.info(f"Wrote CSV report to {path}")
    return path


def _write_text(path: str, text: str):
    try:
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
            if not text.endswith("\n"):
                f.write("\n")
    except OSError as e:
        logger.error(f"Error writing {path}: {str(e)}")
        raise InstanceFormatError(f"cannot write {path}: {e}")
