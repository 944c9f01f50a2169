import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, TypeVar

import numpy as np

from poissonbalance.config.settings import settings
from poissonbalance.utils.poisson_core import sample_max_batch

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

# Upper bound on trials x machines drawn in one numpy call.
_CHUNK_CELLS = 4_000_000


def run_parallel(fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None) -> List[R]:
    """
    Apply `fn` to every item on a thread pool

    Results come back in input order whatever order the threads finish in.
    """
    items = list(items)
    workers = settings.workers if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def spawn_generators(seed: int, streams: int) -> List[np.random.Generator]:
    """Independent generators, one per stream, all derived from one seed."""
    if streams < 1:
        raise ValueError("streams must be at least 1")
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(streams)]


def split_trials(trials: int, streams: int) -> List[int]:
    base, extra = divmod(trials, streams)
    return [base + (1 if i < extra else 0) for i in range(streams)]


def _draw_stream(loads: np.ndarray, rng: np.random.Generator, count: int) -> np.ndarray:
    if count == 0:
        return np.zeros(0, dtype=np.int64)
    chunk = max(1, _CHUNK_CELLS // max(1, loads.size))
    parts = []
    done = 0
    while done < count:
        size = min(chunk, count - done)
        parts.append(sample_max_batch(loads, rng, size))
        done += size
    return np.concatenate(parts)


def parallel_sample_max(loads: Sequence[float], trials: int, seed: int,
                        streams: Optional[int] = None, workers: Optional[int] = None) -> np.ndarray:
    """
    `trials` draws of max_j Poi(loads[j]), split over independently seeded streams

    The result is the concatenation of the streams in stream order, so it
    depends only on (seed, streams, trials).
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    streams = settings.mc_streams if streams is None else streams
    arr = np.asarray(loads, dtype=float)
    generators = spawn_generators(seed, streams)
    counts = split_trials(trials, streams)
    logger.debug(f"Sampling {trials} maxima of {arr.size} Poissons over {streams} streams")
    parts = run_parallel(
        lambda job: _draw_stream(arr, generators[job], counts[job]),
        range(streams),
        workers,
    )
    return np.concatenate(parts)
