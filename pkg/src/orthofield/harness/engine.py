"""Replicate scheduling.

Replicates are processed in fixed-size batches on a thread pool. Every cell
value is keyed by its replicate id, and per-replicate statistics never mix
replicates, so results are bit-identical for any thread count or batch size.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Mapping

import numpy as np

from ..errors import ParameterError
from ..innovations import FrozenPast, InnovationLattice, InnovationSpec, make_frozen_past, sample_innovations
from ..lattice import Rect
from ..rng import derive_key

THREADS_ENV = "ORTHOFIELD_THREADS"
CELL_BUDGET = 1 << 21


def resolve_threads(threads: int | None = None) -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            threads = int(env)
        except ValueError:
            raise ParameterError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if threads is None:
        threads = os.cpu_count() or 1
    if threads < 1:
        raise ParameterError("threads must be >= 1")
    return threads


def stream_id(base_seed: int, *ids: int) -> int:
    """Replicate-family id for one (past, size, purpose) combination."""
    return int(derive_key(base_seed, "aux", *ids)) & 0x7FFFFFFFFFFFFFFF


def frozen_for(box: Rect, channels: Mapping[str, InnovationSpec], base_seed: int,
               past_id: int | None) -> FrozenPast | None:
    if past_id is None:
        return None
    return make_frozen_past(box, channels, base_seed, past_id)


def run_replicates(box: Rect, channels: Mapping[str, InnovationSpec], reps: int, base_seed: int, stream: int,
                   reducer: Callable[[InnovationLattice], np.ndarray], frozen: FrozenPast | None = None,
                   threads: int | None = None, batch: int | None = None) -> np.ndarray:
    """Stack ``reducer(lattice)`` over replicate ids ``0 .. reps-1`` (leading axis)."""
    if reps < 1:
        raise ParameterError("reps must be >= 1")
    if batch is None:
        batch = max(1, min(reps, CELL_BUDGET // max(1, box.volume * len(channels))))
    starts = range(0, reps, batch)

    def work(start: int) -> np.ndarray:
        ids = np.arange(start, min(reps, start + batch), dtype=np.int64)
        lat = sample_innovations(box, channels, base_seed, ids, frozen=frozen, stream=stream)
        return np.asarray(reducer(lat))

    n_threads = min(resolve_threads(threads), len(starts))
    if n_threads == 1:
        parts = [work(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            parts = list(pool.map(work, starts))
    return np.concatenate(parts, axis=0)
