"""Empirical check of the two array conditions behind the row-martingale CLT."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from ..errors import ParameterError
from ..lattice import Rect, build_prefix_table
from ..models import FieldModel, field_window, footprint_box
from .engine import frozen_for, run_replicates, stream_id
from .sigma import estimate_sigma2

DEFAULT_QS = (Fraction(1, 4), Fraction(1, 2), Fraction(1))


@dataclass
class GHRow:
    size: tuple[int, int]
    limit: dict  # q -> (mean, se)
    max_stat: tuple[float, float]


@dataclass
class GHReport:
    rows: list[GHRow]
    sigma2: float
    bound_sq: float
    past_id: int | None

    @property
    def limit_decreasing(self) -> bool:
        qs = self.rows[0].limit.keys()
        return all(all(b.limit[q][0] < a.limit[q][0] for a, b in zip(self.rows, self.rows[1:])) for q in qs)

    @property
    def max_bounded(self) -> bool:
        return all(r.max_stat[0] <= self.bound_sq for r in self.rows)

    def to_dict(self) -> dict:
        return {
            "sigma2": self.sigma2,
            "bound_sq": self.bound_sq,
            "frozen_past_id": self.past_id,
            "rows": [{"n": r.size[0], "v": r.size[1],
                      "limit": {str(q): {"mean": m, "se": s} for q, (m, s) in r.limit.items()},
                      "max": {"mean": r.max_stat[0], "se": r.max_stat[1]}} for r in self.rows],
            "limit_decreasing": self.limit_decreasing,
            "max_bounded": self.max_bounded,
        }


def gh_check(model: FieldModel, sizes: Sequence[tuple[int, int]], replicates: int = 2000, past_id: int | None = 0,
             qs: Sequence = DEFAULT_QS, base_seed: int = 0, threads: int | None = None) -> GHReport:
    """Monte Carlo under the frozen past of

    ``(1/n) E_0 |sum_{i <= [(n-1) q]} (F_i^2 - sigma^2)|`` and ``(1/n) E_0 max_i F_i^2``,
    with row sums ``F_i = v^{-1/2} sum_{j < v} X_{i,j}``.
    """
    if model.d != 2:
        raise ParameterError("row statistics are defined for two-dimensional fields")
    qs = tuple(Fraction(q) for q in qs)
    if any(not 0 <= q <= 1 for q in qs):
        raise ParameterError("q must lie in [0, 1]")
    sigma2 = estimate_sigma2(model, seed=base_seed).value
    channels = model.all_channels()
    rows = []
    for s_i, (n, v) in enumerate(sizes):
        window = Rect((0, 0), (n, v))
        box = footprint_box(model, window)
        cuts = [math.floor((n - 1) * q) + 1 for q in qs]  # number of rows i = 0 .. [(n-1)q]

        def reducer(lat, n=n, v=v, window=window, cuts=cuts):
            cum = build_prefix_table(field_window(model, lat, window), window).cumulative
            f2 = (np.diff(cum[..., :, v], axis=-1) / math.sqrt(v)) ** 2  # F_i^2, i = 0 .. n-1
            dev = np.cumsum(f2 - sigma2, axis=-1)
            cols = [np.abs(dev[..., c - 1]) / n for c in cuts]
            cols.append(np.max(f2, axis=-1) / n)
            return np.stack(cols, axis=-1)

        frozen = frozen_for(box, channels, base_seed, past_id)
        stream = stream_id(base_seed, -1 if past_id is None else past_id, s_i, 0x64)
        out = run_replicates(box, channels, replicates, base_seed, stream, reducer, frozen, threads)
        se = np.std(out, axis=0, ddof=1) / math.sqrt(replicates)
        mean = np.mean(out, axis=0)
        limit = {q: (float(mean[i]), float(se[i])) for i, q in enumerate(qs)}
        rows.append(GHRow((n, v), limit, (float(mean[-1]), float(se[-1]))))
    return GHReport(rows, sigma2, model.bound**2, past_id)
