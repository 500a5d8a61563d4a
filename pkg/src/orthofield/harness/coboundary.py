"""Distance between partial sums and their orthomartingale part for coboundary models."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import ParameterError
from ..lattice import Rect, build_prefix_table
from ..models import FieldModel, field_window, footprint_box
from .engine import frozen_for, run_replicates, stream_id

QUANTILES = (0.1, 0.5, 0.9)


def _partial(arr: np.ndarray, axis: int) -> np.ndarray:
    """Exclusive prefix sums along ``axis`` (first entry 0)."""
    c = np.cumsum(arr, axis=axis)
    pad = [(0, 0)] * arr.ndim
    pad[axis % arr.ndim] = (1, 0)
    return np.pad(c, pad)


def residual_terms(model: FieldModel, lat, n: int, v: int) -> dict:
    """Per-replicate maxima over ``1 <= k <= n, 1 <= l <= v`` of ``|S - M|`` and ``|R1|, |R2|, |R3|``
    (all divided by ``sqrt(nv)``), plus the telescoping identity error and ``max |Y|``."""
    c = model.cobo
    scale = math.sqrt(n * v)
    win = Rect((0, 0), (n, v))
    x = field_window(model, lat, win)
    batch = x.shape[:-2]
    zero = np.zeros(batch + (n, v))
    m = field_window(c.m, lat, win) if c.m is not None else zero
    d = build_prefix_table(x - m, win).cumulative[..., 1:, 1:]  # (S - M)(k, l)
    r1 = np.zeros(batch + (n, v))
    r2 = np.zeros(batch + (n, v))
    r3 = np.zeros(batch + (n, v))
    y_max = np.zeros(batch)
    if c.m1 is not None:
        m1 = field_window(c.m1, lat, Rect((0, 0), (n + 1, v)))
        p = _partial(m1, -1)[..., 1:]  # p[k, l-1] = sum_{j < l} m1_{k, j}
        r1 = p[..., :1, :] - p[..., 1:, :]
    if c.m2 is not None:
        m2 = field_window(c.m2, lat, Rect((0, 0), (n, v + 1)))
        p = _partial(m2, -2)[..., 1:, :]  # p[k-1, l] = sum_{i < k} m2_{i, l}
        r2 = p[..., :, :1] - p[..., :, 1:]
    if c.y is not None:
        y = field_window(c.y, lat, Rect((0, 0), (n + 1, v + 1)))
        r3 = y[..., :1, :1] - y[..., 1:, :1] - y[..., :1, 1:] + y[..., 1:, 1:]
        y_max = np.max(np.abs(y), axis=(-2, -1))
    ident = np.max(np.abs(d - (r1 + r2 + r3)), axis=(-2, -1))
    red = lambda a: np.max(np.abs(a), axis=(-2, -1)) / scale  # noqa: E731
    return {"residual": red(d), "r1": red(r1), "r2": red(r2), "r3": red(r3), "identity": ident / scale,
            "y_max": y_max, "residual_raw": np.max(np.abs(d), axis=(-2, -1))}


@dataclass
class CoboundaryReport:
    rows: list[dict]
    bound_checked: bool
    bound_violations: int

    @property
    def decay_ratios(self) -> list[float]:
        med = [r["residual_quantiles"]["0.5"] for r in self.rows]
        return [a / b if b > 0 else math.inf for a, b in zip(med, med[1:])]

    def to_dict(self) -> dict:
        return {"rows": self.rows, "decay_ratios": self.decay_ratios, "bound_checked": self.bound_checked,
                "bound_violations": self.bound_violations}


def coboundary_residuals(model: FieldModel, sizes: Sequence[tuple[int, int]], replicates: int = 1000,
                         base_seed: int = 0, past_id: int | None = None, threads: int | None = None
                         ) -> CoboundaryReport:
    """Quantiles of ``max |S_{k,l} - M_{k,l}| / sqrt(nv)`` per size, with the component maxima.

    When only ``m`` and ``Y`` are present the per-replicate bound
    ``max |S - M| <= 4 max |Y|`` is checked without tolerance.
    """
    if model.variant != "coboundary":
        raise ParameterError("coboundary residuals need a coboundary model")
    c = model.cobo
    check_bound = c.m1 is None and c.m2 is None and c.y is not None
    channels = model.all_channels()
    keys = ("residual", "r1", "r2", "r3", "identity", "y_max", "residual_raw")
    rows = []
    violations = 0
    for s_i, (n, v) in enumerate(sizes):
        box = footprint_box(model, Rect((0, 0), (n + 1, v + 1)))
        frozen = frozen_for(box, channels, base_seed, past_id)

        def reducer(lat, n=n, v=v):
            t = residual_terms(model, lat, n, v)
            return np.stack([t[k] for k in keys], axis=-1)

        stream = stream_id(base_seed, -1 if past_id is None else past_id, s_i, 0xCB)
        out = run_replicates(box, channels, replicates, base_seed, stream, reducer, frozen, threads)
        cols = {k: out[:, i] for i, k in enumerate(keys)}
        row = {"n": n, "v": v, "replicates": replicates,
               "residual_quantiles": {str(q): float(np.quantile(cols["residual"], q)) for q in QUANTILES},
               "residual_max": float(np.max(cols["residual"])),
               "r1_median": float(np.median(cols["r1"])), "r2_median": float(np.median(cols["r2"])),
               "r3_median": float(np.median(cols["r3"])), "identity_max_error": float(np.max(cols["identity"]))}
        if check_bound:
            bad = int(np.sum(cols["residual_raw"] > 4.0 * cols["y_max"]))
            violations += bad
            row["bound_violations"] = bad
            row["max_bound_ratio"] = float(np.max(np.where(cols["y_max"] > 0, cols["residual_raw"] /
                                                           np.maximum(cols["y_max"], 1e-300), 0.0)) / 4.0)
        rows.append(row)
    return CoboundaryReport(rows, check_bound, violations)
