"""Non-tightness probe for the heavy-level U field.

For a window ``[ceil(ln N), N)^2`` and thresholds ``B`` the probe looks at the
event that some cell carries an active level with value ``>= B * i * j``.
Cells are positive, so the frozen quadrant never touches them and every past
gives the same law; the pasts are still run separately and reported.

Sampling avoids touching 10^8 cells per replicate with the full level
sampler: a level with value ``>= x`` is active exactly when the cell's first
uniform exceeds the no-level probability (see ``sample_u_levels``), and that
probability is below ``1/x`` for ``x >= 8``, so only cells with
``1 - w < 1/x`` need the exact tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from ..errors import ParameterError
from ..innovations import InnovationSpec, channel_id
from ..models import FieldModel
from ..rng import derive_keys, lattice_bits, to_uniform
from ..ulevels import first_level_at_least, level_value, single_level_exceedance
from .engine import stream_id

DEFAULT_BS = (1.0, 4.0, 16.0)
ROW_CHUNK = 1 << 22


def probe_window(n: int) -> tuple[int, int]:
    """Index range ``[ceil(ln N), N)`` on each axis."""
    return math.ceil(math.log(n)), n


@lru_cache(maxsize=256)
def analytic_exceedance(n: int, b: float, n_max: int | None = None) -> dict:
    """Expected count of exceedance cells and ``P(at least one)`` over the window, exactly per cell."""
    lo, hi = probe_window(n)
    count = 0.0
    log_none = 0.0
    j = np.arange(lo, hi, dtype=np.float64)
    rows_per = max(1, ROW_CHUNK // (4 * (hi - lo)))
    for i0 in range(lo, hi, rows_per):
        i = np.arange(i0, min(hi, i0 + rows_per), dtype=np.float64)[:, None]
        # cells (i, j) with j > i appear twice by symmetry
        w = np.where(j[None, :] > i, 2.0, np.where(j[None, :] == i, 1.0, 0.0))
        sel = w > 0
        p = single_level_exceedance(b * (i * j[None, :])[sel], n_max)
        count += float(np.dot(w[sel], p))
        log_none += float(np.dot(w[sel], np.log1p(-p)))
    return {"expected_count": count, "p_any": -math.expm1(log_none)}


def single_cell_exceedance(x: float, n_max: int | None = None) -> float:
    return float(single_level_exceedance(np.array([x]), n_max)[0])


@dataclass
class ProbeRow:
    past_id: int
    n: int
    b: float
    replicates: int
    p_any: float
    se: float
    mean_count: float
    analytic_p_any: float
    analytic_count: float

    def to_dict(self) -> dict:
        return self.__dict__.copy()


@dataclass
class ProbeReport:
    rows: list[ProbeRow]
    control: list[dict]

    def ratio(self, b: float, n_lo: int, n_hi: int) -> float:
        lo = next(r.analytic_count for r in self.rows if r.b == b and r.n == n_lo)
        hi = next(r.analytic_count for r in self.rows if r.b == b and r.n == n_hi)
        return hi / lo

    @property
    def control_exceedances(self) -> int:
        return int(sum(c["exceedances"] for c in self.control))

    def non_decreasing(self) -> bool:
        ok = True
        for b in {r.b for r in self.rows}:
            rs = sorted((r for r in self.rows if r.b == b), key=lambda r: r.n)
            ok &= all(y.analytic_p_any >= x.analytic_p_any for x, y in zip(rs, rs[1:]))
        return ok

    def to_dict(self) -> dict:
        ns = sorted({r.n for r in self.rows})
        ratios = {}
        if len(ns) >= 2:
            for b in sorted({r.b for r in self.rows}):
                ratios[str(b)] = self.ratio(b, ns[0], ns[-1])
        return {"rows": [r.to_dict() for r in self.rows], "control": self.control,
                "count_ratios": ratios, "non_decreasing": self.non_decreasing(),
                "control_exceedances": self.control_exceedances}


def _level_spec(model: FieldModel) -> tuple[str, InnovationSpec]:
    if model.variant == "u-field":
        return model.channel, model.channels[model.channel]
    if model.variant == "product-omd" and model.inner.variant == "u-field":
        return model.inner.channel, model.inner.channels[model.inner.channel]
    raise ParameterError("counterexample probe needs a u-field (or a product built on one)")


def _sample_counts(spec: InnovationSpec, channel: str, n: int, bs: Sequence[float], reps: int, base_seed: int,
                   stream: int) -> np.ndarray:
    """Per replicate and threshold, the number of cells with an active level ``>= B i j``."""
    lo, hi = probe_window(n)
    width = hi - lo
    rows_per = max(1, ROW_CHUNK // width)
    b_min = min(bs)
    counts = np.zeros((reps, len(bs)), dtype=np.int64)
    keys = derive_keys(base_seed, "replicate", (stream, channel_id(channel)), np.arange(reps, dtype=np.int64))
    for r in range(reps):
        for i0 in range(lo, hi, rows_per):
            i1 = min(hi, i0 + rows_per)
            # same keying as the lattice sampler, so these are the replicate's own level draws
            w = to_uniform(lattice_bits(keys[r], (i0, lo), (i1 - i0, width)))
            tail = 1.0 - w
            x = b_min * np.arange(i0, i1, dtype=np.float64)[:, None] * np.arange(lo, hi, dtype=np.float64)[None, :]
            screen = np.where(x >= 8.0, 1.0 / np.maximum(x, 1.0), 1.0)
            ii, jj = np.nonzero(tail < screen)
            if ii.size == 0:
                continue
            xs = x[ii, jj] / b_min
            tl = tail[ii, jj]
            for bi, b in enumerate(bs):
                counts[r, bi] += int(np.sum(tl < _increasing_exceedance(b * xs, spec.n_max)))
    return counts


def _increasing_exceedance(x: np.ndarray, n_max: int) -> np.ndarray:
    # on x > level_value(2) only levels on the increasing branch qualify, which is what
    # makes "some level >= x is active" a function of the first uniform alone
    out = single_level_exceedance(x, n_max)
    small = x <= float(level_value(2))
    if np.any(small):
        raise ParameterError("probe thresholds must exceed the small-level values (B*i*j > 4.17)")
    return out


def _control_max(model: FieldModel, n: int, bs: Sequence[float], reps: int, base_seed: int, stream: int) -> list[dict]:
    channel, spec = model.channel, model.channels[model.channel]
    lo, hi = probe_window(n)
    width = hi - lo
    rows_per = max(1, ROW_CHUNK // width)
    keys = derive_keys(base_seed, "replicate", (stream, channel_id(channel)), np.arange(reps, dtype=np.int64))
    best = np.zeros(reps)
    for r in range(reps):
        for i0 in range(lo, hi, rows_per):
            i1 = min(hi, i0 + rows_per)
            u = spec.from_bits(lattice_bits(keys[r], (i0, lo), (i1 - i0, width)))
            ij = np.arange(i0, i1, dtype=np.float64)[:, None] * np.arange(lo, hi, dtype=np.float64)[None, :]
            best[r] = max(best[r], float(np.max(u / ij)))
    return [{"n": n, "b": b, "replicates": reps, "max_ratio": float(best.max()),
             "exceedances": int(np.sum(best >= b))} for b in bs]


def counterexample_probe(model: FieldModel, ladder: Sequence[int] = (1000, 10000), pasts: Sequence[int] = (0,),
                         bs: Sequence[float] = DEFAULT_BS, replicates: Sequence[int] | int = (400, 20),
                         control: FieldModel | None = None, control_replicates: Sequence[int] | int = (20, 2),
                         base_seed: int = 0) -> ProbeReport:
    """Exceedance probabilities ``P(max_{i,j} U_ij / (ij) >= B)`` along the window ladder."""
    channel, spec = _level_spec(model)
    if spec.kind != "u-level-composite":
        raise ParameterError("probe needs heavy-level innovations")
    reps = [replicates] * len(ladder) if isinstance(replicates, int) else list(replicates)
    creps = [control_replicates] * len(ladder) if isinstance(control_replicates, int) else list(control_replicates)
    if len(reps) != len(ladder) or len(creps) != len(ladder):
        raise ParameterError("replicate counts must match the ladder")
    top = max(ladder) ** 2 * max(bs)
    if level_value(spec.n_max) < top:
        raise ParameterError(f"N_max={spec.n_max} too small: top level value must exceed {top:g}")
    rows = []
    for n_i, n in enumerate(ladder):
        ana = {b: analytic_exceedance(n, b, spec.n_max) for b in bs}
        for p in pasts:
            stream = stream_id(base_seed, p, n_i, 0x0CE)
            counts = _sample_counts(spec, channel, n, bs, reps[n_i], base_seed, stream)
            for bi, b in enumerate(bs):
                hit = counts[:, bi] > 0
                ph = float(np.mean(hit))
                se = math.sqrt(max(ph * (1 - ph), 1.0 / reps[n_i]) / reps[n_i])
                rows.append(ProbeRow(p, n, b, reps[n_i], ph, se, float(np.mean(counts[:, bi])),
                                     ana[b]["p_any"], ana[b]["expected_count"]))
    ctl = []
    if control is not None:
        for n_i, n in enumerate(ladder):
            ctl.extend(_control_max(control, n, bs, creps[n_i], base_seed, stream_id(base_seed, n_i, 0xC0)))
    return ProbeReport(rows, ctl)


__all__ = ["counterexample_probe", "analytic_exceedance", "single_cell_exceedance", "probe_window",
           "first_level_at_least"]
