"""Finite-dimensional laws of the rescaled partial-sum process and increment moments."""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from ..errors import ArgumentError, ContractError, ParameterError
from ..lattice import Rect, block_rect, build_prefix_table, rect_sum
from ..models import FieldModel, field_window, footprint_box
from .clt import target_variance
from .engine import frozen_for, run_replicates, stream_id
from .gof import gof_stats
from .sigma import estimate_sigma2

DEFAULT_GRID_AXIS = ("1/4", "1/2", "3/4", "1")


def as_rational(x) -> Fraction:
    """Grid coordinates must be exact rationals (ints, Fractions, decimal strings or finite floats)."""
    if isinstance(x, bool):
        raise ArgumentError(f"grid coordinate {x!r} is not a number")
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    if isinstance(x, str):
        try:
            return Fraction(x)
        except (ValueError, ZeroDivisionError):
            raise ArgumentError(f"grid coordinate {x!r} is not a rational literal") from None
    if isinstance(x, numbers.Real):
        if not math.isfinite(float(x)):
            raise ArgumentError(f"grid coordinate {x!r} is not rational")
        return Fraction(repr(float(x)))
    raise ArgumentError(f"grid coordinate {x!r} is not rational")


def sheet_covariance(p: Sequence, q: Sequence, sigma2: float = 1.0) -> float:
    return sigma2 * math.prod(float(min(a, b)) for a, b in zip(p, q))


def fdd_gamma(t_edges: Sequence, s_edges: Sequence, coeffs, sigma2: float) -> float:
    """``sigma^2 sum a_{kl}^2 (t_k - t_{k-1})(s_l - s_{l-1})``."""
    a = np.asarray(coeffs, dtype=np.float64)
    dt = np.diff([float(t) for t in t_edges])
    ds = np.diff([float(s) for s in s_edges])
    return float(sigma2 * np.sum(a * a * np.outer(dt, ds)))


def _partition(edges) -> tuple[Fraction, ...]:
    e = tuple(as_rational(x) for x in edges)
    if len(e) < 2 or e[0] != 0 or e[-1] != 1 or any(b <= a for a, b in zip(e, e[1:])):
        raise ArgumentError(f"partition must increase strictly from 0 to 1, got {edges}")
    return e


@dataclass(frozen=True)
class FunctionalSpec:
    model: FieldModel
    size: tuple[int, int]
    replicates: int = 10_000
    grid: tuple = ()
    t_edges: tuple = (0, "1/2", 1)
    s_edges: tuple = (0, "1/2", 1)
    coeffs: tuple = ((1.0, 0.0), (0.0, -1.0))
    base_seed: int = 0
    past_id: int | None = None
    threads: int | None = None

    def __post_init__(self):
        if self.model.d != 2:
            raise ParameterError("functional runs are two-dimensional")
        if len(self.size) != 2 or min(self.size) < 1:
            raise ParameterError(f"size must be two positive ints, got {self.size}")
        grid = self.grid or tuple((t, s) for t in DEFAULT_GRID_AXIS for s in DEFAULT_GRID_AXIS)
        pts = tuple(tuple(as_rational(c) for c in p) for p in grid)
        for p in pts:
            if len(p) != 2 or not all(0 <= c <= 1 for c in p):
                raise ArgumentError(f"grid point {p} outside [0,1]^2")
        object.__setattr__(self, "grid", pts)
        object.__setattr__(self, "t_edges", _partition(self.t_edges))
        object.__setattr__(self, "s_edges", _partition(self.s_edges))
        a = np.asarray(self.coeffs, dtype=np.float64)
        if a.shape != (len(self.t_edges) - 1, len(self.s_edges) - 1):
            raise ArgumentError(f"coefficient matrix shape {a.shape} does not match the partitions")
        object.__setattr__(self, "coeffs", tuple(map(tuple, a.tolist())))


@dataclass
class FunctionalReport:
    grid: tuple
    sigma2: float
    cov_empirical: np.ndarray
    cov_target: np.ndarray
    gamma: float
    fdd_variance: float
    fdd_ks: float
    replicates: int

    @property
    def rel_error(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.abs(self.cov_empirical - self.cov_target) / np.abs(self.cov_target)

    @property
    def normalized_error(self) -> np.ndarray:
        d = np.sqrt(np.outer(np.diag(self.cov_target), np.diag(self.cov_target)))
        return np.abs(self.cov_empirical - self.cov_target) / d

    @property
    def fdd_rel_error(self) -> float:
        return abs(self.fdd_variance - self.gamma) / self.gamma

    def to_dict(self) -> dict:
        return {
            "grid": [[str(c) for c in p] for p in self.grid],
            "sigma2": self.sigma2,
            "replicates": self.replicates,
            "cov_empirical": self.cov_empirical.tolist(),
            "cov_target": self.cov_target.tolist(),
            "max_rel_error": float(np.nanmax(self.rel_error)),
            "max_rel_error_diagonal": float(np.max(np.diag(self.rel_error))),
            "max_normalized_error": float(np.max(self.normalized_error)),
            "gamma": self.gamma,
            "fdd_variance": self.fdd_variance,
            "fdd_rel_error": self.fdd_rel_error,
            "fdd_ks": self.fdd_ks,
        }


def run_functional_fdd(spec: FunctionalSpec) -> FunctionalReport:
    """Covariances of ``W(t,s) = S_[nt],[vs] / sqrt(nv)`` on the grid and one block combination."""
    model = spec.model
    n, v = spec.size
    window = Rect((0, 0), (n, v))
    box = footprint_box(model, window)
    channels = model.all_channels()
    scale = math.sqrt(n * v)
    corners = [Rect((0, 0), (math.floor(t * n), math.floor(s * v))) for t, s in spec.grid]
    blocks = []
    for k in range(len(spec.t_edges) - 1):
        for l in range(len(spec.s_edges) - 1):
            a = spec.coeffs[k][l]
            if a != 0:
                r = block_rect((n, v), (spec.t_edges[k], spec.s_edges[l]), (spec.t_edges[k + 1], spec.s_edges[l + 1]))
                blocks.append((a, r))

    def reducer(lat):
        table = build_prefix_table(field_window(model, lat, window), window)
        w = [np.asarray(rect_sum(table, r), dtype=np.float64) / scale for r in corners]
        z = sum(a * np.asarray(rect_sum(table, r), dtype=np.float64) for a, r in blocks) / scale
        return np.stack(w + [np.broadcast_to(z, w[0].shape if w else np.shape(z))], axis=-1)

    frozen = frozen_for(box, channels, spec.base_seed, spec.past_id)
    stream = stream_id(spec.base_seed, -1 if spec.past_id is None else spec.past_id, 0xF00)
    out = run_replicates(box, channels, spec.replicates, spec.base_seed, stream, reducer, frozen, spec.threads)
    sigma = estimate_sigma2(model, seed=spec.base_seed)
    s2 = target_variance(model, sigma, annealed=spec.past_id is None)
    w, z = out[:, :-1], out[:, -1]
    cov = np.cov(w, rowvar=False, ddof=1) if w.shape[1] > 1 else np.array([[np.var(w, ddof=1)]])
    target = np.array([[sheet_covariance(p, q, s2) for q in spec.grid] for p in spec.grid])
    gamma = fdd_gamma(spec.t_edges, spec.s_edges, spec.coeffs, s2)
    return FunctionalReport(spec.grid, s2, cov, target, gamma, float(np.var(z, ddof=1)),
                            gof_stats(z, gamma).ks, spec.replicates)


# ------------------------------------------------------------------ increment moments


def dyadic_rects(levels: int = 3) -> list[tuple]:
    """Neighbouring dyadic rectangle pairs ``(A, B)`` in unit coordinates, per refinement level."""
    out = []
    for lev in range(levels):
        h = Fraction(1, 2 ** (lev + 1))
        out.append((lev, ((0, 0), (h, 2 * h)), ((h, 0), (2 * h, 2 * h))))
        out.append((lev, ((0, 0), (2 * h, h)), ((0, h), (2 * h, 2 * h))))
    return out


@dataclass
class TightnessReport:
    rows: list[dict]
    bound: float

    @property
    def max_ratio4(self) -> float:
        return max(r["ratio4"] for r in self.rows)

    @property
    def max_ratio22(self) -> float:
        return max(r["ratio22"] for r in self.rows)

    @property
    def non_increasing(self) -> bool:
        levels = sorted({r["level"] for r in self.rows})
        worst = [max(r["ratio4"] for r in self.rows if r["level"] == lev) for lev in levels]
        return all(b <= 1.05 * a for a, b in zip(worst, worst[1:]))

    def to_dict(self) -> dict:
        return {"rows": self.rows, "bound": self.bound, "max_ratio4": self.max_ratio4,
                "max_ratio22": self.max_ratio22, "non_increasing": self.non_increasing}


def tightness_moment_probe(model: FieldModel, size: tuple[int, int], replicates: int = 10_000,
                           rects: Sequence | None = None, base_seed: int = 0, threads: int | None = None
                           ) -> TightnessReport:
    """``E D(A)^4 / mu(A)^2`` and ``E D(A)^2 D(B)^2 / (mu(A) mu(B))`` for rectangle pairs."""
    if not math.isfinite(model.bound):
        raise ContractError("tightness probe needs a bounded model")
    n, v = size
    window = Rect((0, 0), (n, v))
    box = footprint_box(model, window)
    pairs = list(rects) if rects is not None else dyadic_rects()
    lattice_pairs = []
    for lev, (alo, ahi), (blo, bhi) in pairs:
        a = block_rect((n, v), [as_rational(c) for c in alo], [as_rational(c) for c in ahi])
        b = block_rect((n, v), [as_rational(c) for c in blo], [as_rational(c) for c in bhi])
        lattice_pairs.append((lev, a, b))
    scale = math.sqrt(n * v)

    def reducer(lat):
        table = build_prefix_table(field_window(model, lat, window), window)
        cols = []
        for _, a, b in lattice_pairs:
            cols.append(np.asarray(rect_sum(table, a), dtype=np.float64) / scale)
            cols.append(np.asarray(rect_sum(table, b), dtype=np.float64) / scale)
        return np.stack(cols, axis=-1)

    stream = stream_id(base_seed, 0x716)
    out = run_replicates(box, model.all_channels(), replicates, base_seed, stream, reducer, threads=threads)
    rows = []
    for i, (lev, a, b) in enumerate(lattice_pairs):
        da, db = out[:, 2 * i], out[:, 2 * i + 1]
        mu_a, mu_b = a.volume / (n * v), b.volume / (n * v)
        r4 = float(np.mean(da**4)) / mu_a**2 if mu_a > 0 else 0.0
        r22 = float(np.mean(da**2 * db**2)) / (mu_a * mu_b) if mu_a > 0 and mu_b > 0 else 0.0
        rows.append({"level": lev, "A": [list(a.lo), list(a.hi)], "B": [list(b.lo), list(b.hi)],
                     "mu_A": mu_a, "mu_B": mu_b, "ratio4": r4, "ratio22": r22})
    return TightnessReport(rows, model.bound)
