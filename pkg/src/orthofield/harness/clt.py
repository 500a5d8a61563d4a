"""Quenched and annealed central limit experiments."""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..conditional import StructureReport, _expect, _pair_moment, _probs, functional_of, verify_ortho
from ..errors import ContractError, ParameterError, StructuralError
from ..lattice import Rect, build_prefix_table, rect_sum
from ..models import FieldModel, field_window, footprint_box
from ..ulevels import MomentFunctional, UMomentSeries
from .engine import frozen_for, run_replicates, stream_id
from .gof import GoFReport, dkw_band, gof_stats, ks_two_sample
from .sigma import Sigma2, estimate_sigma2

REGIMES = ("diagonal", "rectangular")
RECTANGULAR_LADDER = ((64, 64), (64, 256), (256, 64), (128, 512))
MIN_VERDICT_REPS = 100


@dataclass(frozen=True)
class ExperimentSpec:
    model: FieldModel
    sizes: tuple
    replicates: int = 10_000
    pasts: tuple = (0,)
    base_seed: int = 0
    regime: str = "diagonal"
    ks_threshold: float | None = None
    acknowledge_unverified: bool = False
    threads: int | None = None
    keep_samples: bool = False

    def __post_init__(self):
        sizes = tuple(tuple(int(c) for c in s) for s in self.sizes)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "pasts", tuple(int(p) for p in self.pasts))
        if self.regime not in REGIMES:
            raise ParameterError(f"regime must be one of {REGIMES}")
        if not sizes:
            raise ParameterError("at least one size is required")
        for s in sizes:
            if len(s) != self.model.d:
                raise StructuralError(f"size {s} does not match model dimension {self.model.d}")
            if min(s) < 1:
                raise ParameterError(f"sizes must be positive, got {s}")
            if self.regime == "diagonal" and len(set(s)) != 1:
                raise ParameterError(f"diagonal regime needs equal sides, got {s}")
        if len(set(sizes)) != len(sizes):
            raise ParameterError("sizes must be distinct")
        vols = [math.prod(s) for s in sizes]
        if any(b < a for a, b in zip(vols, vols[1:])):
            raise ParameterError("sizes must be ordered by increasing volume")
        if self.replicates < 1:
            raise ParameterError("replicates must be >= 1")
        if len(set(self.pasts)) != len(self.pasts):
            raise ParameterError("frozen-past ids must be distinct")


@dataclass
class CLTRow:
    past_id: int  # -1 for annealed rows
    size: tuple
    count: int
    sigma2: float
    gof: GoFReport
    mean: float
    variance: float
    variance_se: float

    @property
    def variance_ok(self) -> bool:
        return abs(self.variance - self.sigma2) <= 3 * self.variance_se

    def to_dict(self) -> dict:
        d = {"frozen_past_id": self.past_id, "size": list(self.size), "replicate_count": self.count,
             "sigma2": self.sigma2, "mean": self.mean, "variance": self.variance, "variance_se": self.variance_se}
        d.update(self.gof.to_dict())
        return d


@dataclass
class CLTResult:
    kind: str
    regime: str
    sigma: Sigma2
    target_variance: float
    rows: list[CLTRow]
    ladder_ok: dict
    precondition: dict
    runtime: float
    samples: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return (all(r.gof.passed and r.count >= MIN_VERDICT_REPS for r in self.rows)
                and all(self.ladder_ok.values()) and self.precondition.get("holds", True) is not False)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "regime": self.regime, "sigma": self.sigma.to_dict(),
                "target_variance": self.target_variance, "rows": [r.to_dict() for r in self.rows],
                "ladder_ok": {str(k): v for k, v in self.ladder_ok.items()}, "precondition": self.precondition,
                "runtime": self.runtime, "pass": self.passed}


def normalized_sums(model: FieldModel, size, reps: int, base_seed: int, stream: int, past_id: int | None,
                    threads: int | None = None) -> np.ndarray:
    """``S_n / sqrt(|n|)`` over ``[0, n)`` for replicates ``0 .. reps-1``."""
    window = Rect((0,) * model.d, tuple(size))
    box = footprint_box(model, window)
    channels = model.all_channels()
    frozen = frozen_for(box, channels, base_seed, past_id)
    scale = math.sqrt(window.volume)

    def reducer(lat):
        table = build_prefix_table(field_window(model, lat, window), window)
        return np.asarray(rect_sum(table, window), dtype=np.float64) / scale

    return run_replicates(box, channels, reps, base_seed, stream, reducer, frozen=frozen, threads=threads)


def long_run_variance(model: FieldModel) -> float:
    """``c^2 = sum_h Cov(X_0, X_h)`` over the finitely many correlated lags (exact enumeration)."""
    f0 = functional_of(model)
    if not f0.finite:
        raise ParameterError("lag-covariance summation needs finite innovation supports")
    offs = [j for _, j in model.footprint()]
    if not offs:
        return 0.0
    span = [max(j[i] for j in offs) - min(j[i] for j in offs) for i in range(model.d)]
    mean = float(_expect(f0.table(), _probs(f0, False))) ** 2
    total = 0.0
    for h in itertools.product(*(range(-s, s + 1) for s in span)):
        total += float(_pair_moment(f0, functional_of(model, h), False)) - mean
    return total


def target_variance(model: FieldModel, sigma: Sigma2, annealed: bool) -> float:
    if not annealed or model.variant in ("iid", "product-omd"):
        return sigma.value
    try:
        return long_run_variance(model)
    except ParameterError:
        return sigma.value


def moment_condition(model: FieldModel) -> dict:
    """Whether ``E X^2 ln(1 + |X|) < inf`` (the rectangular-regime hypothesis)."""
    if math.isfinite(model.bound):
        return {"holds": True, "reason": "bounded"}
    if model.variant == "product-omd" and model.inner.variant == "u-field":
        spec = model.inner.channels[model.inner.channel]
        if spec.kind == "u-level-composite":
            series = UMomentSeries(spec.n_max, MomentFunctional("phi", d=2), root=True)
            p = series.tail_exponent()
            return {"holds": bool(series.converges()), "reason": "u-level moment series",
                    "tail_exponent": p, "n_max": spec.n_max,
                    "partial_sums": {str(c): series.partial_sum(c) for c in (10**3, 10**6, 10**9) if c <= spec.n_max}}
    kinds = {s.kind for s in model.all_channels().values()}
    if kinds <= {"gaussian", "rademacher", "finite-pmf"}:
        return {"holds": True, "reason": "all moments finite"}
    return {"holds": None, "reason": "not determined"}


def _structure_check(model: FieldModel, seed: int) -> StructureReport:
    return verify_ortho(model, mc_reps=4000, seed=seed)


def _run(spec: ExperimentSpec, kind: str) -> CLTResult:
    t0 = time.perf_counter()
    model = spec.model
    precondition: dict = {}
    if kind == "quenched":
        report = _structure_check(model, spec.base_seed)
        precondition["ortho"] = report.to_dict()
        if not report.passed and not spec.acknowledge_unverified:
            raise ContractError("model failed the orthomartingale check; pass acknowledge_unverified to override")
    if spec.regime == "rectangular":
        mc = moment_condition(model)
        precondition.update(mc)
    sigma = estimate_sigma2(model, seed=spec.base_seed)
    target = target_variance(model, sigma, kind == "annealed")
    pasts = spec.pasts if kind == "quenched" else (None,)
    rows: list[CLTRow] = []
    samples: dict = {}
    for p in pasts:
        for s_i, size in enumerate(spec.sizes):
            stream = stream_id(spec.base_seed, -1 if p is None else p, s_i, 0xC17)
            x = normalized_sums(model, size, spec.replicates, spec.base_seed, stream, p, spec.threads)
            gof = gof_stats(x, target, spec.ks_threshold)
            var = float(np.var(x, ddof=1)) if x.size > 1 else 0.0
            m4 = float(np.mean((x - x.mean()) ** 4))
            var_se = math.sqrt(max(m4 - var * var, 0.0) / x.size)
            rows.append(CLTRow(-1 if p is None else p, size, int(x.size), target, gof, float(x.mean()), var, var_se))
            if spec.keep_samples:
                samples[(-1 if p is None else p, size)] = x
    ladder = {}
    for p in pasts:
        pr = [r for r in rows if r.past_id == (-1 if p is None else p)]
        ladder[-1 if p is None else p] = all(b.gof.ks <= a.gof.ks + b.gof.dkw for a, b in zip(pr, pr[1:]))
    return CLTResult(kind, spec.regime, sigma, target, rows, ladder, precondition, time.perf_counter() - t0, samples)


def run_quenched_clt(spec: ExperimentSpec) -> CLTResult:
    """Replicates share the frozen quadrant ``{k <= 0}`` of each past; everything else is redrawn."""
    return _run(spec, "quenched")


def run_annealed_clt(spec: ExperimentSpec) -> CLTResult:
    return _run(spec, "annealed")


def mixture_consistency(quenched: list[np.ndarray], annealed: np.ndarray) -> dict:
    """KS between pooled quenched samples and an annealed sample, against twice the DKW band."""
    pooled = np.concatenate([np.asarray(q) for q in quenched])
    ks = ks_two_sample(pooled, annealed)
    band = math.sqrt(dkw_band(pooled.size) ** 2 + dkw_band(np.asarray(annealed).size) ** 2)
    return {"ks": ks, "band": 2 * band, "pass": ks <= 2 * band}
