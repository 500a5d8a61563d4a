"""Config-driven experiment dispatch, result files and the run manifest.

Exit codes: 0 when every verdict passes, 2 when a statistical or structural
verdict fails, 1 when the run itself could not be carried out.
"""

from __future__ import annotations

import hashlib
import logging
import platform
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .conditional import check_con1, functional_of, verify_commuting, verify_ortho
from .config import RunConfig, config_hash
from .errors import ConfigError, OrthofieldError
from .harness.clt import ExperimentSpec, run_annealed_clt, run_quenched_clt
from .harness.coboundary import coboundary_residuals
from .harness.counterexample import analytic_exceedance, counterexample_probe
from .harness.engine import frozen_for, resolve_threads, stream_id
from .harness.functional import FunctionalSpec, run_functional_fdd, tightness_moment_probe
from .harness.gh import gh_check
from .harness.gof import dkw_band
from .innovations import sample_innovations
from .io import csv_text, json_text, write_atomic
from .lattice import Rect
from .modelfile import load_model
from .models import check_lin, check_volt, field_window, footprint_box
from .ulevels import MomentFunctional, u_moment_series

log = logging.getLogger("orthofield")

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
FDD_TOL = 0.05
DECAY_MIN = 1.3


@dataclass
class RunOutcome:
    exit_code: int
    verdict: bool | None
    summary: dict = field(default_factory=dict)
    files: list[str] = field(default_factory=list)
    manifest: str | None = None
    error: str | None = None


@dataclass
class _Result:
    passed: bool
    summary: dict
    rows: list[dict] | None = None
    detail: list[dict] | None = None
    extra: dict = field(default_factory=dict)  # relative path -> text


def _sides(size) -> tuple:
    n = size[0]
    v = size[1] if len(size) == 2 else ("x".join(map(str, size[1:])) if len(size) > 2 else 1)
    return n, v


def _clt(cfg: RunConfig, model, seed: int, threads: int) -> _Result:
    spec = ExperimentSpec(model, tuple(map(tuple, cfg.sizes)), cfg.replicates, tuple(cfg.pasts), seed, cfg.regime,
                          cfg.ks_threshold, cfg.acknowledge_unverified, threads, cfg.dump_samples)
    res = run_quenched_clt(spec) if cfg.kind == "clt-quenched" else run_annealed_clt(spec)
    summary = res.to_dict()
    summary.pop("runtime", None)
    rows = []
    for r in res.rows:
        n, v = _sides(r.size)
        rows.append({"frozen_past_id": r.past_id, "n": n, "v": v, "replicate_count": r.count, "sigma2": r.sigma2,
                     "ks": r.gof.ks, "dkw": r.gof.dkw, "verdict": r.gof.passed})
    if res.precondition.get("holds") is False:
        summary["non_tightness_evidence"] = _probe_evidence(cfg, model)
    extra = {}
    for (p, size), x in res.samples.items():
        name = f"samples/{cfg.kind}_past{p}_{'x'.join(map(str, size))}.csv"
        extra[name] = csv_text(({"value": float(a)} for a in x), header=("value",))
    return _Result(res.passed, summary, rows, extra=extra)


def _probe_evidence(cfg: RunConfig, model) -> dict:
    """Cheap analytic side of the exceedance probe for a model whose moment series diverges."""
    n_max = model.inner.channels[model.inner.channel].n_max
    ladder = (100, 1000)
    ana = {str(b): {str(n): analytic_exceedance(n, b, n_max) for n in ladder} for b in cfg.bs}
    phi = u_moment_series(n_max, MomentFunctional("phi", d=2), root=True)
    return {"exceedance_ladder": list(ladder), "analytic_exceedance": ana,
            "phi_partial_sums": {str(c): phi.partial_sum(c) for c in (10**3, 10**6, 10**9)},
            "phi_tail_exponent": phi.tail_exponent()}


def _functional(cfg: RunConfig, model, seed: int, threads: int) -> _Result:
    past = cfg.pasts[0] if cfg.pasts else None
    spec = FunctionalSpec(model, tuple(cfg.sizes[0]), cfg.replicates, tuple(map(tuple, cfg.grid or ())),
                          tuple(cfg.t_edges), tuple(cfg.s_edges), tuple(map(tuple, cfg.coeffs)), seed, past, threads)
    rep = run_functional_fdd(spec)
    d = rep.to_dict()
    cov_ok = d["max_rel_error"] <= FDD_TOL
    fdd_ok = d["fdd_rel_error"] <= FDD_TOL
    d["cov_pass"], d["fdd_pass"] = cov_ok, fdd_ok
    if cfg.tightness_replicates:
        d["tightness"] = tightness_moment_probe(model, tuple(cfg.sizes[0]), cfg.tightness_replicates,
                                                base_seed=seed, threads=threads).to_dict()
    n, v = cfg.sizes[0]
    row = {"frozen_past_id": -1 if past is None else past, "n": n, "v": v, "replicate_count": rep.replicates,
           "sigma2": rep.sigma2, "ks": rep.fdd_ks, "dkw": dkw_band(rep.replicates), "verdict": cov_ok and fdd_ok}
    detail = []
    for i, p in enumerate(rep.grid):
        for j, q in enumerate(rep.grid):
            detail.append({"t": str(p[0]), "s": str(p[1]), "t2": str(q[0]), "s2": str(q[1]),
                           "cov_empirical": float(rep.cov_empirical[i, j]), "cov_target": float(rep.cov_target[i, j]),
                           "rel_error": float(rep.rel_error[i, j])})
    return _Result(cov_ok and fdd_ok, d, [row], detail)


def _gh(cfg: RunConfig, model, seed: int, threads: int) -> _Result:
    past = cfg.pasts[0] if cfg.pasts else None
    rep = gh_check(model, [tuple(s) for s in cfg.sizes], cfg.replicates, past, tuple(Fraction(q) for q in cfg.qs),
                   seed, threads)
    rows, detail = [], []
    for i, r in enumerate(rep.rows):
        dec = i == 0 or all(r.limit[q][0] < rep.rows[i - 1].limit[q][0] for q in r.limit)
        rows.append({"frozen_past_id": -1 if past is None else past, "n": r.size[0], "v": r.size[1],
                     "replicate_count": cfg.replicates, "sigma2": rep.sigma2,
                     "verdict": dec and r.max_stat[0] <= rep.bound_sq})
        for q, (m, se) in r.limit.items():
            detail.append({"n": r.size[0], "v": r.size[1], "statistic": "limit", "q": str(q), "mean": m, "se": se})
        detail.append({"n": r.size[0], "v": r.size[1], "statistic": "max", "q": "", "mean": r.max_stat[0],
                       "se": r.max_stat[1]})
    return _Result(rep.limit_decreasing and rep.max_bounded, rep.to_dict(), rows, detail)


def _coboundary(cfg: RunConfig, model, seed: int, threads: int) -> _Result:
    past = cfg.pasts[0] if cfg.pasts else None
    rep = coboundary_residuals(model, [tuple(s) for s in cfg.sizes], cfg.replicates, seed, past, threads)
    ratios = rep.decay_ratios
    ident_ok = all(r["identity_max_error"] <= 1e-9 for r in rep.rows)
    if rep.bound_checked:
        passed = rep.bound_violations == 0 and ident_ok
    else:
        passed = all(x >= DECAY_MIN for x in ratios) and ident_ok
    rows = []
    for i, r in enumerate(rep.rows):
        ok = r.get("bound_violations", 0) == 0 if rep.bound_checked else (i == 0 or ratios[i - 1] >= DECAY_MIN)
        rows.append({"frozen_past_id": -1 if past is None else past, "n": r["n"], "v": r["v"],
                     "replicate_count": r["replicates"], "verdict": ok and r["identity_max_error"] <= 1e-9})
    d = rep.to_dict()
    d["decay_threshold"] = DECAY_MIN
    return _Result(passed, d, rows, [{k: v for k, v in r.items() if k != "residual_quantiles"} |
                                     {f"q{k}": v for k, v in r["residual_quantiles"].items()} for r in rep.rows])


def _counterexample(cfg: RunConfig, model, seed: int, threads: int) -> _Result:
    control = load_model(cfg.control)[0] if cfg.control else None
    rep = counterexample_probe(model, tuple(cfg.ladder), tuple(cfg.pasts), tuple(cfg.bs), list(cfg.probe_replicates),
                               control, list(cfg.control_replicates), seed)
    d = rep.to_dict()
    g = u_moment_series(10**8, MomentFunctional("g", eps=0.5))
    xlog = u_moment_series(10**8, MomentFunctional("g", eps=0.0))
    d["series"] = {"g_eps_0.5": {"S(1e6)": g.partial_sum(10**6), "S(1e8)": g.partial_sum(10**8),
                                 "tail_exponent": g.tail_exponent(), "converges": g.converges()},
                   "x_log": {"S(1e3)": xlog.partial_sum(10**3), "S(1e6)": xlog.partial_sum(10**6),
                             "tail_exponent": xlog.tail_exponent(), "converges": xlog.converges()}}
    ratios_ok = all(r > 1.5 for r in d["count_ratios"].values())
    control_ok = control is None or rep.control_exceedances == 0
    passed = ratios_ok and rep.non_decreasing() and control_ok
    d["ratio_threshold"] = 1.5
    rows = [{"frozen_past_id": r.past_id, "n": r.n, "v": r.n, "replicate_count": r.replicates,
             "verdict": passed} for r in rep.rows if r.b == cfg.bs[0]]
    return _Result(passed, d, rows, [r.to_dict() for r in rep.rows])


def _verify(cfg: RunConfig, model, seed: int, threads: int) -> _Result:
    ortho = verify_ortho(model, mc_reps=4000, seed=seed)
    d = {"ortho": ortho.to_dict()}
    passed = ortho.passed
    f = functional_of(model)
    if f.finite:
        u = (0,) * (model.d - 1) + (-1,)
        a = (-1,) + (0,) * (model.d - 1)
        com = verify_commuting(f, u, a)
        d["commuting"] = com.to_dict()
        passed = passed and com.passed
    else:
        d["commuting"] = {"check": "commuting", "skipped": "innovation supports are not finite"}
    return _Result(passed, d)


def _conditions(cfg: RunConfig, model, seed: int, threads: int) -> _Result:
    if model.variant == "linear":
        scan, name = check_lin(model.kernel, cfg.n_max), "lin"
    elif model.variant == "volterra":
        scan, name = check_volt(model.volterra, cfg.n_max), "volt"
    else:
        rep = check_con1(model, cfg.n_max, seed=seed)
        return _Result(rep.stable_from is not None, {"condition": "con1", **rep.to_dict()})
    d = {"condition": name, "sup": scan.sup, "argmax": list(scan.argmax), "stable_value": scan.stable_value,
         "stable_from": list(scan.stable_from) if scan.stable_from else None,
         "grid": [{"n": list(k), "value": v} for k, v in sorted(scan.values.items())]}
    return _Result(scan.stable_from is not None, d)


DISPATCH = {
    "clt-annealed": _clt, "clt-quenched": _clt, "functional": _functional, "gh-check": _gh,
    "coboundary": _coboundary, "counterexample": _counterexample, "verify-structure": _verify,
    "check-conditions": _conditions,
}


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(cfg: RunConfig) -> RunOutcome:
    """Run one configured experiment and write its outputs plus ``manifest.json`` under ``cfg.out``."""
    t0 = time.perf_counter()
    out = Path(cfg.out)
    chash = config_hash(cfg)
    try:
        model, model_seed = load_model(cfg.model)
        seed = cfg.seed if cfg.seed is not None else (model_seed or 0)
        threads = resolve_threads(cfg.threads)
        log.info("%s: model=%s seed=%d threads=%d", cfg.kind, Path(cfg.model).name, seed, threads)
        res = DISPATCH[cfg.kind](cfg, model, seed, threads)
    except (OrthofieldError, OSError, ValueError) as e:
        log.error("%s: %s", cfg.kind, e)
        return RunOutcome(EXIT_ERROR, None, error=f"{type(e).__name__}: {e}")
    summary = {"kind": cfg.kind, "config_hash": chash, "seed": seed, "verdict": "pass" if res.passed else "fail",
               "result": res.summary}
    written = []
    stem = cfg.kind
    if cfg.format == "csv" and res.rows is not None:
        written.append(write_atomic(out / f"{stem}.csv", csv_text(res.rows)))
        if res.detail:
            header = tuple(dict.fromkeys(k for r in res.detail for k in r))
            written.append(write_atomic(out / f"{stem}_detail.csv", csv_text(res.detail, header)))
    if cfg.format == "json":
        summary["rows"] = res.rows
        summary["detail"] = res.detail
    written.append(write_atomic(out / f"{stem}.json", json_text(summary)))
    for name, text in res.extra.items():
        written.append(write_atomic(out / name, text))
    code = EXIT_PASS if res.passed else EXIT_FAIL
    manifest = {
        "config_hash": chash,
        "version": __version__,
        "platform": f"{platform.platform()} python-{platform.python_version()} numpy-{np.__version__}",
        "files": [{"path": str(p.relative_to(out)), "sha256": _digest(p)} for p in written],
        "exit_code": code,
        "wall_clock_seconds": time.perf_counter() - t0,
    }
    mpath = write_atomic(out / "manifest.json", json_text(manifest))
    log.info("%s: %s (%.1f s)", cfg.kind, summary["verdict"], manifest["wall_clock_seconds"])
    return RunOutcome(code, res.passed, summary, [str(p) for p in written], str(mpath))


def simulate(cfg: RunConfig) -> RunOutcome:
    """One field realization (replicate 0, first past) on the first size window, as plot-ready CSV."""
    t0 = time.perf_counter()
    try:
        model, model_seed = load_model(cfg.model)
        seed = cfg.seed if cfg.seed is not None else (model_seed or 0)
        if not cfg.sizes:
            raise ConfigError("simulate needs 'sizes'")
        size = tuple(cfg.sizes[0])
        if len(size) != model.d:
            raise ConfigError(f"size {size} does not match model dimension {model.d}")
        window = Rect((0,) * model.d, size)
        box = footprint_box(model, window)
        past = cfg.pasts[0] if cfg.pasts and cfg.kind == "clt-quenched" else None
        frozen = frozen_for(box, model.all_channels(), seed, past)
        lat = sample_innovations(box, model.all_channels(), seed, 0, frozen, stream=stream_id(seed, 0x51))
        x = field_window(model, lat, window)
    except (OrthofieldError, OSError, ValueError) as e:
        return RunOutcome(EXIT_ERROR, None, error=f"{type(e).__name__}: {e}")
    idx = np.indices(size).reshape(model.d, -1).T
    axes = ("i", "j", "k")[: model.d]
    rows = ({**dict(zip(axes, map(int, p))), "value": float(v)} for p, v in zip(idx, x.reshape(-1)))
    path = write_atomic(Path(cfg.out) / "field.csv", csv_text(rows, axes + ("value",)))
    manifest = {"config_hash": config_hash(cfg), "version": __version__, "platform": platform.platform(),
                "files": [{"path": path.name, "sha256": _digest(path)}], "exit_code": EXIT_PASS,
                "wall_clock_seconds": time.perf_counter() - t0}
    mpath = write_atomic(Path(cfg.out) / "manifest.json", json_text(manifest))
    return RunOutcome(EXIT_PASS, None, {"kind": "simulate", "size": list(size), "seed": seed,
                                        "mean": float(np.mean(x)), "frozen_past_id": past}, [str(path)], str(mpath))
