"""Conditional expectations with respect to quadrant sigma-fields.

``F_u = sigma(xi_w : w <= u)`` over every innovation channel. A functional of
finitely many innovation coordinates is tabulated over the product of the
coordinate supports; conditioning on ``F_u`` averages the axes of coordinates
not below ``u``. With ``exact=True`` tables hold ``Fraction`` objects so
structural identities come out as literal zeros.

Anchors may contain ``math.inf``: that axis is unconstrained (half-space
sigma-fields such as ``F_{0,inf}``).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ArgumentError, CapacityError, ParameterError
from .innovations import InnovationSpec
from .lattice import IndexVec, as_index, leq
from .models import FieldModel, _scan_values
from .rng import mc_generator

DEFAULT_CUTOFF = 1 << 20
AUTO_EXACT_MAX = 1 << 12

Coord = tuple[str, IndexVec]
Anchor = tuple  # ints or math.inf


def as_anchor(u: Sequence) -> Anchor:
    out = []
    for c in u:
        if c is None or (isinstance(c, float) and math.isinf(c) and c > 0):
            out.append(math.inf)
        else:
            out.append(int(c))
    return tuple(out)


def meet_anchor(u: Sequence, a: Sequence) -> Anchor:
    return tuple(min(x, y) for x, y in zip(as_anchor(u), as_anchor(a)))


def measurable(coord: Coord, u: Anchor) -> bool:
    return leq(coord[1], u)


def lower(u: Anchor, axis: int) -> Anchor:
    return tuple(c - 1 if i == axis else c for i, c in enumerate(u))


@dataclass
class FootprintFunctional:
    """A real functional of the innovations at ``coords``.

    ``fn(get, exact)`` computes the value from ``get(coord)``, which returns
    broadcastable arrays (one axis per coordinate when tabulating).
    """

    coords: tuple[Coord, ...]
    specs: Mapping[str, InnovationSpec]
    fn: Callable
    _tables: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.coords = tuple(sorted(set((ch, as_index(p)) for ch, p in self.coords)))
        for ch, _ in self.coords:
            if ch not in self.specs:
                raise ArgumentError(f"no innovation law for channel {ch!r}")

    @property
    def finite(self) -> bool:
        return all(self.specs[ch].finite for ch, _ in self.coords)

    def support(self, coord: Coord, exact: bool = False):
        return self.specs[coord[0]].support(exact)

    @property
    def size(self) -> int:
        return math.prod(len(self.support(c)[0]) for c in self.coords)

    def resolve_exact(self, exact: bool | None) -> bool:
        if exact is not None:
            return exact
        if not self.finite or self.size > AUTO_EXACT_MAX:
            return False
        try:
            self.table(True)
        except ParameterError:
            return False
        return True

    def table(self, exact: bool = False, cutoff: int = DEFAULT_CUTOFF) -> np.ndarray:
        """Values on the full product of supports (axis i <-> coords[i])."""
        if exact in self._tables:
            return self._tables[exact]
        if not self.finite:
            raise ParameterError("enumeration needs finite innovation supports")
        if self.size > cutoff:
            raise CapacityError(f"{self.size} assignments exceed the enumeration cutoff {cutoff}")
        m = len(self.coords)
        axes = {c: _axis_view(self.support(c, exact)[0], i, m) for i, c in enumerate(self.coords)}
        out = self.fn(lambda c: axes[_key(c)], exact)
        out = np.broadcast_to(np.asarray(out, dtype=object if exact else np.float64),
                              tuple(len(self.support(c)[0]) for c in self.coords)).copy()
        self._tables[exact] = out
        return out

    def __call__(self, assignment: Mapping[Coord, float], exact: bool = False):
        missing = [c for c in self.coords if c not in assignment and _key(c) not in assignment]
        if missing:
            raise ArgumentError(f"assignment misses coordinates {missing}")
        return self.fn(lambda c: assignment[_key(c)], exact)


def _key(c) -> Coord:
    return (c[0], tuple(c[1]))


def _axis_view(vals: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = len(vals)
    return vals.reshape(shape)


def functional_of(model: FieldModel, site: Sequence[int] | None = None) -> FootprintFunctional:
    """``X_site`` of ``model`` as a footprint functional."""
    site = as_index(site) if site is not None else (0,) * model.d
    coords = [(ch, tuple(s - c for s, c in zip(site, j))) for ch, j in model.footprint()]

    def fn(get, exact):
        return model.combine(lambda ch, j: get((ch, tuple(s - c for s, c in zip(site, j)))), exact)

    return FootprintFunctional(tuple(coords), model.all_channels(), fn)


def sum_functional(model: FieldModel, sites: Sequence[Sequence[int]]) -> FootprintFunctional:
    """``sum_k X_k`` over ``sites``."""
    parts = [functional_of(model, k) for k in sites]
    coords = tuple({c for p in parts for c in p.coords})

    def fn(get, exact):
        total = 0
        for p in parts:
            total = total + p.fn(get, exact)
        return total

    return FootprintFunctional(coords, model.all_channels(), fn)


def from_table(coords: Sequence[Coord], specs: Mapping[str, InnovationSpec], table: np.ndarray) -> FootprintFunctional:
    """Functional given by an explicit value table over the coordinate supports."""
    coords = tuple(sorted(_key(c) for c in coords))
    exact = table.dtype == object

    def fn(get, want_exact):
        idx = []
        for c in coords:
            vals = specs[c[0]].support()[0]
            v = np.asarray(get(c))
            fv = v.astype(np.float64) if v.dtype == object else v
            idx.append(np.searchsorted(vals, fv))
        out = table[tuple(np.broadcast_arrays(*idx))] if idx else table[()]
        if want_exact and not exact:
            raise ParameterError("float table can not be evaluated exactly")
        if exact and not want_exact:
            return np.asarray(out, dtype=np.float64) if np.ndim(out) else float(out)
        return out

    f = FootprintFunctional(coords, specs, fn)
    f._tables[exact] = table
    if exact:
        f._tables[False] = table.astype(np.float64)
    return f


# ------------------------------------------------------------------ table algebra


def _probs(f: FootprintFunctional, exact: bool) -> list[np.ndarray]:
    return [f.support(c, exact)[1] for c in f.coords]


def _cond_table(f: FootprintFunctional, table: np.ndarray, u: Anchor, exact: bool) -> np.ndarray:
    """E(f | F_u) as a full table (constant along averaged axes)."""
    out = table
    for i, (c, p) in enumerate(zip(f.coords, _probs(f, exact))):
        if not measurable(c, u):
            mean = np.tensordot(out, p, axes=([i], [0]))
            out = np.broadcast_to(np.expand_dims(mean, i), table.shape)
    return np.array(out, dtype=table.dtype)


def _expect(table: np.ndarray, probs: list[np.ndarray]):
    out = table
    for p in probs:
        out = np.tensordot(out, p, axes=([0], [0]))
    return out[()] if isinstance(out, np.ndarray) else out


def cond_exp(f: FootprintFunctional, u: Sequence, fixed: Mapping[Coord, float] | None = None,
             cutoff: int = DEFAULT_CUTOFF, exact: bool = False):
    """Exact ``E(f | F_u)`` at the measurable assignment ``fixed``."""
    u = as_anchor(u)
    fixed = {_key(c): v for c, v in (fixed or {}).items()}
    meas = [c for c in f.coords if measurable(c, u)]
    missing = [c for c in meas if c not in fixed]
    if missing:
        raise ArgumentError(f"fixed assignment misses measurable coordinates {missing}")
    free = [c for c in f.coords if not measurable(c, u)]
    for c in free:
        if not f.specs[c[0]].finite:
            raise ParameterError(f"channel {c[0]!r} has no finite support; use cond_exp_mc")
    branches = math.prod(len(f.support(c)[0]) for c in free)
    if branches > cutoff:
        raise CapacityError(f"{branches} free branches exceed the enumeration cutoff {cutoff}")
    m = len(free)
    axes = {c: _axis_view(f.support(c, exact)[0], i, m) for i, c in enumerate(free)}
    conv = Fraction if exact else float
    vals = {c: conv(fixed[c]) for c in meas}

    def get(c):
        c = _key(c)
        return axes[c] if c in axes else vals[c]

    out = f.fn(get, exact)
    shape = tuple(len(f.support(c)[0]) for c in free)
    out = np.broadcast_to(np.asarray(out, dtype=object if exact else np.float64), shape)
    return _expect(out, [f.support(c, exact)[1] for c in free])


def cond_exp_mc(f: FootprintFunctional, u: Sequence, fixed: Mapping[Coord, float] | None, reps: int,
                seed: int) -> tuple[float, float]:
    """Monte Carlo ``E(f | F_u)``: (sample mean, standard error) over resampled free coordinates."""
    if reps < 2:
        raise ParameterError("reps must be >= 2")
    u = as_anchor(u)
    fixed = {_key(c): float(v) for c, v in (fixed or {}).items()}
    meas = [c for c in f.coords if measurable(c, u)]
    missing = [c for c in meas if c not in fixed]
    if missing:
        raise ArgumentError(f"fixed assignment misses measurable coordinates {missing}")
    free = [c for c in f.coords if not measurable(c, u)]
    rng = mc_generator(seed, 0)
    draws = {c: f.specs[c[0]].from_bits(rng.integers(0, 2**64, size=reps, dtype=np.uint64)) for c in free}

    def get(c):
        c = _key(c)
        return draws[c] if c in draws else fixed[c]

    vals = np.broadcast_to(np.asarray(f.fn(get, False), dtype=np.float64), (reps,))
    mean = float(np.mean(vals))
    if np.all(vals == vals[0]):
        return float(vals[0]), 0.0
    return mean, float(np.std(vals, ddof=1) / math.sqrt(reps))


def cond_functional(f: FootprintFunctional, u: Sequence, exact: bool | None = None,
                    cutoff: int = DEFAULT_CUTOFF) -> FootprintFunctional:
    """``E(f | F_u)`` as a functional on the measurable coordinates."""
    exact = f.resolve_exact(exact)
    u = as_anchor(u)
    t = _cond_table(f, f.table(exact, cutoff), u, exact)
    keep = [i for i, c in enumerate(f.coords) if measurable(c, u)]
    sel = tuple(slice(None) if i in keep else 0 for i in range(len(f.coords)))
    return from_table([f.coords[i] for i in keep], f.specs, np.array(t[sel], dtype=t.dtype))


def projection(f: FootprintFunctional, u: Sequence[int], order: Sequence[int] | None = None,
               exact: bool | None = None, cutoff: int = DEFAULT_CUTOFF) -> FootprintFunctional:
    """``P_u f``: composition over axes of ``Y -> E(Y|F_u) - E(Y|F_{u - e_j})``."""
    exact = f.resolve_exact(exact)
    u = as_anchor(u)
    d = len(u)
    order = tuple(range(d)) if order is None else tuple(order)
    if sorted(order) != list(range(d)):
        raise ArgumentError(f"order {order} is not a permutation of the axes")
    t = f.table(exact, cutoff)
    for j in order:
        t = _cond_table(f, t, u, exact) - _cond_table(f, t, lower(u, j), exact)
    return from_table(f.coords, f.specs, t)


def projection_corners(f: FootprintFunctional, u: Sequence[int], exact: bool | None = None) -> FootprintFunctional:
    """``P_u f`` by the ``2^d``-term signed sum over lowered anchors."""
    exact = f.resolve_exact(exact)
    u = as_anchor(u)
    t = f.table(exact)
    total = None
    for corner in itertools.product((0, 1), repeat=len(u)):
        a = tuple(c - s for c, s in zip(u, corner))
        term = _cond_table(f, t, a, exact)
        term = -term if sum(corner) % 2 else term
        total = term if total is None else total + term
    return from_table(f.coords, f.specs, total)


def truncation_split(f: FootprintFunctional, level: float, u: Sequence[int] | None = None,
                     exact: bool | None = None) -> tuple[FootprintFunctional, FootprintFunctional]:
    """``(P_u(f 1{|f| <= A}), P_u(f 1{|f| > A}))``."""
    if level <= 0:
        raise ParameterError("truncation level must be > 0")
    exact = f.resolve_exact(exact)
    u = as_anchor(u) if u is not None else (0,) * len(f.coords[0][1])
    t = f.table(exact)
    small = np.abs(t.astype(np.float64)) <= level
    zero = Fraction(0) if exact else 0.0
    lo = from_table(f.coords, f.specs, np.where(small, t, zero).astype(t.dtype))
    hi = from_table(f.coords, f.specs, np.where(small, zero, t).astype(t.dtype))
    return projection(lo, u, exact=exact), projection(hi, u, exact=exact)


# ------------------------------------------------------------------ structure reports


@dataclass
class Violation:
    site: IndexVec
    anchor: Anchor
    deviation: float
    witness: dict


@dataclass
class StructureReport:
    check: str
    parameters: dict
    max_deviation: float
    exact: bool
    literal_zero: bool
    violations: list[Violation]
    passed: bool

    def to_dict(self) -> dict:
        return {
            "check": self.check,
            "parameters": self.parameters,
            "max_deviation": self.max_deviation,
            "exact": self.exact,
            "literal_zero": self.literal_zero,
            "witness": _witness_dict(self.violations[0]) if self.violations else None,
            "violations": len(self.violations),
            "pass": self.passed,
        }


def _witness_dict(v: Violation) -> dict:
    return {
        "site": list(v.site),
        "anchor": [c if not isinstance(c, float) else "inf" for c in v.anchor],
        "deviation": v.deviation,
        "assignment": {f"{ch}@{','.join(map(str, p))}": float(x) for (ch, p), x in v.witness.items()},
    }


def default_ortho_anchors(d: int, reach: int = 2) -> list[Anchor]:
    """Offsets ``o`` with some coordinate < 0 (relative to the site), plus half-spaces."""
    out = [o for o in itertools.product(range(-reach, 2), repeat=d) if min(o) < 0]
    for axis in range(d):
        out.append(tuple(-1 if i == axis else math.inf for i in range(d)))
    return out


def _worst(f: FootprintFunctional, table: np.ndarray, exact: bool):
    flat = np.abs(table.astype(np.float64))
    i = int(np.argmax(flat)) if flat.size else 0
    dev = table.reshape(-1)[i] if table.size else 0
    idx = np.unravel_index(i, table.shape) if table.ndim else ()
    witness = {c: f.support(c)[0][k] for c, k in zip(f.coords, idx)}
    return dev, witness


def verify_ortho(model: FieldModel, offsets: Sequence[Sequence] | None = None, tol: float = 1e-12,
                 sites: Sequence[Sequence[int]] | None = None, exact: bool | None = None,
                 cutoff: int = DEFAULT_CUTOFF, mc_reps: int = 0, seed: int = 0) -> StructureReport:
    """Check ``E(X_i | F_{i+o}) = 0`` for anchors lagging ``i`` in some coordinate.

    Falls back to Monte Carlo (4-SE rule) when ``mc_reps > 0`` and the
    footprint is too large or not finite.
    """
    d = model.d
    offsets = [as_anchor(o) for o in (offsets if offsets is not None else default_ortho_anchors(d))]
    sites = [as_index(s) for s in (sites if sites is not None else [(0,) * d])]
    violations = []
    worst = 0.0
    all_zero = True
    used_exact = None
    for site in sites:
        f = functional_of(model, site)
        try:
            ex = f.resolve_exact(exact)
            t = f.table(ex, cutoff)
        except (CapacityError, ParameterError):
            if mc_reps <= 0:
                raise
            return _verify_ortho_mc(model, offsets, sites, mc_reps, seed)
        used_exact = ex if used_exact is None else used_exact and ex
        for o in offsets:
            if not min(o) < 0:
                continue
            a = tuple(s + c for s, c in zip(site, o))
            ct = _cond_table(f, t, a, ex)
            dev, witness = _worst(f, ct, ex)
            mag = abs(float(dev))
            all_zero = all_zero and bool(np.all(ct == 0))
            worst = max(worst, mag)
            if mag > tol:
                meas = {c: v for c, v in witness.items() if measurable(c, a)}
                violations.append(Violation(site, a, float(dev), meas))
    return StructureReport("ortho", {"offsets": [list(map(_jsonable, o)) for o in offsets],
                                     "sites": [list(s) for s in sites], "tol": tol},
                           worst, bool(used_exact), all_zero and bool(used_exact), violations, not violations)


def _jsonable(c):
    return "inf" if isinstance(c, float) and math.isinf(c) else c


def _verify_ortho_mc(model, offsets, sites, reps, seed) -> StructureReport:
    # one random measurable assignment per anchor; the 4-SE rule flags violations
    violations = []
    worst = 0.0
    for s_i, site in enumerate(sites):
        f = functional_of(model, site)
        for o_i, o in enumerate(offsets):
            if not min(o) < 0:
                continue
            a = tuple(s + c for s, c in zip(site, o))
            rng = mc_generator(seed, 1, s_i, o_i)
            fixed = {c: float(f.specs[c[0]].from_bits(rng.integers(0, 2**64, dtype=np.uint64)))
                     for c in f.coords if measurable(c, a)}
            est, se = cond_exp_mc(f, a, fixed, reps, seed + 7919 * (o_i + 1) + s_i)
            worst = max(worst, abs(est))
            if abs(est) > 4 * se and se > 0 or (se == 0 and est != 0):
                violations.append(Violation(site, a, est, fixed))
    return StructureReport("ortho-mc", {"reps": reps, "sites": [list(s) for s in sites]}, worst, False, False,
                           violations, not violations)


def verify_commuting(f: FootprintFunctional, u: Sequence, a: Sequence, tol: float = 1e-12,
                     exact: bool | None = None, cutoff: int = DEFAULT_CUTOFF) -> StructureReport:
    """Pointwise ``E_u E_a f`` against ``E_{u meet a} f``."""
    ex = f.resolve_exact(exact)
    u, a = as_anchor(u), as_anchor(a)
    t = f.table(ex, cutoff)
    lhs = _cond_table(f, _cond_table(f, t, a, ex), u, ex)
    rhs = _cond_table(f, t, meet_anchor(u, a), ex)
    diff = lhs - rhs
    dev, witness = _worst(f, diff, ex)
    mag = abs(float(dev))
    viol = [] if mag <= tol else [Violation((), meet_anchor(u, a), float(dev), witness)]
    return StructureReport("commuting", {"u": list(map(_jsonable, u)), "a": list(map(_jsonable, a)), "tol": tol},
                           mag, ex, bool(ex and np.all(diff == 0)), viol, mag <= tol)


def verify_tower(f: FootprintFunctional, u: Sequence, a: Sequence, exact: bool | None = None) -> float:
    """Max ``|E_u f - E_u E_a f|`` for ``u <= a`` (zero under exact arithmetic)."""
    if not leq(as_anchor(u), as_anchor(a)):
        raise ArgumentError("tower check needs u <= a")
    return verify_commuting(f, u, a, exact=exact).max_deviation


# ------------------------------------------------------------------ (con1) scan


@dataclass
class Con1Report:
    values: dict
    ses: dict
    sup: float
    stable_from: tuple | None
    method: str
    moment: str

    def to_dict(self) -> dict:
        return {
            "moment": self.moment,
            "method": self.method,
            "sup": self.sup,
            "stable_from": list(self.stable_from) if self.stable_from else None,
            "grid": [{"n": list(k), "value": v, "se": self.ses.get(k, 0.0)} for k, v in sorted(self.values.items())],
        }


def _site_conditionals(model: FieldModel, n_max: int, exact: bool, cutoff: int):
    zero = (0,) * model.d
    out = {}
    for k in itertools.product(range(n_max), repeat=model.d):
        f = functional_of(model, k)
        out[k] = cond_functional(f, zero, exact=exact, cutoff=cutoff)
    return out


def _pair_moment(g: FootprintFunctional, h: FootprintFunctional, exact: bool):
    """E(g h) for conditional functionals on (possibly overlapping) coordinates."""
    shared = set(g.coords) & set(h.coords)
    if not shared:
        return _expect(g.table(exact), _probs(g, exact)) * _expect(h.table(exact), _probs(h, exact))
    coords = tuple(sorted(set(g.coords) | set(h.coords)))
    prod = FootprintFunctional(coords, g.specs, lambda get, ex: g.fn(get, ex) * h.fn(get, ex))
    return _expect(prod.table(exact), _probs(prod, exact))


def check_con1(model: FieldModel, n_max: int, moment=None, exact: bool | None = None,
               cutoff: int = DEFAULT_CUTOFF, mc_reps: int = 20000, seed: int = 0) -> Con1Report:
    """Grid of ``E f(E_{0}(S_n))`` for ``1 <= n <= N`` (coordinatewise) and its running sup.

    The plain second moment is exact through pairwise expectations; other
    moment functions enumerate the joint law when feasible, else use Monte
    Carlo over the quadrant innovations.
    """
    if n_max < 1:
        raise ParameterError("N must be >= 1")
    probe = functional_of(model)
    ex = probe.resolve_exact(exact)
    g = _site_conditionals(model, n_max, ex, cutoff)
    sites = sorted(g)
    kind = "plain" if moment is None else moment.kind
    values: dict = {}
    ses: dict = {}
    if kind == "plain":
        pair: dict = {}
        for a in sites:
            for b in sites:
                if b < a:
                    continue
                pair[(a, b)] = pair[(b, a)] = _pair_moment(g[a], g[b], ex)
        for n in itertools.product(range(1, n_max + 1), repeat=model.d):
            box = [k for k in sites if all(c < m for c, m in zip(k, n))]
            values[n] = sum((pair[(a, b)] for a in box for b in box), Fraction(0) if ex else 0.0)
        method = "exact" if ex else "enumeration"
    else:
        coords = tuple(sorted({c for k in sites for c in g[k].coords}))
        joint = FootprintFunctional(coords, probe.specs, lambda get, e: 0)
        if joint.finite and joint.size <= cutoff:
            method = "enumeration"
            tables = {}
            for k in sites:
                tables[k] = FootprintFunctional(coords, probe.specs, g[k].fn).table(False, cutoff)
            probs = _probs(joint, False)
            for n in itertools.product(range(1, n_max + 1), repeat=model.d):
                s = sum(tables[k] for k in sites if all(c < m for c, m in zip(k, n)))
                values[n] = float(_expect(moment(np.asarray(s, dtype=np.float64)), probs))
        else:
            method = "mc"
            rng = mc_generator(seed, 2)
            draws = {c: probe.specs[c[0]].from_bits(rng.integers(0, 2**64, size=mc_reps, dtype=np.uint64))
                     for c in coords}
            site_vals = {k: np.broadcast_to(np.asarray(g[k].fn(lambda c: draws[_key(c)], False), dtype=np.float64),
                                            (mc_reps,)) for k in sites}
            for n in itertools.product(range(1, n_max + 1), repeat=model.d):
                s = sum(site_vals[k] for k in sites if all(c < m for c, m in zip(k, n)))
                mv = moment(s)
                values[n] = float(np.mean(mv))
                ses[n] = float(np.std(mv, ddof=1) / math.sqrt(mc_reps))
    sup, stable = _scan_values(values, model.d, n_max)
    return Con1Report({k: float(v) for k, v in values.items()}, ses, float(sup), stable, method, kind)
