"""Field models: finite-footprint functionals of i.i.d. innovation channels.

A model reads innovations ``xi^{ch}_{k-j}`` for footprint entries ``(ch, j)``
and combines them into ``X_k``. ``combine(get, exact)`` receives an accessor
``get(ch, j)`` returning the innovation array at offset ``j`` (any shape, any
batch layout) so the same code evaluates lattices, enumeration tables and
exact rational assignments.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import LatticeRangeError, ParameterError, StructuralError
from .innovations import InnovationLattice, InnovationSpec
from .lattice import MAX_DIM, IndexVec, Rect, as_index

VARIANTS = ("iid", "linear", "volterra", "product-omd", "u-field", "coboundary")

Getter = Callable[[str, IndexVec], np.ndarray]


def _vec_add(a: Sequence[int], b: Sequence[int]) -> IndexVec:
    return tuple(x + y for x, y in zip(a, b))


def _vec_sub(a: Sequence[int], b: Sequence[int]) -> IndexVec:
    return tuple(x - y for x, y in zip(a, b))


def _exact(x) -> Fraction:
    return Fraction(x)


@dataclass(frozen=True)
class Kernel:
    """Finite linear kernel ``a_j``, offsets ``j >= 0`` coordinatewise."""

    coeffs: tuple[tuple[IndexVec, float], ...]
    d: int

    def __post_init__(self):
        merged: dict[IndexVec, float] = {}
        for off, val in self.coeffs:
            off = as_index(off)
            if len(off) != self.d:
                raise StructuralError(f"kernel offset {off} is not {self.d}-dimensional")
            if any(c < 0 for c in off):
                raise StructuralError(f"kernel offset {off} must be >= 0 coordinatewise")
            merged[off] = merged.get(off, 0.0) + float(val)
        object.__setattr__(self, "coeffs", tuple(sorted(merged.items())))

    @classmethod
    def from_map(cls, coeffs: Mapping[Sequence[int], float], d: int | None = None) -> "Kernel":
        items = [(as_index(k), v) for k, v in coeffs.items()]
        if d is None:
            if not items:
                raise StructuralError("dimension needed for an empty kernel")
            d = len(items[0][0])
        return cls(tuple(items), d)

    def as_dict(self) -> dict[IndexVec, float]:
        return dict(self.coeffs)

    @property
    def total(self) -> float:
        return math.fsum(v for _, v in self.coeffs)


@dataclass(frozen=True)
class VolterraCoeffs:
    """Quadratic coefficients ``a_{u,v}`` with a vanishing diagonal."""

    coeffs: tuple[tuple[tuple[IndexVec, IndexVec], float], ...]
    d: int

    def __post_init__(self):
        merged: dict[tuple[IndexVec, IndexVec], float] = {}
        for (u, v), val in self.coeffs:
            u, v = as_index(u), as_index(v)
            if len(u) != self.d or len(v) != self.d:
                raise StructuralError(f"volterra pair {(u, v)} is not {self.d}-dimensional")
            if any(c < 0 for c in u + v):
                raise StructuralError(f"volterra offsets {(u, v)} must be >= 0")
            if u == v:
                raise StructuralError(f"diagonal coefficient a_{{u,u}} at u={u} must vanish")
            merged[(u, v)] = merged.get((u, v), 0.0) + float(val)
        object.__setattr__(self, "coeffs", tuple(sorted(merged.items())))

    @classmethod
    def from_map(cls, coeffs: Mapping, d: int | None = None) -> "VolterraCoeffs":
        items = [((as_index(u), as_index(v)), val) for (u, v), val in coeffs.items()]
        if d is None:
            if not items:
                raise StructuralError("dimension needed for empty volterra coefficients")
            d = len(items[0][0][0])
        return cls(tuple(items), d)

    def as_dict(self) -> dict:
        return dict(self.coeffs)


@dataclass(frozen=True)
class CoboundarySpec:
    """``X = m + (1-T)m1 + (1-S)m2 + (1-T)(1-S)y``; ``T``/``S`` shift index 1/2 by +1."""

    m: "FieldModel | None"
    m1: "FieldModel | None"
    m2: "FieldModel | None"
    y: "FieldModel | None"

    def parts(self):
        return (("m", self.m), ("m1", self.m1), ("m2", self.m2), ("y", self.y))


@dataclass(frozen=True)
class FieldModel:
    variant: str
    d: int
    channels: Mapping[str, InnovationSpec] = field(default_factory=dict)
    kernel: Kernel | None = None
    volterra: VolterraCoeffs | None = None
    inner: "FieldModel | None" = None
    cobo: CoboundarySpec | None = None
    channel: str = "xi"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown model variant {self.variant!r}")
        if not 1 <= self.d <= MAX_DIM:
            raise StructuralError(f"dimension {self.d} outside 1..{MAX_DIM}")
        object.__setattr__(self, "channels", dict(self.channels))
        if self.variant == "linear" and (self.kernel is None or self.kernel.d != self.d):
            raise StructuralError("linear model needs a kernel of matching dimension")
        if self.variant == "volterra" and (self.volterra is None or self.volterra.d != self.d):
            raise StructuralError("volterra model needs coefficients of matching dimension")
        if self.variant == "product-omd":
            if self.inner is None or self.inner.d != self.d:
                raise StructuralError("product-omd needs an inner U model of matching dimension")
            if self.channel in self.inner.channels:
                raise StructuralError("product-omd sign channel must differ from the U channels")
        if self.variant == "coboundary":
            if self.d != 2:
                raise StructuralError("coboundary models are two-dimensional")
            if self.cobo is None:
                raise StructuralError("coboundary model needs its four components")
            for name, part in self.cobo.parts():
                if part is not None and part.d != 2:
                    raise StructuralError(f"coboundary component {name} must be 2-dimensional")
        if self.variant != "coboundary":
            declared = self.all_channels()
            for ch, _ in self.footprint():
                if ch not in declared:
                    raise StructuralError(f"footprint reads undeclared channel {ch!r}")

    # -------------------------------------------------------------- structure
    def footprint(self) -> list[tuple[str, IndexVec]]:
        """Sorted ``(channel, j)`` with ``X_k`` reading ``xi^{ch}_{k-j}``."""
        zero = (0,) * self.d
        v = self.variant
        if v in ("iid", "u-field"):
            out = {(self.channel, zero)}
        elif v == "linear":
            out = {(self.channel, j) for j, _ in self.kernel.coeffs}
        elif v == "volterra":
            out = {(self.channel, w) for (a, b), _ in self.volterra.coeffs for w in (a, b)}
        elif v == "product-omd":
            one = (1,) * self.d
            out = {(self.channel, zero)} | {(ch, _vec_add(j, one)) for ch, j in self.inner.footprint()}
        else:
            out = set()
            for name, part in self.cobo.parts():
                if part is None:
                    continue
                shifts = {"m": [(0, 0)], "m1": [(0, 0), (-1, 0)], "m2": [(0, 0), (0, -1)],
                          "y": [(0, 0), (-1, 0), (0, -1), (-1, -1)]}[name]
                for ch, j in part.footprint():
                    out |= {(ch, _vec_add(j, s)) for s in shifts}
        return sorted(out)

    @property
    def causal(self) -> bool:
        """True when every footprint offset is >= 0 (X_0 is F_0-measurable)."""
        return all(all(c >= 0 for c in j) for _, j in self.footprint())

    def all_channels(self) -> dict[str, InnovationSpec]:
        if self.variant == "product-omd":
            return {**self.inner.all_channels(), **self.channels}
        if self.variant == "coboundary":
            out: dict[str, InnovationSpec] = {}
            for _, part in self.cobo.parts():
                if part is not None:
                    for ch, spec in part.all_channels().items():
                        if out.get(ch, spec) != spec:
                            raise StructuralError(f"components disagree on channel {ch!r}")
                        out[ch] = spec
            return out
        return dict(self.channels)

    # -------------------------------------------------------------- evaluation
    def combine(self, get: Getter, exact: bool = False):
        v = self.variant
        zero = (0,) * self.d
        if v in ("iid", "u-field"):
            return get(self.channel, zero)
        if v == "linear":
            total = 0
            for j, a in self.kernel.coeffs:
                total = total + (_exact(a) if exact else a) * get(self.channel, j)
            return total
        if v == "volterra":
            total = 0
            for (a, b), c in self.volterra.coeffs:
                total = total + (_exact(c) if exact else c) * get(self.channel, a) * get(self.channel, b)
            return total
        if v == "product-omd":
            one = (1,) * self.d
            u = self.inner.combine(lambda ch, j: get(ch, _vec_add(j, one)), exact)
            return get(self.channel, zero) * _sqrt(u, exact)
        return self._combine_cobo(get, exact)

    def _combine_cobo(self, get: Getter, exact: bool):
        def at(part: FieldModel, shift):
            # component evaluated at k + shift reads xi_{k + shift - j}
            return part.combine(lambda ch, j: get(ch, _vec_sub(j, shift)), exact)

        c = self.cobo
        total = 0
        if c.m is not None:
            total = total + at(c.m, (0, 0))
        if c.m1 is not None:
            total = total + at(c.m1, (0, 0)) - at(c.m1, (1, 0))
        if c.m2 is not None:
            total = total + at(c.m2, (0, 0)) - at(c.m2, (0, 1))
        if c.y is not None:
            total = total + at(c.y, (0, 0)) - at(c.y, (1, 0)) - at(c.y, (0, 1)) + at(c.y, (1, 1))
        return total

    @property
    def bound(self) -> float:
        """Almost-sure bound on ``|X_0|`` (``inf`` when unbounded)."""
        v = self.variant
        if v in ("iid", "u-field"):
            return channel_bound(self.channels[self.channel])
        if v == "linear":
            return math.fsum(abs(a) for _, a in self.kernel.coeffs) * channel_bound(self.channels[self.channel])
        if v == "volterra":
            c = channel_bound(self.channels[self.channel])
            return math.fsum(abs(a) for _, a in self.volterra.coeffs) * c * c
        if v == "product-omd":
            return channel_bound(self.channels[self.channel]) * math.sqrt(self.inner.bound)
        total = 0.0
        for name, part in self.cobo.parts():
            if part is not None:
                total += {"m": 1, "m1": 2, "m2": 2, "y": 4}[name] * part.bound
        return total


def channel_bound(spec: InnovationSpec) -> float:
    if spec.kind == "rademacher":
        return 1.0
    if spec.kind == "finite-pmf":
        return max(abs(v) for v, p in zip(spec.values, spec.probs) if p > 0)
    if spec.kind == "u-level-composite":
        from .ulevels import level_value

        if spec.n_max > (1 << 20):
            return float("inf")
        return float(np.sum(level_value(np.arange(2, spec.n_max + 1))))
    return float("inf")


def _isqrt_fraction(x: Fraction) -> Fraction | None:
    if x < 0:
        raise ParameterError("square root of a negative U value")
    rn, rd = math.isqrt(x.numerator), math.isqrt(x.denominator)
    if rn * rn == x.numerator and rd * rd == x.denominator:
        return Fraction(rn, rd)
    return None


def _sqrt(u, exact: bool):
    if not exact:
        return np.sqrt(u)
    arr = np.asarray(u, dtype=object)
    out = np.empty(arr.shape, dtype=object)
    for idx, val in np.ndenumerate(arr):
        r = _isqrt_fraction(Fraction(val))
        if r is None:
            raise ParameterError(f"U value {val} has no exact rational square root")
        out[idx] = r
    return out if out.shape else out.item()


# ------------------------------------------------------------------ builders


def rademacher() -> InnovationSpec:
    return InnovationSpec.rademacher()


def iid_model(d: int = 2, innovation: InnovationSpec | None = None, channel: str = "xi") -> FieldModel:
    return FieldModel("iid", d, {channel: innovation or rademacher()}, channel=channel)


def linear_model(kernel: Kernel | Mapping, innovation: InnovationSpec | None = None, d: int | None = None,
                 channel: str = "xi") -> FieldModel:
    if not isinstance(kernel, Kernel):
        kernel = Kernel.from_map(kernel, d)
    return FieldModel("linear", kernel.d, {channel: innovation or rademacher()}, kernel=kernel, channel=channel)


def volterra_model(coeffs: VolterraCoeffs | Mapping, innovation: InnovationSpec | None = None, d: int | None = None,
                   channel: str = "xi") -> FieldModel:
    if not isinstance(coeffs, VolterraCoeffs):
        coeffs = VolterraCoeffs.from_map(coeffs, d)
    return FieldModel("volterra", coeffs.d, {channel: innovation or rademacher()}, volterra=coeffs, channel=channel)


def make_u_field(n_max: int, eps: float = 0.5, d: int = 2, channel: str = "u") -> FieldModel:
    """Heavy-level U field ``U_k = sum_n (n / ln^2 n) 1(G^{(n)}_k)``."""
    if int(n_max) < 2:
        raise ParameterError(f"N_max must be >= 2, got {n_max}")
    return FieldModel("u-field", d, {channel: InnovationSpec.u_levels(int(n_max), eps)}, channel=channel)


def bounded_u_field(values: Sequence[float] = (1.0, 4.0), probs: Sequence[float] = (0.5, 0.5), d: int = 2,
                    channel: str = "u") -> FieldModel:
    """Nonnegative finite-valued U field (the bounded control)."""
    if any(v < 0 for v in values):
        raise ParameterError("U values must be nonnegative")
    return FieldModel("u-field", d, {channel: InnovationSpec.pmf(values, probs)}, channel=channel)


def product_omd(inner: FieldModel, sign: InnovationSpec | None = None, channel: str = "xi") -> FieldModel:
    """``X_k = xi_k * sqrt(U_{k - (1,..,1)})``."""
    return FieldModel("product-omd", inner.d, {channel: sign or rademacher()}, inner=inner, channel=channel)


def coboundary_model(m=None, m1=None, m2=None, y=None) -> FieldModel:
    return FieldModel("coboundary", 2, {}, cobo=CoboundarySpec(m, m1, m2, y))


# ------------------------------------------------------------------ evaluation


def footprint_box(model: FieldModel, window: Rect) -> Rect:
    """Smallest box holding every innovation read by ``X_k`` for ``k`` in ``window``."""
    offs = [j for _, j in model.footprint()]
    if not offs:
        return window
    lo = tuple(a - max(j[i] for j in offs) for i, a in enumerate(window.lo))
    hi = tuple(b - min(j[i] for j in offs) for i, b in enumerate(window.hi))
    return Rect(lo, hi)


def field_window(model: FieldModel, lattice: InnovationLattice, window: Rect) -> np.ndarray:
    """``X_k`` for every ``k`` in ``window`` (leading batch axes preserved)."""
    if window.dim != model.d or lattice.window.dim != model.d:
        raise StructuralError("model, lattice and window dimensions differ")
    if window.empty:
        raise LatticeRangeError("empty evaluation window")
    base = lattice.window

    def get(ch, j):
        src = window.shifted(tuple(-c for c in j))
        if not base.contains(src):
            raise LatticeRangeError(f"footprint offset {j} of channel {ch!r} escapes lattice window {base}")
        return lattice.values[ch][(Ellipsis,) + src.slices(base.lo)]

    out = model.combine(get)
    if np.ndim(out) == 0:  # footprint-free model (e.g. an empty kernel)
        batch = np.shape(next(iter(lattice.values.values())))[: -model.d] if lattice.values else ()
        return np.full(batch + window.shape, float(out))
    return np.asarray(out, dtype=np.float64)


def eval_field(model: FieldModel, lattice: InnovationLattice, k: Sequence[int]):
    k = as_index(k)
    arr = field_window(model, lattice, Rect(k, tuple(c + 1 for c in k)))
    return arr[(Ellipsis,) + (0,) * model.d]


# ------------------------------------------------------------------ coefficient machinery


def _box(n: Sequence[int]) -> Iterable[IndexVec]:
    return itertools.product(*(range(c) for c in n))


def lin_b_coeffs(kernel: Kernel, n: Sequence[int], exact: bool = False) -> dict[IndexVec, float]:
    """``b_{n,i} = sum_{0 <= k <= n-1} a_{k+i}``; zero entries are omitted."""
    n = as_index(n)
    if len(n) != kernel.d or any(c < 1 for c in n):
        raise ParameterError(f"n must be a {kernel.d}-vector >= 1, got {n}")
    out: dict[IndexVec, Fraction] = {}
    for j, a in kernel.coeffs:
        # i = j - k for every k in [0, n) with k <= j
        for k in _box(tuple(min(c, jj + 1) for c, jj in zip(n, j))):
            i = _vec_sub(j, k)
            out[i] = out.get(i, Fraction(0)) + Fraction(a)
    out = {i: b for i, b in sorted(out.items()) if b != 0}
    return out if exact else {i: float(b) for i, b in out.items()}


@dataclass(frozen=True)
class ConditionScan:
    """Scan of a sup-condition over the box ``[1, N]^d``."""

    sup: float
    argmax: IndexVec
    stable_value: float
    stable_from: IndexVec | None  # None when the sequence never settles inside the box
    values: dict


def _scan_values(vals: Mapping[IndexVec, float], d: int, n_max: int) -> tuple[float, IndexVec | None]:
    """Sup of a grid over ``[1, N]^d`` and the smallest cube ``[s, N]^d`` where it is constant."""
    corner = (n_max,) * d
    final = vals[corner]
    stable = None
    for s in range(n_max, 0, -1):
        if all(vals[n] == final for n in itertools.product(range(s, n_max + 1), repeat=d)):
            stable = (s,) * d
        else:
            break
    if stable == corner and n_max > 1:
        stable = None
    return max(vals.values()), stable


def _scan(value_at: Callable[[IndexVec], Fraction], d: int, n_max: int) -> ConditionScan:
    if n_max < 1:
        raise ParameterError("N_max must be >= 1")
    vals = {n: value_at(n) for n in itertools.product(range(1, n_max + 1), repeat=d)}
    best = max(vals, key=lambda n: (vals[n], tuple(-c for c in n)))
    _, stable = _scan_values(vals, d, n_max)
    final = vals[(n_max,) * d]
    return ConditionScan(float(vals[best]), best, float(final), stable, {n: float(v) for n, v in vals.items()})


def check_lin(kernel: Kernel, n_max: int) -> ConditionScan:
    """``sup_{1 <= n <= N} sum_i b_{n,i}^2`` with its stabilization point."""
    return _scan(lambda n: sum((b * b for b in lin_b_coeffs(kernel, n, exact=True).values()), Fraction(0)),
                 kernel.d, n_max)


def volterra_c_coeffs(coeffs: VolterraCoeffs, j: Sequence[int], exact: bool = False) -> dict:
    """``c_{u,v}(j) = sum_{0 <= k <= j-1} a_{k+u,k+v}``; zero entries are omitted."""
    j = as_index(j)
    if len(j) != coeffs.d or any(c < 1 for c in j):
        raise ParameterError(f"j must be a {coeffs.d}-vector >= 1, got {j}")
    out: dict = {}
    for (p, q), a in coeffs.coeffs:
        lim = tuple(min(c, pp + 1, qq + 1) for c, pp, qq in zip(j, p, q))
        for k in _box(lim):
            key = (_vec_sub(p, k), _vec_sub(q, k))
            out[key] = out.get(key, Fraction(0)) + Fraction(a)
    out = {key: c for key, c in sorted(out.items()) if c != 0}
    return out if exact else {key: float(c) for key, c in out.items()}


def check_volt(coeffs: VolterraCoeffs, n_max: int) -> ConditionScan:
    """``sup_{1 <= j <= N} sum_{u != v} c_{u,v}(j)^2`` with its stabilization point."""
    def value(j):
        return sum((c * c for (u, v), c in volterra_c_coeffs(coeffs, j, exact=True).items() if u != v), Fraction(0))

    return _scan(value, coeffs.d, n_max)


# ------------------------------------------------------------------ moments


def linear_long_run_variance(model: FieldModel) -> float:
    """``c^2 = E xi^2 (sum_j a_j)^2`` for a linear field."""
    if model.variant != "linear":
        raise ParameterError("long-run variance formula applies to linear models")
    return model.channels[model.channel].second_moment * model.kernel.total**2
