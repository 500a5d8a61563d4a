"""I.i.d. innovation fields realized on finite windows.

A lattice holds one array per named channel. Cell values are pure functions
of ``(base_seed, stream ids, channel, cell)``; a frozen past overwrites the
closed lower quadrant ``{k <= 0}`` with values drawn from a dedicated stream.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtri

from .errors import ArgumentError, LatticeRangeError, ParameterError
from .lattice import Rect
from .rng import derive_key, derive_keys, lattice_bits, to_sign, to_uniform
from .ulevels import level_value, sample_u_levels, u_level_pmf, u_mean, u_second_moment

KINDS = ("rademacher", "finite-pmf", "gaussian", "u-level-composite")


@dataclass(frozen=True)
class InnovationSpec:
    """Marginal law of one innovation channel."""

    kind: str = "rademacher"
    values: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()
    variance: float = 1.0
    n_max: int = 2
    eps: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown innovation kind {self.kind!r}")
        if self.kind == "finite-pmf":
            if len(self.values) != len(self.probs) or not self.values:
                raise ParameterError("finite-pmf needs matching, non-empty values and probs")
            if any(p < 0 for p in self.probs) or abs(math.fsum(self.probs) - 1.0) > 1e-12:
                raise ParameterError("pmf probabilities must be >= 0 and sum to 1")
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
            object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if self.kind == "gaussian" and self.variance <= 0:
            raise ParameterError("gaussian variance must be > 0")
        if self.kind == "u-level-composite" and self.n_max < 2:
            raise ParameterError("u-level-composite needs N_max >= 2")

    @classmethod
    def rademacher(cls) -> "InnovationSpec":
        return cls("rademacher")

    @classmethod
    def pmf(cls, values: Sequence[float], probs: Sequence[float]) -> "InnovationSpec":
        return cls("finite-pmf", tuple(values), tuple(probs))

    @classmethod
    def gaussian(cls, variance: float = 1.0) -> "InnovationSpec":
        return cls("gaussian", variance=variance)

    @classmethod
    def u_levels(cls, n_max: int, eps: float = 0.5) -> "InnovationSpec":
        return cls("u-level-composite", n_max=n_max, eps=eps)

    @property
    def finite(self) -> bool:
        """True when an exact finite support is available for enumeration."""
        if self.kind in ("rademacher", "finite-pmf"):
            return True
        return self.kind == "u-level-composite" and self.n_max <= 13

    def support(self, exact: bool = False):
        """(values, probs) of a finite law; Fractions when ``exact``."""
        if self.kind == "rademacher":
            vals, probs = (-1.0, 1.0), (0.5, 0.5)
        elif self.kind == "finite-pmf":
            order = np.argsort(self.values)
            vals = tuple(self.values[i] for i in order)
            probs = tuple(self.probs[i] for i in order)
        elif self.kind == "u-level-composite" and self.finite:
            v, p = u_level_pmf(self.n_max)
            vals, probs = tuple(v), tuple(p)
        else:
            raise ParameterError(f"{self.kind} innovations have no finite support to enumerate")
        if exact:
            return (np.array([Fraction(v) for v in vals], dtype=object),
                    np.array([Fraction(p) for p in probs], dtype=object))
        return np.array(vals, dtype=np.float64), np.array(probs, dtype=np.float64)

    @property
    def mean(self) -> float:
        if self.kind == "finite-pmf":
            return math.fsum(v * p for v, p in zip(self.values, self.probs))
        if self.kind == "u-level-composite":
            return u_mean(self.n_max)
        return 0.0

    @property
    def second_moment(self) -> float:
        if self.kind == "rademacher":
            return 1.0
        if self.kind == "gaussian":
            return self.variance
        if self.kind == "finite-pmf":
            return math.fsum(v * v * p for v, p in zip(self.values, self.probs))
        return u_second_moment(self.n_max)

    def from_bits(self, bits: np.ndarray) -> np.ndarray:
        """Transform raw 64-bit cell hashes into innovation values."""
        if self.kind == "rademacher":
            return to_sign(bits)
        if self.kind == "gaussian":
            return math.sqrt(self.variance) * ndtri(to_uniform(bits))
        if self.kind == "finite-pmf":
            vals, probs = self.support()
            cum = np.cumsum(probs)
            cum[-1] = 1.0
            return vals[np.searchsorted(cum, to_uniform(bits), side="right")]
        u, _ = sample_u_levels(bits, self.n_max)
        return u


def channel_id(name: str) -> int:
    return zlib.crc32(name.encode())


def quadrant_box(window: Rect) -> Rect | None:
    """Intersection of ``window`` with the closed lower quadrant ``{k <= 0}``."""
    hi = tuple(min(b, 1) for b in window.hi)
    if any(h <= a for a, h in zip(window.lo, hi)):
        return None
    return Rect(window.lo, hi)


@dataclass(frozen=True)
class FrozenPast:
    """Stored innovations on ``region`` (part of the quadrant ``{k <= 0}``)."""

    past_id: int
    base_seed: int
    region: Rect
    values: Mapping[str, np.ndarray]


def make_frozen_past(window: Rect, specs: Mapping[str, InnovationSpec], base_seed: int,
                     past_id: int) -> FrozenPast | None:
    region = quadrant_box(window)
    if region is None:
        return None
    values = {}
    for name, spec in specs.items():
        key = derive_key(base_seed, "past", past_id, channel_id(name))
        values[name] = spec.from_bits(lattice_bits(key, region.lo, region.shape))
    return FrozenPast(past_id, base_seed, region, values)


@dataclass
class InnovationLattice:
    """Realized innovations on ``window`` (one array per channel).

    Arrays may carry leading batch axes, one entry per replicate.
    """

    window: Rect
    values: dict[str, np.ndarray]
    frozen: FrozenPast | None = None
    seed_record: tuple[int, ...] = field(default_factory=tuple)

    def at(self, channel: str, k: Sequence[int]):
        if not self.window.contains_point(k):
            raise LatticeRangeError(f"cell {tuple(k)} outside lattice window {self.window}")
        idx = tuple(c - o for c, o in zip(k, self.window.lo))
        return self.values[channel][(Ellipsis,) + idx]


def _normalize_specs(spec) -> dict[str, InnovationSpec]:
    if isinstance(spec, InnovationSpec):
        return {"xi": spec}
    return dict(spec)


def sample_innovations(window: Rect, spec, base_seed: int, replicate_id, frozen: FrozenPast | None = None,
                       stream: int = 0) -> InnovationLattice:
    """Draw innovations on ``window`` for one replicate or an array of them.

    ``stream`` separates replicate families (e.g. one per frozen past) so that
    equal replicate ids under different pasts stay independent.
    """
    specs = _normalize_specs(spec)
    if window.empty:
        raise ArgumentError("window must be non-empty")
    ids = np.asarray(replicate_id, dtype=np.int64)
    if frozen is not None and not window.contains(frozen.region):
        if quadrant_box(window) is None or not frozen.region.contains(quadrant_box(window)):
            raise LatticeRangeError("frozen region does not cover the window's quadrant part")
    values = {}
    for name, sp in specs.items():
        keys = derive_keys(base_seed, "replicate", (stream, channel_id(name)), ids)
        arr = sp.from_bits(lattice_bits(keys, window.lo, window.shape))
        if frozen is not None:
            _overwrite_frozen(arr, window, frozen, name)
        values[name] = arr
    record = (base_seed, stream, int(ids) if ids.ndim == 0 else -1)
    return InnovationLattice(window, values, frozen, record)


def _overwrite_frozen(arr: np.ndarray, window: Rect, frozen: FrozenPast, name: str) -> None:
    part = quadrant_box(window)
    if part is None:
        return
    if not frozen.region.contains(part):
        raise LatticeRangeError(f"frozen region {frozen.region} does not cover {part}")
    src = frozen.values[name][(Ellipsis,) + part.slices(frozen.region.lo)]
    arr[(Ellipsis,) + part.slices(window.lo)] = src


def level_tops(window: Rect, spec: InnovationSpec, base_seed: int, replicate_id, stream: int = 0,
               channel: str = "u") -> np.ndarray:
    """Highest active level per cell for a u-level channel (same stream as its values)."""
    if spec.kind != "u-level-composite":
        raise ParameterError("level_tops needs a u-level-composite channel")
    keys = derive_keys(base_seed, "replicate", (stream, channel_id(channel)), np.asarray(replicate_id, dtype=np.int64))
    _, top = sample_u_levels(lattice_bits(keys, window.lo, window.shape), spec.n_max)
    return top


__all__ = [
    "InnovationSpec", "InnovationLattice", "FrozenPast", "make_frozen_past", "sample_innovations",
    "quadrant_box", "level_tops", "level_value",
]
