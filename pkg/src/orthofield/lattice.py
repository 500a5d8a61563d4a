"""Lattice geometry and rectangular partial sums on d-dimensional windows.

Rectangles are half-open, ``{k : lo <= k < hi}``, so that the partial sum of a
field over ``[0, n)`` is exactly the sum over ``i = 0 .. n-1``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import LatticeRangeError, ParameterError, StructuralError

MAX_DIM = 3

IndexVec = tuple[int, ...]


def as_index(coords: Sequence[int]) -> IndexVec:
    out = tuple(int(c) for c in coords)
    if not out:
        raise StructuralError("index vectors need at least one coordinate")
    return out


def leq(u: Sequence[int], v: Sequence[int]) -> bool:
    """Coordinatewise partial order ``u <= v``."""
    return all(a <= b for a, b in zip(u, v))


def meet(u: Sequence, v: Sequence) -> tuple:
    return tuple(min(a, b) for a, b in zip(u, v))


@dataclass(frozen=True)
class Rect:
    """Half-open box ``[lo, hi)`` in Z^d."""

    lo: IndexVec
    hi: IndexVec

    def __post_init__(self):
        lo, hi = as_index(self.lo), as_index(self.hi)
        if len(lo) != len(hi):
            raise StructuralError(f"rect corners have dimensions {len(lo)} and {len(hi)}")
        if not leq(lo, hi):
            raise LatticeRangeError(f"rect lo {lo} is not <= hi {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def from_shape(cls, shape: Sequence[int], lo: Sequence[int] | None = None) -> "Rect":
        lo = tuple(lo) if lo is not None else (0,) * len(shape)
        return cls(lo, tuple(a + s for a, s in zip(lo, shape)))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    @property
    def volume(self) -> int:
        return math.prod(self.shape)

    @property
    def empty(self) -> bool:
        return self.volume == 0

    def contains(self, other: "Rect") -> bool:
        if other.dim != self.dim:
            return False
        if other.empty:
            return True
        return leq(self.lo, other.lo) and leq(other.hi, self.hi)

    def contains_point(self, k: Sequence[int]) -> bool:
        return all(a <= c < b for a, c, b in zip(self.lo, k, self.hi))

    def shifted(self, h: Sequence[int]) -> "Rect":
        return Rect(tuple(a + s for a, s in zip(self.lo, h)), tuple(b + s for b, s in zip(self.hi, h)))

    def slices(self, origin: Sequence[int]) -> tuple[slice, ...]:
        """Array slices selecting this rect inside an array whose cell 0 is ``origin``."""
        return tuple(slice(a - o, b - o) for a, b, o in zip(self.lo, self.hi, origin))

    def points(self):
        return itertools.product(*(range(a, b) for a, b in zip(self.lo, self.hi)))


def _pairwise_cumsum_last(a: np.ndarray) -> np.ndarray:
    """Inclusive prefix sums along the last axis by a work-efficient tree scan.

    Each output is assembled from O(log n) tree partial sums, so rounding
    error grows like log n instead of n. Integer input stays exact.
    """
    n = a.shape[-1]
    if n <= 1:
        return a.copy()
    size = 1 << (n - 1).bit_length()
    buf = np.zeros(a.shape[:-1] + (size,), dtype=a.dtype)
    buf[..., :n] = a
    stride = 1
    while stride < size:  # up-sweep
        buf[..., 2 * stride - 1 :: 2 * stride] += buf[..., stride - 1 :: 2 * stride]
        stride *= 2
    buf[..., size - 1] = 0
    stride = size // 2
    while stride >= 1:  # down-sweep, exclusive scan
        left = buf[..., stride - 1 :: 2 * stride].copy()
        buf[..., stride - 1 :: 2 * stride] = buf[..., 2 * stride - 1 :: 2 * stride]
        buf[..., 2 * stride - 1 :: 2 * stride] += left
        stride //= 2
    return buf[..., :n] + a


@dataclass(frozen=True)
class PrefixSumTable:
    """Summed-area table over ``window``.

    ``cumulative`` carries one zero-padded leading slab per lattice axis:
    ``cumulative[..., i1, .., id]`` is the sum of values over
    ``[window.lo, window.lo + i)``. Leading batch axes are allowed.
    """

    window: Rect
    cumulative: np.ndarray

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.cumulative.shape[: self.cumulative.ndim - self.window.dim]


def build_prefix_table(values: np.ndarray, window: Rect | None = None, max_dim: int = MAX_DIM) -> PrefixSumTable:
    """Build a summed-area table; ``values`` may carry leading batch axes."""
    values = np.asarray(values)
    if window is None:
        window = Rect.from_shape(values.shape)
    d = window.dim
    if not 1 <= d <= max_dim:
        raise StructuralError(f"dimension {d} outside 1..{max_dim}")
    if values.ndim < d or values.shape[values.ndim - d :] != window.shape:
        raise StructuralError(f"array shape {values.shape} does not end with window shape {window.shape}")
    if window.empty:
        raise StructuralError("window must be non-empty")
    if values.dtype.kind in "biu":
        acc = values.astype(np.int64)
    else:
        acc = values.astype(np.float64)
    batch = values.ndim - d
    acc = _pairwise_cumsum_last(acc)
    for axis in range(batch, values.ndim - 1):
        acc = np.cumsum(acc, axis=axis)
    pad = [(0, 0)] * batch + [(1, 0)] * d
    return PrefixSumTable(window, np.pad(acc, pad))


def rect_sum(table: PrefixSumTable, r: Rect):
    """Sum over ``r`` by inclusion-exclusion over the 2^d corners."""
    if r.dim != table.window.dim:
        raise StructuralError(f"rect dimension {r.dim} != table dimension {table.window.dim}")
    if r.empty:
        zero = np.zeros(table.batch_shape, dtype=table.cumulative.dtype)
        return zero if zero.ndim else zero.item()
    if not table.window.contains(r):
        raise LatticeRangeError(f"{r} is not inside window {table.window}")
    lo = [a - o for a, o in zip(r.lo, table.window.lo)]
    hi = [b - o for b, o in zip(r.hi, table.window.lo)]
    total = 0
    for corner in itertools.product((0, 1), repeat=r.dim):
        idx = tuple(lo[i] if c else hi[i] for i, c in enumerate(corner))
        term = table.cumulative[(Ellipsis,) + idx]
        total = total - term if sum(corner) % 2 else total + term
    return total


def _floor_mul(n: int, t) -> int:
    return math.floor(Fraction(t) * n)


def _check_unit(point: Sequence) -> None:
    for t in point:
        if not (0 <= t <= 1):
            raise LatticeRangeError(f"grid point {tuple(point)} outside [0,1]^d")


@dataclass(frozen=True)
class ScaledPathGrid:
    """Values of W at grid points, ``W(t) = S_[n t] / sqrt(|n|)``."""

    sizes: tuple[int, ...]
    points: tuple[tuple, ...]
    values: np.ndarray  # shape batch + (len(points),)


def scaled_path(table: PrefixSumTable, sizes: Sequence[int], grid: Sequence[Sequence]) -> ScaledPathGrid:
    """Evaluate ``S_{[n1 t1], .., [nd td]} / sqrt(n1...nd)`` at each grid point.

    Sums start at the lattice origin, which must lie inside the table window.
    """
    sizes = tuple(int(s) for s in sizes)
    if any(s < 1 for s in sizes):
        raise ParameterError(f"sizes must be >= 1, got {sizes}")
    if len(sizes) != table.window.dim:
        raise StructuralError("sizes and table dimension differ")
    scale = math.sqrt(math.prod(sizes))
    origin = (0,) * len(sizes)
    out = []
    for point in grid:
        if len(point) != len(sizes):
            raise StructuralError(f"grid point {tuple(point)} has wrong dimension")
        _check_unit(point)
        hi = tuple(_floor_mul(n, t) for n, t in zip(sizes, point))
        out.append(np.asarray(rect_sum(table, Rect(origin, hi)), dtype=np.float64) / scale)
    values = np.stack(out, axis=-1) if out else np.zeros(table.batch_shape + (0,))
    return ScaledPathGrid(sizes, tuple(tuple(p) for p in grid), values)


def increment(table: PrefixSumTable, a: Rect, scale: float):
    """Normalized rectangle increment ``Delta(A) = (sum over A) / scale``."""
    if scale <= 0:
        raise ParameterError("scale must be positive")
    return rect_sum(table, a) / scale


def block_rect(sizes: Sequence[int], lower: Sequence, upper: Sequence) -> Rect:
    """Lattice rectangle ``[[n t_lo], [n t_hi])`` for fractional corners."""
    _check_unit(lower)
    _check_unit(upper)
    lo = tuple(_floor_mul(n, t) for n, t in zip(sizes, lower))
    hi = tuple(_floor_mul(n, t) for n, t in zip(sizes, upper))
    return Rect(lo, hi)
