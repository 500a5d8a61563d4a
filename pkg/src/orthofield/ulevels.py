"""Heavy-level U field: level values n / ln^2 n switched on with probability 1/(2 n^2).

The U value at a site is ``sum_{n=2}^{N_max} (n / ln^2 n) * 1(G_n)`` with the
level events ``G_n`` independent Bernoulli(1/(2 n^2)), independently across
sites. Tail products ``prod (1 - 1/(2 n^2))`` are evaluated in closed form
through ``log(1 - a/n^2) = -sum_k a^k / (k n^{2k})`` and Hurwitz zeta values,
which keeps level counts up to ~1e15 exact to double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.special import zeta

from .errors import ParameterError
from .rng import rehash, to_uniform

_HALF = 0.5
_ZETA_TERMS = 14
_TABLE_TOP = 64


def level_value(n):
    n = np.asarray(n, dtype=np.float64)
    return n / np.log(n) ** 2


def level_prob(n):
    n = np.asarray(n, dtype=np.float64)
    return 0.5 / (n * n)


_BERNOULLI = (1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0)


def _hurwitz_far(s: int, m: np.ndarray) -> np.ndarray:
    """Euler-Maclaurin expansion of ``zeta(s, m)`` for ``m >= 64`` (error below 1e-19 relative)."""
    inv = 1.0 / m
    lead = inv ** (s - 1)
    out = lead / (s - 1) + 0.5 * lead * inv
    rising = float(s)  # s (s+1) ... (s + 2k - 2)
    fact = 2.0  # (2k)!
    power = lead * inv * inv  # m^(-s - 2k + 1)
    for k, b in enumerate(_BERNOULLI, start=1):
        out = out + b / fact * rising * power
        rising *= (s + 2 * k - 1) * (s + 2 * k)
        fact *= (2 * k + 1) * (2 * k + 2)
        power = power * inv * inv
    return out


def log_tail_inf(m):
    """``log prod_{n >= m} (1 - 1/(2 n^2))`` for real ``m >= 2``."""
    m = np.asarray(m, dtype=np.float64)
    out = np.zeros_like(m)
    far = m >= _TABLE_TOP
    near = ~far
    # beyond the table the k >= 5 terms are below 1e-17 relative
    for k in range(1, _ZETA_TERMS + 1):
        c = _HALF**k / k
        if k <= 4 and far.any():
            out[far] -= c * _hurwitz_far(2 * k, m[far])
        if near.any():
            out[near] -= c * zeta(2 * k, m[near])
    return out


def log_tail(m, n_max: int):
    """``log prod_{n=m}^{n_max} (1 - 1/(2 n^2))``; zero when the range is empty."""
    m = np.asarray(m, dtype=np.float64)
    m_clip = np.clip(m, 2.0, float(n_max) + 1.0)
    return log_tail_inf(m_clip) - log_tail_inf(float(n_max) + 1.0)


@lru_cache(maxsize=64)
def _small_table(n_max: int) -> np.ndarray:
    # t[m] = log prod_{n=m+1}^{n_max}(1 - p_n) for m = 0 .. _TABLE_TOP
    ms = np.arange(_TABLE_TOP + 1, dtype=np.float64) + 1.0
    return log_tail(ms, n_max)


def _check_nmax(n_max: int) -> int:
    n_max = int(n_max)
    if n_max < 2:
        raise ParameterError(f"N_max must be >= 2, got {n_max}")
    return n_max


def sample_u_levels(bits: np.ndarray, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Exact draw of (U, highest active level) per cell from 64-bit cell hashes.

    Active levels are generated from the top down: given that no level at or
    above ``M`` remains, the next highest active level is at most ``m`` with
    probability ``prod_{n=m+1}^{M-1} (1 - p_n)``; this is inverted with a table
    for small levels and bisection above it. The highest level is 0 when no
    level fires.
    """
    n_max = _check_nmax(n_max)
    shape = np.shape(bits)
    flat = np.asarray(bits, dtype=np.uint64).reshape(-1)
    u_val = np.zeros(flat.shape, dtype=np.float64)
    top = np.zeros(flat.shape, dtype=np.int64)
    upper = np.full(flat.shape, n_max + 1, dtype=np.int64)  # exclusive bound
    live = np.arange(flat.size)
    table = _small_table(n_max)
    round_ = 0
    while live.size:
        w = to_uniform(flat[live] if round_ == 0 else rehash(flat[live], round_))
        ups, inv = np.unique(upper[live], return_inverse=True)
        target = np.log(w) + log_tail(ups.astype(np.float64), n_max)[inv]
        # smallest m with log_tail(m+1) >= target; m = 1 means "no more levels"
        m = np.searchsorted(table, target, side="left").astype(np.int64)
        m = np.maximum(m, 1)
        big = m > _TABLE_TOP
        if np.any(big):
            lo = np.full(int(big.sum()), _TABLE_TOP, dtype=np.int64)
            hi = upper[live][big] - 1
            tb = target[big]
            while np.any(hi - lo > 1):
                mid = (lo + hi) // 2
                ok = log_tail(mid.astype(np.float64) + 1.0, n_max) >= tb
                hi = np.where(ok, mid, hi)
                lo = np.where(ok, lo, mid)
            m[big] = hi
        m = np.minimum(m, upper[live] - 1)
        fired = m >= 2
        idx = live[fired]
        lv = m[fired]
        u_val[idx] += level_value(lv)
        top[idx] = np.where(top[idx] == 0, lv, top[idx])
        upper[idx] = lv
        live = idx
        round_ += 1
    return u_val.reshape(shape), top.reshape(shape)


def u_level_pmf(n_max: int, max_levels: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Exact marginal pmf of U by enumeration (only for small N_max)."""
    n_max = _check_nmax(n_max)
    if n_max - 1 > max_levels:
        raise ParameterError(f"u-level pmf enumeration limited to {max_levels} levels")
    dist = {0.0: 1.0}
    for n in range(2, n_max + 1):
        v, p = float(level_value(n)), float(level_prob(n))
        nxt: dict[float, float] = {}
        for val, q in dist.items():
            nxt[val] = nxt.get(val, 0.0) + q * (1 - p)
            nxt[val + v] = nxt.get(val + v, 0.0) + q * p
        dist = nxt
    vals = np.array(sorted(dist))
    return vals, np.array([dist[v] for v in vals])


def single_level_exceedance(x, n_max: int | None = None):
    """P(some active level has value >= x) for one cell.

    This is the event behind the non-tightness argument (one level alone
    clears the threshold); it is a lower bound for ``P(U >= x)``.
    """
    x = np.asarray(x, dtype=np.float64)
    cap = float("inf") if n_max is None else float(n_max)
    # small levels off the increasing branch are handled one by one
    small = np.arange(2, 9)
    small_vals = level_value(small)
    log_none = np.zeros_like(x)
    for n, v in zip(small, small_vals):
        if n <= cap:
            log_none += np.where(v >= x, math.log1p(-0.5 / n**2), 0.0)
    start = np.maximum(first_level_at_least(x), 9.0)
    if n_max is None:
        tail = np.where(np.isfinite(start), log_tail_inf(np.where(np.isfinite(start), start, 9.0)), 0.0)
    else:
        ok = start <= cap
        tail = np.where(ok, log_tail(np.where(ok, start, 9.0), int(n_max)), 0.0)
    return -np.expm1(log_none + tail)


_BRANCH_VALUES = np.asarray(level_value(np.arange(8, 1 << 16, dtype=np.float64)))


def first_level_at_least(x) -> np.ndarray:
    """Smallest level n >= 8 (increasing branch) with n / ln^2 n >= x."""
    x = np.asarray(x, dtype=np.float64)
    n = np.maximum(x * np.log(np.maximum(x, 3.0)) ** 2, 8.0)
    n = np.maximum(x * np.log(n) ** 2, 8.0)
    for _ in range(8):  # Newton on g(n) = n - x ln^2 n
        ln = np.log(n)
        g = n - x * ln * ln
        dg = 1.0 - 2.0 * x * ln / n
        step = np.where(dg > 0.1, g / dg, -0.5 * n)
        n = np.maximum(n - step, 8.0)
        if np.all(np.abs(step) <= 1e-9 * n):
            break
    n = np.ceil(n)
    down = (n > 8) & (level_value(np.maximum(n - 1, 8)) >= x)
    n = np.where(down, n - 1, n)
    n = np.where(level_value(n) < x, n + 1, n)
    small = x <= _BRANCH_VALUES[-1]
    if np.any(small):  # Newton is unreliable near the minimum of n / ln^2 n
        n = np.where(small, 8.0 + np.searchsorted(_BRANCH_VALUES, x), n)
    return n


# ---------------------------------------------------------------- moments


@dataclass(frozen=True)
class MomentFunctional:
    """Convex moment functions used by the Orlicz-type conditions.

    ``g``: x ln^{1-eps}(1+x); ``phi``: x^2 ln^{d-1}(1+x); ``plain``: x^2.
    """

    kind: str = "plain"
    eps: float = 0.5
    d: int = 2

    def __post_init__(self):
        if self.kind not in ("g", "phi", "plain"):
            raise ParameterError(f"unknown moment functional {self.kind!r}")
        if self.kind == "g" and not 0 <= self.eps < 1:
            raise ParameterError("eps must lie in [0, 1)")  # eps = 0 is the borderline x ln(1+x)
        if self.kind == "phi" and self.d < 2:
            raise ParameterError("phi needs d >= 2")

    def __call__(self, x):
        x = np.abs(np.asarray(x, dtype=np.float64))
        if self.kind == "g":
            return x * np.log1p(x) ** (1.0 - self.eps)
        if self.kind == "phi":
            return x * x * np.log1p(x) ** (self.d - 1)
        return x * x

    def log_large(self, log_x):
        """``log f(x)`` for astronomically large x, given ``log x``."""
        log_x = np.asarray(log_x, dtype=np.float64)
        if self.kind == "g":
            return log_x + (1.0 - self.eps) * np.log(log_x)
        if self.kind == "phi":
            return 2.0 * log_x + (self.d - 1) * np.log(log_x)
        return 2.0 * log_x


def _euler_maclaurin(term: Callable, a: float, b: float) -> float:
    """``sum_{n=a}^{b} term(n)`` for a smooth, slowly varying positive term."""
    if b < a:
        return 0.0
    body, _ = integrate.quad(lambda y: float(term(np.exp(y)) * np.exp(y)), math.log(a), math.log(b),
                             epsabs=0.0, epsrel=1e-13, limit=200)

    def deriv(n):
        h = 1e-4 * n
        return float((term(n + h) - term(n - h)) / (2 * h))

    return body + 0.5 * float(term(a) + term(b)) + (deriv(b) - deriv(a)) / 12.0


@dataclass(frozen=True)
class UMomentSeries:
    """Series ``sum_n P(G_n) f(level_n)`` (or ``f(sqrt(level_n))`` when ``root``)."""

    n_max: int
    f: MomentFunctional
    root: bool = False
    exact_upto: int = 1 << 20

    def terms(self, n) -> np.ndarray:
        n = np.asarray(n, dtype=np.float64)
        v = level_value(n)
        return level_prob(n) * self.f(np.sqrt(v) if self.root else v)

    def partial_sum(self, upto: int) -> float:
        upto = min(int(upto), self.n_max)
        if upto < 2:
            return 0.0
        cut = min(upto, self.exact_upto)
        total = 0.0
        chunk = 1 << 20
        for start in range(2, cut + 1, chunk):
            stop = min(cut, start + chunk - 1)
            total += float(np.sum(self.terms(np.arange(start, stop + 1, dtype=np.float64))))
        if upto > cut:
            total += _euler_maclaurin(self.terms, float(cut + 1), float(upto))
        return total

    def partial_sums(self, checkpoints) -> list[float]:
        return [self.partial_sum(c) for c in checkpoints]

    def tail_exponent(self, y1: float = 1e6, y2: float = 1e7) -> float:
        """Effective p in ``n * term(n) ~ 1 / ln^p n`` far out (n = e^y).

        Evaluated analytically in log space, independent of ``n_max``. The
        infinite series converges iff p > 1 (Bertrand's test).
        """
        def log_nt(y):
            log_v = y - 2.0 * math.log(y)
            log_f = float(self.f.log_large(0.5 * log_v if self.root else log_v))
            return y + (-math.log(2.0) - 2.0 * y) + log_f

        return -(log_nt(y2) - log_nt(y1)) / (math.log(y2) - math.log(y1))

    def converges(self, margin: float = 0.01) -> bool:
        return self.tail_exponent() > 1.0 + margin


def u_moment_series(n_max: int, f: MomentFunctional, root: bool = False) -> UMomentSeries:
    return UMomentSeries(_check_nmax(n_max), f, root)


def u_mean(n_max: int) -> float:
    """E U for the level field truncated at ``n_max``."""
    n_max = _check_nmax(n_max)
    return UMomentSeries(n_max, MomentFunctional("plain"), root=True).partial_sum(n_max)


def u_second_moment(n_max: int) -> float:
    """E U^2 = sum v^2 p (1 - p) + (E U)^2."""
    n_max = _check_nmax(n_max)

    def var_terms(n):
        v, p = level_value(n), level_prob(n)
        return v * v * p * (1.0 - p)

    cut = min(n_max, 1 << 20)
    var = float(np.sum(var_terms(np.arange(2, cut + 1, dtype=np.float64))))
    if n_max > cut:
        var += _euler_maclaurin(var_terms, float(cut + 1), float(n_max))
    return var + u_mean(n_max) ** 2
