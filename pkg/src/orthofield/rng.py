"""Counter-based random streams keyed by (seed, role, ids, lattice coordinate).

Every innovation value is a pure function of its key and its cell coordinate,
so values never depend on window shape, batch size or scheduling order. The
mixing function is the SplitMix64 finalizer; a stream is the SplitMix64
sequence ``mix(state + i * GOLDEN)`` where ``i`` runs over a coordinate.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S12 = np.uint64(12)
_S63 = np.uint64(63)

# Distinct roles never share a key, so replicate streams can not collide with
# frozen-past streams even for equal numeric ids.
ROLES = {
    "replicate": 0x5EED0001,
    "past": 0x5EED0002,
    "channel": 0x5EED0003,
    "mc": 0x5EED0004,
    "aux": 0x5EED0005,
}


def mix(z):
    """SplitMix64 finalizer on a uint64 scalar or array (returns a new array)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z ^ (z >> _S30)
        z = z * _M1
        z = z ^ (z >> _S27)
        z = z * _M2
        z = z ^ (z >> _S31)
    return z


def _mix_inplace(z: np.ndarray) -> np.ndarray:
    np.bitwise_xor(z, z >> _S30, out=z)
    np.multiply(z, _M1, out=z)
    np.bitwise_xor(z, z >> _S27, out=z)
    np.multiply(z, _M2, out=z)
    np.bitwise_xor(z, z >> _S31, out=z)
    return z


def _u64(x) -> np.ndarray:
    # negative coordinates wrap modulo 2**64; that is fine for hashing
    return np.asarray(x, dtype=np.int64).astype(np.uint64)


def derive_key(base_seed: int, role: str, *ids: int) -> np.uint64:
    """Key for a stream: a pure function of (base seed, role, ids...)."""
    z = mix(_u64(base_seed & 0x7FFFFFFFFFFFFFFF) ^ np.uint64(ROLES[role]))
    for i in ids:
        with np.errstate(over="ignore"):
            z = mix(z + _u64(i) * GOLDEN)
    return np.uint64(z)


def derive_keys(base_seed: int, role: str, prefix: tuple[int, ...], last: np.ndarray) -> np.ndarray:
    """Vectorized ``derive_key(base, role, *prefix, last[i])`` for an id array."""
    z = derive_key(base_seed, role, *prefix)
    with np.errstate(over="ignore"):
        return mix(z + _u64(last) * GOLDEN)


def lattice_bits(keys, lo, shape) -> np.ndarray:
    """Raw 64-bit hashes for every cell of the box ``[lo, lo + shape)``.

    ``keys`` may be a scalar or an array of keys (leading batch axes); the
    result has shape ``keys.shape + shape``.
    """
    z = np.asarray(keys, dtype=np.uint64)
    with np.errstate(over="ignore"):
        for axis, (start, length) in enumerate(zip(lo, shape)):
            coords = _u64(np.arange(start, start + length)) * GOLDEN
            z = z[..., None] + coords
            if axis < len(shape) - 1:
                z = mix(z)
            else:
                _mix_inplace(z)
    return z


def rehash(bits: np.ndarray, salt: int) -> np.ndarray:
    """Derive an independent-looking 64-bit word from ``bits`` (for extra draws)."""
    with np.errstate(over="ignore"):
        return mix(bits + _u64(salt) * GOLDEN + np.uint64(0xA5A5A5A5))


def to_uniform(bits: np.ndarray) -> np.ndarray:
    """Map 64-bit words to doubles strictly inside (0, 1)."""
    # 52 bits so that k + 0.5 stays exact in a double; 53 would round the top value up to 1.0
    return ((bits >> _S12).astype(np.float64) + 0.5) * (1.0 / 4503599627370496.0)


def to_sign(bits: np.ndarray) -> np.ndarray:
    """Map 64-bit words to +-1.0 using the top bit."""
    return 1.0 - 2.0 * (bits >> _S63).astype(np.float64)


def mc_generator(seed: int, *ids: int) -> np.random.Generator:
    """numpy Generator for Monte Carlo work that is not tied to lattice cells."""
    key = int(derive_key(seed, "mc", *ids))
    return np.random.Generator(np.random.Philox(key))
