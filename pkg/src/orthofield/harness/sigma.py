from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..conditional import functional_of
from ..errors import CapacityError, ParameterError
from ..lattice import Rect
from ..models import FieldModel, field_window, footprint_box
from ..innovations import sample_innovations
from .engine import stream_id

ENUM_LIMIT = 1 << 16


@dataclass(frozen=True)
class Sigma2:
    value: float
    method: str  # "exact", "analytic" or "mc"
    error: float

    def to_dict(self) -> dict:
        return {"sigma2": self.value, "method": self.method, "error": self.error}


def _analytic(model: FieldModel) -> float | None:
    v = model.variant
    if v in ("iid", "u-field"):
        return model.channels[model.channel].second_moment
    spec = model.channels.get(model.channel)
    if v == "linear" and spec.mean == 0:
        return spec.second_moment * math.fsum(a * a for _, a in model.kernel.coeffs)
    if v == "volterra" and spec.mean == 0:
        # distinct offsets: E(xi_u xi_v xi_u' xi_v') = s^2 when {u,v} = {u',v'}
        pairs: dict = {}
        for (a, b), c in model.volterra.coeffs:
            key = tuple(sorted((a, b)))
            pairs[key] = pairs.get(key, 0.0) + c
        return spec.second_moment**2 * math.fsum(c * c for c in pairs.values())
    if v == "product-omd" and model.inner.variant == "u-field":
        inner = model.inner.channels[model.inner.channel]
        return spec.second_moment * inner.mean
    return None


def estimate_sigma2(model: FieldModel, mc_reps: int = 200_000, seed: int = 0) -> Sigma2:
    """``E X_0^2``: exact enumeration when small, closed forms next, else Monte Carlo."""
    f = functional_of(model)
    if f.finite and f.size <= ENUM_LIMIT:
        try:
            ex = f.resolve_exact(None)
            t = f.table(ex)
            sq = t * t
            for c in f.coords:
                sq = np.tensordot(sq, f.support(c, ex)[1], axes=([0], [0]))
            return Sigma2(float(sq[()] if isinstance(sq, np.ndarray) else sq), "exact", 0.0)
        except (CapacityError, ParameterError):
            pass
    val = _analytic(model)
    if val is not None:
        return Sigma2(float(val), "analytic", 0.0)
    if mc_reps < 2:
        raise ParameterError("mc_reps must be >= 2")
    site = Rect((0,) * model.d, (1,) * model.d)
    box = footprint_box(model, site)
    lat = sample_innovations(box, model.all_channels(), seed, np.arange(mc_reps), stream=stream_id(seed, 0xE5))
    x2 = field_window(model, lat, site).reshape(mc_reps) ** 2
    return Sigma2(float(np.mean(x2)), "mc", float(np.std(x2, ddof=1) / math.sqrt(mc_reps)))
