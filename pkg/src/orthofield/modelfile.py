"""YAML model descriptions, validated with pydantic and round-tripped losslessly."""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigError, OrthofieldError
from .innovations import InnovationSpec
from .models import CoboundarySpec, FieldModel, Kernel, VolterraCoeffs

Variant = Literal["iid", "linear", "volterra", "u-field", "product-omd", "coboundary"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class InnovationDoc(_Strict):
    kind: Literal["rademacher", "finite-pmf", "gaussian", "u-level-composite"] = "rademacher"
    values: Optional[list[float]] = None
    probs: Optional[list[float]] = None
    variance: Optional[float] = None
    n_max: Optional[int] = None
    eps: Optional[float] = None


class KernelEntry(_Strict):
    offset: list[int]
    value: float


class VolterraEntry(_Strict):
    u: list[int]
    v: list[int]
    value: float


class ModelDoc(_Strict):
    dimension: int = Field(ge=1, le=3)
    variant: Variant
    channel: str = "xi"
    seed: Optional[int] = None
    innovations: dict[str, InnovationDoc] = Field(default_factory=dict)
    kernel: Optional[list[KernelEntry]] = None
    volterra: Optional[list[VolterraEntry]] = None
    inner: Optional["ModelDoc"] = None
    components: Optional[dict[Literal["m", "m1", "m2", "y"], "ModelDoc"]] = None


def _spec_from_doc(doc: InnovationDoc) -> InnovationSpec:
    kw = {k: v for k, v in doc.model_dump(exclude_none=True).items() if k != "kind"}
    for k in ("values", "probs"):
        if k in kw:
            kw[k] = tuple(kw[k])
    return InnovationSpec(doc.kind, **kw)


def _spec_to_doc(spec: InnovationSpec) -> InnovationDoc:
    if spec.kind == "finite-pmf":
        return InnovationDoc(kind=spec.kind, values=list(spec.values), probs=list(spec.probs))
    if spec.kind == "gaussian":
        return InnovationDoc(kind=spec.kind, variance=spec.variance)
    if spec.kind == "u-level-composite":
        return InnovationDoc(kind=spec.kind, n_max=spec.n_max, eps=spec.eps)
    return InnovationDoc(kind=spec.kind)


def model_from_doc(doc: ModelDoc) -> FieldModel:
    channels = {name: _spec_from_doc(s) for name, s in doc.innovations.items()}
    if not channels and doc.variant != "coboundary":
        channels = {doc.channel: InnovationSpec.rademacher()}
    kernel = volterra = inner = cobo = None
    if doc.kernel is not None:
        kernel = Kernel(tuple((tuple(e.offset), e.value) for e in doc.kernel), doc.dimension)
    if doc.volterra is not None:
        volterra = VolterraCoeffs(tuple(((tuple(e.u), tuple(e.v)), e.value) for e in doc.volterra), doc.dimension)
    if doc.inner is not None:
        inner = model_from_doc(doc.inner)
    if doc.components is not None:
        parts = {k: model_from_doc(v) for k, v in doc.components.items()}
        cobo = CoboundarySpec(parts.get("m"), parts.get("m1"), parts.get("m2"), parts.get("y"))
    return FieldModel(doc.variant, doc.dimension, channels, kernel=kernel, volterra=volterra, inner=inner,
                      cobo=cobo, channel=doc.channel)


def model_to_doc(model: FieldModel, seed: int | None = None) -> ModelDoc:
    doc = ModelDoc(dimension=model.d, variant=model.variant, channel=model.channel, seed=seed,
                   innovations={k: _spec_to_doc(v) for k, v in model.channels.items()})
    if model.kernel is not None:
        doc.kernel = [KernelEntry(offset=list(j), value=a) for j, a in model.kernel.coeffs]
    if model.volterra is not None:
        doc.volterra = [VolterraEntry(u=list(u), v=list(v), value=a) for (u, v), a in model.volterra.coeffs]
    if model.inner is not None:
        doc.inner = model_to_doc(model.inner)
    if model.cobo is not None:
        doc.components = {k: model_to_doc(p) for k, p in model.cobo.parts() if p is not None}
    return doc


def parse_model(text: str, source: str = "<model>") -> tuple[FieldModel, int | None]:
    """Model and optional seed from YAML text."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{source}: malformed YAML: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: a model file must be a mapping")
    try:
        doc = ModelDoc.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"{source}: field '{loc}': {first['msg']}") from None
    try:
        return model_from_doc(doc), doc.seed
    except OrthofieldError as e:
        raise ConfigError(f"{source}: {e}") from None


def emit_model(model: FieldModel, seed: int | None = None) -> str:
    data = model_to_doc(model, seed).model_dump(exclude_none=True)
    return yaml.safe_dump(data, sort_keys=False)


def load_model(path: str | Path) -> tuple[FieldModel, int | None]:
    p = Path(path)
    return parse_model(p.read_text(), str(p))


def save_model(path: str | Path, model: FieldModel, seed: int | None = None) -> None:
    Path(path).write_text(emit_model(model, seed))
