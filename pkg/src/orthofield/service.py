"""HTTP front end over the runner; the CLI talks to this app in-process or over the network."""

from __future__ import annotations

import json
from typing import Literal, Optional

from fastapi import FastAPI
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from .config import KINDS, apply_overrides, emit_config, parse_config
from .errors import ConfigError
from .io import json_text
from .modelfile import emit_model, parse_model
from .runner import EXIT_ERROR, run, simulate


class Overrides(BaseModel):
    model_config = ConfigDict(extra="forbid")

    out: Optional[str] = None
    threads: Optional[int] = Field(None, ge=1)
    seed: Optional[int] = Field(None, ge=0)
    format: Optional[Literal["csv", "json"]] = None


class RunRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    config: str = Field(description="run configuration as YAML text")
    base_dir: Optional[str] = Field(None, description="directory that relative paths in the config resolve against")
    source: str = "<config>"
    overrides: Overrides = Field(default_factory=Overrides)
    expect_kinds: Optional[list[str]] = Field(None, description="reject configs of any other kind")


class RunResponse(BaseModel):
    exit_code: int
    verdict: Optional[bool] = None
    summary: dict = Field(default_factory=dict)
    files: list[str] = Field(default_factory=list)
    manifest: Optional[str] = None
    error: Optional[str] = None


class ConfigResponse(BaseModel):
    canonical: Optional[str] = None
    error: Optional[str] = None


class ModelRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    text: str


app = FastAPI(title="orthofield", version=__version__)


def _prepare(req: RunRequest):
    cfg = parse_config(req.config, req.base_dir, req.source)
    if req.expect_kinds is not None and cfg.kind not in req.expect_kinds:
        raise ConfigError(f"{req.source}: kind '{cfg.kind}' not handled here (expected one of {req.expect_kinds})")
    return apply_overrides(cfg, **req.overrides.model_dump())


def _response(outcome) -> RunResponse:
    d = dict(outcome.__dict__)
    d["summary"] = json.loads(json_text(d["summary"]))  # numpy scalars and non-finite floats made JSON-safe
    return RunResponse(**d)


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.get("/kinds")
def kinds() -> list[str]:
    return list(KINDS)


@app.post("/config/validate", response_model=ConfigResponse)
def validate_config(req: RunRequest) -> ConfigResponse:
    try:
        return ConfigResponse(canonical=emit_config(_prepare(req)))
    except ConfigError as e:
        return ConfigResponse(error=str(e))


@app.post("/model/validate", response_model=ConfigResponse)
def validate_model(req: ModelRequest) -> ConfigResponse:
    try:
        model, seed = parse_model(req.text)
        return ConfigResponse(canonical=emit_model(model, seed))
    except ConfigError as e:
        return ConfigResponse(error=str(e))


@app.post("/run", response_model=RunResponse)
def run_experiment(req: RunRequest) -> RunResponse:
    try:
        cfg = _prepare(req)
    except ConfigError as e:
        return RunResponse(exit_code=EXIT_ERROR, error=str(e))
    return _response(run(cfg))


@app.post("/simulate", response_model=RunResponse)
def run_simulate(req: RunRequest) -> RunResponse:
    try:
        cfg = _prepare(req)
    except ConfigError as e:
        return RunResponse(exit_code=EXIT_ERROR, error=str(e))
    return _response(simulate(cfg))
