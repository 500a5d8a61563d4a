"""Run configuration: strict YAML parsing with line-anchored errors and a canonical form."""

from __future__ import annotations

import difflib
import hashlib
import os
from pathlib import Path
from typing import Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError

KINDS = ("clt-annealed", "clt-quenched", "functional", "gh-check", "coboundary", "counterexample",
         "verify-structure", "check-conditions")
NEEDS_SIZES = ("clt-annealed", "clt-quenched", "functional", "gh-check", "coboundary")


def available_threads() -> int:
    return os.cpu_count() or 1


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal[KINDS]
    model: str
    sizes: list[list[int]] = Field(default_factory=list)
    replicates: int = Field(10_000, ge=1)
    seed: Optional[int] = Field(None, ge=0)  # falls back to the model file seed, then 0
    pasts: list[int] = Field(default_factory=lambda: [0])
    out: str = "results"
    threads: int = Field(default_factory=available_threads, ge=1)
    format: Literal["csv", "json"] = "csv"
    # clt
    regime: Literal["diagonal", "rectangular"] = "diagonal"
    ks_threshold: Optional[float] = Field(None, gt=0, lt=1)
    acknowledge_unverified: bool = False
    dump_samples: bool = False
    # functional
    grid: Optional[list[list[str]]] = None
    t_edges: list[str] = Field(default_factory=lambda: ["0", "1/2", "1"])
    s_edges: list[str] = Field(default_factory=lambda: ["0", "1/2", "1"])
    coeffs: list[list[float]] = Field(default_factory=lambda: [[1.0, 0.0], [0.0, -1.0]])
    tightness_replicates: int = Field(0, ge=0)
    # gh-check
    qs: list[str] = Field(default_factory=lambda: ["1/4", "1/2", "1"])
    # counterexample
    ladder: list[int] = Field(default_factory=lambda: [1000, 10000])
    bs: list[float] = Field(default_factory=lambda: [1.0, 4.0, 16.0])
    probe_replicates: list[int] = Field(default_factory=lambda: [400, 20])
    control: Optional[str] = None
    control_replicates: list[int] = Field(default_factory=lambda: [20, 2])
    # check-conditions
    n_max: int = Field(6, ge=1)

    @field_validator("sizes")
    @classmethod
    def _positive_sizes(cls, v):
        for s in v:
            if not s or any(c <= 0 for c in s):
                raise ValueError(f"sizes must be non-empty lists of positive ints, got {s}")
        return v

    @field_validator("grid", "t_edges", "s_edges", "qs", mode="before")
    @classmethod
    def _rationals(cls, v):
        # rationals are kept as strings so "1/4" and 0.25 both survive a round trip
        if v is None:
            return v
        conv = lambda x: x if isinstance(x, str) else repr(x)  # noqa: E731
        return [[conv(c) for c in p] if isinstance(p, list) else conv(p) for p in v]

    @model_validator(mode="after")
    def _kind_fields(self):
        if self.kind in NEEDS_SIZES and not self.sizes:
            raise ValueError(f"experiment kind {self.kind!r} requires 'sizes'")
        if len(set(self.pasts)) != len(self.pasts):
            raise ValueError("pasts must be distinct")
        return self


def _key_lines(node, prefix=()) -> dict[tuple, int]:
    out: dict[tuple, int] = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = prefix + (k.value,)
            out[path] = k.start_mark.line + 1
            out.update(_key_lines(v, path))
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            path = prefix + (i,)
            out[path] = v.start_mark.line + 1
            out.update(_key_lines(v, path))
    return out


def _line_of(lines: dict, loc: tuple) -> int | None:
    loc = tuple(loc)
    while loc:
        if loc in lines:
            return lines[loc]
        loc = loc[:-1]
    return None


def parse_config(text: str, base_dir: str | Path | None = None, source: str = "<config>",
                 check_files: bool = True) -> RunConfig:
    """Validate run-config YAML; relative paths resolve against ``base_dir``."""
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"{source}: malformed YAML: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: line 1: config must be a mapping")
    lines = _key_lines(node)
    known = list(RunConfig.model_fields)
    for key in raw:
        if key not in known:
            hint = difflib.get_close_matches(str(key), known, n=1)
            extra = f"; did you mean '{hint[0]}'?" if hint else ""
            raise ConfigError(f"{source}: line {lines.get((key,), '?')}: unknown key '{key}'{extra}")
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as e:
        err = e.errors()[0]
        loc = tuple(err["loc"])
        where = ".".join(str(p) for p in loc) or "<root>"
        line = _line_of(lines, loc)
        at = f"line {line}: " if line else ""
        if err["type"] == "missing":
            raise ConfigError(f"{source}: {at}missing field '{where}'") from None
        raise ConfigError(f"{source}: {at}field '{where}': {err['msg']}") from None
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    updates = {"model": str((base / cfg.model).resolve()), "out": str((base / cfg.out).resolve())}
    if cfg.control is not None:
        updates["control"] = str((base / cfg.control).resolve())
    cfg = cfg.model_copy(update=updates)
    if check_files:
        for key in ("model", "control"):
            path = getattr(cfg, key)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{source}: line {lines.get((key,), '?')}: {key} file not found: {path}")
    return cfg


def load_config(path: str | Path, check_files: bool = True) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"{p}: cannot read config: {e}") from None
    return parse_config(text, p.parent, str(p), check_files)


def emit_config(cfg: RunConfig) -> str:
    """Canonical form: every field, declaration order, explicit defaults."""
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False, default_flow_style=None)


def apply_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Revalidated copy with the non-None overrides applied."""
    data = cfg.model_dump()
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        err = e.errors()[0]
        raise ConfigError(f"override '{'.'.join(map(str, err['loc']))}': {err['msg']}") from None


def config_hash(cfg: RunConfig) -> str:
    """Hash of everything that can change results (thread count and output location cannot)."""
    data = cfg.model_dump(mode="json", exclude={"threads", "out"})
    return hashlib.sha256(yaml.safe_dump(data, sort_keys=True).encode()).hexdigest()
