"""Strict experiment configuration (YAML or JSON), validated with pydantic."""
from __future__ import annotations

import difflib
import os
import typing
from pathlib import Path
from typing import List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigurationError
from .scenario import Scenario, build_scenario

CACHE_ENV = "SNSE_BASIS_CACHE"


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DomainBlock(_Strict):
    kind: Literal["PeriodicTorus", "DirichletSquare"]
    side_length: float = Field(1.0, gt=0)
    grid_points: int = 32

    @field_validator("grid_points")
    @classmethod
    def _even(cls, v):
        if v < 8 or v % 2:
            raise ValueError("grid_points must be even and >= 8")
        return v


class BasisBlock(_Strict):
    n_modes: int = Field(..., ge=1)
    n_ref: Optional[int] = None
    cache: Optional[str] = None


class FieldBlock(_Strict):
    preset: Optional[Literal["zero", "exp_spectrum", "steady_mode"]] = None
    coeffs: Optional[List[float]] = None
    amplitude: float = 1.0
    beta: float = 1.0
    index: int = 1

    @model_validator(mode="after")
    def _one_form(self):
        if self.preset is not None and self.coeffs is not None:
            raise ValueError("give either preset or coeffs, not both")
        return self


class PhysicsBlock(_Strict):
    viscosity: float = Field(..., gt=0)
    nonlinear: bool = True
    u0: FieldBlock = FieldBlock(preset="zero")
    f: FieldBlock = FieldBlock(preset="zero")


class NoiseBlock(_Strict):
    kind: Literal["none", "Additive", "DiagonalLinear", "SaturatedDiagonal", "AlphaGrowth"] = "none"
    sigma0: float = Field(1.0, ge=0)
    r: float = Field(2.0, ge=2)
    K: int = Field(1, ge=1)
    cap: float = Field(1.0, gt=0)
    alpha: float = 0.0
    project_to_level: bool = False

    @field_validator("alpha")
    @classmethod
    def _alpha(cls, v):
        if not 0 <= v < 1:
            raise ValueError("alpha must lie in [0,1)")
        return v


class IntegratorBlock(_Strict):
    dt: float = Field(..., gt=0)
    T: float = Field(..., gt=0)
    record_coeffs: bool = False
    dealias: bool = True


class StudyBlock(_Strict):
    levels: Optional[List[int]] = None
    eps: float = 0.25
    k: List[int] = [1, 2]
    variant: Literal["poly", "exp_bounded", "exp_alpha"] = "poly"
    K_scale: Optional[float] = Field(None, gt=0)
    delta: Optional[float] = Field(None, gt=0)
    n_samples: int = Field(200, ge=30)
    T_list: Optional[List[float]] = None

    @field_validator("eps")
    @classmethod
    def _eps(cls, v):
        if not 0 < v < 1:
            raise ValueError("eps must lie in (0,1)")
        return v


class CheckBlock(_Strict):
    n_paths: int = Field(10_000, ge=1000)
    steps: int = Field(100, ge=1)
    dt: float = Field(0.01, gt=0)
    random_pairs: int = Field(100, ge=1)
    lipschitz_samples: int = Field(1000, ge=100)


class ExperimentConfig(_Strict):
    seed: int = Field(0, ge=0, lt=2 ** 64)
    domain: DomainBlock
    basis: BasisBlock
    physics: PhysicsBlock
    noise: NoiseBlock = NoiseBlock()
    integrator: IntegratorBlock
    study: StudyBlock = StudyBlock()
    check: CheckBlock = CheckBlock()

    @model_validator(mode="after")
    def _semantics(self):
        n_modes = self.basis.n_modes
        n_ref = self.basis.n_ref if self.basis.n_ref is not None else n_modes
        if n_ref > n_modes:
            raise ValueError(f"basis.n_ref={n_ref} exceeds basis.n_modes={n_modes}")
        if self.integrator.dt > self.integrator.T:
            raise ValueError("integrator.dt exceeds integrator.T")
        if self.noise.kind != "none" and self.noise.K > n_modes:
            raise ValueError(f"noise.K={self.noise.K} exceeds basis.n_modes={n_modes}")
        levels = self.study.levels
        if levels:
            if any(b <= a for a, b in zip(levels, levels[1:])) or levels[0] < 1:
                raise ValueError("study.levels must be positive and strictly ascending")
            if levels[-1] > n_ref:
                raise ValueError(f"study.levels exceed basis.n_ref={n_ref}")
            if self.noise.kind != "none" and self.noise.K > levels[0] and not self.noise.project_to_level:
                raise ValueError(
                    f"noise.K={self.noise.K} exceeds the smallest study level {levels[0]}; "
                    "coupled levels must all see the driven modes (or set noise.project_to_level)")
        want = {"exp_bounded": "SaturatedDiagonal", "exp_alpha": "AlphaGrowth"}.get(self.study.variant)
        if want is not None and self.noise.kind != want:
            raise ValueError(f"study.variant {self.study.variant} requires {want} noise")
        return self

    @property
    def n_ref(self) -> int:
        return self.basis.n_ref if self.basis.n_ref is not None else self.basis.n_modes

    def levels(self) -> list[int]:
        return list(self.study.levels) if self.study.levels else [self.n_ref]

    def to_dict(self) -> dict:
        return self.model_dump(mode="json")


# --------------------------------------------------------------------------
# parsing


def _block_class(loc) -> type | None:
    cls = ExperimentConfig
    for part in loc:
        if not (isinstance(cls, type) and issubclass(cls, BaseModel)) or part not in cls.model_fields:
            return None
        ann = cls.model_fields[part].annotation
        args = [a for a in typing.get_args(ann) if a is not type(None)]
        cls = args[0] if args and typing.get_origin(ann) is typing.Union else ann
    return cls


def _line_of(node, loc) -> int | None:
    line = None if node is None else node.start_mark.line + 1
    for part in loc:
        if isinstance(node, yaml.MappingNode):
            nxt = None
            for k, v in node.value:
                if k.value == part:
                    line, nxt = k.start_mark.line + 1, v
                    break
            node = nxt
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            node = node.value[part]
            line = node.start_mark.line + 1
        else:
            break
    return line


def _describe(err: dict, root) -> str:
    loc = tuple(p for p in err["loc"] if not (isinstance(p, str) and p.startswith("function-")))
    path = ".".join(str(p) for p in loc) or "<root>"
    line = _line_of(root, loc)
    where = f"{path}" + (f" (line {line})" if line else "")
    msg = err["msg"]
    if err["type"] == "extra_forbidden":
        parent = _block_class(loc[:-1])
        msg = f"unknown key {loc[-1]!r}"
        if parent is not None:
            close = difflib.get_close_matches(str(loc[-1]), list(parent.model_fields), n=1)
            if close:
                msg += f"; did you mean {close[0]!r}?"
    elif msg.startswith("Value error, "):
        msg = msg[len("Value error, "):]
    return f"{where}: {msg}"


def validate_config(data: dict, root_node=None) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        errs = exc.errors()
        # an unknown key usually explains a missing one, so report it first
        errs = sorted(errs, key=lambda e: e["type"] != "extra_forbidden")
        raise ConfigurationError(_describe(errs[0], root_node)) from None


def parse_config(path) -> ExperimentConfig:
    """Load and validate a YAML/JSON config; first error reported with key path and line."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    text = path.read_text()
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: not valid YAML/JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return validate_config(data, root)


def cache_dir_for(cfg: ExperimentConfig):
    return cfg.basis.cache or os.environ.get(CACHE_ENV) or None


def scenario_from_config(cfg: ExperimentConfig, basis=None) -> Scenario:
    d = cfg.to_dict()
    noise = d["noise"] if cfg.noise.kind != "none" else None
    physics = dict(d["physics"])
    for key in ("u0", "f"):
        physics[key] = {k: v for k, v in physics[key].items() if v is not None}
    return build_scenario(d["domain"], cfg.basis.n_modes, physics, noise, d["integrator"],
                          cache_dir=cache_dir_for(cfg), basis=basis)
