"""Experiment configuration: YAML in, validated model out.

Example::

    experiment: simulate
    family:
      kind: power_law
      alpha: 0.5
      scale: 0.1
    n_grid: [100, 1000]
    replicates: 1000
    master_seed: 7

Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .generators import DEFAULT_THRESHOLD

EXPERIMENTS = ("moments", "simulate", "bounds", "karlin", "consistency", "inconsistency")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PowerLawFamily(_Strict):
    kind: Literal["power_law"] = "power_law"
    alpha: float = Field(gt=0.0, lt=1.0)
    scale: float = Field(gt=0.0, le=1.0)
    log_exponent: float = 0.0
    truncation_threshold: float = Field(default=DEFAULT_THRESHOLD, gt=0.0)


class GeometricFamily(_Strict):
    kind: Literal["geometric"] = "geometric"
    q: float = Field(gt=0.0, lt=1.0)
    truncation_threshold: float = Field(default=DEFAULT_THRESHOLD, gt=0.0)


class FiniteUniformFamily(_Strict):
    kind: Literal["finite_uniform"] = "finite_uniform"
    J: int = Field(ge=1)
    p: float = Field(gt=0.0, le=1.0)


class GammaProcessFamily(_Strict):
    kind: Literal["gamma_process"] = "gamma_process"
    jump_truncation: float = Field(default=1e-10, gt=0.0)
    tilt: int = Field(default=0, ge=0)


Family = Annotated[
    Union[PowerLawFamily, GeometricFamily, FiniteUniformFamily, GammaProcessFamily],
    Field(discriminator="kind"),
]


class ExperimentConfig(_Strict):
    experiment: Literal["moments", "simulate", "bounds", "karlin", "consistency", "inconsistency"]
    family: Family
    n_grid: list[int] = Field(min_length=1)
    replicates: int = Field(default=1000, ge=1)
    master_seed: int = Field(default=0, ge=0, lt=2**64)
    R: int = Field(default=10, ge=1)
    epsilon: float = Field(default=0.1, gt=0.0)
    x_grid: Optional[list[float]] = None
    k_grid: Optional[list[float]] = None
    r_values: list[int] = Field(default_factory=lambda: [1, 2], min_length=1)
    control: Optional[PowerLawFamily] = None
    output_prefix: Optional[str] = Field(default=None, pattern=r"^[A-Za-z0-9_.-]+$")

    @field_validator("n_grid")
    @classmethod
    def _increasing(cls, v: list[int]) -> list[int]:
        if v[0] < 1 or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("must be strictly increasing positive integers")
        return v

    @field_validator("x_grid", "k_grid")
    @classmethod
    def _grid(cls, v: Optional[list[float]]) -> Optional[list[float]]:
        if v is not None and (not v or v[0] < 0 or any(b <= a for a, b in zip(v, v[1:]))):
            raise ValueError("must be a non-empty, non-negative, strictly increasing list")
        return v

    @field_validator("r_values")
    @classmethod
    def _rs(cls, v: list[int]) -> list[int]:
        if any(r < 1 for r in v):
            raise ValueError("every r must be >= 1")
        return v

    @model_validator(mode="after")
    def _per_experiment(self) -> "ExperimentConfig":
        kind = self.family.kind
        if self.experiment == "karlin" and kind != "power_law":
            raise ValueError("family: karlin needs a power_law family")
        if self.experiment == "inconsistency":
            if kind != "gamma_process":
                raise ValueError("family: inconsistency needs a gamma_process family")
            if not self.epsilon < 1.0 / 6.0:
                raise ValueError("epsilon: must lie in (0, 1/6) for inconsistency")
            if self.replicates < 100:
                raise ValueError("replicates: inconsistency needs at least 100 prior draws")
        if self.experiment == "bounds" and self.n_grid[0] <= 2:
            raise ValueError("n_grid: bounds need every n > 2")
        if self.control is not None and self.experiment != "inconsistency":
            raise ValueError("control: only used by the inconsistency experiment")
        return self

    @property
    def stem(self) -> str:
        return self.output_prefix or self.experiment

    def digest(self) -> str:
        blob = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _format_error(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "config"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_error(err)) from None


def loads(text: str) -> ExperimentConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"config: not valid YAML ({err})") from None
    return parse_config(data if data is not None else {})


def load(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"config: cannot read {path} ({err.strerror})") from None
    return loads(text)


def dumps(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)
