"""Run configuration: one strict JSON document per experiment."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigurationError

EXPERIMENTS = ("identities", "carleman_sweep", "stability_sweep", "consistency", "reconstruct")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SineSpec(_Strict):
    """``const + amp·sin(k π x)``."""

    const: float = 0.0
    amp: float = 0.0
    k: int = Field(1, ge=1)

    def __call__(self, x):
        return self.const + self.amp * np.sin(self.k * np.pi * np.asarray(x, dtype=float))


class DataSpec(_Strict):
    """Initial state y0 ≡ c, y1 ≡ 0, no source, boundary values c·cos(ωt) at both ends."""

    c: float = 1.0
    omega: float = 1.0

    def continuous(self):
        from .wave import ContinuousData

        c, om = self.c, self.omega
        bc = lambda t: c * np.cos(om * np.asarray(t, dtype=float))  # noqa: E731
        return ContinuousData(y0=lambda x: c + 0.0 * x, g0=bc, g1=bc)


class WeightConfig(_Strict):
    x0: float = -0.5
    beta: float = 0.5
    lam: float = 2.0
    T: float = 1.0
    eps: Optional[float] = None
    eps_candidates: Optional[List[float]] = None
    eps_tol: float = Field(0.1, gt=0)
    sh_factors: List[float] = Field(default_factory=lambda: [0.5])
    eta: Optional[float] = None
    cfl: float = Field(0.125, gt=0, le=0.5)
    quadrature_order: int = Field(16, ge=2, le=64)
    kinds: List[Literal["low_mode", "high_mode", "random_smooth"]] = Field(
        default_factory=lambda: ["low_mode", "random_smooth", "high_mode"]
    )
    samples: int = Field(1, ge=1)

    @field_validator("sh_factors")
    @classmethod
    def _positive(cls, v):
        if not v or any(not (f > 0 and math.isfinite(f)) for f in v):
            raise ValueError("sh_factors must be a non-empty list of positive numbers")
        return v

    def candidates(self) -> List[float]:
        if self.eps_candidates is not None:
            return list(self.eps_candidates)
        return [10.0 ** (k / 8.0) for k in range(-48, 1)]


class SolverConfig(_Strict):
    T: float = Field(2.0, gt=0)
    cfl: float = Field(0.5, gt=0, le=0.5)
    N_ref: int = Field(1024, ge=8)


class OptimizerConfig(_Strict):
    m: float = Field(5.0, gt=0)
    tych_weight: float = Field(1.0, ge=0)
    max_iter: int = Field(300, ge=0)
    step_init: float = Field(0.1, gt=0)
    armijo_c: float = Field(1e-4, gt=0, lt=1)
    armijo_shrink: float = Field(0.5, gt=0, lt=1)
    max_backtracks: int = Field(40, ge=1)
    grad_tol: float = Field(1e-10, ge=0)
    filtering_delta: Optional[float] = Field(None, gt=0)

    def recon(self):
        from .inverse import ReconConfig

        return ReconConfig(**self.model_dump())


class InstanceConfig(_Strict):
    """Potentials and data shared by the inverse experiments."""

    p: SineSpec = SineSpec(const=1.0)
    q: SineSpec = SineSpec(const=1.0, amp=0.1, k=2)
    f: SineSpec = SineSpec(amp=1.0, k=1)
    data: DataSpec = DataSpec()
    q_true: SineSpec = SineSpec(const=1.0, amp=0.5, k=1)
    q_init: SineSpec = SineSpec(const=1.0)
    target: Literal["self", "reference"] = "self"
    noise_std: float = Field(0.0, ge=0)
    error_tol: Optional[float] = Field(None, gt=0)


class RunConfig(_Strict):
    experiment: Optional[Literal[EXPERIMENTS]] = None  # type: ignore[valid-type]
    grids: List[int]
    seed: int = Field(0, ge=0, lt=2**64)
    output_dir: str = "out"
    samples: int = Field(100, ge=1)
    weight: WeightConfig = WeightConfig()
    stability_weight: WeightConfig = WeightConfig(x0=-0.5, beta=0.9, lam=2.0, T=1.6, eps=0.1)
    solver: SolverConfig = SolverConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    instance: InstanceConfig = InstanceConfig()

    @field_validator("grids")
    @classmethod
    def _grids(cls, v):
        if not v:
            raise ValueError("grids must not be empty")
        if any(n < 1 for n in v):
            raise ValueError("every grid size N must be ≥ 1")
        if len(set(v)) != len(v):
            raise ValueError("grid sizes must be distinct")
        return sorted(v)

    @model_validator(mode="after")
    def _cross(self):
        if self.weight.eta is not None and not 0 < self.weight.eta < self.weight.T:
            raise ValueError("weight.eta must lie in (0, T)")
        return self


def load_config(path, experiment: Optional[str] = None, **overrides) -> RunConfig:
    """Read and validate a JSON config; raises ConfigurationError on any problem."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    return parse_config(raw, experiment, **overrides)


def parse_config(raw: dict, experiment: Optional[str] = None, **overrides) -> RunConfig:
    raw = dict(raw)
    for key, val in overrides.items():
        if val is not None:
            raw[key] = val
    if experiment is not None:
        declared = raw.get("experiment")
        if declared is not None and declared != experiment:
            raise ConfigurationError(f"config declares experiment {declared!r}, command is {experiment!r}")
        raw["experiment"] = experiment
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigurationError(str(exc)) from exc
