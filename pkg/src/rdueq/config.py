"""Run configuration: JSON schema, loading, and problem construction.

One RunConfig fans out to every entry point (CLI commands and service
routes). The weighting block decides the scenario: a `beta` key selects the
time-dependent family on the market horizon, otherwise the constant-`nu`
form gives an autonomous problem.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .autonomous import AutonomousProblem
from .errors import ConfigError
from .hfun import HFunction, closed_phi_h, quadrature_h
from .model import MarketParams
from .timevar import TimevarProblem
from .weighting import PhiFamilyParams, WeightingFunction, identity_weighting, phi_family


class MarketBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    r: float = 0.0
    mu: list[float]
    sigma: list[list[float]]
    T: float = Field(gt=0)


class UtilityBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    gamma: float


class WeightingBlock(BaseModel):
    """`lambda`/`nu` give the constant tilt; `beta` switches to the
    time-dependent tilt nu(t) = -beta*sqrt(T - t)."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    kind: Literal["phi", "identity"] = "phi"
    lam: float = Field(1.0, alias="lambda", gt=0)
    nu: float = 0.0
    beta: float | None = None


class SolverBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    time_steps: int = Field(20000, ge=100)
    ode_grid: int = Field(2001, ge=11)
    eta_grid: int = Field(201, ge=5)
    search_time_steps: int = Field(4000, ge=100)
    eps_ladder: list[float] | None = None
    h_backend: Literal["closed", "quadrature"] = "closed"
    zero_tol: float = Field(1e-7, gt=0)
    check_points: int = Field(50, ge=1)


class OutputBlock(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format: Literal["csv", "json"] = "csv"
    path: str | None = None


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    market: MarketBlock
    utility: UtilityBlock
    weighting: WeightingBlock = WeightingBlock()
    solver: SolverBlock = SolverBlock()
    output: OutputBlock = OutputBlock()


def load_config(path: str | Path) -> RunConfig:
    """Read and validate a JSON config file."""
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return parse_config(data)


def parse_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def build_market(cfg: RunConfig) -> MarketParams:
    m = cfg.market
    return MarketParams(r=m.r, mu=np.asarray(m.mu, dtype=float),
                        sigma=np.asarray(m.sigma, dtype=float), T=m.T)


def _phi_params(cfg: RunConfig) -> PhiFamilyParams:
    w = cfg.weighting
    if w.kind == "identity":
        return PhiFamilyParams(lam=1.0, nu=0.0)
    if w.beta is not None:
        if w.nu != 0.0:
            raise ConfigError("give either nu or beta in the weighting block, not both")
        return PhiFamilyParams(lam=w.lam, beta=w.beta, horizon=cfg.market.T)
    return PhiFamilyParams(lam=w.lam, nu=w.nu)


def build_weighting(cfg: RunConfig) -> WeightingFunction:
    if cfg.weighting.kind == "identity":
        return identity_weighting()
    return phi_family(_phi_params(cfg))


def build_h(cfg: RunConfig) -> HFunction:
    params = _phi_params(cfg)
    if cfg.solver.h_backend == "closed":
        return closed_phi_h(params)
    return quadrature_h(phi_family(params), zero_tol=cfg.solver.zero_tol)


def build_problem(cfg: RunConfig) -> AutonomousProblem | TimevarProblem:
    """Market + utility + h, routed by whether the weighting varies in time."""
    market = build_market(cfg)
    gamma = cfg.utility.gamma
    h = build_h(cfg)
    if h.time_dependent:
        return TimevarProblem(market=market, gamma=gamma, h=h)
    return AutonomousProblem(market=market, gamma=gamma, h=h)
