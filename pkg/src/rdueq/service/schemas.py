"""Request and response bodies for the service routes."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict

from ..config import RunConfig


class StrategyPayload(BaseModel):
    """Grid form of a deterministic strategy: pi[i] applies on [t[i], t[i+1]).

    y, when present, is the remaining-variance path on the same grid.
    """

    model_config = ConfigDict(extra="forbid")

    t: list[float]
    pi: list[list[float]]
    T: float
    y: list[float] | None = None
    eta: float | None = None


class ClassifyRequest(BaseModel):
    config: RunConfig


class SolveRequest(BaseModel):
    config: RunConfig
    eta: float | None = None
    maximal: bool = False


class EtaStarRequest(BaseModel):
    config: RunConfig


class OptimizeRequest(BaseModel):
    config: RunConfig


class VerifyRequest(BaseModel):
    config: RunConfig
    strategy: StrategyPayload


class ClassifyResponse(BaseModel):
    case: str
    label: str
    eta_star: float | None = None
    flags: list[str] = []
    diagnostics: dict = {}
    strategy: StrategyPayload | None = None


class SolveResponse(BaseModel):
    eta: float
    terminal: float
    value0: float
    strategy: StrategyPayload


class EtaStarResponse(BaseModel):
    eta_star: float
    converged: bool
    ladder: list[float]
    y0_values: list[float]
    extrapolated: float | None = None
    decay_exponent: float | None = None
    bisect: float | None = None


class OptimizeResponse(BaseModel):
    eta_opt: float
    eta_star: float
    j_opt: float
    pi0: list[float]
    curve_eta: list[float]
    curve_j: list[float]
    strategy: StrategyPayload


class FailureRecord(BaseModel):
    t: float
    kappa: list[float] | None = None
    slope: float


class VerifyResponse(BaseModel):
    passed: bool
    n_times: int
    n_complete: int
    max_slope: float | None = None
    modes: list[str]
    failures: list[FailureRecord]
    notes: list[str] = []
