"""Market primitives: constant-coefficient market, strategies, ODE solutions.

The market has n risky assets driven by a d-dimensional Brownian motion,
constant interest rate r, excess returns mu and volatility matrix sigma
(n x d) with sigma sigma^T positive definite. theta = |sigma^-1-style
market price of risk| enters every solver through theta^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


def _forward_sub(L: np.ndarray, b: np.ndarray) -> np.ndarray:
    # L lower triangular
    n = L.shape[0]
    y = np.zeros(n)
    for i in range(n):
        y[i] = (b[i] - L[i, :i] @ y[:i]) / L[i, i]
    return y


def _backward_sub(L: np.ndarray, y: np.ndarray) -> np.ndarray:
    # solves L^T x = y
    n = L.shape[0]
    x = np.zeros(n)
    for i in range(n - 1, -1, -1):
        x[i] = (y[i] - L[i + 1:, i] @ x[i + 1:]) / L[i, i]
    return x


@dataclass(frozen=True)
class MarketParams:
    """Constant market coefficients on [0, T].

    mu is the vector of excess returns (drift minus r), sigma the n x d
    volatility matrix. sigma sigma^T must be positive definite; its Cholesky
    factor is computed once at construction and reused by every solve.
    """

    r: float
    mu: np.ndarray
    sigma: np.ndarray
    T: float
    ssT: np.ndarray = field(init=False, repr=False)
    chol: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.ndim == 1:
            sigma = sigma.reshape(1, -1)
        if mu.ndim != 1 or sigma.ndim != 2:
            raise ConfigError("mu must be a vector and sigma a matrix")
        n, d = sigma.shape
        if mu.shape[0] != n:
            raise ConfigError(f"mu has {mu.shape[0]} entries but sigma has {n} rows")
        if not (self.T > 0):
            raise ConfigError(f"horizon T must be positive, got {self.T}")
        ssT = sigma @ sigma.T
        try:
            chol = np.linalg.cholesky(ssT)
        except np.linalg.LinAlgError:
            raise ConfigError("sigma sigma^T is not positive definite") from None
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "ssT", ssT)
        object.__setattr__(self, "chol", chol)

    @property
    def n(self) -> int:
        return self.sigma.shape[0]

    @property
    def d(self) -> int:
        return self.sigma.shape[1]

    def theta(self) -> float:
        """Market price of risk magnitude: sqrt(mu^T (sigma sigma^T)^-1 mu)."""
        y = _forward_sub(self.chol, self.mu)
        return float(np.sqrt(y @ y))

    def ssT_inv_mu(self) -> np.ndarray:
        """(sigma sigma^T)^-1 mu via the stored Cholesky factor."""
        return _backward_sub(self.chol, _forward_sub(self.chol, self.mu))


@dataclass(frozen=True)
class Strategy:
    """Deterministic strategy, piecewise constant and right continuous.

    tgrid is increasing inside [0, T]; values[i] applies on
    [tgrid[i], tgrid[i+1]). Before tgrid[0] the first value applies.
    Y, when present, is the variance-to-go at the nodes as claimed by the
    producer; verification cross-checks it against the strategy's own
    suffix variance before trusting it.
    """

    tgrid: np.ndarray
    values: np.ndarray
    T: float
    kind: str = "grid"
    Y: np.ndarray | None = None

    def __post_init__(self):
        tg = np.atleast_1d(np.asarray(self.tgrid, dtype=float))
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals.reshape(-1, 1)
        if tg.shape[0] != vals.shape[0]:
            raise ConfigError("tgrid and values length mismatch")
        if tg.shape[0] == 0:
            raise ConfigError("strategy needs at least one node")
        if np.any(np.diff(tg) <= 0):
            raise ConfigError("tgrid must be strictly increasing")
        if tg[0] < 0 or tg[-1] > self.T:
            raise ConfigError("tgrid must lie within [0, T]")
        object.__setattr__(self, "tgrid", tg)
        object.__setattr__(self, "values", vals)
        if self.Y is not None:
            Y = np.atleast_1d(np.asarray(self.Y, dtype=float))
            if Y.shape != (tg.shape[0],):
                raise ConfigError("Y and tgrid length mismatch")
            if np.any(Y < 0) or not np.all(np.isfinite(Y)):
                raise ConfigError("Y must be finite and nonnegative")
            object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def constant(self) -> bool:
        if self.values.shape[0] == 1:
            return True
        return bool(np.all(self.values == self.values[0]))

    def at(self, t: float) -> np.ndarray:
        i = int(np.searchsorted(self.tgrid, t, side="right")) - 1
        return self.values[max(i, 0)]

    def at_many(self, t: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.tgrid, np.asarray(t, float), side="right") - 1
        return self.values[np.maximum(idx, 0)]

    @staticmethod
    def from_constant(vec: np.ndarray, T: float, kind: str = "closed-form") -> "Strategy":
        vec = np.atleast_1d(np.asarray(vec, dtype=float))
        return Strategy(np.array([0.0]), vec.reshape(1, -1), T, kind=kind)


def zero_strategy(market: MarketParams) -> Strategy:
    return Strategy.from_constant(np.zeros(market.n), market.T)


def merton_strategy(market: MarketParams, gamma: float) -> Strategy:
    """Classical constant strategy (sigma sigma^T)^-1 mu / (1 - gamma)."""
    if gamma >= 1:
        raise ConfigError("merton strategy needs gamma < 1")
    return Strategy.from_constant(market.ssT_inv_mu() / (1.0 - gamma), market.T)


@dataclass
class OdeSolution:
    """Solution path of the Y ODE on an ascending uniform grid over [0, T].

    eta = Y(0); terminal = Y(T) as integrated (0 for exact solutions of the
    singular problem, epsilon for regularized backward solves). tail_t/tail_Y
    hold the solver's substep points inside the terminal boundary layer so
    integrals against the path can resolve the sqrt(T-t) structure there.
    reached_floor marks forward paths clamped at the positivity floor.
    """

    t: np.ndarray
    Y: np.ndarray
    eta: float
    terminal: float
    reached_floor: bool = False
    positive_on_interior: bool = True
    tail_t: np.ndarray | None = None
    tail_Y: np.ndarray | None = None

    def value(self, tq: float) -> float:
        """Linear interpolation; the tail grid refines near T when present."""
        if self.tail_t is not None and len(self.tail_t) and tq >= self.tail_t[0]:
            return float(np.interp(tq, self.tail_t, self.tail_Y))
        return float(np.interp(tq, self.t, self.Y))
