"""Probability weighting functions and their shape taxonomy.

The workhorse family composes the normal CDF with an affine map of the normal
quantile: w(t,p) = Phi((Phi^-1(p) + nu(t)) / lambda). Constant nu gives the
time-invariant members; nu(t) = -beta*sqrt(horizon - t) gives the
time-dependent members used throughout the time-varying theory. lambda
controls curvature (inverse-S above 1, S below 1), nu controls the
optimism/pessimism tilt.

Every weighting carries a kernel kernel_z(t, z) = w'(t, Phi(z)) * phi(z),
the density of the weighted pull-back to z-space. For the Phi family it is
the N(-nu, lambda^2) density, which the h-function quadrature exploits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError
from .normal import norm_cdf, norm_cdf_vec, norm_pdf, norm_ppf

_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class PhiFamilyParams:
    """Parameters of the quantile-affine normal weighting family.

    Exactly one of (nu, beta) drives the tilt: a constant nu, or the
    time-dependent nu(t) = -beta*sqrt(horizon - t) which needs horizon set.
    """

    lam: float
    nu: float = 0.0
    beta: float | None = None
    horizon: float | None = None

    def __post_init__(self):
        if not (self.lam > 0):
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        if self.beta is not None:
            if self.horizon is None or not (self.horizon > 0):
                raise ConfigError("beta-form weighting needs a positive horizon")
            if self.nu != 0.0:
                raise ConfigError("give either nu or beta, not both")

    @property
    def time_dependent(self) -> bool:
        return self.beta is not None

    def nu_at(self, t: float) -> float:
        if self.beta is None:
            return self.nu
        s = self.horizon - t
        if s < 0:
            raise ConfigError(f"t={t} beyond horizon {self.horizon}")
        return -self.beta * math.sqrt(s)


@dataclass(frozen=True)
class WeightingFunction:
    """A (possibly time-dependent) probability weighting.

    eval/deriv take (t, p); kernel_z takes (t, z) with z an array or scalar
    and must integrate to 1 over the real line for each fixed t.
    """

    kind: str
    eval: Callable[[float, float], float]
    deriv: Callable[[float, float], float]
    kernel_z: Callable[[float, np.ndarray], np.ndarray]
    time_dependent: bool = False
    horizon: float | None = None
    params: PhiFamilyParams | None = None


def phi_family(params: PhiFamilyParams) -> WeightingFunction:
    lam = params.lam

    def _eval(t: float, p: float) -> float:
        if p <= 0.0:
            return 0.0
        if p >= 1.0:
            return 1.0
        return norm_cdf((norm_ppf(p) + params.nu_at(t)) / lam)

    def _deriv(t: float, p: float) -> float:
        if not (0.0 < p < 1.0):
            raise ConfigError("w' defined on the open interval (0,1)")
        z = norm_ppf(p)
        u = (z + params.nu_at(t)) / lam
        # phi(u) / (lam * phi(z)), written in log form to survive the tails
        return math.exp(0.5 * z * z - 0.5 * u * u) / lam

    def _kernel(t: float, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        u = (z + params.nu_at(t)) / lam
        return np.exp(-0.5 * u * u) / (lam * _SQRT_2PI)

    return WeightingFunction(
        kind="phi-family",
        eval=_eval,
        deriv=_deriv,
        kernel_z=_kernel,
        time_dependent=params.time_dependent,
        horizon=params.horizon,
        params=params,
    )


def identity_weighting() -> WeightingFunction:
    def _eval(t: float, p: float) -> float:
        return float(min(max(p, 0.0), 1.0))

    def _deriv(t: float, p: float) -> float:
        if not (0.0 < p < 1.0):
            raise ConfigError("w' defined on the open interval (0,1)")
        return 1.0

    def _kernel(t: float, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.exp(-0.5 * z * z) / _SQRT_2PI

    return WeightingFunction(
        kind="identity", eval=_eval, deriv=_deriv, kernel_z=_kernel,
        params=PhiFamilyParams(lam=1.0, nu=0.0),
    )


def dual_eval(w: WeightingFunction, t: float, p: float) -> float:
    """Dual weighting wbar(p) = 1 - w(1-p)."""
    return 1.0 - w.eval(t, 1.0 - p)


_SHAPE_TOL = 1e-10


def classify_shape(w: WeightingFunction, t: float = 0.0) -> str:
    """Tag the curvature pattern of w(t, .) on (0,1).

    Returns one of identity, concave, convex, inverse-S, S.
    Phi-family members are classified from (lambda, nu) directly; anything
    else is classified from the sign pattern of w'' sampled on a grid.
    """
    if w.params is not None:
        lam, nu = w.params.lam, w.params.nu_at(t)
        if abs(lam - 1.0) <= _SHAPE_TOL:
            if abs(nu) <= _SHAPE_TOL:
                return "identity"
            return "concave" if nu > 0 else "convex"
        return "inverse-S" if lam > 1.0 else "S"

    p = np.linspace(0.0, 1.0, 2003)[1:-1]
    d = np.array([w.deriv(t, pi) for pi in p])
    if np.max(np.abs(d - 1.0)) <= _SHAPE_TOL:
        return "identity"
    g = np.diff(d)
    g = g[np.abs(g) > _SHAPE_TOL * max(1.0, float(np.max(np.abs(d))))]
    if len(g) == 0:
        return "identity"
    if np.all(g < 0):
        return "concave"  # w' decreasing
    if np.all(g > 0):
        return "convex"
    # one sign change: decreasing then increasing is inverse-S (steep at both ends)
    first_up = int(np.argmax(g > 0))
    if np.all(g[first_up:] > 0) and first_up > 0:
        return "inverse-S"
    first_down = int(np.argmax(g < 0))
    if np.all(g[first_down:] < 0) and first_down > 0:
        return "S"
    return "mixed"


@dataclass
class Assumption1Report:
    passed: bool
    c: float
    alpha: float
    endpoint_ok: bool
    monotone_ok: bool
    violations: list = field(default_factory=list)
    worst_ratio: float = 0.0


def validate_assumption1(
    w: WeightingFunction,
    t: float = 0.0,
    c: float | None = None,
    alpha: float | None = None,
    n_grid: int = 4001,
) -> Assumption1Report:
    """Check the density-envelope condition w'(p) <= c [p^a + (1-p)^a].

    alpha must lie in (-1, 0). When c or alpha is omitted, searches a small
    alpha grid and takes the smallest sup ratio as the certificate, so the
    report then states the (c, alpha) pair under which the bound holds.
    """
    p = (np.arange(1, n_grid + 1)) / (n_grid + 1.0)
    # push extra resolution into the tails where the envelope binds
    tails = np.concatenate([10.0 ** np.arange(-12, -3.0), 1.0 - 10.0 ** np.arange(-12, -3.0)])
    p = np.unique(np.concatenate([p, tails]))
    d = np.array([w.deriv(t, pi) for pi in p])

    endpoint_ok = abs(w.eval(t, 0.0)) <= 1e-12 and abs(w.eval(t, 1.0) - 1.0) <= 1e-12
    monotone_ok = bool(np.all(d > 0))

    def sup_ratio(a: float) -> float:
        env = p ** a + (1.0 - p) ** a
        return float(np.max(d / env))

    if alpha is None:
        best_a, best_c = None, math.inf
        for a in np.linspace(-0.05, -0.95, 19):
            s = sup_ratio(a)
            if s < best_c:
                best_a, best_c = float(a), s
        alpha_used = best_a
        c_used = c if c is not None else best_c * (1.0 + 1e-9)
    else:
        if not (-1.0 < alpha < 0.0):
            raise ConfigError(f"alpha must lie in (-1,0), got {alpha}")
        alpha_used = alpha
        c_used = c if c is not None else sup_ratio(alpha) * (1.0 + 1e-9)

    env = p ** alpha_used + (1.0 - p) ** alpha_used
    ratio = d / (c_used * env)
    bad = np.where(ratio > 1.0 + 1e-12)[0]
    violations = [(float(p[i]), float(d[i]), float(c_used * env[i])) for i in bad[:20]]
    passed = endpoint_ok and monotone_ok and len(bad) == 0 and math.isfinite(c_used)
    return Assumption1Report(
        passed=passed,
        c=float(c_used),
        alpha=float(alpha_used),
        endpoint_ok=endpoint_ok,
        monotone_ok=monotone_ok,
        violations=violations,
        worst_ratio=float(np.max(ratio)),
    )


def kernel_grid(w: WeightingFunction, t: float, z: np.ndarray) -> np.ndarray:
    """kernel_z evaluated defensively through the generic (eval, deriv) pair.

    Used by tests to cross-check the fused kernel closures.
    """
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    for i, zi in enumerate(z.ravel()):
        out.ravel()[i] = w.deriv(t, norm_cdf(zi)) * norm_pdf(zi)
    return out


# re-export for callers composing their own kernels
__all__ = [
    "PhiFamilyParams",
    "WeightingFunction",
    "phi_family",
    "identity_weighting",
    "dual_eval",
    "classify_shape",
    "Assumption1Report",
    "validate_assumption1",
    "kernel_grid",
    "norm_cdf_vec",
]
