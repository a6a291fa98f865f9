"""Time-invariant weighting: autonomous ODE, G-transform, classification.

With a time-invariant h the equilibrium ODE for Y(t) = Pi(t) is autonomous:

    Y' = -theta^2 / drift_factor(Y)^2,   Y(T) = 0,

where drift_factor(y) = 1 + h'(-gamma sqrt(y)) / (h(-gamma sqrt(y)) sqrt(y)),
with the y -> 0 limit 1 - gamma h''(0) when h'(0) = 0. Instead of stepping
the ODE, integrate the separated form: G(y) = int_0^y drift_factor(z)^2 dz
satisfies G(Y(t)) = theta^2 (T - t), so Y is recovered by inverting G.

Existence routes on the sign of h'(0), on mu, and on whether G climbs past
theta^2 T before drift_factor turns non-positive (threshold y1, infinite for
gamma <= 0 by convexity of h).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, NumericsError
from .hfun import HFunction
from .model import MarketParams, OdeSolution, Strategy, zero_strategy

_Y_FLOOR = 1e-12


@dataclass(frozen=True)
class AutonomousProblem:
    market: MarketParams
    h: HFunction
    gamma: float

    def __post_init__(self):
        if self.gamma >= 1:
            raise ConfigError(f"gamma must be < 1, got {self.gamma}")
        if self.h.time_dependent:
            raise ConfigError("autonomous solver needs a time-invariant h")


def drift_factor(problem: AutonomousProblem, y: float) -> float:
    """The bracket 1 + h_x(-gamma sqrt(y)) / (h(-gamma sqrt(y)) sqrt(y)).

    For y at or below the floor the h'(0)=0 limit 1 - gamma h''(0) is used;
    with h'(0) != 0 the bracket diverges there and the limit does not apply.
    """
    h = problem.h
    if y < 0:
        raise DomainError(f"y must be nonnegative, got {y}")
    if y <= _Y_FLOOR:
        return 1.0 - problem.gamma * h.dx(0.0, 0.0, 2)
    ry = math.sqrt(y)
    x = -problem.gamma * ry
    return 1.0 + h.dx(0.0, x, 1) / (h.eval(0.0, x) * ry)


def _drift_factor_many(problem: AutonomousProblem, y: np.ndarray) -> np.ndarray:
    h = problem.h
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    small = y <= _Y_FLOOR
    if np.any(small):
        out[small] = 1.0 - problem.gamma * h.dx(0.0, 0.0, 2)
    if np.any(~small):
        ry = np.sqrt(y[~small])
        x = -problem.gamma * ry
        out[~small] = 1.0 + h.dx_many(0.0, x, 1) / (h.eval_many(0.0, x) * ry)
    return out


def _require_flat_slope(problem: AutonomousProblem):
    hp0 = problem.h.dx(0.0, 0.0, 1)
    if abs(hp0) > problem.h.zero_tol:
        raise DomainError(
            f"G-transform needs h'(0)=0 within tolerance {problem.h.zero_tol}, got {hp0}"
        )


def _adaptive_simpson(f, a: float, b: float, tol: float, max_depth: int = 48) -> float:
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        if depth <= 0:
            return left + right
        if abs(left + right - whole) <= 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return (
            rec(a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
            + rec(m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        )

    return rec(a, b, fa, fm, fb, whole, tol, max_depth)


def g_transform(problem: AutonomousProblem, y: float, tol: float = 1e-12) -> float:
    """G(y) = int_0^y drift_factor(z)^2 dz by adaptive Simpson."""
    _require_flat_slope(problem)
    if y < 0:
        raise DomainError(f"y must be nonnegative, got {y}")
    if y == 0.0:
        return 0.0
    f = lambda z: drift_factor(problem, z) ** 2
    return _adaptive_simpson(f, 0.0, y, tol * max(1.0, y))


class _GTable:
    """Cumulative G over a growing y-ladder so repeated inversions stay cheap."""

    def __init__(self, problem: AutonomousProblem, tol: float = 1e-13):
        _require_flat_slope(problem)
        self.problem = problem
        self.tol = tol
        self.f = lambda z: drift_factor(problem, z) ** 2
        self.y_nodes = [0.0]
        self.g_nodes = [0.0]

    def _extend_to(self, y_target: float):
        while self.y_nodes[-1] < y_target:
            lo = self.y_nodes[-1]
            hi = max(lo * 1.5, 1e-6)
            seg = _adaptive_simpson(self.f, lo, hi, self.tol * max(1.0, hi - lo))
            self.y_nodes.append(hi)
            self.g_nodes.append(self.g_nodes[-1] + seg)

    def g(self, y: float) -> float:
        self._extend_to(y)
        i = int(np.searchsorted(self.y_nodes, y, side="right")) - 1
        if self.y_nodes[i] == y:
            return self.g_nodes[i]
        seg = _adaptive_simpson(self.f, self.y_nodes[i], y, self.tol * max(1.0, y))
        return self.g_nodes[i] + seg

    def inverse(self, target: float) -> float:
        """Solve G(y) = target by bisection to 1e-12 absolute in y."""
        if target < 0:
            raise DomainError("G is nonnegative")
        if target == 0.0:
            return 0.0
        hi = max(self.y_nodes[-1], 1e-6)
        while self.g(hi) < target:
            hi *= 2.0
            if hi > 1e12:
                raise NumericsError("G never reaches the requested level")
        lo = 0.0
        glo = 0.0
        i = int(np.searchsorted(self.g_nodes, target, side="right")) - 1
        if 0 <= i < len(self.y_nodes):
            lo, glo = self.y_nodes[i], self.g_nodes[i]
            if i + 1 < len(self.y_nodes):
                hi = self.y_nodes[i + 1]
        for _ in range(200):
            if hi - lo <= 1e-12:
                break
            mid = 0.5 * (lo + hi)
            gm = glo + _adaptive_simpson(self.f, lo, mid, self.tol * max(1.0, mid))
            if gm < target:
                lo, glo = mid, gm
            else:
                hi = mid
        return 0.5 * (lo + hi)


def solve_autonomous(problem: AutonomousProblem, n_grid: int = 2001) -> OdeSolution:
    """Solve the terminal-value problem by inverting G on a uniform t-grid."""
    theta2 = problem.market.theta() ** 2
    T = problem.market.T
    table = _GTable(problem)
    t = np.linspace(0.0, T, n_grid)
    Y = np.empty(n_grid)
    for i, ti in enumerate(t):
        Y[i] = table.inverse(theta2 * (T - ti))
    Y[-1] = 0.0
    return OdeSolution(
        t=t, Y=Y, eta=float(Y[0]), terminal=0.0,
        positive_on_interior=bool(np.all(Y[:-1] > 0)),
    )


def y1_threshold(problem: AutonomousProblem) -> float:
    """First y where the drift factor stops being positive; inf if it never does.

    gamma <= 0 makes the bracket >= 1 for all y (h is positive and convex with
    h'(0) = 0, so h'(-gamma sqrt(y)) >= 0), hence the threshold is infinite.
    """
    _require_flat_slope(problem)
    if problem.gamma <= 0:
        return math.inf
    if problem.h.phi_params is not None:
        # flat slope forces nu = 0, so the bracket is constant 1 - gamma lam^2
        return math.inf if drift_factor(problem, 0.0) > 0.0 else 0.0
    grid = np.concatenate([[0.0], np.geomspace(1e-12, 1e8, 841)])
    # scan in chunks, stopping at the first sign change so large-y evaluations
    # (which can overflow exp for unbounded kernels) are never requested
    j = None
    for lo_i in range(0, len(grid), 60):
        chunk = grid[lo_i:lo_i + 60]
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            vals = _drift_factor_many(problem, chunk)
        bad = ~np.isfinite(vals)
        dead = np.where(np.nan_to_num(vals, nan=1.0) <= 0.0)[0]
        if len(dead) and (not np.any(bad) or dead[0] < np.where(bad)[0][0]):
            j = lo_i + int(dead[0])
            break
        if np.any(bad):
            raise NumericsError(
                "drift factor overflowed before a sign change; cannot "
                "locate y1 numerically")
    if j is None:
        return math.inf
    if j == 0:
        return 0.0
    lo, hi = grid[j - 1], grid[j]
    # bisect to 1e-12 relative
    for _ in range(200):
        if hi - lo <= 1e-12 * max(1.0, lo):
            break
        mid = 0.5 * (lo + hi)
        if drift_factor(problem, mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def g_exceeds_threshold(problem: AutonomousProblem, level: float) -> tuple[bool, float | None, bool]:
    """Does G climb above `level` before the drift factor dies at y1?

    Returns (exceeds, g_at_y1 or None when y1 is infinite and the scan
    stopped, ambiguous_within_tol).
    """
    y1 = y1_threshold(problem)
    table = _GTable(problem)
    if math.isfinite(y1):
        g1 = table.g(y1)
        ambiguous = abs(g1 - level) <= 1e-9 * max(1.0, level)
        return (g1 > level, g1, ambiguous)
    y = 1.0
    while y <= 1e9:
        if table.g(y) > level:
            return (True, None, False)
        y *= 2.0
    return (False, table.g(1e9), False)


@dataclass
class ClassificationResult:
    """Existence verdict plus everything needed to act on it.

    case is one of no-DSES, zero-unique, nonzero-unique, family. label names
    the fine-grained route. strategy is populated exactly for the two unique
    cases; the family case carries eta_star instead (strategies are generated
    per eta downstream).
    """

    case: str
    label: str
    diagnostics: dict = field(default_factory=dict)
    strategy: Strategy | None = None
    Y: OdeSolution | None = None
    eta_star: float | None = None
    flags: list = field(default_factory=list)


def classify_time_invariant(problem: AutonomousProblem, n_grid: int = 2001) -> ClassificationResult:
    """Full existence routing for time-invariant weightings.

    Routes: (i) h'(0)<0 no DSES; (ii) h'(0)>0 zero is the unique DSES;
    h'(0)=0 splits on mu: (iii)/(iv) by the sign of 1 - gamma h''(0) when
    mu = 0, (v)/(vi) by G(y1) vs theta^2 T when mu != 0.
    """
    h = problem.h
    market = problem.market
    gamma = problem.gamma
    hp0 = h.dx(0.0, 0.0, 1)
    hpp0 = h.dx(0.0, 0.0, 2)
    theta = market.theta()
    diag = {"hx_at_zero": hp0, "hxx_at_zero": hpp0, "theta": theta}
    flags = []
    if 0.0 < abs(hp0) <= h.zero_tol:
        flags.append(f"h'(0)={hp0:.3e} within the zero band {h.zero_tol}; treated as 0")

    if abs(hp0) > h.zero_tol:
        if hp0 < 0:
            return ClassificationResult(
                case="no-DSES", label="i", diagnostics=diag, flags=flags)
        return ClassificationResult(
            case="zero-unique", label="ii", diagnostics=diag,
            strategy=zero_strategy(market), flags=flags)

    if theta == 0.0:
        one_minus = 1.0 - gamma * hpp0
        diag["one_minus_gamma_hxx"] = one_minus
        if one_minus > 0:
            return ClassificationResult(
                case="zero-unique", label="iii", diagnostics=diag,
                strategy=zero_strategy(market), flags=flags)
        return ClassificationResult(
            case="no-DSES", label="iv", diagnostics=diag, flags=flags)

    level = theta ** 2 * market.T
    exceeds, g1, ambiguous = g_exceeds_threshold(problem, level)
    y1 = y1_threshold(problem)
    diag["y1"] = y1
    diag["g_at_y1"] = g1
    diag["theta2_T"] = level
    if ambiguous:
        flags.append("G(y1) within 1e-9 of theta^2 T; routed to no-DSES")
    if exceeds and not ambiguous:
        sol = solve_autonomous(problem, n_grid=n_grid)
        from .equilibrium import build_strategy  # deferred: avoids a cycle
        eq = build_strategy(problem, sol)
        return ClassificationResult(
            case="nonzero-unique", label="v", diagnostics=diag,
            strategy=eq.strategy, Y=eq.Y, flags=flags)
    return ClassificationResult(case="no-DSES", label="vi", diagnostics=diag, flags=flags)
