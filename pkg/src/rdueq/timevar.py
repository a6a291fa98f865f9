"""Time-dependent weighting: the non-autonomous Y ODE and the eta* machinery.

Forward problem: Y'(t) = -theta^2 m(t, sqrt(Y))^2, Y(0) = eta, where
m(t,x) = x h(t,-gamma x) / (x h(t,-gamma x) + h_x(t,-gamma x)) is the inverse
of the drift bracket. Positive solutions with Y(T)=0 generate equilibria; the
maximal one has initial value eta*. eta* is estimated by regularized backward
solves Y(T) = eps for a ladder of epsilons (the values Y_eps(0) decrease to
eta*), cross-checked by bisection over eta on forward solves.

All marching happens in s = T - t (distance to the horizon), where the
boundary layer sits at s = 0 and the substep rule |ds| <= max(s/4, 1e-13)
resolves the sqrt(s) structure at geometric cost. Substep points inside the
terminal window are kept on the solution as a fine tail for later integrals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, NumericsError
from .hfun import HFunction
from .model import MarketParams, OdeSolution

_FLOOR = 1e-14
_DEFAULT_LADDER = tuple(10.0 ** (-k) for k in range(2, 9))


@dataclass(frozen=True)
class TimevarProblem:
    market: MarketParams
    h: HFunction
    gamma: float
    theta: float = field(init=False)

    def __post_init__(self):
        if self.gamma > 0:
            raise ConfigError(
                f"time-varying theory covers gamma <= 0, got {self.gamma}")
        if self.h.time_dependent and self.h.horizon != self.market.T:
            raise ConfigError(
                f"weighting horizon {self.h.horizon} != market horizon {self.market.T}")
        object.__setattr__(self, "theta", self.market.theta())


def m_factor(problem: TimevarProblem, t: float, x: float) -> float:
    """Inverse drift bracket m(t,x) in [0,1]; nan flags a dead bracket.

    m(t,0) uses the limit 1/(1 - gamma h_xx(t,0)) when h_x(t,0) vanishes and
    0 otherwise (the bracket diverges, the strategy switches off).
    """
    h = problem.h
    if x < 0:
        raise ConfigError(f"m defined for x >= 0, got {x}")
    if x == 0.0:
        if abs(h.dx(t, 0.0, 1)) <= h.zero_tol:
            return 1.0 / (1.0 - problem.gamma * h.dx(t, 0.0, 2))
        return 0.0
    arg = -problem.gamma * x
    num = h.eval(t, arg) * x
    den = num + h.dx(t, arg, 1)
    if den <= 0.0:
        return math.nan
    return num / den


def _make_rhs(problem: TimevarProblem) -> tuple[Callable, Callable]:
    """(scalar, batch) versions of dY/ds = theta^2 m(T-s, sqrt(Y))^2."""
    theta2 = problem.theta ** 2
    gamma = problem.gamma
    T = problem.market.T
    h = problem.h
    pp = h.phi_params

    if pp is not None and pp.time_dependent:
        A = 1.0 - gamma * pp.lam ** 2
        beta = pp.beta

        def rhs(s: float, y: float) -> float:
            if y <= 0.0:
                return 0.0
            ry = math.sqrt(y)
            return theta2 * (ry / (A * ry + beta * math.sqrt(s))) ** 2

        def rhs_batch(s: float, y: np.ndarray) -> np.ndarray:
            ry = np.sqrt(np.maximum(y, 0.0))
            den = A * ry + beta * math.sqrt(s)
            out = theta2 * (ry / den) ** 2
            out[y <= 0.0] = 0.0
            return out

        return rhs, rhs_batch

    if pp is not None:
        A = 1.0 - gamma * pp.lam ** 2
        nu = pp.nu

        def rhs(s: float, y: float) -> float:
            if y <= 0.0:
                return 0.0
            ry = math.sqrt(y)
            den = A * ry - nu
            if den <= 0.0:
                raise NumericsError(
                    f"drift bracket died at s={s}, y={y} (constant nu={nu})")
            return theta2 * (ry / den) ** 2

        def rhs_batch(s: float, y: np.ndarray) -> np.ndarray:
            ry = np.sqrt(np.maximum(y, 0.0))
            den = A * ry - nu
            if np.any((den <= 0.0) & (y > 0.0)):
                raise NumericsError(f"drift bracket died at s={s} (constant nu={nu})")
            out = theta2 * (ry / np.where(den > 0, den, 1.0)) ** 2
            out[y <= 0.0] = 0.0
            return out

        return rhs, rhs_batch

    def rhs(s: float, y: float) -> float:
        if y <= 0.0:
            return 0.0
        t = T - s
        ry = math.sqrt(y)
        arg = -gamma * ry
        num = h.eval(t, arg) * ry
        den = num + h.dx(t, arg, 1)
        if den <= 0.0:
            raise NumericsError(f"drift bracket died at t={t}, Y={y}")
        return theta2 * (num / den) ** 2

    def rhs_batch(s: float, y: np.ndarray) -> np.ndarray:
        t = T - s
        ry = np.sqrt(np.maximum(y, 0.0))
        arg = -gamma * ry
        num = h.eval_many(t, arg) * ry
        den = num + h.dx_many(t, arg, 1)
        if np.any((den <= 0.0) & (y > 0.0)):
            raise NumericsError(f"drift bracket died at t={t}")
        out = theta2 * (num / np.where(den > 0, den, 1.0)) ** 2
        out[y <= 0.0] = 0.0
        return out

    return rhs, rhs_batch


def _march_interval(rhs, s0: float, s1: float, y, floor: float, min_sub: float,
                    sink: list | None, batch: bool):
    """March from s0 to s1 (either direction), substepping near s=0.

    Scalar mode halves a substep that would land at or below the floor before
    clamping; batch mode clamps directly (shared schedule across columns).
    Returns (y_end, reached_floor).
    """
    descending = s1 < s0
    s = s0
    reached = False
    guard = 0
    while (s - s1 > 1e-16) if descending else (s1 - s > 1e-16):
        if not batch and descending and y <= floor:
            # floor is absorbing: rhs >= 0 and we march toward smaller Y
            reached = True
            s = s1
            if sink is not None:
                sink.append((s, float(y)))
            break
        remaining = (s - s1) if descending else (s1 - s)
        # geometric refinement into the s=0 boundary layer, plain step elsewhere
        step = min(remaining, max(s / 4.0, 1e-13))
        h = -step if descending else step

        def rk4(hh):
            if batch:
                k1 = rhs(s, y)
                k2 = rhs(s + hh / 2, np.maximum(y + hh / 2 * k1, 0.0))
                k3 = rhs(s + hh / 2, np.maximum(y + hh / 2 * k2, 0.0))
                k4 = rhs(s + hh, np.maximum(y + hh * k3, 0.0))
            else:
                k1 = rhs(s, y)
                k2 = rhs(s + hh / 2, max(y + hh / 2 * k1, 0.0))
                k3 = rhs(s + hh / 2, max(y + hh / 2 * k2, 0.0))
                k4 = rhs(s + hh, max(y + hh * k3, 0.0))
            return y + hh / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

        ynew = rk4(h)
        if batch:
            hit = ynew <= floor
            if np.any(hit):
                reached = True
                ynew = np.where(hit, floor, ynew)
        else:
            if ynew <= floor and descending:
                while abs(h) > min_sub:
                    h /= 2.0
                    ynew = rk4(h)
                    if ynew > floor:
                        break
                if ynew <= floor:
                    ynew = floor
                    reached = True
            elif ynew <= floor:
                ynew = floor
                reached = True
        s += h
        y = ynew
        if sink is not None:
            sink.append((s, np.array(y, copy=True) if batch else float(y)))
        guard += 1
        if guard > 2_000_000:
            raise NumericsError("substep loop failed to terminate")
    return y, reached


_TAIL_FRACTION = 20  # tail window = min(0.5, T/20)


def _tail_window(T: float) -> float:
    return min(0.5, T / _TAIL_FRACTION)


def solve_forward(problem: TimevarProblem, eta: float, n_steps: int = 20000) -> OdeSolution:
    """Integrate Y' = -theta^2 m^2 from Y(0) = eta down to the horizon."""
    if eta < 0:
        raise ConfigError(f"eta must be nonnegative, got {eta}")
    rhs, _ = _make_rhs(problem)
    T = problem.market.T
    window = _tail_window(T)
    min_sub = 1e-12 * T
    s_nodes = np.linspace(T, 0.0, n_steps + 1)  # t ascending
    Y = np.empty(n_steps + 1)
    Y[0] = eta
    y = float(eta)
    reached = False
    tail: list = []
    for i in range(n_steps):
        sink = tail if s_nodes[i + 1] < window else None
        y, hit = _march_interval(rhs, s_nodes[i], s_nodes[i + 1], y,
                                 _FLOOR, min_sub, sink, batch=False)
        reached = reached or hit
        Y[i + 1] = y
    t = T - s_nodes
    tail_t = np.array([T - s for s, _ in tail]) if tail else None
    tail_Y = np.array([v for _, v in tail]) if tail else None
    return OdeSolution(
        t=t, Y=Y, eta=float(eta), terminal=float(y), reached_floor=reached,
        positive_on_interior=bool(np.all(Y[:-1] > 0.0)),
        tail_t=tail_t, tail_Y=tail_Y,
    )


def solve_forward_batch(problem: TimevarProblem, etas: np.ndarray,
                        n_steps: int = 4000) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray | None, np.ndarray | None]:
    """Vectorized forward solves sharing one substep schedule.

    Returns (t, Y matrix with one row per grid time, terminals, reached_floor
    mask, tail_t, tail_Y matrix).
    """
    _, rhs_batch = _make_rhs(problem)
    T = problem.market.T
    window = _tail_window(T)
    etas = np.asarray(etas, dtype=float)
    s_nodes = np.linspace(T, 0.0, n_steps + 1)
    Y = np.empty((n_steps + 1, len(etas)))
    Y[0] = etas
    y = etas.copy()
    reached = np.zeros(len(etas), dtype=bool)
    tail: list = []
    for i in range(n_steps):
        sink = tail if s_nodes[i + 1] < window else None
        y, hit = _march_interval(rhs_batch, s_nodes[i], s_nodes[i + 1], y,
                                 _FLOOR, 1e-12 * T, sink, batch=True)
        if hit:
            reached |= y <= _FLOOR
        Y[i + 1] = y
    t = T - s_nodes
    if tail:
        tail_t = np.array([T - s for s, _ in tail])
        tail_Y = np.vstack([v for _, v in tail])
    else:
        tail_t, tail_Y = None, None
    return t, Y, y.copy(), reached, tail_t, tail_Y


def solve_backward_eps(problem: TimevarProblem, epsilon: float,
                       n_steps: int = 20000) -> OdeSolution:
    """Regularized backward solve Y(T) = eps, marched away from the horizon.

    The result is stored ascending in t like every other solution; its eta
    field is Y(0), the ladder value.
    """
    if not (epsilon > 0):
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    rhs, _ = _make_rhs(problem)
    T = problem.market.T
    window = _tail_window(T)
    s_nodes = np.linspace(0.0, T, n_steps + 1)  # t descending
    Y = np.empty(n_steps + 1)
    Y[0] = epsilon
    y = float(epsilon)
    tail: list = [(0.0, float(epsilon))]
    for i in range(n_steps):
        sink = tail if s_nodes[i] < window else None
        y, _ = _march_interval(rhs, s_nodes[i], s_nodes[i + 1], y,
                               0.0, 1e-12 * T, sink, batch=False)
        Y[i + 1] = y
    # flip to ascending t
    t = (T - s_nodes)[::-1].copy()
    Yt = Y[::-1].copy()
    keep = [(T - s, v) for s, v in tail if s <= window]
    keep.sort(key=lambda p: p[0])
    tail_t = np.array([p[0] for p in keep])
    tail_Y = np.array([p[1] for p in keep])
    return OdeSolution(
        t=t, Y=Yt, eta=float(y), terminal=float(epsilon), reached_floor=False,
        positive_on_interior=bool(np.all(Yt[:-1] > 0.0)),
        tail_t=tail_t, tail_Y=tail_Y,
    )


@dataclass
class EtaStarEstimate:
    """Ladder output: eta_star is the last rung's Y(0) (the contract value);
    extrapolated/decay_exponent are diagnostics from the geometric fit."""

    eta_star: float
    ladder: list
    y0_values: list
    converged: bool
    maximal: OdeSolution
    extrapolated: float | None = None
    decay_exponent: float | None = None


def estimate_eta_star(problem: TimevarProblem, ladder: tuple | None = None,
                      n_steps: int = 20000) -> EtaStarEstimate:
    """Run the epsilon ladder of backward solves and read off eta*."""
    eps_list = list(ladder) if ladder is not None else list(_DEFAULT_LADDER)
    if any(e <= 0 for e in eps_list) or any(
            eps_list[i + 1] >= eps_list[i] for i in range(len(eps_list) - 1)):
        raise ConfigError("epsilon ladder must be positive and decreasing")
    y0s = []
    last_sol = None
    for eps in eps_list:
        sol = solve_backward_eps(problem, eps, n_steps=n_steps)
        y0s.append(sol.eta)
        last_sol = sol
    for i in range(1, len(y0s)):
        if y0s[i] > y0s[i - 1] + 1e-12 * max(1.0, y0s[i - 1]):
            raise NumericsError(
                f"ladder values must decrease with epsilon: Y0({eps_list[i]})="
                f"{y0s[i]} > Y0({eps_list[i-1]})={y0s[i-1]}")
    converged = (
        len(y0s) >= 2
        and abs(y0s[-1] - y0s[-2]) < 1e-6 * max(1.0, abs(y0s[-1]))
    )
    extrapolated = None
    exponent = None
    if len(y0s) >= 3:
        d1 = y0s[-2] - y0s[-1]
        d2 = y0s[-3] - y0s[-2]
        if d1 > 0 and d2 > d1:
            rho = d1 / d2
            decade = math.log10(eps_list[-3] / eps_list[-2])
            exponent = -math.log10(rho) / decade if decade > 0 else None
            extrapolated = y0s[-1] - d1 * rho / (1.0 - rho)
    return EtaStarEstimate(
        eta_star=float(y0s[-1]),
        ladder=eps_list,
        y0_values=[float(v) for v in y0s],
        converged=converged,
        maximal=last_sol,
        extrapolated=extrapolated,
        decay_exponent=exponent,
    )


def bisect_eta_star(problem: TimevarProblem, terminal_tol: float | None = None,
                    lo: float = 0.0, hi: float | None = None,
                    rel_tol: float = 1e-6, n_steps: int = 20000) -> float:
    """Independent eta* estimate: largest eta whose forward solve still hits
    the horizon within terminal_tol. The default tolerance equals the default
    ladder's last epsilon so the two estimators regularize identically."""
    if terminal_tol is None:
        terminal_tol = _DEFAULT_LADDER[-1]
    theta2T = problem.theta ** 2 * problem.market.T
    if hi is None:
        hi = theta2T
    if solve_forward(problem, hi, n_steps=n_steps).terminal <= terminal_tol:
        return hi
    while hi - lo > rel_tol * max(hi, 1e-300):
        mid = 0.5 * (lo + hi)
        if solve_forward(problem, mid, n_steps=n_steps).terminal <= terminal_tol:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_log_forward(problem: TimevarProblem, eta: float, n_steps: int = 20000) -> OdeSolution:
    """gamma = 0 alias; the m-formula already reduces to x/(x + h_x(t,0))."""
    if problem.gamma != 0.0:
        raise ConfigError("log-utility solver requires gamma = 0")
    return solve_forward(problem, eta, n_steps=n_steps)


def solve_log_backward_eps(problem: TimevarProblem, epsilon: float,
                           n_steps: int = 20000) -> OdeSolution:
    if problem.gamma != 0.0:
        raise ConfigError("log-utility solver requires gamma = 0")
    return solve_backward_eps(problem, epsilon, n_steps=n_steps)


@dataclass
class ExistenceReport:
    ratio_samples: list
    limsup_ratio: float
    hx_sign_pattern: str
    h_bounded_samples: list
    family_conditions_hold: bool
    notes: list = field(default_factory=list)


def check_existence_conditions(problem: TimevarProblem, n_grid: int = 101) -> ExistenceReport:
    """Sample the conditions behind the family case near the horizon.

    The decisive quantity is h_x(t,0) / (theta sqrt(T-t)): a finite limsup
    strictly below 1 keeps the terminal funnel open (for the beta family the
    ratio is exactly beta/theta). Advisory only; sampling cannot prove limits.
    """
    h = problem.h
    T = problem.market.T
    theta = problem.theta
    ratios = []
    for k in range(1, 9):
        delta = T * 10.0 ** (-k)
        hx = h.dx(T - delta, 0.0, 1)
        denom = theta * math.sqrt(delta)
        ratios.append((T - delta, hx / denom if denom > 0 else math.inf))
    limsup = max(r for _, r in ratios[-3:])
    tgrid = np.linspace(0.0, T, n_grid + 1)[:-1]
    signs = []
    for t in tgrid:
        v = h.dx(t, 0.0, 1)
        signs.append(0 if abs(v) <= h.zero_tol else (1 if v > 0 else -1))
    sset = set(signs)
    if sset == {0}:
        pattern = "zero"
    elif sset <= {0, 1}:
        pattern = "positive"
    elif sset <= {0, -1}:
        pattern = "negative"
    else:
        pattern = "mixed"
    hb = [(float(t), float(h.eval(t, 1.0))) for t in
          [0.0, T / 2, T - T * 1e-3, T - T * 1e-6]]
    notes = []
    if limsup >= 1.0:
        notes.append("ratio limsup >= 1: terminal funnel closed, expect eta* = 0")
    hold = pattern == "positive" and limsup < 1.0 and all(v < math.inf for _, v in hb)
    return ExistenceReport(
        ratio_samples=[(float(a), float(b)) for a, b in ratios],
        limsup_ratio=float(limsup),
        hx_sign_pattern=pattern,
        h_bounded_samples=hb,
        family_conditions_hold=hold,
        notes=notes,
    )
