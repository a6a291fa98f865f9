"""Command handlers shared by the HTTP routes and the CLI.

Each handler takes a validated RunConfig (plus per-command options), runs
the corresponding pipeline, and returns a response model. Errors propagate
as ConfigError / NumericsError; the front ends map them to status codes or
exit codes.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from ..autonomous import AutonomousProblem, classify_time_invariant
from ..config import RunConfig, build_problem
from ..equilibrium import (
    EquilibriumStrategy,
    build_strategy,
    classify_timevar,
    optimal_eta_search,
    rdu_log,
    rdu_power,
)
from ..errors import ConfigError
from ..model import OdeSolution, Strategy
from ..timevar import TimevarProblem, bisect_eta_star, estimate_eta_star, solve_forward
from ..verify import equilibrium_check
from .schemas import (
    ClassifyResponse,
    EtaStarResponse,
    FailureRecord,
    OptimizeResponse,
    SolveResponse,
    StrategyPayload,
    VerifyResponse,
)


def _jsonable(obj):
    """Flatten report objects and numpy types into plain JSON values."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (bool, int, float, str)) or obj is None:
        return obj
    return str(obj)


def _strategy_payload(strategy: Strategy, sol: OdeSolution | None = None,
                      eta: float | None = None) -> StrategyPayload:
    if sol is not None:
        t = sol.t
        y = np.clip(sol.Y - sol.terminal, 0.0, None)
        pi = strategy.at_many(t) if strategy.constant else strategy.values
        return StrategyPayload(t=t.tolist(), pi=np.asarray(pi).tolist(),
                               T=strategy.T, y=y.tolist(), eta=eta)
    carried = None if strategy.Y is None else strategy.Y.tolist()
    return StrategyPayload(t=strategy.tgrid.tolist(),
                           pi=strategy.values.tolist(), T=strategy.T,
                           y=carried, eta=eta)


def _value0(problem, eq: EquilibriumStrategy, x: float = 1.0) -> float:
    if problem.gamma == 0.0:
        return rdu_log(problem, eq, 0.0, x).value
    return rdu_power(problem, eq, 0.0, x).value


def _flat_solution(problem, eta: float = 0.0) -> OdeSolution:
    t = np.linspace(0.0, problem.market.T, 101)
    return OdeSolution(t=t, Y=np.full_like(t, eta), eta=eta, terminal=eta)


def handle_classify(cfg: RunConfig) -> ClassifyResponse:
    problem = build_problem(cfg)
    if isinstance(problem, TimevarProblem):
        res = classify_timevar(problem, n_steps=cfg.solver.time_steps,
                               ladder=_ladder(cfg))
    else:
        res = classify_time_invariant(problem, n_grid=cfg.solver.ode_grid)
    payload = None
    if res.strategy is not None:
        payload = _strategy_payload(res.strategy, res.Y, eta=res.eta_star)
    return ClassifyResponse(case=res.case, label=res.label,
                            eta_star=res.eta_star, flags=list(res.flags),
                            diagnostics=_jsonable(res.diagnostics),
                            strategy=payload)


def _ladder(cfg: RunConfig):
    if cfg.solver.eps_ladder is None:
        return None
    return tuple(cfg.solver.eps_ladder)


def handle_solve(cfg: RunConfig, eta: float | None = None,
                 maximal: bool = False) -> SolveResponse:
    problem = build_problem(cfg)
    if eta is not None and maximal:
        raise ConfigError("give either eta or maximal, not both")

    if isinstance(problem, AutonomousProblem):
        if maximal or (eta is not None and eta != 0.0):
            raise ConfigError("the time-invariant case has a unique equilibrium; "
                              "drop --eta/--maximal (only --eta 0 is accepted)")
        if eta == 0.0:
            sol = _flat_solution(problem)
        else:
            res = classify_time_invariant(problem, n_grid=cfg.solver.ode_grid)
            if res.case == "no-DSES":
                raise ConfigError("no equilibrium exists for this configuration; "
                                  f"classification: {res.label}")
            sol = res.Y if res.Y is not None else _flat_solution(problem)
        eq = build_strategy(problem, sol)
        return SolveResponse(eta=eq.eta, terminal=sol.terminal,
                             value0=_value0(problem, eq),
                             strategy=_strategy_payload(eq.strategy, sol, eta=eq.eta))

    if maximal:
        est = estimate_eta_star(problem, ladder=_ladder(cfg),
                                n_steps=cfg.solver.time_steps)
        sol = est.maximal
    elif eta is not None:
        if eta < 0:
            raise ConfigError(f"eta must be >= 0, got {eta}")
        sol = solve_forward(problem, eta, n_steps=cfg.solver.time_steps)
    else:
        raise ConfigError("the time-dependent family needs --eta <value> or --maximal")
    eq = build_strategy(problem, sol)
    return SolveResponse(eta=sol.eta, terminal=sol.terminal,
                         value0=_value0(problem, eq),
                         strategy=_strategy_payload(eq.strategy, sol, eta=sol.eta))


def handle_eta_star(cfg: RunConfig) -> EtaStarResponse:
    problem = build_problem(cfg)
    if not isinstance(problem, TimevarProblem):
        raise ConfigError("eta-star applies to the time-dependent weighting family")
    est = estimate_eta_star(problem, ladder=_ladder(cfg),
                            n_steps=cfg.solver.time_steps)
    bis = bisect_eta_star(problem, n_steps=cfg.solver.time_steps)
    return EtaStarResponse(eta_star=est.eta_star, converged=est.converged,
                           ladder=list(est.ladder), y0_values=list(est.y0_values),
                           extrapolated=est.extrapolated,
                           decay_exponent=est.decay_exponent, bisect=bis)


def handle_optimize(cfg: RunConfig) -> OptimizeResponse:
    problem = build_problem(cfg)
    if not isinstance(problem, TimevarProblem):
        raise ConfigError("optimize searches the time-dependent equilibrium family; "
                          "the time-invariant case has nothing to rank")
    est = estimate_eta_star(problem, ladder=_ladder(cfg),
                            n_steps=cfg.solver.time_steps)
    res = optimal_eta_search(problem, est.eta_star, n_grid=cfg.solver.eta_grid,
                             n_steps=cfg.solver.search_time_steps,
                             final_n_steps=cfg.solver.time_steps)
    eq = res.strategy
    pi0 = eq.strategy.at(0.0)
    return OptimizeResponse(eta_opt=res.eta_opt, eta_star=res.eta_star,
                            j_opt=res.j_opt, pi0=np.asarray(pi0).tolist(),
                            curve_eta=np.asarray(res.curve_eta).tolist(),
                            curve_j=np.asarray(res.curve_j).tolist(),
                            strategy=_strategy_payload(eq.strategy, eq.Y,
                                                       eta=res.eta_opt))


def strategy_from_payload(payload: StrategyPayload, T: float) -> Strategy:
    t = np.asarray(payload.t, dtype=float)
    pi = np.asarray(payload.pi, dtype=float)
    if abs(payload.T - T) > 1e-12 * max(1.0, T):
        raise ConfigError(f"strategy horizon {payload.T} does not match "
                          f"the market horizon {T}")
    if t.ndim != 1 or pi.ndim != 2 or pi.shape[0] != t.shape[0]:
        raise ConfigError("strategy grid and values are inconsistent")
    y = None if payload.y is None else np.asarray(payload.y, dtype=float)
    return Strategy(tgrid=t, values=pi, T=T, kind="grid", Y=y)


def handle_verify(cfg: RunConfig, payload: StrategyPayload) -> VerifyResponse:
    problem = build_problem(cfg)
    strategy = strategy_from_payload(payload, problem.market.T)
    if strategy.values.shape[1] != problem.market.n:
        raise ConfigError(f"strategy has {strategy.values.shape[1]} assets, "
                          f"market has {problem.market.n}")
    rep = equilibrium_check(problem, strategy, n_t=cfg.solver.check_points)
    failures = [FailureRecord(t=t, kappa=None if k is None else list(k),
                              slope=_finite(s)) for t, k, s in rep.failures]
    max_slope = None if rep.max_slope == -math.inf else _finite(rep.max_slope)
    return VerifyResponse(passed=rep.passed, n_times=len(rep.t_values),
                          n_complete=rep.n_complete, max_slope=max_slope,
                          modes=list(rep.modes), failures=failures,
                          notes=list(rep.notes))


def _finite(x: float) -> float:
    """Clamp infinities so every payload survives strict JSON."""
    if math.isinf(x):
        return math.copysign(1e308, x)
    return float(x)
