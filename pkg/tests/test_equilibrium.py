"""Strategy construction, RDU values, eta search, certificates, routing.

Closed-form anchors used throughout:
- square-root-tilt family: exact maximal solution Y = a^2 (T-t) with
  a = (theta-beta)/(1-gamma lam^2); along it the generated strategy is the
  constant (sigma sigma^T)^-1 mu * a / theta and the RDU exponent integrand
  is the constant gamma a^2 (1-gamma lam^2) / 2;
- flat-tilt family (nu=0): drift bracket constant 1-gamma lam^2, so the
  power RDU is (1/gamma) exp(gamma theta^2 T / (2(1-gamma lam^2)));
- gamma=0 variant: l(sqrt(Y(s)); s) = (theta-beta)^2/2 along the exact
  solution, so J(0,1) = (theta-beta)^2 T / 2.
"""

import math

import numpy as np
import pytest

from rdueq.autonomous import AutonomousProblem, solve_autonomous
from rdueq.equilibrium import (
    EquilibriumStrategy,
    bracket_at,
    build_strategy,
    classify_timevar,
    optimal_eta_search,
    rdu_log,
    rdu_power,
    rdu_value,
    uniform_optimality_check,
    _simpson_cols,
)
from rdueq.errors import ConfigError, DomainError, NumericsError
from rdueq.hfun import HFunction, closed_phi_h, quadrature_h
from rdueq.model import MarketParams, OdeSolution
from rdueq.timevar import TimevarProblem, estimate_eta_star, solve_forward
from rdueq.weighting import PhiFamilyParams, phi_family

THETA = 0.25


def market(T=10.0, mu=0.05) -> MarketParams:
    return MarketParams(r=0.0, mu=np.array([mu]), sigma=np.array([[0.2]]), T=T)


def beta_problem(beta_frac, lam=1.0, gamma=-2.0, T=10.0) -> TimevarProblem:
    h = closed_phi_h(PhiFamilyParams(lam=lam, beta=beta_frac * THETA, horizon=T))
    return TimevarProblem(market=market(T), h=h, gamma=gamma)


def exact_solution(problem: TimevarProblem, beta_frac, lam=1.0, gamma=-2.0,
                   T=10.0, n=20001) -> OdeSolution:
    """Synthesize Y(t) = a^2 (T - t) with a log-spaced terminal tail."""
    a = (THETA - beta_frac * THETA) / (1.0 - gamma * lam ** 2)
    t = np.linspace(0.0, T, n)
    svals = np.geomspace(1e-13, min(0.5, T / 20), 300)
    tail_t = np.sort(T - svals)
    return OdeSolution(
        t=t, Y=a * a * (T - t), eta=a * a * T, terminal=0.0,
        tail_t=tail_t, tail_Y=a * a * (T - tail_t))


# ---------------------------------------------------------------------------
# bracket


def test_bracket_beta_family_formula():
    p = beta_problem(0.5)
    # A + beta sqrt(T-t)/sqrt(y) with A = 3
    y, t = 0.01, 6.0
    want = 3.0 + 0.5 * THETA * math.sqrt(4.0) / math.sqrt(y)
    assert bracket_at(p, t, y) == pytest.approx(want, rel=1e-12)


def test_bracket_limits_at_zero():
    p = beta_problem(0.5)
    assert bracket_at(p, 5.0, 0.0) == math.inf  # h_x(5,0) > 0
    flat = TimevarProblem(
        market=market(), h=closed_phi_h(PhiFamilyParams(lam=1.0, nu=0.0)), gamma=-2.0)
    assert bracket_at(flat, 5.0, 0.0) == pytest.approx(3.0)
    with pytest.raises(DomainError):
        bracket_at(p, 5.0, -1.0)


# ---------------------------------------------------------------------------
# strategy construction


def test_build_strategy_exact_maximal_is_constant():
    p = beta_problem(0.5)
    eq = build_strategy(p, exact_solution(p, 0.5))
    a = 0.5 * THETA / 3.0
    want = 1.25 * a / THETA  # (sigma sigma^T)^-1 mu * a / theta
    ts = np.array([0.0, 2.5, 7.0, 9.99])
    assert np.allclose(eq.strategy.at_many(ts)[:, 0], want, atol=1e-10)
    assert eq.T0 == 10.0
    assert not eq.is_zero
    assert eq.eta == pytest.approx(a * a * 10.0)
    # anchored solution keeps the tail
    assert eq.Y.tail_t is not None and eq.Y.terminal == 0.0


def test_build_strategy_autonomous_merton():
    mkt = market()
    h = closed_phi_h(PhiFamilyParams(lam=1.0, nu=0.0))
    ap = AutonomousProblem(market=mkt, h=h, gamma=-2.0)
    eq = build_strategy(ap, solve_autonomous(ap))
    assert np.allclose(eq.strategy.values[:, 0], 0.05 / (0.04 * 3.0), atol=1e-9)


def test_build_strategy_zero_solution():
    p = beta_problem(0.5)
    sol = OdeSolution(t=np.linspace(0, 10, 11), Y=np.zeros(11), eta=0.0, terminal=0.0)
    eq = build_strategy(p, sol)
    assert eq.is_zero and eq.T0 == 0.0
    assert np.all(eq.strategy.values == 0.0)


def test_build_strategy_dead_bracket_raises():
    h = closed_phi_h(PhiFamilyParams(lam=1.0, nu=0.4))  # h_x(.,0) = -0.4
    p = TimevarProblem(market=market(), h=h, gamma=-2.0)
    sol = OdeSolution(t=np.linspace(0, 10, 11), Y=np.full(11, 1e-4),
                      eta=1e-4, terminal=1e-4)
    with pytest.raises(NumericsError):
        build_strategy(p, sol)


def test_variance_integral_matches_anchored_y():
    # Pi(t) = int_t^T |pi^T sigma|^2 ds must reproduce the anchored Y
    p = beta_problem(0.5)
    est = estimate_eta_star(p, ladder=(1e-2, 1e-3, 1e-4, 1e-5, 1e-6))
    eq = build_strategy(p, est.maximal)
    tg, vals = eq.strategy.tgrid, eq.strategy.values
    seg = np.diff(np.append(tg, 10.0))
    var_fwd = np.cumsum((((vals * 0.2) ** 2).sum(axis=1) * seg)[::-1])[::-1]
    want = eq.Y.Y[:-1]
    got = var_fwd[:-1]
    assert np.max(np.abs(got - want)) <= 1e-3 * eq.Y.Y[0]


# ---------------------------------------------------------------------------
# RDU values


def test_rdu_power_flat_family_closed_value():
    mkt = market()
    h = closed_phi_h(PhiFamilyParams(lam=1.0, nu=0.0))
    ap = AutonomousProblem(market=mkt, h=h, gamma=-2.0)
    eq = build_strategy(ap, solve_autonomous(ap))
    got = rdu_power(ap, eq, 0.0, 1.0)
    want = -0.5 * math.exp(-2.0 * 0.5 * THETA ** 2 * 10.0 / 3.0)
    assert got.value == pytest.approx(want, rel=1e-12)


def test_rdu_power_exact_maximal_closed_value():
    p = beta_problem(0.5)
    eq = build_strategy(p, exact_solution(p, 0.5))
    a = 0.5 * THETA / 3.0
    # integrand constant gamma a^2 A / 2 with A = 3
    want = -0.5 * math.exp(-2.0 * 0.5 * a * a * 3.0 * 10.0)
    got = rdu_power(p, eq, 0.0, 1.0)
    assert got.value == pytest.approx(want, rel=1e-6)


def test_rdu_power_interior_time():
    p = beta_problem(0.5)
    eq = build_strategy(p, exact_solution(p, 0.5))
    a = 0.5 * THETA / 3.0
    t = 4.0
    want = -0.5 * math.exp(-a * a * 3.0 * (10.0 - t))
    assert rdu_power(p, eq, t, 1.0).value == pytest.approx(want, rel=1e-6)


def test_rdu_power_wealth_scaling():
    p = beta_problem(0.5)
    eq = build_strategy(p, exact_solution(p, 0.5))
    j1 = rdu_power(p, eq, 0.0, 1.0).value
    j2 = rdu_power(p, eq, 0.0, 2.0).value
    assert j2 == pytest.approx(j1 * 2.0 ** (-2.0), rel=1e-12)
    assert j2 > j1  # more wealth is better


def test_rdu_power_zero_strategy_and_horizon():
    p = beta_problem(0.5)
    sol = OdeSolution(t=np.linspace(0, 10, 11), Y=np.zeros(11), eta=0.0, terminal=0.0)
    eq = build_strategy(p, sol)
    assert rdu_power(p, eq, 0.0, 1.0).value == pytest.approx(-0.5)
    assert rdu_power(p, eq, 3.0, 2.0).value == pytest.approx(-0.5 * 2.0 ** -2)
    live = build_strategy(p, exact_solution(p, 0.5))
    assert rdu_power(p, live, 10.0, 1.0).value == pytest.approx(-0.5)


def test_rdu_power_validation():
    p = beta_problem(0.5)
    eq = build_strategy(p, exact_solution(p, 0.5))
    with pytest.raises(ConfigError):
        rdu_power(p, eq, 0.0, -1.0)
    with pytest.raises(DomainError):
        rdu_power(p, eq, 11.0, 1.0)
    p0 = beta_problem(0.5, gamma=0.0)
    eq0 = build_strategy(p0, exact_solution(p0, 0.5, gamma=0.0))
    with pytest.raises(ConfigError):
        rdu_power(p0, eq0, 0.0, 1.0)
    with pytest.raises(ConfigError):
        rdu_log(p, eq, 0.0, 1.0)


def test_rdu_log_exact_value():
    p = beta_problem(0.5, gamma=0.0)
    eq = build_strategy(p, exact_solution(p, 0.5, gamma=0.0))
    a0 = THETA / 2.0
    want = 0.5 * a0 * a0 * 10.0
    assert rdu_log(p, eq, 0.0, 1.0).value == pytest.approx(want, rel=1e-6)
    assert rdu_log(p, eq, 0.0, math.e).value == pytest.approx(1.0 + want, rel=1e-6)


def test_rdu_log_zero_strategy():
    p = beta_problem(0.5, gamma=0.0)
    sol = OdeSolution(t=np.linspace(0, 10, 11), Y=np.zeros(11), eta=0.0, terminal=0.0)
    eq = build_strategy(p, sol)
    assert rdu_log(p, eq, 0.0, 1.0).value == pytest.approx(0.0, abs=1e-15)


def test_rdu_value_dispatch():
    p = beta_problem(0.5)
    eq = build_strategy(p, exact_solution(p, 0.5))
    assert rdu_value(p, eq, 0.0, 1.0).value == rdu_power(p, eq, 0.0, 1.0).value
    p0 = beta_problem(0.5, gamma=0.0)
    eq0 = build_strategy(p0, exact_solution(p0, 0.5, gamma=0.0))
    assert rdu_value(p0, eq0, 0.0, 1.0).value == rdu_log(p0, eq0, 0.0, 1.0).value


def test_rdu_power_quadrature_backend_agrees():
    T = 2.0
    params = PhiFamilyParams(lam=1.0, beta=0.5 * THETA, horizon=T)
    pc = TimevarProblem(market=market(T), h=closed_phi_h(params), gamma=-2.0)
    pq = TimevarProblem(
        market=market(T), h=quadrature_h(phi_family(params)), gamma=-2.0)
    sol = solve_forward(pc, exact_eta_for(0.5, T), n_steps=400)
    jc = rdu_power(pc, build_strategy(pc, sol), 0.0, 1.0).value
    jq = rdu_power(pq, build_strategy(pq, sol), 0.0, 1.0).value
    assert jq == pytest.approx(jc, rel=1e-5)


def exact_eta_for(beta_frac, T, lam=1.0, gamma=-2.0):
    a = (THETA - beta_frac * THETA) / (1.0 - gamma * lam ** 2)
    return a * a * T


def test_simpson_helper_exact_for_cubics():
    x = np.linspace(0.0, 1.0, 11)
    assert _simpson_cols(x ** 3, 0.1) == pytest.approx(0.25, abs=1e-15)
    # odd panel count falls back to one leading trapezoid
    x = np.linspace(0.0, 1.0, 10)
    got = _simpson_cols(x ** 2, x[1] - x[0])
    assert got == pytest.approx(1.0 / 3.0, abs=1e-3)


# ---------------------------------------------------------------------------
# eta search


def test_optimal_eta_interior_optimum():
    p = beta_problem(0.92)
    est = estimate_eta_star(p)
    res = optimal_eta_search(p, est.eta_star, n_grid=51)
    a = 0.08 * THETA / 3.0
    # the regularized eta_hat overshoots; J peaks at the true maximal value
    assert res.eta_opt == pytest.approx(a * a * 10.0, rel=0.02)
    assert 0.0 < res.eta_opt < est.eta_star
    assert res.j_opt >= np.max(res.curve_j) - 1e-10
    assert not res.tie
    pi0 = res.strategy.strategy.at(0.0)[0]
    assert 0.02 <= pi0 <= 0.05
    assert pi0 == pytest.approx(1.25 * a / THETA, abs=2e-3)


def test_optimal_eta_zero_star():
    p = beta_problem(0.5)
    res = optimal_eta_search(p, 0.0)
    assert res.eta_opt == 0.0
    assert res.strategy.is_zero
    assert res.j_opt == pytest.approx(-0.5)


def test_optimal_eta_rejects_negative():
    p = beta_problem(0.5)
    with pytest.raises(ConfigError):
        optimal_eta_search(p, -0.1)


def test_optimal_eta_curve_shape():
    p = beta_problem(0.9)
    est = estimate_eta_star(p, ladder=(1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8))
    res = optimal_eta_search(p, est.eta_star, n_grid=41)
    k = int(np.argmax(res.curve_j))
    assert 0 < k < len(res.curve_j) - 1   # interior maximum
    assert res.curve_j[k] > res.curve_j[0]
    assert res.curve_j[k] > res.curve_j[-1]


# ---------------------------------------------------------------------------
# uniform optimality certificate


def test_certificate_exact_solution_certifies():
    p = beta_problem(0.5)
    cert = uniform_optimality_check(p, exact_solution(p, 0.5))
    assert cert.available and cert.certified
    assert abs(cert.min_value) <= 1e-10


def test_certificate_ladder_solution_not_certified():
    p = beta_problem(0.92)
    est = estimate_eta_star(p)
    cert = uniform_optimality_check(p, est.maximal)
    assert cert.available and not cert.certified
    assert any("regularized" in n for n in cert.notes)


def test_certificate_log_utility():
    p = beta_problem(0.5, gamma=0.0)
    cert = uniform_optimality_check(p, exact_solution(p, 0.5, gamma=0.0))
    assert cert.available and cert.certified


def test_certificate_unavailable_outside_family():
    h = closed_phi_h(PhiFamilyParams(lam=1.0, nu=0.0))
    p = TimevarProblem(market=market(), h=h, gamma=-2.0)
    sol = OdeSolution(t=np.linspace(0, 10, 101),
                      Y=THETA ** 2 * (10 - np.linspace(0, 10, 101)) / 9.0,
                      eta=THETA ** 2 * 10 / 9, terminal=0.0)
    cert = uniform_optimality_check(p, sol)
    assert not cert.available and cert.certified is None


# ---------------------------------------------------------------------------
# time-varying classification


def test_classify_family_route():
    p = beta_problem(0.5)
    res = classify_timevar(p)
    assert (res.case, res.label) == ("family", "b-family")
    assert res.eta_star > exact_eta_for(0.5, 10.0)
    assert res.strategy is None
    assert res.diagnostics["certificate"]["available"]


def test_classify_funnel_closed_route():
    p = beta_problem(1.2)
    res = classify_timevar(p)
    assert (res.case, res.label) == ("zero-unique", "b-zero")
    assert np.all(res.strategy.values == 0.0)


def test_classify_negative_slope_route():
    p = beta_problem(-0.4)  # nu(t) > 0: pessimistic tilt, h_x(t,0) < 0
    res = classify_timevar(p)
    assert (res.case, res.label) == ("no-DSES", "a")
    assert any("negative" in f for f in res.flags)


def test_classify_delegates_time_invariant():
    h = closed_phi_h(PhiFamilyParams(lam=1.0, nu=0.0))
    p = TimevarProblem(market=market(), h=h, gamma=-2.0)
    res = classify_timevar(p)
    assert (res.case, res.label) == ("nonzero-unique", "v")
    assert any("autonomous" in f for f in res.flags)


def varying_curvature_h(T: float) -> HFunction:
    """h(t,x) = exp(lam(t)^2 x^2 / 2) with lam(t)^2 = 1 + t/(2T).

    Slope at zero vanishes for every t while h stays genuinely
    time-dependent, which lands in the flat-near-horizon route.
    """

    def lam2(t):
        return 1.0 + t / (2.0 * T)

    def _eval(t, x):
        return math.exp(0.5 * lam2(t) * x * x)

    def _dx(t, x, k=1):
        l2 = lam2(t)
        h = _eval(t, x)
        if k == 1:
            return l2 * x * h
        if k == 2:
            return (l2 + (l2 * x) ** 2) * h
        return (3.0 * l2 * (l2 * x) + (l2 * x) ** 3) * h

    def _dt(t, x):
        return 0.25 / T * x * x * _eval(t, x)

    def _dtx(t, x):
        return 0.25 / T * (2.0 * x + lam2(t) * x ** 3) * _eval(t, x)

    def _eval_many(t, xs):
        return np.exp(0.5 * lam2(t) * np.asarray(xs) ** 2)

    def _dx_many(t, xs, k=1):
        xs = np.asarray(xs, dtype=float)
        return np.array([_dx(t, float(x), k) for x in xs])

    return HFunction(
        backend="custom", time_dependent=True, horizon=T, zero_tol=1e-10,
        eval=_eval, dx=_dx, dt=_dt, dtx=_dtx,
        eval_many=_eval_many, dx_many=_dx_many, phi_params=None)


def test_classify_flat_slope_time_dependent_route():
    T = 10.0
    h = varying_curvature_h(T)
    p = TimevarProblem(market=market(T), h=h, gamma=-2.0)
    res = classify_timevar(p, n_steps=2000, ladder=(1e-3, 1e-5, 1e-7))
    assert (res.case, res.label) == ("nonzero-unique", "c")
    # A(t) = 3 + t/T: eta* = theta^2 T (1/3 - 1/4)
    want = THETA ** 2 * 10.0 / 12.0
    assert res.diagnostics["eta_star"] == pytest.approx(want, rel=1e-4)
    # strategy: (sigma sigma^T)^-1 mu / A(t)
    assert res.strategy.at(0.0)[0] == pytest.approx(1.25 / 3.0, rel=1e-3)
    assert res.strategy.at(9.9)[0] == pytest.approx(1.25 / 3.99, rel=1e-3)
