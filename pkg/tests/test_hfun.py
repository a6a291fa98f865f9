import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdueq.errors import ConfigError, DomainError
from rdueq.hfun import check_lemma_h, closed_phi_h, quadrature_h
from rdueq.weighting import PhiFamilyParams, identity_weighting, phi_family


def both_backends(lam=1.0, nu=0.0, beta=None, horizon=None):
    params = PhiFamilyParams(lam=lam, nu=nu, beta=beta, horizon=horizon)
    return closed_phi_h(params), quadrature_h(phi_family(params))


def test_identity_h_is_gaussian_mgf():
    hc, hq = both_backends(lam=1.0, nu=0.0)
    assert hc.eval(0.0, 1.0) == pytest.approx(math.exp(0.5), rel=1e-15)
    assert hq.eval(0.0, 1.0) == pytest.approx(math.exp(0.5), rel=1e-9)
    assert hc.eval(0.0, 0.0) == 1.0
    assert abs(hq.eval(0.0, 0.0) - 1.0) < 1e-10


def test_backend_agreement_on_a_grid():
    for lam, nu in [(1.0, 0.0), (math.sqrt(2), 0.0), (0.8, 0.3), (1.5, -0.4)]:
        hc, hq = both_backends(lam=lam, nu=nu)
        for x in np.linspace(-3.0, 3.0, 13):
            c = hc.eval(0.0, x)
            q = hq.eval(0.0, x)
            assert abs(q - c) / max(1.0, abs(c)) < 1e-8, (lam, nu, x)
            for k in (1, 2, 3):
                ck = hc.dx(0.0, x, k)
                qk = hq.dx(0.0, x, k)
                assert abs(qk - ck) / max(1.0, abs(ck)) < 1e-7, (lam, nu, x, k)


def test_closed_derivatives_match_finite_differences():
    h = closed_phi_h(PhiFamilyParams(lam=1.3, nu=-0.2))
    d = 1e-6
    for x in [-2.0, -0.5, 0.0, 1.0, 2.5]:
        fd1 = (h.eval(0.0, x + d) - h.eval(0.0, x - d)) / (2 * d)
        assert h.dx(0.0, x, 1) == pytest.approx(fd1, rel=1e-8)
        fd2 = (h.dx(0.0, x + d, 1) - h.dx(0.0, x - d, 1)) / (2 * d)
        assert h.dx(0.0, x, 2) == pytest.approx(fd2, rel=1e-8)
        fd3 = (h.dx(0.0, x + d, 2) - h.dx(0.0, x - d, 2)) / (2 * d)
        assert h.dx(0.0, x, 3) == pytest.approx(fd3, rel=1e-7)


def test_time_derivatives_beta_form():
    T = 10.0
    hc, hq = both_backends(lam=1.2, beta=0.1, horizon=T)
    for t in [0.0, 4.0, 9.0]:
        for x in [-1.0, 0.5, 2.0]:
            s = math.sqrt(T - t)
            expect_dt = -x * 0.1 / (2.0 * s) * hc.eval(t, x)
            assert hc.dt(t, x) == pytest.approx(expect_dt, rel=1e-13)
            assert hq.dt(t, x) == pytest.approx(expect_dt, rel=1e-5)
            fd = 1e-5
            num = (hc.dx(t + fd, x, 1) - hc.dx(t - fd, x, 1)) / (2 * fd) if t > 0 else None
            if num is not None:
                assert hc.dtx(t, x) == pytest.approx(num, rel=1e-5)
            assert hq.dtx(t, x) == pytest.approx(hc.dtx(t, x), rel=1e-4, abs=1e-7)
    # slope at zero drives classification: h_x(t,0) = beta sqrt(T-t)
    assert hc.dx(3.0, 0.0, 1) == pytest.approx(0.1 * math.sqrt(7.0), rel=1e-14)
    assert hc.dtx(3.0, 0.0) == pytest.approx(-0.1 / (2 * math.sqrt(7.0)), rel=1e-14)


def test_beyond_horizon_rejected():
    hc, hq = both_backends(lam=1.0, beta=0.1, horizon=5.0)
    with pytest.raises(DomainError):
        hc.eval(5.0, 1.0)
    with pytest.raises(DomainError):
        hq.eval(6.0, 0.0)


def test_derivative_order_capped():
    hc, _ = both_backends()
    with pytest.raises(ConfigError):
        hc.dx(0.0, 1.0, 4)


def test_log_slope_fast_path():
    hc, hq = both_backends(lam=1.4, nu=0.2)
    for x in [-1.0, 0.0, 2.0]:
        expect = 1.4 ** 2 * x - 0.2
        assert hc.log_slope(0.0, x) == pytest.approx(expect, rel=1e-14)
        assert hq.log_slope(0.0, x) == pytest.approx(expect, rel=1e-7)


def test_identity_weighting_quadrature():
    h = quadrature_h(identity_weighting())
    for x in [-2.0, 0.3, 1.7]:
        assert h.eval(0.0, x) == pytest.approx(math.exp(0.5 * x * x), rel=1e-9)
    assert h.dt(0.0, 1.0) == 0.0


def test_lemma_check_passes_family():
    hc, hq = both_backends(lam=1.5, nu=-0.3)
    assert check_lemma_h(hc).passed
    assert check_lemma_h(hq).passed


def test_lemma_check_flags_corruption():
    hc, _ = both_backends(lam=1.0, nu=0.5)
    broken_eval = lambda t, x: hc.eval(t, x) + 0.01
    import dataclasses
    broken = dataclasses.replace(hc, eval=broken_eval)
    rep = check_lemma_h(broken)
    assert not rep.normalized_ok
    assert not rep.passed


def test_eval_many_matches_scalar():
    hc, hq = both_backends(lam=1.1, nu=0.15)
    xs = np.linspace(-2.5, 2.5, 31)
    for h, tol in [(hc, 1e-15), (hq, 1e-12)]:
        many = h.eval_many(0.0, xs)
        sc = np.array([h.eval(0.0, float(x)) for x in xs])
        assert np.allclose(many, sc, rtol=tol)
        many1 = h.dx_many(0.0, xs, 1)
        sc1 = np.array([h.dx(0.0, float(x), 1) for x in xs])
        assert np.allclose(many1, sc1, rtol=tol, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(
    lam=st.floats(0.5, 2.0),
    nu=st.floats(-0.5, 0.5),
    x1=st.floats(-2.0, 1.9),
    dx=st.floats(0.01, 0.1),
)
def test_closed_h_structural(lam, nu, x1, dx):
    h = closed_phi_h(PhiFamilyParams(lam=lam, nu=nu))
    assert h.eval(0.0, x1) > 0
    assert h.dx(0.0, x1, 2) > 0
    # log-slope increasing in x
    assert h.log_slope(0.0, x1 + dx) > h.log_slope(0.0, x1)
    assert h.eval(0.0, 0.0) == 1.0
