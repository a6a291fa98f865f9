import math

import numpy as np
import pytest
from scipy.special import ndtri

from rdueq.normal import norm_cdf, norm_pdf, norm_ppf, norm_ppf_vec


# reference quantiles from standard tables (15+ digits)
KNOWN = [
    (0.5, 0.0),
    (0.975, 1.959963984540054),
    (0.75, 0.6744897501960817),
    (0.01, -2.3263478740408408),
    (0.9986501019683699, 2.9999999999999996),
]


def test_known_quantiles():
    for p, z in KNOWN:
        assert norm_ppf(p) == pytest.approx(z, abs=5e-15)


def test_round_trip_central_and_tails():
    ps = np.concatenate([
        np.linspace(0.001, 0.999, 1997),
        10.0 ** np.arange(-15, -3.0),
        1.0 - 10.0 ** np.arange(-15, -3.0),
    ])
    for p in ps:
        z = norm_ppf(float(p))
        # CDF round trip limited by erfc conditioning in the upper tail
        assert norm_cdf(z) == pytest.approx(p, rel=2e-13)


def test_against_scipy():
    ps = np.linspace(1e-12, 1.0 - 1e-12, 20011)
    ours = norm_ppf_vec(ps)
    ref = ndtri(ps)
    err = np.abs(ours - ref) / np.maximum(np.abs(ref), 1.0)
    assert np.max(err) < 5e-15


def test_endpoints_and_domain():
    assert norm_ppf(0.0) == -math.inf
    assert norm_ppf(1.0) == math.inf
    with pytest.raises(ValueError):
        norm_ppf(-0.1)
    with pytest.raises(ValueError):
        norm_ppf(1.1)


def test_pdf_is_cdf_derivative():
    for x in np.linspace(-5, 5, 41):
        d = 1e-5
        fd = (norm_cdf(x + d) - norm_cdf(x - d)) / (2 * d)
        assert fd == pytest.approx(norm_pdf(x), rel=1e-7, abs=1e-11)


def test_cdf_symmetry():
    for x in np.linspace(0, 8, 33):
        assert norm_cdf(x) + norm_cdf(-x) == pytest.approx(1.0, abs=1e-15)
