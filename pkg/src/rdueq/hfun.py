"""The exponential transform h of a probability weighting.

h(t,x) = integral of exp(x * Q(p)) dw(t,p) over p in (0,1), with Q the
standard normal quantile. Pulled back to z-space it is the integral of
exp(x z) against the weighting kernel, an exponentially tilted expectation.
Everything downstream (drift brackets, classification, RDU formulas) consumes
h and its first few x-derivatives plus the mixed t/x derivatives.

Two backends: closed form for the quantile-affine normal family
(h = exp(-nu(t) x + lambda^2 x^2 / 2)) and adaptive composite Gauss-Legendre
quadrature for anything with a kernel. Both expose the same call surface so
they can be cross-checked pointwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, DomainError, QuadratureError
from .weighting import PhiFamilyParams, WeightingFunction

_GL_ORDER = 20
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)
_REL_TOL = 1e-9
_MAX_REFINE = 4


@dataclass
class HFunction:
    """Callable bundle for h and its derivatives.

    dx(t, x, k) returns the k-th x-derivative, k in 1..3. dt and dtx are the
    time and mixed derivatives (identically zero for time-invariant h).
    zero_tol is the band within which h_x(t,0) counts as zero for
    classification purposes; it reflects the backend's accuracy.
    """

    backend: str
    time_dependent: bool
    horizon: float | None
    zero_tol: float
    eval: Callable[[float, float], float]
    dx: Callable[[float, float, int], float]
    dt: Callable[[float, float], float]
    dtx: Callable[[float, float], float]
    eval_many: Callable[[float, np.ndarray], np.ndarray]
    dx_many: Callable[[float, np.ndarray, int], np.ndarray]
    phi_params: PhiFamilyParams | None = None

    def log_slope(self, t: float, x: float) -> float:
        """h_x / h, cheap for the closed family."""
        if self.phi_params is not None:
            return self.phi_params.lam ** 2 * x - self.phi_params.nu_at(t)
        return self.dx(t, x, 1) / self.eval(t, x)


def closed_phi_h(params: PhiFamilyParams) -> HFunction:
    lam2 = params.lam ** 2
    horizon = params.horizon

    def _check_t(t: float):
        if params.time_dependent and t >= horizon:
            raise DomainError(f"h defined for t < horizon={horizon}, got t={t}")

    def _eval(t: float, x: float) -> float:
        _check_t(t)
        nu = params.nu_at(t)
        return math.exp(-nu * x + 0.5 * lam2 * x * x)

    def _dx(t: float, x: float, k: int = 1) -> float:
        _check_t(t)
        nu = params.nu_at(t)
        s = lam2 * x - nu
        h = math.exp(-nu * x + 0.5 * lam2 * x * x)
        if k == 1:
            return s * h
        if k == 2:
            return (lam2 + s * s) * h
        if k == 3:
            return (3.0 * lam2 * s + s ** 3) * h
        raise ConfigError(f"derivative order k={k} not supported (k in 1..3)")

    def _dt(t: float, x: float) -> float:
        if not params.time_dependent:
            return 0.0
        _check_t(t)
        # d/dt of -nu(t) x with nu(t) = -beta sqrt(horizon - t)
        nu_dot = params.beta / (2.0 * math.sqrt(horizon - t))
        return -x * nu_dot * _eval(t, x)

    def _dtx(t: float, x: float) -> float:
        if not params.time_dependent:
            return 0.0
        _check_t(t)
        nu = params.nu_at(t)
        nu_dot = params.beta / (2.0 * math.sqrt(horizon - t))
        h = math.exp(-nu * x + 0.5 * lam2 * x * x)
        return -nu_dot * h * (1.0 + x * (lam2 * x - nu))

    def _eval_many(t: float, x: np.ndarray) -> np.ndarray:
        _check_t(t)
        nu = params.nu_at(t)
        x = np.asarray(x, dtype=float)
        return np.exp(-nu * x + 0.5 * lam2 * x * x)

    def _dx_many(t: float, x: np.ndarray, k: int = 1) -> np.ndarray:
        _check_t(t)
        nu = params.nu_at(t)
        x = np.asarray(x, dtype=float)
        s = lam2 * x - nu
        h = np.exp(-nu * x + 0.5 * lam2 * x * x)
        if k == 1:
            return s * h
        if k == 2:
            return (lam2 + s * s) * h
        if k == 3:
            return (3.0 * lam2 * s + s ** 3) * h
        raise ConfigError(f"derivative order k={k} not supported (k in 1..3)")

    return HFunction(
        backend="closed-phi",
        time_dependent=params.time_dependent,
        horizon=horizon,
        zero_tol=1e-10,
        eval=_eval,
        dx=_dx,
        dt=_dt,
        dtx=_dtx,
        eval_many=_eval_many,
        dx_many=_dx_many,
        phi_params=params,
    )


_node_cache: dict[tuple[float, int], tuple[np.ndarray, np.ndarray]] = {}


def _panel_nodes(L: float, n_panels: int) -> tuple[np.ndarray, np.ndarray]:
    key = (L, n_panels)
    hit = _node_cache.get(key)
    if hit is not None:
        return hit
    edges = np.linspace(-L, L, n_panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    z = (mid[:, None] + half * _GL_NODES[None, :]).ravel()
    wts = np.tile(_GL_WEIGHTS * half, n_panels)
    if len(_node_cache) > 64:
        _node_cache.clear()
    _node_cache[key] = (z, wts)
    return z, wts


def _interval(xmax: float) -> tuple[float, int]:
    # widen with |x|: the tilted integrand exp(xz) kernel(z) centers away from
    # the origin, and a fixed window truncates it once |x| is a few units
    L = min(12.0 + 4.0 * xmax, 24.0)
    L = math.ceil(L * 4.0) / 4.0
    return L, int(math.ceil(4.0 * L))


def quadrature_h(w: WeightingFunction, zero_tol: float = 1e-7) -> HFunction:
    horizon = w.horizon

    def _check_t(t: float):
        if w.time_dependent and horizon is not None and t >= horizon:
            raise DomainError(f"h defined for t < horizon={horizon}, got t={t}")

    def _integrate_many(t: float, x: np.ndarray, k: int) -> np.ndarray:
        _check_t(t)
        x = np.atleast_1d(np.asarray(x, dtype=float))
        L, n0 = _interval(float(np.max(np.abs(x))))
        prev = None
        n = n0
        for _ in range(_MAX_REFINE + 1):
            z, wts = _panel_nodes(L, n)
            kern = wts * w.kernel_z(t, z)
            if k:
                kern = kern * z ** k
            out = np.empty(len(x))
            step = max(1, int(4_000_000 // max(len(z), 1)))
            for lo in range(0, len(x), step):
                xs = x[lo:lo + step, None]
                out[lo:lo + step] = np.exp(xs * z[None, :]) @ kern
            if prev is not None:
                err = float(np.max(np.abs(out - prev) / np.maximum(1.0, np.abs(out))))
                if err <= _REL_TOL:
                    return out
            prev = out
            n *= 2
        raise QuadratureError(
            f"h quadrature did not reach rel tol {_REL_TOL} (k={k}, worst panel count {n // 2})",
            achieved=err,
        )

    def _eval(t: float, x: float) -> float:
        return float(_integrate_many(t, np.array([x]), 0)[0])

    def _dx(t: float, x: float, k: int = 1) -> float:
        if k not in (1, 2, 3):
            raise ConfigError(f"derivative order k={k} not supported (k in 1..3)")
        return float(_integrate_many(t, np.array([x]), k)[0])

    def _tstep(t: float) -> float:
        if horizon is not None:
            return min(1e-4, (horizon - t) / 10.0)
        return 1e-4

    def _dt(t: float, x: float) -> float:
        if not w.time_dependent:
            return 0.0
        d = _tstep(t)
        if t - d >= 0:
            return (_eval(t + d, x) - _eval(t - d, x)) / (2.0 * d)
        return (-3.0 * _eval(t, x) + 4.0 * _eval(t + d, x) - _eval(t + 2 * d, x)) / (2.0 * d)

    def _dtx(t: float, x: float) -> float:
        if not w.time_dependent:
            return 0.0
        d = _tstep(t)
        if t - d >= 0:
            return (_dx(t + d, x, 1) - _dx(t - d, x, 1)) / (2.0 * d)
        return (-3.0 * _dx(t, x, 1) + 4.0 * _dx(t + d, x, 1) - _dx(t + 2 * d, x, 1)) / (2.0 * d)

    def _eval_many(t: float, x: np.ndarray) -> np.ndarray:
        return _integrate_many(t, x, 0)

    def _dx_many(t: float, x: np.ndarray, k: int = 1) -> np.ndarray:
        if k not in (1, 2, 3):
            raise ConfigError(f"derivative order k={k} not supported (k in 1..3)")
        return _integrate_many(t, x, k)

    return HFunction(
        backend="quadrature",
        time_dependent=w.time_dependent,
        horizon=horizon,
        zero_tol=zero_tol,
        eval=_eval,
        dx=_dx,
        dt=_dt,
        dtx=_dtx,
        eval_many=_eval_many,
        dx_many=_dx_many,
        phi_params=None,
    )


@dataclass
class LemmaHReport:
    passed: bool
    h_at_zero: float
    normalized_ok: bool
    positive_ok: bool
    convex_ok: bool
    slope_increasing_ok: bool


def check_lemma_h(h: HFunction, t: float = 0.0, xgrid: np.ndarray | None = None) -> LemmaHReport:
    """Structural sanity of an h backend: normalization h(t,0)=1, positivity,
    strict convexity in x, and h_x/h increasing (log-convexity)."""
    if xgrid is None:
        xgrid = np.linspace(-3.0, 3.0, 61)
    tol = 1e-14 if h.backend == "closed-phi" else 1e-8
    h0 = h.eval(t, 0.0)
    normalized_ok = abs(h0 - 1.0) <= tol
    vals = h.eval_many(t, xgrid)
    d2 = h.dx_many(t, xgrid, 2)
    d1 = h.dx_many(t, xgrid, 1)
    positive_ok = bool(np.all(vals > 0))
    convex_ok = bool(np.all(d2 > 0))
    slope = d1 / vals
    slope_increasing_ok = bool(np.all(np.diff(slope) > -1e-12))
    return LemmaHReport(
        passed=normalized_ok and positive_ok and convex_ok and slope_increasing_ok,
        h_at_zero=float(h0),
        normalized_ok=normalized_ok,
        positive_ok=positive_ok,
        convex_ok=convex_ok,
        slope_increasing_ok=slope_increasing_ok,
    )
