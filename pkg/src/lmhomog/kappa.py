"""Four-parameter Kappa distribution: quantiles, analytic L-moments, L-moment fit.

Quantile function::

    x(F) = xi + alpha / k * (1 - ((1 - F**h) / h) ** k)

with the ``h -> 0`` (GEV) and ``k -> 0`` limits taken analytically. The
analytic L-moments follow the gamma-function expressions for ``g_r``; they
are evaluated as ``g_r = 1 + k * E_r`` with ``E_r`` smooth through ``k = 0``
and ``h = 0`` so that the Newton fit can cross both limits without loss of
precision.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from scipy.special import bernoulli, exprel, gammaln, polygamma, psi, zeta

from .errors import InfeasibleParams, NonConvergence

__all__ = [
    "KappaParams",
    "KappaFit",
    "kappa_quantile",
    "kappa_quantile_neglog",
    "kappa_lmoments",
    "kappa_fit_lmoments",
    "attainable",
]

H_MIN, H_MAX = -1.0, 25.0
K_MAX = 25.0
_MAX_STEP = 0.5


@dataclass(frozen=True)
class KappaParams:
    xi: float
    alpha: float
    k: float
    h: float

    def __post_init__(self):
        if not (np.isfinite(self.xi) and np.isfinite(self.alpha)):
            raise InfeasibleParams("location and scale must be finite")
        if not self.alpha > 0:
            raise InfeasibleParams(f"scale must be positive, got {self.alpha}")
        if not feasible(self.k, self.h):
            raise InfeasibleParams(f"L-moments do not exist for k={self.k}, h={self.h}")


def feasible(k: float, h: float) -> bool:
    """True when the first four L-moments exist (``k > -1``, and ``h*k > -1`` if ``h < 0``)."""
    if not (np.isfinite(k) and np.isfinite(h)):
        return False
    if k <= -1.0:
        return False
    return not (h < 0 and h * k <= -1.0)


def kappa_quantile_neglog(params: KappaParams, e) -> np.ndarray:
    """Kappa quantile at ``F = exp(-e)``; stable for ``F`` close to 1."""
    e = np.asarray(e, dtype=float)
    t = e * exprel(-params.h * e)  # (1 - F**h) / h
    with np.errstate(divide="ignore"):
        L = np.log(t)
    return params.xi - params.alpha * L * exprel(params.k * L)


def kappa_quantile(params: KappaParams, F) -> np.ndarray:
    """Quantile function, vectorised over ``F`` in (0, 1)."""
    F = np.asarray(F, dtype=float)
    if np.any((F <= 0) | (F >= 1)):
        raise ValueError("F must lie strictly inside (0, 1)")
    return kappa_quantile_neglog(params, -np.log(F))


_GAMMA = float(np.euler_gamma)
_Z2, _Z3, _Z4 = float(zeta(2)), float(zeta(3)), float(zeta(4))


def _lgamma1p_over(k: float) -> float:
    """``lnGamma(1 + k) / k``."""
    if abs(k) < 1e-4:
        return -_GAMMA + _Z2 / 2 * k - _Z3 / 3 * k * k + _Z4 / 4 * k**3
    return float(gammaln(1.0 + k) / k)


@lru_cache(maxsize=None)
def _bernoulli_diff_coeffs(n: int) -> tuple:
    # (B_n(a) - B_n) / a = sum_{j<n} C(n, j) B_j a**(n-1-j)
    B = bernoulli(n)
    return tuple(comb(n, j) * B[j] for j in range(n))


def _remainder_over(x: float, a: float) -> float:
    """``(lnGamma(x + a) - lnGamma(x) - a ln x) / a`` for ``x > 0``, ``x + a > 0``."""
    if x >= max(30.0, 10.0 * abs(a)):
        total = 0.0
        inv = 1.0 / x
        for kk in range(1, 9):
            n = kk + 1
            coeffs = _bernoulli_diff_coeffs(n)
            poly = sum(c * a ** (n - 1 - j) for j, c in enumerate(coeffs))
            total += (-1) ** (kk + 1) * poly * inv**kk / (kk * (kk + 1))
        return total
    if abs(a) < 1e-5:
        return float(psi(x) - np.log(x) + a * polygamma(1, x) / 2 + a * a * polygamma(2, x) / 6)
    return float((gammaln(x + a) - gammaln(x) - a * np.log(x)) / a)


def _q(r: int, k: float, h: float) -> float:
    """``ln(g_r) / k``."""
    base = _lgamma1p_over(k)
    if h > 0:
        return base - np.log(r + h) - _remainder_over(r / h + 1.0, k)
    if h == 0:
        return base - np.log(r)
    return base - np.log(r) - _remainder_over(-r / h, -k)


def _e_terms(k: float, h: float) -> np.ndarray:
    """``E_r = (g_r - 1) / k`` for r = 1..4."""
    out = np.empty(4)
    for r in range(1, 5):
        q = _q(r, k, h)
        out[r - 1] = q * exprel(k * q)
    return out


def _ratios(k: float, h: float) -> np.ndarray:
    E = _e_terms(k, h)
    d12, d23, d34 = E[0] - E[1], E[1] - E[2], E[2] - E[3]
    return np.array([-1.0 + 2.0 * d23 / d12, 1.0 + 5.0 * (d34 - d23) / d12])


def kappa_lmoments(params: KappaParams) -> np.ndarray:
    """Analytic ``[lambda_1, lambda_2, tau_3, tau_4]``."""
    E = _e_terms(params.k, params.h)
    l1 = params.xi - params.alpha * E[0]
    l2 = params.alpha * (E[0] - E[1])
    t3, t4 = _ratios(params.k, params.h)
    return np.array([l1, l2, t3, t4])


def attainable(t3: float, t4: float) -> bool:
    """Whether ``(t3, t4)`` lies between the Kappa lower bound and the GLO line (h >= -1)."""
    if not (np.isfinite(t3) and np.isfinite(t4)) or abs(t3) >= 1:
        return False
    return (5 * t3 * t3 - 1) / 4 < t4 < (1 + 5 * t3 * t3) / 6


@dataclass(frozen=True)
class KappaFit:
    params: KappaParams
    iterations: int
    residual: float


def _in_box(k: float, h: float) -> bool:
    return feasible(k, h) and H_MIN <= h <= H_MAX and k <= K_MAX


def _project(z: np.ndarray) -> np.ndarray:
    k = min(max(z[0], -1.0 + 1e-9), K_MAX)
    h = min(max(z[1], H_MIN), H_MAX)
    if h < 0 and h * k <= -1.0:
        k = -(1.0 - 1e-9) / h
    return np.array([k, h])


def _damped_step(z, f, norm, jac, target):
    """Newton step with halving; Levenberg-Marquardt damping if halving stalls."""
    delta = -np.linalg.solve(jac, f)
    size = np.max(np.abs(delta))
    if size > _MAX_STEP:
        delta *= _MAX_STEP / size
    lam = 1.0
    for _ in range(30):
        cand = _project(z + lam * delta)
        fc = _ratios(*cand) - target
        nc = np.hypot(*fc)
        if np.isfinite(nc) and nc < norm:
            return cand, fc, nc
        lam *= 0.5
    jtj, jtf = jac.T @ jac, jac.T @ f
    mu = 1e-3 * np.trace(jtj)
    for _ in range(40):
        step = -np.linalg.solve(jtj + mu * np.eye(2), jtf)
        cand = _project(z + step)
        fc = _ratios(*cand) - target
        nc = np.hypot(*fc)
        if np.isfinite(nc) and nc < norm:
            return cand, fc, nc
        mu *= 4.0
    return None


def kappa_fit_lmoments(
    l1: float,
    l2: float,
    t3: float,
    t4: float,
    start=(0.01, 0.01),
    maxiter: int = 100,
    tol: float = 1e-10,
) -> KappaFit:
    """Fit a Kappa distribution by matching ``(l1, l2, t3, t4)``.

    Newton iteration on ``(k, h)`` for the two ratios with a central
    difference Jacobian, step halving (Levenberg-Marquardt damping when
    halving stalls) and projection into the box ``k in (-1, 25]``,
    ``h in [-1, 25]``, ``h*k > -1``. ``xi`` and ``alpha`` then follow
    linearly from ``l1`` and ``l2``.

    Raises
    ------
    NonConvergence
        The ratios are outside the attainable region, the Jacobian is
        singular, the line search stalls, or ``maxiter`` is reached.
    """
    if not l2 > 0:
        raise NonConvergence(f"l2 must be positive, got {l2}")
    if not attainable(t3, t4):
        raise NonConvergence(f"(t3, t4) = ({t3:.6g}, {t4:.6g}) is outside the attainable region")
    target = np.array([t3, t4])
    z = np.array(start, dtype=float)
    if not _in_box(*z):
        raise NonConvergence(f"start point {start} is infeasible")
    f = _ratios(*z) - target
    norm = np.hypot(*f)
    it = 0
    while norm > tol:
        if it >= maxiter:
            raise NonConvergence("maximum iterations reached", iterations=it, residual=norm)
        it += 1
        jac = np.empty((2, 2))
        for c in range(2):
            step = 1e-6 * max(1.0, abs(z[c]))
            zp, zm = z.copy(), z.copy()
            zp[c] += step
            zm[c] -= step
            if not (_in_box(*zp) and _in_box(*zm)):
                # one-sided difference at the box edge
                if _in_box(*zp):
                    jac[:, c] = (_ratios(*zp) - (f + target)) / step
                else:
                    jac[:, c] = ((f + target) - _ratios(*zm)) / step
            else:
                jac[:, c] = (_ratios(*zp) - _ratios(*zm)) / (2 * step)
        if not np.all(np.isfinite(jac)) or abs(np.linalg.det(jac)) < 1e-14:
            raise NonConvergence("singular Jacobian", iterations=it, residual=norm)
        cand = _damped_step(z, f, norm, jac, target)
        if cand is None:
            raise NonConvergence("line search failed", iterations=it, residual=norm)
        cand, fc, nc = cand
        z, f, norm = cand, fc, nc
    k, h = z
    E = _e_terms(k, h)
    alpha = l2 / (E[0] - E[1])
    xi = l1 + alpha * E[0]
    try:
        params = KappaParams(xi=float(xi), alpha=float(alpha), k=float(k), h=float(h))
    except InfeasibleParams as exc:
        raise NonConvergence(str(exc), iterations=it, residual=norm) from exc
    return KappaFit(params=params, iterations=it, residual=float(norm))
