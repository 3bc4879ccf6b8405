"""Sample L-moments, L-moment ratios and L-comoment matrices.

Univariate estimators are the unbiased probability-weighted-moment (PWM)
forms. The multivariate L-comoment estimator is the concomitant form whose
discrete weights are exactly the PWM weights, so the diagonal of an
L-comoment matrix reproduces the univariate estimator of each column.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np

from .errors import (
    DegenerateScale,
    DimensionMismatch,
    InsufficientSample,
    NonFinite,
    TiePolicyRequired,
)

__all__ = [
    "shifted_legendre",
    "lmoment_weights",
    "sample_pwm",
    "sample_lmoments",
    "sample_lmoment_ratios",
    "sample_lcomoment_matrix",
    "lratio_matrix",
    "lcomoment_batch",
    "lratio_batch",
    "has_ties",
]


def shifted_legendre(k: int) -> np.ndarray:
    """Coefficients of the shifted Legendre polynomial ``P*_k(u)``.

    Returned in increasing powers of ``u``: ``P*_k(u) = sum_s c[s] u**s`` with
    ``c[s] = (-1)**(k-s) C(k, s) C(k+s, s)``.
    """
    if k < 0:
        raise ValueError("polynomial degree must be non-negative")
    return np.array(
        [(-1) ** (k - s) * comb(k, s) * comb(k + s, s) for s in range(k + 1)], dtype=float
    )


@lru_cache(maxsize=256)
def _weights(n: int, order: int) -> np.ndarray:
    coef = shifted_legendre(order - 1)
    k = np.arange(n, dtype=float)  # k = i - 1 for the i-th order statistic
    w = np.zeros(n)
    ratio = np.ones(n)  # C(i-1, s) / C(n-1, s), built up one factor at a time
    for s, c in enumerate(coef):
        if s > 0:
            ratio = ratio * (k - (s - 1)) / (n - s)
        w += c * ratio
    w.setflags(write=False)
    return w


def lmoment_weights(n: int, order: int) -> np.ndarray:
    """Weights ``w`` such that ``l_order = mean(w * sorted(x))``.

    Requires ``n >= order``. The array is cached and read-only.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if n < order:
        raise InsufficientSample(f"need at least {order} observations, got {n}")
    return _weights(int(n), int(order))


def _as_sample(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d sample, got shape {x.shape}")
    if x.size == 0:
        raise InsufficientSample("empty sample")
    if not np.all(np.isfinite(x)):
        raise NonFinite("sample contains non-finite values")
    return x


def sample_pwm(x, nmom: int = 4) -> np.ndarray:
    """Unbiased probability-weighted moments ``b_0 .. b_{nmom-1}``."""
    x = np.sort(_as_sample(x))
    n = x.size
    if n < nmom:
        raise InsufficientSample(f"need at least {nmom} observations, got {n}")
    b = np.empty(nmom)
    factor = np.ones(n)
    i = np.arange(1, n + 1, dtype=float)
    for s in range(nmom):
        if s > 0:
            factor = factor * (i - s) / (n - s)
        b[s] = np.dot(factor, x) / n
    return b


def sample_lmoments(x, nmom: int = 4) -> np.ndarray:
    """Sample L-moments ``l_1 .. l_nmom`` of a univariate sample.

    Parameters
    ----------
    x : array_like
        One-dimensional finite sample, at least ``nmom`` values.
    nmom : int
        Number of L-moments to return.

    Returns
    -------
    numpy.ndarray
        ``[l_1, l_2, ..., l_nmom]`` in data units.
    """
    if nmom < 1:
        raise ValueError("nmom must be >= 1")
    b = sample_pwm(x, nmom)
    lam = np.empty(nmom)
    for r in range(1, nmom + 1):
        lam[r - 1] = np.dot(shifted_legendre(r - 1), b[:r])
    return lam


def sample_lmoment_ratios(x, nmom: int = 4) -> np.ndarray:
    """``[l_1, l_2, t_3, ..., t_nmom]`` with ``t_r = l_r / l_2``."""
    lam = sample_lmoments(x, nmom)
    if nmom >= 3:
        if lam[1] == 0:
            raise DegenerateScale("l_2 is zero; L-moment ratios undefined")
        lam[2:] = lam[2:] / lam[1]
    return lam


def has_ties(keys: np.ndarray, axis: int = -1) -> bool:
    s = np.sort(keys, axis=axis)
    return bool(np.any(np.diff(s, axis=axis) == 0))


def _average_tied_blocks(sorted_keys: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Average ``values`` over runs of equal ``sorted_keys`` along axis -1.

    Both arrays have shape ``(B, n)``.
    """
    b, n = sorted_keys.shape
    new_block = np.ones((b, n), dtype=bool)
    new_block[:, 1:] = sorted_keys[:, 1:] != sorted_keys[:, :-1]
    block = np.cumsum(new_block, axis=1) - 1 + (np.arange(b) * n)[:, None]
    flat = block.ravel()
    sums = np.bincount(flat, weights=values.ravel(), minlength=b * n)
    counts = np.bincount(flat, minlength=b * n)
    counts[counts == 0] = 1
    return (sums / counts)[flat].reshape(b, n)


def lcomoment_batch(data: np.ndarray, order: int = 2, ties: str = "average") -> np.ndarray:
    """L-comoment matrices for a stack of samples.

    ``data`` has shape ``(..., n, p)``; the result has shape ``(..., p, p)``
    with entry ``[i, j]`` the concomitant estimate of ``lambda_order[ij]``:
    rows are sorted by column ``j`` and column ``i`` is weighted with the
    univariate PWM weights. Ties in the sorting column are resolved by
    averaging the concomitants inside each tied block (``ties="average"``)
    or rejected (``ties="raise"``).
    """
    data = np.asarray(data, dtype=float)
    if data.ndim < 2:
        raise DimensionMismatch("data must have shape (..., n, p)")
    *lead, n, p = data.shape
    w = lmoment_weights(n, order)
    flat = data.reshape(-1, n, p)
    out = np.empty((flat.shape[0], p, p))
    for j in range(p):
        idx = np.argsort(flat[:, :, j], axis=1, kind="stable")
        conc = np.take_along_axis(flat, idx[:, :, None], axis=1)
        keys = conc[:, :, j]
        tied = bool(np.any(keys[:, 1:] == keys[:, :-1]))
        if tied and ties == "raise":
            raise TiePolicyRequired(f"column {j} has tied values")
        for i in range(p):
            c = conc[:, :, i]
            if tied and i != j:
                c = _average_tied_blocks(keys, c)
            out[:, i, j] = c @ w / n
    return out.reshape(*lead, p, p)


def lratio_batch(data: np.ndarray, order: int = 2, ties: str = "average") -> np.ndarray:
    """L-comoment ratio matrices for a stack of samples, shape ``(..., p, p)``.

    No degeneracy checks: a zero denominator yields ``inf``/``nan`` entries.
    Used on replicate regions where raising would abort a whole batch.
    """
    lam = lcomoment_batch(data, order, ties)
    data = np.asarray(data, dtype=float)
    if order == 2:
        denom = data.mean(axis=-2)
    else:
        denom = np.diagonal(lcomoment_batch(data, 2, ties), axis1=-2, axis2=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return lam / denom[..., :, None]


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionMismatch(f"expected an (n, p) matrix, got shape {X.shape}")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise InsufficientSample("empty sample matrix")
    if not np.all(np.isfinite(X)):
        raise NonFinite("sample matrix contains non-finite values")
    return X


def sample_lcomoment_matrix(X, order: int = 2, ties: str = "average") -> np.ndarray:
    """Matrix of sample L-comoments ``lambda_order[ij]`` of an ``(n, p)`` sample.

    The matrix is in general not symmetric. Its diagonal equals
    :func:`sample_lmoments` of each column.
    """
    X = _as_matrix(X)
    if order < 2:
        raise ValueError("L-comoments are defined for order >= 2")
    if X.shape[0] < max(order, 2):
        raise InsufficientSample(f"need at least {max(order, 2)} rows, got {X.shape[0]}")
    return lcomoment_batch(X, order, ties)


def lratio_matrix(X, order: int = 2, ties: str = "average"):
    """L-comoment ratio matrix.

    Row ``i`` is divided by ``l_1`` of variable ``i`` when ``order == 2``
    (L-CV matrix) and by ``l_2`` of variable ``i`` otherwise. A ``p = 1``
    input yields a ``1 x 1`` matrix holding the univariate ratio.

    Raises
    ------
    DegenerateScale
        If a required denominator is zero.
    """
    X = _as_matrix(X)
    lam = sample_lcomoment_matrix(X, order, ties)
    if order == 2:
        denom = X.mean(axis=0)
        what = "l_1"
    else:
        denom = np.diag(sample_lcomoment_matrix(X, 2, ties)).copy()
        denom[np.ptp(X, axis=0) == 0] = 0.0  # rounding leaves ~1e-16 for constant columns
        what = "l_2"
    bad = np.flatnonzero(denom == 0)
    if bad.size:
        raise DegenerateScale(f"{what} of variable {int(bad[0])} is zero")
    return lam / denom[:, None]
