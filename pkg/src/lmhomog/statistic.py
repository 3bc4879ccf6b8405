"""The homogeneity statistic V and its ingredients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateScale, DimensionMismatch, InvalidRegion, NonFinite
from .lmoments import lratio_batch, lratio_matrix

__all__ = [
    "MIN_RECORD_LENGTH",
    "Region",
    "VStatistic",
    "spectral_norm",
    "spectral_norm_batch",
    "v_statistic",
    "v_from_lcv",
    "v_batch",
]

MIN_RECORD_LENGTH = 4


@dataclass(frozen=True)
class Region:
    """An ordered set of sites sharing the same variables.

    Each site is an ``(n_j, p)`` array of joint observations.
    """

    sites: tuple
    site_ids: tuple = ()

    def __post_init__(self):
        sites = tuple(_as_site(s) for s in self.sites)
        ids = tuple(self.site_ids) if self.site_ids else tuple(str(j + 1) for j in range(len(sites)))
        if len(sites) < 2:
            raise InvalidRegion(f"a region needs at least 2 sites, got {len(sites)}")
        if len(ids) != len(sites):
            raise InvalidRegion("site_ids and sites differ in length")
        if len(set(ids)) != len(ids):
            raise InvalidRegion("site ids must be unique")
        p = sites[0].shape[1]
        for sid, s in zip(ids, sites):
            if s.shape[1] != p:
                raise DimensionMismatch(f"site {sid} has {s.shape[1]} variables, expected {p}")
            if s.shape[0] < MIN_RECORD_LENGTH:
                raise InvalidRegion(
                    f"site {sid} has {s.shape[0]} records; at least {MIN_RECORD_LENGTH} required"
                )
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "site_ids", ids)

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def p(self) -> int:
        return self.sites[0].shape[1]

    @property
    def lengths(self) -> tuple:
        return tuple(s.shape[0] for s in self.sites)

    def pooled(self) -> np.ndarray:
        return np.concatenate(self.sites, axis=0)


def _as_site(s) -> np.ndarray:
    a = np.array(s, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise DimensionMismatch(f"site data must be 1-d or 2-d, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite("site data contains non-finite values")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class VStatistic:
    value: float
    per_site_lcv: tuple = field(repr=False)
    weighted_mean_lcv: np.ndarray = field(repr=False)


def spectral_norm_batch(A: np.ndarray) -> np.ndarray:
    """Largest singular value of each ``p x p`` matrix in a stack ``(..., p, p)``."""
    A = np.asarray(A, dtype=float)
    p = A.shape[-1]
    if A.shape[-2] != p:
        raise DimensionMismatch("spectral norm expects square matrices")
    if p == 1:
        return np.abs(A[..., 0, 0])
    if p == 2:
        # eigenvalues of A^T A from its trace (= squared Frobenius norm) and determinant
        a, b, c, d = A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]
        fro2 = a * a + b * b + c * c + d * d
        det = a * d - b * c
        disc = np.sqrt(np.maximum(fro2 * fro2 - 4.0 * det * det, 0.0))
        return np.sqrt(0.5 * (fro2 + disc))
    ata = np.swapaxes(A, -1, -2) @ A
    return np.sqrt(np.maximum(np.linalg.eigvalsh(ata)[..., -1], 0.0))


def spectral_norm(A) -> float:
    """Spectral norm ``sqrt(max eig(A^T A))`` of a square matrix."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not np.all(np.isfinite(A)):
        raise NonFinite("matrix contains non-finite values")
    return float(spectral_norm_batch(A))


def v_from_lcv(lcv: np.ndarray, lengths: Sequence[int]) -> np.ndarray:
    """V from stacked per-site L-CV matrices.

    ``lcv`` has shape ``(..., N, p, p)``. The weighted mean is anchored at the
    first site so that identical sites give exactly zero.
    """
    w = np.asarray(lengths, dtype=float)
    total = w.sum()
    dev_from_first = lcv - lcv[..., :1, :, :]
    mean_shift = np.einsum("j,...jab->...ab", w, dev_from_first) / total
    dev = dev_from_first - mean_shift[..., None, :, :]
    norms = spectral_norm_batch(dev)
    return np.sqrt(norms**2 @ w / total)


def v_statistic(region: Region) -> VStatistic:
    """Weighted spread of the at-site L-CV matrices, measured in spectral norm.

    For univariate regions this reduces to the weighted standard deviation
    of the at-site L-CVs.
    """
    lcv = []
    for sid, site in zip(region.site_ids, region.sites):
        try:
            lcv.append(lratio_matrix(site, 2))
        except DegenerateScale as exc:
            raise DegenerateScale(f"site {sid}: {exc}", site_id=sid) from exc
    stack = np.stack(lcv)
    w = np.asarray(region.lengths, dtype=float)
    mean = stack[0] + np.einsum("j,jab->ab", w, stack - stack[0]) / w.sum()
    value = float(v_from_lcv(stack, region.lengths))
    return VStatistic(value=value, per_site_lcv=tuple(lcv), weighted_mean_lcv=mean)


def v_batch(data: np.ndarray, lengths: Sequence[int]) -> np.ndarray:
    """V for a stack of regions laid out site after site.

    ``data`` has shape ``(B, n_total, p)``: rows ``0 .. n_1-1`` are site 1,
    the next ``n_2`` rows are site 2, and so on.
    """
    data = np.asarray(data, dtype=float)
    lengths = [int(n) for n in lengths]
    B, n_total, p = data.shape
    if sum(lengths) != n_total:
        raise DimensionMismatch("site lengths do not add up to the row count")
    if len(set(lengths)) == 1:
        blocks = data.reshape(B, len(lengths), lengths[0], p)
        lcv = lratio_batch(blocks, 2)
    else:
        bounds = np.cumsum([0] + lengths)
        lcv = np.stack(
            [lratio_batch(data[:, lo:hi, :], 2) for lo, hi in zip(bounds[:-1], bounds[1:])],
            axis=1,
        )
    return v_from_lcv(lcv, lengths)
