"""Nonparametric homogeneity tests.

The null distribution of V is simulated by resampling whole observation
rows of the pooled sample:

``m``
    permutation: one random permutation of the pooled rows, cut into sites.
``b``
    bootstrap: each site drawn with replacement from the pooled rows.
``bc``
    bootstrap from the pooled rows after centering each site on the overall
    mean, variable by variable.
``ys``
    Polya urn per site: every draw returns the row to the urn with one
    extra copy; the urn is reset for each site.
``yr``
    one Polya sample of the total record length per replicate, from which
    the sites are then bootstrapped.

V is always computed on the raw observed region; centering only changes
the pool the ``bc`` replicates are drawn from.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyPool, InvalidRegion, LengthMismatch
from .replicates import TestReport, run_blocks, summarize
from .rng import SeedLike
from .statistic import Region, v_batch, v_statistic

__all__ = [
    "METHODS",
    "PooledSample",
    "pool",
    "polya_indices",
    "resample_indices",
    "resample_batch",
    "resample_region",
    "np_test",
]

METHODS = ("m", "b", "bc", "ys", "yr")


@dataclass(frozen=True)
class PooledSample:
    rows: np.ndarray
    origin_site: np.ndarray
    centered: bool

    @property
    def n(self) -> int:
        return self.rows.shape[0]


def pool(region: Region, center: bool = False) -> PooledSample:
    """Concatenate the sites; optionally apply ``x - site_mean + overall_mean`` per variable."""
    rows = region.pooled().copy()
    origin = np.repeat(np.arange(region.n_sites), region.lengths)
    if center:
        overall = rows.mean(axis=0)
        for j, site in enumerate(region.sites):
            rows[origin == j] += overall - site.mean(axis=0)
    rows.setflags(write=False)
    return PooledSample(rows=rows, origin_site=origin, centered=center)


def polya_indices(n: int, draws: int, shape: tuple, rng: np.random.Generator) -> np.ndarray:
    """Polya urn draws from ``n`` items, each item starting with one ball.

    Returns integer indices of shape ``shape + (draws,)``; every leading
    position is an independent urn. Draw ``k`` (0-based) is a fresh uniform
    item with probability ``n / (n + k)`` and otherwise repeats one of the
    ``k`` earlier draws chosen uniformly, which is the same as drawing
    proportionally to the current multiplicities.
    """
    if n < 1:
        raise EmptyPool("cannot draw from an empty pool")
    out = np.empty(tuple(shape) + (draws,), dtype=np.intp)
    flat = out.reshape(-1, draws)
    rows = flat.shape[0]
    for k in range(draws):
        fresh = rng.integers(0, n, size=rows)
        if k == 0:
            flat[:, 0] = fresh
            continue
        pick_old = rng.random(rows) >= n / (n + k)
        earlier = flat[np.arange(rows), rng.integers(0, k, size=rows)]
        flat[:, k] = np.where(pick_old, earlier, fresh)
    return out


def resample_indices(n: int, lengths, method: str, rng: np.random.Generator, size: int) -> np.ndarray:
    """Row indices into the pool for ``size`` replicate regions, shape ``(size, n_total)``.

    Sites are laid out consecutively in the order of ``lengths``.
    """
    lengths = [int(v) for v in lengths]
    n_total = sum(lengths)
    if n < 1:
        raise EmptyPool("cannot resample from an empty pool")
    if method == "m":
        if n_total != n:
            raise LengthMismatch(f"permutation needs sum(lengths) == {n}, got {n_total}")
        return rng.permuted(np.tile(np.arange(n), (size, 1)), axis=1)
    if method in ("b", "bc"):
        return rng.integers(0, n, size=(size, n_total))
    if method == "ys":
        urns = polya_indices(n, max(lengths), (size, len(lengths)), rng)
        return np.concatenate([urns[:, j, :nj] for j, nj in enumerate(lengths)], axis=1)
    if method == "yr":
        region_sample = polya_indices(n, n_total, (size,), rng)
        pick = rng.integers(0, n_total, size=(size, n_total))
        return np.take_along_axis(region_sample, pick, axis=1)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def resample_batch(pooled: PooledSample, lengths, method: str, rng, size: int) -> np.ndarray:
    """Replicate regions as an array ``(size, n_total, p)``."""
    if method == "bc" and not pooled.centered:
        raise ValueError("method 'bc' needs a centered pool")
    idx = resample_indices(pooled.n, lengths, method, rng, size)
    return pooled.rows[idx]


def resample_region(pooled: PooledSample, lengths, method: str, rng: np.random.Generator) -> Region:
    """One replicate region."""
    data = resample_batch(pooled, lengths, method, rng, 1)[0]
    bounds = np.cumsum([0] + [int(v) for v in lengths])
    return Region([data[lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:])])


def np_test(
    region: Region,
    method: str = "m",
    n_sim: int = 1000,
    alpha: float = 0.05,
    seed: SeedLike = 0,
    threads: int = 1,
) -> TestReport:
    """Nonparametric homogeneity test of ``region``.

    The p-value is ``#(V* > V_obs) / n_sim`` and the region is declared
    heterogeneous when it falls below ``alpha``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if n_sim < 100:
        raise InvalidRegion(f"n_sim must be at least 100, got {n_sim}")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    v_obs = v_statistic(region).value
    pooled = pool(region, center=(method == "bc"))
    lengths = region.lengths

    def simulate(rng, size):
        return v_batch(resample_batch(pooled, lengths, method, rng, size), lengths)

    reps = run_blocks(simulate, n_sim, seed, threads)
    return TestReport(method=method, seed=seed if isinstance(seed, int) else None, **summarize(v_obs, reps, alpha))
