"""Replicate generation in seeded blocks, and the shared test report types."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .rng import SeedLike, substream

__all__ = ["BLOCK_SIZE", "run_blocks", "TestReport", "HReport", "summarize"]

BLOCK_SIZE = 250

HOMOGENEOUS = "homogeneous"
HETEROGENEOUS = "heterogeneous"


def run_blocks(
    simulate: Callable[[np.random.Generator, int], np.ndarray],
    n_sim: int,
    seed: SeedLike,
    threads: int = 1,
) -> np.ndarray:
    """Collect ``n_sim`` replicate statistics.

    Replicates are produced in blocks of :data:`BLOCK_SIZE`; block ``b``
    draws from ``substream(seed, b)``, so the output depends only on
    ``(seed, n_sim)`` and never on ``threads``.
    """
    sizes = [min(BLOCK_SIZE, n_sim - lo) for lo in range(0, n_sim, BLOCK_SIZE)]

    def one(b):
        return np.asarray(simulate(substream(seed, b), sizes[b]), dtype=float)

    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, range(len(sizes))))
    else:
        parts = [one(b) for b in range(len(sizes))]
    return np.concatenate(parts)


@dataclass
class TestReport:
    """Outcome of one homogeneity test on one region."""

    __test__ = False  # keep pytest from collecting this class

    method: str
    v_obs: float
    mu_sim: float
    sigma_sim: float
    threshold: float
    p_value: float
    alpha: float
    decision: str
    n_sim: int
    seed: Optional[int]
    replicates: np.ndarray = field(repr=False)

    @property
    def heterogeneous(self) -> bool:
        return self.decision == HETEROGENEOUS

    def to_dict(self, include_replicates: bool = False) -> dict:
        d = asdict(self)
        reps = d.pop("replicates")
        if include_replicates:
            d["replicates"] = [float(v) for v in reps]
        return d


@dataclass
class HReport(TestReport):
    """HW report: the resampling summary plus the H measure."""

    h: float = float("nan")
    label: str = ""
    reject_5pct: bool = False
    margins: tuple = ()
    copula_m: Optional[float] = None


def summarize(v_obs: float, replicates: np.ndarray, alpha: float) -> dict:
    """Replicate summary and the empirical p-value ``#(V* > V_obs) / N_sim``.

    Undefined replicates (NaN, from a zero site mean) never count as
    exceedances and are skipped by the summary moments.
    """
    reps = np.asarray(replicates, dtype=float)
    n_sim = reps.size
    exceed = int(np.count_nonzero(reps > v_obs))
    p_value = exceed / n_sim
    return dict(
        v_obs=float(v_obs),
        mu_sim=float(np.nanmean(reps)),
        sigma_sim=float(np.nanstd(reps, ddof=1)),
        threshold=float(np.nanquantile(reps, 1.0 - alpha)),
        p_value=p_value,
        alpha=float(alpha),
        decision=HETEROGENEOUS if p_value < alpha else HOMOGENEOUS,
        n_sim=n_sim,
        replicates=reps,
    )
