"""Simulated regions and rejection-rate experiments.

Univariate regions (UR) draw each site from a three-parameter lognormal
matched to a target L-CV and L-skewness. Multivariate regions (MR) draw
(peak, volume) pairs with Gumbel margins joined by a logistic copula.
Heterogeneity spreads a parameter ``theta`` over
``[theta (1 - g/2), theta (1 + g/2)]``, either linearly across sites or in
two blocks.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import erf, exprel

from .copula import logistic_exponential_pairs
from .errors import EmptyResult, NonConvergence, Unattainable
from .parametric import hw_test
from .resampling import np_test
from .rng import SeedLike, seed_sequence, substream
from .statistic import Region

__all__ = [
    "TESTS",
    "UR_KINDS",
    "MR_KINDS",
    "LogNormal3",
    "lognormal_from_lratios",
    "URSpec",
    "MRSpec",
    "site_parameters",
    "generate_region",
    "ExperimentResult",
    "run_experiment",
    "threshold_distribution_summary",
    "write_rate_table",
    "write_timing_table",
    "write_json",
]

TESTS = ("hw", "m", "b", "bc", "ys", "yr")
TEST_NAMES = {"hw": "HW", "m": "M", "b": "B", "bc": "Bc", "ys": "Ys", "yr": "Yr"}
UR_KINDS = ("homogeneous", "linear", "bimodal")
MR_KINDS = (
    "homogeneous",
    "linear-margin",
    "linear-dependence",
    "linear-complete",
    "bimodal-margin",
    "bimodal-dependence",
    "bimodal-complete",
)

_SIGMA_MAX = 6.0


def _tau3_of_sigma(s: float) -> float:
    """L-skewness of ``exp(s Z)``; odd in ``s``."""
    if s == 0.0:
        return 0.0
    half = s / 2.0
    val, _ = quad(lambda x: erf(x / math.sqrt(3.0)) * math.exp(-x * x), 0.0, half, epsabs=1e-14, epsrel=1e-13)
    return 6.0 / math.sqrt(math.pi) * val / math.erf(half)


def _erf_over(s: float) -> float:
    """``erf(s / 2) / s`` with its limit at 0."""
    if abs(s) < 1e-6:
        return (1.0 - s * s / 12.0) / math.sqrt(math.pi)
    return math.erf(s / 2.0) / s


@dataclass(frozen=True)
class LogNormal3:
    """``X = a + b * expm1(sigma Z) / sigma`` with Z standard normal.

    For ``sigma > 0`` this is the shifted lognormal with location
    ``zeta = a - b / sigma`` and log-mean ``mu_log = ln(b / sigma)``;
    ``sigma < 0`` mirrors it (negative skew) and ``sigma = 0`` is the
    normal limit.
    """

    a: float
    b: float
    sigma: float

    @property
    def zeta(self) -> float:
        return self.a - self.b / self.sigma if self.sigma > 0 else float("nan")

    @property
    def mu_log(self) -> float:
        return math.log(self.b / self.sigma) if self.sigma > 0 else float("nan")

    def lmoments(self) -> tuple[float, float, float]:
        """Analytic ``(lambda_1, lambda_2, tau_3)``."""
        s = self.sigma
        l1 = self.a + self.b * (s / 2.0) * float(exprel(s * s / 2.0))
        l2 = self.b * math.exp(s * s / 2.0) * _erf_over(s)
        return l1, l2, _tau3_of_sigma(s)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        z = rng.standard_normal(size)
        return self.a + self.b * z * exprel(self.sigma * z)


@lru_cache(maxsize=256)
def lognormal_from_lratios(tau: float, tau3: float) -> LogNormal3:
    """Three-parameter lognormal with mean 1, L-CV ``tau`` and L-skewness ``tau3``.

    ``sigma`` solves the one-dimensional L-skewness equation; scale and
    location then follow in closed form.
    """
    if not (np.isfinite(tau) and tau > 0):
        raise Unattainable(f"L-CV must be positive, got {tau}")
    lim = _tau3_of_sigma(_SIGMA_MAX)
    if not abs(tau3) < lim:
        raise Unattainable(f"L-skewness {tau3} is outside (-{lim:.4f}, {lim:.4f})")
    if tau3 == 0.0:
        s = 0.0
    else:
        s = brentq(lambda v: _tau3_of_sigma(v) - tau3, -_SIGMA_MAX, _SIGMA_MAX, xtol=1e-14, rtol=1e-14)
    b = tau / (math.exp(s * s / 2.0) * _erf_over(s))
    a = 1.0 - b * (s / 2.0) * float(exprel(s * s / 2.0))
    return LogNormal3(a=a, b=b, sigma=s)


def _spread(theta: float, gamma: float, n_sites: int, kind: str) -> np.ndarray:
    """Per-site values of a parameter under the given heterogeneity pattern."""
    if kind == "homogeneous" or gamma == 0:
        return np.full(n_sites, theta)
    if kind == "linear":
        frac = np.arange(n_sites) / (n_sites - 1)
        return theta * (1.0 - gamma / 2.0 + gamma * frac)
    if kind == "bimodal":
        low = math.ceil(n_sites / 2)
        out = np.full(n_sites, theta * (1.0 + gamma / 2.0))
        out[:low] = theta * (1.0 - gamma / 2.0)
        return out
    raise ValueError(f"unknown heterogeneity pattern {kind!r}")


@dataclass(frozen=True)
class URSpec:
    """Univariate lognormal region."""

    n_sites: int
    kind: str = "homogeneous"
    length: int = 30
    tau: float = 0.08
    tau3: float = 0.05
    gamma_tau: float = 0.375
    gamma_tau3: float = 2.0

    def __post_init__(self):
        if self.kind not in UR_KINDS:
            raise ValueError(f"kind must be one of {UR_KINDS}, got {self.kind!r}")
        if self.n_sites < 2 or self.length < 4:
            raise ValueError("need at least 2 sites of at least 4 observations")

    @property
    def gamma(self) -> float:
        return 0.0 if self.kind == "homogeneous" else self.gamma_tau

    def label(self) -> str:
        return self.kind


@dataclass(frozen=True)
class MRSpec:
    """Bivariate region with Gumbel margins and logistic-copula dependence."""

    n_sites: int
    kind: str = "homogeneous"
    gamma: float = 0.0
    length: int = 30
    mu_q: float = 52.0
    sigma_q: float = 16.0
    mu_v: float = 1240.0
    sigma_v: float = 300.0
    m: float = 1.41

    def __post_init__(self):
        if self.kind not in MR_KINDS:
            raise ValueError(f"kind must be one of {MR_KINDS}, got {self.kind!r}")
        if self.n_sites < 2 or self.length < 4:
            raise ValueError("need at least 2 sites of at least 4 observations")
        if self.m * (1.0 - self.gamma / 2.0) < 1.0 and self.kind.endswith(("dependence", "complete")):
            raise ValueError("heterogeneity would push the copula parameter below 1")

    def label(self) -> str:
        return self.kind


def site_parameters(spec) -> list[tuple]:
    """Per-site parameter tuples: ``(tau, tau3)`` for UR, ``(sigma_q, sigma_v, m)`` for MR."""
    N = spec.n_sites
    if isinstance(spec, URSpec):
        tau = _spread(spec.tau, spec.gamma_tau, N, spec.kind)
        tau3 = _spread(spec.tau3, spec.gamma_tau3, N, spec.kind)
        return list(zip(tau.tolist(), tau3.tolist()))
    pattern, _, target = spec.kind.partition("-")
    margin_g = spec.gamma if target in ("margin", "complete") else 0.0
    dep_g = spec.gamma if target in ("dependence", "complete") else 0.0
    sq = _spread(spec.sigma_q, margin_g, N, pattern)
    sv = _spread(spec.sigma_v, margin_g, N, pattern)
    m = _spread(spec.m, dep_g, N, pattern)
    return list(zip(sq.tolist(), sv.tolist(), m.tolist()))


def generate_region(spec, rng: np.random.Generator) -> Region:
    """Draw one region from ``spec``."""
    sites = []
    for params in site_parameters(spec):
        if isinstance(spec, URSpec):
            dist = lognormal_from_lratios(*params)
            sites.append(dist.sample(rng, spec.length)[:, None])
        else:
            sq, sv, m = params
            e = logistic_exponential_pairs(m, spec.length, rng)
            sites.append(np.column_stack([spec.mu_q - sq * np.log(e[:, 0]), spec.mu_v - sv * np.log(e[:, 1])]))
    return Region(sites)


@dataclass
class ExperimentResult:
    """Per-region outcomes of every test on ``P`` generated regions.

    ``decisions[test]`` holds 1 (heterogeneous), 0 (homogeneous) or -1
    (no result, HW fit failure). ``thresholds[test]`` is the 95th
    percentile of each region's replicate distribution and ``times[test]``
    the wall time per region in seconds.
    """

    spec: object
    tests: tuple
    P: int
    n_sim: int
    alpha: float
    seed: SeedLike
    decisions: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    times: dict = field(default_factory=dict)

    def failures(self, test: str) -> int:
        return int(np.count_nonzero(self.decisions[test] < 0))

    def rejections(self, test: str) -> int:
        return int(np.count_nonzero(self.decisions[test] == 1))

    def rate(self, test: str) -> float:
        """Rejections over the regions that produced a result; NaN if none did."""
        valid = self.P - self.failures(test)
        return self.rejections(test) / valid if valid else float("nan")

    def mean_time(self, test: str) -> float:
        return float(np.mean(self.times[test]))

    def to_dict(self) -> dict:
        return {
            "spec": {"type": type(self.spec).__name__, **asdict(self.spec)},
            "P": self.P,
            "n_sim": self.n_sim,
            "alpha": self.alpha,
            "seed": _seed_json(self.seed),
            "tests": {
                t: {
                    "rejections": self.rejections(t),
                    "failures": self.failures(t),
                    "rate": self.rate(t),
                    "thresholds_95": [float(v) for v in self.thresholds[t]],
                }
                for t in self.tests
            },
        }


def _seed_json(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": int(seed.entropy), "spawn_key": [int(k) for k in seed.spawn_key]}
    return seed


def _run_one(test: str, region: Region, n_sim: int, alpha: float, seed: SeedLike, threads: int):
    if test == "hw":
        return hw_test(region, n_sim=n_sim, alpha=alpha, seed=seed, threads=threads)
    return np_test(region, method=test, n_sim=n_sim, alpha=alpha, seed=seed, threads=threads)


def run_experiment(
    spec,
    tests=TESTS,
    P: int = 100,
    n_sim: int = 500,
    alpha: float = 0.05,
    seed: SeedLike = 0,
    threads: int = 1,
) -> ExperimentResult:
    """Generate ``P`` regions from ``spec`` and apply every test to each.

    Region ``i`` is drawn from ``substream(seed, i)`` and test ``t`` on it
    uses the seed ``(seed, i, t + 1)``, so any subset of tests sees the
    same regions.
    """
    tests = tuple(tests)
    if not tests:
        raise ValueError("no tests requested")
    unknown = set(tests) - set(TESTS)
    if unknown:
        raise ValueError(f"unknown tests {sorted(unknown)}")
    if P < 1:
        raise ValueError("P must be at least 1")
    res = ExperimentResult(spec=spec, tests=tests, P=P, n_sim=n_sim, alpha=alpha, seed=seed)
    for t in tests:
        res.decisions[t] = np.full(P, -1, dtype=np.int8)
        res.thresholds[t] = np.full(P, np.nan)
        res.times[t] = np.zeros(P)
    for i in range(P):
        region = generate_region(spec, substream(seed, i))
        for t in tests:
            test_seed = seed_sequence(seed, i, TESTS.index(t) + 1)
            start = time.perf_counter()
            try:
                rep = _run_one(t, region, n_sim, alpha, test_seed, threads)
            except NonConvergence:
                res.times[t][i] = time.perf_counter() - start
                continue
            res.times[t][i] = time.perf_counter() - start
            res.decisions[t][i] = int(rep.heterogeneous)
            res.thresholds[t][i] = np.nanquantile(rep.replicates, 0.95)
    return res


def threshold_distribution_summary(results) -> dict:
    """Median and standard deviation of the 95th-percentile thresholds, per test and N.

    Returns ``{test: {N: {"median", "std", "count", "degenerate"}}}``. A
    group with a single value gets ``std = 0`` and ``degenerate = True``.
    """
    if isinstance(results, ExperimentResult):
        results = [results]
    out: dict = {}
    for res in results:
        for t in res.tests:
            vals = res.thresholds[t][np.isfinite(res.thresholds[t])]
            prev = out.setdefault(t, {}).get(res.spec.n_sites)
            if prev is not None:
                vals = np.concatenate([prev, vals])
            out[t][res.spec.n_sites] = vals
    if not any(v.size for groups in out.values() for v in groups.values()):
        raise EmptyResult("no threshold samples to summarise")
    summary: dict = {}
    for t, groups in out.items():
        summary[t] = {}
        for n, vals in sorted(groups.items()):
            if vals.size == 0:
                continue
            summary[t][n] = {
                "median": float(np.median(vals)),
                "std": float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0,
                "count": int(vals.size),
                "degenerate": bool(vals.size < 2),
            }
    return summary


def _fmt(v: float) -> str:
    return "" if not np.isfinite(v) else f"{100.0 * v:.1f}"


def write_rate_table(results, path) -> None:
    """CSV with columns type, gamma, N and one rejection rate (percent) per test."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["type", "gamma", "N"] + [TEST_NAMES[t] for t in TESTS])
        for res in results:
            gamma = 0.0 if res.spec.kind == "homogeneous" else res.spec.gamma
            row = [res.spec.label(), f"{100.0 * gamma:g}", res.spec.n_sites]
            row += [_fmt(res.rate(t)) if t in res.tests else "" for t in TESTS]
            w.writerow(row)


def write_timing_table(results, path) -> None:
    """CSV of mean wall time per test (seconds), one row per configuration."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["type", "gamma", "N", "test", "mean_seconds", "failures"])
        for res in results:
            gamma = 0.0 if res.spec.kind == "homogeneous" else res.spec.gamma
            for t in res.tests:
                w.writerow([res.spec.label(), f"{100.0 * gamma:g}", res.spec.n_sites, t, f"{res.mean_time(t):.6f}", res.failures(t)])


def write_json(results, path) -> None:
    """Full structured results, including the threshold summary."""
    payload = {
        "experiments": [r.to_dict() for r in results],
        "threshold_summary": {
            t: {str(n): v for n, v in g.items()} for t, g in threshold_distribution_summary(results).items()
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
