import csv
import json
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from lmhomog import simharness as sh
from lmhomog.errors import EmptyResult, NonConvergence, Unattainable
from lmhomog.lmoments import sample_lmoment_ratios
from lmhomog.simharness import (
    MRSpec,
    URSpec,
    generate_region,
    lognormal_from_lratios,
    run_experiment,
    site_parameters,
    threshold_distribution_summary,
    write_json,
    write_rate_table,
    write_timing_table,
)


def quadrature_ratios(dist):
    """(lambda_1, lambda_2, tau_3) of the lognormal by integrating its quantile function."""
    s = dist.sigma
    # integrate over the normal score z with F = Phi(z)
    x = lambda z: dist.a + dist.b * math.expm1(s * z) / s
    opts = dict(limit=400, epsabs=1e-13, epsrel=1e-12)
    mom = [
        quad(lambda z: x(z) * P(norm.cdf(z)) * norm.pdf(z), -40, 40, points=[0.0], **opts)[0]
        for P in (lambda F: 1.0, lambda F: 2 * F - 1, lambda F: 6 * F * F - 6 * F + 1)
    ]
    return mom[0], mom[1], mom[2] / mom[1]


@pytest.mark.parametrize("tau,tau3", [(0.08, 0.05), (0.065, 0.0001), (0.095, 0.1), (0.2, 0.4), (0.1, -0.2)])
def test_lognormal_matches_targets(tau, tau3):
    dist = lognormal_from_lratios(tau, tau3)
    l1, l2, t3 = dist.lmoments()
    assert (l1, l2 / l1, t3) == pytest.approx((1.0, tau, tau3), abs=1e-10)
    assert quadrature_ratios(dist) == pytest.approx((1.0, tau, tau3), abs=1e-8)


def test_lognormal_symmetric_limit():
    dist = lognormal_from_lratios(0.08, 0.0)
    assert dist.sigma == 0.0
    z = np.random.default_rng(0)
    x = dist.sample(z, 10)
    assert np.all(np.isfinite(x))
    near = lognormal_from_lratios(0.08, 1e-6)
    assert 0 < near.sigma < 1e-4


def test_lognormal_shifted_form():
    dist = lognormal_from_lratios(0.08, 0.05)
    assert dist.sigma > 0
    z = np.linspace(-2, 2, 5)
    direct = dist.zeta + np.exp(dist.mu_log + dist.sigma * z)
    rng_free = dist.a + dist.b * np.expm1(dist.sigma * z) / dist.sigma
    np.testing.assert_allclose(direct, rng_free, rtol=1e-12)


def test_lognormal_simulation_round_trip():
    dist = lognormal_from_lratios(0.08, 0.05)
    x = dist.sample(np.random.default_rng(1), 10**6)
    l1, l2, t3, _ = sample_lmoment_ratios(x, 4)
    assert l2 / l1 == pytest.approx(0.08, abs=0.002)
    assert t3 == pytest.approx(0.05, abs=0.002)


def test_lognormal_unattainable():
    with pytest.raises(Unattainable):
        lognormal_from_lratios(0.08, 1.0)
    with pytest.raises(Unattainable):
        lognormal_from_lratios(0.0, 0.05)


def test_homogeneous_parameters_identical():
    assert len(set(site_parameters(URSpec(10)))) == 1
    assert len(set(site_parameters(MRSpec(10)))) == 1


def test_linear_ur_endpoints():
    params = site_parameters(URSpec(15, "linear"))
    assert params[0] == pytest.approx((0.065, 0.0))
    assert params[-1] == pytest.approx((0.095, 0.1))
    taus = [p[0] for p in params]
    np.testing.assert_allclose(np.diff(taus), np.diff(taus)[0])


@pytest.mark.parametrize("n", [15, 20, 21])
def test_bimodal_blocks(n):
    params = site_parameters(URSpec(n, "bimodal"))
    low = math.ceil(n / 2)
    assert params[:low] == [(0.08 * (1 - 0.375 / 2), 0.0)] * low
    assert params[low:] == [(0.08 * (1 + 0.375 / 2), 0.05 * 2.0)] * (n - low)


def test_mr_dependence_span():
    params = site_parameters(MRSpec(20, "linear-dependence", 0.5))
    m = [p[2] for p in params]
    assert m[0] == pytest.approx(1.0575) and m[-1] == pytest.approx(1.7625)
    assert {p[:2] for p in params} == {(16.0, 300.0)}


def test_mr_margin_and_complete():
    margin = site_parameters(MRSpec(4, "bimodal-margin", 0.3))
    assert [p[0] for p in margin] == pytest.approx([13.6, 13.6, 18.4, 18.4])
    assert {p[2] for p in margin} == {1.41}
    complete = site_parameters(MRSpec(4, "bimodal-complete", 0.3))
    assert [p[2] for p in complete] == pytest.approx([1.41 * 0.85] * 2 + [1.41 * 1.15] * 2)


def test_invalid_specs():
    with pytest.raises(ValueError):
        URSpec(10, "zigzag")
    with pytest.raises(ValueError):
        MRSpec(10, "linear-dependence", gamma=0.9)
    with pytest.raises(ValueError):
        MRSpec(1)


def test_ur_generator_fidelity():
    spec = URSpec(2, "linear", length=500000)
    region = generate_region(spec, np.random.default_rng(4))
    for site, (tau, tau3) in zip(region.sites, site_parameters(spec)):
        l1, l2, t3, _ = sample_lmoment_ratios(site[:, 0], 4)
        assert l2 / l1 == pytest.approx(tau, abs=0.003)
        assert t3 == pytest.approx(tau3, abs=0.003)


def test_mr_generator_fidelity():
    region = generate_region(MRSpec(2, length=10**6), np.random.default_rng(5))
    x = region.sites[0]
    for k, (mu, sigma) in enumerate([(52.0, 16.0), (1240.0, 300.0)]):
        l1, l2 = sample_lmoment_ratios(x[:, k], 2)
        assert l1 == pytest.approx(mu + np.euler_gamma * sigma, rel=2e-3)
        assert l2 == pytest.approx(sigma * math.log(2), rel=5e-3)
    assert np.corrcoef(x.T)[0, 1] == pytest.approx(0.5, abs=0.01)


def test_smoke_run_single_region():
    res = run_experiment(URSpec(5), P=1, n_sim=100, seed=3)
    for t in sh.TESTS:
        assert res.rate(t) in (0.0, 1.0)
        assert res.decisions[t].shape == (1,)


def test_reproducible_and_subset_consistent():
    spec = MRSpec(4, "bimodal-complete", 0.5, length=15)
    a = run_experiment(spec, ("m", "b"), P=4, n_sim=100, seed=8)
    b = run_experiment(spec, ("m", "b"), P=4, n_sim=100, seed=8)
    c = run_experiment(spec, ("b",), P=4, n_sim=100, seed=8)
    for t in ("m", "b"):
        np.testing.assert_array_equal(a.decisions[t], b.decisions[t])
        np.testing.assert_array_equal(a.thresholds[t], b.thresholds[t])
    np.testing.assert_array_equal(a.thresholds["b"], c.thresholds["b"])
    assert a.to_dict() == b.to_dict()


def test_hw_failures_excluded_from_denominator(monkeypatch):
    calls = {"n": 0}
    real = sh.hw_test

    def flaky(region, **kw):
        calls["n"] += 1
        if calls["n"] % 2 == 0:
            raise NonConvergence("forced", iterations=3, residual=1.0)
        return real(region, **kw)

    monkeypatch.setattr(sh, "hw_test", flaky)
    res = run_experiment(URSpec(5, "bimodal", length=30), ("hw",), P=6, n_sim=100, seed=1)
    assert res.failures("hw") == 3
    assert res.rate("hw") == res.rejections("hw") / 3
    assert np.isnan(res.thresholds["hw"]).sum() == 3


def test_threshold_summary():
    single = run_experiment(URSpec(5), ("m",), P=1, n_sim=100, seed=0)
    s = threshold_distribution_summary(single)
    assert s["m"][5]["std"] == 0.0 and s["m"][5]["degenerate"]
    many = [run_experiment(URSpec(n), ("m",), P=5, n_sim=100, seed=0) for n in (5, 10)]
    s = threshold_distribution_summary(many)
    assert set(s["m"]) == {5, 10} and s["m"][10]["count"] == 5
    empty = run_experiment(URSpec(5), ("m",), P=1, n_sim=100, seed=0)
    empty.thresholds["m"][:] = np.nan
    with pytest.raises(EmptyResult):
        threshold_distribution_summary(empty)


def test_writers(tmp_path):
    results = [
        run_experiment(URSpec(5), ("m", "bc"), P=2, n_sim=100, seed=0),
        run_experiment(URSpec(5, "linear"), ("m", "bc"), P=2, n_sim=100, seed=0),
    ]
    write_rate_table(results, tmp_path / "rates.csv")
    rows = list(csv.reader(open(tmp_path / "rates.csv")))
    assert rows[0] == ["type", "gamma", "N", "HW", "M", "B", "Bc", "Ys", "Yr"]
    assert rows[1][:3] == ["homogeneous", "0", "5"] and rows[2][:3] == ["linear", "37.5", "5"]
    assert rows[1][3] == "" and rows[1][4] != ""
    write_timing_table(results, tmp_path / "timing.csv")
    assert len(list(csv.reader(open(tmp_path / "timing.csv")))) == 5
    write_json(results, tmp_path / "r.json")
    payload = json.load(open(tmp_path / "r.json"))
    assert payload["experiments"][1]["spec"]["kind"] == "linear"
