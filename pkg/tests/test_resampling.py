import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lmhomog.errors import EmptyPool, InvalidRegion, LengthMismatch
from lmhomog.lmoments import sample_lmoments
from lmhomog.resampling import METHODS, np_test, polya_indices, pool, resample_batch, resample_indices, resample_region
from lmhomog.statistic import Region


def make_region(rng, lengths=(12, 15, 9, 20), p=2):
    return Region([rng.gamma(3.0, size=(n, p)) + 1.0 for n in lengths])


def test_pool_concatenates(rng):
    region = make_region(rng)
    pooled = pool(region)
    np.testing.assert_array_equal(pooled.rows, np.concatenate(region.sites))
    np.testing.assert_array_equal(np.bincount(pooled.origin_site), region.lengths)
    assert not pooled.centered and not pooled.rows.flags.writeable


def test_centering_example():
    region = Region([np.array([1.0, 2.0, 3.0, 2.0]), np.array([11.0, 12.0, 13.0, 12.0])])
    rows = pool(region, center=True).rows[:, 0]
    np.testing.assert_allclose(rows, [6, 7, 8, 7, 6, 7, 8, 7])


def test_centering_identical_sites_is_noop(rng):
    x = rng.normal(size=(10, 2))
    region = Region([x, x])
    np.testing.assert_allclose(pool(region, center=True).rows, pool(region).rows, atol=1e-15)


def test_centered_site_means_and_dispersion(rng):
    region = make_region(rng)
    pooled = pool(region, center=True)
    overall = region.pooled().mean(axis=0)
    for j, site in enumerate(region.sites):
        rows = pooled.rows[pooled.origin_site == j]
        np.testing.assert_allclose(rows.mean(axis=0), overall, atol=1e-12)
        for k in range(region.p):
            assert sample_lmoments(rows[:, k], 2)[1] == pytest.approx(sample_lmoments(site[:, k], 2)[1], abs=1e-12)


def test_permutation_conserves_multiset(rng):
    region = make_region(rng)
    pooled = pool(region)
    reps = resample_batch(pooled, region.lengths, "m", rng, 50)
    ref = np.sort(pooled.rows.view([("a", float), ("b", float)]).ravel())
    for r in reps:
        np.testing.assert_array_equal(np.sort(r.copy().view([("a", float), ("b", float)]).ravel()), ref)


def test_permutation_one_row_per_site(rng):
    x = rng.normal(size=(6, 1))
    idx = resample_indices(6, [1] * 6, "m", rng, 20)
    for row in idx:
        assert sorted(row) == list(range(6))


@pytest.mark.parametrize("method", ["b", "ys", "yr"])
def test_rows_come_from_pool(method, rng):
    region = make_region(rng)
    pooled = pool(region)
    reps = resample_batch(pooled, region.lengths, method, rng, 30)
    rows = {tuple(r) for r in pooled.rows}
    assert all(tuple(r) in rows for r in reps.reshape(-1, 2))


def test_centered_bootstrap_draws_from_centered_pool(rng):
    region = make_region(rng)
    pooled = pool(region, center=True)
    reps = resample_batch(pooled, region.lengths, "bc", rng, 20)
    rows = {tuple(r) for r in pooled.rows}
    assert all(tuple(r) in rows for r in reps.reshape(-1, 2))
    with pytest.raises(ValueError):
        resample_batch(pool(region), region.lengths, "bc", rng, 1)


def test_single_distinct_row_gives_zero_v(rng):
    x = np.tile([[2.0, 5.0]], (8, 1))
    pooled = pool(Region([x, x, x]))
    reps = resample_batch(pooled, [8, 8, 8], "b", rng, 10)
    assert np.all(reps == x[0])


def test_polya_repeat_probability():
    n, trials = 7, 10**6
    draws = polya_indices(n, 2, (trials,), np.random.default_rng(2))
    first = np.bincount(draws[:, 0], minlength=n) / trials
    np.testing.assert_allclose(first, 1 / n, atol=0.002)
    repeat = np.mean(draws[:, 0] == draws[:, 1])
    expected = 2 / (n + 1)
    assert abs(repeat - expected) < 4 * np.sqrt(expected * (1 - expected) / trials)


def urn_oracle(n, draws, rng):
    counts = np.ones(n)
    out = []
    for _ in range(draws):
        i = rng.choice(n, p=counts / counts.sum())
        counts[i] += 1
        out.append(i)
    return out


def test_polya_matches_multiplicity_urn():
    # distribution of the number of distinct items in 5 draws from 4 items
    n, k, trials = 4, 5, 20000
    fast = polya_indices(n, k, (trials,), np.random.default_rng(5))
    fast_distinct = np.bincount([len(set(r)) for r in fast], minlength=n + 1) / trials
    orng = np.random.default_rng(6)
    slow_distinct = np.bincount([len(set(urn_oracle(n, k, orng))) for _ in range(trials)], minlength=n + 1) / trials
    np.testing.assert_allclose(fast_distinct, slow_distinct, atol=0.02)
    # all five identical: prod_{i=1}^{4} (i + 1) / (n + i)
    many = polya_indices(n, k, (200000,), np.random.default_rng(7))
    same = np.mean(np.all(many == many[:, :1], axis=1))
    assert same == pytest.approx((2 * 3 * 4 * 5) / (5 * 6 * 7 * 8), abs=0.0025)


def test_ys_resets_urn_per_site():
    # with one-row sites the urns are independent, so repeats across sites are only by chance
    idx = resample_indices(5, [1, 1], "ys", np.random.default_rng(0), 100000)
    assert np.mean(idx[:, 0] == idx[:, 1]) == pytest.approx(1 / 5, abs=0.01)


def test_length_mismatch_and_empty_pool(rng):
    with pytest.raises(LengthMismatch):
        resample_indices(10, [4, 5], "m", rng, 1)
    with pytest.raises(EmptyPool):
        resample_indices(0, [4, 5], "b", rng, 1)
    with pytest.raises(ValueError):
        resample_indices(10, [5, 5], "q", rng, 1)


def test_resample_region_shape(rng):
    region = make_region(rng)
    out = resample_region(pool(region), region.lengths, "yr", rng)
    assert out.lengths == region.lengths and out.p == 2


def test_identical_sites_p_value_one(rng):
    x = rng.normal(10, 1, size=(20, 2))
    for method in METHODS:
        rep = np_test(Region([x, x, x]), method, n_sim=200, seed=3)
        assert rep.v_obs == 0.0
        assert rep.p_value == 1.0 and rep.decision == "homogeneous"


@pytest.mark.parametrize("method", METHODS)
def test_report_invariants(method, rng):
    region = make_region(rng)
    rep = np_test(region, method, n_sim=300, alpha=0.1, seed=9)
    count = np.count_nonzero(rep.replicates > rep.v_obs)
    assert rep.p_value == count / 300
    assert rep.p_value == round(rep.p_value * rep.n_sim) / rep.n_sim
    assert rep.decision == ("heterogeneous" if rep.p_value < 0.1 else "homogeneous")
    assert rep.threshold == pytest.approx(np.quantile(rep.replicates, 0.9))


@pytest.mark.parametrize("method", METHODS)
def test_determinism(method, rng):
    region = make_region(rng)
    a = np_test(region, method, n_sim=600, seed=21)
    b = np_test(region, method, n_sim=600, seed=21, threads=4)
    np.testing.assert_array_equal(a.replicates, b.replicates)
    assert a.to_dict() == b.to_dict()


def test_v_obs_uses_raw_region(rng):
    region = make_region(rng)
    assert np_test(region, "bc", n_sim=100, seed=0).v_obs == np_test(region, "m", n_sim=100, seed=0).v_obs


def test_argument_checks(rng):
    region = make_region(rng)
    with pytest.raises(InvalidRegion):
        np_test(region, "m", n_sim=99)
    with pytest.raises(ValueError):
        np_test(region, "m", alpha=0)
    with pytest.raises(ValueError):
        np_test(region, "x")


def test_shifted_region_rejected(rng):
    sites = [rng.gumbel(10 + 10 * (j % 2), 3, size=(30, 1)) for j in range(10)]
    assert np_test(Region(sites), "m", n_sim=500, seed=1).decision == "heterogeneous"


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(4, 12), min_size=2, max_size=5), st.integers(0, 2**32))
def test_granularity_property(lengths, seed):
    rng = np.random.default_rng(seed)
    region = Region([rng.exponential(size=(n, 1)) + 0.5 for n in lengths])
    rep = np_test(region, "m", n_sim=100, seed=seed % 1000)
    k = round(rep.p_value * 100)
    assert 0 <= k <= 100 and rep.p_value == k / 100
