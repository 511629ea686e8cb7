import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from insensitivity.distributions import (
    Deterministic,
    DistributionError,
    Erlang,
    Exponential,
    HyperExponential,
    Pareto,
    Uniform,
    make_distribution,
    sample_many,
)
from insensitivity.harness import ks_statistic

H2 = HyperExponential((1 / 3, 2 / 3), (0.5, 2.0))

UNIT_MEAN = [
    Exponential(1.0),
    Deterministic(1.0),
    Erlang(2, 2.0),
    Erlang(5, 5.0),
    H2,
    Uniform(0.0, 2.0),
    Uniform(0.5, 1.5),
    Pareto(3.0, 2.0 / 3.0),
    Pareto(1.5, 1.0 / 3.0),
]
IDS = [repr(d) for d in UNIT_MEAN]


def test_with_mean_exponential():
    assert make_distribution("exponential", {"rate": 3.0}) == Exponential(1.0)


def test_h2_already_unit_mean():
    d = make_distribution("h2", {"weights": [1 / 3, 2 / 3], "rates": [0.5, 2.0]})
    assert d == H2
    assert d.mean == pytest.approx(1.0, abs=1e-15)


def test_deterministic_zero_rejected():
    with pytest.raises(DistributionError, match="atom"):
        Deterministic(0.0)
    with pytest.raises(DistributionError):
        make_distribution("deterministic", {"value": 0.0}, target_mean=1.0)


@pytest.mark.parametrize("bad", [
    lambda: Exponential(0.0),
    lambda: Erlang(0, 1.0),
    lambda: HyperExponential((0.5, 0.6), (1.0, 1.0)),
    lambda: Uniform(1.0, 1.0),
    lambda: Pareto(1.0, 1.0),
    lambda: make_distribution("weibull", {}),
])
def test_invalid_parameters(bad):
    with pytest.raises(DistributionError):
        bad()


def test_cdf_values():
    assert Deterministic(1.0).cdf(0.99) == 0.0
    assert Deterministic(1.0).cdf(1.0) == 1.0
    assert Exponential(1.0).cdf(1.0) == pytest.approx(1 - math.exp(-1), abs=1e-12)
    assert Erlang(2, 2.0).cdf(1.0) == pytest.approx(1 - math.exp(-2) * 3, abs=1e-12)


def test_inverse_cdf_values():
    assert Exponential(1.0).ppf(0.5) == pytest.approx(math.log(2), abs=1e-15)
    assert all(Deterministic(1.0).ppf(u) == 1.0 for u in (0.0, 0.3, 0.999))
    assert Deterministic(1.0).equilibrium().ppf(0.25) == pytest.approx(0.25)


def test_equilibrium_fixed_points():
    e = Exponential(1.0).equilibrium()
    for x in (0.1, 1.0, 3.0):
        assert e.cdf(x) == pytest.approx(1 - math.exp(-x))
    u = Deterministic(1.0).equilibrium()
    for x in (0.0, 0.2, 0.75, 1.0, 2.0):
        assert u.cdf(x) == pytest.approx(min(x, 1.0))


@pytest.mark.parametrize("d", UNIT_MEAN, ids=IDS)
def test_equilibrium_cdf_matches_quadrature(d):
    e = d.equilibrium()
    kinks = [1.0, 0.5, 1.5, 2.0 / 3.0, 1.0 / 3.0]
    for x in (0.05, 0.3, 0.9, 1.0, 1.7, 4.0, 12.0):
        ref, _ = integrate.quad(lambda y: 1.0 - d.cdf(y), 0.0, x, points=[k for k in kinks if k < x], limit=200)
        assert e.cdf(x) == pytest.approx(ref, abs=1e-9)


@pytest.mark.parametrize("d", UNIT_MEAN, ids=IDS)
def test_equilibrium_inverse_round_trip(d):
    e = d.equilibrium()
    for u in np.linspace(0.01, 0.99, 25):
        assert e.cdf(e.ppf(u)) == pytest.approx(u, abs=1e-9)


@pytest.mark.parametrize("d", UNIT_MEAN, ids=IDS)
def test_equilibrium_mean(d):
    if d.infinite_variance:
        assert math.isinf(d.equilibrium().mean)
        return
    ref, _ = integrate.quad(lambda y: 1.0 - d.equilibrium().cdf(y), 0.0, np.inf, limit=400)
    assert d.equilibrium().mean == pytest.approx(ref, rel=1e-6)


def test_pareto_infinite_variance_flag():
    assert Pareto(1.5, 1.0 / 3.0).infinite_variance
    assert not Pareto(3.0, 2.0 / 3.0).infinite_variance


@pytest.mark.parametrize("d", [x for x in UNIT_MEAN if not x.infinite_variance], ids=lambda d: repr(d))
def test_sample_mean_within_four_standard_errors(d):
    rng = np.random.default_rng(12345)
    n = 10**6
    u = rng.random(n)
    x = np.fromiter((d.from_uniform(float(v)) for v in u), dtype=float, count=n)
    se = math.sqrt(d.variance / n)
    assert abs(x.mean() - 1.0) <= 4 * se + 1e-12


def test_erlang_equilibrium_mean_by_sampling():
    rng = np.random.default_rng(2)
    e = Erlang(2, 2.0).equilibrium()
    n = 10**6
    x = sample_many(e, rng, n)
    assert e.mean == pytest.approx(0.75)
    assert abs(x.mean() - 0.75) <= 4 * x.std() / math.sqrt(n)


@pytest.mark.parametrize("d", UNIT_MEAN, ids=IDS)
def test_samples_follow_cdf(d):
    rng = np.random.default_rng(7)
    n = 10**4
    assert ks_statistic(sample_many(d, rng, n), d.cdf) < 1.63 / math.sqrt(n) or isinstance(d, Deterministic)


@pytest.mark.parametrize("d", UNIT_MEAN, ids=IDS)
def test_equilibrium_samples_follow_equilibrium_cdf(d):
    rng = np.random.default_rng(8)
    e = d.equilibrium()
    n = 10**4
    assert ks_statistic(sample_many(e, rng, n), e.cdf) < 1.63 / math.sqrt(n)


def test_exponential_equilibrium_samples_vs_exp1():
    rng = np.random.default_rng(3)
    x = sample_many(Exponential(1.0).equilibrium(), rng, 10**4)
    assert ks_statistic(x, lambda t: 1 - math.exp(-t) if t > 0 else 0.0) < 0.02


def test_round_trip_config():
    for d in UNIT_MEAN:
        cfg = d.to_config()
        assert make_distribution(cfg["family"], cfg["params"]) == d


@given(
    st.sampled_from(UNIT_MEAN),
    st.floats(min_value=0.05, max_value=20.0),
    st.floats(min_value=0.0, max_value=5.0),
)
def test_rescaling_commutes_with_cdf(d, factor, x):
    s = d.scaled(factor)
    assert s.mean == pytest.approx(factor, rel=1e-12)
    assert s.cdf(x * factor) == pytest.approx(d.cdf(x), abs=1e-9)
    assert s.with_mean(1.0).mean == pytest.approx(1.0, rel=1e-12)


@given(st.sampled_from(UNIT_MEAN), st.floats(min_value=0.0, max_value=50.0), st.floats(min_value=0.0, max_value=50.0))
def test_equilibrium_cdf_is_monotone_and_lipschitz(d, a, b):
    e = d.equilibrium()
    lo, hi = min(a, b), max(a, b)
    ga, gb = e.cdf(lo), e.cdf(hi)
    assert 0.0 <= ga <= gb <= 1.0 + 1e-12
    # density 1 - F is at most 1
    assert gb - ga <= hi - lo + 1e-9


@given(st.sampled_from(UNIT_MEAN), st.floats(min_value=0.0, max_value=1.0, exclude_max=True))
def test_inverse_cdf_is_a_quantile(d, u):
    x = d.ppf(u)
    assert x >= 0.0
    assert d.cdf(x) >= u - 1e-9


@pytest.mark.parametrize("d", [H2, Erlang(2, 2.0)], ids=["h2", "erlang2"])
def test_composition_map_has_the_quantile_law(d):
    # from_uniform is a cheaper map than ppf; both must give the same law
    rng = np.random.default_rng(9)
    n = 10**4
    x = sample_many(d, rng, n)
    assert ks_statistic(x, d.cdf) < 1.63 / math.sqrt(n)
    e = d.equilibrium()
    y = sample_many(e, rng, n)
    assert ks_statistic(y, e.cdf) < 1.63 / math.sqrt(n)
