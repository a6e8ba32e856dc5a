"""Arrival rates, lookahead distributions, and RNG stream discipline."""

import math

import numpy as np
import pytest
import scipy.stats
from hypothesis import given
from hypothesis import strategies as st

from proalloc.traffic import (
    Binomial,
    CapacityScaled,
    Deterministic,
    ErrorModelConfig,
    Request,
    ScalingConfig,
    Tabulated,
    Uniform,
    arrival_rate,
    generate_error_model_slot,
    generate_slot,
    lookahead_pmf,
    max_lookahead,
    sample_error_model_counts,
    sample_lookahead,
    sample_lookahead_counts,
    sample_poisson,
    validate_error_config,
)


def test_arrival_rate_power_law():
    assert arrival_rate(ScalingConfig(5, 0.8)) == pytest.approx(3.6238983183884776, rel=1e-15)
    assert arrival_rate(ScalingConfig(1, 0.0)) == 1.0
    assert arrival_rate(ScalingConfig(7, 0.0)) == 1.0
    assert arrival_rate(ScalingConfig(9, 1.0)) == 9.0


def test_scaling_config_validation():
    with pytest.raises(ValueError):
        ScalingConfig(0, 0.5)
    with pytest.raises(ValueError):
        ScalingConfig(4, 1.5)
    with pytest.raises(ValueError):
        ScalingConfig(4, -0.1)


def test_request_validation():
    Request(id=0, klass="primary", arrival_slot=3, deadline_slot=3)
    with pytest.raises(ValueError):
        Request(id=0, klass="primary", arrival_slot=3, deadline_slot=2)
    with pytest.raises(ValueError):
        Request(id=0, klass="tertiary", arrival_slot=0, deadline_slot=0)
    with pytest.raises(ValueError):
        Request(id=-1, klass="primary", arrival_slot=0, deadline_slot=0)


def test_lookahead_model_validation():
    with pytest.raises(ValueError):
        Deterministic(-1)
    with pytest.raises(ValueError):
        Tabulated(tmin=2, tmax=1, probs=())
    with pytest.raises(ValueError):
        Tabulated(tmin=0, tmax=1, probs=(0.5, 0.6))
    with pytest.raises(ValueError):
        Tabulated(tmin=0, tmax=1, probs=(0.5,))
    with pytest.raises(ValueError):
        Tabulated(tmin=0, tmax=1, probs=(1.1, -0.1))
    with pytest.raises(ValueError):
        Binomial(tmax=3, p=1.2)
    with pytest.raises(ValueError):
        Uniform(tmin=3, tmax=2)
    with pytest.raises(ValueError):
        CapacityScaled(alpha=0.0)
    with pytest.raises(ValueError):
        CapacityScaled(alpha=0.5, fallback_t=0)


def test_binomial_pmf_matches_scipy():
    model = Binomial(tmax=5, p=0.3)
    support, probs = lookahead_pmf(model, 4)
    assert support.tolist() == [0, 1, 2, 3, 4, 5]
    expected = scipy.stats.binom.pmf(support, 5, 0.3)
    np.testing.assert_allclose(probs, expected, rtol=1e-13)
    assert math.fsum(probs) == pytest.approx(1.0, abs=1e-15)


def test_pmf_shapes():
    support, probs = lookahead_pmf(Deterministic(4), 2)
    assert support.tolist() == [4] and probs.tolist() == [1.0]

    support, probs = lookahead_pmf(Uniform(1, 5), 2)
    assert support.tolist() == [1, 2, 3, 4, 5]
    np.testing.assert_allclose(probs, 0.2)

    support, probs = lookahead_pmf(Tabulated(2, 4, (0.2, 0.3, 0.5)), 2)
    assert support.tolist() == [2, 3, 4]
    assert probs.tolist() == [0.2, 0.3, 0.5]

    support, probs = lookahead_pmf(CapacityScaled(alpha=0.5, fallback_t=3), 4)
    assert support.tolist() == [0, 3]
    np.testing.assert_allclose(probs, [0.5, 0.5])

    support, probs = lookahead_pmf(CapacityScaled(alpha=0.5), 1)
    np.testing.assert_allclose(probs, [1.0, 0.0])  # clamp at capacity 1


def test_max_lookahead():
    assert max_lookahead(Deterministic(0)) == 0
    assert max_lookahead(Binomial(5, 0.5)) == 5
    assert max_lookahead(Uniform(2, 7)) == 7
    assert max_lookahead(CapacityScaled(alpha=1.0, fallback_t=2), 16) == 2


def test_sample_poisson_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        sample_poisson(-1.0, rng)
    with pytest.raises(ValueError):
        sample_poisson(math.inf, rng)
    with pytest.raises(ValueError):
        sample_poisson(math.nan, rng)


def test_block_draws_match_scalar_draws():
    # The engines interchange block and scalar draws; they must consume
    # bit-generator state identically.
    rate = 6.3
    block = sample_poisson(rate, np.random.default_rng(1234), size=200)
    gen = np.random.default_rng(1234)
    scalars = [sample_poisson(rate, gen) for _ in range(200)]
    assert block.tolist() == scalars

    split = np.random.default_rng(1234)
    parts = np.concatenate(
        [sample_poisson(rate, split, size=77), sample_poisson(rate, split, size=123)]
    )
    assert parts.tolist() == scalars


def test_zero_rate_consumes_no_state():
    a = np.random.default_rng(99)
    b = np.random.default_rng(99)
    assert sample_poisson(0.0, a) == 0
    assert sample_poisson(0.0, a, size=5).tolist() == [0, 0, 0, 0, 0]
    assert sample_poisson(3.0, a) == sample_poisson(3.0, b)


def test_poisson_large_mean_moments():
    # spot-check the large-mean sampler stays exact in distribution
    n = 200_000
    draws = sample_poisson(1e6, np.random.default_rng(5), size=n)
    mean = draws.mean()
    var = draws.var()
    assert abs(mean - 1e6) < 5 * math.sqrt(1e6 / n)
    assert abs(var / mean - 1.0) < 0.02


def test_deterministic_lookahead_consumes_no_state():
    a = np.random.default_rng(7)
    b = np.random.default_rng(7)
    assert sample_lookahead(Deterministic(3), 2, a) == 3
    assert sample_lookahead(Deterministic(3), 2, a, size=10).tolist() == [3] * 10
    assert a.random() == b.random()


def _check_pmf_agreement(model, capacity, n=100_000, seed=11):
    support, probs = lookahead_pmf(model, capacity)
    draws = sample_lookahead(model, capacity, np.random.default_rng(seed), size=n)
    assert set(np.unique(draws)) <= set(support.tolist())
    counts = np.array([(draws == t).sum() for t in support])
    # five-sigma multinomial bands per support point
    for c, p in zip(counts, probs):
        sigma = math.sqrt(max(p * (1.0 - p) * n, 1.0))
        assert abs(c - n * p) <= 5 * sigma
    # chi-square goodness of fit at the 1e-3 level (positive-probability bins)
    mask = probs > 0
    stat, pvalue = scipy.stats.chisquare(counts[mask], n * probs[mask])
    assert pvalue > 1e-3


def test_lookahead_sampling_matches_pmf():
    _check_pmf_agreement(Binomial(5, 0.5), 4)
    _check_pmf_agreement(Uniform(1, 5), 4, seed=12)
    _check_pmf_agreement(Tabulated(0, 2, (0.6, 0.0, 0.4)), 4, seed=13)
    _check_pmf_agreement(CapacityScaled(alpha=0.5, fallback_t=2), 4, seed=14)


def test_capacity_scaled_tracks_capacity():
    model = CapacityScaled(alpha=1.0, fallback_t=1)
    draws = sample_lookahead(model, 1, np.random.default_rng(3), size=1000)
    assert (draws == 0).all()  # Pr(T=0) clamps to 1 at capacity 1
    draws = sample_lookahead(model, 100, np.random.default_rng(3), size=1000)
    assert (draws == 0).mean() < 0.03  # Pr(T=0) = 0.01 here


def test_sample_lookahead_counts_split():
    model = Uniform(0, 3)
    support, counts = sample_lookahead_counts(model, 4, 500, np.random.default_rng(2))
    assert counts.sum() == 500
    assert len(counts) == len(support)

    support, counts = sample_lookahead_counts(Deterministic(2), 4, 9, np.random.default_rng(2))
    assert counts.tolist() == [9]

    a = np.random.default_rng(8)
    b = np.random.default_rng(8)
    sample_lookahead_counts(model, 4, 0, a)  # zero total consumes no state
    assert a.random() == b.random()

    with pytest.raises(ValueError):
        sample_lookahead_counts(model, 4, -1, np.random.default_rng(2))


def test_sample_lookahead_counts_distribution():
    # one large multinomial split agrees with the PMF within five sigma
    model = Binomial(4, 0.25)
    support, probs = lookahead_pmf(model, 2)
    n = 200_000
    _, counts = sample_lookahead_counts(model, 2, n, np.random.default_rng(21))
    for c, p in zip(counts, probs):
        sigma = math.sqrt(p * (1.0 - p) * n)
        assert abs(c - n * p) <= 5 * sigma


def test_error_model_config():
    cfg = ErrorModelConfig(gamma=0.8, alpha_prime=1.1, alpha_double_prime=0.5, lookahead_t=4)
    assert cfg.gamma_prime == pytest.approx(0.88)
    assert cfg.gamma_double_prime == pytest.approx(0.4)
    with pytest.raises(ValueError):
        ErrorModelConfig(gamma=1.2, alpha_prime=1.0, alpha_double_prime=0.5, lookahead_t=1)
    with pytest.raises(ValueError):
        ErrorModelConfig(gamma=0.5, alpha_prime=-1.0, alpha_double_prime=0.5, lookahead_t=1)
    with pytest.raises(ValueError):
        ErrorModelConfig(gamma=0.5, alpha_prime=1.0, alpha_double_prime=0.5, lookahead_t=-1)


def test_validate_error_config():
    good = ErrorModelConfig(gamma=0.8, alpha_prime=1.1, alpha_double_prime=0.5, lookahead_t=4)
    assert validate_error_config(good, 16) == []

    urgent_heavy = ErrorModelConfig(gamma=0.5, alpha_prime=1.3, alpha_double_prime=1.2, lookahead_t=1)
    problems = validate_error_config(urgent_heavy, 16)
    assert any("exceeds gamma" in p for p in problems)

    undercover = ErrorModelConfig(gamma=0.8, alpha_prime=0.5, alpha_double_prime=0.5, lookahead_t=1)
    problems = validate_error_config(undercover, 16)
    assert any("required load" in p for p in problems)


def test_error_streams_uncorrelated():
    cfg = ErrorModelConfig(gamma=0.8, alpha_prime=1.1, alpha_double_prime=0.5, lookahead_t=4)
    predicted, urgent = sample_error_model_counts(cfg, 16, np.random.default_rng(11), size=1_000_000)
    r = np.corrcoef(predicted, urgent)[0, 1]
    assert abs(r) < 0.005


def test_error_stream_rates():
    cfg = ErrorModelConfig(gamma=0.8, alpha_prime=1.1, alpha_double_prime=0.5, lookahead_t=4)
    predicted, urgent = sample_error_model_counts(cfg, 16, np.random.default_rng(17), size=400_000)
    lam_pred = 16**0.88
    lam_urg = 16**0.4
    assert abs(predicted.mean() - lam_pred) < 5 * math.sqrt(lam_pred / 400_000)
    assert abs(urgent.mean() - lam_urg) < 5 * math.sqrt(lam_urg / 400_000)


def test_generate_slot():
    cfg = ScalingConfig(4, 0.8)
    reqs = generate_slot(cfg, Deterministic(2), slot=10, rng=3, next_id=50)
    assert [r.id for r in reqs] == list(range(50, 50 + len(reqs)))
    assert all(r.arrival_slot == 10 and r.deadline_slot == 12 for r in reqs)
    assert all(r.klass == "primary" for r in reqs)
    assert generate_slot(cfg, Deterministic(2), 0, rng=3, rate=0.0) == []


def test_generate_error_model_slot():
    cfg = ErrorModelConfig(gamma=0.8, alpha_prime=1.1, alpha_double_prime=0.5, lookahead_t=4)
    reqs = generate_error_model_slot(cfg, 16, slot=5, rng=9, next_id=0)
    deadlines = [r.deadline_slot for r in reqs]
    # predicted requests (deadline slot+4) take the low ids, urgent follow
    flip = deadlines.index(5) if 5 in deadlines else len(deadlines)
    assert all(d == 9 for d in deadlines[:flip])
    assert all(d == 5 for d in deadlines[flip:])
    assert [r.id for r in reqs] == list(range(len(reqs)))


@given(
    tmin=st.integers(0, 10),
    span=st.integers(0, 10),
    capacity=st.integers(1, 64),
    seed=st.integers(0, 2**32 - 1),
)
def test_uniform_lookahead_stays_in_support(tmin, span, capacity, seed):
    model = Uniform(tmin, tmin + span)
    draws = sample_lookahead(model, capacity, np.random.default_rng(seed), size=64)
    assert draws.min() >= tmin
    assert draws.max() <= tmin + span
