import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from irregdim.errors import ValidationError
from irregdim.interval_maps import doubling_map, make_linear_map, make_manneville_pomeau
from irregdim.measures import (
    bernoulli,
    cylinder_mass,
    empirical_measure,
    entropy,
    ergodic_approximation,
    log_cylinder_masses,
    lyapunov,
    markov,
    measure_from_descriptor,
    mix,
    sample_word,
    sample_words,
    word_masses,
)
from irregdim.symbolic import all_words

probs = st.floats(0.01, 0.99)


def random_kernel(draw_rows, m, k):
    P = np.array(draw_rows).reshape(m ** k, m)
    return P / P.sum(axis=1, keepdims=True)


def test_bernoulli_entropy_and_masses():
    mu = bernoulli(0.3)
    assert entropy(mu) == pytest.approx(-(0.3 * math.log(0.3) + 0.7 * math.log(0.7)))
    assert cylinder_mass(mu, "112") == pytest.approx(0.3 * 0.3 * 0.7)


def test_markov_validation():
    with pytest.raises(ValidationError):
        markov([[0.5, 0.6], [0.5, 0.5]])
    with pytest.raises(ValidationError):
        markov([[0.5, 0.5], [0.5, 0.5]], stationary=[0.9, 0.1])
    with pytest.raises(ValidationError):
        bernoulli([0.5, 0.4])


def test_markov_order_one_stationary():
    mu = markov([[0.9, 0.1], [0.5, 0.5]])
    assert mu.stationary == pytest.approx([5 / 6, 1 / 6])
    h = -(5 / 6) * (0.9 * math.log(0.9) + 0.1 * math.log(0.1)) - (1 / 6) * math.log(0.5)
    assert entropy(mu) == pytest.approx(h)


def test_mixture_entropy_is_average():
    mu = mix(bernoulli(0.5), bernoulli([1.0, 0.0]), 0.5)
    assert entropy(mu) == pytest.approx(math.log(2) / 2)
    assert mu.is_mixture


def test_descriptor():
    mu = measure_from_descriptor({"mix": [{"bernoulli": [0.5, 0.5]}, {"bernoulli": [0.9, 0.1]}], "weights": [0.25, 0.75]})
    assert word_masses(mu, 1) == pytest.approx([0.25 * 0.5 + 0.75 * 0.9, 0.25 * 0.5 + 0.75 * 0.1])
    with pytest.raises(ValidationError):
        measure_from_descriptor({"bernoulli": [0.2, 0.3, 0.5]}, m=2)


@given(st.lists(probs, min_size=4, max_size=4), st.integers(1, 6))
def test_masses_sum_to_one_and_marginalize(rows, n):
    mu = markov(random_kernel(rows, 2, 1))
    w = word_masses(mu, n + 1)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    # summing over the last symbol gives the shorter cylinders
    assert w.reshape(-1, 2).sum(axis=1) == pytest.approx(word_masses(mu, n), abs=1e-14)
    # and over the first symbol (shift invariance)
    assert w.reshape(2, -1).sum(axis=0) == pytest.approx(word_masses(mu, n), abs=1e-14)


@given(st.lists(probs, min_size=8, max_size=8), st.integers(2, 6))
def test_log_masses_agree_with_table_order2(rows, n):
    mu = markov(random_kernel(rows, 2, 2), order=2)
    W = all_words(2, n)
    assert np.exp(log_cylinder_masses(mu, W)) == pytest.approx(word_masses(mu, n), rel=1e-12)


def test_sampling_frequencies():
    w = sample_words(bernoulli(0.3), 1000, 50, np.random.default_rng(1))
    assert np.mean(w == 1) == pytest.approx(0.3, abs=0.01)
    assert np.array_equal(sample_word(bernoulli(0.3), 50, 7), sample_word(bernoulli(0.3), 50, 7))


def test_markov_sampling_transition_frequencies():
    mu = markov([[0.9, 0.1], [0.4, 0.6]])
    w = sample_words(mu, 20000, 1, np.random.default_rng(3))[0]
    after1 = w[1:][w[:-1] == 1]
    assert np.mean(after1 == 1) == pytest.approx(0.9, abs=0.02)


def test_empirical_and_ergodic_approximation():
    mu = markov([[0.8, 0.2], [0.3, 0.7]])
    w = sample_word(mu, 50000, 5)
    est = empirical_measure(w, 1)
    assert est.transition == pytest.approx(mu.transition, abs=0.02)
    approx = ergodic_approximation(mix(bernoulli(0.5), bernoulli(0.9), 0.5), 1)
    assert not approx.is_mixture
    assert word_masses(approx, 1) == pytest.approx([0.7, 0.3], abs=1e-6)


def test_lyapunov_affine_exact():
    T = make_linear_map([(0, 0.5), (0.75, 1)])
    lo, hi = lyapunov(T, bernoulli(0.3))
    assert lo == hi == pytest.approx(0.3 * math.log(2) + 0.7 * math.log(4))


def test_lyapunov_nonlinear_bracket_and_warning():
    T = make_manneville_pomeau(0.5)
    lo, hi = lyapunov(T, bernoulli(0.5), depth=8)
    assert 0 < lo < hi
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        lyapunov(T, bernoulli(0.5), depth=2, tol=1e-6)
    assert any(issubclass(r.category, RuntimeWarning) for r in rec)


@given(st.lists(probs, min_size=4, max_size=4), st.floats(0.05, 0.45), st.floats(0.55, 0.95))
def test_ruelle_inequality_linear(rows, a, b):
    T = make_linear_map([(0, a), (b, 1)])
    mu = markov(random_kernel(rows, 2, 1))
    lo, _ = lyapunov(T, mu)
    assert entropy(mu) <= lo + 1e-9
