import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from irregdim.dimension import (
    attractor_sample,
    box_counting,
    box_counts,
    default_scales,
    loglog_fit,
)
from irregdim.errors import BudgetError, EstimationError, ValidationError
from irregdim.interval_maps import cantor_map, doubling_map, make_linear_map
from irregdim.symbolic import all_words, cylinder_pass


def test_uniform_points_have_dimension_one():
    x = np.random.default_rng(0).random(10_000)
    assert box_counting(x).slope == pytest.approx(1.0, abs=0.05)


def test_cantor_endpoints():
    res = cylinder_pass(cantor_map(), all_words(2, 10))
    est = box_counting(np.concatenate([res.a, res.b]))
    assert est.slope == pytest.approx(math.log(2) / math.log(3), abs=0.05)


def test_triadic_counts_are_exact():
    # oracle: a triadic box of side 3^-k meets the level-10 Cantor cylinders in 2^k boxes
    mids = attractor_sample(cantor_map(), 10)
    scales = 3.0 ** -np.arange(1, 7)
    assert box_counts(mids, scales).tolist() == [2 ** k for k in range(1, 7)]


def test_repeated_point_has_dimension_zero():
    assert box_counting(np.full(1000, 0.37)).slope == pytest.approx(0.0, abs=0.05)


def test_attractor_samples():
    assert attractor_sample(doubling_map(), 10).size == 1024
    assert box_counting(attractor_sample(doubling_map(), 10)).slope == pytest.approx(1.0, abs=0.05)
    mids = attractor_sample(cantor_map(), 10)
    digits = np.floor(mids[:, None] * 3 ** np.arange(1, 8)) % 3
    assert not np.any(digits == 1)


def test_budget_error():
    T = make_linear_map([(0, 1 / 3), (1 / 3, 2 / 3), (2 / 3, 1)])
    with pytest.raises(BudgetError):
        attractor_sample(T, 12, budget=100_000)


def test_validation():
    with pytest.raises(ValidationError):
        box_counting(np.random.default_rng(0).random(50))
    with pytest.raises(ValidationError):
        box_counting(np.random.default_rng(0).random(2000), scales=[0.1, 0.05])
    with pytest.raises(EstimationError):
        loglog_fit([1, 2, 3], [1, 2, 3])


def test_csv_and_summary():
    est = box_counting(np.random.default_rng(1).random(2000))
    assert est.to_csv().splitlines()[0] == "scale,count,log_inv_scale,log_count"
    assert est.summary()["scales"] == 12


@given(st.integers(0, 2 ** 32 - 1), st.integers(1000, 3000))
def test_counts_monotone_and_bounded(seed, n):
    x = np.r_[np.random.default_rng(seed).beta(0.5, 2.0, n), 1.0]
    scales = default_scales()
    counts = box_counts(x, scales)
    assert np.all(np.diff(counts) >= 0)  # scales decrease
    assert np.all(counts <= np.minimum(n + 1, np.ceil(1 / scales)))
