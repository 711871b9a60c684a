import numpy as np
import pytest
from hypothesis import given, strategies as st

from irregdim.errors import EscapeError, ValidationError
from irregdim.interval_maps import cantor_map, doubling_map, make_farey, make_linear_map, make_manneville_pomeau
from irregdim.symbolic import (
    all_words,
    as_word,
    conjugacy_residual,
    cylinder,
    cylinder_pass,
    cylinders_csv,
    itinerary,
    lambda_tilde,
    max_diameters,
    project,
    shift,
    word_index,
)

MAPS = [doubling_map(), cantor_map(), make_linear_map([(0, 0.5), (0.75, 1)]),
        make_manneville_pomeau(0.5), make_farey()]
words2 = st.lists(st.integers(1, 2), min_size=1, max_size=40)


def test_doubling_cylinders_are_dyadic():
    c = cylinder(doubling_map(), "121")
    assert (c.a, c.b) == (pytest.approx(0.25), pytest.approx(0.375))
    assert c.diameter == pytest.approx(1 / 8)


def test_cantor_cylinder():
    c = cylinder(cantor_map(), "12")
    assert (c.a, c.b) == (pytest.approx(2 / 9), pytest.approx(1 / 3))


def test_deep_diameters_stay_finite_in_log_space():
    c = cylinder(doubling_map(), [1, 2] * 1000)
    assert c.log_diameter == pytest.approx(-2000 * np.log(2))
    assert lambda_tilde(doubling_map(), [1, 2] * 1000) == pytest.approx(np.log(2))


def test_word_helpers():
    assert as_word("121").tolist() == [1, 2, 1]
    assert shift((1, 2, 1)) == (2, 1)
    assert word_index(all_words(3, 2), 3).tolist() == list(range(9))
    with pytest.raises(ValidationError):
        as_word([0, 1])
    with pytest.raises(ValidationError):
        as_word("13", m=2)


def test_itinerary_of_one_third():
    assert itinerary(doubling_map(), 1 / 3, 4) == (1, 2, 1, 2)


def test_itinerary_escape_in_cantor_gap():
    with pytest.raises(EscapeError) as info:
        itinerary(cantor_map(), 0.5, 3)
    assert info.value.time == 1


def test_cylinders_csv_header():
    text = cylinders_csv([cylinder(doubling_map(), "1")])
    assert text.splitlines()[0] == "word,a,b,diameter,log_diameter"


def test_max_diameters_decrease_for_mp():
    d = max_diameters(make_manneville_pomeau(0.5), [1, 2, 4, 8])
    assert np.all(np.diff(d) < 0)
    # the cylinder at the parabolic point shrinks only polynomially
    assert d[-1] > 2.0 ** -8


@pytest.mark.parametrize("T", MAPS, ids=lambda T: T.kind + str(T.params))
@given(w=words2, k=st.integers(1, 5))
def test_cylinders_nest(T, w, k):
    parent = cylinder(T, w)
    child = cylinder(T, w + [1 + (k % 2)] * k)
    tol = 1e-12 + 1e-9 * parent.diameter
    assert parent.a - tol <= child.a and child.b <= parent.b + tol
    assert child.log_diameter <= parent.log_diameter + 1e-12


@pytest.mark.parametrize("T", MAPS[:3], ids=["doubling", "cantor", "linear"])
@given(w=st.lists(st.integers(1, 2), min_size=30, max_size=30))
def test_conjugacy_residual_linear_depth30(T, w):
    assert conjugacy_residual(T, w) < 1e-9


@given(w=st.lists(st.integers(1, 2), min_size=1, max_size=25))
def test_project_then_itinerary_recovers_word(w):
    T = make_linear_map([(0, 0.4), (0.6, 1.0)])
    x = project(T, w)
    assert itinerary(T, x, len(w)) == tuple(w)


def test_batch_matches_single():
    T = make_manneville_pomeau(0.8)
    W = all_words(2, 6)
    res = cylinder_pass(T, W)
    for i in (0, 17, 63):
        c = cylinder(T, W[i])
        assert res.log_diameter[i] == pytest.approx(c.log_diameter)
