import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spde_euler.galerkin import State, ValidationError, check_same_space, make_space, norm


def test_unit_weight_collapses_scale():
    sp = make_space(1, [1.0])
    for x in (-2.0, 0.3, 5.0):
        u = State([x], sp)
        assert norm(u, "H") == pytest.approx(norm(u, "V"))


def test_first_mode_unit_vector():
    sp = make_space(4, [1, 2, 4, 8])
    u = State([1, 0, 0, 0], sp)
    assert norm(u) == 1.0 and norm(u, "V") == 1.0 and norm(u, "V2") == 1.0


def test_weighted_sums():
    sp = make_space(2, [1, 4])
    u = State([1, 1], sp)
    assert norm(u, "V") ** 2 == pytest.approx(5.0)
    assert norm(u, "V2") ** 2 == pytest.approx(17.0)
    assert norm(State([0, 1], sp), "Vdual") == pytest.approx(0.5)
    assert norm(State([3], make_space(1, [2])), "V3") == pytest.approx(3 * 2**1.5)


@pytest.mark.parametrize("level", ["H", "V", "V2", "V3", "Vdual", "V2dual", "V3dual"])
def test_zero_state_has_zero_norm(level):
    sp = make_space(3, [1, 2, 3])
    assert norm(State(np.zeros(3), sp), level) == 0.0


@pytest.mark.parametrize("weights", [[0, 1], [-1, 2], [2, 1], [1, np.inf]])
def test_bad_weights_rejected(weights):
    with pytest.raises(ValidationError):
        make_space(2, weights)


def test_shape_and_level_errors():
    sp = make_space(2, [1, 2])
    with pytest.raises(ValidationError):
        State([1, 2, 3], sp)
    with pytest.raises(ValidationError):
        State([np.nan, 0], sp)
    with pytest.raises(ValidationError):
        norm(State([1, 0], sp), "V7")
    with pytest.raises(ValidationError):
        make_space(2, [1, 2], ["velocity", "pressure"])
    with pytest.raises(ValidationError):
        check_same_space(State([1, 0], sp), State([1, 0], make_space(2, [1, 2])))


weights_st = arrays(float, st.integers(1, 8), elements=st.floats(0.1, 50.0)).map(np.sort)


@settings(max_examples=60, deadline=None)
@given(weights_st, st.integers(0, 2**31 - 1))
def test_norm_ordering(w, seed):
    sp = make_space(w.size, w)
    u = np.random.default_rng(seed).standard_normal(w.size)
    lam1 = w[0]
    # Poincare-type chain: lam1 |U|^2 <= ||U||^2 and |U|_{V'}^2 <= |U|^2 / lam1
    assert lam1 * sp.norm_sq(u) <= sp.norm_sq(u, "V") * (1 + 1e-12)
    assert sp.norm_sq(u, "Vdual") <= sp.norm_sq(u) / lam1 * (1 + 1e-12)
    assert lam1 * sp.norm_sq(u, "V") <= sp.norm_sq(u, "V2") * (1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(weights_st, st.integers(0, 2**31 - 1))
def test_duality_pairing(w, seed):
    # (u, v) <= |u|_V |v|_{V'}
    sp = make_space(w.size, w)
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, w.size))
    assert abs(u @ v) <= sp.norm(u, "V") * sp.norm(v, "Vdual") * (1 + 1e-12) + 1e-300


def test_batched_norms_match_rows():
    sp = make_space(3, [1, 2, 5])
    X = np.random.default_rng(0).standard_normal((4, 2, 3))
    out = sp.norm(X, "V2")
    assert out.shape == (4, 2)
    assert out[2, 1] == pytest.approx(sp.norm(X[2, 1], "V2"))
