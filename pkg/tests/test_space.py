import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hammerstein import GridFunction, TimeGrid, build_box_space, build_finite_state_space, integrate
from hammerstein.errors import InvalidArgument, Unsupported


def test_finite_space_basics():
    sp = build_finite_state_space([0.5, 1.5, 2.0])
    assert sp.size == 3 and len(sp) == 3
    assert sp.total_mass == pytest.approx(4.0)
    assert list(sp.points) == [0, 1, 2]
    with pytest.raises(ValueError):
        sp.weights[0] = 9.0


@pytest.mark.parametrize("w", [[], [1.0, -1.0], [np.nan], [[1.0, 2.0]]])
def test_finite_space_rejects_bad_weights(w):
    with pytest.raises(InvalidArgument):
        build_finite_state_space(w)


def test_box_space_trapezoid_weights():
    sp = build_box_space(1, 5, 2.0)
    np.testing.assert_allclose(sp.weights, [0.25, 0.5, 0.5, 0.5, 0.25])
    np.testing.assert_allclose(sp.coords[:, 0], [0, 0.5, 1, 1.5, 2])
    sq = build_box_space(2, 4, 1.0)
    assert sq.size == 16 and sq.total_mass == pytest.approx(1.0)
    # row-major: the last axis varies fastest
    np.testing.assert_allclose(sq.coords[1], [0.0, 1 / 3])


def test_box_space_dimension_limit():
    with pytest.raises(Unsupported):
        build_box_space(3, 4, 1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 40), st.floats(0.1, 10.0))
def test_box_integrates_affine_exactly(n, L):
    sp = build_box_space(1, n, L)
    x = sp.coords[:, 0]
    assert integrate(sp, 3.0 * x + 1.0) == pytest.approx(1.5 * L**2 + L, rel=1e-12)


def test_time_grid_and_refine():
    g = TimeGrid(2.0, 8)
    assert len(g) == 9 and g.dt == pytest.approx(0.25)
    f = g.refine(4)
    assert f.steps == 32 and f.horizon == 2.0
    np.testing.assert_allclose(f.nodes[::4], g.nodes)
    assert hash(g) == hash(TimeGrid(2.0, 8))
    for bad in [(0.0, 4), (1.0, 0), (np.inf, 3)]:
        with pytest.raises(InvalidArgument):
            TimeGrid(*bad)


def test_grid_function_validation():
    sp = build_finite_state_space([1.0, 1.0])
    tg = TimeGrid(1.0, 4)
    u = GridFunction.constant(sp, tg, 2.0)
    assert u.sup() == 2.0
    assert not u.values.flags.writeable
    with pytest.raises(InvalidArgument):
        GridFunction(sp, tg, np.zeros((2, 4)))
    with pytest.raises(InvalidArgument):
        u.with_values(np.full((2, 5), np.inf))
