"""Small worked cases with hand-derived answers, one per operation."""

import numpy as np
import pytest

from hammerstein import (GridFunction, ProblemInstance, TimeGrid, WeightField, build_box_space,
                         build_finite_state_space, certify, constant_source, constant_weight,
                         contraction_factor, damp, error_bound, integrate, kernel_mass,
                         matrix_semigroup_kernel, neumann_box_kernel, ode_reference,
                         power_nonlinearity, propagate_source, residual, saturating_nonlinearity,
                         shift_problem, solve, solve_eta, solve_xi, verify_kernel_bounds,
                         volterra_reference)
from hammerstein.certificate import l_limits, sigma_star
from hammerstein.kernel import Kernel
from hammerstein.solver import volterra_term

from conftest import desk_stochastic

SQRT = power_nonlinearity(0.5)


@pytest.mark.parametrize("w,mass", [([1.0], 1.0), ([0.5, 0.5], 1.0), ([1, 1, 1, 1], 4.0)])
def test_finite_space_mass(w, mass):
    assert build_finite_state_space(w).total_mass == mass


def test_box_weights():
    np.testing.assert_allclose(build_box_space(1, 3, 1.0).weights, [0.25, 0.5, 0.25])
    np.testing.assert_allclose(build_box_space(1, 2, 2.0).weights, [1.0, 1.0])
    w = build_box_space(2, 3, 1.0).weights.reshape(3, 3)
    assert w[0, 0] == pytest.approx(1 / 16) and w[1, 1] == pytest.approx(1 / 4)
    assert w.sum() == pytest.approx(1.0)


def test_integrate_cases():
    sp = build_finite_state_space([0.5, 0.5])
    assert integrate(sp, 1.0) == 1.0
    assert integrate(sp, [2.0, 0.0]) == 1.0
    assert integrate(build_finite_state_space([0.3, 0.7]), [0.0, 1.0]) == 0.7


def test_matrix_kernel_cases():
    assert kernel_mass(matrix_semigroup_kernel([[0.0]]), 0, 3.0) == 1.0
    assert kernel_mass(matrix_semigroup_kernel([[0.5, 0.0], [0.0, 0.5]]), 1, 2.0) == \
        pytest.approx(np.exp(-1.0), abs=1e-15)


def test_neumann_constant_mode_and_long_time():
    sp = build_box_space(1, 9, 2.0)
    k0 = neumann_box_kernel(sp, 1.0, 0)
    np.testing.assert_allclose(k0.density(0.3), 0.5)
    assert kernel_mass(k0, 4, 0.3) == pytest.approx(1.0)
    k = neumann_box_kernel(sp, 1.0, 32)
    np.testing.assert_allclose(k.density(50.0), 0.5, atol=1e-12)


def test_wrong_lambda_declaration_is_flagged():
    good = damp(matrix_semigroup_kernel([[0.0]]), 1.0)
    liar = Kernel(good.space, good.transfer_fn, 0.0, 0.0)
    rep = verify_kernel_bounds(liar, [0], [0.5, 1.0])
    assert not rep.passed and rep.lower_violation > 0.3
    assert verify_kernel_bounds(matrix_semigroup_kernel([[1.0, -1.0], [-1.0, 1.0]]),
                                [0, 1], [0.1, 1.0]).upper_violation == 0.0


def test_saturating_limit():
    G = saturating_nonlinearity(3.0, 0.5)
    assert G(np.array(1e6)) == pytest.approx(3.0)
    assert np.all(np.diff(G(np.linspace(0, 100, 1000))) > 0)


def test_roots_from_table():
    assert solve_xi(SQRT, 2.0) == pytest.approx(4.0, abs=1e-10)
    assert solve_xi(SQRT, 0.0) == pytest.approx(1.0, abs=1e-10)
    assert solve_xi(saturating_nonlinearity(2.0, 0.5), 1.0) == pytest.approx(2.6013, abs=1e-3)
    assert solve_eta(SQRT, 0.0, 2.0, 1.0) == pytest.approx(4.0, abs=1e-10)
    assert solve_eta(SQRT, 0.0, 1.0, 0.5) == pytest.approx(4.0, abs=1e-10)
    assert solve_eta(SQRT, 1.0, 1.0, 1.0) == pytest.approx((3 + np.sqrt(5)) / 2, abs=1e-10)


def test_shift_cases(stoch):
    src = GridFunction.constant(stoch.space, stoch.time, 0.5)
    p = shift_problem(stoch, src, lambda v: np.sqrt(np.asarray(v) + 1.0), 1.0)
    u = np.linspace(0, 4, 9)
    np.testing.assert_allclose(p.nonlinearity.G(u), np.sqrt(u))
    np.testing.assert_allclose(p.g, 1.5)
    same = shift_problem(stoch, GridFunction(stoch.space, stoch.time, stoch.g), SQRT.G, 0.0)
    np.testing.assert_array_equal(same.g, stoch.g)
    sol = solve(p, tol=1e-12, force=True)
    assert residual(p, sol.u) <= sol.residual + 1e-15


def test_propagate_source_cases():
    grid = TimeGrid(2.0, 40)
    cons = matrix_semigroup_kernel([[1.0, -1.0], [-1.0, 1.0]])
    np.testing.assert_allclose(propagate_source(cons, 0.0, 1.0, grid).g.values,
                               np.tile(grid.nodes, (2, 1)), atol=1e-13)
    d = damp(matrix_semigroup_kernel([[0.0]]), 2.0)
    g = propagate_source(d, 0.0, 1.0, grid).g.values[0]
    assert np.max(np.abs(g - (1 - np.exp(-2 * grid.nodes)) / 2)) < 1e-3


def one_state_decay(nt):
    sp = build_finite_state_space([1.0])
    grid = TimeGrid(1.0, nt)
    w = WeightField(lambda t: np.atleast_2d(np.exp(-np.asarray(t, dtype=float))), 1)
    return ProblemInstance(matrix_semigroup_kernel([[0.0]], sp), SQRT, w,
                           constant_source(sp, grid, 0.0))


def test_volterra_term_cases():
    errs = []
    for nt in (50, 100):
        p = one_state_decay(nt)
        out = volterra_term(p, np.ones(p.g.shape))[0]
        assert out[0] == 0.0
        errs.append(abs(out[-1] - (1 - np.exp(-1.0))))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.02)
    assert np.all(volterra_term(p, np.zeros(p.g.shape)) == 0.0)


def test_cert_table_cases():
    assert contraction_factor(lambda s: np.sqrt(s), 0.25, 0.5) == pytest.approx(0.738796, abs=1e-6)
    ks = [contraction_factor(np.sqrt, 0.25, e) for e in (0.5, 0.9, 0.999999)]
    assert ks[0] > ks[1] > ks[2] and ks[2] == pytest.approx(2 / 3, abs=1e-5)
    cert = certify(desk_stochastic())
    assert error_bound(cert, 0) == cert.C


def test_l_limit_and_sigma1_on_desk(stoch):
    xi = stoch.threshold()
    assert xi == pytest.approx(1.457107, abs=1e-6)
    lo, hi = l_limits(stoch, xi)
    assert lo == pytest.approx(0.207107, abs=1e-6)
    assert 0 < hi < 1
    s1, _, _ = sigma_star(stoch, xi)
    assert s1 <= 0.207107 * 1.01


def test_small_beta0_degrades_but_certifies():
    cert = certify(desk_stochastic(g=1e-8))
    assert cert.degraded and 0 < cert.sigma < 1e-3


def test_ode_zero_data():
    grid = TimeGrid(1.0, 10)
    ref = ode_reference([[1.0, -1.0], [-1.0, 1.0]], 0.0, 0.0, constant_weight(2, 1.0), SQRT,
                        grid, grid.dt / 10)
    assert np.all(ref.values == 0.0)


def test_ode_linear_matches_propagate_source():
    Q = np.array([[1.0, -1.0], [-0.5, 0.5]])
    grid = TimeGrid(2.0, 100)
    k = matrix_semigroup_kernel(Q)
    src = propagate_source(k, [1.0, 0.0], [0.2, 0.4], grid)
    ref = ode_reference(Q, [1.0, 0.0], [0.2, 0.4], constant_weight(2, 0.0), SQRT, grid,
                        grid.dt / 10)
    assert np.max(np.abs(src.g.values - ref.values)) < 1e-4


def test_fine_reference_zero_source():
    p = desk_stochastic(nt=40, g=0.0)
    assert np.all(volterra_reference(p, 4).values == 0.0)
