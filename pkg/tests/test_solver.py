import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hammerstein import (GridFunction, ProblemInstance, TimeGrid, build_finite_state_space,
                         constant_source, constant_weight, matrix_semigroup_kernel, picard_step,
                         power_nonlinearity, propagate_source, residual, solve, uniqueness_probe)
from hammerstein.errors import AssumptionFailure, InvalidArgument, InvalidIterate
from hammerstein.kernel import damp
from hammerstein.solver import convolve

from conftest import DESK_Q, desk_stochastic


def convolve_loops(P, F, dt):
    n1 = F.shape[1]
    out = np.zeros_like(F)
    for i in range(1, n1):
        for j in range(i + 1):
            c = 0.5 if j in (0, i) else 1.0
            out[:, i] += c * dt * P[i - j] @ F[:, j]
    return out


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(1, 12), st.integers(0, 2**31 - 1))
def test_convolve_matches_double_loop(nx, n, seed):
    rng = np.random.default_rng(seed)
    P = rng.uniform(0, 1, (n + 1, nx, nx))
    F = rng.uniform(0, 1, (nx, n + 1))
    np.testing.assert_allclose(convolve(P, F, 0.1), convolve_loops(P, F, 0.1), atol=1e-13)


def one_state(nt, T=2.0):
    """u = 1 + int_0^t u^(1/3) ds, exact solution (1 + 2t/3)^(3/2)."""
    sp = build_finite_state_space([1.0])
    grid = TimeGrid(T, nt)
    return ProblemInstance(matrix_semigroup_kernel([[0.0]], sp), power_nonlinearity(1 / 3),
                           constant_weight(1, 1.0), constant_source(sp, grid, 1.0))


def test_exact_solution_second_order():
    errs = []
    for nt in (40, 80, 160):
        p = one_state(nt)
        # h has no envelopes here, so the stochastic checks cannot pass
        sol = solve(p, tol=1e-14, force=True)
        exact = (1 + 2 * p.time.nodes / 3) ** 1.5
        errs.append(np.max(np.abs(sol.u.values[0] - exact)))
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(np.abs(rates - 2.0) < 0.1), rates
    assert errs[-1] < 1e-5


def test_gate_blocks_failed_assumptions():
    with pytest.raises(AssumptionFailure, match="envelope"):
        solve(one_state(10))
    sol = solve(one_state(10), force=True)
    assert sol.forced and sol.converged


def test_upper_start_decreases(stoch):
    sol = solve(stoch, tol=1e-12, keep_iterates=True)
    assert sol.converged and sol.monotone
    assert sol.iterates[0][0, 0] == pytest.approx(sol.threshold)
    steps = [float((b - a).max()) for a, b in zip(sol.iterates, sol.iterates[1:])]
    assert max(steps) <= 1e-12
    assert sol.residual < 1e-12


def test_lower_start_increases(stoch):
    sol = solve(stoch, start="lower", tol=1e-12, keep_iterates=True)
    assert sol.converged and sol.monotone
    steps = [float((a - b).max()) for a, b in zip(sol.iterates, sol.iterates[1:])]
    assert max(steps) <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_picard_map_preserves_order(seed):
    p = desk_stochastic(nt=40)
    rng = np.random.default_rng(seed)
    u = rng.uniform(0, 2, p.g.shape)
    v = u + rng.uniform(0, 1, p.g.shape)
    pu, pv = picard_step(p, u).values, picard_step(p, v).values
    assert np.all(pv - pu >= -1e-14)
    assert np.all(pu >= p.g - 1e-14)


def test_picard_step_rejects_negative(stoch):
    with pytest.raises(InvalidIterate):
        picard_step(stoch, -np.ones(stoch.g.shape))
    # tiny roundoff below zero is clamped
    picard_step(stoch, np.full(stoch.g.shape, -1e-14))


def test_solution_is_fixed_point(stoch):
    sol = solve(stoch, tol=1e-13)
    again = picard_step(stoch, sol.u)
    assert np.max(np.abs(again.values - sol.u.values)) < 1e-12
    assert residual(stoch, sol.u) == pytest.approx(sol.residual)


def test_custom_start_and_bad_args(stoch):
    start = GridFunction.constant(stoch.space, stoch.time, 1.0)
    sol = solve(stoch, start=start, tol=1e-12)
    ref = solve(stoch, tol=1e-12)
    assert sol.start == "custom"
    np.testing.assert_allclose(sol.u.values, ref.u.values, atol=1e-11)
    with pytest.raises(InvalidArgument):
        solve(stoch, start="middle")
    with pytest.raises(InvalidArgument):
        solve(stoch, tol=0.0)


def test_non_convergence_is_reported(stoch):
    sol = solve(stoch, tol=1e-14, max_iter=3)
    assert not sol.converged and sol.iterations == 3
    assert sol.summary()["converged"] is False


def test_uniqueness_probe_desk(stoch, substoch):
    for p in (stoch, substoch):
        rep = uniqueness_probe(p)
        assert rep.passed
        assert rep.gap < 1e-10 and rep.order_violation <= 1e-12


def test_zero_source_has_two_limits():
    # sqrt is not Lipschitz at 0, so with g = 0 the zero function and a
    # positive function both solve the equation; the probe must not pass
    p = desk_stochastic(g=0.0)
    low = solve(p, start="lower", tol=1e-12)
    assert low.iterations == 1 and np.all(low.u.values == 0.0)
    up = solve(p, start="upper", tol=1e-12)
    assert up.residual < 1e-10 and up.u.values[:, -1].min() > 0.1
    rep = uniqueness_probe(p)
    assert not rep.passed and rep.gap > 0.1
    assert rep.order_violation <= 1e-12


def test_propagate_source_damped_closed_form():
    sp = build_finite_state_space([1.0])
    k = damp(matrix_semigroup_kernel([[0.0]], sp), 1.0)
    errs = []
    for nt in (50, 100):
        grid = TimeGrid(2.0, nt)
        src = propagate_source(k, 0.5, 0.3, grid)
        t = grid.nodes
        exact = 0.5 * np.exp(-t) + 0.3 * (1 - np.exp(-t))
        errs.append(np.max(np.abs(src.g.values[0] - exact)))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
    # builder re-tabulates exactly on a refined grid
    fine = src.resample(grid.refine(2))
    np.testing.assert_allclose(fine.g.values[0, 0], 0.5)


def test_propagate_source_conservative_constant():
    # P(t)1 = 1 for a conservative generator, so u0 = c, f = 0 gives g = c
    k = matrix_semigroup_kernel(DESK_Q)
    src = propagate_source(k, [0.2, 0.2], 0.0, TimeGrid(1.0, 20))
    np.testing.assert_allclose(src.g.values, 0.2, atol=1e-14)
    with pytest.raises(InvalidArgument):
        propagate_source(k, [-1.0, 0.0], 0.0, TimeGrid(1.0, 4))
