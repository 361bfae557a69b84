"""Independent reference solutions.

Neither routine touches the Picard machinery of :mod:`hammerstein.solver`;
they share only problem data.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidArgument, OracleFailure
from .problem import Nonlinearity, ProblemInstance, WeightField
from .space import DiscreteMeasureSpace, GridFunction, TimeGrid

BLOWUP = 1e12


def _forcing(f, nx):
    if f is None:
        return lambda t: np.zeros(nx)
    if isinstance(f, GridFunction):
        nodes, table = f.time.nodes, f.values
        return lambda t: np.array([np.interp(t, nodes, row) for row in table])
    if callable(f):
        return lambda t: np.broadcast_to(np.asarray(f(t), dtype=float), (nx,))
    const = np.broadcast_to(np.asarray(f, dtype=float), (nx,)).copy()
    return lambda t: const


def ode_reference(Q, u0, f, weight: WeightField, nonlinearity: Nonlinearity,
                  grid: TimeGrid, dt_fine: float,
                  space: DiscreteMeasureSpace | None = None) -> GridFunction:
    """Classical RK4 for du/dt = -Q u + h(t) G(u) + f(t), sampled on ``grid``.

    Its mild form is the integral equation with K = e^{-tQ}. ``dt_fine``
    must be at least 4x finer than the grid spacing.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    nx = Q.shape[0]
    u = np.broadcast_to(np.asarray(u0, dtype=float), (nx,)).copy()
    if grid.dt / dt_fine < 4 - 1e-9:
        raise InvalidArgument("oracle step must be at least 4x finer than the grid")
    sub = math.ceil(grid.dt / dt_fine - 1e-9)
    h = grid.dt / sub
    G = nonlinearity.G
    force = _forcing(f, nx)

    def rhs(t, y):
        hv = np.asarray(weight.values(np.array([t])), dtype=float)[:, 0]
        return -Q @ y + hv * G(np.maximum(y, 0.0)) + force(t)

    out = np.empty((nx, len(grid)))
    out[:, 0] = u
    t = 0.0
    for i in range(grid.steps):
        t0 = grid.nodes[i]
        for j in range(sub):
            t = t0 + j * h
            k1 = rhs(t, u)
            k2 = rhs(t + h / 2, u + h / 2 * k1)
            k3 = rhs(t + h / 2, u + h / 2 * k2)
            k4 = rhs(t + h, u + h * k3)
            u = u + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > BLOWUP:
            raise OracleFailure(f"RK4 blow-up near t={grid.nodes[i + 1]:g}")
        out[:, i + 1] = u
    if space is None:
        from .space import build_finite_state_space
        space = build_finite_state_space(np.ones(nx))
    return GridFunction(space, grid, out)


def _march(problem: ProblemInstance, max_inner: int = 200, tol: float = 1e-15) -> np.ndarray:
    """Trapezoidal Volterra solve by marching in time.

    At node i the history j < i is known and the diagonal term (P(0) = I)
    leaves one scalar equation per point, u = b + c G(u), solved by
    increasing fixed-point iteration from u = b.
    """
    grid = problem.time
    dt = grid.dt
    n1 = len(grid)
    g, h = problem.g, problem.h
    G = problem.nonlinearity.G
    kernel = problem.kernel
    lags = np.stack([kernel.transfer(float(t)) for t in grid.nodes])
    u = np.empty_like(g)
    F = np.empty_like(g)
    u[:, 0] = g[:, 0]
    F[:, 0] = h[:, 0] * G(np.maximum(u[:, 0], 0.0))
    for i in range(1, n1):
        known = 0.5 * lags[i] @ F[:, 0]
        if i > 1:
            # lags[i - j] for j = 1 .. i-1
            known += np.einsum("jab,bj->a", lags[i - 1:0:-1], F[:, 1:i])
        b = g[:, i] + dt * known
        c = 0.5 * dt * h[:, i]
        x = b.copy()
        for _ in range(max_inner):
            nxt = b + c * G(np.maximum(x, 0.0))
            done = np.max(np.abs(nxt - x)) <= tol * (1 + np.max(np.abs(nxt)))
            x = nxt
            if done:
                break
        else:
            raise OracleFailure(f"inner iteration stalled at t={grid.nodes[i]:g}")
        if np.max(np.abs(x)) > BLOWUP:
            raise OracleFailure("fine-grid solution blew up")
        u[:, i] = x
        F[:, i] = h[:, i] * G(np.maximum(x, 0.0))
    return u


def volterra_reference(problem: ProblemInstance, refinement: int = 4,
                       max_points: int = 64) -> GridFunction:
    """Fine-grid trapezoidal solution restricted to the problem's grid."""
    if refinement < 4 or int(refinement) != refinement:
        raise InvalidArgument("refinement factor must be an integer >= 4")
    if problem.space.size > max_points:
        raise InvalidArgument(f"volterra_reference is limited to {max_points} points")
    fine = problem.refined(int(refinement))
    u = _march(fine)
    return GridFunction(problem.space, problem.time, u[:, :: int(refinement)])
