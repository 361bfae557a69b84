"""Monotone Picard iteration for the discretized integral equation.

Time integrals use the trapezoidal rule on the uniform grid; the kernel is
needed only at grid lags, which the problem instance caches.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionFailure, InvalidArgument, InvalidIterate, ProbeInconclusive
from .kernel import Kernel
from .problem import EXISTENCE, AssumptionReport, ProblemInstance, SourceField, check_assumptions
from .space import GridFunction, TimeGrid

log = logging.getLogger(__name__)

NEG_TOL = 1e-12
MONO_TOL = 1e-12


def convolve(transfer: np.ndarray, F: np.ndarray, dt: float) -> np.ndarray:
    """Trapezoidal sum_{j<=i} c_ij dt P(t_i - t_j) F[:, j] for every node i.

    ``transfer`` has shape (n+1, nx, nx), F has shape (nx, n+1). Row i = 0 is
    zero (empty integral).
    """
    n1 = F.shape[1]
    out = np.zeros_like(F, dtype=float)
    for lag in range(n1):
        out[:, lag:] += transfer[lag] @ F[:, : n1 - lag]
    # halve the j = i and j = 0 end terms
    out -= 0.5 * (transfer[0] @ F)
    out -= 0.5 * np.einsum("iab,b->ai", transfer, F[:, 0])
    return dt * out


def volterra_term(problem: ProblemInstance, u: np.ndarray) -> np.ndarray:
    G = problem.nonlinearity.G
    F = problem.h * G(np.maximum(u, 0.0))
    return convolve(problem.transfer, F, problem.time.dt)


def _check_iterate(u: np.ndarray) -> np.ndarray:
    low = float(u.min())
    if low < -NEG_TOL:
        raise InvalidIterate(f"iterate has negative entry {low:g}")
    return np.maximum(u, 0.0)


def picard_step(problem: ProblemInstance, u) -> GridFunction:
    """One application of u -> g + V[h G(u)]."""
    vals = u.values if isinstance(u, GridFunction) else np.asarray(u, dtype=float)
    vals = _check_iterate(vals)
    out = problem.g + volterra_term(problem, vals)
    return GridFunction(problem.space, problem.time, out)


def residual(problem: ProblemInstance, u) -> float:
    vals = u.values if isinstance(u, GridFunction) else np.asarray(u, dtype=float)
    defect = vals - problem.g - volterra_term(problem, np.maximum(vals, 0.0))
    return float(np.max(np.abs(defect)))


def propagate_source(kernel: Kernel, u0, f, grid: TimeGrid, T0: float | None = None) -> SourceField:
    """Duhamel: g(t) = P(t) u0 + int_0^t P(t - s) f(s) ds.

    ``f`` may be a GridFunction, a callable t -> per-point array, a scalar or
    a per-point constant.
    """
    nx = kernel.space.size
    u0 = np.broadcast_to(np.asarray(u0, dtype=float), (nx,)).copy()
    if np.any(u0 < 0):
        raise InvalidArgument("initial data must be non-negative")

    if isinstance(f, GridFunction):
        if f.values.min() < 0:
            raise InvalidArgument("forcing must be non-negative")
        nodes, table = f.time.nodes, f.values

        def tabulate(tg):
            return np.array([np.interp(tg.nodes, nodes, row) for row in table])
    elif callable(f):
        def tabulate(tg):
            return np.column_stack([np.broadcast_to(f(t), (nx,)) for t in tg.nodes])
    else:
        fc = np.broadcast_to(np.asarray(f, dtype=float), (nx,)).copy()

        def tabulate(tg):
            return np.repeat(fc[:, None], len(tg), axis=1)

    def build(tg):
        F = tabulate(tg)
        if F.min() < 0:
            raise InvalidArgument("forcing must be non-negative")
        P = kernel.transfer_stack(tg)
        g = np.einsum("iab,b->ai", P, u0) + convolve(P, F, tg.dt)
        return np.maximum(g, 0.0)

    g = GridFunction(kernel.space, grid, build(grid))
    return SourceField(g, T0 if T0 is not None else grid.horizon, builder=build)


@dataclass
class Solution:
    u: GridFunction
    history: list[float]
    iterations: int
    residual: float
    converged: bool
    start: str
    monotonicity_violation: float
    threshold: float | None = None
    forced: bool = False
    iterates: list[np.ndarray] | None = field(default=None, repr=False)
    certificate: object | None = None

    @property
    def monotone(self) -> bool:
        return self.monotonicity_violation <= MONO_TOL

    def summary(self) -> dict:
        return {
            "start": self.start, "iterations": self.iterations,
            "converged": self.converged, "residual": self.residual,
            "monotonicity_violation": self.monotonicity_violation,
            "threshold": self.threshold, "forced": self.forced,
            "history": list(self.history),
        }


def _gate(problem, report, force):
    if force:
        return
    if report is None:
        report = check_assumptions(problem)
    if not report.passed_for(EXISTENCE):
        raise AssumptionFailure(report)


def solve(problem: ProblemInstance, start="upper", tol: float = 1e-10,
          max_iter: int = 500, force: bool = False, keep_iterates: bool = False,
          report: AssumptionReport | None = None) -> Solution:
    """Iterate the fixed-point map until successive iterates differ by <= tol.

    ``start`` is "upper" (threshold - beta + g, decreasing), "lower" (g,
    increasing) or a GridFunction. Unless ``force`` is set, the existence
    hypotheses are checked first.
    """
    if not tol > 0 or max_iter < 1:
        raise InvalidArgument("need tol > 0 and max_iter >= 1")
    _gate(problem, report, force)
    threshold = None
    if isinstance(start, GridFunction):
        label, u = "custom", start.values.copy()
    elif start == "upper":
        threshold = problem.threshold()
        label, u = "upper", threshold - problem.beta + problem.g
    elif start == "lower":
        label, u = "lower", problem.g.copy()
    else:
        raise InvalidArgument(f"unknown start {start!r}")

    iterates = [u] if keep_iterates else None
    history: list[float] = []
    worst = 0.0
    converged = False
    for _ in range(max_iter):
        nxt = problem.g + volterra_term(problem, _check_iterate(u))
        diff = nxt - u
        if label == "upper":
            worst = max(worst, float(diff.max()))
        elif label == "lower":
            worst = max(worst, float(-diff.min()))
        history.append(float(np.max(np.abs(diff))))
        u = nxt
        if keep_iterates:
            iterates.append(u)
        if history[-1] <= tol:
            converged = True
            break
    if worst > MONO_TOL:
        log.warning("%s-start iterates not monotone: worst step %.3g", label, worst)
    if not converged:
        log.warning("no convergence after %d iterations (last gap %.3g)", max_iter, history[-1])
    sol = GridFunction(problem.space, problem.time, u)
    return Solution(sol, history, len(history), residual(problem, u), converged, label,
                    worst, threshold, force, iterates)


@dataclass
class UniquenessReport:
    upper: Solution
    lower: Solution
    gap: float
    order_violation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.gap <= 10 * self.tolerance and self.order_violation <= MONO_TOL

    def summary(self) -> dict:
        return {"gap": self.gap, "order_violation": self.order_violation,
                "tolerance": self.tolerance, "passed": self.passed,
                "upper": self.upper.summary(), "lower": self.lower.summary()}


def uniqueness_probe(problem: ProblemInstance, tol: float = 1e-12, max_iter: int = 500,
                     force: bool = False) -> UniquenessReport:
    """Compare the decreasing (upper-start) and increasing (lower-start) limits.

    This is an empirical probe of uniqueness, not a certified construction.
    """
    _gate(problem, None, force)
    up = solve(problem, "upper", tol, max_iter, force=True, keep_iterates=True)
    lo = solve(problem, "lower", tol, max_iter, force=True, keep_iterates=True)
    up.forced = lo.forced = force
    if not (up.converged and lo.converged):
        raise ProbeInconclusive("an iteration branch did not converge")
    n = max(len(up.iterates), len(lo.iterates))
    order = 0.0
    for m in range(n):
        a = up.iterates[min(m, len(up.iterates) - 1)]
        b = lo.iterates[min(m, len(lo.iterates) - 1)]
        order = max(order, float((b - a).max()))
    gap = float(np.max(np.abs(up.u.values - lo.u.values)))
    return UniquenessReport(up, lo, gap, order, tol)
