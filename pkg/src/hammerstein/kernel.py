"""Heat kernels K(x, y; t) on finite quadrature spaces.

A kernel is stored through its transfer operator

    P(t)[x, y] = K(x, y; t) * w_y,

so that (P(t) f)(x) approximates the integral of K(x, y; t) f(y) dmu(y).
P(0) is the identity (the semigroup starts at the identity).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .errors import InvalidArgument, InvalidGenerator
from .space import DiscreteMeasureSpace, TimeGrid, build_finite_state_space

STOCHASTIC = "stochastic"
SUBSTOCHASTIC = "substochastic"


@dataclass(frozen=True, eq=False)
class Kernel:
    space: DiscreteMeasureSpace
    transfer_fn: Callable[[float], np.ndarray]
    lambda_minus: float
    lambda_plus: float
    label: str = "kernel"
    # bound on the sup-norm of the dropped series tail at time t, if truncated
    tail_bound: Callable[[float], float] | None = None
    generator: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        if not (self.lambda_plus >= self.lambda_minus >= 0):
            raise InvalidArgument("need lambda_plus >= lambda_minus >= 0")

    @property
    def regime(self) -> str:
        if self.lambda_minus == 0 and self.lambda_plus == 0:
            return STOCHASTIC
        return SUBSTOCHASTIC

    def transfer(self, t: float) -> np.ndarray:
        if t == 0:
            return np.eye(self.space.size)
        if t < 0:
            raise InvalidArgument("t must be non-negative")
        return self.transfer_fn(t)

    def density(self, t: float) -> np.ndarray:
        """Full matrix K(., .; t) for t > 0."""
        if not t > 0:
            raise InvalidArgument("kernel density needs t > 0")
        return self.transfer_fn(t) / self.space.weights[None, :]

    def evaluate(self, x, y, t: float):
        return self.density(t)[x, y]

    def transfer_stack(self, grid: TimeGrid) -> np.ndarray:
        """P at all grid lags t_0..t_n, shape (n+1, nx, nx); memoized per grid."""
        key = (grid.horizon, grid.steps)
        with self._lock:
            stack = self._cache.get(key)
            if stack is None:
                stack = np.stack([self.transfer(float(t)) for t in grid.nodes])
                stack.flags.writeable = False
                self._cache[key] = stack
        return stack


def _as_generator(Q) -> np.ndarray:
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise InvalidGenerator("generator must be a square matrix")
    if not np.all(np.isfinite(Q)):
        raise InvalidGenerator("generator has non-finite entries")
    return Q


def generator_violation(Q) -> tuple[float, float]:
    """Worst positive off-diagonal entry and worst negative row sum of Q."""
    Q = _as_generator(Q)
    off = Q - np.diag(np.diag(Q))
    rows = Q.sum(axis=1)
    return float(max(off.max(initial=0.0), 0.0)), float(max(-rows.min(), 0.0))


def matrix_semigroup_kernel(Q, space: DiscreteMeasureSpace | None = None,
                            atol: float = 1e-12) -> Kernel:
    """Kernel of the semigroup e^{-tQ} on a finite state space.

    Off-diagonal entries of Q must be <= 0 and row sums >= 0. The mass bounds
    come from the extreme row sums, which is exact for such generators.
    """
    Q = _as_generator(Q)
    n = Q.shape[0]
    if space is None:
        space = build_finite_state_space(np.ones(n))
    if space.size != n:
        raise InvalidArgument("generator size does not match the space")
    off, neg = generator_violation(Q)
    if off > atol:
        raise InvalidGenerator(f"positive off-diagonal generator entry ({off:g})")
    if neg > atol:
        raise InvalidGenerator(f"negative generator row sum ({-neg:g})")
    rows = np.clip(Q.sum(axis=1), 0.0, None)
    lam_minus, lam_plus = float(rows.min()), float(rows.max())
    if lam_plus <= atol:
        lam_minus = lam_plus = 0.0
    Qf = Q.copy()
    Qf.flags.writeable = False

    def transfer(t):
        return np.clip(expm(-t * Qf), 0.0, None)

    return Kernel(space, transfer, lam_minus, lam_plus, label="matrix", generator=Qf)


def _cosine_matrix(geom, diffusivity, cutoff, t) -> np.ndarray:
    L = geom.length
    x = geom.axis
    k = np.arange(1, cutoff + 1)
    modes = np.cos(np.pi * np.outer(x, k) / L)
    decay = np.exp(-diffusivity * (np.pi * k / L) ** 2 * t)
    return (1.0 + 2.0 * (modes * decay) @ modes.T) / L


def neumann_tail_bound(length, diffusivity, cutoff, t, dim=1) -> float:
    """Sup-norm bound on the series terms dropped beyond ``cutoff`` at time t."""
    a = diffusivity * (np.pi / length) ** 2 * t
    if a <= 0:
        return np.inf
    # sum_{k>K} e^{-a k^2} <= e^{-a (K+1)^2} / (1 - e^{-a (2K+3)})
    tail = 2.0 / length * np.exp(-a * (cutoff + 1) ** 2) / -np.expm1(-a * (2 * cutoff + 3))
    head = (1.0 + 2.0 * cutoff) / length
    return float((head + tail) ** dim - head**dim)


def neumann_box_kernel(space: DiscreteMeasureSpace, diffusivity: float, cutoff: int) -> Kernel:
    """Reflecting-boundary heat kernel on [0, L]^d by its cosine expansion.

    Modes 0..cutoff are kept along each axis. The constant mode has
    eigenvalue 0, so the exact kernel is stochastic.
    """
    if space.box is None:
        raise InvalidArgument("neumann_box_kernel needs a space from build_box_space")
    if not diffusivity > 0:
        raise InvalidArgument("diffusivity must be positive")
    if int(cutoff) != cutoff or cutoff < 0:
        raise InvalidArgument("cutoff must be a non-negative integer")
    geom, cutoff = space.box, int(cutoff)
    weights = space.weights

    def transfer(t):
        K1 = _cosine_matrix(geom, diffusivity, cutoff, t)
        K = K1 if geom.dim == 1 else np.kron(K1, K1)
        return K * weights[None, :]

    def tail(t):
        return neumann_tail_bound(geom.length, diffusivity, cutoff, t, geom.dim)

    return Kernel(space, transfer, 0.0, 0.0, label=f"neumann_box(cutoff={cutoff})",
                  tail_bound=tail)


def damp(base: Kernel, m: float) -> Kernel:
    """Kernel of L + m: multiply by e^{-mt} and shift both mass exponents by m."""
    if not m > 0:
        raise InvalidArgument("damping m must be positive")
    base_fn = base.transfer_fn

    def transfer(t):
        return np.exp(-m * t) * base_fn(t)

    gen = None
    if base.generator is not None:
        gen = base.generator + m * np.eye(base.space.size)
        gen.flags.writeable = False
    return Kernel(base.space, transfer, base.lambda_minus + m, base.lambda_plus + m,
                  label=f"damp({base.label}, m={m:g})", tail_bound=base.tail_bound,
                  generator=gen)


def kernel_mass(kernel: Kernel, x: int, t: float) -> float:
    if not t > 0:
        raise InvalidArgument("kernel_mass needs t > 0")
    return float(kernel.transfer_fn(t)[x].sum())


@dataclass(frozen=True)
class MassReport:
    samples: list
    masses: np.ndarray
    lower_violation: float
    upper_violation: float
    min_density: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return (self.lower_violation <= self.tolerance
                and self.upper_violation <= self.tolerance
                and self.min_density >= -self.tolerance)


def verify_kernel_bounds(kernel: Kernel, xs, ts, tolerance: float = 1e-10) -> MassReport:
    """Check e^{-t lam+} <= mass(x, t) <= e^{-t lam-} and K >= 0 on samples.

    Violations are reported as non-negative amounts by which a bound is
    exceeded; ``min_density`` is the smallest sampled K(x, y; t) over all y.
    """
    xs, ts = list(xs), [float(t) for t in ts]
    if not xs or not ts:
        raise InvalidArgument("need non-empty sample sets")
    samples, masses = [], []
    lower = upper = 0.0
    min_dens = np.inf
    for t in ts:
        P = kernel.transfer(t) if t > 0 else None
        if P is None:
            raise InvalidArgument("sample times must be positive")
        dens = P / kernel.space.weights[None, :]
        for x in xs:
            mass = float(P[x].sum())
            samples.append((x, t))
            masses.append(mass)
            lower = max(lower, np.exp(-t * kernel.lambda_plus) - mass)
            upper = max(upper, mass - np.exp(-t * kernel.lambda_minus))
            min_dens = min(min_dens, float(dens[x].min()))
    return MassReport(samples, np.array(masses), float(lower), float(upper),
                      float(min_dens), tolerance)
