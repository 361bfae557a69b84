"""Problem data for u = g + int_0^t int_X K(x,y;t-s) h(y,s) G(u(y,s)) dmu(y) ds.

Nonlinearities G with concavity modulus phi, weight fields h with envelopes
p1 <= h <= p2, sources g, the assembled instance, the assumption checker,
the threshold roots xi and eta, and the vertical shift transform.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import integrate as spi

from .errors import InvalidArgument, InvalidShift, NoRoot
from .kernel import STOCHASTIC, Kernel, verify_kernel_bounds
from .space import DiscreteMeasureSpace, GridFunction, TimeGrid

# ---------------------------------------------------------------------------
# nonlinearities


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """G: [0, inf) -> [0, inf) and its concavity modulus phi (may be None).

    Both callables must accept numpy arrays.
    """

    G: Callable[[np.ndarray], np.ndarray]
    phi: Callable[[np.ndarray], np.ndarray] | None = None
    label: str = "G"
    strongly_concave: bool = False

    def __call__(self, u):
        return self.G(u)


def power_nonlinearity(alpha: float) -> Nonlinearity:
    """G(u) = u^alpha with phi(s) = s^alpha."""
    if not 0 < alpha < 1:
        raise InvalidArgument("alpha must lie in (0, 1)")

    def G(u):
        return np.power(np.maximum(u, 0.0), alpha)

    return Nonlinearity(G, G, label=f"power(alpha={alpha:g})", strongly_concave=True)


def saturating_nonlinearity(gamma: float, alpha: float) -> Nonlinearity:
    """G(u) = gamma (1 - exp(-u^alpha)) with phi(s) = s^alpha."""
    if not gamma > 1:
        raise InvalidArgument("gamma must exceed 1")
    if not 0 < alpha < 1:
        raise InvalidArgument("alpha must lie in (0, 1)")

    def G(u):
        return -gamma * np.expm1(-np.power(np.maximum(u, 0.0), alpha))

    def phi(s):
        return np.power(np.maximum(s, 0.0), alpha)

    return Nonlinearity(G, phi, label=f"saturating(gamma={gamma:g}, alpha={alpha:g})",
                        strongly_concave=True)


# ---------------------------------------------------------------------------
# time envelopes and weight fields


class RateFunction:
    """A non-negative function of time with an antiderivative from 0.

    The base class integrates numerically; subclasses may override with
    closed forms.
    """

    def __init__(self, func: Callable[[np.ndarray], np.ndarray], label: str = "rate"):
        self.func = func
        self.label = label

    def __call__(self, t):
        return self.func(np.asarray(t, dtype=float))

    def integral(self, t: float) -> float:
        """Integral from 0 to t (t may be inf)."""
        if t == 0:
            return 0.0
        val, _ = spi.quad(lambda s: float(self(s)), 0.0, t, limit=200)
        return float(val)

    def total(self) -> float:
        return self.integral(np.inf)

    def limit_ratio_at_zero(self, other: "RateFunction", times) -> float | None:
        """lim_{t->0+} self/other estimated at the two smallest sample times.

        Returns None if the two estimates disagree by more than 5%.
        """
        t = np.sort(np.asarray(times, dtype=float))
        t = t[t > 0][:2]
        r = np.asarray(self(t), dtype=float) / np.asarray(other(t), dtype=float)
        if len(r) < 2:
            return float(r[0]) if len(r) else None
        if abs(r[0] - r[1]) > 0.05 * max(abs(r[0]), abs(r[1])):
            return None
        return float(r[0])


class ExponentialRate(RateFunction):
    """p(t) = scale * r * exp(-r t); its total integral is ``scale``."""

    def __init__(self, rate: float, scale: float = 1.0):
        if not rate > 0:
            raise InvalidArgument("rate must be positive")
        if not scale >= 0:
            raise InvalidArgument("scale must be non-negative")
        self.rate = float(rate)
        self.scale = float(scale)
        super().__init__(self._eval, label=f"{scale:g}*{rate:g}*exp(-{rate:g}t)")

    def _eval(self, t):
        return self.scale * self.rate * np.exp(-self.rate * t)

    def integral(self, t: float) -> float:
        if np.isinf(t):
            return self.scale
        return float(-self.scale * np.expm1(-self.rate * t))

    def total(self) -> float:
        return self.scale

    def limit_ratio_at_zero(self, other, times) -> float | None:
        if isinstance(other, ExponentialRate):
            den = other.scale * other.rate
            return self.scale * self.rate / den if den > 0 else None
        return super().limit_ratio_at_zero(other, times)


@dataclass(frozen=True, eq=False)
class WeightField:
    """h(x, t) >= 0 evaluated as ``values(times) -> (n_points, n_times)``.

    ``alpha``/``gamma`` are declared inf/sup of h when known in closed form.
    """

    values: Callable[[np.ndarray], np.ndarray]
    n_points: int
    p1: RateFunction | None = None
    p2: RateFunction | None = None
    alpha: float | None = None
    gamma: float | None = None
    label: str = "h"

    def on_grid(self, grid: TimeGrid) -> np.ndarray:
        h = np.asarray(self.values(grid.nodes), dtype=float)
        if h.shape != (self.n_points, len(grid)):
            raise InvalidArgument("weight field returned the wrong shape")
        return h


def mixture_weight(p1: RateFunction, p2: RateFunction, lambda0) -> WeightField:
    """h(x, t) = p1(t) (1 - lambda0(x)) + p2(t) lambda0(x)."""
    lam = np.atleast_1d(np.asarray(lambda0, dtype=float)).copy()
    if lam.ndim != 1 or np.any(lam < 0) or np.any(lam > 1) or not np.all(np.isfinite(lam)):
        raise InvalidArgument("lambda0 must take values in [0, 1]")
    lam.flags.writeable = False

    def values(t):
        t = np.asarray(t, dtype=float)
        return np.outer(1.0 - lam, p1(t)) + np.outer(lam, p2(t))

    return WeightField(values, lam.size, p1=p1, p2=p2, label="mixture")


def canonical_mixture(n_points: int, rate: float = 1.0, ratio: float = 0.5,
                      lambda0=0.5, scale: float = 1.0) -> WeightField:
    """Mixture with p2 = scale*r*e^{-rt} and p1 = ratio*p2."""
    if not 0 <= ratio <= 1:
        raise InvalidArgument("ratio must lie in [0, 1]")
    lam = np.broadcast_to(np.asarray(lambda0, dtype=float), (n_points,))
    p2 = ExponentialRate(rate, scale)
    p1 = ExponentialRate(rate, ratio * scale)
    return mixture_weight(p1, p2, lam)


def constant_weight(n_points: int, value: float) -> WeightField:
    """h identically equal to ``value``; alpha = gamma = value."""
    if not value >= 0:
        raise InvalidArgument("weight must be non-negative")

    def values(t):
        return np.full((n_points, np.size(t)), float(value))

    return WeightField(values, n_points, alpha=float(value), gamma=float(value),
                       label=f"constant({value:g})")


# ---------------------------------------------------------------------------
# sources


@dataclass(frozen=True, eq=False)
class SourceField:
    """The inhomogeneous term g with beta = sup g and beta0 = inf g on t <= T0.

    Both are taken over the truncated grid domain. ``builder``, when given,
    re-tabulates g on another time grid (used by refinement oracles).
    """

    g: GridFunction
    T0: float
    builder: Callable[[TimeGrid], np.ndarray] | None = None
    beta: float = field(init=False)
    beta0: float = field(init=False)

    def __post_init__(self):
        if not self.T0 > 0:
            raise InvalidArgument("T0 must be positive")
        vals = self.g.values
        nodes = self.g.time.nodes
        object.__setattr__(self, "beta", float(np.max(np.abs(vals))))
        early = nodes <= self.T0 * (1 + 1e-12)
        object.__setattr__(self, "beta0", float(vals[:, early].min()))

    def resample(self, grid: TimeGrid) -> "SourceField":
        if self.builder is not None:
            vals = self.builder(grid)
        else:
            old = self.g.time.nodes
            vals = np.array([np.interp(grid.nodes, old, row) for row in self.g.values])
        return SourceField(GridFunction(self.g.space, grid, vals), self.T0, self.builder)


def constant_source(space, grid, value: float, T0: float | None = None) -> SourceField:
    if not value >= 0:
        raise InvalidArgument("source value must be non-negative")

    def builder(tg):
        return np.full((space.size, len(tg)), float(value))

    return SourceField(GridFunction(space, grid, builder(grid)),
                       T0 if T0 is not None else grid.horizon, builder)


# ---------------------------------------------------------------------------
# assembled instance


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    """The assembled integral equation on a finite space and uniform grid.

    ``shift`` is non-zero for instances built by :func:`shift_problem`; the
    solution of the shifted equation is u - shift.
    """

    kernel: Kernel
    nonlinearity: Nonlinearity
    weight: WeightField
    source: SourceField
    shift: float = 0.0
    h: np.ndarray = field(init=False, repr=False)
    transfer: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        sp = self.kernel.space
        if self.source.g.space is not sp:
            if self.source.g.space.size != sp.size:
                raise InvalidArgument("source and kernel live on different spaces")
        if self.weight.n_points != sp.size:
            raise InvalidArgument("weight field has the wrong number of points")
        if np.any(self.source.g.values < 0):
            raise InvalidArgument("source g must be non-negative")
        h = self.weight.on_grid(self.time)
        h.flags.writeable = False
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "transfer", self.kernel.transfer_stack(self.time))

    @property
    def space(self) -> DiscreteMeasureSpace:
        return self.kernel.space

    @property
    def time(self) -> TimeGrid:
        return self.source.g.time

    @property
    def regime(self) -> str:
        return self.kernel.regime

    @property
    def g(self) -> np.ndarray:
        return self.source.g.values

    @property
    def beta(self) -> float:
        return self.source.beta

    @property
    def beta0(self) -> float:
        return self.source.beta0

    @property
    def T0(self) -> float:
        return self.source.T0

    def h_bounds(self) -> tuple[float, float]:
        """(alpha, gamma): declared values, else extremes over the grid."""
        a = self.weight.alpha if self.weight.alpha is not None else float(self.h.min())
        c = self.weight.gamma if self.weight.gamma is not None else float(self.h.max())
        return a, c

    def threshold(self) -> float:
        """xi (stochastic) or eta (substochastic) for this instance."""
        if self.regime == STOCHASTIC:
            return solve_xi(self.nonlinearity, self.beta)
        return solve_eta(self.nonlinearity, self.beta, self.h_bounds()[1],
                         self.kernel.lambda_minus)

    def refined(self, factor: int) -> "ProblemInstance":
        return replace(self, source=self.source.resample(self.time.refine(factor)))


# ---------------------------------------------------------------------------
# threshold roots


def _rightmost_root(F, lo: float, scale: float, what: str) -> float:
    """Root of F on (lo, inf) given F(lo) <= 0, by doubling then bisection."""
    ceiling = 2.0**60 * scale
    step = scale
    hi = lo + step
    while F(hi) <= 0:
        lo = hi
        step *= 2.0
        hi = lo + step
        if step > ceiling:
            raise NoRoot(f"no sign change for {what} below {ceiling:g}")
    flo, fhi = F(lo), F(hi)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = F(mid)
        if fm <= 0:
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
    return lo if abs(flo) <= abs(fhi) else hi


def solve_xi(G: Nonlinearity, beta: float) -> float:
    """Root xi > beta of xi - G(xi) = beta (rightmost bracket)."""
    if not beta >= 0:
        raise InvalidArgument("beta must be non-negative")

    def F(x):
        return x - float(G(x)) - beta

    xi = _rightmost_root(F, beta, max(beta, 1.0), "xi")
    if abs(F(xi)) > 1e-12 * (1 + xi):
        raise NoRoot(f"xi iteration stalled with residual {F(xi):g}")
    return xi


def solve_eta(G: Nonlinearity, beta: float, gamma: float, lambda_minus: float) -> float:
    """Root eta > beta of gamma G(eta) = (eta - beta) lambda_minus."""
    if not lambda_minus > 0:
        raise InvalidArgument("eta requires lambda_minus > 0")
    if not (beta >= 0 and gamma > 0):
        raise InvalidArgument("need beta >= 0 and gamma > 0")

    def F(x):
        return (x - beta) * lambda_minus - gamma * float(G(x))

    eta = _rightmost_root(F, beta, max(beta, 1.0), "eta")
    if abs(F(eta)) > 1e-12 * (1 + eta):
        raise NoRoot(f"eta iteration stalled with residual {F(eta):g}")
    return eta


# ---------------------------------------------------------------------------
# assumption checking

EXISTENCE = "existence"
RATE = "rate"


@dataclass(frozen=True)
class CheckEntry:
    name: str
    passed: bool
    worst_violation: float = 0.0
    witness: tuple | None = None
    sampled: bool = True
    scope: str = EXISTENCE
    detail: str = ""

    def as_dict(self) -> dict:
        return {
            "name": self.name, "passed": bool(self.passed), "sampled": self.sampled,
            "scope": self.scope, "worst_violation": float(self.worst_violation),
            "witness": None if self.witness is None else [float(w) for w in self.witness],
            "detail": self.detail,
        }


@dataclass(frozen=True)
class AssumptionReport:
    regime: str
    entries: tuple[CheckEntry, ...]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def passed_for(self, scope: str) -> bool:
        scopes = {EXISTENCE} if scope == EXISTENCE else {EXISTENCE, RATE}
        return all(e.passed for e in self.entries if e.scope in scopes)

    def failures(self) -> list[CheckEntry]:
        return [e for e in self.entries if not e.passed]

    def __getitem__(self, name: str) -> CheckEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def as_dict(self) -> dict:
        return {"regime": self.regime, "passed": self.passed,
                "entries": [e.as_dict() for e in self.entries]}


def _worst(violations, points) -> tuple[float, tuple | None]:
    violations = np.asarray(violations, dtype=float)
    if violations.size == 0:
        return 0.0, None
    i = int(np.argmax(violations))
    w = float(violations.flat[i])
    return max(w, 0.0), (tuple(np.atleast_1d(points[i])) if w > 0 else None)


def _entry(name, viol, pts, tol, scope=EXISTENCE, sampled=True, detail=""):
    worst, witness = _worst(viol, pts)
    return CheckEntry(name, worst <= tol, worst, witness, sampled, scope, detail)


def _concavity_entries(f, label, upper, rng, n, tol, scope):
    """Midpoint concavity of f on [0, upper] over a grid plus random pairs."""
    grid = np.linspace(0.0, upper, n)
    a, b = np.meshgrid(grid, grid, indexing="ij")
    a, b = a.ravel(), b.ravel()
    ra, rb = rng.uniform(0, upper, 4 * n), rng.uniform(0, upper, 4 * n)
    a, b = np.concatenate([a, ra]), np.concatenate([b, rb])
    scale = max(1.0, float(np.max(np.abs(f(grid)))))
    viol = (f(a) + f(b)) / 2 - f((a + b) / 2)
    return _entry(f"{label} concave", viol, np.column_stack([a, b]), tol * scale, scope)


def check_assumptions(problem: ProblemInstance, n_samples: int = 101,
                      seed: int = 0, tol: float = 1e-10) -> AssumptionReport:
    """Sample every hypothesis behind existence and the convergence rate.

    Entries tagged ``existence`` gate solving; ``rate`` entries gate the
    convergence certificate.
    """
    rng = np.random.default_rng(seed)
    G, phi = problem.nonlinearity.G, problem.nonlinearity.phi
    grid = problem.time
    regime = problem.regime
    entries: list[CheckEntry] = []
    stochastic = regime == STOCHASTIC

    # kernel
    ts = grid.nodes[1:]
    if ts.size > 8:
        ts = np.unique(np.concatenate([ts[:4], ts[:: max(1, ts.size // 8)], ts[-1:]]))
    xs = range(problem.space.size)
    if problem.space.size > 16:
        xs = sorted(set(rng.choice(problem.space.size, 16, replace=False)) | {0})
    rep = verify_kernel_bounds(problem.kernel, xs, ts, tolerance=tol)
    entries.append(CheckEntry("kernel mass sandwich",
                              rep.lower_violation <= tol and rep.upper_violation <= tol,
                              max(rep.lower_violation, rep.upper_violation)))
    entries.append(CheckEntry("kernel non-negative", rep.min_density >= -tol,
                              max(-rep.min_density, 0.0)))
    if problem.kernel.tail_bound is not None:
        tail = problem.kernel.tail_bound(grid.dt)
        entries.append(CheckEntry("kernel series tail", tail <= 1e-8, tail, (grid.dt,),
                                  sampled=False))
    if not stochastic:
        lm = problem.kernel.lambda_minus
        entries.append(CheckEntry("lambda_minus > 0", lm > 0, max(-lm, 0.0), sampled=False))

    # source
    g = problem.g
    entries.append(CheckEntry("g >= 0", bool(g.min() >= 0), max(-float(g.min()), 0.0)))
    entries.append(CheckEntry("beta finite", bool(np.isfinite(problem.beta)), 0.0,
                              sampled=False))
    entries.append(CheckEntry("beta0 > 0", problem.beta0 > 0, max(-problem.beta0, 0.0),
                              scope=RATE, detail=f"beta0={problem.beta0:.17g}"))

    # threshold
    try:
        thr = problem.threshold()
        entries.append(CheckEntry("xi exists" if stochastic else "eta exists", True, 0.0,
                                  sampled=False, detail=f"{thr:.17g}"))
    except (NoRoot, InvalidArgument) as exc:
        thr = None
        entries.append(CheckEntry("xi exists" if stochastic else "eta exists", False,
                                  np.inf, sampled=False, detail=str(exc)))

    # nonlinearity
    upper = 2.0 * max(thr if thr is not None else 1.0, problem.beta, 1.0)
    u = np.linspace(0.0, upper, 4 * n_samples)
    Gu = G(u)
    entries.append(CheckEntry("G(0)=0", abs(float(G(np.array(0.0)))) <= tol,
                              abs(float(G(np.array(0.0)))), (0.0,)))
    dG = np.diff(Gu)
    # a flat step counts as a violation of size "tiny"
    viol = np.where(dG > 0, 0.0, np.maximum(-dG, np.finfo(float).tiny))
    entries.append(_entry("G strictly increasing", viol, u[1:], 0.0))
    entries.append(_concavity_entries(G, "G", upper, rng, n_samples, tol, EXISTENCE))

    # modulus phi and subhomogeneity
    if phi is None:
        entries.append(CheckEntry("phi valid", False, np.inf, sampled=False, scope=RATE,
                                  detail="no concavity modulus supplied"))
    else:
        s = np.linspace(0.0, 1.0, n_samples)
        ps = phi(s)
        ends = max(abs(float(phi(np.array(0.0)))), abs(float(phi(np.array(1.0))) - 1.0))
        mono = max(float(np.max(ps[:-1] - ps[1:])), 0.0)
        rng_ok = float(ps.min()) >= -tol and float(ps.max()) <= 1 + tol
        entries.append(CheckEntry("phi valid", ends <= tol and mono == 0.0 and rng_ok,
                                  max(ends, mono), scope=RATE,
                                  detail="phi(0)=0, phi(1)=1, increasing into [0,1]"))
        entries.append(_concavity_entries(phi, "phi", 1.0, rng, n_samples, tol, RATE))
        top = thr if thr is not None else upper
        sg, ug = np.meshgrid(np.linspace(0, 1, n_samples), np.linspace(0, top, n_samples),
                             indexing="ij")
        sg = np.concatenate([sg.ravel(), rng.uniform(0, 1, 4 * n_samples)])
        ug = np.concatenate([ug.ravel(), rng.uniform(0, top, 4 * n_samples)])
        viol = phi(sg) * G(ug) - G(sg * ug)
        entries.append(_entry("subhomogeneity G(su) >= phi(s)G(u)", viol,
                              np.column_stack([sg, ug]),
                              tol * max(1.0, float(G(np.array(top)))), RATE))

    # weight field
    h = problem.h
    entries.append(CheckEntry("h >= 0", bool(h.min() >= 0), max(-float(h.min()), 0.0)))
    if stochastic:
        entries.extend(_envelope_entries(problem, tol))
    else:
        alpha, gamma = problem.h_bounds()
        entries.append(CheckEntry("gamma = sup h < inf", bool(np.isfinite(gamma)), 0.0,
                                  sampled=problem.weight.gamma is None,
                                  detail=f"gamma={gamma:.17g}"))
        entries.append(CheckEntry("alpha = inf h > 0", alpha > 0, max(-alpha, 0.0),
                                  sampled=problem.weight.alpha is None, scope=RATE,
                                  detail=f"alpha={alpha:.17g}"))
    return AssumptionReport(regime, tuple(entries))


def _envelope_entries(problem, tol) -> list[CheckEntry]:
    w = problem.weight
    p1, p2 = w.p1, w.p2
    if p1 is None or p2 is None:
        return [CheckEntry("envelope p1<=h<=p2", False, np.inf, sampled=False,
                           detail="stochastic regime needs envelopes p1, p2")]
    t = problem.time.nodes
    h = problem.h
    P1, P2 = np.asarray(p1(t)), np.asarray(p2(t))
    out = []
    viol = np.maximum(P1[None, :] - h, h - P2[None, :])
    idx = np.array([(x, tt) for x in range(h.shape[0]) for tt in t])
    out.append(_entry("envelope p1<=h<=p2", viol.ravel(), idx, tol))
    dense = np.concatenate([t, np.geomspace(1e-6, 10 * max(t[-1], 1.0), 200)])
    gap = float(np.max(np.abs(np.asarray(p2(dense)) - np.asarray(p1(dense)))))
    out.append(CheckEntry("p1 != p2", gap > tol, 0.0 if gap > tol else tol - gap))
    analytic = type(p2).total is not RateFunction.total
    total = p2.total()
    out.append(CheckEntry("int p2 = 1", abs(total - 1.0) <= 1e-8, abs(total - 1.0),
                          sampled=not analytic, detail=f"int p2 = {total:.17g}"))
    lim = p1.limit_ratio_at_zero(p2, t)
    ok = lim is not None and lim > tol
    out.append(CheckEntry("lim p1/p2 > 0", ok, 0.0 if ok else np.inf, scope=RATE,
                          sampled=not (isinstance(p1, ExponentialRate)
                                           and isinstance(p2, ExponentialRate)),
                          detail=f"limit={lim!r}"))
    return out


# ---------------------------------------------------------------------------
# vertical shift


def shift_problem(base: ProblemInstance, shifted_source: GridFunction,
                  shifted_G: Callable[[np.ndarray], np.ndarray], beta0: float,
                  phi=None, tol: float = 1e-12) -> ProblemInstance:
    """Rewrite v = g~ + int K h G~(v) as an unshifted instance.

    G~ lives on [-beta0, inf) with G~(-beta0) = 0. The returned instance has
    g = g~ + beta0 and G(u) = G~(u - beta0); its solutions map back through
    v = u - beta0 (see :func:`back_shift`). Kernel and weight come from
    ``base``.
    """
    if not beta0 >= 0:
        raise InvalidArgument("shift beta0 must be non-negative")
    g0 = float(shifted_G(np.array(-beta0)))
    if abs(g0) > tol:
        raise InvalidShift(f"G~(-beta0) = {g0:g}, expected 0")
    vals = shifted_source.values
    if np.any(vals < 0):
        raise InvalidArgument("shifted source must be non-negative")

    def G(u):
        return shifted_G(np.maximum(np.asarray(u, dtype=float), 0.0) - beta0)

    nl = Nonlinearity(G, phi, label=f"shift({beta0:g})", strongly_concave=True)
    g = GridFunction(shifted_source.space, shifted_source.time, vals + beta0)
    src = SourceField(g, base.T0)
    return ProblemInstance(base.kernel, nl, base.weight, src, shift=float(beta0))


def back_shift(problem: ProblemInstance, u: GridFunction) -> GridFunction:
    return u.with_values(u.values - problem.shift)
