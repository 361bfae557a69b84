"""A-priori convergence constants for the upper-start Picard iteration.

Given sigma in (0, 1) with sigma v_1 <= v_2 <= v_1, and a concavity modulus
phi, the iterates satisfy

    0 <= u_{m+1} - u <= C k^m,   k = (1 - phi(eps sigma)) / (1 - eps sigma),
                                 C = (threshold - beta)(1 - sigma) / (1 - k).

sigma is sigma* = min(sigma_1, sigma_2) in the stochastic regime and
sigma# = (lambda-/lambda+) sigma_sharp in the substochastic one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as spi

from .errors import CertificateFailure, InvalidArgument
from .kernel import STOCHASTIC
from .problem import ExponentialRate, ProblemInstance

SAFETY = 0.99
EPSILON_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))
DEGRADED_BELOW = 1e-3


def _quad(f, a, b) -> float:
    val, _ = spi.quad(f, a, b, limit=400, epsabs=1e-14, epsrel=1e-12)
    return float(val)


def _stochastic_parts(problem: ProblemInstance, xi: float):
    if problem.regime != STOCHASTIC:
        raise InvalidArgument("this constant belongs to the stochastic regime")
    if not problem.beta0 > 0:
        raise CertificateFailure("beta0 = 0: no rate certificate")
    w = problem.weight
    if w.p1 is None or w.p2 is None:
        raise InvalidArgument("stochastic certificate needs envelopes p1, p2")
    return problem.nonlinearity.G, w.p1, w.p2, xi - problem.beta, problem.beta0


def _weighted_integral(p1, G, a, shift, t) -> float:
    """int_0^t p1(s) G(a P1(s) + shift) ds, P1 the antiderivative of p1."""
    if isinstance(p1, ExponentialRate):
        # substitute q = P1(s), dq = p1(s) ds
        top = p1.integral(t)
        return _quad(lambda q: float(G(a * q + shift)), 0.0, top)
    return _quad(lambda s: float(p1(s)) * float(G(a * p1.integral(s) + shift)), 0.0, t)


def l_function(problem: ProblemInstance, xi: float, t: float) -> float:
    """Ratio lower bound L(t) for v_2 / v_1 on the early time window.

    L(t) = int_0^t p1(s) G(G(xi-beta+beta0) P1(s) + beta0) ds
           / ((xi - beta) int_0^t p2(s) ds)
    """
    if not t > 0:
        raise InvalidArgument("l_function needs t > 0")
    G, p1, p2, gap, b0 = _stochastic_parts(problem, xi)
    a = float(G(gap + b0))
    den = gap * p2.integral(t)
    if den <= 0:
        raise CertificateFailure("int_0^t p2 vanishes")
    return _weighted_integral(p1, G, a, b0, t) / den


def l_limits(problem: ProblemInstance, xi: float) -> tuple[float, float]:
    """(lim_{t->0+} L, lim_{t->inf} L)."""
    G, p1, p2, gap, b0 = _stochastic_parts(problem, xi)
    ratio = p1.limit_ratio_at_zero(p2, problem.time.nodes)
    if ratio is None:
        raise CertificateFailure("lim p1/p2 at 0+ could not be established")
    at_zero = float(G(b0)) / gap * ratio
    a = float(G(gap + b0))
    at_inf = _weighted_integral(p1, G, a, b0, np.inf) / (gap * p2.total())
    return at_zero, at_inf


def l_sample_times(problem: ProblemInstance, n: int = 400) -> np.ndarray:
    top = max(1e3, 100.0 * problem.time.horizon)
    return np.unique(np.concatenate([np.geomspace(1e-6, top, n), problem.time.nodes[1:]]))


def sigma_star(problem: ProblemInstance, xi: float, times=None) -> tuple[float, float, float]:
    """(sigma_1, sigma_2, sigma*) for the stochastic regime."""
    G, p1, p2, gap, b0 = _stochastic_parts(problem, xi)
    if times is None:
        times = l_sample_times(problem)
    vals = [l_function(problem, xi, float(t)) for t in times]
    vals.extend(l_limits(problem, xi))
    sigma1 = SAFETY * min(vals)
    sigma2 = _weighted_integral(p1, G, float(G(gap)), 0.0, problem.T0) / gap
    s = min(sigma1, sigma2)
    if not 0 < s < 1:
        raise CertificateFailure(f"sigma* = {s:g} outside (0, 1)")
    return sigma1, sigma2, s


def sigma_sharp(problem: ProblemInstance, eta: float) -> tuple[float, float]:
    """(sigma_sharp, sigma#) for the substochastic regime."""
    if problem.regime == STOCHASTIC:
        raise InvalidArgument("sigma_sharp belongs to the substochastic regime")
    G = problem.nonlinearity.G
    alpha, _ = problem.h_bounds()
    lm, lp = problem.kernel.lambda_minus, problem.kernel.lambda_plus
    beta, b0, T0 = problem.beta, problem.beta0, problem.T0
    if not (alpha > 0 and b0 > 0 and lp >= lm > 0):
        raise CertificateFailure("need alpha > 0, beta0 > 0 and lambda+ >= lambda- > 0")
    gap = eta - beta
    first = alpha * float(G(b0)) / (gap * lm)
    inner = alpha / lp * float(G(gap)) * -np.expm1(-T0 * lp)
    second = alpha / (gap * lm) * float(G(inner))
    sharp = min(first, second)
    hash_ = lm / lp * sharp
    for name, v in (("sigma_sharp", sharp), ("sigma#", hash_)):
        if not 0 < v < 1:
            raise CertificateFailure(f"{name} = {v:g} outside (0, 1)")
    return sharp, hash_


def contraction_factor(phi, sigma: float, epsilon: float) -> float:
    if not (0 < sigma < 1 and 0 < epsilon < 1):
        raise InvalidArgument("need sigma and epsilon in (0, 1)")
    x = epsilon * sigma
    k = (1.0 - float(phi(x))) / (1.0 - x)
    if not 0 < k < 1:
        raise CertificateFailure(f"k = {k:.17g} outside (0, 1); phi gives no geometric rate")
    return k


def best_epsilon(phi, sigma: float, grid=EPSILON_GRID) -> tuple[float, float]:
    """Epsilon from ``grid`` minimizing k, with that k."""
    ks = [(contraction_factor(phi, sigma, e), e) for e in grid]
    k, e = min(ks)
    return e, k


@dataclass
class ConvergenceCertificate:
    regime: str
    threshold: float
    beta: float
    beta0: float
    T0: float
    sigma: float
    epsilon: float
    k: float
    C: float
    parts: dict = field(default_factory=dict)

    @property
    def degraded(self) -> bool:
        return self.sigma < DEGRADED_BELOW

    def bound(self, m: int) -> float:
        return error_bound(self, m)

    def table(self, m_max: int) -> np.ndarray:
        return self.C * self.k ** np.arange(m_max + 1)

    def as_dict(self) -> dict:
        key = "xi" if self.regime == STOCHASTIC else "eta"
        return {"regime": self.regime, key: self.threshold, "beta": self.beta,
                "beta0": self.beta0, "T0": self.T0, "sigma": self.sigma,
                "epsilon": self.epsilon, "k": self.k, "C": self.C,
                "degraded": self.degraded, **self.parts}


def certify(problem: ProblemInstance, epsilon="auto", threshold: float | None = None,
            times=None) -> ConvergenceCertificate:
    phi = problem.nonlinearity.phi
    if phi is None:
        raise CertificateFailure("no concavity modulus phi")
    thr = problem.threshold() if threshold is None else threshold
    if problem.regime == STOCHASTIC:
        s1, s2, sigma = sigma_star(problem, thr, times)
        parts = {"sigma_1": s1, "sigma_2": s2, "sigma_star": sigma}
    else:
        sharp, sigma = sigma_sharp(problem, thr)
        parts = {"sigma_sharp": sharp, "sigma_hash": sigma}
    if epsilon == "auto":
        eps, k = best_epsilon(phi, sigma)
    else:
        eps = float(epsilon)
        k = contraction_factor(phi, sigma, eps)
    C = (thr - problem.beta) * (1.0 - sigma) / (1.0 - k)
    if not C > 0:
        raise CertificateFailure(f"C = {C:g} is not positive")
    return ConvergenceCertificate(problem.regime, thr, problem.beta, problem.beta0,
                                  problem.T0, sigma, eps, k, C, parts)


def error_bound(certificate: ConvergenceCertificate, m: int) -> float:
    """C k^m, bounding sup (u_{m+1} - u)."""
    return certificate.C * certificate.k**m
