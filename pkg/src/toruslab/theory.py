"""Closed forms and spectral sums for the subordinated torus process.

Everything here is deterministic: convergence-rate exponents, the
asymptotic variance of eigenfunction averages (with and without drift),
the Gaussian/exponential deviation bound, mollification schedules, heat
traces, and the logarithmic asymptote behind the quadratic-distance
renormalization.  These are the oracles the Monte-Carlo experiments are
checked against.

Conventions: the torus is [0,1)^d, eigenvalues lambda = 4 pi^2 |k|^2,
subordination index alpha in (0,1], and the subordinated semigroup acts on
the complex mode e_k as multiplication by exp(-lambda^alpha t + i theta t)
with theta = 2 pi k.Z for constant drift Z.  Hence the asymptotic variance
of a unit eigenfunction is the explicit integral

    int_0^inf exp(-lambda^alpha t) cos(theta t) dt
        = lambda^alpha / (lambda^(2 alpha) + theta^2),

which doubles as an exact identity check against the resolvent form
lambda^(-alpha) - lambda^(-2 alpha) * Sigma(drift part).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .spectral import FOUR_PI_SQ, SpectralModel, TruncationError, lattice_level_counts

_UNIT_BALL_VOLUME = {1: 2.0, 2: np.pi, 3: 4.0 * np.pi / 3.0, 4: np.pi**2 / 2.0}

SUBCRITICAL, CRITICAL, SUPERCRITICAL = "subcritical", "critical", "supercritical"


@dataclass(frozen=True)
class RatePrediction:
    regime: str
    exponent: float    # slope of log(rate) vs log(T)
    log_power: float   # power of log T multiplying the rate (0 unless critical)


@dataclass(frozen=True)
class DeviationParams:
    sigma_sq: float
    m: float
    gamma: float
    h_norm: float = 1.0

    def __post_init__(self):
        if self.sigma_sq < 0 or self.m < 0 or self.gamma <= 0:
            raise ValueError("sigma_sq, m must be >= 0 and gamma > 0")
        if self.h_norm < 1.0 - 1e-12:
            raise ValueError("h_norm is an L2 norm of a probability density, >= 1")


def _classify(alpha: float, d: int) -> str:
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if d < 1:
        raise ValueError("d must be a positive integer")
    edge = 2.0 * (1.0 + alpha)
    if abs(d - edge) < 1e-9:
        return CRITICAL
    return SUBCRITICAL if d < edge else SUPERCRITICAL


def regime(alpha: float, d: int) -> RatePrediction:
    """Classify (alpha, d) by the sign of d - 2(1+alpha) and fill the exponent."""
    kind = _classify(alpha, d)
    if kind == SUPERCRITICAL:
        return RatePrediction(kind, -1.0 / (d - 2.0 * alpha), 0.0)
    return RatePrediction(kind, -0.5, 0.5 if kind == CRITICAL else 0.0)


def gamma_rate(alpha: float, d: int, t_horizon: float) -> float:
    """Piecewise convergence rate: T^-1/2, T^-1/2 log^1/2 T, or T^-1/(d-2a)."""
    if t_horizon <= 1.0:
        raise ValueError("rate is defined for horizons T > 1")
    kind = _classify(alpha, d)
    if kind == SUBCRITICAL:
        return t_horizon ** -0.5
    if kind == CRITICAL:
        return t_horizon ** -0.5 * math.log(t_horizon) ** 0.5
    return t_horizon ** (-1.0 / (d - 2.0 * alpha))


def epsilon_schedule(alpha: float, d: int, t_horizon: float) -> float:
    """Mollification schedule: T^-1 up to the critical dimension, else T^(-2/(d-2a))."""
    if t_horizon <= 0:
        raise ValueError("T must be positive")
    if d <= 2.0 * (1.0 + alpha) + 1e-9:
        return 1.0 / t_horizon
    return t_horizon ** (-2.0 / (d - 2.0 * alpha))


def sigma_sq_eigenfunction(lam: float, alpha: float) -> float:
    """Gaussian deviation scale 2 lambda^-alpha of a unit eigenfunction."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    return 2.0 * lam ** -alpha


def cosine_lp_norm(p: float, n_quad: int = 20000) -> float:
    """L^p(mu) norm of sqrt(2) cos(2 pi k.x), the same for every mode k != 0."""
    u = (np.arange(n_quad) + 0.5) / n_quad
    vals = np.abs(np.sqrt(2.0) * np.cos(2.0 * np.pi * u)) ** p
    return float(np.mean(vals) ** (1.0 / p))


def m_functional(lp_norm, alpha: float, d: int) -> float:
    """Exponential deviation scale m(g) from a table of L^p norms.

    lp_norm is a callable p -> |g|_{L^p(mu)} (supplied by quadrature).
    Branches: |g|_1 for d < 2 alpha; a numerical infimum of
    (p/(alpha p - 1))^2 |g|_p over a fixed geometric p-grid at d = 2 alpha
    (an upper bound on the true infimum); |g|_{d/(2 alpha)} above.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    edge = 2.0 * alpha
    if d < edge - 1e-9:
        return float(lp_norm(1.0))
    if d > edge + 1e-9:
        return float(lp_norm(d / (2.0 * alpha)))
    grid = [(1.0 / alpha) * (1.0 + 2.0 ** -j) for j in range(21)] + [2.0, 4.0, 8.0, 16.0]
    vals = [(p / (alpha * p - 1.0)) ** 2 * lp_norm(p)
            for p in grid if alpha * p - 1.0 > 1e-9]
    return float(min(vals))


def bernstein_bound(t_horizon: float, xi: float, params: DeviationParams) -> float:
    """2 |h|_{L2} exp(-T xi^2 / (2 sigma^2 + gamma m xi)); may exceed 1."""
    if t_horizon <= 0 or xi <= 0:
        raise ValueError("T and xi must be positive")
    denom = 2.0 * params.sigma_sq + params.gamma * params.m * xi
    if denom <= 0:
        return 0.0
    return 2.0 * params.h_norm * math.exp(-t_horizon * xi * xi / denom)


def psi_second_moment_symmetric(lam: float, alpha: float, t_horizon: float) -> float:
    """Exact E|psi_i(T)|^2 for zero drift:
    2 lambda^-alpha - (2/(T lambda^(2 alpha))) (1 - exp(-lambda^alpha T))."""
    if lam <= 0 or t_horizon <= 0:
        raise ValueError("lambda and T must be positive")
    la = lam ** alpha
    return 2.0 / la - 2.0 / (t_horizon * la * la) * (1.0 - math.exp(-la * t_horizon))


def variance_const_drift(mode: np.ndarray, alpha: float, drift: np.ndarray) -> tuple[float, float]:
    """Asymptotic variance of one eigenfunction under constant drift, two ways.

    With lambda = 4 pi^2 |k|^2 and theta = 2 pi k.Z:
      closed form    Sigma(phi) = lambda^alpha / (lambda^(2 alpha) + theta^2)
      resolvent form lambda^-alpha - lambda^-2alpha * Sigma(Z phi),
                     Sigma(Z phi) = theta^2 lambda^alpha / (lambda^(2a)+theta^2).
    The two returns must agree to 1e-12; their equality is the identity
    the selftest checks on random instances.
    """
    mode = np.asarray(mode, dtype=float)
    if not np.any(mode != 0):
        raise ValueError("mode must be a nonzero lattice vector")
    drift = np.asarray(drift, dtype=float)
    lam = FOUR_PI_SQ * float(mode @ mode)
    theta = 2.0 * np.pi * float(mode @ drift)
    la = lam ** alpha
    sigma_phi = la / (la * la + theta * theta)
    sigma_zphi = theta * theta * la / (la * la + theta * theta)
    rhs = lam ** -alpha - lam ** (-2.0 * alpha) * sigma_zphi
    return float(sigma_phi), float(rhs)


def variance_const_drift_quadrature(mode, alpha: float, drift) -> float:
    """Independent numerical check: int_0^inf e^{-lambda^a t} cos(theta t) dt."""
    mode = np.asarray(mode, dtype=float)
    drift = np.asarray(drift, dtype=float)
    lam = FOUR_PI_SQ * float(mode @ mode)
    theta = 2.0 * np.pi * float(mode @ drift)
    la = lam ** alpha
    val, _ = quad(lambda t: np.exp(-la * t) * np.cos(theta * t), 0.0, 60.0 / la, limit=400)
    return float(val)


# -- scalar spectral sums over the full torus spectrum ------------------------

def _level_tail_bound(d: int, a: float, s: float, n_max: int) -> float:
    """Bound sum_{n > n_max} rho_d(n) (4 pi^2 n)^-s e^{-a n} via the Weyl density
    rho_d(n) ~ (d/2) v_d n^(d/2-1), with a 1.5x fluctuation margin."""
    coeff = 1.5 * (d / 2.0) * _UNIT_BALL_VOLUME[d] * (FOUR_PI_SQ ** -s)
    expo = d / 2.0 - 1.0 - s
    if expo <= 0:
        return coeff * n_max ** expo * math.exp(-a * n_max) / a
    from scipy.special import gammaincc, gamma as gamma_fn
    k = expo + 1.0
    return coeff * a ** -k * gamma_fn(k) * float(gammaincc(k, a * n_max))


def _spectral_level_sum(d: int, a: float, s: float, tail_tol: float) -> float:
    """sum over k != 0 of e^{-a |k|^2-level} (4 pi^2 n)^-s with tail < tail_tol."""
    n_max = max(64, int(math.ceil((math.log(1.0 / tail_tol) + 25.0) / a)))
    while _level_tail_bound(d, a, s, n_max) > tail_tol:
        n_max = int(n_max * 1.5) + 16
        if n_max > 400_000:
            raise TruncationError("insufficient truncation for the requested spectral sum")
    counts = lattice_level_counts(d, n_max)[1:].astype(float)
    n = np.arange(1, n_max + 1, dtype=float)
    return float(np.sum(counts * np.exp(-a * n) * (FOUR_PI_SQ * n) ** -s))


def spectral_sum(model: SpectralModel, eps: float, s: float,
                 tail_tol: float = 1e-8) -> float:
    """sum_i exp(-2 lambda_i eps) lambda_i^-s over the full torus spectrum.

    Evaluated through exact lattice level counts (the same spectrum as the
    stored eigenpairs, extended as far as the tail bound requires); raises
    TruncationError if the tail cannot be brought below tail_tol.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    return _spectral_level_sum(model.dim, 2.0 * FOUR_PI_SQ * eps, s, tail_tol)


def heat_trace_weyl_check(model: SpectralModel, eps: float) -> tuple[float, float]:
    """(trace, weyl) with trace = sum_i e^{-lambda_i eps} and
    weyl = Vol(M) (4 pi eps)^(-3/2); stated for d = 3."""
    if model.dim != 3:
        raise ValueError("the short-time trace comparison is stated for dim 3")
    if eps <= 0:
        raise ValueError("eps must be positive")
    trace = _spectral_level_sum(3, FOUR_PI_SQ * eps, 0.0, 1e-8)
    weyl = model.volume * (4.0 * np.pi * eps) ** -1.5
    return trace, weyl


def renorm_log_prediction(vol: float, eps: float) -> float:
    """(vol / 2 pi^2) log( sqrt(1 + 1/(2 eps)) + sqrt(1/(2 eps)) ),
    the leading asymptote of sum_i e^{-2 lambda_i eps} lambda_i^(-3/2) in d=3."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = 1.0 / (2.0 * eps)
    return vol / (2.0 * np.pi ** 2) * math.log(math.sqrt(1.0 + x) + math.sqrt(x))
