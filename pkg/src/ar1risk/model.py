"""Closed-form quantities of the log-AR(1) intensity compound-Poisson model.

The latent log-intensity follows ``Y_t = alpha * Y_{t-1} + eps_t`` with
``eps_t ~ Normal(mu, sigma2)``; the claim count at time ``t`` is Poisson with
mean ``exp(Y_t) + t`` and claim sizes are exponential with mean ``theta``.

Every moment below depends on ``(alpha, mu, sigma2)`` only through the
stationary mean and variance of ``Y_t``, written ``mu_prime`` and ``s2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import ParameterDomainError, RangeError

EXP_GUARD = 700.0


def guarded_exp(x: float) -> float:
    """``exp(x)`` that raises :class:`RangeError` instead of overflowing."""
    if x > EXP_GUARD:
        raise RangeError(f"exponent {x:.6g} exceeds the e**{EXP_GUARD:g} guard")
    return math.exp(x)


@dataclass(frozen=True)
class ModelParams:
    """Model parameters.

    ``sigma2 = 0`` is accepted as the degenerate deterministic-intensity
    limit; the estimators only ever return ``sigma2 > 0``.
    """

    alpha: float
    mu: float
    sigma2: float
    theta: float

    def __post_init__(self):
        for name in ("alpha", "mu", "sigma2", "theta"):
            if not math.isfinite(getattr(self, name)):
                raise ParameterDomainError(f"{name} must be finite")
        if not -1.0 < self.alpha < 1.0:
            raise ParameterDomainError(f"alpha must lie in (-1, 1), got {self.alpha}")
        if self.sigma2 < 0.0:
            raise ParameterDomainError(f"sigma2 must be nonnegative, got {self.sigma2}")
        if self.theta <= 0.0:
            raise ParameterDomainError(f"theta must be positive, got {self.theta}")

    @property
    def law(self) -> "StationaryLaw":
        return stationary_law(self)


@dataclass(frozen=True)
class StationaryLaw:
    """Stationary Normal law of ``Y_t = ln(Lambda_t)``."""

    mean_y: float
    var_y: float

    @property
    def sd_y(self) -> float:
        return math.sqrt(self.var_y)

    def lambda_moment(self, n: int) -> float:
        """``E[Lambda**n] = exp(n*mean_y + n**2*var_y/2)``."""
        if n < 0:
            raise ParameterDomainError(f"moment order must be nonnegative, got {n}")
        if n == 0:
            return 1.0
        return guarded_exp(n * self.mean_y + 0.5 * n * n * self.var_y)


@dataclass(frozen=True)
class MomentSet:
    t: int
    m1: float
    m2: float
    m3: float


@dataclass(frozen=True)
class SeriesEval:
    """Partial sums of ``sum_n z**n / n! * E[Lambda**n]``.

    ``terms[n]`` is the n-th summand, ``term_ratios[n]`` is
    ``terms[n+1] / terms[n]`` from the closed ratio formula (defined for
    ``n = 0..N`` so the ratio at the truncation index is available).
    """

    z: float
    truncation_order: int
    partial_sums: tuple[float, ...]
    terms: tuple[float, ...]
    term_ratios: tuple[float, ...]
    divergence_flag: bool
    last_term_ratio: float

    @property
    def value(self) -> float:
        return self.partial_sums[-1]


def _check_t(t: int) -> None:
    if t < 0:
        raise ParameterDomainError(f"time index must be nonnegative, got {t}")


def stationary_law(params: ModelParams) -> StationaryLaw:
    a = params.alpha
    return StationaryLaw(mean_y=params.mu / (1.0 - a), var_y=params.sigma2 / (1.0 - a * a))


def lambda_moment(params: ModelParams, n: int) -> float:
    return stationary_law(params).lambda_moment(n)


def _lambda_moments(params: ModelParams) -> tuple[float, float, float]:
    law = stationary_law(params)
    return law.lambda_moment(1), law.lambda_moment(2), law.lambda_moment(3)


def mean_S(params: ModelParams, t: int) -> float:
    """``E[S_t] = theta * (E[Lambda] + t)``."""
    _check_t(t)
    return params.theta * (lambda_moment(params, 1) + t)


def var_S(params: ModelParams, t: int) -> float:
    """``Var(S_t) = 2 theta^2 (L1 + t) + theta^2 (L2 - L1^2)``.

    ``2 theta^2`` is ``Var(X) + E(X)^2`` for exponential claims.
    """
    _check_t(t)
    L1, L2, _ = _lambda_moments(params)
    th2 = params.theta**2
    return 2.0 * th2 * (L1 + t) + th2 * (L2 - L1 * L1)


def second_moment_S(params: ModelParams, t: int) -> float:
    return var_S(params, t) + mean_S(params, t) ** 2


def third_moment_S(params: ModelParams, t: int) -> float:
    """Third raw moment of ``S_t``.

    Conditionally on ``lam = Lambda_t + t`` the compound Poisson sum has
    ``E[S^3 | lam] = theta^3 (6 lam + 6 lam^2 + lam^3)``; the powers of
    ``lam`` are then averaged over the lognormal ``Lambda_t``.
    """
    _check_t(t)
    L1, L2, L3 = _lambda_moments(params)
    e1 = L1 + t
    e2 = L2 + 2 * t * L1 + t * t
    e3 = L3 + 3 * t * L2 + 3 * t * t * L1 + t**3
    return params.theta**3 * (6.0 * e1 + 6.0 * e2 + e3)


def third_moment_S_paper(params: ModelParams, t: int) -> float:
    """Third raw moment as printed in the source derivation, kept verbatim.

    Drops the ``Lambda`` and ``Lambda^2`` terms at ``t = 0`` and carries a
    ``4 s2`` exponent where the lognormal second moment has ``2 s2``; use
    :func:`third_moment_S` for anything quantitative.
    """
    _check_t(t)
    law = stationary_law(params)
    m, s2 = law.mean_y, law.var_y
    th3 = params.theta**3
    return (
        th3 * (6 * t + 6 * t * t + t**3)
        + 3 * th3 * (2 * t + t * t) * guarded_exp(m + s2 / 2)
        + 3 * th3 * t * guarded_exp(2 * m + 4 * s2)
        + th3 * guarded_exp(3 * m + 9 * s2 / 2)
    )


def moments_S(params: ModelParams, t: int) -> MomentSet:
    return MomentSet(t=t, m1=mean_S(params, t), m2=second_moment_S(params, t), m3=third_moment_S(params, t))


def mgf_claim(r: float, theta: float) -> float:
    """Exponential claim-size MGF ``1 / (1 - r theta)``."""
    if r * theta >= 1.0:
        raise ParameterDomainError(f"claim MGF undefined for r={r} >= 1/theta={1.0 / theta}")
    return 1.0 / (1.0 - r * theta)


def exp_lambda_series(params: ModelParams, z: float, truncation: int) -> SeriesEval:
    """Formal series for ``E[exp(z Lambda)]`` truncated after ``truncation`` terms.

    The series diverges for every ``z != 0`` when ``s2 > 0``; divergence is
    reported on the result, never raised.
    """
    if truncation < 0:
        raise ParameterDomainError(f"truncation must be nonnegative, got {truncation}")
    law = stationary_law(params)
    m, s2 = law.mean_y, law.var_y
    N = int(truncation)

    terms = []
    for n in range(N + 1):
        if n == 0:
            terms.append(1.0)
        elif z == 0.0:
            terms.append(0.0)
        else:
            log_mag = n * math.log(abs(z)) - math.lgamma(n + 1) + n * m + 0.5 * n * n * s2
            sign = -1.0 if (z < 0 and n % 2) else 1.0
            terms.append(sign * guarded_exp(log_mag))

    ratios = []
    for n in range(N + 1):
        log_growth = m + 0.5 * (2 * n + 1) * s2
        if log_growth > EXP_GUARD:
            raise RangeError(f"term ratio exponent {log_growth:.6g} exceeds guard")
        ratios.append(z * math.exp(log_growth) / (n + 1))

    partial = np.cumsum(terms).tolist()

    mags = [abs(q) for q in ratios[max(0, N - 2):]]
    increasing = all(b > a for a, b in zip(mags, mags[1:]))
    flag = bool(mags[-1] > 1.0 and increasing)

    return SeriesEval(
        z=float(z),
        truncation_order=N,
        partial_sums=tuple(partial),
        terms=tuple(terms),
        term_ratios=tuple(ratios),
        divergence_flag=flag,
        last_term_ratio=ratios[-1],
    )


def exp_lambda_quadrature(params: ModelParams, z: float) -> float:
    """``E[exp(z Lambda)]`` for ``z <= 0`` by adaptive quadrature.

    Integrates over ``Y`` in ``mean_y +/- 10 sd_y`` at relative tolerance 1e-10.
    """
    if z > 0:
        raise ParameterDomainError("E[exp(z Lambda)] is infinite for z > 0 (lognormal tail)")
    if z == 0:
        return 1.0
    law = stationary_law(params)
    m, sd = law.mean_y, law.sd_y
    if sd == 0.0:
        return math.exp(z * guarded_exp(m))

    norm = 1.0 / math.sqrt(2.0 * math.pi)

    def integrand(x):
        return math.exp(z * math.exp(m + sd * x) - 0.5 * x * x) * norm

    # split at the mode of the Gaussian weight so quad sees both shoulders
    left, _ = integrate.quad(integrand, -10.0, 0.0, epsabs=0.0, epsrel=1e-10, limit=200)
    right, _ = integrate.quad(integrand, 0.0, 10.0, epsabs=0.0, epsrel=1e-10, limit=200)
    return min(left + right, 1.0)


@dataclass(frozen=True)
class MgfSValue:
    r: float
    t: int
    z: float
    prefactor: float
    value: float
    method: str
    series: SeriesEval | None = None

    @property
    def divergence_flag(self) -> bool:
        return self.series is not None and self.series.divergence_flag


def mgf_S(params: ModelParams, r: float, t: int, truncation: int = 20) -> MgfSValue:
    """MGF of ``S_t``: ``exp(t (M_x(r) - 1)) * E[exp((M_x(r) - 1) Lambda)]``.

    For ``r <= 0`` the lognormal factor is evaluated by quadrature; for
    ``r > 0`` it is infinite and the truncated series is returned with its
    divergence diagnostics.
    """
    _check_t(t)
    z = mgf_claim(r, params.theta) - 1.0
    prefactor = guarded_exp(t * z)
    if z <= 0.0:
        return MgfSValue(r, t, z, prefactor, prefactor * exp_lambda_quadrature(params, z), "quadrature")
    series = exp_lambda_series(params, z, truncation)
    return MgfSValue(r, t, z, prefactor, prefactor * series.value, "series", series)
