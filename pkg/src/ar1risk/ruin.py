"""Adjustment coefficient, exponential ruin bound, and Monte Carlo checks.

With exponential claims the adjustment coefficient solves
``M_x(r) - 1 = r c``, giving ``R = (c - theta) / (c theta)`` and
``M_x(R) - 1 = c/theta - 1``.  The bound is
``psi(u) <= exp(-R u) * E[exp((c/theta - 1) Lambda)]``.  Its constant is the
lognormal MGF at a positive argument, which is infinite; it is reported as
the truncated series ``C_N`` together with a divergence warning.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConvergenceError, NoPositiveSolutionError, ParameterDomainError
from .model import ModelParams, SeriesEval, exp_lambda_quadrature, exp_lambda_series, lambda_moment, mgf_claim
from .simulate import SimConfig, ruin_curve, simulate_paths

FIT_WINDOW = (1e-3, 0.3)
MIN_FIT_POINTS = 3


class DivergenceWarning(RuntimeWarning):
    """The series for the bound's constant is in its divergent regime."""


class NetProfitWarning(RuntimeWarning):
    """``theta < c <= theta * E[Lambda]``: R exists but the premium is too low."""


@dataclass(frozen=True)
class AdjustmentCoefficient:
    r_value: float
    method: str
    iterations: int
    residual: float


@dataclass
class BoundReport:
    R: AdjustmentCoefficient
    c: float
    z: float
    series: SeriesEval
    u_grid: np.ndarray
    bound_values: np.ndarray
    divergence_warning: bool
    net_profit_ok: bool
    min_premium: float
    mc_comparison: Optional[list] = None
    fitted_slope: Optional[float] = None
    fit_points: int = 0
    notices: list = field(default_factory=list)

    @property
    def constant(self) -> float:
        return self.series.value

    def csv_rows(self):
        yield ["u", "bound", "psi_hat", "ci_low", "ci_high"]
        for i, (u, b) in enumerate(zip(self.u_grid, self.bound_values)):
            if self.mc_comparison is None:
                yield [float(u), float(b), "", "", ""]
            else:
                est = self.mc_comparison[i]
                yield [float(u), float(b), est.psi_hat, est.ci_low, est.ci_high]

    def summary(self) -> dict:
        return {
            "R": self.R.r_value,
            "R_method": self.R.method,
            "R_residual": self.R.residual,
            "c": self.c,
            "z": self.z,
            "truncation": self.series.truncation_order,
            "C_N": list(self.series.partial_sums),
            "last_term_ratio": self.series.last_term_ratio,
            "divergence": self.divergence_warning,
            "net_profit_min_premium": self.min_premium,
            "net_profit_ok": self.net_profit_ok,
            "fitted_slope": self.fitted_slope,
            "minus_R": -self.R.r_value,
            "fit_points": self.fit_points,
            "notices": list(self.notices),
        }


def net_profit_min_premium(params: ModelParams) -> float:
    """``theta * E[Lambda]``; premiums must exceed it (and therefore theta)."""
    return params.theta * lambda_moment(params, 1)


def _g_residual(c: float, theta: float, r: float) -> float:
    return abs(mgf_claim(r, theta) - 1.0 - r * c)


def adjustment_coefficient_closed(c: float, theta: float) -> AdjustmentCoefficient:
    if theta <= 0:
        raise ParameterDomainError("theta must be positive")
    if c <= theta:
        raise NoPositiveSolutionError(f"no positive adjustment coefficient for c={c} <= theta={theta}")
    r = (c - theta) / (c * theta)
    return AdjustmentCoefficient(r, "closed_form", 0, _g_residual(c, theta, r))


def exponential_mgf(theta: float):
    """``(M, M')`` for exponential claims with mean ``theta``."""

    def mgf(r):
        return mgf_claim(r, theta)

    def deriv(r):
        return theta * mgf_claim(r, theta) ** 2

    return mgf, deriv


def adjustment_coefficient_newton(
    claim_mgf: Callable[[float], float],
    c: float,
    theta: float,
    claim_mgf_deriv: Optional[Callable[[float], float]] = None,
    tol: float = 1e-12,
    max_iter: int = 200,
) -> AdjustmentCoefficient:
    """Safeguarded Newton iteration for ``g(r) = M(r) - 1 - r c`` on ``(0, 1/theta)``.

    ``g`` is convex with ``g(0) = 0`` and ``g'(0) = theta - c < 0``, so the
    positive root is bracketed by any ``lo`` with ``g(lo) < 0`` and ``hi``
    with ``g(hi) > 0``.  Iterates that leave the bracket are replaced by
    bisection.  Iteration continues past ``|g| <= tol`` until the step
    stalls at machine precision.
    """
    if theta <= 0:
        raise ParameterDomainError("theta must be positive")
    if c <= theta:
        raise NoPositiveSolutionError(f"no positive adjustment coefficient for c={c} <= theta={theta}")

    def g(r):
        return claim_mgf(r) - 1.0 - r * c

    r_max = 1.0 / theta
    if claim_mgf_deriv is None:

        def claim_mgf_deriv(r):
            h = 1e-6 * min(r, r_max - r)
            return (claim_mgf(r + h) - claim_mgf(r - h)) / (2 * h)

    hi = None
    for k in range(1, 64):
        cand = r_max * (1.0 - 2.0**-k)
        try:
            if g(cand) > 0:
                hi = cand
                break
        except (ParameterDomainError, OverflowError):
            continue
    if hi is None:
        raise NoPositiveSolutionError("g(r) = M(r) - 1 - r c has no sign change on (0, 1/theta)")
    lo = 0.0

    r = 0.5 * (c - theta) / (c * theta)
    if not lo < r < hi:
        r = 0.5 * (lo + hi)
    for it in range(1, max_iter + 1):
        gr = g(r)
        if gr < 0:
            lo = r
        elif gr > 0:
            hi = r
        else:
            return AdjustmentCoefficient(r, "newton", it, 0.0)
        dg = claim_mgf_deriv(r) - c
        step_ok = dg != 0 and math.isfinite(dg)
        r_new = r - gr / dg if step_ok else math.nan
        if not (lo < r_new < hi):
            r_new = 0.5 * (lo + hi)
        if abs(r_new - r) <= 4 * np.finfo(float).eps * r or hi - lo <= 4 * np.finfo(float).eps * hi:
            res = abs(g(r_new))
            if res <= tol:
                return AdjustmentCoefficient(r_new, "newton", it, res)
            raise ConvergenceError(f"stalled with |g| = {res:.3e} > {tol:g}", last_iterate=r_new)
        r = r_new
    raise ConvergenceError(f"no convergence in {max_iter} iterations", last_iterate=r)


def _check_grid(u_grid) -> np.ndarray:
    u = np.asarray(u_grid, dtype=float)
    if u.ndim != 1 or u.size == 0:
        raise ParameterDomainError("u_grid must be a nonempty 1-D sequence")
    if np.any(u < 0) or np.any(np.diff(u) <= 0):
        raise ParameterDomainError("u_grid must be nonnegative and strictly increasing")
    return u


def lundberg_bound(params: ModelParams, c: float, u_grid, truncation: int = 10) -> BoundReport:
    """``exp(-R u) * C_N`` over ``u_grid`` with the truncated-series constant."""
    u = _check_grid(u_grid)
    R = adjustment_coefficient_closed(c, params.theta)
    min_c = net_profit_min_premium(params)
    ok = c > min_c
    notices = []
    if not ok:
        msg = f"premium c={c} does not exceed theta*E[Lambda]={min_c:.6g}; bound still reported"
        warnings.warn(msg, NetProfitWarning, stacklevel=2)
        notices.append(msg)
    z = c / params.theta - 1.0
    series = exp_lambda_series(params, z, truncation)
    if series.divergence_flag:
        msg = (
            f"E[exp({z:.6g} Lambda)] is infinite; C_{truncation} = {series.value:.6g} is a "
            f"truncation of a divergent series (last term ratio {series.last_term_ratio:.6g})"
        )
        warnings.warn(msg, DivergenceWarning, stacklevel=2)
        notices.append(msg)
    bound = np.exp(-R.r_value * u) * series.value
    return BoundReport(R, float(c), z, series, u, bound, series.divergence_flag, ok, min_c, notices=notices)


def fit_log_slope(u, psi, window=FIT_WINDOW):
    """Least-squares slope of ``ln psi`` against ``u`` over ``window[0] < psi < window[1]``.

    Returns ``(slope, points)``; slope is None with fewer than
    :data:`MIN_FIT_POINTS` usable points.
    """
    u = np.asarray(u, dtype=float)
    psi = np.asarray(psi, dtype=float)
    keep = (psi > window[0]) & (psi < window[1])
    k = int(np.count_nonzero(keep))
    if k < MIN_FIT_POINTS:
        return None, k
    slope, _ = np.polyfit(u[keep], np.log(psi[keep]), 1)
    return float(slope), k


def bound_vs_mc_report(
    params: ModelParams,
    c: float,
    u_grid,
    horizon: int,
    reps: int,
    truncation: int = 10,
    seed: int = 0,
    threads: int = 1,
    init_mode: str = "stationary_mean",
    window=FIT_WINDOW,
) -> BoundReport:
    """Bound values paired with finite-horizon ruin frequencies on shared paths."""
    report = lundberg_bound(params, c, u_grid, truncation)
    cfg = SimConfig(params, int(horizon), init_mode=init_mode, sampling_mode="cumulative", seed=seed)
    report.mc_comparison = ruin_curve(cfg, report.u_grid, c, reps, threads)
    psi = [e.psi_hat for e in report.mc_comparison]
    report.fitted_slope, report.fit_points = fit_log_slope(report.u_grid, psi, window)
    if report.fitted_slope is None:
        report.notices.append(
            f"slope fit omitted: {report.fit_points} grid points with psi_hat in {window}, need {MIN_FIT_POINTS}"
        )
    return report


@dataclass(frozen=True)
class IdentityCheck:
    r: float
    t: int
    u: float
    c: float
    lhs: float
    lhs_se: float
    rhs: float
    z_score: float
    reps: int


def mgf_identity_check(
    params: ModelParams,
    u: float,
    c: float,
    r: float,
    t: int,
    reps: int,
    seed: int = 0,
    threads: int = 1,
) -> IdentityCheck:
    """Compare Monte Carlo ``E[exp(-r U(t))]`` with its closed form at ``r < 0``.

    Closed side: ``exp(-r u - r c t + t (M_x(r) - 1)) * E[exp((M_x(r) - 1) Lambda)]``
    with the expectation by quadrature.  Paths are marginal-mode, started
    from the stationary law so that ``Lambda_t`` has the stationary marginal.
    """
    if r >= 0:
        raise ParameterDomainError("identity is only finite for r < 0")
    if t < 1:
        raise ParameterDomainError("t must be >= 1")
    z = mgf_claim(r, params.theta) - 1.0
    rhs = math.exp(-r * u - r * c * t + t * z) * exp_lambda_quadrature(params, z)
    cfg = SimConfig(params, int(t), init_mode="stationary_draw", sampling_mode="marginal", seed=seed)
    s = simulate_paths(cfg, reps, times=[t], threads=threads).s_total[:, 0]
    samples = np.exp(-r * (u + c * t - s))
    lhs = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(reps))
    return IdentityCheck(r, t, u, c, lhs, se, rhs, (lhs - rhs) / se if se > 0 else 0.0, reps)
