"""Method-of-moments estimation of (alpha, mu, sigma2) with theta known.

Pooled sample moments ``a_j = mean(S_t**j)`` over ``t = 1..n`` are matched to
their exact expectation under marginal sampling, the time average
``A_j = (1/n) sum_t E[S_t**j]``.  The moments depend on the parameters only
through the stationary mean ``mu' = mu/(1-alpha)`` and variance
``s2 = sigma2/(1-alpha**2)`` of ``ln Lambda``, so alpha is not identified by
them: every point of ``{(alpha, mu'(1-alpha), s2(1-alpha**2))}`` fits equally
well and the reported alpha is whatever the solver's start point leads to.
:func:`solve_moments_autocov` swaps the third moment for a lag-1 cross
moment, which does pin alpha down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import least_squares

from .errors import DegenerateInputError, ParameterDomainError
from .model import EXP_GUARD, ModelParams
from .simulate import SimConfig, simulate_paths

DEFAULT_INIT = (0.5, 0.5, 0.5)
MULTISTART_GRID = ((-0.5, 0.0, 0.5), (0.0, 0.5, 1.0), (0.1, 0.5, 1.0))
# residual returned where the moments would overflow or alpha hits +/-1 in floating point
_PENALTY = 1e100
_ETA1_MAX = 18.0
_PLATEAU = 1e-6

PARAM_NAMES = ("alpha", "mu", "sigma2")
AUX_NAMES = ("mu_prime", "s2")


@dataclass(frozen=True)
class SampleMoments:
    a1: float
    a2: float
    a3: float
    n: int


@dataclass(frozen=True)
class EstimateResult:
    alpha_hat: float
    mu_hat: float
    sigma2_hat: float
    mu_prime_hat: float
    s2_hat: float
    residual_norm: float
    iterations: int
    converged: bool
    identifiability_note: bool
    method: str = "moments"
    message: str = ""

    def as_dict(self) -> dict:
        return {
            "alpha_hat": self.alpha_hat,
            "mu_hat": self.mu_hat,
            "sigma2_hat": self.sigma2_hat,
            "mu_prime_hat": self.mu_prime_hat,
            "s2_hat": self.s2_hat,
            "residual": self.residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "identifiability_note": self.identifiability_note,
            "method": self.method,
        }


def sample_moments(data) -> SampleMoments:
    s = np.asarray(data, dtype=float).ravel()
    if s.size == 0:
        raise DegenerateInputError("no observations")
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise DegenerateInputError("aggregate claims must be finite and nonnegative")
    return SampleMoments(float(np.mean(s)), float(np.mean(s**2)), float(np.mean(s**3)), int(s.size))


def _power_means(n: int) -> tuple[float, float, float]:
    """Means of t, t**2, t**3 over t = 1..n."""
    s1 = n * (n + 1) // 2
    s2 = n * (n + 1) * (2 * n + 1) // 6
    return s1 / n, s2 / n, s1 * s1 / n


def _averaged(L1, L2, L3, theta, n):
    T1, T2, T3 = _power_means(n)
    A1 = theta * (L1 + T1)
    A2 = theta**2 * (2 * (L1 + T1) + L2 + 2 * T1 * L1 + T2)
    A3 = theta**3 * (6 * (L1 + T1) + 6 * (L2 + 2 * T1 * L1 + T2) + L3 + 3 * T1 * L2 + 3 * T2 * L1 + T3)
    # d(A1, A2, A3) / d(L1, L2, L3)
    dA = np.array(
        [
            [theta, 0.0, 0.0],
            [theta**2 * (2 + 2 * T1), theta**2, 0.0],
            [theta**3 * (6 + 12 * T1 + 3 * T2), theta**3 * (6 + 3 * T1), theta**3],
        ]
    )
    return np.array([A1, A2, A3]), dA


def _check_trend(a1: float, theta: float, n: int) -> None:
    # A1 = theta * (E[Lambda] + mean(t)) cannot fall to theta * mean(t)
    trend = theta * _power_means(n)[0]
    if a1 <= trend:
        raise DegenerateInputError(f"a1={a1} is not above the claim trend theta*(n+1)/2={trend}")


def theoretical_time_averaged_moments(params: ModelParams, n: int) -> tuple[float, float, float]:
    """``A_j = (1/n) sum_{t=1}^n E[S_t**j]`` for j = 1, 2, 3."""
    if n < 1:
        raise ParameterDomainError(f"n must be >= 1, got {n}")
    law = params.law
    L = [law.lambda_moment(k) for k in (1, 2, 3)]
    A, _ = _averaged(*L, params.theta, n)
    return float(A[0]), float(A[1]), float(A[2])


def _natural(eta):
    alpha = math.tanh(eta[0])
    return alpha, float(eta[1]), math.exp(eta[2])


def _to_eta(alpha, mu, sigma2):
    if not -1 < alpha < 1 or sigma2 <= 0:
        raise ParameterDomainError("initial point needs alpha in (-1, 1) and sigma2 > 0")
    return np.array([math.atanh(alpha), mu, math.log(sigma2)])


def _chain(alpha, mu, sigma2):
    """(mu', s2) and their Jacobian with respect to eta."""
    one_m = 1.0 - alpha
    one_m2 = 1.0 - alpha * alpha
    mp = mu / one_m
    s2 = sigma2 / one_m2
    J = np.array(
        [
            [mu * (1 + alpha) / one_m, 1.0 / one_m, 0.0],
            [2 * alpha * sigma2 / one_m2, 0.0, s2],
        ]
    )
    return mp, s2, J


def _moment_residuals(a: np.ndarray, theta: float, n: int):
    def fun(eta):
        if abs(eta[0]) > _ETA1_MAX:
            return np.full(3, _PENALTY), None
        alpha, mu, sigma2 = _natural(eta)
        mp, s2, J = _chain(alpha, mu, sigma2)
        if 3 * mp + 4.5 * s2 > EXP_GUARD:
            return np.full(3, _PENALTY), None
        L = np.array([math.exp(k * mp + 0.5 * k * k * s2) for k in (1, 2, 3)])
        A, dA = _averaged(*L, theta, n)
        dL = np.array([[k * L[k - 1], 0.5 * k * k * L[k - 1]] for k in (1, 2, 3)])
        jac = (dA @ dL @ J) / a[:, None]
        return (A - a) / a, jac

    return fun


def _fit(fun: Callable, starts: Sequence, max_nfev: int):
    """Trust-region least squares from each start; best final cost wins."""
    best = None
    total_nfev = 0
    for x0 in starts:
        cache = {}

        def f(x):
            r, j = fun(x)
            cache[tuple(x)] = j
            return r

        def jac(x):
            j = cache.get(tuple(x))
            if j is None:
                j = fun(x)[1]
            return np.zeros((3, 3)) if j is None else j

        res = least_squares(
            f, x0, jac=jac, method="trf", x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev
        )
        total_nfev += res.nfev
        if best is None or res.cost < best.cost:
            best = res
    return best, total_nfev


def _result(res, nfev: int, method: str, manifold: bool, a1: float, theta: float) -> EstimateResult:
    alpha, mu, sigma2 = _natural(res.x)
    one_m = 1.0 - alpha
    finite = all(math.isfinite(v) for v in (alpha, mu, sigma2)) and res.cost < _PENALTY
    converged = bool(res.status > 0 and finite and abs(res.x[0]) < _ETA1_MAX and 0 < sigma2 < math.inf)
    if converged:
        # infimum approached only as E[Lambda] -> 0 (mu' -> -inf): not attained in the domain
        mp, s2, _ = _chain(alpha, mu, sigma2)
        converged = theta * math.exp(min(mp + 0.5 * s2, EXP_GUARD)) > _PLATEAU * a1
    return EstimateResult(
        alpha_hat=alpha,
        mu_hat=mu,
        sigma2_hat=sigma2,
        mu_prime_hat=mu / one_m if one_m > 0 else math.inf,
        s2_hat=sigma2 / (1.0 - alpha * alpha) if abs(alpha) < 1 else math.inf,
        residual_norm=float(np.linalg.norm(res.fun)),
        iterations=int(nfev),
        converged=converged,
        identifiability_note=manifold,
        method=method,
        message=str(res.message),
    )


def _starts(init, multistart):
    if multistart:
        return [_to_eta(a, m, s) for a in MULTISTART_GRID[0] for m in MULTISTART_GRID[1] for s in MULTISTART_GRID[2]]
    return [_to_eta(*init)]


def moment_residual_vector(a: SampleMoments, theta: float, alpha: float, mu: float, sigma2: float) -> np.ndarray:
    """Relative residuals ``(A_j - a_j)/a_j`` at a parameter point."""
    r, _ = _moment_residuals(np.array([a.a1, a.a2, a.a3]), theta, a.n)(_to_eta(alpha, mu, sigma2))
    return r


def solve_moments(
    a: SampleMoments,
    theta: float,
    init=DEFAULT_INIT,
    multistart: bool = False,
    max_nfev: int = 2000,
) -> EstimateResult:
    """Fit (alpha, mu, sigma2) so the time-averaged moments match ``a``.

    Minimises the sum of squared relative residuals with a trust-region
    method in ``(atanh(alpha), mu, ln(sigma2))``, which keeps every iterate
    inside the parameter domain.  Sample moments rarely admit an exact root
    (three equations, two effective unknowns), hence least squares.

    Raises:
        DegenerateInputError: if ``a2 < a1**2`` or a moment is not positive.
    """
    if theta <= 0:
        raise ParameterDomainError("theta must be positive")
    if a.a1 <= 0 or a.a3 <= 0:
        raise DegenerateInputError("sample moments must be positive")
    if a.a2 < a.a1**2:
        raise DegenerateInputError(f"a2={a.a2} < a1**2={a.a1**2}")
    _check_trend(a.a1, theta, a.n)
    vec = np.array([a.a1, a.a2, a.a3])
    res, nfev = _fit(_moment_residuals(vec, theta, a.n), _starts(init, multistart), max_nfev)
    return _result(res, nfev, "moments", True, a.a1, theta)


# ---------------------------------------------------------------------------
# identifiable variant: (a1, a2, lag-1 cross moment of detrended claims)


@dataclass(frozen=True)
class AutocovMoments:
    """Pooled ``a1, a2`` and the weighted lag-1 cross moment ``g``.

    ``g`` estimates ``E[D_t D_{t+1}] = theta**2 exp(2 mu' + (1 + alpha) s2)``
    where ``D_t = S_t - theta t``; that expectation does not depend on ``t``
    so any fixed weighting is unbiased.
    """

    a1: float
    a2: float
    g: float
    n: int


def autocov_moments(series, theta: float) -> AutocovMoments:
    """Statistics for :func:`solve_moments_autocov` from one or many series.

    ``series`` is ``S_1..S_n`` or a 2-D array whose rows are independent
    realisations of it.  Lag products are weighted by the inverse of their
    approximate variance, ``1/((K + 2t)(K + 2t + 2))`` with ``K`` a plug-in
    for ``2 E[Lambda] + E[Lambda**2]``, because Poisson noise grows with t.
    """
    s = np.atleast_2d(np.asarray(series, dtype=float))
    n = s.shape[1]
    if n < 3:
        raise DegenerateInputError(f"series length must be >= 3, got {n}")
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise DegenerateInputError("aggregate claims must be finite and nonnegative")
    t = np.arange(1, n + 1)
    d = s - theta * t
    K = max(float(np.mean(d**2)) / theta**2 - float(np.mean(2 * t)), 1.0)
    w = 1.0 / ((K + 2 * t[:-1]) * (K + 2 * t[:-1] + 2))
    g = float(np.mean((d[:, :-1] * d[:, 1:]) @ w) / w.sum())
    return AutocovMoments(float(np.mean(s)), float(np.mean(s**2)), g, n)


def _autocov_residuals(m: AutocovMoments, theta: float):
    target = np.array([m.a1, m.a2, m.g])
    scale = np.abs(target)

    def fun(eta):
        if abs(eta[0]) > _ETA1_MAX:
            return np.full(3, _PENALTY), None
        alpha, mu, sigma2 = _natural(eta)
        mp, s2, J = _chain(alpha, mu, sigma2)
        if 2 * mp + 2 * s2 > EXP_GUARD:
            return np.full(3, _PENALTY), None
        L1 = math.exp(mp + 0.5 * s2)
        L2 = math.exp(2 * mp + 2 * s2)
        A, dA = _averaged(L1, L2, 0.0, theta, m.n)
        G = theta**2 * math.exp(2 * mp + (1 + alpha) * s2)
        model = np.array([A[0], A[1], G])
        dL = np.array([[L1, 0.5 * L1], [2 * L2, 2 * L2]])
        jac = np.zeros((3, 3))
        jac[:2] = dA[:2, :2] @ dL @ J
        jac[2] = G * (np.array([2.0, 1 + alpha]) @ J)
        jac[2, 0] += G * s2 * (1 - alpha * alpha)
        return (model - target) / scale, jac / scale[:, None]

    return fun


def solve_autocov_from_moments(
    m: AutocovMoments, theta: float, init=DEFAULT_INIT, multistart: bool = False, max_nfev: int = 2000
) -> EstimateResult:
    if theta <= 0:
        raise ParameterDomainError("theta must be positive")
    if m.a1 <= 0 or m.a2 < m.a1**2:
        raise DegenerateInputError("need a1 > 0 and a2 >= a1**2")
    _check_trend(m.a1, theta, m.n)
    if m.g <= 0:
        raise DegenerateInputError(f"lag-1 cross moment must be positive, got {m.g}")
    res, nfev = _fit(_autocov_residuals(m, theta), _starts(init, multistart), max_nfev)
    return _result(res, nfev, "autocov", False, m.a1, theta)


def solve_moments_autocov(series, theta: float, init=DEFAULT_INIT, multistart: bool = False) -> EstimateResult:
    return solve_autocov_from_moments(autocov_moments(series, theta), theta, init, multistart)


# ---------------------------------------------------------------------------
# replication study


@dataclass(frozen=True)
class Cell:
    mean: float
    deviation: float
    mse: float


@dataclass
class ReplicationReport:
    truth: dict
    n_list: tuple
    reps: int
    seed: int
    estimator: str
    cells: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    estimates: dict = field(default_factory=dict)

    def cell(self, name: str, n: int) -> Cell:
        return self.cells[(name, n)]

    def csv_rows(self, names=PARAM_NAMES + AUX_NAMES):
        yield ["parameter", "truth", "n", "estimation", "deviation", "mse", "used", "failed"]
        for name in names:
            for n in self.n_list:
                c = self.cells[(name, n)]
                used = self.reps - self.failures[n]
                yield [name, self.truth[name], n, c.mean, c.deviation, c.mse, used, self.failures[n]]

    def to_markdown(self, names=PARAM_NAMES, digits: int = 5) -> str:
        labels = {"alpha": "α", "mu": "μ", "sigma2": "σ²", "mu_prime": "μ'", "s2": "s²"}
        fmt = f"{{:.{digits}f}}"
        head = "| para | t-v | " + " | ".join(
            f"n={n} estimation | n={n} deviation | n={n} MSE" for n in self.n_list
        ) + " |"
        rule = "|" + "---|" * (2 + 3 * len(self.n_list))
        lines = [head, rule]
        for name in names:
            row = [labels.get(name, name), f"{self.truth[name]:g}"]
            for n in self.n_list:
                c = self.cells[(name, n)]
                row += [fmt.format(c.mean), fmt.format(c.deviation), fmt.format(c.mse)]
            lines.append("| " + " | ".join(row) + " |")
        return "\n".join(lines) + "\n"


def _summarise(values: np.ndarray, truth: float) -> Cell:
    if values.size == 0:
        return Cell(math.nan, math.nan, math.nan)
    mean = float(np.mean(values))
    dev = mean - truth
    # var + bias**2 keeps MSE >= deviation**2 exactly in floating point
    return Cell(mean, dev, float(np.var(values)) + dev * dev)


def replication_study(
    true_params: ModelParams,
    n_list: Sequence[int] = (5, 20, 50),
    reps: int = 500,
    seed: int = 0,
    estimator: str = "moments",
    init=DEFAULT_INIT,
    init_mode: str = "stationary_mean",
    multistart: bool = False,
    threads: int = 1,
) -> ReplicationReport:
    """Simulate ``reps`` samples ``S_1..S_n`` per ``n`` and tabulate the estimates.

    Samples are marginal-mode paths started at ``ln Lambda_0 = mu'`` by
    default.  Non-converged fits are excluded and counted in ``failures``.
    """
    if reps < 1:
        raise ParameterDomainError("reps must be >= 1")
    if estimator not in ("moments", "autocov"):
        raise ParameterDomainError(f"unknown estimator {estimator!r}")
    law = true_params.law
    truth = {
        "alpha": true_params.alpha,
        "mu": true_params.mu,
        "sigma2": true_params.sigma2,
        "mu_prime": law.mean_y,
        "s2": law.var_y,
    }
    report = ReplicationReport(truth, tuple(n_list), reps, seed, estimator)
    for n in n_list:
        cfg = SimConfig(true_params, int(n), init_mode=init_mode, sampling_mode="marginal", seed=seed)
        s = simulate_paths(cfg, reps, threads=threads, labels=(int(n),)).s_total
        fits = []
        for row in s:
            fits.append(_estimate_row(row, true_params.theta, estimator, init, multistart))
        ok = [f for f in fits if f is not None and f.converged]
        report.failures[n] = reps - len(ok)
        report.estimates[n] = ok
        for name in PARAM_NAMES + AUX_NAMES:
            vals = np.array([getattr(f, f"{name}_hat") for f in ok])
            report.cells[(name, n)] = _summarise(vals, truth[name])
    return report


def _estimate_row(row, theta, estimator, init, multistart) -> Optional[EstimateResult]:
    try:
        if estimator == "autocov":
            return solve_moments_autocov(row, theta, init, multistart)
        return solve_moments(sample_moments(row), theta, init, multistart)
    except DegenerateInputError:
        return None
