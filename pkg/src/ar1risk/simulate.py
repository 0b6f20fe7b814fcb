"""Seed-deterministic simulation of intensity paths, claims and surplus.

Two conventions realise the claim count ``N_t``:

``marginal``
    At every ``t`` a fresh ``N_t ~ Poisson(Lambda_t + t)`` is drawn given the
    shared intensity path.  This is the law the closed-form moments describe.
``cumulative``
    Counts accumulate nonnegative increments
    ``dN_t ~ Poisson(max(Lambda_t + t - Lambda_{t-1} - (t - 1), 0))`` so that
    ``N_t`` and ``S_t`` are nondecreasing.  Used for surplus and ruin paths.

Counts are drawn with :meth:`numpy.random.Generator.poisson` (inversion for
small means, Hormann's PTRS transformed rejection for means >= 10; exact in
distribution for every mean used here).  Claim sizes are drawn by inversion,
``-theta * log(1 - U)``.

Replications are grouped in fixed blocks of :data:`BLOCK_SIZE`; block ``b``
draws from ``substream(seed, b)``, so output never depends on ``threads``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ParameterDomainError, RangeError
from .model import EXP_GUARD, ModelParams, stationary_law
from .rng import MASK64, substream

BLOCK_SIZE = 8192
# largest mean accepted by numpy's Poisson sampler is about 9.2e18
POISSON_MAX_MEAN = 1e18
# claim sizes drawn at once by one block; guards memory
MAX_CLAIMS_PER_DRAW = 200_000_000

INIT_MODES = ("fixed", "stationary_mean", "stationary_draw")
SAMPLING_MODES = ("marginal", "cumulative")


@dataclass(frozen=True)
class SimConfig:
    params: ModelParams
    horizon: int
    init_mode: str = "stationary_mean"
    init_value: Optional[float] = None
    sampling_mode: str = "marginal"
    seed: int = 0

    def __post_init__(self):
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ParameterDomainError(f"horizon must be an integer >= 1, got {self.horizon}")
        if self.init_mode not in INIT_MODES:
            raise ParameterDomainError(f"init_mode must be one of {INIT_MODES}, got {self.init_mode!r}")
        if self.init_mode == "fixed" and (self.init_value is None or not math.isfinite(self.init_value)):
            raise ParameterDomainError("init_mode 'fixed' needs a finite init_value")
        if self.sampling_mode not in SAMPLING_MODES:
            raise ParameterDomainError(
                f"sampling_mode must be one of {SAMPLING_MODES}, got {self.sampling_mode!r}"
            )
        if not 0 <= self.seed <= MASK64:
            raise ParameterDomainError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def replace(self, **changes) -> "SimConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class PathRecord:
    t: int
    y: float
    lam: float
    n_claims: int
    s_total: float
    u_surplus: Optional[float] = None


@dataclass(frozen=True)
class LambdaPath:
    y0: float
    t: np.ndarray
    y: np.ndarray
    lam: np.ndarray


@dataclass(frozen=True)
class SurplusPath:
    records: list
    ruin_time: Optional[int]

    @property
    def ruined(self) -> bool:
        return self.ruin_time is not None


@dataclass(frozen=True)
class PathBatch:
    """Simulated replications recorded at ``t`` (rows are replications)."""

    t: np.ndarray
    y: np.ndarray
    lam: np.ndarray
    n_claims: np.ndarray
    s_total: np.ndarray


@dataclass(frozen=True)
class RuinEstimate:
    psi_hat: float
    reps: int
    ci_low: float
    ci_high: float
    u: float
    c: float
    horizon: int


# ---------------------------------------------------------------------------
# primitive samplers


def exponential_sums(rng: np.random.Generator, counts: np.ndarray, theta: float) -> np.ndarray:
    """Per-entry sums of ``counts[i]`` exponential(mean ``theta``) draws, by inversion."""
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    if total > MAX_CLAIMS_PER_DRAW:
        raise RangeError(f"{total} claims in one draw exceeds {MAX_CLAIMS_PER_DRAW}; intensity too large")
    if total == 0:
        return np.zeros(counts.shape, dtype=float)
    sizes = -theta * np.log1p(-rng.random(total))
    owner = np.repeat(np.arange(counts.size), counts.ravel())
    return np.bincount(owner, weights=sizes, minlength=counts.size).reshape(counts.shape)


def poisson_counts(rng: np.random.Generator, mean) -> np.ndarray:
    """``rng.poisson(mean)`` with a :class:`RangeError` beyond the sampler's range."""
    if np.max(mean) > POISSON_MAX_MEAN:
        raise RangeError(f"Poisson mean exceeds {POISSON_MAX_MEAN:g}; path aborted")
    return rng.poisson(mean)


def _check_y(y: np.ndarray) -> None:
    if np.max(y) > EXP_GUARD:
        raise RangeError(f"log-intensity exceeded {EXP_GUARD:g}; path aborted")


def _initial_y(config: SimConfig, rng: np.random.Generator, reps: int) -> np.ndarray:
    law = stationary_law(config.params)
    if config.init_mode == "fixed":
        return np.full(reps, float(config.init_value))
    if config.init_mode == "stationary_mean":
        return np.full(reps, law.mean_y)
    return law.mean_y + law.sd_y * rng.standard_normal(reps)


def _simulate_block(config: SimConfig, rng: np.random.Generator, reps: int, times, c=None):
    """Vectorised recursion for one block of replications.

    Returns recorded arrays at ``times`` and, when ``c`` is given, the running
    minimum of ``c t - S_t`` over ``t = 1..horizon``.
    """
    p = config.params
    sd = math.sqrt(p.sigma2)
    cumulative = config.sampling_mode == "cumulative"
    want = {int(t): k for k, t in enumerate(times)}
    out_y = np.empty((reps, len(times)))
    out_lam = np.empty((reps, len(times)))
    out_n = np.empty((reps, len(times)), dtype=np.int64)
    out_s = np.empty((reps, len(times)))

    y = _initial_y(config, rng, reps)
    _check_y(y)
    y0 = y
    lam_prev = np.exp(y)
    n_cum = np.zeros(reps, dtype=np.int64)
    s_cum = np.zeros(reps)
    margin = np.full(reps, np.inf) if c is not None else None

    for t in range(1, config.horizon + 1):
        y = p.alpha * y + (p.mu + sd * rng.standard_normal(reps))
        _check_y(y)
        lam = np.exp(y)
        if cumulative:
            inc = np.maximum(lam + t - lam_prev - (t - 1), 0.0)
            dn = poisson_counts(rng, inc)
            n_cum = n_cum + dn
            s_cum = s_cum + exponential_sums(rng, dn, p.theta)
            n_t, s_t = n_cum, s_cum
        else:
            n_t = poisson_counts(rng, lam + t)
            s_t = exponential_sums(rng, n_t, p.theta)
        lam_prev = lam
        if margin is not None:
            np.minimum(margin, c * t - s_t, out=margin)
        k = want.get(t)
        if k is not None:
            out_y[:, k] = y
            out_lam[:, k] = lam
            out_n[:, k] = n_t
            out_s[:, k] = s_t
    return out_y, out_lam, out_n, out_s, margin, y0


def _run_blocks(seed: int, reps: int, job: Callable, threads: int = 1, labels: Sequence[int] = ()):
    """Run ``job(rng, block_reps)`` over fixed-size blocks; results in block order."""
    if reps < 1:
        raise ParameterDomainError(f"reps must be >= 1, got {reps}")
    sizes = [min(BLOCK_SIZE, reps - start) for start in range(0, reps, BLOCK_SIZE)]

    def run(b):
        return job(substream(seed, *labels, b), sizes[b])

    if threads <= 1 or len(sizes) == 1:
        return [run(b) for b in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, range(len(sizes))))


# ---------------------------------------------------------------------------
# single-path API


def sample_lambda_path(config: SimConfig, rng: np.random.Generator) -> LambdaPath:
    """One intensity path ``Y_1..Y_horizon`` with ``Y_t = alpha Y_{t-1} + eps_t``."""
    p = config.params
    sd = math.sqrt(p.sigma2)
    y0 = float(_initial_y(config, rng, 1)[0])
    y = np.empty(config.horizon)
    prev = y0
    for i in range(config.horizon):
        prev = p.alpha * prev + p.mu + sd * rng.standard_normal()
        if prev > EXP_GUARD:
            raise RangeError(f"log-intensity exceeded {EXP_GUARD:g} at t={i + 1}; path aborted")
        y[i] = prev
    return LambdaPath(y0=y0, t=np.arange(1, config.horizon + 1), y=y, lam=np.exp(y))


def sample_claims_at(t: int, lam, theta: float, rng: np.random.Generator):
    """``N ~ Poisson(lam + t)`` and the sum of ``N`` exponential claims.

    ``lam`` may be an array, in which case arrays of draws are returned.
    """
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr <= 0) or t < 0:
        raise ParameterDomainError("need lam > 0 and t >= 0")
    n = poisson_counts(rng, lam_arr + t)
    s = exponential_sums(rng, np.atleast_1d(n), theta)
    if lam_arr.ndim == 0:
        return int(n), float(s[0])
    return n, s


def sample_aggregate_series(config: SimConfig, rng: np.random.Generator, include_initial: bool = False) -> list:
    """Records for ``t = 1..horizon``.

    With ``include_initial`` a ``t = 0`` anchor record carrying ``y0`` and no
    claims (``N_0 = S_0 = 0``) is prepended.
    """
    times = np.arange(1, config.horizon + 1)
    y, lam, n, s, _, y0 = _simulate_block(config, rng, 1, times)
    records = [
        PathRecord(int(t), float(y[0, k]), float(lam[0, k]), int(n[0, k]), float(s[0, k]))
        for k, t in enumerate(times)
    ]
    if include_initial:
        records.insert(0, PathRecord(0, float(y0[0]), math.exp(y0[0]), 0, 0.0))
    return records


def sample_surplus_path(config: SimConfig, u: float, c: float, rng: np.random.Generator) -> SurplusPath:
    """``U(t) = u + c t - S_t`` along one cumulative-mode path."""
    _check_premium(u, c)
    if config.sampling_mode != "cumulative":
        raise ParameterDomainError("surplus paths require sampling_mode='cumulative'")
    records = []
    ruin_time = None
    for rec in sample_aggregate_series(config, rng):
        us = u + c * rec.t - rec.s_total
        records.append(PathRecord(rec.t, rec.y, rec.lam, rec.n_claims, rec.s_total, us))
        if ruin_time is None and us < 0:
            ruin_time = rec.t
    return SurplusPath(records, ruin_time)


# ---------------------------------------------------------------------------
# batch API


def simulate_paths(config: SimConfig, reps: int, times=None, threads: int = 1, labels=()) -> PathBatch:
    """``reps`` independent replications recorded at ``times`` (default ``1..horizon``)."""
    times = np.arange(1, config.horizon + 1) if times is None else np.asarray(times, dtype=int)
    if times.size and (times.min() < 1 or times.max() > config.horizon):
        raise ParameterDomainError("recorded times must lie in 1..horizon")
    parts = _run_blocks(
        config.seed, reps, lambda rng, m: _simulate_block(config, rng, m, times)[:4], threads, labels
    )
    y, lam, n, s = (np.concatenate([p[i] for p in parts]) for i in range(4))
    return PathBatch(t=times, y=y, lam=lam, n_claims=n, s_total=s)


def sample_marginal_S(params: ModelParams, t: int, reps: int, seed: int, threads: int = 1) -> np.ndarray:
    """Draws of ``S_t`` with ``Y_t`` taken directly from its stationary law."""
    law = stationary_law(params)

    def job(rng, m):
        y = law.mean_y + law.sd_y * rng.standard_normal(m)
        _check_y(y)
        n = poisson_counts(rng, np.exp(y) + t)
        return exponential_sums(rng, n, params.theta)

    return np.concatenate(_run_blocks(seed, reps, job, threads))


def _check_premium(u: float, c: float) -> None:
    if u < 0:
        raise ParameterDomainError(f"initial surplus must be nonnegative, got {u}")
    if c <= 0:
        raise ParameterDomainError(f"premium rate must be positive, got {c}")


def min_surplus_margin(config: SimConfig, c: float, reps: int, threads: int = 1) -> np.ndarray:
    """Per replication, ``min_{1<=t<=horizon} (c t - S_t)`` in cumulative mode.

    A path started from surplus ``u`` is ruined by the horizon exactly when
    ``u + margin < 0``, so one batch serves every ``u`` (common random numbers).
    """
    _check_premium(0.0, c)
    cfg = config.replace(sampling_mode="cumulative")
    times = np.empty(0, dtype=int)
    parts = _run_blocks(cfg.seed, reps, lambda rng, m: _simulate_block(cfg, rng, m, times, c=c)[4], threads)
    return np.concatenate(parts)


def _ruin_estimate(hits: int, reps: int, u: float, c: float, horizon: int) -> RuinEstimate:
    p = hits / reps
    half = 1.959963984540054 * math.sqrt(p * (1.0 - p) / reps)
    return RuinEstimate(p, reps, max(0.0, p - half), min(1.0, p + half), float(u), float(c), horizon)


def ruin_curve(config: SimConfig, u_grid, c: float, reps: int, threads: int = 1, horizon=None) -> list:
    """Finite-horizon ruin frequencies over ``u_grid`` from one shared path set."""
    if reps < 100:
        raise ParameterDomainError(f"ruin estimation needs reps >= 100, got {reps}")
    if horizon is not None:
        config = config.replace(horizon=int(horizon))
    for u in u_grid:
        _check_premium(u, c)
    margin = min_surplus_margin(config, c, reps, threads)
    return [_ruin_estimate(int(np.count_nonzero(u + margin < 0)), reps, u, c, config.horizon) for u in u_grid]


def estimate_ruin_probability(config: SimConfig, u: float, c: float, horizon: int, reps: int, threads: int = 1) -> RuinEstimate:
    return ruin_curve(config, [u], c, reps, threads, horizon=horizon)[0]
