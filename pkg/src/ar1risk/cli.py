"""Command-line front end.

Settings are resolved as built-in defaults, then the ``--config`` JSON
document, then explicit flags.  Everything is validated before any
computation starts or any file is written.  Data goes to files or standard
output; warnings and notices go to standard error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .errors import DegenerateInputError, NoPositiveSolutionError, ParameterDomainError, RangeError
from .estimation import AUX_NAMES, PARAM_NAMES, replication_study, sample_moments, solve_moments, solve_moments_autocov
from .model import ModelParams, moments_S, third_moment_S_paper
from .rng import MASK64, substream
from .ruin import adjustment_coefficient_closed, bound_vs_mc_report, fit_log_slope, lundberg_bound, net_profit_min_premium
from .simulate import INIT_MODES, SAMPLING_MODES, SimConfig, ruin_curve, sample_aggregate_series

DEFAULTS = {
    "alpha": 0.6,
    "mu": 0.8,
    "sigma2": 0.4,
    "theta": 0.5,
    "c": None,
    "loading": None,
    "horizon": 50,
    "init_mode": "stationary_mean",
    "init_value": None,
    "sampling_mode": "marginal",
    "seed": 0,
    "reps": 500,
    "truncation": 10,
    "u_grid": "0:10:0.5",
    "n_list": [5, 20, 50],
    "threads": 1,
}


class ConfigError(ValueError):
    pass


def parse_u_grid(grid) -> list:
    """``start:stop:step`` with ``start`` included and ``stop`` excluded."""
    if isinstance(grid, (list, tuple)):
        return [float(u) for u in grid]
    try:
        start, stop, step = (float(x) for x in str(grid).split(":"))
    except ValueError:
        raise ConfigError(f"u-grid must look like start:stop:step, got {grid!r}") from None
    if step <= 0 or stop <= start:
        raise ConfigError(f"u-grid needs step > 0 and stop > start, got {grid!r}")
    count = math.ceil((stop - start) / step - 1e-12)
    return [start + k * step for k in range(count)]


def _parse_n_list(v) -> list:
    if isinstance(v, str):
        v = [x for x in v.split(",") if x.strip()]
    out = [int(x) for x in v]
    if not out or min(out) < 1:
        raise ConfigError("n-list entries must be integers >= 1")
    return out


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    c: Optional[float]
    horizon: int
    init_mode: str
    init_value: Optional[float]
    sampling_mode: str
    seed: int
    reps: int
    truncation: int
    u_grid: tuple
    n_list: tuple
    threads: int

    def sim_config(self, **changes) -> SimConfig:
        cfg = SimConfig(self.params, self.horizon, self.init_mode, self.init_value, self.sampling_mode, self.seed)
        return cfg.replace(**changes) if changes else cfg


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return data


def resolve(args: argparse.Namespace) -> RunConfig:
    merged = dict(DEFAULTS)
    merged.update(load_config(args.config))
    for key in DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            merged[key] = v
    try:
        params = ModelParams(
            float(merged["alpha"]), float(merged["mu"]), float(merged["sigma2"]), float(merged["theta"])
        )
        c = merged["c"]
        if c is None and merged["loading"] is not None:
            c = float(merged["loading"]) * net_profit_min_premium(params)
        seed = int(merged["seed"])
        if not 0 <= seed <= MASK64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        reps, truncation, threads = int(merged["reps"]), int(merged["truncation"]), int(merged["threads"])
        if reps < 1 or truncation < 0 or threads < 1:
            raise ConfigError("need reps >= 1, truncation >= 0, threads >= 1")
        init_value = merged["init_value"]
        cfg = RunConfig(
            params=params,
            c=None if c is None else float(c),
            horizon=int(merged["horizon"]),
            init_mode=merged["init_mode"],
            init_value=None if init_value is None else float(init_value),
            sampling_mode=merged["sampling_mode"],
            seed=seed,
            reps=reps,
            truncation=truncation,
            u_grid=tuple(parse_u_grid(merged["u_grid"])),
            n_list=tuple(_parse_n_list(merged["n_list"])),
            threads=threads,
        )
        cfg.sim_config()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    if cfg.c is not None and cfg.c <= 0:
        raise ConfigError("premium rate c must be positive")
    return cfg


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _csv_text(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _json_text(obj) -> str:
    def clean(o):
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        if isinstance(o, (np.floating, float)):
            f = float(o)
            return f if math.isfinite(f) else None
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.bool_):
            return bool(o)
        return o

    return json.dumps(clean(obj), indent=2, sort_keys=False) + "\n"


def _emit(text: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from None


class OutputError(OSError):
    pass


def _note(msg: str) -> None:
    print(f"warning: {msg}", file=sys.stderr)


def _summary_path(args) -> Optional[str]:
    if args.summary:
        return args.summary
    if args.out:
        return str(Path(args.out).with_suffix(".json"))
    return None


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: RunConfig, args) -> None:
    records = sample_aggregate_series(cfg.sim_config(), substream(cfg.seed, 0), include_initial=True)
    rows = [["t", "y", "lambda", "n_claims", "s_total"]]
    rows += [[r.t, r.y, r.lam, r.n_claims, r.s_total] for r in records]
    _emit(_csv_text(rows), args.out)


def cmd_moments(cfg: RunConfig, args) -> None:
    head = ["t", "m1", "m2", "m3"] + (["m3_paper"] if args.paper_m3 else [])
    rows = [head]
    for t in range(cfg.horizon + 1):
        m = moments_S(cfg.params, t)
        row = [t, m.m1, m.m2, m.m3]
        if args.paper_m3:
            row.append(third_moment_S_paper(cfg.params, t))
        rows.append(row)
    _emit(_csv_text(rows), args.out)


def read_claims_csv(path: str) -> np.ndarray:
    """``s_total`` for ``t = 1..n`` from a CSV with ``t`` and ``s_total`` columns.

    A ``t = 0`` anchor row (as written by ``simulate``) is skipped.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read data {path}: {exc}") from None
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise ConfigError(f"{path}: empty file")
    header = [h.strip() for h in header]
    if "t" not in header or "s_total" not in header:
        raise ConfigError(f"{path}: line 1: header must contain 't' and 's_total'")
    it, isx = header.index("t"), header.index("s_total")
    values = []
    expect = 1
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not f.strip() for f in row):
            continue
        try:
            t = int(row[it])
            s = float(row[isx])
        except (ValueError, IndexError):
            raise ConfigError(f"{path}: line {lineno}: cannot parse t/s_total from {row!r}") from None
        if t == 0 and not values:
            continue
        if t != expect:
            raise ConfigError(f"{path}: line {lineno}: expected t={expect}, got t={t}")
        if not math.isfinite(s) or s < 0:
            raise ConfigError(f"{path}: line {lineno}: s_total must be finite and nonnegative")
        values.append(s)
        expect += 1
    if not values:
        raise ConfigError(f"{path}: no observations")
    return np.array(values)


def cmd_estimate(cfg: RunConfig, args) -> None:
    if args.data is None:
        raise ConfigError("estimate needs --data")
    data = read_claims_csv(args.data)
    init = tuple(float(x) for x in args.init.split(",")) if args.init else (0.5, 0.5, 0.5)
    if len(init) != 3:
        raise ConfigError("--init takes alpha,mu,sigma2")
    theta = cfg.params.theta
    if args.use_autocov:
        res = solve_moments_autocov(data, theta, init, args.multistart)
    else:
        res = solve_moments(sample_moments(data), theta, init, args.multistart)
    if not res.converged:
        _note(f"solver did not converge: {res.message}")
    if res.identifiability_note:
        _note("alpha is not identified by (a1, a2, a3); alpha_hat depends on the start point")
    out = {"n": int(data.size), "theta": theta, **res.as_dict()}
    _emit(_json_text(out), args.out)


def cmd_table1(cfg: RunConfig, args) -> None:
    report = replication_study(
        cfg.params,
        n_list=cfg.n_list,
        reps=cfg.reps,
        seed=cfg.seed,
        estimator="autocov" if args.use_autocov else "moments",
        init_mode=cfg.init_mode,
        threads=cfg.threads,
    )
    for n, k in report.failures.items():
        if k:
            _note(f"n={n}: {k} of {cfg.reps} replications did not converge and were excluded")
    if report.estimator == "moments":
        _note("alpha is not identified by the moment equations; its row reflects the solver start point")
    md = report.to_markdown(PARAM_NAMES) + "\n" + report.to_markdown(AUX_NAMES)
    if args.out:
        _emit(_csv_text(report.csv_rows()), args.out)
    _emit(md, args.markdown)


def _warn_notices(notices) -> None:
    for n in notices:
        _note(n)


def cmd_bound(cfg: RunConfig, args) -> None:
    if cfg.c is None:
        raise ConfigError("bound needs --c or --loading")
    adjustment_coefficient_closed(cfg.c, cfg.params.theta)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if args.mc:
            report = bound_vs_mc_report(
                cfg.params, cfg.c, cfg.u_grid, cfg.horizon, cfg.reps, cfg.truncation, cfg.seed, cfg.threads, cfg.init_mode
            )
        else:
            report = lundberg_bound(cfg.params, cfg.c, cfg.u_grid, cfg.truncation)
    _warn_notices(report.notices)
    _emit(_csv_text(report.csv_rows()), args.out)
    path = _summary_path(args)
    if path is not None:
        _emit(_json_text(report.summary()), path)


def cmd_ruin_mc(cfg: RunConfig, args) -> None:
    if cfg.c is None:
        raise ConfigError("ruin-mc needs --c or --loading")
    if cfg.reps < 100:
        raise ConfigError("ruin-mc needs reps >= 100")
    sim = cfg.sim_config(sampling_mode="cumulative")
    ests = ruin_curve(sim, cfg.u_grid, cfg.c, cfg.reps, cfg.threads)
    slope, k = fit_log_slope(cfg.u_grid, [e.psi_hat for e in ests])
    rows = [["u", "psi_hat", "ci_low", "ci_high"]] + [[e.u, e.psi_hat, e.ci_low, e.ci_high] for e in ests]
    try:
        R = adjustment_coefficient_closed(cfg.c, cfg.params.theta).r_value
    except NoPositiveSolutionError:
        R = None
    if slope is None:
        _note(f"slope fit omitted: only {k} grid points with psi_hat in (0.001, 0.3)")
    summary = {
        "c": cfg.c,
        "horizon": cfg.horizon,
        "reps": cfg.reps,
        "seed": cfg.seed,
        "R": R,
        "minus_R": None if R is None else -R,
        "fitted_slope": slope,
        "fit_points": k,
    }
    _emit(_csv_text(rows), args.out)
    path = _summary_path(args)
    if path is not None:
        _emit(_json_text(summary), path)


COMMANDS = {
    "simulate": cmd_simulate,
    "moments": cmd_moments,
    "estimate": cmd_estimate,
    "table1": cmd_table1,
    "bound": cmd_bound,
    "ruin-mc": cmd_ruin_mc,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("common")
    g.add_argument("--config", help="JSON file with default settings; flags override it")
    g.add_argument("--seed", type=int, help="unsigned 64-bit master seed")
    g.add_argument("--out", help="output file (default: standard output)")
    g.add_argument("--threads", type=int, help="worker threads; never changes output")
    m = common.add_argument_group("model")
    m.add_argument("--alpha", type=float)
    m.add_argument("--mu", type=float)
    m.add_argument("--sigma2", type=float)
    m.add_argument("--theta", type=float, help="mean claim size")
    m.add_argument("--horizon", type=int, help="number of time steps / sample size n")
    m.add_argument("--init-mode", dest="init_mode", choices=INIT_MODES)
    m.add_argument("--init-value", dest="init_value", type=float, help="ln Lambda_0 for --init-mode fixed")
    m.add_argument("--sampling-mode", dest="sampling_mode", choices=SAMPLING_MODES)

    premium = argparse.ArgumentParser(add_help=False)
    p = premium.add_argument_group("premium and bound")
    p.add_argument("--c", type=float, help="premium income per unit time")
    p.add_argument("--loading", type=float, help="set c = loading * theta * E[Lambda]")
    p.add_argument("--u-grid", dest="u_grid", help="initial surplus grid start:stop:step (stop excluded)")
    p.add_argument("--reps", type=int, help="Monte Carlo replications")
    p.add_argument("--summary", help="JSON summary file (default: --out with .json suffix)")

    parser = argparse.ArgumentParser(prog="ar1risk", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="one seeded path as CSV t,y,lambda,n_claims,s_total")

    mo = sub.add_parser("moments", parents=[common], help="closed-form raw moments of S_t for t = 0..horizon")
    mo.add_argument("--paper-m3", dest="paper_m3", action="store_true", help="add the as-printed third moment")

    es = sub.add_parser("estimate", parents=[common], help="method-of-moments fit from a claims CSV")
    es.add_argument("--data", help="CSV with t and s_total columns, t = 1..n")
    es.add_argument("--use-autocov", dest="use_autocov", action="store_true", help="match a1, a2 and lag-1 moment")
    es.add_argument("--multistart", action="store_true", help="best of a 3x3x3 start grid")
    es.add_argument("--init", help="start point alpha,mu,sigma2 (default 0.5,0.5,0.5)")

    tb = sub.add_parser("table1", parents=[common], help="replication study of the estimator")
    tb.add_argument("--reps", type=int)
    tb.add_argument("--n-list", dest="n_list", help="comma-separated sample sizes (default 5,20,50)")
    tb.add_argument("--markdown", help="markdown table file (default: standard output)")
    tb.add_argument("--use-autocov", dest="use_autocov", action="store_true")

    bd = sub.add_parser("bound", parents=[common, premium], help="exponential ruin bound over a u-grid")
    bd.add_argument("--truncation", type=int, help="series truncation order N (default 10)")
    bd.add_argument("--mc", action="store_true", help="also fill psi_hat columns by simulation")

    sub.add_parser("ruin-mc", parents=[common, premium], help="finite-horizon ruin frequencies over a u-grid")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        COMMANDS[args.command](cfg, args)
    except (ConfigError, ParameterDomainError, NoPositiveSolutionError, DegenerateInputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OutputError, RangeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
