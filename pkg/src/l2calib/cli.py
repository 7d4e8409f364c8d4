"""Command-line surface: one-shot calibration, Monte-Carlo studies, curves.

Subcommands
-----------
``calibrate``    run the selected methods on one CSV dataset
``simulate``     replicate data generation + estimation, report summaries
``discrepancy``  emit the closed-form and quadrature discrepancy curves

Configuration is a single JSON document whose keys are exactly the
``RunConfig`` field names (snake_case); unknown keys are rejected so
typos fail fast.  Data files are headed CSV with columns ``x1..xd``
then ``y``.  Reports carry 17 significant digits so byte-identical
output is a meaningful determinism check.

Exit codes: 0 success, 1 config/parse error, 2 numerical failure,
3 threshold violation under ``--check``.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import inference, rkhs, testbed
from .calibrate import (KernelConfig, LooCvPhi, ko_calibrate, l2_calibrate,
                        ols_calibrate)
from .numerics import BoxDomain, OptimizerConfig, gauss_legendre, l2_distance_sq
from .rkhs import GcvLambda
from .testbed import SyntheticSystem, generate, make_system

METHODS = ("L2", "OLS", "KO")
MAX_FAILURE_FRACTION = 0.01


class CliConfigError(ValueError):
    """Configuration or input parsing problem (exit code 1)."""


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


# ---------------------------------------------------------------------------
# Run configuration


@dataclass(frozen=True)
class RunConfig:
    example: str = "example2"
    methods: tuple[str, ...] = METHODS
    sigma2: tuple[float, ...] = (0.1, 1.0)
    replications: int = 1000
    seed: int = 0
    design: str = "fixed_grid"
    design_n: int = testbed.FIXED_GRID_N
    kernel_family: str = "gaussian"
    kernel_nu: float | None = None
    phi_grid: tuple[float, ...] = rkhs.DEFAULT_PHI_GRID
    lambda_grid: tuple[float, ...] = rkhs.DEFAULT_LAMBDA_GRID
    quadrature_m: int = 256
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    theta_domain: tuple[float, float] = (-2.0, 2.0)
    output: str = "report.csv"

    def __post_init__(self):
        if self.example not in ("example1", "example2", "custom"):
            raise CliConfigError(f"unknown example {self.example!r}")
        if not self.methods:
            raise CliConfigError("methods must be nonempty")
        for m in self.methods:
            if m not in METHODS:
                raise CliConfigError(f"unknown method {m!r}; expected subset of {METHODS}")
        if self.replications < 1:
            raise CliConfigError("replications must be at least 1")
        if any(s < 0 for s in self.sigma2) or not self.sigma2:
            raise CliConfigError("sigma2 must be a nonempty list of nonnegative values")
        if self.design not in ("fixed_grid", "uniform_random"):
            raise CliConfigError(f"unknown design {self.design!r}")
        if self.theta_domain[0] >= self.theta_domain[1]:
            raise CliConfigError("theta_domain must be [lo, hi] with lo < hi")

    def kernel_config(self) -> KernelConfig:
        return KernelConfig(
            family=self.kernel_family, nu=self.kernel_nu,
            phi_rule=LooCvPhi(self.phi_grid, GcvLambda(self.lambda_grid)),
            lambda_rule=GcvLambda(self.lambda_grid),
        )

    def theta_box(self) -> BoxDomain:
        return BoxDomain((self.theta_domain[0],), (self.theta_domain[1],))


_CONFIG_KEYS = {"example", "methods", "sigma2", "replications", "seed", "design",
                "kernel", "phi_grid", "lambda_grid", "quadrature_m", "optimizer",
                "theta_domain", "output"}


def load_config(path: str | Path) -> RunConfig:
    """Parse a JSON config; unknown keys are an error."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise CliConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise CliConfigError(f"config is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise CliConfigError("config must be a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise CliConfigError(f"unknown config keys: {sorted(unknown)}; "
                             f"allowed keys: {sorted(_CONFIG_KEYS)}")
    kw = {}
    if "example" in raw:
        kw["example"] = raw["example"]
    if "methods" in raw:
        kw["methods"] = tuple(raw["methods"])
    if "sigma2" in raw:
        vals = raw["sigma2"] if isinstance(raw["sigma2"], list) else [raw["sigma2"]]
        kw["sigma2"] = tuple(float(v) for v in vals)
    if "replications" in raw:
        kw["replications"] = int(raw["replications"])
    if "seed" in raw:
        kw["seed"] = int(raw["seed"])
    if "design" in raw:
        d = raw["design"]
        if not isinstance(d, dict) or "kind" not in d:
            raise CliConfigError('design must be {"kind": ..., "n": ...}')
        extra = set(d) - {"kind", "n"}
        if extra:
            raise CliConfigError(f"unknown design keys: {sorted(extra)}")
        kw["design"] = d["kind"]
        if "n" in d:
            kw["design_n"] = int(d["n"])
    if "kernel" in raw:
        k = raw["kernel"]
        extra = set(k) - {"family", "nu"}
        if extra:
            raise CliConfigError(f"unknown kernel keys: {sorted(extra)}")
        kw["kernel_family"] = k.get("family", "gaussian")
        kw["kernel_nu"] = None if k.get("nu") is None else float(k["nu"])
    if "phi_grid" in raw:
        g = raw["phi_grid"] if isinstance(raw["phi_grid"], list) else [raw["phi_grid"]]
        kw["phi_grid"] = tuple(float(v) for v in g)
    if "lambda_grid" in raw:
        g = raw["lambda_grid"] if isinstance(raw["lambda_grid"], list) else [raw["lambda_grid"]]
        kw["lambda_grid"] = tuple(float(v) for v in g)
    if "quadrature_m" in raw:
        kw["quadrature_m"] = int(raw["quadrature_m"])
    if "optimizer" in raw:
        o = raw["optimizer"]
        extra = set(o) - {"grid_points", "tolerance", "max_iterations"}
        if extra:
            raise CliConfigError(f"unknown optimizer keys: {sorted(extra)}")
        kw["optimizer"] = OptimizerConfig(
            grid_points=int(o.get("grid_points", 401)),
            tolerance=float(o.get("tolerance", 1e-9)),
            max_iterations=int(o.get("max_iterations", 200)))
    if "theta_domain" in raw:
        lo, hi = raw["theta_domain"]
        kw["theta_domain"] = (float(lo), float(hi))
    if "output" in raw:
        kw["output"] = str(raw["output"])
    try:
        return RunConfig(**kw)
    except (ValueError, TypeError) as e:
        raise CliConfigError(str(e))


# ---------------------------------------------------------------------------
# Replication engine


@dataclass(frozen=True)
class MethodSummary:
    method: str
    sigma2: float
    mean: float
    mse: float
    sd: float
    reps: int
    theta_star: float
    wall_time_s: float
    failures: int


@dataclass(frozen=True)
class SimulationReport:
    theta_star: float
    rows: tuple[MethodSummary, ...]

    def to_csv(self) -> str:
        lines = ["method,sigma2,mean,mse,sd,reps,theta_star"]
        for r in self.rows:
            lines.append(",".join([r.method, _fmt(r.sigma2), _fmt(r.mean),
                                   _fmt(r.mse), _fmt(r.sd), str(r.reps),
                                   _fmt(r.theta_star)]))
        return "\n".join(lines) + "\n"


@lru_cache(maxsize=8)
def _cached_system(example: str, sigma2: float, design: str, n: int,
                   theta_domain: tuple[float, float]) -> SyntheticSystem:
    box = BoxDomain((theta_domain[0],), (theta_domain[1],))
    return make_system(example, sigma2, design, n, box)


@lru_cache(maxsize=4)
def _cached_rule(m: int):
    return gauss_legendre(testbed.OMEGA, m)


def _ko_seed(seed: int, r: int) -> int:
    return (seed * 1_000_003 + r) & (2 ** 63 - 1)


def _replicate(args: tuple[RunConfig, float, int]) -> dict[str, tuple[float, float, str | None]]:
    """Run every configured method on replication r; never raises.

    Returns ``method -> (theta, seconds, error)`` with theta = NaN on
    failure.
    """
    config, sigma2, r = args
    system = _cached_system(config.example, sigma2, config.design,
                            config.design_n, config.theta_domain)
    pts, y = generate(system, config.seed, r)
    rule = _cached_rule(config.quadrature_m)
    out: dict[str, tuple[float, float, str | None]] = {}
    for meth in config.methods:
        t0 = time.perf_counter()
        try:
            if meth == "L2":
                est = l2_calibrate(pts, y, config.kernel_config(),
                                   system.computer_model, rule, config.optimizer)
            elif meth == "OLS":
                est = ols_calibrate(pts, y, system.computer_model, config.optimizer)
            else:
                est = ko_calibrate(pts, y, system.computer_model,
                                   family=config.kernel_family,
                                   phi_rule=LooCvPhi(config.phi_grid,
                                                     GcvLambda(config.lambda_grid)),
                                   opt=config.optimizer, nu=config.kernel_nu,
                                   seed=_ko_seed(config.seed, r))
            out[meth] = (float(est.theta_hat[0]), time.perf_counter() - t0, None)
        except Exception as e:  # isolated per method, counted by the caller
            out[meth] = (float("nan"), time.perf_counter() - t0,
                         f"{type(e).__name__}: {e}")
    return out


def simulate(config: RunConfig, workers: int = 1,
             log=sys.stderr) -> SimulationReport:
    """Monte-Carlo study: R replications per noise level, aggregated.

    Replication r uses the data stream derived from (seed, r), so the
    report is independent of the worker count; results are gathered in
    replication order before aggregation.  More than 1% failures for
    any (method, sigma2) aborts with diagnostics.
    """
    if config.example == "custom":
        raise CliConfigError("the simulation engine needs a bundled example; "
                             "drive custom systems through the Python API")
    rows: list[MethodSummary] = []
    theta_star = _cached_system(config.example, config.sigma2[0], config.design,
                                config.design_n, config.theta_domain).theta_star
    R = config.replications
    for s2 in config.sigma2:
        tasks = [(config, s2, r) for r in range(R)]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(_replicate, tasks,
                                        chunksize=max(1, R // (8 * workers))))
        else:
            results = [_replicate(t) for t in tasks]
        for meth in config.methods:
            thetas = np.array([res[meth][0] for res in results])
            secs = float(sum(res[meth][1] for res in results))
            errors = [(r, res[meth][2]) for r, res in enumerate(results)
                      if res[meth][2] is not None]
            if len(errors) > MAX_FAILURE_FRACTION * R:
                detail = "; ".join(f"rep {r}: {msg}" for r, msg in errors[:5])
                raise RuntimeError(
                    f"{meth} failed in {len(errors)}/{R} replications at "
                    f"sigma2={s2}: {detail}")
            ok = thetas[np.isfinite(thetas)]
            mean = float(np.mean(ok))
            sd = float(np.std(ok))
            mse = float(np.mean((ok - theta_star) ** 2))
            rows.append(MethodSummary(method=meth, sigma2=s2, mean=mean, mse=mse,
                                      sd=sd, reps=int(ok.size),
                                      theta_star=theta_star, wall_time_s=secs,
                                      failures=len(errors)))
            if log is not None:
                print(f"[simulate] {meth:3s} sigma2={s2:g} reps={ok.size} "
                      f"mean={mean:.6g} sd={sd:.4g} mse={mse:.4g} "
                      f"({secs:.1f}s method time)", file=log)
    return SimulationReport(theta_star=theta_star, rows=tuple(rows))


def check_report(report: SimulationReport, tol: float = 1e-10) -> list[str]:
    """Internal-consistency gate: MSE = SD^2 + bias^2 per row."""
    problems = []
    for r in report.rows:
        lhs = r.mse
        rhs = r.sd ** 2 + (r.mean - r.theta_star) ** 2
        scale = max(abs(lhs), abs(rhs), 1e-300)
        if abs(lhs - rhs) / scale > tol:
            problems.append(f"{r.method} sigma2={r.sigma2:g}: MSE identity off by "
                            f"{abs(lhs - rhs) / scale:.3e} relative")
    return problems


# ---------------------------------------------------------------------------
# Data files


def read_data_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a headed CSV with columns x1..xd then y."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise CliConfigError(f"data file not found: {path}")
    reader = csv.reader(text.splitlines())
    try:
        header = next(reader)
    except StopIteration:
        raise CliConfigError(f"{path}: empty data file")
    header = [h.strip() for h in header]
    if "y" not in header:
        raise CliConfigError(f"{path}: column 'y' not found (header: {header})")
    y_idx = header.index("y")
    d = 1
    while f"x{d + 1}" in header:
        d += 1
    x_idx = []
    for j in range(1, d + 1):
        name = f"x{j}"
        if name not in header:
            raise CliConfigError(f"{path}: column {name!r} not found (header: {header})")
        x_idx.append(header.index(name))
    xs, ys = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        def parse(idx: int, name: str) -> float:
            try:
                return float(row[idx])
            except (ValueError, IndexError):
                cell = row[idx] if idx < len(row) else "<missing>"
                raise CliConfigError(f"{path}: line {lineno}, column {name!r}: "
                                     f"cannot parse {cell!r} as a number")
        xs.append([parse(i, f"x{j + 1}") for j, i in enumerate(x_idx)])
        ys.append(parse(y_idx, "y"))
    if not xs:
        raise CliConfigError(f"{path}: no data rows")
    return np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_calibrate(config: RunConfig, data_path: str | Path,
                  out_path: str | Path, log=sys.stderr) -> int:
    """Run the configured methods on one dataset; one output row each.

    Method failures are recorded in their row without aborting the
    remaining methods.  Standard errors come from the plug-in sandwich
    covariances and are reported only where the model is smooth.
    """
    if config.example == "custom":
        raise CliConfigError("calibrate needs a bundled example model; "
                             "drive custom models through the Python API")
    pts, y = read_data_csv(data_path)
    if pts.shape[1] != 1:
        raise CliConfigError(f"{config.example} expects 1 control variable, "
                             f"data has {pts.shape[1]}")
    system = _cached_system(config.example, config.sigma2[0], config.design,
                            config.design_n, config.theta_domain)
    model = system.computer_model
    rule = _cached_rule(config.quadrature_m)
    kcfg = config.kernel_config()

    zeta_hat = phi_sel = None
    if model.smooth_in_theta and ({"L2", "OLS"} & set(config.methods)):
        try:
            from .calibrate import fit_response_surface
            zeta_hat, phi_sel = fit_response_surface(pts, y, kcfg)
        except Exception as e:
            print(f"[calibrate] surface fit for standard errors failed: {e}",
                  file=log)

    lines = ["method,theta_hat,objective,lambda,phi,stderr,status"]
    for meth in config.methods:
        try:
            if meth == "L2":
                est = l2_calibrate(pts, y, kcfg, model, rule, config.optimizer)
            elif meth == "OLS":
                est = ols_calibrate(pts, y, model, config.optimizer)
            else:
                est = ko_calibrate(pts, y, model, family=config.kernel_family,
                                   phi_rule=kcfg.phi_rule, opt=config.optimizer,
                                   nu=config.kernel_nu, seed=config.seed)
            se = ""
            if meth in ("L2", "OLS") and zeta_hat is not None and model.smooth_in_theta:
                sand = inference.estimate_sandwich(pts, y, zeta_hat, model,
                                                   est.theta_hat)
                cov = sand.cov_l2 if meth == "L2" else sand.cov_ols
                est = replace(est, covariance=cov)
                se = _fmt(np.sqrt(cov[0, 0]))
            lam = est.meta.get("lambda", "")
            phi = est.meta.get("phi", "")
            lines.append(",".join([
                meth, _fmt(est.theta_hat[0]), _fmt(est.objective_value),
                _fmt(lam) if lam != "" else "", _fmt(phi) if phi != "" else "",
                se, "ok"]))
        except Exception as e:
            lines.append(",".join([meth, "", "", "", "", "",
                                   f"error: {type(e).__name__}: {e}".replace(",", ";")]))
    Path(out_path).write_text("\n".join(lines) + "\n")
    print(f"[calibrate] wrote {out_path}", file=log)
    return 0


def discrepancy_curve(example: str, theta_min: float, theta_max: float,
                      steps: int, quadrature_m: int = 256) -> np.ndarray:
    """Columns (theta, closed-form value, quadrature value)."""
    if steps < 2:
        raise CliConfigError("need at least 2 steps")
    if theta_min >= theta_max:
        raise CliConfigError("need theta_min < theta_max")
    if example == "example1":
        closed = testbed.discrepancy_example1_closed_form
        ysf = testbed.ys_example1
    elif example == "example2":
        closed = testbed.discrepancy_closed_form
        ysf = testbed.ys_example2
    else:
        raise CliConfigError(f"unknown example {example!r}")
    rule = _cached_rule(quadrature_m)
    thetas = np.linspace(theta_min, theta_max, steps)
    zeta = lambda p: testbed.zeta_true(p[:, 0])
    rows = np.empty((steps, 3))
    for i, t in enumerate(thetas):
        quad = l2_distance_sq(zeta, lambda p: ysf(p[:, 0], t), rule)
        rows[i] = (t, closed(t), quad)
    return rows


def cmd_discrepancy(example: str, theta_min: float, theta_max: float,
                    steps: int, out_path: str | Path, quadrature_m: int = 256,
                    check: bool = False, log=sys.stderr) -> int:
    rows = discrepancy_curve(example, theta_min, theta_max, steps, quadrature_m)
    lines = ["theta,closed_form,quadrature"]
    for t, cf, qv in rows:
        lines.append(f"{_fmt(t)},{_fmt(cf)},{_fmt(qv)}")
    Path(out_path).write_text("\n".join(lines) + "\n")
    print(f"[discrepancy] wrote {out_path}", file=log)
    if check:
        rel = np.abs(rows[:, 1] - rows[:, 2]) / np.maximum(np.abs(rows[:, 1]), 1e-300)
        inner = np.abs(rows[:, 0]) < 1e-3
        worst_out = float(rel[~inner].max()) if np.any(~inner) else 0.0
        worst_in = float(rel[inner].max()) if np.any(inner) else 0.0
        print(f"[discrepancy] agreement: outer {worst_out:.3e} (tol 1e-9), "
              f"inner {worst_in:.3e} (tol 1e-6)", file=log)
        if worst_out > 1e-9 or worst_in > 1e-6:
            return 3
    return 0


def cmd_simulate(config: RunConfig, out_path: str | Path, workers: int = 1,
                 check: bool = False, log=sys.stderr) -> int:
    report = simulate(config, workers=workers, log=log)
    Path(out_path).write_text(report.to_csv())
    print(f"[simulate] wrote {out_path}", file=log)
    if check:
        problems = check_report(report)
        for p in problems:
            print(f"[simulate] check failed: {p}", file=log)
        if problems:
            return 3
    return 0


# ---------------------------------------------------------------------------
# Entry point


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="l2calib",
                                description="Calibration toolkit for imperfect "
                                            "computer models")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", help="output CSV path (overrides config)")
        sp.add_argument("--seed", type=int, help="RNG seed (overrides config)")
        sp.add_argument("--workers", type=int, default=1,
                        help="parallel replication workers")
        sp.add_argument("--check", action="store_true",
                        help="verify built-in thresholds; exit 3 on violation")

    sc = sub.add_parser("calibrate", help="calibrate one dataset")
    common(sc)
    sc.add_argument("--data", required=True, help="CSV with columns x1..xd,y")

    ss = sub.add_parser("simulate", help="run a Monte-Carlo study")
    common(ss)

    sd = sub.add_parser("discrepancy", help="emit discrepancy curves")
    common(sd)
    sd.add_argument("--example", default="example2",
                    choices=["example1", "example2"])
    sd.add_argument("--theta-min", type=float, default=-2.0)
    sd.add_argument("--theta-max", type=float, default=2.0)
    sd.add_argument("--steps", type=int, default=401)
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "discrepancy":
            out = args.out or "discrepancy.csv"
            m = 256
            if args.config:
                m = load_config(args.config).quadrature_m
            return cmd_discrepancy(args.example, args.theta_min, args.theta_max,
                                   args.steps, out, m, check=args.check)
        config = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        if args.out:
            config = replace(config, output=args.out)
        if args.command == "simulate":
            return cmd_simulate(config, config.output, workers=args.workers,
                                check=args.check)
        return cmd_calibrate(config, args.data, config.output)
    except CliConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (rkhs.FitError, np.linalg.LinAlgError, RuntimeError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
