"""Experiment CLI: TV-L1 deblurring runs, parameter sweeps, rate reports.

Subcommands:

* ``solve`` — degrade an image, run one algorithm, write a per-iteration
  CSV log and the restored image.
* ``sweep`` — repeat a solve over a knob (alpha, s1, s2, gamma1) on the
  identical degraded input and emit a summary CSV.
* ``rates`` — run the scalar toy problem with the inexact method and
  report the ergodic-gap slope plus the bound-violation count.

Exit codes: 0 success, 2 configuration error, 3 divergence.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import imgio, toy, tvl1
from .errors import (ConfigurationError, DivergenceError, PdsaddleError)
from .operators import check_step_condition, metric_norm
from .pdcore import (RunRecord, StoppingRule, ToleranceSchedule, rate_report,
                     run_solver)

SWEEP_HEADER = "knob,value,outer_iters,inner_iters,wall_ms,final_rel_err"

_ALGOS = ("ipdl", "pd_exact", "pdl", "pdhg")
_KNOBS = ("alpha", "s1", "s2", "gamma1")


@dataclass
class ExperimentConfig:
    """Every knob of one TV-L1 run; gamma2 is derived as mu - gamma1."""

    image: str
    crop: Optional[int] = None
    hsize: int = 9
    noise: float = 0.2
    seed: int = 0
    mu: float = 0.05
    gamma1: Optional[float] = None      # default mu/2
    s1: float = 1.0
    s2: float = 2.0
    r1: Optional[float] = None          # default 0.99/s1
    r2: Optional[float] = None          # default 0.99/s2
    alpha: float = 1.0
    c_eps: float = 1.0
    c_delta: float = 1.0
    algo: str = "ipdl"
    max_outer: int = 100
    tol: Optional[float] = None
    f_star: Optional[float] = None
    log: Optional[str] = None
    out: Optional[str] = None
    boundary: str = "periodic"

    def resolved(self) -> "ExperimentConfig":
        if min(self.s1, self.s2) <= 0:
            raise ConfigurationError("s1, s2 must be positive")
        cfg = replace(self)
        if cfg.gamma1 is None:
            cfg.gamma1 = 0.5 * cfg.mu
        if cfg.r1 is None:
            cfg.r1 = 0.99 / cfg.s1
        if cfg.r2 is None:
            cfg.r2 = 0.99 / cfg.s2
        return cfg

    def validate(self) -> None:
        if self.algo not in _ALGOS:
            raise ConfigurationError(f"unknown algorithm {self.algo!r}")
        if self.mu <= 0:
            raise ConfigurationError("mu must be positive")
        g1 = self.gamma1 if self.gamma1 is not None else 0.5 * self.mu
        if not 0.0 < g1 < self.mu:
            raise ConfigurationError("gamma1 must lie strictly in (0, mu)")
        for name in ("s1", "s2"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("r1", "r2"):
            val = getattr(self, name)
            if val is not None and val <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if not 0.0 <= self.noise <= 1.0:
            raise ConfigurationError("noise density must lie in [0, 1]")
        if self.hsize < 1 or self.hsize % 2 == 0:
            raise ConfigurationError("hsize must be odd and positive")
        if self.max_outer < 0:
            raise ConfigurationError("max outer iterations must be >= 0")
        if self.alpha <= 0:
            raise ConfigurationError("alpha must be positive")
        if min(self.c_eps, self.c_delta) < 0:
            raise ConfigurationError("tolerance constants must be >= 0")
        if self.tol is not None and self.tol <= 0:
            raise ConfigurationError("tol must be positive when given")
        if self.f_star is not None and self.f_star <= 0:
            raise ConfigurationError("reference optimum must be positive")


def center_crop(img: np.ndarray, size: int) -> np.ndarray:
    rows, cols = img.shape
    if size > min(rows, cols):
        raise ConfigurationError(
            f"crop {size} exceeds the {rows}x{cols} image")
    r0 = (rows - size) // 2
    c0 = (cols - size) // 2
    return img[r0:r0 + size, c0:c0 + size].copy()


def prepare_instance(cfg: ExperimentConfig):
    """Load, crop and degrade the input, then build the problem."""
    cfg = cfg.resolved()
    clean = imgio.load_image(cfg.image)
    if cfg.crop is not None:
        clean = center_crop(clean, cfg.crop)
    degraded = imgio.degrade(clean, cfg.hsize, cfg.noise, cfg.seed,
                             boundary=cfg.boundary)
    P = tvl1.make_tvl1(degraded, hsize=cfg.hsize, mu=cfg.mu,
                       gamma1=cfg.gamma1, s1=cfg.s1, s2=cfg.s2,
                       r1=cfg.r1, r2=cfg.r2, boundary=cfg.boundary)
    return clean, degraded, P


def run_on_problem(cfg: ExperimentConfig, P: tvl1.TvL1Problem):
    """Run the configured algorithm on a prepared problem instance."""
    cfg = cfg.resolved()
    # Unit outer steps: the block metrics S, R carry the step sizes, and
    # the step condition per block reads 1/r_i - s_i > 0.
    sched = ToleranceSchedule(alpha=cfg.alpha, c_eps=cfg.c_eps,
                              c_delta=cfg.c_delta, tau_const=1.0,
                              lam_const=1.0)
    if not check_step_condition(P.R, P.S, 1.0, 1.0):
        raise ConfigurationError(
            "step condition fails: need 1/r_i > s_i per block")
    saddle = tvl1.make_saddle(P)
    stop = StoppingRule(max_iters=cfg.max_outer, rel_tol=cfg.tol,
                        f_star=cfg.f_star)
    x0, y0 = tvl1.initial_point(P)
    record = run_solver(saddle, cfg.algo, sched, stop, x0, y0)
    restored = np.clip(record.final_state.x.reshape(P.observed.shape),
                       0.0, 1.0)
    return record, restored


def run_experiment(cfg: ExperimentConfig):
    """Full pipeline: degrade, solve, emit CSV log and restored image.

    Returns (record, restored, problem).
    """
    cfg = cfg.resolved()
    cfg.validate()
    clean, degraded, P = prepare_instance(cfg)
    if cfg.max_outer == 0:
        record = RunRecord(algorithm=cfg.algo)
        restored = degraded.copy()
    else:
        record, restored = run_on_problem(cfg, P)
    if cfg.log:
        record.write_csv(cfg.log)
    if cfg.out:
        imgio.save_image(restored, cfg.out)
    return record, restored, P


def _apply_knob(cfg: ExperimentConfig, knob: str,
                value: float) -> ExperimentConfig:
    if knob not in _KNOBS:
        raise ConfigurationError(f"unknown sweep knob {knob!r}")
    out = replace(cfg, **{knob: value})
    if knob in ("s1", "s2") and getattr(cfg, "r" + knob[1]) is None:
        # Re-derive the paired r_i unless it was pinned explicitly.
        out = replace(out, **{"r" + knob[1]: None})
    return out


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)   # (knob, value, ...) tuples
    errors: list = field(default_factory=list)  # (value, message)
    records: dict = field(default_factory=dict)

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write(SWEEP_HEADER + "\n")
            for row in self.rows:
                fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                                  for v in row) + "\n")


def sweep(cfg: ExperimentConfig, knob: str, values,
          summary_path: Optional[str] = None) -> SweepResult:
    """One run per knob value over the identical degraded input.

    Per-run failures are recorded and the sweep continues.  Rows are
    sorted by knob value before writing, so aggregation is
    order-independent.
    """
    cfg.resolved().validate()
    result = SweepResult()
    for value in sorted(values):
        run_cfg = _apply_knob(cfg, knob, float(value)).resolved()
        try:
            run_cfg.validate()
            _, _, P = prepare_instance(run_cfg)
            t0 = time.perf_counter()
            record, _ = run_on_problem(run_cfg, P)
            wall_ms = (time.perf_counter() - t0) * 1e3
            if run_cfg.f_star is not None:
                rel_err = imgio.relative_objective_error(
                    P, record.final_state.x, run_cfg.f_star)
            else:
                rel_err = math.nan
            result.rows.append((knob, float(value),
                                record.outer_iterations,
                                record.inner_iterations, wall_ms, rel_err))
            result.records[float(value)] = record
        except PdsaddleError as exc:
            result.errors.append((float(value), str(exc)))
            result.rows.append((knob, float(value), 0, 0, math.nan,
                                math.nan))
    if summary_path:
        result.write_csv(summary_path)
    return result


def toy_rate_run(alpha: float, c_eps: float, c_delta: float, iters: int,
                 algo: str = "ipdl", tau: float = 0.5, lam: float = 0.5,
                 x0: float = 1.0):
    """Run the |x| toy instance and report (record, slope, violations).

    The toy starts at x0 with the dual at zero; the saddle point is the
    origin, so the recorded gap column is exact.
    """
    problem = toy.make_toy("abs", inexact=(algo == "ipdl"))
    sched = ToleranceSchedule(alpha=alpha, c_eps=c_eps, c_delta=c_delta,
                              tau_const=tau, lam_const=lam)
    stop = StoppingRule(max_iters=iters)
    x_init = np.array([float(x0)])
    y_init = np.zeros(1)
    x_star, y_star = toy.toy_saddle("abs")
    record = run_solver(problem, algo, sched, stop, x_init, y_init,
                        saddle=(x_star, y_star))
    dist_y0 = metric_norm(y_star - y_init, problem.S)
    dist_x0 = metric_norm(x_star - x_init, problem.normal_metric)
    slope, violations = rate_report(record, sched, dist_y0, dist_x0)
    return record, slope, violations


def _float_list(text: str):
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--image", required=True)
    p.add_argument("--crop", type=int, default=None)
    p.add_argument("--hsize", type=int, default=9)
    p.add_argument("--noise", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mu", type=float, default=0.05)
    p.add_argument("--gamma1", type=float, default=None)
    p.add_argument("--s1", type=float, default=1.0)
    p.add_argument("--s2", type=float, default=2.0)
    p.add_argument("--r1", type=float, default=None)
    p.add_argument("--r2", type=float, default=None)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--c-eps", type=float, default=1.0)
    p.add_argument("--c-delta", type=float, default=1.0)
    p.add_argument("--algo", default="ipdl",
                   choices=["ipdl", "pd-exact", "pdl", "pdhg"])
    p.add_argument("--max-outer", type=int, default=100)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--fstar", type=float, default=None)
    p.add_argument("--boundary", default="periodic",
                   choices=["periodic", "neumann"])
    p.add_argument("--log", default=None)


def _config_from_args(args) -> ExperimentConfig:
    return ExperimentConfig(
        image=args.image, crop=args.crop, hsize=args.hsize,
        noise=args.noise, seed=args.seed, mu=args.mu, gamma1=args.gamma1,
        s1=args.s1, s2=args.s2, r1=args.r1, r2=args.r2, alpha=args.alpha,
        c_eps=args.c_eps, c_delta=args.c_delta,
        algo=args.algo.replace("-", "_"), max_outer=args.max_outer,
        tol=args.tol, f_star=args.fstar, log=args.log,
        out=getattr(args, "out", None), boundary=args.boundary)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdsaddle",
        description="Inexact primal-dual TV-L1 deblurring experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="run one restoration")
    _add_common(p_solve)
    p_solve.add_argument("--out", default=None,
                         help="restored image path (png or pgm)")

    p_sweep = sub.add_parser("sweep", help="sweep one knob")
    _add_common(p_sweep)
    p_sweep.add_argument("--knob", required=True, choices=list(_KNOBS))
    p_sweep.add_argument("--values", required=True, type=_float_list)
    p_sweep.add_argument("--summary", default=None,
                         help="summary CSV path")

    p_rates = sub.add_parser("rates", help="toy-problem rate report")
    p_rates.add_argument("--alpha", type=float, default=1.0)
    p_rates.add_argument("--c-eps", type=float, default=1.0)
    p_rates.add_argument("--c-delta", type=float, default=1.0)
    p_rates.add_argument("--iters", type=int, default=1000)
    p_rates.add_argument("--algo", default="ipdl",
                         choices=["ipdl", "pd-exact", "pdl"])
    p_rates.add_argument("--log", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "solve":
            cfg = _config_from_args(args)
            record, restored, P = run_experiment(cfg)
            final_obj = (record.rows[-1][1] if record.rows
                         else tvl1.objective(P, P.f_flat))
            print(f"algorithm={cfg.algo} outer={record.outer_iterations} "
                  f"inner={record.inner_iterations} "
                  f"objective={final_obj:.6g}")
        elif args.command == "sweep":
            cfg = _config_from_args(args)
            result = sweep(cfg, args.knob, args.values,
                           summary_path=args.summary)
            for row in result.rows:
                print(",".join(str(v) for v in row))
            for value, message in result.errors:
                print(f"error at {args.knob}={value}: {message}",
                      file=sys.stderr)
        elif args.command == "rates":
            record, slope, violations = toy_rate_run(
                args.alpha, args.c_eps, args.c_delta, args.iters,
                algo=args.algo.replace("-", "_"))
            if args.log:
                record.write_csv(args.log)
            print(f"slope={slope:.4f} violations={violations} "
                  f"iters={record.outer_iterations}")
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
