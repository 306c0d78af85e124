"""Batch command-line front-end.

Verbs:
    validate  check a config file, print every violation
    learn     run the cooperative learning phase, write logs/weights/metrics
    replay    run the experience phase from consolidated weights
    export    render plots + CSV slices from a finished run directory

Exit codes: 0 success, 1 validation/check failure, 2 runtime divergence,
3 I/O error.  The only honored environment override is OUTPUT_DIR (a --out
flag still wins).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import config as config_mod
from . import engine
from .export import WHAT_CHOICES, export_run

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_DIVERGED = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage errors with the validation exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_INVALID)


def _load_config(path):
    if not os.path.exists(path):
        print(f"config file not found: {path}", file=sys.stderr)
        raise SystemExit(EXIT_IO)
    try:
        return config_mod.load(path)
    except Exception as exc:  # yaml errors carry line/column context
        print(f"failed to parse {path}: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def _resolve_out(cfg, out_flag):
    if out_flag:
        return out_flag
    env = os.environ.get("OUTPUT_DIR")
    if env:
        return env
    return cfg.sim.output_dir


def _report_validation(errors, warnings):
    for w in warnings:
        print(f"warning: {w}")
    for e in errors:
        print(f"violation: {e}")
    if errors:
        print(f"{len(errors)} violation(s)")
    else:
        print("config ok")


def _check_line(name, ok, detail):
    print(f"CHECK {name}: {'PASS' if ok else 'FAIL'} ({detail})")
    return ok


def _learning_checks(cfg, log) -> bool:
    ok = True
    obs = engine.metric_observer(log, settle_s=0.5)
    ok &= _check_line(
        "observer_error<0.01",
        bool(obs["v_max"].max() < 0.01 and obs["omega_max"].max() < 0.01),
        f"max|v-v_hat|={obs['v_max'].max():.4g}, max|w-w_hat|={obs['omega_max'].max():.4g}",
    )
    tr = engine.metric_tracking(log, window_s=5.0)
    ok &= _check_line(
        "tracking_trail5s<0.05",
        bool(tr["pos_max"].max() < 0.05 and tr["theta_max"].max() < 0.05),
        f"pos={tr['pos_max'].max():.4g} m, theta={tr['theta_max'].max():.4g} rad",
    )
    wbar = engine.consolidate_run(log, *cfg.sim.consolidation_window())
    diam = engine.metric_consensus(log)
    wnorm = float(np.mean([np.linalg.norm(w) for w in wbar]))
    ok &= _check_line(
        "consensus_diameter",
        bool(diam < 0.05 * (1.0 + wnorm)),
        f"diameter={diam:.4g} vs bound {0.05 * (1.0 + wnorm):.4g}",
    )
    est = engine.metric_estimation_ratio(log, cfg.vehicle, window_s=10.0)
    worst = max(est["ratio_v"].max(), est["ratio_w"].max())
    ok &= _check_line("estimation_rms<10%H", bool(worst < 0.10), f"worst ratio={worst:.4g}")
    lat = cfg.lattice()
    cross = engine.cross_estimation_rms(log, cfg.vehicle, lat, wbar[0], traj_agent=2,
                                        window_s=10.0)
    cross_worst = max(cross["rms_v"] / cross["rms_h_v"], cross["rms_w"] / cross["rms_h_w"])
    ok &= _check_line("cross_trajectory_rms<15%H", bool(cross_worst < 0.15),
                      f"worst ratio={cross_worst:.4g}")
    pes = engine.pe_levels(log, lat, cfg.rbf.activation_threshold, period_s=2.0 * np.pi)
    ok &= _check_line("pe_level>0", bool(pes.min() > 0.0), f"min={pes.min():.4g}")
    v1 = engine.lyapunov_at(log, 1.0)
    vend = engine.lyapunov_at(log, log.t[-1])
    ok &= _check_line("lyapunov_decrease", bool(vend < v1), f"V(1)={v1:.4g}, V(end)={vend:.4g}")
    return bool(ok)


def _experience_checks(log) -> bool:
    tr = engine.metric_tracking(log, window_s=5.0)
    return _check_line(
        "tracking_trail5s<0.05",
        bool(tr["pos_max"].max() < 0.05 and tr["theta_max"].max() < 0.05),
        f"pos={tr['pos_max'].max():.4g} m, theta={tr['theta_max'].max():.4g} rad",
    )


def cmd_validate(args) -> int:
    cfg = _load_config(args.config)
    errors, warnings = config_mod.validate_config(cfg)
    _report_validation(errors, warnings)
    return EXIT_INVALID if errors else EXIT_OK


def cmd_learn(args) -> int:
    cfg = _load_config(args.config)
    errors, warnings = config_mod.validate_config(cfg, mode="learning")
    if errors:
        _report_validation(errors, warnings)
        return EXIT_INVALID
    out_dir = _resolve_out(cfg, args.out)
    try:
        log = engine.run_learning(cfg)
    except engine.DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    try:
        os.makedirs(out_dir, exist_ok=True)
        lat = cfg.lattice()
        engine.write_run_csv(log, os.path.join(out_dir, "run_log.csv"))
        engine.write_metrics(engine.summary_metrics(cfg, log),
                             os.path.join(out_dir, "metrics.txt"))
        engine.write_snapshots(log, lat, out_dir)
        wbar = engine.consolidate_run(log, *cfg.sim.consolidation_window())
        engine.write_consolidated(wbar, lat, out_dir)
    except OSError as exc:
        print(f"i/o error writing artifacts: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"learning run finished in {log.runtime_s:.2f} s "
          f"({log.backend} backend), artifacts in {out_dir}")
    if args.check:
        return EXIT_OK if _learning_checks(cfg, log) else EXIT_INVALID
    return EXIT_OK


def _parse_assignment(text, n):
    try:
        parts = tuple(int(p) for p in text.split(","))
    except ValueError:
        print(f"bad --assignment '{text}': expected comma-separated integers",
              file=sys.stderr)
        raise SystemExit(EXIT_INVALID)
    if sorted(parts) != list(range(n)):
        print(f"--assignment {parts} is not a permutation of 0..{n - 1}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)
    return parts


def cmd_replay(args) -> int:
    cfg = _load_config(args.config)
    errors, warnings = config_mod.validate_config(cfg, mode="experience")
    if errors:
        _report_validation(errors, warnings)
        return EXIT_INVALID
    for w in warnings:
        print(f"warning: {w}")
    assignment = (
        _parse_assignment(args.assignment, cfg.n_agents)
        if args.assignment else tuple(range(cfg.n_agents))
    )
    lat = cfg.lattice()
    try:
        wbar = engine.load_consolidated(args.weights, lat, cfg.n_agents)
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"bad weights file: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out_dir = _resolve_out(cfg, args.out)
    try:
        log = engine.run_experience(cfg, wbar, assignment)
    except engine.DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    try:
        os.makedirs(out_dir, exist_ok=True)
        engine.write_run_csv(log, os.path.join(out_dir, "run_log.csv"))
        engine.write_metrics(engine.summary_metrics(cfg, log),
                             os.path.join(out_dir, "metrics.txt"))
    except OSError as exc:
        print(f"i/o error writing artifacts: {exc}", file=sys.stderr)
        return EXIT_IO
    print(f"experience run (assignment {','.join(map(str, assignment))}) finished "
          f"in {log.runtime_s:.2f} s ({log.backend} backend), artifacts in {out_dir}")
    if args.check:
        return EXIT_OK if _experience_checks(log) else EXIT_INVALID
    return EXIT_OK


def cmd_export(args) -> int:
    try:
        written = export_run(args.run_dir, args.what, args.out)
    except ValueError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_IO
    for p in written:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cdlfleet",
                     description="Cooperative deterministic-learning fleet simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="validate a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_validate)

    p = sub.add_parser("learn", help="run the cooperative learning phase")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.add_argument("--check", action="store_true", help="evaluate acceptance thresholds")
    p.set_defaults(fn=cmd_learn)

    p = sub.add_parser("replay", help="experience phase from consolidated weights")
    p.add_argument("--config", required=True)
    p.add_argument("--weights", required=True, help="directory with wbar_agent<i>.csv")
    p.add_argument("--assignment", default=None,
                   help="comma-separated reference permutation, e.g. 2,0,1,3")
    p.add_argument("--out", default=None)
    p.add_argument("--check", action="store_true")
    p.set_defaults(fn=cmd_replay)

    p = sub.add_parser("export", help="plots + CSV slices from a run directory")
    p.add_argument("run_dir")
    p.add_argument("--what", required=True,
                   help=f"one of: {', '.join(WHAT_CHOICES)}")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_INVALID


if __name__ == "__main__":
    raise SystemExit(main())
