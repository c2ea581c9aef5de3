"""Command-line entry point.

Exit codes: 0 success, 1 invalid input (flags, geometry, scenario files),
2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .collision import METHODS, Body, CollisionQuery, benchmark_method, estimate
from .gaussian import DegenerateCovarianceError
from .sim import PRESETS, PlannerSettings, experiment_noise_scaling, noise_trends, run_scenario, scenario_obstacle_pass
from .sim_io import ScenarioFileError, export_run, load_scenario, read_trajectory_csv, write_svg

# printed values of the published comparison table, keyed by method id
TABLE1_PAPER = {
    "mc": 0.1728,
    "lambert": 0.4280,
    "bounding-volume": 1.0,
    "max-density": 1.0,
    "chance-linear": 0.5398,
    "rect-box": 0.1601,
    "bound": 0.1772,
}
TABLE1_ORDER = ("mc", "lambert", "bounding-volume", "max-density", "chance-linear", "rect-box", "bound")
MATCH_TOL = 5e-4
# the single-sum method needs a random obstacle; this row uses the robot's
# covariance for it as well
TABLE1_LAMBERT_OBSTACLE_COV = 0.04


class UsageError(Exception):
    """Invalid command line or input; exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("expected at least one number")
    return vals


def _cov(values: list[float] | None, dim: int, what: str) -> np.ndarray | None:
    if values is None:
        return None
    a = np.asarray(values, dtype=float)
    if a.size == 1:
        return a[0] * np.eye(dim)
    if a.size == dim:
        return np.diag(a)
    if a.size == dim * dim:
        return a.reshape(dim, dim)
    raise UsageError(f"{what}: expected 1, {dim} or {dim * dim} numbers for a {dim}-D covariance")


def _body(mean, cov, radius, what: str) -> Body:
    m = np.asarray(mean, dtype=float)
    if m.size not in (2, 3):
        raise UsageError(f"{what}: position must have 2 or 3 components")
    try:
        return Body.make(m, _cov(cov, m.size, what + " covariance"), radius)
    except ValueError as exc:
        raise UsageError(f"{what}: {exc}") from exc


def _query(args) -> CollisionQuery:
    try:
        return CollisionQuery(
            _body(args.robot_mean, args.robot_cov, args.robot_radius, "robot"),
            _body(args.obstacle_mean, args.obstacle_cov, args.obstacle_radius, "obstacle"),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _emit(header: Sequence[str], rows: list[Sequence], fmt: str, out=None) -> None:
    out = out or sys.stdout
    cells = [[_cell(v) for v in r] for r in rows]
    if fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        w.writerows(cells)
        return
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h) for i, h in enumerate(header)]
    out.write("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip() + "\n")
    out.write("  ".join("-" * w for w in widths) + "\n")
    for r in cells:
        out.write("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _write_rows(path: Path, header, rows) -> None:
    buf = io.StringIO()
    _emit(header, rows, "csv", buf)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())


def _geometry_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("geometry (defaults: the published comparison example)")
    g.add_argument("--robot-mean", type=_floats, default=[0.38, 0.0], help="robot center, comma separated")
    g.add_argument("--robot-cov", type=_floats, default=[0.04, 0.04], help="robot covariance: scalar, diagonal or full row-major")
    g.add_argument("--robot-radius", type=float, default=0.2)
    g.add_argument("--obstacle-mean", type=_floats, default=[0.0, 0.0])
    g.add_argument("--obstacle-cov", type=_floats, default=None, help="omit for a deterministic obstacle")
    g.add_argument("--obstacle-radius", type=float, default=0.2)


def _method_list(text: str) -> list[str]:
    if text == "all":
        return list(TABLE1_ORDER)
    names = [t.strip() for t in text.split(",") if t.strip()]
    bad = [n for n in names if n not in METHODS]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown method {', '.join(bad) or text!r}; expected all or any of {', '.join(TABLE1_ORDER)}")
    return names


# -- subcommands -----------------------------------------------------------------------------


def cmd_collide(args) -> int:
    q = _query(args)
    rows = []
    degenerate = 0
    for m in args.method:
        try:
            est = estimate(m, q, n_samples=args.samples, seed=args.seed)
        except ValueError as exc:
            degenerate += isinstance(exc, DegenerateCovarianceError)
            rows.append([m, None, None, None, str(exc)])
            continue
        rows.append([m, est.value, est.half_width_95, est.wall_time * 1e3, ""])
    if degenerate == len(args.method):
        # nothing could be evaluated: the covariance itself is unusable
        raise UsageError("degenerate covariance: every requested method needs a nonsingular covariance")
    _emit(["method", "probability", "ci95_half_width", "time_ms", "note"], rows, args.format)
    return 0


def cmd_benchmark(args) -> int:
    q = _query(args)
    rows = []
    for m in args.method:
        try:
            st = benchmark_method(m, q, repetitions=args.repetitions, n_samples=args.samples, seed=args.seed)
        except ValueError as exc:
            if "repetitions" in str(exc):
                raise UsageError(str(exc)) from exc
            rows.append([m, None, None, None, str(exc)])
            continue
        rows.append([m, st.repetitions, st.mean_ms, st.std_ms, ""])
    header = ["method", "repetitions", "mean_ms", "std_ms", "note"]
    _emit(header, rows, args.format)
    if args.out:
        _write_rows(Path(args.out), header, rows)
    return 0


def table1_rows(samples: int, seed: int) -> list[list]:
    base = CollisionQuery(Body.make([0.38, 0.0], 0.04 * np.eye(2), 0.2), Body.make([0.0, 0.0], None, 0.2))
    rows = []
    for m in TABLE1_ORDER:
        q = base
        if m == "lambert":
            q = replace(base, obstacle=Body.make([0.0, 0.0], TABLE1_LAMBERT_OBSTACLE_COV * np.eye(2), 0.2))
        est = estimate(m, q, n_samples=samples, seed=seed)
        paper = TABLE1_PAPER[m]
        rows.append([m, est.value, est.half_width_95, paper, est.value - paper, abs(est.value - paper) < MATCH_TOL,
                     est.wall_time * 1e3])
    return rows


TABLE1_HEADER = ["method", "value", "ci95_half_width", "paper_value", "difference", "match", "time_ms"]


def cmd_table1(args) -> int:
    rows = table1_rows(args.samples, args.seed)
    _emit(TABLE1_HEADER, rows, args.format)
    if args.out:
        # timing is left out of the file so reruns are byte-identical
        _write_rows(Path(args.out), TABLE1_HEADER[:-1], [r[:-1] for r in rows])
    return 0


def cmd_table2(args) -> int:
    cells = experiment_noise_scaling(scenario_obstacle_pass(), methods=args.methods, scales=args.scales, seeds=args.seeds)
    header = ["method", "scale", "d", "l", "T", "success_rate", "collisions", "runs"]
    rows = [[c.method, c.scale, c.d, c.l, c.T, c.success_rate, c.collisions, c.runs] for c in cells]
    _emit(header, rows, args.format)
    trends = noise_trends(cells)
    trend_rows = [[k, "pass" if v else "fail"] for k, v in trends.items()]
    print()
    _emit(["trend", "result"], trend_rows, args.format)
    if args.out:
        out = Path(args.out)
        _write_rows(out / "table2.csv", header, [[r[0], repr(r[1])] + [repr(float(v)) for v in r[2:6]] + r[6:] for r in rows])
        _write_rows(out / "trends.csv", ["trend", "result"], trend_rows)
    return 0


def cmd_simulate(args) -> int:
    if args.scenario:
        try:
            cfg = load_scenario(args.scenario)
        except ScenarioFileError as exc:
            raise UsageError(str(exc)) from exc
        if args.eps is not None:
            cfg = replace(cfg, eps=args.eps)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
    else:
        cfg = PRESETS[args.preset](0.1 if args.eps is None else args.eps, 0 if args.seed is None else args.seed)
    if args.noise_scale is not None:
        cfg = replace(cfg, noise_scale=args.noise_scale)
    settings = PlannerSettings.for_model(cfg.model, args.method)
    metrics, log = run_scenario(cfg, settings)
    header = ["success", "collisions", "d", "l_mean", "T_mean", "plan_ms_mean"]
    _emit(header, [[metrics.success, metrics.collisions, metrics.d, metrics.mean_length, metrics.mean_duration,
                    metrics.mean_plan_time_ms]], args.format)
    if args.out:
        export_run(log, metrics, args.out, cfg)
    return 0


def cmd_plot(args) -> int:
    src = Path(args.input)
    if src.is_dir():
        src = src / "trajectory.csv"
    try:
        log = read_trajectory_csv(src)
    except FileNotFoundError as exc:
        raise UsageError(f"{src}: no such file") from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    out = Path(args.out) if args.out else src.with_name("trajectories.svg")
    write_svg(log, out)
    print(out)
    return 0


# -- parser ----------------------------------------------------------------------------------


def _scales(text: str) -> list[float]:
    vals = _floats(text)
    if any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError("noise scales must be nonnegative")
    return vals


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return v


def _probability(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError("must lie in (0, 1)")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="chanceplan", description="Gaussian collision probabilities and chance-constrained MPC.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--format", choices=("table", "csv"), default="table", help="standard output format")

    c = sub.add_parser("collide", help="collision probability by one or all methods")
    _geometry_flags(c)
    c.add_argument("--method", type=_method_list, default=["bound"], help="method id, comma list, or all")
    c.add_argument("--samples", type=_positive_int, default=1_000_000, help="samples for sampled methods")
    c.add_argument("--seed", type=int, default=0)
    common(c)
    c.set_defaults(func=cmd_collide)

    b = sub.add_parser("benchmark", help="wall-time statistics per method")
    _geometry_flags(b)
    b.add_argument("--method", type=_method_list, default=list(TABLE1_ORDER), help="method id, comma list, or all")
    b.add_argument("--repetitions", type=int, default=20)
    b.add_argument("--samples", type=_positive_int, default=100_000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", help="also write the table as CSV to this path")
    common(b)
    b.set_defaults(func=cmd_benchmark)

    s = sub.add_parser("simulate", help="closed-loop run of a scenario file or preset")
    src = s.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="YAML scenario file")
    src.add_argument("--preset", choices=sorted(PRESETS))
    s.add_argument("--eps", type=_probability, default=None, help="collision probability threshold (preset default 0.1)")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--noise-scale", type=float, default=None)
    s.add_argument("--method", choices=("bound", "bounding-volume"), default="bound", help="planner constraint")
    s.add_argument("--out", help="directory for trajectory.csv, metrics.csv, timing.csv, trajectories.svg")
    common(s)
    s.set_defaults(func=cmd_simulate)

    t1 = sub.add_parser("table1", help="reproduce the collision-probability comparison table")
    t1.add_argument("--samples", type=_positive_int, default=1_000_000)
    t1.add_argument("--seed", type=int, default=0)
    t1.add_argument("--out", help="CSV path")
    common(t1)
    t1.set_defaults(func=cmd_table1)

    t2 = sub.add_parser("table2", help="noise-scaling comparison of the two planner constraints")
    t2.add_argument("--scales", type=_scales, default=[1.0, 4.0, 16.0], help="comma-separated noise scales")
    t2.add_argument("--seeds", type=_positive_int, default=10, help="seeds 0..N-1 per cell")
    t2.add_argument("--methods", type=lambda t: [m.strip() for m in t.split(",")], default=["bound", "bounding-volume"])
    t2.add_argument("--out", help="directory for table2.csv and trends.csv")
    common(t2)
    t2.set_defaults(func=cmd_table2)

    pl = sub.add_parser("plot", help="render trajectories.svg from an exported run")
    pl.add_argument("--input", required=True, help="run directory or trajectory.csv")
    pl.add_argument("--out", help="SVG path (default next to the input)")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "methods", None) is not None:
            bad = [m for m in args.methods if m not in ("bound", "bounding-volume")]
            if bad:
                raise UsageError(f"unsupported planner constraint(s): {', '.join(bad)}")
        return args.func(args)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (ValueError, ScenarioFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
