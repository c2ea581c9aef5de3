"""Run exports (CSV, SVG) and scenario files.

Floats are written with ``repr`` so a re-import reproduces them bit for bit;
wall-clock timing goes to its own file so the other outputs of two identical
runs are byte-identical.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .collision import Body
from .dynamics import MODELS, NoiseSpec
from .sim import RobotSpec, RunLog, RunMetrics, ScenarioConfig, TickRecord

DEG2 = (math.pi / 180.0) ** 2


def _f(x) -> str:
    return repr(float(x))


def _state_names(nx: int) -> list[str]:
    return ["x", "y", "theta"] if nx == 3 else ["px", "py", "pz", "vx", "vy", "vz"]


def _trajectory_header(nx: int, nu: int) -> list[str]:
    names = _state_names(nx)
    cov = [f"cov_{names[i]}_{names[j]}" for i in range(nx) for j in range(i, nx)]
    ctrl = ["v", "omega"] if nu == 2 else ["ax", "ay", "az"]
    return (
        ["tick", "robot"]
        + [f"true_{n}" for n in names]
        + [f"est_{n}" for n in names]
        + cov
        + ctrl
        + ["min_margin", "status"]
    )


def _dims(log: RunLog, cfg: ScenarioConfig | None) -> tuple[int, int]:
    if cfg is not None:
        m = cfg.motion_model
        return m.nx, m.nu
    if log.records:
        r = log.records[0]
        return r.truth.size, r.control.size
    return 3, 2


def write_trajectory_csv(log: RunLog, path: Path, cfg: ScenarioConfig | None = None) -> None:
    nx, nu = _dims(log, cfg)
    iu = np.triu_indices(nx)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_trajectory_header(nx, nu))
        for r in log.records:
            w.writerow(
                [r.tick, r.robot]
                + [_f(v) for v in r.truth]
                + [_f(v) for v in r.belief_mean]
                + [_f(v) for v in r.belief_cov[iu]]
                + [_f(v) for v in r.control]
                + [_f(r.min_margin), r.status]
            )


def read_trajectory_csv(path, dt: float = 0.1) -> RunLog:
    """Inverse of :func:`write_trajectory_csv`."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = rows[0]
    nx = 3 if "true_theta" in header else 6
    nu = 2 if "omega" in header else 3
    ncov = nx * (nx + 1) // 2
    iu = np.triu_indices(nx)
    log = RunLog(dt=dt)
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ValueError(f"{path}:{line_no}: expected {len(header)} fields, got {len(row)}")
        vals = [float(v) for v in row[2:-1]]
        truth = np.array(vals[:nx])
        mean = np.array(vals[nx : 2 * nx])
        cov = np.zeros((nx, nx))
        cov[iu] = vals[2 * nx : 2 * nx + ncov]
        cov = cov + np.triu(cov, 1).T
        control = np.array(vals[2 * nx + ncov : 2 * nx + ncov + nu])
        log.append(TickRecord(int(row[0]), row[1], truth, mean, cov, control, vals[-1], row[-1]))
    return log


def write_metrics_csv(metrics: RunMetrics | None, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["robot", "d", "l", "T", "reached", "collisions", "success"])
        if metrics is None:
            return
        for rid in metrics.l:
            w.writerow([rid, _f(metrics.d), _f(metrics.l[rid]), _f(metrics.T[rid]), int(metrics.reached[rid]), "", ""])
        w.writerow(
            [
                "all",
                _f(metrics.d),
                _f(metrics.mean_length),
                _f(metrics.mean_duration),
                int(all(metrics.reached.values())),
                metrics.collisions,
                int(metrics.success),
            ]
        )


def write_timing_csv(metrics: RunMetrics | None, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["robot", "mean_plan_ms", "max_plan_ms"])
        if metrics is None:
            return
        for rid, (mean_ms, max_ms) in metrics.plan_time_ms.items():
            w.writerow([rid, f"{mean_ms:.3f}", f"{max_ms:.3f}"])


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2")


def _panel(paths: dict[str, np.ndarray], axes: tuple[int, int], labels: tuple[str, str], x0: float, size: float,
           obstacles=(), pad: float = 0.3) -> list[str]:
    pts = [p[:, axes] for p in paths.values() if len(p)]
    pts += [np.array([[b.center.mean[axes[0]], b.center.mean[axes[1]]]]) for b in obstacles]
    if pts:
        allp = np.vstack(pts)
        lo, hi = allp.min(axis=0) - pad, allp.max(axis=0) + pad
    else:
        lo, hi = np.array([-1.0, -1.0]), np.array([1.0, 1.0])
    span = float(max(hi - lo))
    scale = (size - 40.0) / span

    def xy(p):
        return x0 + 20.0 + (p[0] - lo[0]) * scale, size - 20.0 - (p[1] - lo[1]) * scale

    out = [f'<rect x="{x0:.1f}" y="0" width="{size:.1f}" height="{size:.1f}" fill="white" stroke="#999"/>',
           f'<text x="{x0 + 6:.1f}" y="14" font-size="12">{labels[0]}-{labels[1]}</text>']
    for b in obstacles:
        cx, cy = xy(b.center.mean[list(axes)])
        out.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="{b.radius * scale:.2f}" fill="#bbb"/>')
    for k, (rid, p) in enumerate(paths.items()):
        if not len(p):
            continue
        coords = " ".join("{:.2f},{:.2f}".format(*xy(q)) for q in p[:, axes])
        color = _COLORS[k % len(_COLORS)]
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"><title>{rid}</title></polyline>')
    return out


def write_svg(log: RunLog, path: Path, cfg: ScenarioConfig | None = None) -> None:
    """Top view; 3-D runs get a side view (x-z) next to it."""
    paths = {rid: np.array([r.truth for r in log.by_robot(rid)]) for rid in log.robots()}
    npos = cfg.motion_model.npos if cfg is not None else (3 if any(p.shape[1] == 6 for p in paths.values() if len(p)) else 2)
    obstacles = cfg.static_obstacles if cfg is not None else ()
    size = 400.0
    parts = _panel(paths, (0, 1), ("x", "y"), 0.0, size, obstacles)
    width = size
    if npos == 3:
        parts += _panel(paths, (0, 2), ("x", "z"), size, size, obstacles)
        width = 2 * size
    body = "\n".join(parts)
    Path(path).write_text(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{size:.0f}" '
        f'viewBox="0 0 {width:.0f} {size:.0f}">\n{body}\n</svg>\n'
    )


def export_run(log: RunLog, metrics: RunMetrics | None, path, cfg: ScenarioConfig | None = None) -> list[Path]:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        files = [out / "trajectory.csv", out / "metrics.csv", out / "timing.csv", out / "trajectories.svg"]
        write_trajectory_csv(log, files[0], cfg)
        write_metrics_csv(metrics, files[1])
        write_timing_csv(metrics, files[2])
        write_svg(log, files[3], cfg)
    except OSError as exc:
        raise OSError(f"cannot write run exports to {out}: {exc}") from exc
    return files


# -- scenario files --------------------------------------------------------------------------


class ScenarioFileError(ValueError):
    pass


FIELDS = (
    "model",
    "robots",
    "static_obstacles",
    "eps",
    "measurement_noise",
    "noise_scale",
    "dt",
    "max_duration",
    "goal_tolerance",
)


def _angle_weights(model: str, nx: int) -> np.ndarray:
    w = np.ones(nx)
    if model == "unicycle":
        w[2] = DEG2
    return w


def _matrix(value, n: int, where: str) -> np.ndarray:
    a = np.asarray(value, dtype=float)
    if a.ndim == 1 and a.size == n:
        return np.diag(a)
    if a.shape == (n, n):
        return a
    raise ScenarioFileError(f"field {where}: expected {n} variances or an {n}x{n} matrix")


def _field(doc: dict, key: str, where: str = ""):
    if key not in doc:
        raise ScenarioFileError(f"missing field {where}{key}")
    return doc[key]


def scenario_from_dict(doc: dict[str, Any]) -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ScenarioFileError("scenario must be a mapping of fields")
    unknown = set(doc) - set(FIELDS) - {"seed"}
    if unknown:
        raise ScenarioFileError(f"unknown field(s): {', '.join(sorted(unknown))}")
    model_name = _field(doc, "model")
    if model_name not in MODELS:
        raise ScenarioFileError(f"field model: unknown model {model_name!r}")
    model = MODELS[model_name]
    try:
        robots = []
        for i, r in enumerate(_field(doc, "robots")):
            where = f"robots[{i}]."
            start = np.asarray(_field(r, "start", where), dtype=float)
            if model_name == "unicycle" and start.size == 3:
                start = np.array([start[0], start[1], math.radians(start[2])])
            robots.append(RobotSpec(str(_field(r, "id", where)), start, _field(r, "goal", where), float(_field(r, "radius", where))))
        obstacles = []
        for i, o in enumerate(_field(doc, "static_obstacles") or []):
            where = f"static_obstacles[{i}]."
            mean = np.asarray(_field(o, "mean", where), dtype=float)
            cov = _matrix(_field(o, "cov", where), mean.size, where + "cov")
            obstacles.append(Body.make(mean, cov, float(_field(o, "radius", where))))
        noise = _field(doc, "measurement_noise")
        nz = model.measurement_matrix().shape[0]
        R = _matrix(_field(noise, "R", "measurement_noise."), model.nx, "measurement_noise.R")
        Q = _matrix(_field(noise, "Q", "measurement_noise."), nz, "measurement_noise.Q")
        wr = _angle_weights(model_name, model.nx)
        wq = _angle_weights(model_name, nz)
        return ScenarioConfig(
            model=model_name,
            robots=tuple(robots),
            static_obstacles=tuple(obstacles),
            eps=float(_field(doc, "eps")),
            measurement_noise=NoiseSpec(R * np.sqrt(np.outer(wr, wr)), Q * np.sqrt(np.outer(wq, wq))),
            noise_scale=float(_field(doc, "noise_scale")),
            dt=float(_field(doc, "dt")),
            max_duration=float(_field(doc, "max_duration")),
            goal_tolerance=float(_field(doc, "goal_tolerance")),
            seed=int(doc.get("seed", 0)),
        )
    except ScenarioFileError:
        raise
    except (TypeError, ValueError, AttributeError) as exc:
        raise ScenarioFileError(str(exc)) from exc


def load_scenario(path) -> ScenarioConfig:
    """Read a YAML scenario; angles (start headings, angular variances) in
    degrees."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioFileError(f"{path}: {exc.strerror or exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark is not None else "unknown position"
        raise ScenarioFileError(f"{path}: {where}: {exc.problem}") from exc
    try:
        return scenario_from_dict(doc)
    except ScenarioFileError as exc:
        raise ScenarioFileError(f"{path}: {exc}") from exc


def scenario_to_dict(cfg: ScenarioConfig) -> dict[str, Any]:
    model = cfg.motion_model
    nz = model.measurement_matrix().shape[0]
    wr = _angle_weights(cfg.model, model.nx)
    wq = _angle_weights(cfg.model, nz)

    def robot(r: RobotSpec):
        start = r.start.tolist()
        if cfg.model == "unicycle":
            start[2] = math.degrees(start[2])
        return {"id": r.id, "start": start, "goal": r.goal.tolist(), "radius": r.radius}

    return {
        "model": cfg.model,
        "robots": [robot(r) for r in cfg.robots],
        "static_obstacles": [
            {"mean": b.center.mean.tolist(), "cov": b.center.cov.tolist(), "radius": b.radius} for b in cfg.static_obstacles
        ],
        "eps": cfg.eps,
        "measurement_noise": {
            "R": (cfg.measurement_noise.R / np.sqrt(np.outer(wr, wr))).tolist(),
            "Q": (cfg.measurement_noise.Q / np.sqrt(np.outer(wq, wq))).tolist(),
        },
        "noise_scale": cfg.noise_scale,
        "dt": cfg.dt,
        "max_duration": cfg.max_duration,
        "goal_tolerance": cfg.goal_tolerance,
        "seed": cfg.seed,
    }


def dump_scenario(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(scenario_to_dict(cfg), sort_keys=False))
