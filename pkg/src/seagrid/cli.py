"""Command-line front end: runs, parameter sweeps and scheme comparisons.

Every invocation is deterministic: seeds fully define the outputs, floats
are written with repr so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import svgplot
from .optimizer import SCHEMES, LoopSettings, run_horizon
from .scenario import (Fleet, ScenarioConfig, ScenarioError, load_profile,
                       load_scenario_path)

SWEEP_AXES = ("power_tbs", "antennas_relay", "user_distribution", "csi_gamma")


@dataclass
class RunManifest:
    command: str
    scenario: str | None
    profile: str
    schemes: list
    seeds: str                  # raw spec: a count or a comma list
    out: Path
    sweep_axis: str | None = None
    sweep_values: list = None
    plots: bool = False

    def to_json(self) -> str:
        d = dict(self.__dict__)
        d["out"] = str(self.out)
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


def _load_config(manifest: RunManifest) -> ScenarioConfig:
    if manifest.scenario:
        return load_scenario_path(manifest.scenario)
    return load_profile(manifest.profile)


def _parse_seeds(spec: str, base: int) -> list:
    parts = [p.strip() for p in str(spec).split(",") if p.strip()]
    if not parts:
        raise ScenarioError("--seeds: empty")
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise ScenarioError(f"--seeds: not integers: {spec!r}") from None
    if len(vals) == 1:
        # a single number is a Monte Carlo count from the base seed
        if vals[0] < 1:
            raise ScenarioError("--seeds: count must be >= 1")
        return [base + k for k in range(vals[0])]
    return vals


def _final_window(records) -> slice:
    n = len(records)
    return slice(max(0, n - max(1, n // 5)), n)


def _final_eta(run) -> float:
    recs = run.records[_final_window(run.records)]
    return float(np.mean([r.eta for r in recs]))


def _final_jain(run) -> float:
    recs = run.records[_final_window(run.records)]
    return float(np.mean([r.jain_effective for r in recs]))


# ----------------------------------------------------------------- outputs

def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header: list, rows: list) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _results_rows(runs, config):
    uids = config.user_ids()
    header = ["scheme", "seed", "slot", "eta", "eta_belief", "min_rate",
              "jain", "iterations", "converged", "solver_failure",
              "rejected_steps", "usv_x", "usv_y", "uav_x", "uav_y",
              "backhaul_usv", "backhaul_uav",
              "causality_usv", "causality_uav",
              "speed_res_usv", "steer_res_usv",
              "speed_res_uav", "steer_res_uav", "safety_max"]
    header += [f"budget_res_{g}" for g in ("tbs", "usv", "uav", "sat")]
    header += [f"rate_{u}" for u in uids]
    rows = []
    for run in runs:
        for r in run.records:
            row = [run.scheme, run.seed, r.slot, r.eta, r.eta_belief,
                   r.report.min_rate, r.jain_effective, r.iterations,
                   r.converged, r.solver_failure, r.rejected_steps,
                   r.q_v[0], r.q_v[1], r.q_a[0], r.q_a[1],
                   r.report.backhaul_rates["usv"],
                   r.report.backhaul_rates["uav"],
                   r.report.causality_residuals["usv"],
                   r.report.causality_residuals["uav"],
                   r.kinematics["usv"].speed_residual,
                   r.kinematics["usv"].steering_residual,
                   r.kinematics["uav"].speed_residual,
                   r.kinematics["uav"].steering_residual,
                   r.safety.max_residual]
            row += [r.budget_residuals[g] for g in ("tbs", "usv", "uav", "sat")]
            row += [r.effective[u] for u in uids]
            rows.append(row)
    return header, rows


def _trajectory_rows(runs, config):
    header = ["scheme", "seed", "slot", "node", "x", "y"]
    rows = []
    for run in runs:
        for r in run.records:
            rows.append([run.scheme, run.seed, r.slot, "usv",
                         r.q_v[0], r.q_v[1]])
            rows.append([run.scheme, run.seed, r.slot, "uav",
                         r.q_a[0], r.q_a[1]])
        # user tracks are linear drifts; reconstruct from the scenario
        for uid in config.user_ids():
            g = uid.rstrip("0123456789")
            k = int(uid[len(g):])
            p0 = config.fleets[g].positions[k]
            v = config.fleets[g].velocities[k]
            for r in run.records:
                p = p0 + r.slot * config.slot_length * v
                rows.append([run.scheme, run.seed, r.slot, uid, p[0], p[1]])
    return header, rows


def _plot_eta(runs, path):
    fig = svgplot.Figure(title="Worst service rate per slot",
                         xlabel="time slot", ylabel="min rate (bit/s/Hz)")
    by_scheme = {}
    for run in runs:
        by_scheme.setdefault(run.scheme, []).append(run)
    for scheme, group in by_scheme.items():
        ys = np.mean([[r.eta for r in run.records] for run in group], axis=0)
        fig.line(range(len(ys)), ys, label=scheme)
    fig.write(path)


def _plot_convergence(runs, path):
    run = runs[0]
    fig = svgplot.Figure(title="Inner-loop convergence (first slot)",
                         xlabel="iteration", ylabel="min rate (bit/s/Hz)")
    tr = run.records[0].trace
    fig.line(range(len(tr)), tr, label=f"{run.scheme}, seed {run.seed}")
    fig.write(path)


def _plot_map(runs, config, path):
    fig = svgplot.Figure(width=720, height=520, title="Relay trajectories",
                         xlabel="x (m)", ylabel="y (m)", equal_aspect=True)
    for ob in config.obstacles:
        fig.circle(ob.center[0], ob.center[1], ob.radius, color="#aa3333")
    for bound in (config.areas.coastal, config.areas.offshore,
                  config.areas.middle):
        fig.vline(bound)
    seen = set()
    for run in runs:
        if run.scheme in seen:
            continue
        seen.add(run.scheme)
        xs = [r.q_v[0] for r in run.records]
        ys = [r.q_v[1] for r in run.records]
        fig.line(xs, ys, label=f"usv ({run.scheme})")
        xs = [r.q_a[0] for r in run.records]
        ys = [r.q_a[1] for r in run.records]
        fig.line(xs, ys, label=f"uav ({run.scheme})", dash="5,3")
    ux = [config.fleets[g].positions[k][0] for g in ("tbs", "usv", "uav", "sat")
          for k in range(config.user_counts[g])]
    uy = [config.fleets[g].positions[k][1] for g in ("tbs", "usv", "uav", "sat")
          for k in range(config.user_counts[g])]
    fig.scatter(ux, uy, label="users (slot 0)", color="#444444")
    fig.write(path)


# ------------------------------------------------------------ sweep pieces

def scattered_fleets(config: ScenarioConfig, kind: str,
                     seed: int) -> ScenarioConfig:
    """Redraw the relay-served fleets: uniform in a box around the nominal
    centroid, or a clustered (parent + normal offsets) layout standing in
    for a Poisson cluster realization with the user count held fixed."""
    if kind not in ("uniform", "poisson"):
        raise ScenarioError(f"user_distribution: unknown kind {kind!r}")
    fleets = dict(config.fleets)
    for g in ("usv", "uav"):
        fl = config.fleets[g]
        c = fl.positions.mean(axis=0)
        half = np.maximum(np.ptp(fl.positions, axis=0) / 2.0, 150.0)
        rng = np.random.default_rng(
            [seed, zlib.crc32(g.encode()), zlib.crc32(kind.encode())])
        m = fl.positions.shape[0]
        if kind == "uniform":
            pts = c + rng.uniform(-1.0, 1.0, size=(m, 2)) * half
        else:
            parent = c + rng.uniform(-0.5, 0.5, size=2) * half
            pts = parent + rng.normal(0.0, 1.0, size=(m, 2)) * (half / 3.0)
            pts = np.clip(pts, c - half, c + half)
        fleets[g] = Fleet(pts, np.zeros_like(pts))
    return replace(config, fleets=fleets)


def _apply_axis(config: ScenarioConfig, axis: str, value, seed: int):
    if axis == "power_tbs":
        pb = dict(config.power_budgets)
        pb["tbs"] = 10.0 ** ((float(value) - 30.0) / 10.0)
        return replace(config, power_budgets=pb)
    if axis == "antennas_relay":
        n = int(value)
        if n < 1:
            raise ScenarioError("antennas_relay: must be >= 1")
        ac = dict(config.antenna_counts)
        ac["usv"] = ac["uav"] = n
        return replace(config, antenna_counts=ac)
    if axis == "csi_gamma":
        g = float(value)
        if g < 0:
            raise ScenarioError("csi_gamma: must be nonnegative")
        return replace(config, csi_uncertainty_ratio=g)
    if axis == "user_distribution":
        return scattered_fleets(config, str(value), seed)
    raise ScenarioError(f"unknown sweep axis {axis!r}")


def _parse_sweep(spec: str):
    if "=" not in spec:
        raise ScenarioError("--sweep: expected AXIS=V1,V2,...")
    axis, _, rest = spec.partition("=")
    axis = axis.strip()
    if axis not in SWEEP_AXES:
        raise ScenarioError(
            f"--sweep: axis must be one of {', '.join(SWEEP_AXES)}")
    values = [v.strip() for v in rest.split(",") if v.strip()]
    if not values:
        raise ScenarioError("--sweep: no values given")
    if axis != "user_distribution":
        values = [float(v) for v in values]
    return axis, values


def _trend(values) -> str:
    diffs = np.diff(np.asarray(values, dtype=float))
    if np.all(diffs >= 0):
        return "non-decreasing"
    if np.all(diffs <= 0):
        return "non-increasing"
    return "mixed"


# ---------------------------------------------------------------- commands

def cmd_run(manifest: RunManifest) -> int:
    config = _load_config(manifest)
    base = int(os.environ.get("SEAGRID_SEED", config.rng_seed))
    seeds = _parse_seeds_field(manifest, base)
    manifest.out.mkdir(parents=True, exist_ok=True)
    runs = [run_horizon(config, scheme, seed, LoopSettings())
            for scheme in manifest.schemes for seed in seeds]
    header, rows = _results_rows(runs, config)
    _write_csv(manifest.out / "results.csv", header, rows)
    header, rows = _trajectory_rows(runs, config)
    _write_csv(manifest.out / "trajectories.csv", header, rows)
    (manifest.out / "manifest.json").write_text(manifest.to_json())
    if manifest.plots:
        _plot_eta(runs, manifest.out / "rates.svg")
        _plot_convergence(runs, manifest.out / "convergence.svg")
        _plot_map(runs, config, manifest.out / "map.svg")
    return 2 if any(run.any_failure for run in runs) else 0


def cmd_sweep(manifest: RunManifest) -> int:
    config = _load_config(manifest)
    base = int(os.environ.get("SEAGRID_SEED", config.rng_seed))
    seeds = _parse_seeds_field(manifest, base)
    axis, values = manifest.sweep_axis, manifest.sweep_values
    manifest.out.mkdir(parents=True, exist_ok=True)
    rows = []
    failure = False
    means = {}
    for value in values:
        for scheme in manifest.schemes:
            finals, jains, iters = [], [], []
            for seed in seeds:
                cfg = _apply_axis(config, axis, value, seed)
                run = run_horizon(cfg, scheme, seed, LoopSettings())
                failure = failure or run.any_failure
                finals.append(_final_eta(run))
                jains.append(_final_jain(run))
                iters += [r.iterations for r in run.records]
            mean = float(np.mean(finals))
            rows.append([axis, value, scheme, len(seeds), mean,
                         float(np.std(finals)), float(np.mean(jains)),
                         float(np.mean(iters))])
            means.setdefault(scheme, []).append(mean)
    _write_csv(manifest.out / "sweep.csv",
               ["axis", "value", "scheme", "seeds", "eta_mean", "eta_std",
                "jain_mean", "iterations_mean"], rows)
    (manifest.out / "manifest.json").write_text(manifest.to_json())
    for scheme, ms in means.items():
        print(f"trend: eta vs {axis} [{scheme}]: {_trend(ms)} "
              f"({' -> '.join(repr(m) for m in ms)})")
    if manifest.plots and axis != "user_distribution":
        fig = svgplot.Figure(title=f"Converged min rate vs {axis}",
                             xlabel=axis, ylabel="min rate (bit/s/Hz)")
        for scheme, ms in means.items():
            fig.line([float(v) for v in values], ms, label=scheme)
        fig.write(manifest.out / "sweep.svg")
    return 2 if failure else 0


def cmd_compare(manifest: RunManifest) -> int:
    if len(manifest.schemes) < 2:
        raise ScenarioError("compare needs at least two schemes")
    config = _load_config(manifest)
    base = int(os.environ.get("SEAGRID_SEED", config.rng_seed))
    seeds = _parse_seeds_field(manifest, base)
    manifest.out.mkdir(parents=True, exist_ok=True)
    runs = [run_horizon(config, scheme, seed, LoopSettings())
            for scheme in manifest.schemes for seed in seeds]
    by_scheme = {}
    for run in runs:
        by_scheme.setdefault(run.scheme, []).append(run)
    finals = {s: float(np.mean([_final_eta(r) for r in g]))
              for s, g in by_scheme.items()}
    ranking = sorted(finals, key=lambda s: -finals[s])
    rows = []
    for scheme, group in by_scheme.items():
        etas = np.array([[r.eta for r in run.records] for run in group])
        jain = float(np.mean([_final_jain(r) for r in group]))
        for slot in range(etas.shape[1]):
            rows.append([scheme, slot, float(etas[:, slot].mean()),
                         float(etas[:, slot].std()), finals[scheme], jain,
                         ranking.index(scheme) + 1])
    _write_csv(manifest.out / "compare.csv",
               ["scheme", "slot", "eta_mean", "eta_std", "final_mean",
                "jain_mean", "rank"], rows)
    (manifest.out / "manifest.json").write_text(manifest.to_json())
    print("ranking: " + " > ".join(ranking))
    if manifest.plots:
        _plot_eta(runs, manifest.out / "compare.svg")
    header, rrows = _results_rows(runs, config)
    _write_csv(manifest.out / "results.csv", header, rrows)
    return 2 if any(run.any_failure for run in runs) else 0


def _parse_seeds_field(manifest: RunManifest, base: int) -> list:
    return _parse_seeds(manifest.seeds, base)


# ------------------------------------------------------------------- entry

def _build_parser():
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--scenario", type=str, default=None,
                        help="scenario TOML (overrides --profile)")
    shared.add_argument("--profile", choices=("desk", "paper"),
                        default="desk", help="packaged scenario profile")
    shared.add_argument("--schemes", type=str, default="proposed",
                        help="comma-separated subset of: " + ",".join(SCHEMES))
    shared.add_argument("--seeds", type=str, default="1",
                        help="Monte Carlo count, or explicit seed list")
    shared.add_argument("--out", type=str, default="out",
                        help="output directory")
    shared.add_argument("--plots", action="store_true",
                        help="also write SVG plots")
    p = argparse.ArgumentParser(
        prog="seagrid",
        description="maritime relay network simulator and optimizer")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[shared],
                   help="run the horizon for each scheme and seed")
    ps = sub.add_parser("sweep", parents=[shared],
                        help="rerun while varying one parameter axis")
    ps.add_argument("--sweep", type=str, required=True,
                    metavar="AXIS=V1,V2,...",
                    help="axis in: " + ",".join(SWEEP_AXES))
    pc = sub.add_parser("compare", parents=[shared],
                        help="compare schemes on one scenario")
    pc.set_defaults(schemes=",".join(SCHEMES))
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
        for s in schemes:
            if s not in SCHEMES:
                raise ScenarioError(f"unknown scheme {s!r}")
        axis, values = (None, None)
        if getattr(args, "sweep", None):
            axis, values = _parse_sweep(args.sweep)
        manifest = RunManifest(
            command=args.command, scenario=args.scenario,
            profile=args.profile, schemes=schemes, seeds=args.seeds,
            out=Path(args.out), sweep_axis=axis, sweep_values=values,
            plots=args.plots)
        handler = {"run": cmd_run, "sweep": cmd_sweep,
                   "compare": cmd_compare}[args.command]
        return handler(manifest)
    except (ScenarioError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
