"""Command-line interface.

Exit codes: 0 success, 2 the run ended in a collision or road exit,
3 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .mapping import GridMap, write_pgm
from .ranging import fit_correction
from .scenario import ConfigError, GainSet, Scenario, SensorNoise, _build, bundled_scenario_names, load_scenario, merge_gains
from .simulate import simulate

EXIT_OK = 0
EXIT_RUN_FAILED = 2
EXIT_CONFIG = 3


def _cmd_simulate(args: argparse.Namespace) -> int:
    from .control import CONTROLLER_NAMES

    if args.controller not in CONTROLLER_NAMES:
        raise ConfigError(
            f"unknown controller {args.controller!r}; expected one of {CONTROLLER_NAMES}"
        )
    scenario = load_scenario(args.scenario)
    gains = None
    if args.gains:
        try:
            gains = merge_gains(scenario.gains, json.loads(Path(args.gains).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read gains file: {exc}") from exc
    noise = None
    if args.noise:
        try:
            noise = _build(SensorNoise, json.loads(Path(args.noise).read_text()), "noise")
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read noise file: {exc}") from exc

    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out_dir}: {exc}") from exc

    log = simulate(
        scenario,
        controller=args.controller,
        gains=gains,
        noise=noise,
        dt=args.dt,
        duration_s=args.duration,
        seed=args.seed,
    )

    from .report import emit_csv, emit_svg, render_figures

    try:
        emit_csv(log, out_dir / "run.csv")
        emit_svg(log, scenario, out_dir / "run.svg")
        render_figures(log, scenario, out_dir)
        grid = log.final_map
        np.savez(
            out_dir / "grid.npz",
            counters=grid.counters,
            origin=np.array([grid.origin_x_m, grid.origin_y_m]),
            cell_size_m=grid.cell_size_m,
            margin=grid.margin,
            counter_cap=grid.counter_cap,
        )
        with open(out_dir / "events.jsonl", "w") as fh:
            for step, tr in log.transitions:
                fh.write(
                    json.dumps(
                        {
                            "step": step,
                            "type": "transition",
                            "machine": tr.machine,
                            "from": tr.from_node,
                            "to": tr.to_node,
                            "cause": tr.cause,
                        }
                    )
                    + "\n"
                )
            for ev in log.events:
                fh.write(json.dumps(ev) + "\n")
        meta = {
            "scenario": log.scenario_name,
            "controller": log.controller,
            "dt": log.dt,
            "seed": log.seed,
            "steps": len(log.records),
            "outcome": log.outcome,
            "reason": log.reason,
        }
        (out_dir / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    print(f"{log.scenario_name}: {log.outcome} after {len(log.records)} steps ({log.reason})")
    print(f"outputs in {out_dir}")
    return EXIT_OK if log.completed else EXIT_RUN_FAILED


def _cmd_map_dump(args: argparse.Namespace) -> int:
    run_dir = Path(args.run)
    grid_file = run_dir / "grid.npz"
    if not grid_file.is_file():
        raise ConfigError(f"no grid.npz in {run_dir}")
    data = np.load(grid_file)
    counters = data["counters"]
    grid = GridMap(
        cell_size_m=float(data["cell_size_m"]),
        origin_x_m=float(data["origin"][0]),
        origin_y_m=float(data["origin"][1]),
        width_cells=counters.shape[0],
        height_cells=counters.shape[1],
        margin=int(data["margin"]),
        counter_cap=int(data["counter_cap"]),
    )
    grid.counters = counters.astype(np.int16)
    out = Path(args.out) if args.out else run_dir / "map.pgm"
    pgm, sidecar = write_pgm(grid, out)
    print(f"wrote {pgm} and {sidecar}")
    return EXIT_OK


def _cmd_calibrate_range(args: argparse.Namespace) -> int:
    samples = []
    try:
        import csv as csv_mod

        with open(args.samples, newline="") as fh:
            reader = csv_mod.reader(fh)
            for row in reader:
                if not row or row[0].strip().lower().startswith("estimated"):
                    continue
                samples.append((float(row[0]), float(row[1])))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read samples CSV: {exc}") from exc
    try:
        corr = fit_correction(samples)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    payload = {"coefficient": corr.coefficient, "intercept_mm": corr.intercept_mm}
    Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    print(f"coefficient {corr.coefficient:.9g}, intercept {corr.intercept_mm:.9g} mm -> {args.out}")
    return EXIT_OK


def _cmd_scenarios(args: argparse.Namespace) -> int:
    if args.action != "list":
        raise ConfigError(f"unknown scenarios action {args.action!r}")
    for name in bundled_scenario_names():
        scn = load_scenario(name)
        print(f"{name}: {scn.description}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="minicar", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario closed-loop")
    sim.add_argument("--scenario", required=True, help="bundled name or JSON path")
    sim.add_argument(
        "--controller",
        default="stanley",
        help="stanley | pid | pure-pursuit",
    )
    sim.add_argument("--gains", help="JSON file with gain overrides")
    sim.add_argument("--dt", type=float, default=None, help="step size [s]")
    sim.add_argument("--duration", type=float, default=None, help="sim duration [s]")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--noise", help="JSON file with sensor noise levels")
    sim.add_argument("--out", required=True, help="output directory")
    sim.set_defaults(func=_cmd_simulate)

    dump = sub.add_parser("map-dump", help="convert a run's grid to PGM")
    dump.add_argument("--run", required=True, help="run output directory")
    dump.add_argument("--out", default=None, help="PGM path (default <run>/map.pgm)")
    dump.set_defaults(func=_cmd_map_dump)

    cal = sub.add_parser("calibrate-range", help="fit the range correction from samples")
    cal.add_argument("--samples", required=True, help="CSV of estimated_mm,true_mm")
    cal.add_argument("--out", required=True, help="where to write the correction JSON")
    cal.set_defaults(func=_cmd_calibrate_range)

    scn = sub.add_parser("scenarios", help="scenario utilities")
    scn.add_argument("action", choices=("list",))
    scn.set_defaults(func=_cmd_scenarios)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
