"""Command-line entry points.

Subcommands:
    run                  execute a scenario file end to end
    calibrate            run only the strata calibration of a scenario
    analyze-equilibrium  closed form vs simulation on a small instance
    plot                 (re)render figures from result directories

Exit codes: 0 success, 2 validation error, 3 runtime/convergence failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

log = logging.getLogger("loadshift")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="override the scenario seed")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--threads", type=int, default=1,
                        help="concurrent period games")
    common.add_argument("--no-plots", action="store_true", dest="no_plots",
                        help="skip figures")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="loadshift",
        description="Demand-response incentive simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", parents=[common],
                           help="run a scenario end to end")
    p_run.add_argument("scenario", type=Path,
                       help="scenario JSON file or bundled scenario name")

    p_cal = sub.add_parser("calibrate", parents=[common],
                           help="strata calibration only")
    p_cal.add_argument("scenario", type=Path,
                       help="scenario JSON file or bundled scenario name")

    p_eq = sub.add_parser("analyze-equilibrium", parents=[common],
                          help="stationary-distribution validation")
    p_eq.add_argument("instance", type=Path, help="small-instance JSON file")

    p_plot = sub.add_parser("plot", parents=[common],
                            help="render figures from result dirs")
    p_plot.add_argument("results", type=Path, nargs="+",
                        help="one or more result directories")
    return parser


def _load(path) -> "object":
    from .scenario import load_bundled, load_scenario

    if not Path(path).exists() and not str(path).endswith(".json"):
        return load_bundled(str(path))
    return load_scenario(path)


def _cmd_run(args) -> int:
    from .outputs import emit_outputs
    from .runner import run_scenario

    config = _load(args.scenario)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    out = args.out or Path(f"results-{config.name}")
    result = run_scenario(config, threads=max(1, args.threads))
    written = emit_outputs(result, out, plots=not args.no_plots)
    capped = [c for c in result.summary["convergence"] if not c["converged"]]
    print(f"{config.name}: {len(written)} files -> {out}")
    print(
        f"  total {result.summary['total_final_kwh']:.1f} kWh, "
        f"qualifying reduction {result.summary['reduction_qualifying_pct']:.1f}%"
    )
    if capped:
        # Periods that ran to the step cap ended inside their stationary
        # band rather than at a frozen assignment; reported, not an error.
        log.info("%d period(s) ran to the step cap", len(capped))
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    from . import rngstreams as streams
    from .loadprofiles import DeviceModel, calibrate_strata
    from .runner import _build_targets

    config = _load(args.scenario)
    if args.seed is not None:
        config = config.with_seed(args.seed)
    devices = tuple(
        DeviceModel(
            name=d["name"],
            nominal_power_kw=d["nominal_power_kw"],
            trans=tuple(tuple(row) for row in d["ref_trans"]),
        )
        for d in config["devices"]
    )
    cal = config["calibration"]
    targets = _build_targets(config)
    results = calibrate_strata(
        devices,
        targets,
        horizon=config.horizon,
        rng_for_pair=lambda d, s: streams.substream(
            config.seed, streams.CALIBRATION, d, s
        ),
        num_test=cal["num_test"],
        delta=cal["delta"],
        max_iter=cal["max_iter"],
        resolution_hours=config["profile_resolution_hours"],
    )
    out = args.out or Path(f"calibration-{config.name}")
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        str(s): {
            name: {
                "matrix": [[float(v) for v in row] for row in res.matrix],
                "iterations": res.iterations,
                "avg_energy_kwh": res.avg_energy_kwh,
                "goal_energy_kwh": targets[s][name].goal_energy_kwh,
                "tol_kwh": targets[s][name].tol_kwh,
            }
            for name, res in per_dev.items()
        }
        for s, per_dev in results.items()
    }
    path = out / "calibration.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"calibrated {sum(len(v) for v in results.values())} matrices -> {path}")
    return EXIT_OK


def _cmd_analyze_equilibrium(args) -> int:
    from .equilibrium import (
        analyze,
        empirical_distribution,
        instance_from_dict,
        stationary_distribution,
        write_distribution_csv,
        write_report_json,
    )

    payload = json.loads(Path(args.instance).read_text(encoding="utf-8"))
    instance = instance_from_dict(payload)
    steps = int(payload.get("steps", 1_000_000))
    burn_in = int(payload.get("burn_in", 10_000))
    seed = args.seed if args.seed is not None else int(payload.get("seed", 0))
    rng = np.random.default_rng(seed)
    report = analyze(instance, steps=steps, burn_in=burn_in, rng=rng)
    out = args.out or Path("equilibrium-report")
    out.mkdir(parents=True, exist_ok=True)
    write_report_json(out / "report.json", report)
    dist = stationary_distribution(instance)
    empirical = empirical_distribution(
        instance, steps, np.random.default_rng(seed), burn_in=burn_in
    )
    write_distribution_csv(out / "distribution.csv", dist, empirical)
    print(json.dumps(report, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_plot(args) -> int:
    from . import plots

    out = args.out or Path("plots-combined")
    out.mkdir(parents=True, exist_ok=True)
    produced = []
    for result_dir in args.results:
        if not (Path(result_dir) / "summary.json").exists():
            print(f"{result_dir}: no summary.json", file=sys.stderr)
            return EXIT_VALIDATION
    if len(args.results) == 1:
        produced.extend(plots.replot_result_dir(args.results[0], out))
    comparison = plots.compare_power_evolution(args.results, out / "power_evolution_compare.svg")
    if comparison is not None:
        produced.append(comparison)
    print(f"wrote {len(produced)} figures -> {out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    from .loadprofiles import CalibrationError
    from .scenario import ScenarioError
    from .incentives import IncentiveError
    from .socialgraph import GraphParamError

    handlers = {
        "run": _cmd_run,
        "calibrate": _cmd_calibrate,
        "analyze-equilibrium": _cmd_analyze_equilibrium,
        "plot": _cmd_plot,
    }
    try:
        return handlers[args.command](args)
    except (ScenarioError, IncentiveError, GraphParamError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except json.JSONDecodeError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except CalibrationError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
