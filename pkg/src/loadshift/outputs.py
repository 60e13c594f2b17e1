"""Result-directory emission.

Layout:
    scenario.json             resolved configuration (canonical form)
    summary.json              energies, reductions, spend, convergence
    graph.txt                 influence network edge list
    opinions_<topic>.csv      opinion trajectories per topic
    calibration.json          calibrated matrices per stratum and device
    profiles.csv              raw device sample paths
    allocation.csv            final duty and energy per household/device/period
    trajectory_<p>.csv        aggregate-energy trace of each period game
    incentives.csv            per-household bonus / social-value accounting
    fitness_tracked.csv       fitness traces of the tracked household
    plots/*.svg               rendered figures (unless disabled)

Writers use repr() for floats, so reruns of the same scenario and seed
are byte-identical.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path


from .runner import RunResult
from .socialgraph import export_graph, write_opinion_csv

log = logging.getLogger(__name__)


def _f(value) -> str:
    return repr(float(value))


def write_allocation_csv(path, result: RunResult) -> None:
    products = result.products
    names = products.profiles.device_names
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("household,device,period,duty,kwh\n")
        for pr in result.periods:
            game = pr.state.game
            duties = pr.state.duties()
            qvals = pr.state.agent_kwh()
            for a in range(game.n_agents):
                h_idx, d_idx = game.agent_pairs[a]
                fh.write(
                    f"{h_idx},{names[d_idx]},{pr.period},"
                    f"{_f(duties[a])},{_f(qvals[a])}\n"
                )


def write_profiles_csv(path, result: RunResult) -> None:
    profiles = result.products.profiles
    names = profiles.device_names
    states = profiles.states
    powers = profiles.powers_kw
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("household,device,period,state,kw\n")
        n_h, n_d, horizon = states.shape
        for h in range(n_h):
            for d in range(n_d):
                row = states[h, d]
                power = powers[d]
                for t in range(horizon):
                    s = int(row[t])
                    fh.write(f"{h},{names[d]},{t},{s},{_f(s * power)}\n")


def write_trajectory_csv(path, period_result) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,aggregate_kwh,accepted\n")
        q = period_result.q_trajectory
        acc = period_result.accept_flags
        for step in range(len(q)):
            fh.write(f"{step},{_f(q[step])},{int(acc[step])}\n")


def write_incentives_csv(path, result: RunResult) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(
            "household,period,financial_bonus,social_value,"
            "utility_final,utility_at_pref\n"
        )
        for row in result.accounting_rows:
            fh.write(
                f"{row['household']},{row['period']},"
                f"{_f(row['financial_bonus'])},{_f(row['social_value'])},"
                f"{_f(row['utility_final'])},{_f(row['utility_at_pref'])}\n"
            )


def write_fitness_csv(path, result: RunResult) -> None:
    names = result.products.profiles.device_names
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("period,step," + ",".join(names) + "\n")
        for pr in result.periods:
            if pr.tracked_fitness is None:
                continue
            for r in range(pr.tracked_fitness.shape[0]):
                step = r * pr.tracked_stride
                values = ",".join(_f(v) for v in pr.tracked_fitness[r])
                fh.write(f"{pr.period},{step},{values}\n")


def write_calibration_json(path, result: RunResult) -> None:
    payload = {
        "horizon_samples": result.config.horizon,
        "resolution_hours": result.config["profile_resolution_hours"],
        "strata": {
            str(s): {
                name: {
                    "matrix": [[float(v) for v in row] for row in res.matrix],
                    "iterations": int(res.iterations),
                    "avg_energy_kwh": float(res.avg_energy_kwh),
                    "goal_energy_kwh": float(
                        result.products.targets[s][name].goal_energy_kwh
                    ),
                    "tol_kwh": float(result.products.targets[s][name].tol_kwh),
                }
                for name, res in per_dev.items()
            }
            for s, per_dev in result.products.calibration.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def emit_outputs(result: RunResult, out_dir, plots: bool = True) -> list:
    """Write the full artifact set; returns the list of paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def record(path):
        written.append(Path(path))
        return Path(path)

    with open(record(out / "scenario.json"), "w", encoding="utf-8") as fh:
        json.dump(result.config.raw, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(record(out / "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(result.summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    export_graph(result.products.graph, record(out / "graph.txt"))
    for topic, fj in result.products.opinions.items():
        write_opinion_csv(record(out / f"opinions_{topic}.csv"), fj.trajectory)
    write_calibration_json(record(out / "calibration.json"), result)
    write_profiles_csv(record(out / "profiles.csv"), result)
    write_allocation_csv(record(out / "allocation.csv"), result)
    for pr in result.periods:
        write_trajectory_csv(record(out / f"trajectory_{pr.period}.csv"), pr)
    write_incentives_csv(record(out / "incentives.csv"), result)
    write_fitness_csv(record(out / "fitness_tracked.csv"), result)

    if plots:
        from . import plots as plotmod

        for path in plotmod.emit_plots(result, out / "plots"):
            record(path)
    return written
