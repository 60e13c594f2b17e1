"""Figure rendering (SVG).

Per-run figures: per-period allocation bars against the preference
profile, total power evolution across the game, opinion trajectories per
topic, and per-device fitness traces of the tracked household. Multiple
result directories can be overlaid on one power-evolution axis for
scenario comparison.
"""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

log = logging.getLogger(__name__)


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", bbox_inches="tight")
    plt.close(fig)
    return path


def plot_allocation(result, path) -> Path | None:
    summary = result.summary
    final = np.asarray(summary["final_energy_kwh"])
    pref = np.asarray(summary["preference_energy_kwh"])
    if final.size == 0:
        log.warning("allocation plot skipped: no periods")
        return None
    hours = summary["period_hours"]
    periods = np.arange(final.size)
    fig, ax = plt.subplots(figsize=(9, 4))
    ax.bar(periods - 0.2, pref / hours, width=0.4, label="preference-implied")
    ax.bar(periods + 0.2, final / hours, width=0.4, label="final allocation")
    for p in summary["qualifying_periods"]:
        ax.axvspan(p - 0.5, p + 0.5, color="orange", alpha=0.12, lw=0)
    ax.set_xlabel("period")
    ax.set_ylabel("average power [kW]")
    ax.set_title(f"{summary['name']}: power allocation per period")
    ax.legend()
    return _save(fig, path)


def _total_power_trace(result) -> np.ndarray:
    trajectories = [pr.q_trajectory for pr in result.periods]
    if not trajectories or all(len(t) == 0 for t in trajectories):
        return np.zeros(0)
    longest = max(len(t) for t in trajectories)
    total = np.zeros(longest)
    for t in trajectories:
        if len(t) == 0:
            continue
        padded = np.concatenate([t, np.full(longest - len(t), t[-1])])
        total += padded
    return total


def plot_power_evolution(result, path) -> Path | None:
    trace = _total_power_trace(result)
    if trace.size == 0:
        log.warning("power-evolution plot skipped: empty trajectories")
        return None
    fig, ax = plt.subplots(figsize=(9, 4))
    ax.plot(trace, lw=0.9)
    ax.set_xlabel("revision opportunities per period")
    ax.set_ylabel("total energy across periods [kWh]")
    ax.set_title(f"{result.summary['name']}: aggregate evolution")
    return _save(fig, path)


def plot_opinions(trajectory: np.ndarray, topic: str, path) -> Path | None:
    if trajectory is None or trajectory.size == 0:
        log.warning("opinion plot skipped: empty trajectory")
        return None
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(trajectory, lw=0.7, alpha=0.7)
    ax.set_xlabel("step")
    ax.set_ylabel("opinion")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title(f"opinion dynamics: {topic}")
    return _save(fig, path)


def plot_tracked_fitness(result, path) -> Path | None:
    last = None
    for pr in result.periods:
        if pr.tracked_fitness is not None and pr.tracked_fitness.size:
            last = pr
    if last is None:
        log.warning("fitness plot skipped: nothing tracked")
        return None
    names = result.products.profiles.device_names
    steps = np.arange(last.tracked_fitness.shape[0]) * last.tracked_stride
    fig, ax = plt.subplots(figsize=(8, 4))
    for d, name in enumerate(names):
        ax.plot(steps, last.tracked_fitness[:, d], lw=0.9, label=name)
    ax.set_xlabel("revision opportunities")
    ax.set_ylabel("fitness")
    ax.set_title(
        f"{result.summary['name']}: tracked household fitness, period {last.period}"
    )
    ax.legend(fontsize=8)
    return _save(fig, path)


def emit_plots(result, out_dir) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    produced = []
    jobs = [
        plot_allocation(result, out / "allocation_power.svg"),
        plot_power_evolution(result, out / "power_evolution.svg"),
        plot_tracked_fitness(result, out / "fitness_tracked.svg"),
    ]
    for topic, fj in result.products.opinions.items():
        jobs.append(plot_opinions(fj.trajectory, topic, out / f"opinions_{topic}.svg"))
    produced.extend(p for p in jobs if p is not None)
    return produced


def _load_result_dir(result_dir: Path) -> dict:
    summary = json.loads((result_dir / "summary.json").read_text())
    traces = {}
    for p in range(summary["periods"]):
        path = result_dir / f"trajectory_{p}.csv"
        if not path.exists():
            continue
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        traces[p] = np.asarray([float(r["aggregate_kwh"]) for r in rows])
    return {"summary": summary, "traces": traces}


def compare_power_evolution(result_dirs, path) -> Path | None:
    """Overlay the total-power traces of several result directories."""
    fig, ax = plt.subplots(figsize=(9, 4.5))
    drew = False
    for result_dir in result_dirs:
        data = _load_result_dir(Path(result_dir))
        traces = list(data["traces"].values())
        if not traces:
            log.warning("no trajectories under %s", result_dir)
            continue
        longest = max(len(t) for t in traces)
        total = np.zeros(longest)
        for t in traces:
            total += np.concatenate([t, np.full(longest - len(t), t[-1])])
        ax.plot(total, lw=0.9, label=data["summary"]["name"])
        drew = True
    if not drew:
        plt.close(fig)
        return None
    ax.set_xlabel("revision opportunities per period")
    ax.set_ylabel("total energy across periods [kWh]")
    ax.set_title("aggregate evolution")
    ax.legend()
    return _save(fig, path)


def replot_result_dir(result_dir, out_dir) -> list:
    """Rebuild figures from the CSV artifacts of a finished run."""
    result_dir = Path(result_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = _load_result_dir(result_dir)
    summary = data["summary"]
    produced = []

    final = np.asarray(summary["final_energy_kwh"])
    pref = np.asarray(summary["preference_energy_kwh"])
    if final.size:
        hours = summary["period_hours"]
        periods = np.arange(final.size)
        fig, ax = plt.subplots(figsize=(9, 4))
        ax.bar(periods - 0.2, pref / hours, width=0.4, label="preference-implied")
        ax.bar(periods + 0.2, final / hours, width=0.4, label="final allocation")
        ax.set_xlabel("period")
        ax.set_ylabel("average power [kW]")
        ax.set_title(f"{summary['name']}: power allocation per period")
        ax.legend()
        produced.append(_save(fig, out / "allocation_power.svg"))

    comparison = compare_power_evolution([result_dir], out / "power_evolution.svg")
    if comparison is not None:
        produced.append(comparison)
    return produced
