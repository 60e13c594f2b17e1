"""Household load-profile synthesis and preference extraction.

Each appliance runs as a two-state (OFF/ON) Markov chain at the profile
resolution. Transition matrices are calibrated per socioeconomic stratum
by nudging the ON-related probabilities until the simulated mean energy
over the calibration horizon hits the stratum target, then per-household
profiles are generated and aggregated into per-period preferred duty
fractions for the game layer.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OFF, ON = 0, 1
ROW_TOL = 1e-12


class CalibrationError(RuntimeError):
    """Transition-matrix calibration failed to converge; carries the
    closest matrix found."""

    def __init__(self, message, best_matrix=None, best_energy=None):
        super().__init__(message)
        self.best_matrix = best_matrix
        self.best_energy = best_energy


@dataclass(frozen=True)
class DeviceModel:
    """One appliance: nominal power plus its OFF/ON transition matrix.

    trans[s, s'] is the probability of moving from state s to s'.
    Emission is 0 kW in OFF and nominal_power_kw in ON.
    """

    name: str
    nominal_power_kw: float
    trans: tuple = ((0.9, 0.1), (0.1, 0.9))

    def validate(self) -> None:
        if self.nominal_power_kw <= 0:
            raise ValueError(f"{self.name}: nominal power must be positive")
        t = np.asarray(self.trans, dtype=float)
        if t.shape != (2, 2):
            raise ValueError(f"{self.name}: transition matrix must be 2x2")
        if np.any(t < 0) or np.any(t > 1):
            raise ValueError(f"{self.name}: transition entries must lie in [0, 1]")
        if np.any(np.abs(t.sum(axis=1) - 1.0) > ROW_TOL):
            raise ValueError(f"{self.name}: transition rows must sum to 1")

    def matrix(self) -> np.ndarray:
        return np.asarray(self.trans, dtype=float)

    def stationary_on_fraction(self) -> float:
        p = self.trans[0][1]
        q = self.trans[1][0]
        if p + q == 0:
            return 0.0
        return p / (p + q)


@dataclass(frozen=True)
class StratumTarget:
    """Energy goal for one stratum over the calibration horizon."""

    stratum: int
    goal_energy_kwh: float
    tol_kwh: float

    def validate(self) -> None:
        if not 1 <= self.stratum <= 6:
            raise ValueError(f"stratum {self.stratum} outside 1..6")
        if self.goal_energy_kwh <= 0:
            raise ValueError("goal energy must be positive")
        if self.tol_kwh <= 0:
            raise ValueError("tolerance must be positive")


@dataclass
class LoadProfile:
    """Per-device ON/OFF sample paths for one household."""

    resolution_hours: float
    states: np.ndarray  # (n_devices, horizon) int8
    powers_kw: np.ndarray  # (n_devices,)

    @property
    def horizon(self) -> int:
        return self.states.shape[1]

    def device_kw(self) -> np.ndarray:
        return self.states * self.powers_kw[:, None]

    def energy_kwh(self) -> float:
        return float(self.device_kw().sum() * self.resolution_hours)


@dataclass
class PopulationProfiles:
    resolution_hours: float
    device_names: tuple
    powers_kw: np.ndarray  # (n_devices,)
    states: np.ndarray  # (n_households, n_devices, horizon) int8
    strata: np.ndarray  # (n_households,)

    def household(self, idx: int) -> LoadProfile:
        return LoadProfile(
            resolution_hours=self.resolution_hours,
            states=self.states[idx],
            powers_kw=self.powers_kw,
        )

    def energy_kwh(self) -> np.ndarray:
        """Total energy per household over the horizon."""
        return (
            self.states * self.powers_kw[None, :, None]
        ).sum(axis=(1, 2)) * self.resolution_hours


@dataclass
class PreferenceMatrix:
    """Preferred duty fraction per household, device and game period."""

    theta: np.ndarray  # (households, devices, periods) in [0, 1]
    elasticity: np.ndarray  # (households, devices), positive

    def validate(self) -> None:
        if np.any(self.theta < 0) or np.any(self.theta > 1):
            raise ValueError("theta outside [0, 1]")
        if np.any(self.elasticity <= 0):
            raise ValueError("elasticity must be positive")


@dataclass
class AdjustStep:
    iteration: int
    increase: bool | None
    avg_energy_kwh: float
    matrix: np.ndarray


@dataclass
class AdjustResult:
    matrix: np.ndarray
    iterations: int
    avg_energy_kwh: float
    history: list = field(default_factory=list)


def mle_estimate_transitions(sequence) -> np.ndarray:
    """Transition matrix by maximum likelihood from an ON/OFF sequence.

    Rows with no observed departures default to staying in-state.
    """
    seq = np.asarray(sequence, dtype=np.int64)
    if seq.ndim != 1 or seq.size < 2:
        raise ValueError("sequence must be one-dimensional with length >= 2")
    if np.any((seq != OFF) & (seq != ON)):
        raise ValueError("sequence entries must be 0 (OFF) or 1 (ON)")
    counts = np.zeros((2, 2))
    np.add.at(counts, (seq[:-1], seq[1:]), 1.0)
    trans = np.empty((2, 2))
    for s in (OFF, ON):
        total = counts[s].sum()
        if total == 0:
            trans[s] = [1.0, 0.0] if s == OFF else [0.0, 1.0]
        else:
            trans[s] = counts[s] / total
    return trans


def generate_device_chain(
    device: DeviceModel, horizon: int, rng: np.random.Generator
) -> np.ndarray:
    """Simulate the device chain from the OFF state; length-horizon int8 path."""
    device.validate()
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    p_on = (device.trans[0][1], device.trans[1][1])
    states = np.zeros(horizon, dtype=np.int8)
    if horizon == 1:
        return states
    draws = rng.random(horizon - 1)
    state = OFF
    for t in range(1, horizon):
        state = ON if draws[t - 1] < p_on[state] else OFF
        states[t] = state
    return states


def simulate_energy_batch(
    trans: np.ndarray,
    n_chains: int,
    horizon: int,
    power_kw: float,
    resolution_hours: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Energies (kWh) of n_chains independent paths started from OFF."""
    p_on = np.asarray([trans[0][1], trans[1][1]])
    states = np.zeros(n_chains, dtype=np.int8)
    on_counts = np.zeros(n_chains, dtype=np.int64)
    draws = rng.random((horizon - 1, n_chains))
    for t in range(horizon - 1):
        states = (draws[t] < p_on[states]).astype(np.int8)
        on_counts += states
    return on_counts * power_kw * resolution_hours


def _perturb(trans: np.ndarray, increase: bool, delta: float) -> np.ndarray:
    """Shift the ON-related probabilities by delta in the given direction.

    P(OFF->ON) moves by the full step, P(ON->OFF) by half a step the
    opposite way; both stay inside [0.01, 0.99] so neither state becomes
    absorbing.
    """
    p = float(trans[0][1])
    q = float(trans[1][0])
    if increase:
        p = min(p + delta, 0.99)
        q = max(q - delta / 2.0, 0.01)
    else:
        p = max(p - delta, 0.01)
        q = min(q + delta / 2.0, 0.99)
    return np.array([[1.0 - p, p], [q, 1.0 - q]])


def matrix_adjust(
    trans_ref: np.ndarray,
    target: StratumTarget,
    device: DeviceModel,
    horizon: int,
    rng: np.random.Generator,
    num_test: int = 30,
    delta: float = 0.02,
    max_iter: int = 500,
    resolution_hours: float = 1.0,
) -> AdjustResult:
    """Calibrate the transition matrix until simulated mean energy over the
    horizon is within target.tol_kwh of the goal.

    The first round tests the reference matrix unchanged; the stratum
    decides the initial nudge direction (above 4 raises consumption,
    below 4 lowers it), after which the direction follows the sign of
    goal - average.
    """
    target.validate()
    if not 0.0 < delta < 0.5:
        raise ValueError(f"delta={delta} outside (0, 0.5)")
    trans = np.asarray(trans_ref, dtype=float).copy()
    if target.stratum > 4:
        increase: bool | None = True
    elif target.stratum < 4:
        increase = False
    else:
        increase = None  # settled by the first goal/average comparison

    history: list[AdjustStep] = []
    best = (np.inf, trans.copy(), np.nan)
    for it in range(1, max_iter + 1):
        if it > 1:
            trans = _perturb(trans, bool(increase), delta)
        energies = simulate_energy_batch(
            trans, num_test, horizon, device.nominal_power_kw, resolution_hours, rng
        )
        avg = float(energies.mean())
        history.append(
            AdjustStep(iteration=it, increase=increase, avg_energy_kwh=avg, matrix=trans.copy())
        )
        gap = abs(target.goal_energy_kwh - avg)
        if gap < best[0]:
            best = (gap, trans.copy(), avg)
        if gap <= target.tol_kwh:
            return AdjustResult(
                matrix=trans.copy(), iterations=it, avg_energy_kwh=avg, history=history
            )
        increase = target.goal_energy_kwh > avg
    raise CalibrationError(
        f"stratum {target.stratum} / {device.name}: no matrix within "
        f"{target.tol_kwh} kWh of {target.goal_energy_kwh} kWh after {max_iter} "
        f"iterations (best gap {best[0]:.3f} kWh)",
        best_matrix=best[1],
        best_energy=best[2],
    )


def calibrate_strata(
    devices,
    targets: dict,
    horizon: int,
    rng_for_pair,
    num_test: int = 30,
    delta: float = 0.02,
    max_iter: int = 500,
    resolution_hours: float = 1.0,
) -> dict:
    """Calibrate every (stratum, device) pair present in targets.

    targets maps stratum -> {device name -> StratumTarget}; rng_for_pair
    is a callable (device_index, stratum) -> Generator so pairs calibrate
    independently of iteration order. Returns
    {stratum: {device name: AdjustResult}}.
    """
    out: dict = {}
    for stratum in sorted(targets):
        per_dev = {}
        for d_idx, dev in enumerate(devices):
            target = targets[stratum][dev.name]
            per_dev[dev.name] = matrix_adjust(
                dev.matrix(),
                target,
                dev,
                horizon,
                rng_for_pair(d_idx, stratum),
                num_test=num_test,
                delta=delta,
                max_iter=max_iter,
                resolution_hours=resolution_hours,
            )
        out[stratum] = per_dev
    return out


def build_population_profiles(
    strata_mix: dict,
    devices,
    matrices: dict,
    horizon: int,
    rng_for_pair,
    resolution_hours: float = 1.0,
) -> PopulationProfiles:
    """Generate per-household, per-device chains from calibrated matrices.

    strata_mix maps stratum -> household count; matrices maps
    stratum -> {device name -> 2x2 matrix}; rng_for_pair is a callable
    (device_index, stratum) -> Generator. Households are laid out in
    ascending stratum order.
    """
    strata = []
    for s in sorted(strata_mix):
        count = int(strata_mix[s])
        if count < 0:
            raise ValueError(f"stratum {s}: negative household count")
        strata.extend([int(s)] * count)
    n_households = len(strata)
    if n_households == 0:
        raise ValueError("strata mix is empty")
    strata_arr = np.asarray(strata, dtype=np.int64)

    n_devices = len(devices)
    states = np.zeros((n_households, n_devices, horizon), dtype=np.int8)
    for d_idx, dev in enumerate(devices):
        for s in sorted(set(strata)):
            try:
                trans = np.asarray(matrices[s][dev.name], dtype=float)
            except KeyError as exc:
                raise CalibrationError(
                    f"missing calibrated matrix for stratum {s} / {dev.name}"
                ) from exc
            members = np.nonzero(strata_arr == s)[0]
            rng = rng_for_pair(d_idx, s)
            p_on = np.asarray([trans[0][1], trans[1][1]])
            cur = np.zeros(len(members), dtype=np.int8)
            draws = rng.random((horizon - 1, len(members)))
            for t in range(1, horizon):
                cur = (draws[t - 1] < p_on[cur]).astype(np.int8)
                states[members, d_idx, t] = cur
    return PopulationProfiles(
        resolution_hours=resolution_hours,
        device_names=tuple(dev.name for dev in devices),
        powers_kw=np.asarray([dev.nominal_power_kw for dev in devices]),
        states=states,
        strata=strata_arr,
    )


def extract_preferences(
    profiles: PopulationProfiles,
    game_resolution_hours: float,
    elasticity: np.ndarray,
) -> PreferenceMatrix:
    """Aggregate profiles into per-period preferred duty fractions.

    theta is the fraction of each game period the device spent ON; the
    game resolution must be an integer multiple of the profile
    resolution so periods tile the horizon exactly.
    """
    ratio = game_resolution_hours / profiles.resolution_hours
    sub = int(round(ratio))
    if abs(ratio - sub) > 1e-9 or sub < 1:
        raise ValueError(
            f"game resolution {game_resolution_hours} h is not an integer "
            f"multiple of profile resolution {profiles.resolution_hours} h"
        )
    n_h, n_d, horizon = profiles.states.shape
    if horizon % sub:
        raise ValueError(
            f"horizon {horizon} does not tile into periods of {sub} samples"
        )
    periods = horizon // sub
    theta = profiles.states.reshape(n_h, n_d, periods, sub).mean(axis=3)
    elast = np.broadcast_to(np.asarray(elasticity, dtype=float), (n_h, n_d)).copy()
    result = PreferenceMatrix(theta=theta, elasticity=elast)
    result.validate()
    return result
