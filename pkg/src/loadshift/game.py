"""Finite-population evolutionary game over household duty-cycle strategies.

Every (household, device) pair is an agent whose strategy is a discrete
duty fraction for the current consumption period. Fitness is the
preference-matching benefit minus the energy cost at the population
price, plus any financial bonus active in the period:

    fitness(x) = alpha * exp(-|x - theta| / elasticity) - price(Q') * q(x) + bonus(x)

where Q' is the population aggregate recomputed as if the agent already
played x (the candidate's own contribution is never ignored, which
matters in small populations). Revision opportunities arrive one agent
at a time; candidates are accepted with the pairwise-logit probability.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .loadprofiles import DeviceModel

PROTOCOL_KINDS = {
    "pairwise-logit": kernels.PAIRWISE_LOGIT,
    "pairwise": kernels.PAIRWISE,
}


class ProtocolError(ValueError):
    """Invalid revision-protocol parameters."""


@dataclass(frozen=True)
class PriceModel:
    """Affine population price: rate(Q) = beta0 + beta1 * Q / q_ref."""

    beta0: float
    beta1: float = 0.0
    q_ref: float = 1.0

    def rate(self, aggregate_kwh: float) -> float:
        return self.beta0 + self.beta1 * aggregate_kwh / self.q_ref

    def validate(self) -> None:
        if self.beta0 <= 0:
            raise ValueError(f"beta0={self.beta0} must be positive")
        if self.q_ref <= 0:
            raise ValueError(f"q_ref={self.q_ref} must be positive")


@dataclass(frozen=True)
class ProtocolParams:
    """Revision protocol configuration.

    restrict_prob is the probability that a revision draw is limited to
    candidates whose clever payoff strictly beats the current one (the
    complement keeps the uniform draw, preserving irreducibility).
    """

    kind: str = "pairwise-logit"
    eta: float = 0.14
    restrict_prob: float = 0.9
    clock_rate: float = 1.0

    def validate(self) -> None:
        if self.kind not in PROTOCOL_KINDS:
            raise ProtocolError(f"unknown protocol kind {self.kind!r}")
        if self.kind == "pairwise-logit" and self.eta <= 0:
            raise ProtocolError(f"eta={self.eta} must be positive")
        if not 0.0 <= self.restrict_prob <= 1.0:
            raise ProtocolError(f"restrict_prob={self.restrict_prob} outside [0, 1]")
        if self.clock_rate <= 0:
            raise ProtocolError(f"clock_rate={self.clock_rate} must be positive")


@dataclass(frozen=True)
class StopRule:
    """Stop after `window_factor * n_agents` opportunities without an
    accepted switch, or after max_steps opportunities."""

    window_factor: int = 50
    max_steps: int = 200_000

    def window(self, n_agents: int) -> int:
        return self.window_factor * n_agents


@dataclass(frozen=True)
class StrategySet:
    """Master duty grid plus optional per-device allowed subsets."""

    levels: tuple[float, ...] = (0.0, 0.25, 0.5, 0.75, 1.0)
    allowed: dict = field(default_factory=dict)

    def validate(self) -> None:
        lv = self.levels
        if list(lv) != sorted(set(lv)):
            raise ValueError(f"levels {lv} must be sorted and unique")
        if any(x < 0 or x > 1 for x in lv):
            raise ValueError(f"levels {lv} must lie in [0, 1]")
        if 0.0 not in lv:
            raise ValueError("master grid must include duty 0")
        for name, sub in self.allowed.items():
            if list(sub) != sorted(set(sub)):
                raise ValueError(f"allowed levels for {name} must be sorted and unique")
            if any(x not in lv for x in sub):
                raise ValueError(f"allowed levels for {name} must be grid members")
            if len(sub) < 1:
                raise ValueError(f"allowed levels for {name} must be non-empty")

    def device_levels(self, device_name: str) -> tuple[float, ...]:
        return tuple(self.allowed.get(device_name, self.levels))


@dataclass
class Household:
    """One household: devices, per-device preferences and valuations."""

    id: int
    stratum: int
    devices: tuple[DeviceModel, ...]
    theta: np.ndarray  # (n_devices, n_periods) preferred duty fractions
    elasticity: np.ndarray  # (n_devices,), decay scale of the match signal
    valuation: np.ndarray  # (n_devices,), currency per unit of matched preference
    flexibility: float = 0.0  # max preference shift when enrolled
    enrolled: int = 0


def theta_signal(x: float, theta: float, eps: float):
    """Preference-match signal exp(-|x - theta| / eps); 1 iff x == theta."""
    if np.any(np.asarray(eps) <= 0):
        raise ValueError(f"elasticity {eps} must be positive")
    return np.exp(-np.abs(np.asarray(x) - theta) / eps)


def switch_rate_pairwise(pi_i: float, pi_j: float) -> float:
    """Positive part of the payoff difference."""
    return max(pi_j - pi_i, 0.0)


def switch_rate_pairwise_logit(pi_i: float, pi_j: float, eta: float) -> float:
    """Logistic switch probability in (pi_j - pi_i) / eta, overflow-safe."""
    if eta <= 0:
        raise ProtocolError(f"eta={eta} must be positive")
    d = (pi_j - pi_i) / eta
    if d >= 0.0:
        return 1.0 / (1.0 + np.exp(-d))
    e = np.exp(d)
    return float(e / (1.0 + e))


def nearest_level_index(levels: Sequence[float], duty: float) -> int:
    """Index of the level closest to duty (ties resolve to the lower level)."""
    arr = np.asarray(levels, dtype=float)
    return int(np.argmin(np.abs(arr - duty)))


@dataclass
class PeriodGame:
    """Packed per-period arrays consumed by the revision kernel."""

    period: int
    period_hours: float
    price: PriceModel
    agent_pairs: np.ndarray  # (A, 2) household idx, device idx
    level_values: np.ndarray  # (A, K) padded duty values
    n_levels: np.ndarray  # (A,) int32
    gain: np.ndarray  # (A, K) valuation * match signal at theta_eff
    qval: np.ndarray  # (A, K) kWh per level
    bonus: np.ndarray  # (A, K) financial bonus per level
    init_level_idx: np.ndarray  # (A,) int32 nearest allowed to natural theta

    @property
    def n_agents(self) -> int:
        return self.agent_pairs.shape[0]


@dataclass
class GameState:
    """Mutable assignment over a period game."""

    game: PeriodGame
    level_idx: np.ndarray  # (A,) int32
    aggregate_kwh: float
    revisions: int = 0

    @property
    def period(self) -> int:
        return self.game.period

    def duties(self) -> np.ndarray:
        a = np.arange(self.game.n_agents)
        return self.game.level_values[a, self.level_idx]

    def agent_kwh(self) -> np.ndarray:
        a = np.arange(self.game.n_agents)
        return self.game.qval[a, self.level_idx]

    def recompute_aggregate(self) -> float:
        return float(self.agent_kwh().sum())


@dataclass
class PeriodResult:
    period: int
    state: GameState
    steps: int
    accepted: int
    converged: bool
    q_trajectory: np.ndarray
    accept_flags: np.ndarray
    tracked_fitness: np.ndarray | None = None
    tracked_stride: int = 1


def build_period_game(
    households: Sequence[Household],
    period: int,
    period_hours: float,
    price: PriceModel,
    strategy: StrategySet,
    theta_eff: np.ndarray | None = None,
    gamma: float = 0.0,
) -> PeriodGame:
    """Pack one period's game.

    theta_eff overrides the natural preferences (households x devices)
    for fitness evaluation; initial allocation and the financial-bonus
    baseline always use the natural preferences. gamma > 0 activates the
    bonus gamma * max(0, q_pref - q(x)) for every agent.
    """
    price.validate()
    strategy.validate()
    pairs = []
    per_agent_levels = []
    for h_idx, hh in enumerate(households):
        for d_idx, dev in enumerate(hh.devices):
            pairs.append((h_idx, d_idx))
            per_agent_levels.append(strategy.device_levels(dev.name))
    n_agents = len(pairs)
    max_k = max(len(lv) for lv in per_agent_levels)

    agent_pairs = np.asarray(pairs, dtype=np.int32)
    level_values = np.zeros((n_agents, max_k))
    n_levels = np.zeros(n_agents, dtype=np.int32)
    gain = np.zeros((n_agents, max_k))
    qval = np.zeros((n_agents, max_k))
    bonus = np.zeros((n_agents, max_k))
    init_idx = np.zeros(n_agents, dtype=np.int32)

    for a, (h_idx, d_idx) in enumerate(pairs):
        hh = households[h_idx]
        dev = hh.devices[d_idx]
        levels = np.asarray(per_agent_levels[a], dtype=float)
        k = len(levels)
        n_levels[a] = k
        level_values[a, :k] = levels
        level_values[a, k:] = levels[-1]
        theta_nat = float(hh.theta[d_idx, period])
        theta = theta_nat if theta_eff is None else float(theta_eff[h_idx, d_idx])
        eps = float(hh.elasticity[d_idx])
        alpha = float(hh.valuation[d_idx])
        qs = levels * dev.nominal_power_kw * period_hours
        qval[a, :k] = qs
        qval[a, k:] = qs[-1]
        gain[a, :k] = alpha * theta_signal(levels, theta, eps)
        gain[a, k:] = gain[a, k - 1]
        init_idx[a] = nearest_level_index(levels, theta_nat)
        if gamma > 0.0:
            q_pref = qs[nearest_level_index(levels, theta_nat)]
            bonus[a, :k] = gamma * np.maximum(0.0, q_pref - qs)
            bonus[a, k:] = bonus[a, k - 1]

    max_aggregate = float(
        sum(qval[a, : n_levels[a]].max() for a in range(n_agents))
    )
    if price.rate(max_aggregate) <= 0 or price.rate(0.0) <= 0:
        raise ValueError(
            f"price rate is not positive over reachable aggregates "
            f"[0, {max_aggregate:.3f}] kWh"
        )

    return PeriodGame(
        period=period,
        period_hours=period_hours,
        price=price,
        agent_pairs=agent_pairs,
        level_values=level_values,
        n_levels=n_levels,
        gain=gain,
        qval=qval,
        bonus=bonus,
        init_level_idx=init_idx,
    )


def initial_state(game: PeriodGame) -> GameState:
    level_idx = game.init_level_idx.copy()
    a = np.arange(game.n_agents)
    aggregate = float(game.qval[a, level_idx].sum())
    return GameState(game=game, level_idx=level_idx, aggregate_kwh=aggregate)


def agent_fitness(
    household: Household,
    device_index: int,
    x: float,
    state: GameState,
    price: PriceModel,
    household_index: int | None = None,
) -> float:
    """Clever payoff of playing duty x: the aggregate is recomputed as if
    the agent already switched before pricing its own consumption."""
    game = state.game
    if household_index is None:
        household_index = household.id
    mask = (game.agent_pairs[:, 0] == household_index) & (
        game.agent_pairs[:, 1] == device_index
    )
    (a,) = np.nonzero(mask)[0]
    dev = household.devices[device_index]
    q_x = x * dev.nominal_power_kw * game.period_hours
    q_cur = float(game.qval[a, state.level_idx[a]])
    aggregate = state.aggregate_kwh - q_cur + q_x
    theta = float(household.theta[device_index, game.period])
    eps = float(household.elasticity[device_index])
    alpha = float(household.valuation[device_index])
    return float(alpha * theta_signal(x, theta, eps) - price.rate(aggregate) * q_x)


def population_utility(
    state: GameState, households: Sequence[Household], price: PriceModel
) -> float:
    """Total realized utility at the current assignment (natural preferences)."""
    game = state.game
    duties = state.duties()
    rate = price.rate(state.aggregate_kwh)
    total = 0.0
    for a in range(game.n_agents):
        h_idx, d_idx = game.agent_pairs[a]
        hh = households[h_idx]
        theta = float(hh.theta[d_idx, game.period])
        eps = float(hh.elasticity[d_idx])
        alpha = float(hh.valuation[d_idx])
        q_a = float(game.qval[a, state.level_idx[a]])
        total += alpha * float(theta_signal(float(duties[a]), theta, eps)) - rate * q_a
    return total


_EMPTY_TRACK = np.zeros(0, dtype=np.int32)
_EMPTY_TRACK_OUT = np.zeros((1, 0))


def _run_kernel(
    state: GameState,
    protocol: ProtocolParams,
    rng: np.random.Generator,
    max_steps: int,
    stop_window: int,
    tracked_idx: np.ndarray = _EMPTY_TRACK,
    tracked_stride: int = 1,
    backend: str | None = None,
):
    protocol.validate()
    tracked_stride = max(1, int(tracked_stride))
    game = state.game
    q_traj = np.zeros(max_steps)
    accept = np.zeros(max_steps, dtype=np.int8)
    if tracked_idx.size:
        rows = max_steps // tracked_stride + 1
        tracked_out = np.zeros((rows, tracked_idx.size))
    else:
        tracked_out = _EMPTY_TRACK_OUT
    steps, accepted, q_final, tracked_rows = kernels.run_revisions(
        state.level_idx,
        game.n_levels,
        game.gain,
        game.qval,
        game.bonus,
        state.aggregate_kwh,
        game.price.beta0,
        game.price.beta1,
        game.price.q_ref,
        protocol.eta,
        protocol.restrict_prob,
        protocol.clock_rate,
        PROTOCOL_KINDS[protocol.kind],
        max_steps,
        stop_window,
        rng,
        q_traj,
        accept,
        tracked_idx,
        tracked_stride,
        tracked_out,
        backend=backend,
    )
    state.aggregate_kwh = q_final
    state.revisions += steps
    tracked = tracked_out[:tracked_rows].copy() if tracked_idx.size else None
    return steps, accepted, q_traj[:steps].copy(), accept[:steps].copy(), tracked


def revision_step(
    state: GameState, protocol: ProtocolParams, rng: np.random.Generator
) -> GameState:
    """One revision opportunity; returns the (mutated) state."""
    _run_kernel(state, protocol, rng, max_steps=1, stop_window=2)
    return state


def run_period_game(
    households: Sequence[Household],
    period: int,
    period_hours: float,
    price: PriceModel,
    strategy: StrategySet,
    protocol: ProtocolParams,
    stop: StopRule,
    rng: np.random.Generator,
    theta_eff: np.ndarray | None = None,
    gamma: float = 0.0,
    track_household: int | None = None,
    tracked_stride: int = 10,
    backend: str | None = None,
) -> PeriodResult:
    """Run one period's revision process until the stop rule fires."""
    game = build_period_game(
        households, period, period_hours, price, strategy, theta_eff, gamma
    )
    state = initial_state(game)
    if track_household is not None:
        tracked_idx = np.nonzero(game.agent_pairs[:, 0] == track_household)[0].astype(
            np.int32
        )
    else:
        tracked_idx = _EMPTY_TRACK
    window = stop.window(game.n_agents)
    steps, accepted, q_traj, accept_flags, tracked = _run_kernel(
        state,
        protocol,
        rng,
        max_steps=stop.max_steps,
        stop_window=window,
        tracked_idx=tracked_idx,
        tracked_stride=tracked_stride,
        backend=backend,
    )
    return PeriodResult(
        period=period,
        state=state,
        steps=steps,
        accepted=accepted,
        converged=steps < stop.max_steps,
        q_trajectory=q_traj,
        accept_flags=accept_flags,
        tracked_fitness=tracked,
        tracked_stride=tracked_stride,
    )
