"""End-to-end scenario execution.

Pipeline: influence graph -> opinion dynamics (valuation and enrollment
topics) -> per-stratum transition calibration -> household profiles ->
preference extraction -> valuation resolution -> per-period games under
the configured incentives. Every stage draws from its own substream of
the master seed, so the whole run is reproducible and period games can
fan out over threads without changing results.

Incentivized scenarios also run their natural twin (same seed, incentive
block stripped) so summaries can report reductions against the baseline.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rngstreams as streams
from .game import (
    Household,
    PeriodResult,
    PriceModel,
    ProtocolParams,
    StopRule,
    StrategySet,
    build_period_game,
    initial_state,
    run_period_game,
    theta_signal,
)
from .incentives import (
    draw_engagement,
    incentivize_preferences,
    qualify_periods,
    resolve_valuations,
)
from .loadprofiles import (
    DeviceModel,
    PopulationProfiles,
    PreferenceMatrix,
    StratumTarget,
    build_population_profiles,
    calibrate_strata,
    extract_preferences,
)
from .scenario import ScenarioConfig
from .socialgraph import OpinionState, WsParams, fj_run, generate_ws_graph

log = logging.getLogger(__name__)

OPINION_TOPICS = ("valuation", "dr_willingness")


@dataclass
class PipelineProducts:
    """Everything resolved before the games run."""

    graph: object
    opinions: dict  # topic -> FjResult (with trajectory)
    calibration: dict  # stratum -> {device -> AdjustResult}
    targets: dict  # stratum -> {device -> StratumTarget}
    profiles: PopulationProfiles
    preferences: PreferenceMatrix
    households: list
    devices: tuple
    price: PriceModel
    strategy: StrategySet
    protocol: ProtocolParams
    stop: StopRule
    qualifying: tuple
    gamma: float
    engagement: np.ndarray | None
    theta_eff: dict  # period -> (H, D) array, only for shifted periods
    preference_profile: np.ndarray  # (T,) kWh, nearest-allowed allocation
    theta_profile: np.ndarray  # (T,) kWh implied by raw preferences


@dataclass
class RunResult:
    config: ScenarioConfig
    products: PipelineProducts
    periods: list  # PeriodResult per period
    baseline_periods: list | None
    summary: dict = field(default_factory=dict)
    accounting_rows: list = field(default_factory=list)

    def final_energy(self) -> np.ndarray:
        return np.asarray([p.state.aggregate_kwh for p in self.periods])

    def baseline_energy(self) -> np.ndarray | None:
        if self.baseline_periods is None:
            return None
        return np.asarray([p.state.aggregate_kwh for p in self.baseline_periods])


def _build_targets(config: ScenarioConfig) -> dict:
    """Per-stratum, per-device energy goals.

    Household totals follow strata_scale. Devices with explicit
    strata_factors follow their own ladder (e.g. must-run refrigeration
    barely scales); the others share the residual proportionally so the
    household total still lands on the configured scale.
    """
    from .scenario import ScenarioError

    cal = config["calibration"]
    scale = config["strata_scale"]
    total_hours = config.periods * config.period_hours
    devices = config["devices"]

    base = {}
    for dev in devices:
        p = dev["ref_trans"][0][1]
        q = dev["ref_trans"][1][0]
        duty = p / (p + q) if p + q > 0 else 0.0
        base[dev["name"]] = duty * dev["nominal_power_kw"] * total_hours
    household_base = sum(base.values())
    explicit = [d for d in devices if d["strata_factors"] is not None]
    residual_base = household_base - sum(base[d["name"]] for d in explicit)

    targets: dict = {}
    present = [int(s) for s, c in config["strata_mix"].items() if int(c) > 0]
    for stratum in sorted(present):
        household_goal = household_base * scale[stratum - 1]
        explicit_goal = sum(
            base[d["name"]] * d["strata_factors"][stratum - 1] for d in explicit
        )
        if residual_base > 0:
            residual_factor = (household_goal - explicit_goal) / residual_base
            if residual_factor <= 0:
                raise ScenarioError(
                    "strata_scale",
                    f"stratum {stratum}: explicit device ladders already "
                    f"exceed the household goal {household_goal:.1f} kWh",
                )
        else:
            residual_factor = 0.0
        per_dev = {}
        for dev in devices:
            factors = dev["strata_factors"]
            factor = factors[stratum - 1] if factors is not None else residual_factor
            goal = base[dev["name"]] * factor
            ceiling = 0.99 * dev["nominal_power_kw"] * total_hours
            if goal > ceiling:
                raise ScenarioError(
                    f"devices[{dev['name']}]",
                    f"stratum {stratum} goal {goal:.1f} kWh exceeds the "
                    f"always-on ceiling {ceiling:.1f} kWh",
                )
            tol = max(cal["tol_min_kwh"], cal["tol_frac"] * goal)
            per_dev[dev["name"]] = StratumTarget(
                stratum=stratum, goal_energy_kwh=goal, tol_kwh=tol
            )
        targets[stratum] = per_dev
    return targets


def _run_opinions(config: ScenarioConfig, graph) -> dict:
    results = {}
    for t_idx, topic in enumerate(OPINION_TOPICS):
        topic_cfg = config["opinions"][topic]
        rng = streams.substream(config.seed, streams.OPINIONS, t_idx)
        n = config.population
        initial = rng.uniform(*topic_cfg["initial"], size=n)
        susceptibility = rng.uniform(*topic_cfg["susceptibility"], size=n)
        confidence = rng.uniform(*topic_cfg["self_confidence"], size=n)
        topic_graph = type(graph)(
            n=graph.n,
            adjacency=graph.adjacency,
            self_confidence=confidence,
            susceptibility=susceptibility,
        )
        state = OpinionState(initial=initial, current=initial.copy())
        result = fj_run(
            topic_graph,
            state,
            tol=topic_cfg["tol"],
            max_steps=topic_cfg["max_steps"],
            record=True,
        )
        if not result.converged:
            log.warning("opinion topic %s did not converge in %s steps",
                        topic, result.steps)
        results[topic] = result
    return results


def prepare(config: ScenarioConfig) -> PipelineProducts:
    """Run every stage ahead of the period games."""
    seed = config.seed
    devices = tuple(
        DeviceModel(
            name=d["name"],
            nominal_power_kw=d["nominal_power_kw"],
            trans=tuple(tuple(row) for row in d["ref_trans"]),
        )
        for d in config["devices"]
    )
    graph = generate_ws_graph(
        WsParams(
            n=config.population,
            k=config["graph"]["k"],
            p_rewire=config["graph"]["p_rewire"],
            seed=streams.seed_int(seed, streams.GRAPH),
        )
    )
    opinions = _run_opinions(config, graph)

    cal = config["calibration"]
    targets = _build_targets(config)
    calibration = calibrate_strata(
        devices,
        targets,
        horizon=config.horizon,
        rng_for_pair=lambda d, s: streams.substream(seed, streams.CALIBRATION, d, s),
        num_test=cal["num_test"],
        delta=cal["delta"],
        max_iter=cal["max_iter"],
        resolution_hours=config["profile_resolution_hours"],
    )
    matrices = {
        s: {name: res.matrix for name, res in per_dev.items()}
        for s, per_dev in calibration.items()
    }
    profiles = build_population_profiles(
        {int(s): int(c) for s, c in config["strata_mix"].items() if int(c) > 0},
        devices,
        matrices,
        horizon=config.horizon,
        rng_for_pair=lambda d, s: streams.substream(seed, streams.PROFILES, d, s),
        resolution_hours=config["profile_resolution_hours"],
    )
    preferences = extract_preferences(
        profiles,
        config.period_hours,
        elasticity=np.asarray([d["elasticity"] for d in config["devices"]]),
    )

    price = PriceModel(**config["price"])
    sigma_val = opinions["valuation"].state.current
    alphas = resolve_valuations(
        sigma_val,
        config["valuation_factor"],
        price,
        [d["weight"] for d in config["devices"]],
    )

    inc = config["incentives"]
    eps_flex = inc.get("eps_flex", 0.0)
    households = [
        Household(
            id=i,
            stratum=int(profiles.strata[i]),
            devices=devices,
            theta=preferences.theta[i],
            elasticity=preferences.elasticity[i],
            valuation=alphas[i],
            flexibility=eps_flex,
        )
        for i in range(config.population)
    ]

    allowed = {
        d["name"]: tuple(d["levels"])
        for d in config["devices"]
        if d["levels"] is not None
    }
    strategy = StrategySet(levels=tuple(config["strategy_levels"]), allowed=allowed)
    protocol = ProtocolParams(**config["protocol"])
    stop = StopRule(**config["stop"])

    pref_profile = np.zeros(config.periods)
    theta_profile = np.zeros(config.periods)
    powers = profiles.powers_kw
    for p in range(config.periods):
        game = build_period_game(
            households, p, config.period_hours, price, strategy
        )
        pref_profile[p] = initial_state(game).aggregate_kwh
        theta_profile[p] = float(
            (preferences.theta[:, :, p] * powers[None, :]).sum() * config.period_hours
        )

    qualifying: tuple = ()
    gamma = 0.0
    engagement = None
    theta_eff: dict = {}
    if inc["mode"] == "financial":
        qualifying = qualify_periods(pref_profile, inc["qualifying"])
        gamma = inc["gamma_scale"] * price.beta0
    elif inc["mode"] == "social":
        qualifying = qualify_periods(pref_profile, inc["qualifying"])
        engagement_rng = (
            np.random.default_rng(inc["engagement_seed"])
            if inc.get("engagement_seed") is not None
            else streams.substream(seed, streams.ENGAGEMENT)
        )
        engagement = draw_engagement(
            opinions["dr_willingness"].state.current, engagement_rng
        )
        for i, hh in enumerate(households):
            hh.enrolled = int(engagement[i])
        direction = inc["direction"]
        for p in qualifying:
            r_t = direction[p] if isinstance(direction, list) else direction
            if r_t == 0:
                continue
            theta_eff[p] = incentivize_preferences(
                preferences.theta[:, :, p],
                engagement,
                r_t,
                eps_flex,
            )

    return PipelineProducts(
        graph=graph,
        opinions=opinions,
        calibration=calibration,
        targets=targets,
        profiles=profiles,
        preferences=preferences,
        households=households,
        devices=devices,
        price=price,
        strategy=strategy,
        protocol=protocol,
        stop=stop,
        qualifying=qualifying,
        gamma=gamma,
        engagement=engagement,
        theta_eff=theta_eff,
        preference_profile=pref_profile,
        theta_profile=theta_profile,
    )


def _run_games(
    config: ScenarioConfig,
    products: PipelineProducts,
    incentivized: bool,
    threads: int = 1,
    backend: str | None = None,
) -> list:
    track = config["track_household"]
    stride = config["tracked_stride"]

    def one(period: int) -> PeriodResult:
        rng = streams.substream(config.seed, streams.GAME, period)
        theta_eff = products.theta_eff.get(period) if incentivized else None
        gamma = (
            products.gamma
            if incentivized and period in products.qualifying
            else 0.0
        )
        return run_period_game(
            products.households,
            period,
            config.period_hours,
            products.price,
            products.strategy,
            products.protocol,
            products.stop,
            rng,
            theta_eff=theta_eff,
            gamma=gamma,
            track_household=track,
            tracked_stride=stride,
            backend=backend,
        )

    periods = list(range(config.periods))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, periods))
    else:
        results = [one(p) for p in periods]
    return results


def accounting(
    config: ScenarioConfig, products: PipelineProducts, periods: list
) -> list:
    """Per-household, per-period incentive and utility rows."""
    price = products.price
    rows = []
    n_h = config.population
    for p, pr in enumerate(periods):
        game = pr.state.game
        duties = pr.state.duties()
        qvals = pr.state.agent_kwh()
        rate_final = price.rate(pr.state.aggregate_kwh)
        init = initial_state(game)
        rate_pref = price.rate(init.aggregate_kwh)
        init_duties = init.duties()
        init_q = init.agent_kwh()
        qualifying = p in products.qualifying
        bonus = np.zeros(n_h)
        social = np.zeros(n_h)
        u_final = np.zeros(n_h)
        u_pref = np.zeros(n_h)
        theta_eff = products.theta_eff.get(p)
        for a in range(game.n_agents):
            h_idx, d_idx = game.agent_pairs[a]
            hh = products.households[h_idx]
            theta_nat = float(hh.theta[d_idx, p])
            eps = float(hh.elasticity[d_idx])
            alpha = float(hh.valuation[d_idx])
            x = float(duties[a])
            u_final[h_idx] += alpha * float(theta_signal(x, theta_nat, eps))
            u_final[h_idx] -= rate_final * float(qvals[a])
            x0 = float(init_duties[a])
            u_pref[h_idx] += alpha * float(theta_signal(x0, theta_nat, eps))
            u_pref[h_idx] -= rate_pref * float(init_q[a])
            if qualifying and products.gamma > 0:
                bonus[h_idx] += products.gamma * max(
                    0.0, float(init_q[a]) - float(qvals[a])
                )
            if theta_eff is not None:
                t_inc = float(theta_eff[h_idx, d_idx])
                if t_inc != theta_nat:
                    social[h_idx] += alpha * (
                        float(theta_signal(x, t_inc, eps))
                        - float(theta_signal(x, theta_nat, eps))
                    )
        for h in range(n_h):
            rows.append(
                {
                    "household": h,
                    "period": p,
                    "financial_bonus": float(bonus[h]),
                    "social_value": float(social[h]),
                    "utility_final": float(u_final[h]),
                    "utility_at_pref": float(u_pref[h]),
                }
            )
    return rows


def build_summary(
    config: ScenarioConfig,
    products: PipelineProducts,
    periods: list,
    baseline: list | None,
    accounting_rows: list,
) -> dict:
    final = np.asarray([p.state.aggregate_kwh for p in periods])
    base = (
        np.asarray([p.state.aggregate_kwh for p in baseline])
        if baseline is not None
        else final
    )
    qual = list(products.qualifying)
    if qual:
        qual_final = float(final[qual].sum())
        qual_base = float(base[qual].sum())
        reduction_qualifying = (
            100.0 * (1.0 - qual_final / qual_base) if qual_base > 0 else 0.0
        )
    else:
        reduction_qualifying = 0.0
    total_final = float(final.sum())
    total_base = float(base.sum())
    spend = sum(r["financial_bonus"] for r in accounting_rows)
    social_total = sum(r["social_value"] for r in accounting_rows)
    return {
        "name": config.name,
        "scenario_hash": config.hash(),
        "seed": config.seed,
        "periods": config.periods,
        "period_hours": config.period_hours,
        "incentive_mode": config.incentive_mode,
        "qualifying_periods": qual,
        "preference_energy_kwh": [float(v) for v in products.preference_profile],
        "theta_energy_kwh": [float(v) for v in products.theta_profile],
        "final_energy_kwh": [float(v) for v in final],
        "baseline_final_energy_kwh": [float(v) for v in base],
        "total_final_kwh": total_final,
        "total_baseline_kwh": total_base,
        "mean_household_weekly_kwh": (
            float(products.theta_profile.sum()) / config.population
        ),
        "reduction_qualifying_pct": reduction_qualifying,
        "reduction_total_pct": (
            100.0 * (1.0 - total_final / total_base) if total_base > 0 else 0.0
        ),
        "incentive_spend": float(spend),
        "social_value_total": float(social_total),
        "enrolled_count": (
            int(products.engagement.sum()) if products.engagement is not None else 0
        ),
        "convergence": [
            {
                "period": p.period,
                "steps": int(p.steps),
                "accepted": int(p.accepted),
                "converged": bool(p.converged),
            }
            for p in periods
        ],
    }


def run_scenario(
    config: ScenarioConfig, threads: int = 1, backend: str | None = None
) -> RunResult:
    """Execute the full pipeline; incentivized runs include their baseline twin."""
    products = prepare(config)
    incentivized = config.incentive_mode != "none"
    periods = _run_games(config, products, incentivized, threads, backend)
    baseline = (
        _run_games(config, products, False, threads, backend) if incentivized else None
    )
    rows = accounting(config, products, periods)
    summary = build_summary(config, products, periods, baseline, rows)
    return RunResult(
        config=config,
        products=products,
        periods=periods,
        baseline_periods=baseline,
        summary=summary,
        accounting_rows=rows,
    )
