"""Declarative scenario configuration.

A scenario JSON file describes one end-to-end experiment: population and
strata layout, device catalog with reference transition matrices, the
influence-graph and opinion setup for the two topics, price and protocol
parameters, and the incentive block. Missing sections fall back to the
documented defaults (the bundled files override only what each
experiment changes); unknown keys and invalid values fail validation
with the offending field named.
"""
from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import dataclass, field
from importlib import resources

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

#: Default household appliance catalog. Powers and reference matrices are
#: chosen so a stratum-4 household averages about 70 kWh per week at the
#: 1.5 h profile resolution. Refrigeration is must-run (duty floor 0.75)
#: and follows its own flat strata ladder; devices without explicit
#: strata_factors absorb the residual so household totals still follow
#: the configured strata_scale.
DEFAULT_DEVICES = [
    {
        "name": "refrigeration",
        "nominal_power_kw": 0.22,
        "ref_trans": [[0.52, 0.48], [0.12, 0.88]],
        "levels": [0.75, 1.0],
        "weight": 1.0,
        "elasticity": 0.2,
        "strata_factors": [0.95, 0.96, 0.98, 1.0, 1.05, 1.1],
    },
    {
        "name": "climate",
        "nominal_power_kw": 0.2,
        "ref_trans": [[0.74, 0.26], [0.24, 0.76]],
        "levels": None,
        "weight": 1.2,
        "elasticity": 0.2,
        "strata_factors": None,
    },
    {
        "name": "lighting",
        "nominal_power_kw": 0.12,
        "ref_trans": [[0.74, 0.26], [0.24, 0.76]],
        "levels": None,
        "weight": 1.0,
        "elasticity": 0.2,
        "strata_factors": None,
    },
    {
        "name": "entertainment",
        "nominal_power_kw": 0.105,
        "ref_trans": [[0.74, 0.26], [0.24, 0.76]],
        "levels": None,
        "weight": 0.85,
        "elasticity": 0.2,
        "strata_factors": None,
    },
    {
        "name": "laundry",
        "nominal_power_kw": 0.35,
        "ref_trans": [[0.98, 0.02], [0.38, 0.62]],
        "levels": None,
        "weight": 0.95,
        "elasticity": 0.2,
        "strata_factors": None,
    },
]

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "name": "unnamed",
    "description": "",
    "seed": 2024,
    "population": 40,
    "periods": 28,
    "period_hours": 6.0,
    "profile_resolution_hours": 1.5,
    "strata_mix": {"1": 4, "2": 6, "3": 8, "4": 10, "5": 7, "6": 5},
    "strata_scale": [0.55, 0.7, 0.85, 1.0, 1.25, 1.5],
    "devices": DEFAULT_DEVICES,
    "calibration": {
        "num_test": 100,
        "delta": 0.005,
        "max_iter": 500,
        "tol_frac": 0.06,
        "tol_min_kwh": 0.8,
    },
    "graph": {"k": 4, "p_rewire": 0.1},
    "opinions": {
        "valuation": {
            "initial": [0.05, 0.95],
            "susceptibility": [0.3, 0.9],
            "self_confidence": [0.2, 0.6],
            "tol": 1e-8,
            "max_steps": 10_000,
        },
        "dr_willingness": {
            "initial": [0.3, 0.7],
            "susceptibility": [0.3, 0.9],
            "self_confidence": [0.2, 0.6],
            "tol": 1e-8,
            "max_steps": 10_000,
        },
    },
    "valuation_factor": 7.0,
    "price": {"beta0": 1.0, "beta1": 0.0, "q_ref": 1.0},
    "protocol": {
        "kind": "pairwise-logit",
        "eta": 0.14,
        "restrict_prob": 0.9,
        "clock_rate": 1.0,
    },
    "stop": {"window_factor": 50, "max_steps": 200_000},
    "strategy_levels": [0.0, 0.25, 0.5, 0.75, 1.0],
    "incentives": {"mode": "none"},
    "track_household": 0,
    "tracked_stride": 10,
}

INCENTIVE_DEFAULTS = {
    "none": {},
    "financial": {"gamma_scale": 2.0, "qualifying": {"quantile": 0.0}},
    "social": {
        "eps_flex": 0.3,
        "direction": -1,  # scalar applied on qualifying periods, or a per-period list
        "qualifying": {"quantile": 0.6},
        "engagement_seed": None,  # defaults to the master seed tree
    },
}


class ScenarioError(ValueError):
    """Scenario validation failure; message names the offending field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully resolved, validated scenario."""

    raw: dict

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def name(self) -> str:
        return self.raw["name"]

    @property
    def seed(self) -> int:
        return self.raw["seed"]

    @property
    def population(self) -> int:
        return self.raw["population"]

    @property
    def periods(self) -> int:
        return self.raw["periods"]

    @property
    def period_hours(self) -> float:
        return self.raw["period_hours"]

    @property
    def horizon(self) -> int:
        total_hours = self.raw["periods"] * self.raw["period_hours"]
        return int(round(total_hours / self.raw["profile_resolution_hours"]))

    @property
    def incentive_mode(self) -> str:
        return self.raw["incentives"]["mode"]

    def with_seed(self, seed: int) -> "ScenarioConfig":
        raw = copy.deepcopy(self.raw)
        raw["seed"] = int(seed)
        return ScenarioConfig(raw=raw)

    def natural_twin(self) -> "ScenarioConfig":
        """Same scenario with the incentive block removed (baseline)."""
        raw = copy.deepcopy(self.raw)
        raw["incentives"] = {"mode": "none"}
        raw["name"] = self.raw["name"] + "-baseline"
        return ScenarioConfig(raw=raw)

    def canonical_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _merge_defaults(payload: dict, defaults: dict, path: str) -> dict:
    merged = copy.deepcopy(defaults)
    for key, value in payload.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ScenarioError(where, "unknown field")
        if isinstance(defaults[key], dict) and key not in (
            "strata_mix",
            "incentives",
            "qualifying",
        ):
            if not isinstance(value, dict):
                raise ScenarioError(where, f"expected an object, got {type(value).__name__}")
            merged[key] = _merge_defaults(value, defaults[key], where)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def resolve(payload: dict) -> ScenarioConfig:
    """Fill defaults, then validate; raises ScenarioError on bad input."""
    if not isinstance(payload, dict):
        raise ScenarioError("scenario", "top level must be a JSON object")
    if "price" not in payload:
        log.warning(
            "scenario %s: no price block, defaulting to constant beta0=%s",
            payload.get("name", "unnamed"),
            DEFAULTS["price"]["beta0"],
        )
    if "devices" in payload:
        # full replacement; each entry still gets per-device defaults
        devices = payload["devices"]
        if not isinstance(devices, list) or not devices:
            raise ScenarioError("devices", "must be a non-empty list")
        payload = dict(payload)
        payload["devices"] = [
            _merge_defaults(d, _device_defaults(), f"devices[{i}]")
            for i, d in enumerate(devices)
        ]
    merged = _merge_defaults(payload, DEFAULTS, "")
    merged["incentives"] = _resolve_incentives(payload.get("incentives", {"mode": "none"}))
    _validate(merged)
    return ScenarioConfig(raw=merged)


def _device_defaults() -> dict:
    return {
        "name": "",
        "nominal_power_kw": 0.0,
        "ref_trans": [[0.9, 0.1], [0.1, 0.9]],
        "levels": None,
        "weight": 1.0,
        "elasticity": 0.2,
        "strata_factors": None,
    }


def _resolve_incentives(block: dict) -> dict:
    if not isinstance(block, dict) or "mode" not in block:
        raise ScenarioError("incentives.mode", "missing")
    mode = block["mode"]
    if mode not in INCENTIVE_DEFAULTS:
        raise ScenarioError("incentives.mode", f"unknown mode {mode!r}")
    merged = {"mode": mode, **copy.deepcopy(INCENTIVE_DEFAULTS[mode])}
    for key, value in block.items():
        if key == "mode":
            continue
        if key not in merged:
            raise ScenarioError(f"incentives.{key}", f"unknown field for mode {mode!r}")
        merged[key] = copy.deepcopy(value)
    return merged


def _require(cond: bool, field_name: str, message: str) -> None:
    if not cond:
        raise ScenarioError(field_name, message)


def _validate(raw: dict) -> None:
    _require(raw["schema_version"] == SCHEMA_VERSION, "schema_version",
             f"expected {SCHEMA_VERSION}")
    _require(int(raw["population"]) >= 1, "population", "must be at least 1")
    _require(int(raw["periods"]) >= 1, "periods", "must be at least 1")
    _require(raw["period_hours"] > 0, "period_hours", "must be positive")
    res = raw["profile_resolution_hours"]
    _require(res > 0, "profile_resolution_hours", "must be positive")
    sub = raw["period_hours"] / res
    _require(
        abs(sub - round(sub)) < 1e-9 and round(sub) >= 1,
        "profile_resolution_hours",
        f"period_hours={raw['period_hours']} must be an integer multiple",
    )

    mix = raw["strata_mix"]
    _require(isinstance(mix, dict) and mix, "strata_mix", "must be a non-empty object")
    total = 0
    for key, count in mix.items():
        _require(
            str(key).isdigit() and 1 <= int(key) <= 6,
            f"strata_mix.{key}",
            "stratum keys must be 1..6",
        )
        _require(int(count) >= 0, f"strata_mix.{key}", "counts must be non-negative")
        total += int(count)
    _require(
        total == int(raw["population"]),
        "strata_mix",
        f"counts sum to {total}, expected population {raw['population']}",
    )
    scale = raw["strata_scale"]
    _require(
        isinstance(scale, list) and len(scale) == 6 and all(s > 0 for s in scale),
        "strata_scale",
        "must be six positive factors (strata 1..6)",
    )

    names = set()
    levels_grid = raw["strategy_levels"]
    _require(
        sorted(set(levels_grid)) == list(levels_grid) and 0.0 in levels_grid,
        "strategy_levels",
        "must be sorted, unique and include 0",
    )
    _require(
        all(0.0 <= x <= 1.0 for x in levels_grid),
        "strategy_levels",
        "levels must lie in [0, 1]",
    )
    for i, dev in enumerate(raw["devices"]):
        where = f"devices[{i}]"
        _require(bool(dev["name"]), f"{where}.name", "missing")
        _require(dev["name"] not in names, f"{where}.name", "duplicate device name")
        names.add(dev["name"])
        _require(dev["nominal_power_kw"] > 0, f"{where}.nominal_power_kw",
                 "must be positive")
        t = dev["ref_trans"]
        ok = (
            isinstance(t, list)
            and len(t) == 2
            and all(len(row) == 2 for row in t)
            and all(0 <= v <= 1 for row in t for v in row)
            and abs(sum(t[0]) - 1) < 1e-9
            and abs(sum(t[1]) - 1) < 1e-9
        )
        _require(ok, f"{where}.ref_trans", "must be a 2x2 row-stochastic matrix")
        if dev["levels"] is not None:
            _require(
                all(x in levels_grid for x in dev["levels"]) and dev["levels"],
                f"{where}.levels",
                "must be a non-empty subset of strategy_levels",
            )
        _require(dev["weight"] > 0, f"{where}.weight", "must be positive")
        _require(dev["elasticity"] > 0, f"{where}.elasticity", "must be positive")
        factors = dev["strata_factors"]
        if factors is not None:
            _require(
                isinstance(factors, list)
                and len(factors) == 6
                and all(f > 0 for f in factors),
                f"{where}.strata_factors",
                "must be six positive factors or null",
            )

    cal = raw["calibration"]
    _require(cal["num_test"] >= 1, "calibration.num_test", "must be at least 1")
    _require(0 < cal["delta"] < 0.5, "calibration.delta", "must lie in (0, 0.5)")
    _require(cal["max_iter"] >= 1, "calibration.max_iter", "must be at least 1")
    _require(cal["tol_frac"] > 0, "calibration.tol_frac", "must be positive")
    _require(cal["tol_min_kwh"] > 0, "calibration.tol_min_kwh", "must be positive")

    g = raw["graph"]
    _require(g["k"] % 2 == 0 and 2 <= g["k"] < raw["population"], "graph.k",
             "must be even and below the population size")
    _require(0 <= g["p_rewire"] <= 1, "graph.p_rewire", "must lie in [0, 1]")

    for topic, topic_cfg in raw["opinions"].items():
        for rng_field in ("initial", "susceptibility", "self_confidence"):
            pair = topic_cfg[rng_field]
            ok = (
                isinstance(pair, list)
                and len(pair) == 2
                and 0 <= pair[0] <= pair[1] <= 1
            )
            _require(ok, f"opinions.{topic}.{rng_field}",
                     "must be [low, high] within [0, 1]")
        _require(topic_cfg["tol"] > 0, f"opinions.{topic}.tol", "must be positive")

    _require(raw["valuation_factor"] > 1, "valuation_factor", "must exceed 1")
    price = raw["price"]
    _require(price["beta0"] > 0, "price.beta0", "must be positive")
    _require(price["q_ref"] > 0, "price.q_ref", "must be positive")

    proto = raw["protocol"]
    _require(proto["kind"] in ("pairwise-logit", "pairwise"), "protocol.kind",
             "must be pairwise-logit or pairwise")
    _require(proto["eta"] > 0, "protocol.eta", "must be positive")
    _require(0 <= proto["restrict_prob"] <= 1, "protocol.restrict_prob",
             "must lie in [0, 1]")
    _require(proto["clock_rate"] > 0, "protocol.clock_rate", "must be positive")

    stop = raw["stop"]
    _require(stop["window_factor"] >= 1, "stop.window_factor", "must be at least 1")
    _require(stop["max_steps"] >= 1, "stop.max_steps", "must be at least 1")

    inc = raw["incentives"]
    if inc["mode"] == "financial":
        _require(inc["gamma_scale"] >= 0, "incentives.gamma_scale",
                 "must be non-negative")
        _validate_qualifying(inc["qualifying"], raw["periods"])
    elif inc["mode"] == "social":
        _require(0 <= inc["eps_flex"] <= 1, "incentives.eps_flex",
                 "must lie in [0, 1]")
        direction = inc["direction"]
        if isinstance(direction, list):
            _require(
                len(direction) == raw["periods"]
                and all(d in (-1, 0, 1) for d in direction),
                "incentives.direction",
                "per-period vector must have one entry in {-1, 0, +1} per period",
            )
        else:
            _require(direction in (-1, 1), "incentives.direction",
                     "must be -1 or +1 (or a per-period vector)")
        _validate_qualifying(inc["qualifying"], raw["periods"])
        if inc["engagement_seed"] is not None:
            _require(
                isinstance(inc["engagement_seed"], int),
                "incentives.engagement_seed",
                "must be an integer or null",
            )

    track = raw["track_household"]
    _require(
        track is None or 0 <= int(track) < raw["population"],
        "track_household",
        "must be a household index or null",
    )
    _require(int(raw["tracked_stride"]) >= 1, "tracked_stride", "must be at least 1")


def _validate_qualifying(rule: dict, periods: int) -> None:
    if "periods" in rule:
        for p in rule["periods"]:
            _require(0 <= int(p) < periods, "incentives.qualifying.periods",
                     f"period {p} outside 0..{periods - 1}")
    elif "quantile" in rule:
        _require(0 <= rule["quantile"] <= 1, "incentives.qualifying.quantile",
                 "must lie in [0, 1]")
    else:
        raise ScenarioError("incentives.qualifying",
                            "needs either 'periods' or 'quantile'")


def load_scenario(path) -> ScenarioConfig:
    """Load, default-fill and validate a scenario file."""
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError("scenario", f"{path}: parse error: {exc}") from exc
    return resolve(payload)


def bundled_scenario_names() -> list:
    base = resources.files("loadshift").joinpath("data/scenarios")
    return sorted(p.name[:-5] for p in base.iterdir() if p.name.endswith(".json"))


def load_bundled(name: str) -> ScenarioConfig:
    base = resources.files("loadshift").joinpath("data/scenarios")
    target = base.joinpath(f"{name}.json")
    if not target.is_file():
        raise ScenarioError(
            "scenario", f"no bundled scenario {name!r}; have {bundled_scenario_names()}"
        )
    return resolve(json.loads(target.read_text(encoding="utf-8")))
