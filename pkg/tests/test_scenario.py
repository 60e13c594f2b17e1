import csv
import hashlib
import json
import logging

import numpy as np
import pytest

from loadshift.cli import main as cli_main
from loadshift.outputs import emit_outputs
from loadshift.runner import run_scenario
from loadshift.scenario import (
    DEFAULTS,
    ScenarioError,
    load_bundled,
    load_scenario,
    bundled_scenario_names,
    resolve,
)
from tests.conftest import small_scenario_payload


class TestLoadScenario:
    def test_bundled_natural_matches_reference_settings(self):
        config = load_bundled("natural-40")
        assert config.population == 40
        assert config.periods == 28
        assert config["period_hours"] == 6.0
        assert config["valuation_factor"] == 7.0
        assert config.incentive_mode == "none"

    def test_all_bundled_scenarios_resolve(self):
        names = bundled_scenario_names()
        assert len(names) == 6
        for name in names:
            config = load_bundled(name)
            assert config.population == 40

    def test_missing_price_block_defaults_with_warning(self, caplog):
        with caplog.at_level(logging.WARNING, logger="loadshift.scenario"):
            config = resolve(small_scenario_payload())
        assert config["price"]["beta0"] == DEFAULTS["price"]["beta0"]
        assert any("price" in rec.message for rec in caplog.records)

    def test_zero_population_rejected(self):
        with pytest.raises(ScenarioError) as err:
            resolve(small_scenario_payload(population=0, strata_mix={}))
        assert "population" in str(err.value) or "strata_mix" in str(err.value)

    def test_unknown_field_is_named(self):
        with pytest.raises(ScenarioError) as err:
            resolve(small_scenario_payload(bogus_field=1))
        assert "bogus_field" in str(err.value)

    def test_mix_must_cover_population(self):
        with pytest.raises(ScenarioError) as err:
            resolve(small_scenario_payload(strata_mix={"4": 3}))
        assert "strata_mix" in str(err.value)

    def test_bad_incentive_mode_rejected(self):
        with pytest.raises(ScenarioError) as err:
            resolve(small_scenario_payload(incentives={"mode": "bribery"}))
        assert "incentives.mode" in str(err.value)

    def test_qualifying_requires_rule(self):
        with pytest.raises(ScenarioError):
            resolve(
                small_scenario_payload(
                    incentives={"mode": "financial", "qualifying": {}}
                )
            )

    def test_parse_error_reported(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ScenarioError):
            load_scenario(path)

    def test_natural_twin_strips_incentives(self, small_social_config):
        twin = small_social_config.natural_twin()
        assert twin.incentive_mode == "none"
        assert twin.seed == small_social_config.seed

    def test_direction_vector_and_engagement_seed(self):
        payload = small_scenario_payload(
            opinions={"dr_willingness": {"initial": [0.9, 1.0]}},
            incentives={
                "mode": "social",
                "eps_flex": 0.3,
                "direction": [0, -1, 0, -1, 0, 0, 1, 0],
                "qualifying": {"periods": [1, 3, 6]},
                "engagement_seed": 123,
            },
        )
        result = run_scenario(resolve(payload))
        # period 6 asks for an increase: shifted preferences sit above the
        # natural ones; period 1 asks for a decrease
        up = result.products.theta_eff[6]
        down = result.products.theta_eff[1]
        theta6 = result.products.preferences.theta[:, :, 6]
        theta1 = result.products.preferences.theta[:, :, 1]
        assert np.all(up >= theta6)
        assert np.all(down <= theta1)
        # identical engagement seed reproduces the same enrollment
        again = run_scenario(resolve(payload))
        assert np.array_equal(
            again.products.engagement, result.products.engagement
        )

    def test_direction_vector_length_validated(self):
        with pytest.raises(ScenarioError) as err:
            resolve(
                small_scenario_payload(
                    incentives={
                        "mode": "social",
                        "direction": [-1, 0],
                        "qualifying": {"periods": [1]},
                    }
                )
            )
        assert "incentives.direction" in str(err.value)


class TestBundledPopulation:
    def test_mean_weekly_household_energy_near_seventy_kwh(self):
        # Profile side of the bundled 40-household scenario: the strata
        # ladder and catalog were dimensioned for ~70 kWh per week.
        from loadshift.runner import prepare

        products = prepare(load_bundled("natural-40"))
        energies = products.profiles.energy_kwh()
        assert energies.shape == (40,)
        assert 63.0 <= float(energies.mean()) <= 77.0
        # higher strata consume more on average
        by_stratum = {
            s: float(energies[products.profiles.strata == s].mean())
            for s in (1, 4, 6)
        }
        assert by_stratum[1] < by_stratum[4] < by_stratum[6]

    def test_single_stratum_population_hits_its_target(self):
        # Calibration round trip at population level: a pure stratum-4 mix
        # lands within the summed per-device tolerances of the household
        # target.
        from loadshift.runner import _build_targets, prepare
        from loadshift.scenario import resolve

        config = resolve(
            small_scenario_payload(
                name="single-stratum",
                population=12,
                strata_mix={"4": 12},
            )
        )
        products = prepare(config)
        targets = _build_targets(config)[4]
        household_goal = sum(t.goal_energy_kwh for t in targets.values())
        tol = sum(t.tol_kwh for t in targets.values())
        mean_energy = float(products.profiles.energy_kwh().mean())
        assert abs(mean_energy - household_goal) <= tol


class TestRunScenario:
    def test_natural_reduction_is_zero_against_itself(self, small_run):
        assert small_run.summary["reduction_qualifying_pct"] == 0.0
        assert small_run.summary["reduction_total_pct"] == 0.0

    def test_deterministic_rerun_same_summary(self, small_config, small_run):
        again = run_scenario(small_config)
        assert again.summary == small_run.summary

    def test_threads_do_not_change_results(self, small_config, small_run):
        threaded = run_scenario(small_config, threads=4)
        assert threaded.summary == small_run.summary

    def test_social_run_spends_no_money(self, small_social_run):
        assert small_social_run.summary["incentive_spend"] == 0.0
        assert all(
            row["financial_bonus"] == 0.0
            for row in small_social_run.accounting_rows
        )

    def test_social_value_positive_only_for_enrolled(self, small_social_run):
        engagement = small_social_run.products.engagement
        by_household = {}
        for row in small_social_run.accounting_rows:
            by_household.setdefault(row["household"], 0.0)
            by_household[row["household"]] += abs(row["social_value"])
        for h, total in by_household.items():
            if not engagement[h]:
                assert total == 0.0

    def test_financial_run_reports_spend_and_reduction(self, small_financial_run):
        summary = small_financial_run.summary
        assert summary["incentive_spend"] >= 0.0
        assert summary["reduction_qualifying_pct"] >= -5.0
        assert all(
            row["social_value"] == 0.0
            for row in small_financial_run.accounting_rows
        )

    def test_aggregate_matches_recomputation_everywhere(self, small_run):
        for pr in small_run.periods:
            assert abs(pr.state.aggregate_kwh - pr.state.recompute_aggregate()) < 1e-9

    def test_trajectory_end_matches_final_aggregate(self, small_run):
        for pr in small_run.periods:
            assert pr.q_trajectory[-1] == pytest.approx(pr.state.aggregate_kwh)


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def emitted(small_social_run, tmp_path_factory):
    out = tmp_path_factory.mktemp("artifacts")
    emit_outputs(small_social_run, out, plots=True)
    return out, small_social_run


class TestEmittedArtifacts:
    def test_expected_files_exist(self, emitted):
        out, run = emitted
        expected = [
            "scenario.json",
            "summary.json",
            "graph.txt",
            "opinions_valuation.csv",
            "opinions_dr_willingness.csv",
            "calibration.json",
            "profiles.csv",
            "allocation.csv",
            "incentives.csv",
            "fitness_tracked.csv",
        ]
        for name in expected:
            assert (out / name).exists(), name
        for p in range(run.config.periods):
            assert (out / f"trajectory_{p}.csv").exists()
        assert (out / "plots" / "allocation_power.svg").exists()

    def test_allocation_energy_matches_summary(self, emitted):
        out, run = emitted
        rows = _read_csv(out / "allocation.csv")
        per_period = {}
        for row in rows:
            per_period.setdefault(int(row["period"]), 0.0)
            per_period[int(row["period"])] += float(row["kwh"])
        summary = json.loads((out / "summary.json").read_text())
        for p, total in per_period.items():
            assert abs(total - summary["final_energy_kwh"][p]) < 1e-6

    def test_profile_energy_matches_theta_identity(self, emitted):
        out, run = emitted
        rows = _read_csv(out / "profiles.csv")
        resolution = run.config["profile_resolution_hours"]
        total = sum(float(r["kw"]) for r in rows) * resolution
        summary = json.loads((out / "summary.json").read_text())
        assert abs(total - sum(summary["theta_energy_kwh"])) < 1e-6

    def test_rerun_is_byte_identical(self, emitted, tmp_path):
        out, run = emitted
        again = run_scenario(run.config)
        out2 = tmp_path / "again"
        emit_outputs(again, out2, plots=False)
        for path in sorted(out2.rglob("*")):
            if not path.is_file():
                continue
            rel = path.relative_to(out2)
            a = hashlib.sha256(path.read_bytes()).hexdigest()
            b = hashlib.sha256((out / rel).read_bytes()).hexdigest()
            assert a == b, f"{rel} differs between reruns"


class TestPlots:
    def test_empty_opinion_trajectory_skipped(self, tmp_path):
        from loadshift.plots import plot_opinions

        assert plot_opinions(np.zeros((0, 0)), "x", tmp_path / "x.svg") is None

    def test_compare_requires_valid_dirs(self, tmp_path):
        from loadshift.plots import compare_power_evolution

        # nothing drawable -> no file
        (tmp_path / "r").mkdir()
        (tmp_path / "r" / "summary.json").write_text(
            json.dumps({"periods": 0, "name": "x"})
        )
        assert compare_power_evolution([tmp_path / "r"], tmp_path / "c.svg") is None

    def test_compare_overlays_multiple_runs(
        self, small_run, small_social_run, tmp_path
    ):
        from loadshift.plots import compare_power_evolution

        emit_outputs(small_run, tmp_path / "a", plots=False)
        emit_outputs(small_social_run, tmp_path / "b", plots=False)
        out = compare_power_evolution(
            [tmp_path / "a", tmp_path / "b"], tmp_path / "compare.svg"
        )
        assert out is not None
        body = out.read_text()
        assert "small-test" in body and "small-social" in body


class TestCli:
    def test_run_and_plot_round_trip(self, tmp_path):
        scenario = tmp_path / "s.json"
        scenario.write_text(json.dumps(small_scenario_payload(seed=3)))
        out = tmp_path / "out"
        code = cli_main(
            ["run", str(scenario), "--out", str(out), "--no-plots", "--threads", "2"]
        )
        assert code == 0
        assert (out / "summary.json").exists()
        plot_out = tmp_path / "plots"
        code = cli_main(["plot", str(out), "--out", str(plot_out)])
        assert code == 0
        assert list(plot_out.glob("*.svg"))

    def test_validation_failure_exits_2(self, tmp_path):
        scenario = tmp_path / "bad.json"
        scenario.write_text(
            json.dumps(small_scenario_payload(population=0, strata_mix={}))
        )
        assert cli_main(["run", str(scenario)]) == 2

    def test_missing_file_exits_2(self, tmp_path):
        assert cli_main(["run", str(tmp_path / "nope.json")]) == 2

    def test_seed_override_changes_hash(self, tmp_path):
        scenario = tmp_path / "s.json"
        scenario.write_text(json.dumps(small_scenario_payload()))
        out1 = tmp_path / "a"
        out2 = tmp_path / "b"
        assert cli_main(["run", str(scenario), "--out", str(out1), "--no-plots"]) == 0
        assert (
            cli_main(
                ["run", str(scenario), "--seed", "99", "--out", str(out2), "--no-plots"]
            )
            == 0
        )
        s1 = json.loads((out1 / "summary.json").read_text())
        s2 = json.loads((out2 / "summary.json").read_text())
        assert s1["scenario_hash"] != s2["scenario_hash"]

    def test_calibrate_writes_matrices(self, tmp_path):
        scenario = tmp_path / "s.json"
        scenario.write_text(json.dumps(small_scenario_payload()))
        out = tmp_path / "cal"
        assert cli_main(["calibrate", str(scenario), "--out", str(out)]) == 0
        payload = json.loads((out / "calibration.json").read_text())
        assert set(payload) == {"2", "4", "6"}

    def test_analyze_equilibrium_report(self, tmp_path):
        instance = tmp_path / "inst.json"
        instance.write_text(
            json.dumps(
                {
                    "n_agents": 3,
                    "levels": [0.0, 1.0],
                    "q_levels": [0.0, 1.0],
                    "eta": 0.4,
                    "steps": 20000,
                    "burn_in": 1000,
                }
            )
        )
        out = tmp_path / "eq"
        assert cli_main(["analyze-equilibrium", str(instance), "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["potential_max_violation"] < 1e-9
