import pytest

from loadshift.scenario import resolve


def small_scenario_payload(**overrides):
    """10-household scenario that runs in well under a second."""
    payload = {
        "name": "small-test",
        "seed": 7,
        "population": 10,
        "periods": 8,
        "period_hours": 6.0,
        "strata_mix": {"2": 3, "4": 4, "6": 3},
        "graph": {"k": 4, "p_rewire": 0.1},
        "stop": {"window_factor": 50, "max_steps": 4000},
    }
    payload.update(overrides)
    return payload


@pytest.fixture(scope="session")
def small_config():
    return resolve(small_scenario_payload())


@pytest.fixture(scope="session")
def small_social_config():
    return resolve(
        small_scenario_payload(
            name="small-social",
            opinions={"dr_willingness": {"initial": [0.55, 0.95]}},
            incentives={
                "mode": "social",
                "eps_flex": 0.3,
                "direction": -1,
                "qualifying": {"periods": [1, 3, 5, 7]},
            },
        )
    )


@pytest.fixture(scope="session")
def small_financial_config():
    return resolve(
        small_scenario_payload(
            name="small-financial",
            incentives={
                "mode": "financial",
                "gamma_scale": 2.0,
                "qualifying": {"periods": [1, 2, 3, 5, 6, 7]},
            },
        )
    )


@pytest.fixture(scope="session")
def small_run(small_config):
    from loadshift.runner import run_scenario

    return run_scenario(small_config)


@pytest.fixture(scope="session")
def small_social_run(small_social_config):
    from loadshift.runner import run_scenario

    return run_scenario(small_social_config)


@pytest.fixture(scope="session")
def small_financial_run(small_financial_config):
    from loadshift.runner import run_scenario

    return run_scenario(small_financial_config)
