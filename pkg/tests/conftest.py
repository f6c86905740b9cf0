import json
from pathlib import Path

import pytest

from dfrelay.config import ScenarioConfig, scenario_from_dict
from dfrelay.runtime import build_runtime

REPO_ROOT = Path(__file__).resolve().parents[1]
DESK_SCENARIO = REPO_ROOT / "scenarios" / "desk.json"
SMOKE_SCENARIO = REPO_ROOT / "scenarios" / "smoke.json"


def tiny_scenario_dict(**overrides) -> dict:
    """Small, fast scenario for unit tests: K=2, L=2, M=4."""
    data = {
        "name": "tiny",
        "network": {"K": 2, "n_s": 2, "n_d": 2, "P_0": 0.001, "P_max": 0.1,
                    "lambda_d": 1.0},
        "geometry": {"source_destination_distance": 5.0, "box_x": [1.8, 3.2],
                     "box_y": [-1.0, 1.0], "locations_per_relay": 2,
                     "train_locations": 1, "seed": 5},
        "thresholds": {"candidates": 1, "low": 1.0, "high": 1.0,
                       "train_candidates": 1, "seed": 6},
        "markov": {"states": 4, "rho": 0.9, "sample_budget": 10000, "seed": 7},
        "rl": {"u_max": 3, "m_max": 2, "l_max": 2, "t_max": 10},
        "protocol": {"episodes": 4, "train_eval_points": 2,
                     "train_eval_episodes": 1},
    }
    for key, section in overrides.items():
        data.setdefault(key, {}).update(section)
    return data


@pytest.fixture(scope="session")
def tiny_runtime():
    return build_runtime(scenario_from_dict(tiny_scenario_dict()))


@pytest.fixture(scope="session")
def desk_runtime():
    cfg = scenario_from_dict(json.loads(DESK_SCENARIO.read_text()))
    return build_runtime(cfg)


@pytest.fixture(scope="session")
def smoke_runtime():
    cfg = scenario_from_dict(json.loads(SMOKE_SCENARIO.read_text()))
    return build_runtime(cfg)


@pytest.fixture()
def tiny_scenario_file(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(tiny_scenario_dict()))
    return path
