import pathlib

import numpy as np
import pytest

from cdlfleet import config as config_mod
from cdlfleet import engine

ROOT = pathlib.Path(__file__).resolve().parents[1]
FLEET_CONFIG = ROOT / "configs" / "fleet4.yaml"

PAPER_ASSIGNMENT = (2, 0, 1, 3)  # vehicle 1->3's ref, 2->1's, 3->2's, 4 keeps its own

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def fleet_cfg():
    return config_mod.load(FLEET_CONFIG)


@pytest.fixture(scope="session")
def lattice(fleet_cfg):
    return fleet_cfg.lattice()


@pytest.fixture(scope="session")
def learning_log(fleet_cfg):
    return engine.run_learning(fleet_cfg)


@pytest.fixture(scope="session")
def wbar(fleet_cfg, learning_log):
    return engine.consolidate_run(learning_log, *fleet_cfg.sim.consolidation_window())


@pytest.fixture(scope="session")
def experience_log(fleet_cfg, wbar):
    return engine.run_experience(fleet_cfg, wbar, PAPER_ASSIGNMENT)


@pytest.fixture(scope="session")
def zero_weight_log(fleet_cfg, wbar):
    return engine.run_experience(fleet_cfg, np.zeros_like(wbar), PAPER_ASSIGNMENT)


@pytest.fixture()
def rng():
    return np.random.default_rng(20240819)
