from pathlib import Path

import pytest

from casimircal import config
from casimircal.fitting import curvature_samples
from casimircal.synth import generate_calibration_run, generate_fast_approach_run

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def load_config(name, seed=None):
    return config.load(CONFIGS / f"{name}.toml", seed=seed)


def generate(cfg):
    gen = generate_calibration_run if cfg.protocol() == "curvature" else generate_fast_approach_run
    return gen(cfg.scenario(), cfg.piezo(), cfg.V_PZT(), cfg.V_bias())


def samples_for(name, seed=None):
    cfg = load_config(name, seed)
    return cfg, curvature_samples(generate(cfg))


@pytest.fixture(scope="session")
def extra_power_samples():
    return {r: samples_for(f"extra_power_ratio{r}")[1] for r in (5, 10, 50, 100)}


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
