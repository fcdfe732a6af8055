import numpy as np
import pytest

from rotisac import AoConfig, ScenarioConfig, sample_scenario
from rotisac.precoder import PrecoderConfig
from rotisac.ris import RisConfig
from rotisac.rotation import RotationConfig


@pytest.fixture(scope="session")
def default_scenario():
    return sample_scenario(ScenarioConfig(), seed=7)


@pytest.fixture(scope="session")
def small_scenario():
    """Reduced geometry for tests that loop over many random points."""
    config = ScenarioConfig(ris_rows=3, ris_cols=3, grid_azimuths=5, grid_elevations=3)
    return sample_scenario(config, seed=11)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


def light_ao_config() -> AoConfig:
    """Reduced iteration budget for sweep-style tests."""
    return AoConfig(
        max_outer_iterations=8,
        precoder=PrecoderConfig(max_iterations=25),
        ris=RisConfig(max_iterations=40),
        rotation=RotationConfig(max_iterations=25),
    )
