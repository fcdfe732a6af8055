"""Rotation-aware ISAC simulator: rotatable active/passive planar arrays,
multipath channel synthesis, and penalty-assisted alternating optimization
of the transmit precoder, surface phases, and array orientations."""

from .geometry import ArraySpec, RotationBox
from .channel import (
    Scenario,
    ScenarioConfig,
    sample_scenario,
    scenario_from_json,
    scenario_to_json,
)
from .metrics import (
    SolutionState,
    beampattern,
    beampattern_mse,
    penalized_objective,
    sinr,
    state_from_json,
    state_to_json,
    sum_rate,
)
from .ao import ARCHITECTURES, AoConfig, evaluate_baseline, run_ao
from .precoder import PrecoderConfig
from .ris import RisConfig
from .rotation import RotationConfig

__all__ = [
    "ArraySpec",
    "RotationBox",
    "Scenario",
    "ScenarioConfig",
    "sample_scenario",
    "scenario_to_json",
    "scenario_from_json",
    "SolutionState",
    "sinr",
    "sum_rate",
    "beampattern",
    "beampattern_mse",
    "penalized_objective",
    "state_to_json",
    "state_from_json",
    "AoConfig",
    "ARCHITECTURES",
    "run_ao",
    "evaluate_baseline",
    "PrecoderConfig",
    "RisConfig",
    "RotationConfig",
]

__version__ = "0.1.0"
