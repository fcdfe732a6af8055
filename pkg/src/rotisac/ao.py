"""Penalty-assisted alternating optimization across the three blocks
(precoder, surface phases, array rotations) with a geometric penalty-growth
schedule, plus the fixed/rotatable/no-RIS baseline architectures.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import Scenario, effective_channels
from .geometry import RotationBox
from .metrics import (
    SolutionState,
    beampattern_mse,
    penalized_objective,
    sum_rate,
)
from .precoder import PrecoderConfig, initial_precoder, solve_precoder
from .ris import RisConfig, solve_ris
from .rotation import RotationConfig, solve_rotations, split_rotations, stack_rotations

ARCHITECTURES = (
    "rot-bs+rot-ris",
    "rot-bs+fix-ris",
    "fix-bs+rot-ris",
    "fix-bs+fix-ris",
    "rot-bs+no-ris",
    "fix-bs+no-ris",
)

BLOCK_ASCENT_SLACK = 1e-7


@dataclass
class AoConfig:
    rho0: float = 1.0
    gamma_rho: float = 5.0
    rho_max: float = 1e6
    epsilon_ao: float = 1e-3
    max_outer_iterations: int = 30
    precoder: PrecoderConfig = field(default_factory=PrecoderConfig)
    ris: RisConfig = field(default_factory=RisConfig)
    rotation: RotationConfig = field(default_factory=RotationConfig)
    enable_ris_block: bool = True
    enable_rotation_block: bool = True
    num_starts: int = 1
    # The blocks optimize against a threshold tightened by this relative
    # margin so the hinge equilibrium lands strictly inside the true
    # constraint instead of on its boundary (where roundoff would leave the
    # terminal MSE epsilon-infeasible).
    feasibility_margin: float = 1e-6

    def __post_init__(self):
        if self.rho0 <= 0:
            raise ValueError("rho0 must be positive")
        if self.gamma_rho <= 1:
            raise ValueError("gamma_rho must exceed 1")
        if self.rho_max < self.rho0:
            raise ValueError("rho_max must be at least rho0")
        if not (0.0 <= self.feasibility_margin < 1.0):
            raise ValueError("feasibility_margin must lie in [0, 1)")


def initial_state(scenario: Scenario, config: AoConfig,
                  bs_angles=None, ris_angles=None) -> SolutionState:
    """Deterministic starting point: unrotated arrays (projected into the
    boxes), all-ones phases, and the regularized zero-forcing precoder."""
    bs0 = scenario.bs_rotation_box.clip(np.zeros(3) if bs_angles is None else bs_angles)
    ris0 = scenario.ris_rotation_box.clip(np.zeros(3) if ris_angles is None else ris_angles)
    theta0 = np.ones(scenario.num_ris_elements, dtype=complex)
    f = effective_channels(scenario, bs0, ris0, theta0)
    w0 = initial_precoder(scenario, f, config.precoder)
    return SolutionState(
        precoder=w0,
        ris_phases=theta0,
        bs_angles=bs0,
        ris_angles=ris0,
        penalty_weight=config.rho0,
    )


def _run_single(scenario: Scenario, config: AoConfig, state: SolutionState) -> SolutionState:
    eta = scenario.mse_threshold
    solve_scenario = scenario.with_mse_threshold(eta * (1.0 - config.feasibility_margin))
    previous_objective = None

    for outer in range(config.max_outer_iterations):
        blocks = [("precoder", lambda: _update_precoder(solve_scenario, state, config))]
        if config.enable_ris_block and scenario.num_ris_elements > 0:
            blocks.append(("ris", lambda: _update_ris(solve_scenario, state, config)))
        if config.enable_rotation_block:
            blocks.append(("rotation", lambda: _update_rotation(solve_scenario, state, config)))

        before = penalized_objective(solve_scenario, state)
        for name, update in blocks:
            update()
            after = penalized_objective(solve_scenario, state)
            state.block_trace.append((name, after))
            if after < before - BLOCK_ASCENT_SLACK * max(1.0, abs(before)):
                raise RuntimeError(
                    f"{name} block decreased the penalized objective "
                    f"({before} -> {after}) at fixed rho={state.penalty_weight}"
                )
            before = after

        objective = before
        rate = sum_rate(scenario, state)
        mse = beampattern_mse(scenario, state)
        state.objective_trace.append(objective)
        state.sum_rate_trace.append(rate)
        state.mse_trace.append(mse)
        state.rho_trace.append(state.penalty_weight)
        state.outer_iterations = outer + 1

        feasible = mse <= eta
        if feasible and previous_objective is not None:
            scale = max(abs(previous_objective), 1e-12)
            if (objective - previous_objective) / scale < config.epsilon_ao:
                state.feasible = True
                return state

        rho_changed = False
        if not feasible and state.penalty_weight < config.rho_max:
            state.penalty_weight = min(
                state.penalty_weight * config.gamma_rho, config.rho_max
            )
            rho_changed = True
        # Objective values are only comparable at fixed rho.
        previous_objective = None if rho_changed else objective

    state.feasible = beampattern_mse(scenario, state) <= eta
    return state


def _update_precoder(scenario, state, config):
    state.precoder = solve_precoder(scenario, state, config.precoder)


def _update_ris(scenario, state, config):
    state.ris_phases = solve_ris(scenario, state, config.ris)


def _update_rotation(scenario, state, config):
    r = solve_rotations(scenario, state, config.rotation)
    state.bs_angles, state.ris_angles = split_rotations(r)


def run_ao(scenario: Scenario, config: AoConfig | None = None) -> SolutionState:
    """Full alternating optimization. Blocks update in the order precoder,
    phases, rotations each outer pass; the penalty weight grows by
    ``gamma_rho`` only while the MSE constraint stays violated and is frozen
    once met. Terminates when the fractional objective increase drops below
    ``epsilon_ao`` with the constraint satisfied, or at the iteration cap
    (the returned state is then flagged infeasible if the constraint still
    fails)."""
    config = config or AoConfig()
    best = None
    rng = np.random.default_rng(scenario.rng_seed)
    for start in range(max(1, config.num_starts)):
        if start == 0:
            state = initial_state(scenario, config)
        else:
            bs0 = rng.uniform(scenario.bs_rotation_box.lower, scenario.bs_rotation_box.upper)
            ris0 = rng.uniform(scenario.ris_rotation_box.lower, scenario.ris_rotation_box.upper)
            state = initial_state(scenario, config, bs_angles=bs0, ris_angles=ris0)
        state = _run_single(scenario, config, state)
        if best is None or _is_better(state, best, scenario):
            best = state
    return best


def _is_better(candidate: SolutionState, incumbent: SolutionState, scenario) -> bool:
    if candidate.feasible != incumbent.feasible:
        return candidate.feasible
    return sum_rate(scenario, candidate) > sum_rate(scenario, incumbent)


def evaluate_baseline(scenario: Scenario, config: AoConfig | None = None,
                      architecture: str = "rot-bs+rot-ris") -> SolutionState:
    """Run the pipeline under one benchmark architecture.

    ``fix-*`` pins the corresponding rotation box to {0}; ``no-ris`` zeroes
    every RIS-user path gain (user and sensing side) and skips the phase
    block. The optimization pipeline is otherwise identical.
    """
    if architecture not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {architecture!r}; expected one of {ARCHITECTURES}")
    config = config or AoConfig()

    bs_part, ris_part = architecture.split("+")
    scenario_run = scenario
    bs_box = scenario.bs_rotation_box
    ris_box = scenario.ris_rotation_box
    if bs_part == "fix-bs":
        bs_box = RotationBox.fixed()
    if ris_part == "fix-ris":
        ris_box = RotationBox.fixed()

    ris_enabled = config.enable_ris_block
    if ris_part == "no-ris":
        scenario_run = scenario.without_ris_user_links()
        ris_enabled = False
        ris_box = RotationBox.fixed()

    scenario_run = scenario_run.with_rotation_boxes(bs_box, ris_box)
    run_config = AoConfig(
        rho0=config.rho0,
        gamma_rho=config.gamma_rho,
        rho_max=config.rho_max,
        epsilon_ao=config.epsilon_ao,
        max_outer_iterations=config.max_outer_iterations,
        precoder=config.precoder,
        ris=config.ris,
        rotation=config.rotation,
        enable_ris_block=ris_enabled,
        enable_rotation_block=config.enable_rotation_block,
        num_starts=config.num_starts,
    )
    return run_ao(scenario_run, run_config)
