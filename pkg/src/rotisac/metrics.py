"""Scalar performance functionals: per-user SINR, sum rate, transmit
beampattern, beampattern MSE, and the hinge-penalized objective.

The precoder ``W`` is an (M, K+M) complex matrix whose first K columns are
the communication beams and whose last M columns are dedicated sensing
beams; interference at a user includes every other column. The surface
phase vector ``theta`` has unit-modulus entries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .channel import (
    Scenario,
    effective_channels,
    sensing_steering_all,
)

POWER_SLACK = 1e-9
UNIT_MODULUS_SLACK = 1e-9


def validate_precoder(w: NDArray[np.complex128], scenario: Scenario):
    m, total = scenario.num_bs_antennas, scenario.num_beams
    w = np.asarray(w)
    if w.shape != (m, total):
        raise ValueError(f"precoder must be ({m}, {total}), got {w.shape}")
    power = float(np.linalg.norm(w) ** 2)
    if power > scenario.power_budget + POWER_SLACK:
        raise ValueError(f"precoder power {power} exceeds budget {scenario.power_budget}")


def validate_ris_phases(theta, scenario: Scenario):
    theta = np.asarray(theta)
    if theta.shape != (scenario.num_ris_elements,):
        raise ValueError("phase vector has wrong length")
    if np.max(np.abs(np.abs(theta) - 1.0)) > UNIT_MODULUS_SLACK:
        raise ValueError("phase vector entries must have unit modulus")


@dataclass
class SolutionState:
    """Current decision variables plus per-iteration traces."""

    precoder: NDArray[np.complex128]
    ris_phases: NDArray[np.complex128]
    bs_angles: NDArray[np.float64]
    ris_angles: NDArray[np.float64]
    penalty_weight: float = 0.0
    objective_trace: list = field(default_factory=list)
    sum_rate_trace: list = field(default_factory=list)
    mse_trace: list = field(default_factory=list)
    rho_trace: list = field(default_factory=list)
    block_trace: list = field(default_factory=list)
    feasible: bool = True
    outer_iterations: int = 0

    def copy(self) -> "SolutionState":
        return SolutionState(
            precoder=self.precoder.copy(),
            ris_phases=self.ris_phases.copy(),
            bs_angles=np.asarray(self.bs_angles, dtype=float).copy(),
            ris_angles=np.asarray(self.ris_angles, dtype=float).copy(),
            penalty_weight=self.penalty_weight,
            objective_trace=list(self.objective_trace),
            sum_rate_trace=list(self.sum_rate_trace),
            mse_trace=list(self.mse_trace),
            rho_trace=list(self.rho_trace),
            block_trace=list(self.block_trace),
            feasible=self.feasible,
            outer_iterations=self.outer_iterations,
        )


def state_to_dict(state: SolutionState) -> dict:
    def cplx(mat):
        arr = np.asarray(mat, dtype=complex)
        return {
            "shape": list(arr.shape),
            "values": [[float(v.real), float(v.imag)] for v in arr.ravel()],
        }

    return {
        "precoder": cplx(state.precoder),
        "ris_phases": cplx(state.ris_phases),
        "bs_angles": list(map(float, np.asarray(state.bs_angles, dtype=float))),
        "ris_angles": list(map(float, np.asarray(state.ris_angles, dtype=float))),
        "penalty_weight": state.penalty_weight,
        "objective_trace": list(map(float, state.objective_trace)),
        "sum_rate_trace": list(map(float, state.sum_rate_trace)),
        "mse_trace": list(map(float, state.mse_trace)),
        "rho_trace": list(map(float, state.rho_trace)),
        "block_trace": [[str(name), float(value)] for name, value in state.block_trace],
        "feasible": bool(state.feasible),
        "outer_iterations": int(state.outer_iterations),
    }


def state_from_dict(data: dict) -> SolutionState:
    def cplx(d):
        flat = np.array([complex(re, im) for re, im in d["values"]], dtype=complex)
        return flat.reshape(d["shape"])

    return SolutionState(
        precoder=cplx(data["precoder"]),
        ris_phases=cplx(data["ris_phases"]),
        bs_angles=np.asarray(data["bs_angles"], dtype=float),
        ris_angles=np.asarray(data["ris_angles"], dtype=float),
        penalty_weight=data["penalty_weight"],
        objective_trace=list(data["objective_trace"]),
        sum_rate_trace=list(data["sum_rate_trace"]),
        mse_trace=list(data["mse_trace"]),
        rho_trace=list(data["rho_trace"]),
        block_trace=[(name, value) for name, value in data["block_trace"]],
        feasible=data["feasible"],
        outer_iterations=data["outer_iterations"],
    )


def state_to_json(state: SolutionState) -> str:
    return json.dumps(state_to_dict(state))


def state_from_json(text: str) -> SolutionState:
    return state_from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Metric evaluation on explicit arrays (used by the solvers)
# ---------------------------------------------------------------------------


def sinr_values(f: NDArray[np.complex128], w: NDArray[np.complex128], noise) -> NDArray[np.float64]:
    """Per-user SINRs given stacked channels ``f`` (M, K) and precoder ``w``.

    Interference sums every column except the user's own, sensing columns
    included.
    """
    k_users = f.shape[1]
    received = np.abs(f.conj().T @ w) ** 2  # (K, K+M)
    signal = np.diagonal(received[:, :k_users]).copy()
    interference = received.sum(axis=1) - signal
    return signal / (interference + np.asarray(noise))


def sum_rate_value(f, w, noise) -> float:
    return float(np.sum(np.log2(1.0 + sinr_values(f, w, noise))))


def beampattern_values(f_s: NDArray[np.complex128], w: NDArray[np.complex128]) -> NDArray[np.float64]:
    """Transmit beampattern ``f_S,a^H W W^H f_S,a`` for all grid columns."""
    return np.sum(np.abs(f_s.conj().T @ w) ** 2, axis=1)


def beampattern_mse_value(f_s, w, desired) -> float:
    pattern = beampattern_values(f_s, w)
    return float(np.mean((pattern - np.asarray(desired)) ** 2))


def penalized_objective_value(f, f_s, w, noise, desired, rho, threshold) -> float:
    rate = sum_rate_value(f, w, noise)
    mse = beampattern_mse_value(f_s, w, desired)
    return rate - rho * max(mse - threshold, 0.0)


def noise_variances(scenario: Scenario) -> NDArray[np.float64]:
    return np.array([u.noise_variance for u in scenario.users])


# ---------------------------------------------------------------------------
# Scenario-facing metric operations
# ---------------------------------------------------------------------------


def sinr(scenario: Scenario, k: int, state: SolutionState) -> float:
    f = effective_channels(scenario, state.bs_angles, state.ris_angles, state.ris_phases)
    return float(sinr_values(f, state.precoder, noise_variances(scenario))[k])


def sum_rate(scenario: Scenario, state: SolutionState) -> float:
    f = effective_channels(scenario, state.bs_angles, state.ris_angles, state.ris_phases)
    return sum_rate_value(f, state.precoder, noise_variances(scenario))


def beampattern(scenario: Scenario, a: int, state: SolutionState) -> float:
    f_s = sensing_steering_all(scenario, state.bs_angles, state.ris_angles, state.ris_phases)
    return float(beampattern_values(f_s, state.precoder)[a])


def beampattern_mse(scenario: Scenario, state: SolutionState) -> float:
    f_s = sensing_steering_all(scenario, state.bs_angles, state.ris_angles, state.ris_phases)
    return beampattern_mse_value(f_s, state.precoder, scenario.sensing.grid.desired)


def penalized_objective(scenario: Scenario, state: SolutionState) -> float:
    if state.penalty_weight < 0:
        raise ValueError("penalty weight must be nonnegative")
    f = effective_channels(scenario, state.bs_angles, state.ris_angles, state.ris_phases)
    f_s = sensing_steering_all(scenario, state.bs_angles, state.ris_angles, state.ris_phases)
    return penalized_objective_value(
        f,
        f_s,
        state.precoder,
        noise_variances(scenario),
        scenario.sensing.grid.desired,
        state.penalty_weight,
        scenario.mse_threshold,
    )
