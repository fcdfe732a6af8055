"""Array-rotation block: analytic gradient of the penalized objective with
respect to the six stacked Euler angles (BS then RIS) and its maximization
by projected gradient ascent over the mechanical box, with Barzilai-Borwein
step initialization and Armijo backtracking.

The objective is piecewise smooth: the directional-gain model has a kink at
the visibility boundary, where a zero subgradient is used; line searches
always evaluate the exact objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .channel import Scenario, channel_snapshot, sensing_jacobians, user_channel_jacobians
from .metrics import SolutionState, noise_variances, penalized_objective_value

LN2 = float(np.log(2.0))


@dataclass
class RotationConfig:
    armijo_slope: float = 1e-4  # c1
    armijo_shrink: float = 0.5  # c2
    initial_step: float = 1.0
    step_min: float = 1e-6
    step_max: float = 1e2
    max_halvings: int = 30
    gradient_tolerance: float = 1e-5  # eps_pg
    step_tolerance: float = 1e-6  # eps_rel
    max_iterations: int = 100


@dataclass
class StackedBox:
    """Cartesian product of the BS and RIS rotation boxes as 6-vectors."""

    lower: NDArray[np.float64]
    upper: NDArray[np.float64]

    @classmethod
    def from_scenario(cls, scenario: Scenario) -> "StackedBox":
        return cls(
            lower=np.concatenate(
                [scenario.bs_rotation_box.lower, scenario.ris_rotation_box.lower]
            ),
            upper=np.concatenate(
                [scenario.bs_rotation_box.upper, scenario.ris_rotation_box.upper]
            ),
        )


def stack_rotations(r_bs, r_ris) -> NDArray[np.float64]:
    return np.concatenate([np.asarray(r_bs, dtype=float), np.asarray(r_ris, dtype=float)])


def split_rotations(r):
    r = np.asarray(r, dtype=float)
    return r[:3].copy(), r[3:].copy()


def box_project(r, box: StackedBox) -> NDArray[np.float64]:
    """Componentwise clipping onto the stacked box."""
    return np.clip(np.asarray(r, dtype=float), box.lower, box.upper)


def objective_value(scenario: Scenario, w, theta, r, rho: float) -> float:
    """Penalized objective F(r) at fixed precoder/phases (no gradient)."""
    r_bs, r_ris = split_rotations(r)
    f, f_s = channel_snapshot(scenario, r_bs, r_ris, theta)
    return penalized_objective_value(
        f,
        f_s,
        np.asarray(w),
        noise_variances(scenario),
        scenario.sensing.grid.desired,
        rho,
        scenario.mse_threshold,
    )


def objective_and_gradient(scenario: Scenario, w, theta, r, rho: float):
    """Penalized objective F(r) and its 6-gradient at fixed precoder/phases.

    The sensing branch enters cost and gradient only while the hinge is
    active (MSE above threshold); at the threshold the zero subgradient is
    used.
    """
    w = np.asarray(w)
    theta = np.asarray(theta)
    r_bs, r_ris = split_rotations(r)
    noise = noise_variances(scenario)
    desired = np.asarray(scenario.sensing.grid.desired)
    eta = scenario.mse_threshold

    f, jac_f = user_channel_jacobians(scenario, r_bs, r_ris, theta)
    f_s, jac_s = sensing_jacobians(scenario, r_bs, r_ris, theta)

    received = f.conj().T @ w  # (K, K+M)
    k_users = scenario.num_users
    signal_amp = np.diagonal(received[:, :k_users]).copy()
    power = np.abs(received) ** 2
    signal = np.abs(signal_amp) ** 2
    interference = power.sum(axis=1) - signal + noise
    sinr = signal / interference
    rate = float(np.sum(np.log2(1.0 + sinr)))

    grad = np.zeros(6)
    w_comm = w[:, :k_users]
    for k in range(k_users):
        own = w_comm[:, k] * np.conj(received[k, k])  # w_k (w_k^H f_k)
        total = w @ np.conj(received[k])  # sum_i w_i (w_i^H f_k)
        interf_vec = total - own
        d_signal = 2.0 * np.real(jac_f[k].conj().T @ own)  # (6,)
        d_interf = 2.0 * np.real(jac_f[k].conj().T @ interf_vec)
        d_sinr = (interference[k] * d_signal - signal[k] * d_interf) / interference[k] ** 2
        grad += d_sinr / (LN2 * (1.0 + sinr[k]))

    pattern_proj = f_s.conj().T @ w  # (A, K+M)
    pattern = np.sum(np.abs(pattern_proj) ** 2, axis=1)
    mse = float(np.mean((pattern - desired) ** 2))
    value = rate - rho * max(mse - eta, 0.0)

    if rho > 0.0 and mse > eta:
        forward = w @ pattern_proj.conj().T  # (M, A): W W^H f_S,a columns
        d_pattern = 2.0 * np.real(np.einsum("mai,ma->ai", jac_s.conj(), forward))
        grad -= (2.0 * rho / desired.size) * np.einsum(
            "a,ai->i", pattern - desired, d_pattern
        )
    return value, grad


def rotation_objective_gradient(scenario: Scenario, state: SolutionState):
    """Spec-facing wrapper evaluating F and its gradient at the state."""
    r = stack_rotations(state.bs_angles, state.ris_angles)
    return objective_and_gradient(
        scenario, state.precoder, state.ris_phases, r, state.penalty_weight
    )


def bb_stepsize(r, r_prev, grad, grad_prev, config: RotationConfig) -> float:
    """Barzilai-Borwein step ``||dr||^2 / (dr . dg)`` clipped to the
    configured interval; ascent sign convention (dg = grad_prev - grad)."""
    dr = np.asarray(r) - np.asarray(r_prev)
    dg = np.asarray(grad_prev) - np.asarray(grad)
    denom = float(dr @ dg)
    if not np.isfinite(denom) or denom <= 0.0:
        return config.step_max
    step = float(dr @ dr) / denom
    if not np.isfinite(step):
        return config.step_max
    return float(np.clip(step, config.step_min, config.step_max))


def projected_gradient_mapping(grad, r, box: StackedBox) -> NDArray[np.float64]:
    """Componentwise criticality measure: the gradient on the interior,
    its nonnegative part at the lower bound, nonpositive part at the upper
    bound (zero where the box is degenerate)."""
    grad = np.asarray(grad, dtype=float)
    r = np.asarray(r, dtype=float)
    out = grad.copy()
    at_lower = r <= box.lower
    at_upper = r >= box.upper
    out[at_lower] = np.maximum(0.0, grad[at_lower])
    out[at_upper] = np.minimum(0.0, grad[at_upper])
    out[at_lower & at_upper] = 0.0
    return out


def solve_rotations(scenario: Scenario, state: SolutionState,
                    config: RotationConfig | None = None):
    """Projected gradient ascent from the state's rotations; returns the
    stacked 6-vector. Every iterate is box-feasible and the objective is
    non-decreasing across accepted steps."""
    r, _, _ = solve_rotations_with_trace(scenario, state, config)
    return r


def solve_rotations_with_trace(scenario: Scenario, state: SolutionState,
                               config: RotationConfig | None = None):
    """As :func:`solve_rotations` but also returns the accepted-objective
    trace and the termination reason (``gradient``, ``step``,
    ``line_search`` or ``max_iterations``)."""
    config = config or RotationConfig()
    box = StackedBox.from_scenario(scenario)
    w = state.precoder
    theta = state.ris_phases
    rho = state.penalty_weight

    r = box_project(stack_rotations(state.bs_angles, state.ris_angles), box)
    value, grad = objective_and_gradient(scenario, w, theta, r, rho)
    trace = [value]
    if float(np.linalg.norm(projected_gradient_mapping(grad, r, box))) <= config.gradient_tolerance:
        return r, trace, "gradient"

    reason = "max_iterations"
    r_prev = None
    grad_prev = None
    for _ in range(config.max_iterations):
        if r_prev is None:
            step = config.initial_step
        else:
            step = bb_stepsize(r, r_prev, grad, grad_prev, config)

        accepted = False
        for _ in range(config.max_halvings):
            beta = box_project(r + step * grad, box) - r
            candidate = r + beta
            cand_value = objective_value(scenario, w, theta, candidate, rho)
            if cand_value >= value + config.armijo_slope * float(grad @ beta):
                accepted = True
                break
            step *= config.armijo_shrink
        if not accepted:
            reason = "line_search"  # treat the current point as converged
            break

        r_prev, grad_prev = r, grad
        value, grad = objective_and_gradient(scenario, w, theta, candidate, rho)
        r = candidate
        trace.append(value)

        mapping = projected_gradient_mapping(grad, r, box)
        rel_step = float(np.linalg.norm(r - r_prev)) / max(1.0, float(np.linalg.norm(r_prev)))
        if float(np.linalg.norm(mapping)) <= config.gradient_tolerance:
            reason = "gradient"
            break
        if rel_step <= config.step_tolerance:
            reason = "step"
            break
    return r, trace, reason
