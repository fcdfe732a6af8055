"""Transmit-beamforming block: fractional-programming auxiliaries, a
quadratic majorizer of the sensing penalty, and the resulting QCQP solved in
closed form by eigendecomposition plus a water-filling bisection.

Each iteration (a) refreshes the closed-form auxiliaries that make the
transformed sum rate tight at the current precoder, (b) majorizes each
grid point's squared beampattern error by a Lipschitz quadratic around the
current precoder, (c) collapses everything into ``max -tr(W^H Q W) +
2 Re tr(P^H W)`` under the power ball, and (d) recovers the maximizer as
``W(nu) = (Q + nu I)^{-1} P`` with the multiplier found by bisection on the
power constraint. The penalized objective is non-decreasing across
iterations; a decrease in a regime where the ascent guarantee applies
signals an implementation bug and raises.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .channel import Scenario, effective_channels, sensing_steering_all
from .metrics import (
    SolutionState,
    beampattern_mse_value,
    noise_variances,
    penalized_objective_value,
    sum_rate_value,
)

LN2 = float(np.log(2.0))
LIPSCHITZ_FLOOR = 1e-12
HERMITIAN_TOL = 1e-8
ASCENT_SLACK = 1e-8


@dataclass
class PrecoderConfig:
    tolerance: float = 1e-4
    max_iterations: int = 100
    bisection_tolerance: float = 1e-8
    max_bisection_steps: int = 200
    zf_power_fraction: float = 0.9
    # Majorization backtracking: each iteration first tries a fraction of the
    # proven global Lipschitz curvature and verifies the majorization at the
    # candidate, growing the fraction on failure (always valid at 1).
    curvature_init: float = 2.0**-6
    curvature_grow: float = 4.0
    curvature_relax: float = 0.5
    curvature_min: float = 1e-6


@dataclass
class QtAuxiliaries:
    """Closed-form fractional-programming auxiliaries (one pair per user)."""

    mu: NDArray[np.float64]
    y: NDArray[np.complex128]


@dataclass
class MmSurrogate:
    """Per-grid quadratic upper bounds on the squared beampattern errors,
    anchored at ``anchor``."""

    anchor: NDArray[np.complex128]
    steering: NDArray[np.complex128]  # (M, A) effective sensing vectors
    desired: NDArray[np.float64]
    lipschitz: NDArray[np.float64]
    gradients: NDArray[np.complex128]  # (A, M, K+M)
    anchor_errors: NDArray[np.float64]  # g_a(anchor)

    def error_values(self, w) -> NDArray[np.float64]:
        """Exact squared errors g_a(W) for each grid point."""
        powers = np.sum(np.abs(self.steering.conj().T @ w) ** 2, axis=1)
        return (powers - self.desired) ** 2

    def surrogate_values(self, w, curvature_scale: float = 1.0) -> NDArray[np.float64]:
        """Majorizer values U_a(W | anchor) for each grid point.

        ``curvature_scale`` scales the Lipschitz curvature; 1 is the proven
        global constant, smaller values are trial curvatures whose
        majorization must be verified at the candidate before use.
        """
        delta = w - self.anchor
        linear = np.real(np.einsum("amb,mb->a", self.gradients.conj(), delta))
        return self.anchor_errors + linear + 0.5 * curvature_scale * self.lipschitz * float(
            np.linalg.norm(delta) ** 2
        )


@dataclass
class QcqpData:
    """Quadratic program data ``max -tr(W^H Q W) + 2 Re tr(P^H W) + c``."""

    q: NDArray[np.complex128]
    p: NDArray[np.complex128]
    constant: float
    eigenvalues: NDArray[np.float64]
    eigenvectors: NDArray[np.complex128]


# ---------------------------------------------------------------------------
# Array-level building blocks
# ---------------------------------------------------------------------------


def lipschitz_constants(f_s, desired, power_budget) -> NDArray[np.float64]:
    """Gradient Lipschitz constants ``12 P_B ||f||^4 + 4 P_d ||f||^2`` of the
    squared beampattern errors over the power ball, floored away from 0."""
    spectral = np.sum(np.abs(f_s) ** 2, axis=0)  # ||S_a||_2 = ||f_a||^2
    value = 12.0 * power_budget * spectral**2 + 4.0 * np.asarray(desired) * spectral
    return np.maximum(value, LIPSCHITZ_FLOOR)


def mm_gradients(f_s, desired, w) -> NDArray[np.complex128]:
    """Gradients ``4 (tr(W^H S_a W) - P_d,a) S_a W`` stacked as (A, M, K+M)."""
    proj = f_s.conj().T @ w  # (A, K+M)
    powers = np.sum(np.abs(proj) ** 2, axis=1)
    scale = 4.0 * (powers - np.asarray(desired))
    return scale[:, None, None] * np.einsum("ma,ab->amb", f_s, proj)


def build_surrogate(f_s, desired, power_budget, anchor) -> MmSurrogate:
    proj = f_s.conj().T @ anchor
    powers = np.sum(np.abs(proj) ** 2, axis=1)
    return MmSurrogate(
        anchor=anchor.copy(),
        steering=f_s,
        desired=np.asarray(desired, dtype=float),
        lipschitz=lipschitz_constants(f_s, desired, power_budget),
        gradients=mm_gradients(f_s, desired, anchor),
        anchor_errors=(powers - np.asarray(desired)) ** 2,
    )


def qt_auxiliaries(f, w, noise) -> QtAuxiliaries:
    """Optimal auxiliaries: ``mu_k`` equals the SINR and ``y_k`` the scaled
    matched-filter output over total received power plus noise."""
    received = f.conj().T @ w  # (K, K+M)
    power = np.abs(received) ** 2
    k_users = f.shape[1]
    signal = np.diagonal(received[:, :k_users]).copy()
    total = power.sum(axis=1) + np.asarray(noise)
    mu = np.abs(signal) ** 2 / (total - np.abs(signal) ** 2)
    y = signal / total
    return QtAuxiliaries(mu=mu, y=y)


def assemble_qcqp_data(f, noise, aux: QtAuxiliaries, surrogate: MmSurrogate,
                       rho: float, hinge_active: bool, threshold: float,
                       curvature_scale: float = 1.0) -> QcqpData:
    """Collapse the transformed objective into (Q, P, constant).

    With the hinge active the sensing majorizer contributes
    ``Q_S = (sum_a L_a / 2A) I`` and ``P_S = (sum_a L_a W^t - sum_a G_a) / 2A``;
    otherwise only the communication terms enter. The tracked constant makes
    ``-tr(W^H Q W) + 2 Re tr(P^H W) + constant`` equal the transformed
    objective exactly. ``curvature_scale`` scales the majorizer curvature
    (see :meth:`MmSurrogate.surrogate_values`).
    """
    m, k_users = f.shape
    total_cols = surrogate.anchor.shape[1]
    weights = (1.0 + aux.mu) * np.abs(aux.y) ** 2 / LN2  # (K,)
    q = (f * weights[None, :]) @ f.conj().T
    p = np.zeros((m, total_cols), dtype=complex)
    p[:, :k_users] = f * ((1.0 + aux.mu) * aux.y / LN2)[None, :]
    constant = -float(np.sum(weights * np.asarray(noise)))

    if hinge_active:
        a_count = surrogate.desired.size
        lipschitz = curvature_scale * surrogate.lipschitz
        lip_sum = float(np.sum(lipschitz))
        grad_sum = surrogate.gradients.sum(axis=0)  # (M, K+M)
        q = q + rho * (lip_sum / (2.0 * a_count)) * np.eye(m)
        p = p + rho * (lip_sum * surrogate.anchor - grad_sum) / (2.0 * a_count)
        anchor_lin = np.real(
            np.einsum("amb,mb->a", surrogate.gradients.conj(), surrogate.anchor)
        )
        anchor_norm = float(np.linalg.norm(surrogate.anchor) ** 2)
        anchor_const = (
            surrogate.anchor_errors - anchor_lin + 0.5 * lipschitz * anchor_norm
        )
        constant += -rho * (float(np.sum(anchor_const)) / a_count - threshold)

    scale = max(1.0, float(np.max(np.abs(q))))
    herm_err = np.max(np.abs(q - q.conj().T))
    if herm_err > HERMITIAN_TOL * scale:
        raise RuntimeError(f"non-Hermitian QCQP accumulation ({herm_err:.2e})")
    q = 0.5 * (q + q.conj().T)
    eigenvalues, eigenvectors = np.linalg.eigh(q)
    psd_tol = 1e-10 * max(1.0, float(np.abs(eigenvalues).max()))
    if np.min(eigenvalues) < -psd_tol:
        raise RuntimeError("QCQP quadratic form lost positive semidefiniteness")
    return QcqpData(
        q=q,
        p=p,
        constant=constant,
        eigenvalues=np.maximum(eigenvalues, 0.0),
        eigenvectors=eigenvectors,
    )


def best_power_scaling(f, f_s, w, noise, desired, rho, threshold,
                       grid_size: int = 257) -> float:
    """Scale factor c in [0, 1] maximizing the penalized objective along the
    ray c*W. Received powers scale by c^2, so the search is a cheap 1-D
    scan of closed-form expressions; c = 1 is always included."""
    received = np.abs(f.conj().T @ w) ** 2  # (K, K+M)
    k_users = f.shape[1]
    signal = np.diagonal(received[:, :k_users]).copy()
    interference = received.sum(axis=1) - signal
    pattern = np.sum(np.abs(f_s.conj().T @ w) ** 2, axis=1)
    desired = np.asarray(desired)
    noise = np.asarray(noise)

    # Log-spaced power grid: the interesting scalings can sit many orders
    # of magnitude below 1 when the pattern error is large.
    c2 = np.concatenate(([0.0], np.logspace(-8.0, 0.0, grid_size - 1)))[:, None]
    rates = np.sum(
        np.log2(1.0 + c2 * signal[None, :] / (c2 * interference[None, :] + noise[None, :])),
        axis=1,
    )
    mses = np.mean((c2 * pattern[None, :] - desired[None, :]) ** 2, axis=1)
    values = rates - rho * np.maximum(mses - threshold, 0.0)
    best = int(np.argmax(values))
    return float(np.sqrt(c2[best, 0]))


def qcqp_objective(data: QcqpData, w) -> float:
    quad = float(np.real(np.einsum("mb,mn,nb->", w.conj(), data.q, w)))
    lin = 2.0 * float(np.real(np.sum(data.p.conj() * w)))
    return -quad + lin + data.constant


def water_filling(data: QcqpData, power_budget: float,
                  tolerance: float = 1e-8, max_steps: int = 200):
    """Solve ``max -tr(W^H Q W) + 2 Re tr(P^H W)`` in the power ball.

    Returns ``(W, nu)``. The multiplier is zero when the pseudo-inverse
    solution already fits inside the budget; otherwise it is found by a
    geometric bracket plus bisection on the monotone power curve
    ``sum_i ||row_i(U^H P)||^2 / (lambda_i + nu)^2``.
    """
    lam = data.eigenvalues
    basis = data.eigenvectors
    p_rot = basis.conj().T @ data.p  # (M, K+M)
    row_power = np.sum(np.abs(p_rot) ** 2, axis=1)
    total_p = float(np.sum(row_power))
    if total_p == 0.0:
        return np.zeros_like(data.p), 0.0

    lam_scale = max(float(lam.max()), 1.0)
    null_rows = lam <= lam_scale * 1e-12
    null_energy = float(np.sum(row_power[null_rows]))

    def norm_sq(nu: float) -> float:
        return float(np.sum(row_power / (lam + nu) ** 2))

    def solution(nu: float):
        inv = np.where(null_rows & (nu == 0.0), 0.0, 1.0 / (lam + nu))
        return basis @ (p_rot * inv[:, None])

    if null_energy <= 1e-12 * total_p:
        inv = np.where(null_rows, 0.0, 1.0 / np.where(null_rows, 1.0, lam))
        pinv_power = float(np.sum(row_power * inv**2))
        if pinv_power <= power_budget:
            return basis @ (p_rot * inv[:, None]), 0.0

    hi = lam_scale
    for _ in range(max_steps):
        if norm_sq(hi) <= power_budget:
            break
        hi *= 2.0
    else:
        raise RuntimeError("water-filling bracket growth failed to bound the power")
    lo = 0.0
    nu = hi
    for _ in range(max_steps):
        nu = 0.5 * (lo + hi)
        power = norm_sq(nu)
        if abs(power - power_budget) <= tolerance * power_budget:
            return solution(nu), nu
        if power > power_budget:
            lo = nu
        else:
            hi = nu
    raise RuntimeError("water-filling bisection did not converge")


# ---------------------------------------------------------------------------
# Scenario-facing operations
# ---------------------------------------------------------------------------


def lipschitz_constant(scenario: Scenario, a: int, state: SolutionState) -> float:
    f_s = sensing_steering_all(scenario, state.bs_angles, state.ris_angles, state.ris_phases)
    return float(
        lipschitz_constants(f_s, scenario.sensing.grid.desired, scenario.power_budget)[a]
    )


def mm_gradient(scenario: Scenario, a: int, state: SolutionState, w=None):
    f_s = sensing_steering_all(scenario, state.bs_angles, state.ris_angles, state.ris_phases)
    w = state.precoder if w is None else w
    return mm_gradients(f_s, scenario.sensing.grid.desired, w)[a]


def update_auxiliaries(scenario: Scenario, state: SolutionState) -> QtAuxiliaries:
    f = effective_channels(scenario, state.bs_angles, state.ris_angles, state.ris_phases)
    return qt_auxiliaries(f, state.precoder, noise_variances(scenario))


def assemble_qcqp(scenario: Scenario, state: SolutionState, auxiliaries: QtAuxiliaries,
                  surrogate: MmSurrogate, hinge_active: bool) -> QcqpData:
    f = effective_channels(scenario, state.bs_angles, state.ris_angles, state.ris_phases)
    return assemble_qcqp_data(
        f,
        noise_variances(scenario),
        auxiliaries,
        surrogate,
        state.penalty_weight,
        hinge_active,
        scenario.mse_threshold,
    )


def solve_qcqp(data: QcqpData, power_budget: float) -> NDArray[np.complex128]:
    w, _ = water_filling(data, power_budget)
    return w


def initial_precoder(scenario: Scenario, f, config: PrecoderConfig | None = None):
    """Cold-start precoder: regularized zero forcing on the user channels for
    the communication columns (equal power, ``zf_power_fraction`` of the
    budget) and scaled identity columns for the sensing beams."""
    config = config or PrecoderConfig()
    m = scenario.num_bs_antennas
    k_users = scenario.num_users
    budget = scenario.power_budget
    noise = noise_variances(scenario)
    ridge = k_users * float(np.mean(noise)) / budget + 1e-12
    gram = f.conj().T @ f + ridge * np.eye(k_users)
    raw = f @ np.linalg.inv(gram)
    w = np.zeros((m, k_users + m), dtype=complex)
    col_power = config.zf_power_fraction * budget / k_users
    for k in range(k_users):
        norm = np.linalg.norm(raw[:, k])
        if norm > 1e-15:
            w[:, k] = raw[:, k] * (np.sqrt(col_power) / norm)
    sensing_power = (1.0 - config.zf_power_fraction) * budget / m
    w[:, k_users:] = np.sqrt(sensing_power) * np.eye(m)
    return w


def solve_precoder(scenario: Scenario, state: SolutionState,
                   config: PrecoderConfig | None = None) -> NDArray[np.complex128]:
    """Run the inner beamforming loop from ``state.precoder`` and return the
    improved precoder. The penalized objective never decreases; candidates
    that would decrease it (only possible when an update crosses the hinge
    threshold) are rejected in favor of the current iterate."""
    w, _ = solve_precoder_with_trace(scenario, state, config)
    return w


def solve_precoder_with_trace(scenario: Scenario, state: SolutionState,
                              config: PrecoderConfig | None = None):
    """As :func:`solve_precoder` but also returns the per-iteration
    penalized-objective trace (index 0 is the starting value)."""
    config = config or PrecoderConfig()
    f = effective_channels(scenario, state.bs_angles, state.ris_angles, state.ris_phases)
    f_s = sensing_steering_all(scenario, state.bs_angles, state.ris_angles, state.ris_phases)
    noise = noise_variances(scenario)
    desired = scenario.sensing.grid.desired
    rho = state.penalty_weight
    eta = scenario.mse_threshold
    budget = scenario.power_budget

    w = np.asarray(state.precoder, dtype=complex).copy()

    def objective(candidate):
        return penalized_objective_value(f, f_s, candidate, noise, desired, rho, eta)

    current = objective(w)
    trace = [current]
    scale_state = config.curvature_init
    for _ in range(config.max_iterations):
        aux = qt_auxiliaries(f, w, noise)
        surrogate = build_surrogate(f_s, desired, budget, w)
        hinge_active = beampattern_mse_value(f_s, w, desired) > eta

        def gate_solution(active, curvature=1.0):
            data = assemble_qcqp_data(
                f, noise, aux, surrogate, rho, active, eta, curvature
            )
            cand, _ = water_filling(
                data, budget, config.bisection_tolerance, config.max_bisection_steps
            )
            return cand, objective(cand)

        if hinge_active:
            # Backtracked majorization: accept the smallest trial curvature
            # whose surrogate still dominates the true penalty at the
            # candidate (the global constant always does).
            curvature = scale_state
            while True:
                candidate, value = gate_solution(True, curvature)
                if curvature >= 1.0:
                    break
                dominated = float(
                    np.mean(surrogate.surrogate_values(candidate, curvature))
                ) >= beampattern_mse_value(f_s, candidate, desired) - 1e-12
                if dominated:
                    break
                curvature = min(curvature * config.curvature_grow, 1.0)
            scale_state = max(curvature * config.curvature_relax, config.curvature_min)
        else:
            candidate, value = gate_solution(False)
        scale = max(abs(current), 1.0)
        if value < current - ASCENT_SLACK * scale:
            # A drop is only possible when the step crossed the hinge; in the
            # regime where the majorizer argument applies it is a bug.
            if hinge_active:
                guaranteed = float(
                    np.mean(surrogate.surrogate_values(candidate, curvature))
                ) >= eta
            else:
                guaranteed = beampattern_mse_value(f_s, candidate, desired) <= eta
            if guaranteed:
                raise RuntimeError(
                    "precoder objective decreased where the MM/QT ascent "
                    f"guarantee applies ({current} -> {value})"
                )
        if value < current and rho > 0.0:
            # Hinge-crossing step: the piecewise-concave surrogate's maximizer
            # lives in the other regime, so solve that case as well and keep
            # the better candidate.
            alt, alt_value = gate_solution(not hinge_active)
            if alt_value > value:
                candidate, value = alt, alt_value
        if hinge_active and rho > 0.0:
            # Rescaling the incumbent is a cheap exact-line-search candidate
            # that cuts through the flat-progress regime of the quartic
            # penalty (the majorizer steps are curvature-limited there).
            factor = best_power_scaling(f, f_s, w, noise, desired, rho, eta)
            if factor < 1.0:
                scaled = factor * w
                scaled_value = objective(scaled)
                if scaled_value > value:
                    candidate, value = scaled, scaled_value
        if value <= current:
            trace.append(current)
            break  # no improving candidate in either regime: fixed point
        step = float(np.linalg.norm(candidate - w)) / max(float(np.linalg.norm(w)), 1e-15)
        w = candidate
        gain = value - current
        current = value
        trace.append(current)
        if gain < config.tolerance * scale or step < config.tolerance:
            break
    return w, trace
