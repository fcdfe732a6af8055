"""Passive-beamforming block: the penalized objective as explicit quadratic
forms in the phase vector, and its maximization by Riemannian conjugate
gradient on the complex circle manifold (ascent with a Polak-Ribiere-plus
direction, Armijo backtracking, and elementwise-normalization retraction).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .channel import (
    Scenario,
    _sensing_components,
    bs_ris_channel,
    ris_user_channel,
    user_channel,
)
from .metrics import SolutionState, noise_variances

LN2 = float(np.log(2.0))


@dataclass
class RisConfig:
    gradient_tolerance: float = 1e-6
    max_iterations: int = 200
    armijo_slope: float = 1e-4
    armijo_shrink: float = 0.5
    max_halvings: int = 30
    initial_step: float = 1.0


@dataclass
class QuadraticForms:
    """Coefficients that turn beampattern values and per-beam received powers
    into quadratic forms of the phase vector.

    Sensing forms carry one (N, N) Hermitian PSD matrix, one linear vector,
    and one real scalar per grid point; communication forms carry the same
    triple per (user, beam) pair, flattened with beam index fastest.
    """

    sensing_quad: NDArray[np.complex128]  # (A, N, N)
    sensing_lin: NDArray[np.complex128]  # (A, N)
    sensing_const: NDArray[np.float64]  # (A,)
    comm_quad: NDArray[np.complex128]  # (K, K+M, N, N)
    comm_lin: NDArray[np.complex128]  # (K, K+M, N)
    comm_const: NDArray[np.float64]  # (K, K+M)
    desired: NDArray[np.float64]
    noise: NDArray[np.float64]
    # Low-rank factors behind the same forms: the quadratic kernels are
    # Z^H Z resp. e e^H, so evaluation goes through (A, K+M, N) and
    # (K, K+M, N) factors instead of N x N contractions.
    sensing_factor: NDArray[np.complex128] | None = None  # (A, K+M, N)
    sensing_offset: NDArray[np.complex128] | None = None  # (A, K+M)
    comm_factor: NDArray[np.complex128] | None = None  # (K, K+M, N)
    comm_offset: NDArray[np.complex128] | None = None  # (K, K+M)

    @property
    def num_users(self) -> int:
        return self.comm_quad.shape[0]

    def sensing_values(self, theta) -> NDArray[np.float64]:
        """Beampattern-minus-desired values S_a(theta) for all grid points."""
        if self.sensing_factor is not None:
            recv = self.sensing_offset + self.sensing_factor @ theta  # (A, K+M)
            return np.sum(np.abs(recv) ** 2, axis=1) - self.desired
        quad = np.real(np.einsum("n,anm,m->a", theta.conj(), self.sensing_quad, theta))
        lin = 2.0 * np.real(self.sensing_lin.conj() @ theta)
        return quad + lin + self.sensing_const - self.desired

    def sensing_gradients(self, theta) -> NDArray[np.complex128]:
        """Gradients of the S_a values, (A, N)."""
        if self.sensing_factor is not None:
            recv = self.sensing_offset + self.sensing_factor @ theta
            return 2.0 * np.einsum("abn,ab->an", self.sensing_factor.conj(), recv)
        return 2.0 * (np.einsum("anm,m->an", self.sensing_quad, theta) + self.sensing_lin)

    def comm_values(self, theta) -> NDArray[np.float64]:
        """Received powers |f_k^H w_i|^2 as a (K, K+M) table."""
        if self.comm_factor is not None:
            recv = self.comm_offset + self.comm_factor @ theta  # (K, K+M)
            return np.abs(recv) ** 2
        quad = np.real(np.einsum("n,kinm,m->ki", theta.conj(), self.comm_quad, theta))
        lin = 2.0 * np.real(np.einsum("kin,n->ki", self.comm_lin.conj(), theta))
        return quad + lin + self.comm_const

    def comm_gradients(self, theta) -> NDArray[np.complex128]:
        """Gradients of every received power, (K, K+M, N)."""
        if self.comm_factor is not None:
            recv = self.comm_offset + self.comm_factor @ theta
            return 2.0 * self.comm_factor.conj() * recv[:, :, None]
        return 2.0 * (np.einsum("kinm,m->kin", self.comm_quad, theta) + self.comm_lin)

    def signal_interference(self, theta):
        table = self.comm_values(theta)
        k = self.num_users
        signal = np.diagonal(table[:, :k]).copy()
        interference = table.sum(axis=1) - signal + self.noise
        return signal, interference


def build_quadratics(scenario: Scenario, state: SolutionState) -> QuadraticForms:
    """Expand the fixed-precoder, fixed-rotation objective into quadratic
    forms of the phase vector; all quadratic matrices are Hermitian by
    explicit symmetrization."""
    w = np.asarray(state.precoder)
    b = bs_ris_channel(scenario, state.bs_angles, state.ris_angles)
    direct, ris_side = _sensing_components(scenario, state.bs_angles, state.ris_angles)
    cov_proj = b.conj().T @ w  # (N, K+M)

    # Sensing: f_S,a = direct_a + B diag(theta) ris_side_a, so with
    # v_a = ris_side_a the quadratic kernel is diag(v_a)^H B^H C B diag(v_a).
    core = cov_proj @ cov_proj.conj().T  # B^H W W^H B, (N, N)
    sensing_quad = np.einsum("na,nm,ma->anm", ris_side.conj(), core, ris_side)
    sensing_quad = 0.5 * (sensing_quad + np.conj(np.swapaxes(sensing_quad, 1, 2)))
    # Linear part: with x_a = d_a^H W and E_a = diag(v_a*) B^H W the vector is
    # xi_a = E_a x_a^H, i.e. conj(v) scaled rows of conj(x W^H B).
    cross = (direct.conj().T @ w) @ cov_proj.conj().T  # (A, N), entry sum_j x_aj conj((B^H W)_nj)
    sensing_lin = cross.conj() * ris_side.conj().T
    sensing_const = np.sum(np.abs(direct.conj().T @ w) ** 2, axis=1)
    # Factored view: f_S,a^H-side received vector is offset_a + Z_a theta.
    sensing_factor = np.einsum("bn,na->abn", cov_proj.conj().T, ris_side)
    sensing_offset = (w.conj().T @ direct).T

    k_users = scenario.num_users
    total = scenario.num_beams
    n = scenario.num_ris_elements
    comm_quad = np.zeros((k_users, total, n, n), dtype=complex)
    comm_lin = np.zeros((k_users, total, n), dtype=complex)
    comm_const = np.zeros((k_users, total))
    comm_factor = np.zeros((k_users, total, n), dtype=complex)
    comm_offset = np.zeros((k_users, total), dtype=complex)
    for k in range(k_users):
        h = user_channel(scenario, k, state.bs_angles)
        g = ris_user_channel(scenario, k, state.ris_angles)
        hw = h.conj() @ w  # (K+M,)
        # e_i = diag(g)^* B^H w_i makes the kernel the rank-one e_i e_i^H.
        e = g.conj()[:, None] * (b.conj().T @ w)  # (N, K+M)
        comm_quad[k] = np.einsum("ni,mi->inm", e, e.conj())
        comm_lin[k] = (e * np.conj(hw)[None, :]).T
        comm_const[k] = np.abs(hw) ** 2
        comm_factor[k] = e.conj().T
        comm_offset[k] = np.conj(hw)
    comm_quad = 0.5 * (comm_quad + np.conj(np.swapaxes(comm_quad, 2, 3)))

    return QuadraticForms(
        sensing_quad=sensing_quad,
        sensing_lin=sensing_lin,
        sensing_const=sensing_const,
        comm_quad=comm_quad,
        comm_lin=comm_lin,
        comm_const=comm_const,
        desired=np.asarray(scenario.sensing.grid.desired, dtype=float),
        noise=noise_variances(scenario),
        sensing_factor=sensing_factor,
        sensing_offset=sensing_offset,
        comm_factor=comm_factor,
        comm_offset=comm_offset,
    )


def ris_objective(forms: QuadraticForms, theta, rho: float, eta_th: float) -> float:
    theta = np.asarray(theta)
    signal, interference = forms.signal_interference(theta)
    if np.any(interference <= 0):
        raise RuntimeError("nonpositive interference-plus-noise term: corrupted forms")
    rate = float(np.sum(np.log2(1.0 + signal / interference)))
    s = forms.sensing_values(theta)
    mse = float(np.mean(s**2))
    return rate - rho * max(mse - eta_th, 0.0)


def euclidean_gradient(forms: QuadraticForms, theta, rho: float, eta_th: float):
    """Full-convention Euclidean gradient of the objective (directional
    derivative along a perturbation v is Re{grad^H v}). The sensing branch is
    dropped while the hinge is inactive."""
    theta = np.asarray(theta)
    signal, interference = forms.signal_interference(theta)
    k_users = forms.num_users

    grad_table = forms.comm_gradients(theta)  # (K, K+M, N)
    own = grad_table[np.arange(k_users), np.arange(k_users)]  # (K, N)
    grad_interf = grad_table.sum(axis=1) - own
    # Quotient rule: (C2 * dC1 - C1 * dC2) / (C2 * (C1 + C2)), summed over users.
    grad = np.einsum(
        "k,kn->n",
        1.0 / (LN2 * interference * (signal + interference)),
        interference[:, None] * own - signal[:, None] * grad_interf,
    )

    s = forms.sensing_values(theta)
    if rho > 0.0 and float(np.mean(s**2)) > eta_th:
        grad_s = forms.sensing_gradients(theta)
        grad = grad - (2.0 * rho / s.size) * np.einsum("a,an->n", s, grad_s)
    return grad


def project_tangent(theta, v):
    """Orthogonal projection onto the tangent space of the circle manifold."""
    theta = np.asarray(theta)
    v = np.asarray(v)
    return v - np.real(v * theta.conj()) * theta


def retract(theta, step):
    moved = theta + step
    return moved / np.abs(moved)


def riemannian_gradient(forms, theta, rho, eta_th):
    return project_tangent(theta, euclidean_gradient(forms, theta, rho, eta_th))


def rcg_step(forms: QuadraticForms, theta, rho, eta_th, previous_gradient,
             previous_direction, config: RisConfig, initial_step: float | None = None):
    """One ascent step: PR+ conjugate direction, Armijo backtracking, and
    retraction. Returns ``(theta, gradient, direction, value, accepted_step)``
    with ``accepted_step = 0`` when no improving point was found. The line
    search starts from ``initial_step`` (warm-started by the caller)."""
    grad = riemannian_gradient(forms, theta, rho, eta_th)
    if previous_gradient is None:
        direction = grad
    else:
        transported_prev = project_tangent(theta, previous_gradient)
        denom = float(np.real(previous_gradient.conj() @ previous_gradient))
        if denom <= 0.0:
            chi = 0.0
        else:
            chi = float(np.real(grad.conj() @ (grad - transported_prev))) / denom
        chi = max(chi, 0.0)
        direction = grad + chi * project_tangent(theta, previous_direction)
        if float(np.real(grad.conj() @ direction)) <= 0.0:
            direction = grad  # restart on a non-ascent direction

    slope = float(np.real(grad.conj() @ direction))
    value = ris_objective(forms, theta, rho, eta_th)
    if slope <= 0.0:
        return theta, grad, direction, value, 0.0

    start = config.initial_step if initial_step is None else initial_step
    step = start
    for _ in range(config.max_halvings):
        candidate = retract(theta, step * direction)
        cand_value = ris_objective(forms, candidate, rho, eta_th)
        if cand_value >= value + config.armijo_slope * step * slope:
            return candidate, grad, direction, cand_value, step
        step *= config.armijo_shrink

    if not np.array_equal(direction, grad):
        # line-search failure: retry along steepest ascent
        direction = grad
        slope = float(np.real(grad.conj() @ grad))
        step = start
        for _ in range(config.max_halvings):
            candidate = retract(theta, step * direction)
            cand_value = ris_objective(forms, candidate, rho, eta_th)
            if cand_value >= value + config.armijo_slope * step * slope:
                return candidate, grad, direction, cand_value, step
            step *= config.armijo_shrink
    return theta, grad, direction, value, 0.0


def solve_ris_forms(forms: QuadraticForms, theta0, rho, eta_th,
                    config: RisConfig | None = None):
    """Maximize the form-based objective from ``theta0``; returns the final
    phases and the objective trace (one entry per accepted point)."""
    config = config or RisConfig()
    theta = np.asarray(theta0, dtype=complex) / np.abs(theta0)
    trace = [ris_objective(forms, theta, rho, eta_th)]
    grad = None
    direction = None
    n = theta.size
    next_step = config.initial_step
    for _ in range(config.max_iterations):
        theta_new, grad, direction, value, accepted = rcg_step(
            forms, theta, rho, eta_th, grad, direction, config, next_step
        )
        if float(np.linalg.norm(grad)) / np.sqrt(n) <= config.gradient_tolerance:
            theta = theta_new
            trace.append(value)
            break
        if accepted == 0.0:
            break
        # warm-start the next search just above the accepted step
        next_step = min(accepted / config.armijo_shrink, config.initial_step)
        theta = theta_new
        trace.append(value)
    return theta, trace


def solve_ris(scenario: Scenario, state: SolutionState,
              config: RisConfig | None = None) -> NDArray[np.complex128]:
    """Run the passive-beamforming block from ``state.ris_phases``."""
    forms = build_quadratics(scenario, state)
    theta, _ = solve_ris_forms(
        forms,
        state.ris_phases,
        state.penalty_weight,
        scenario.mse_threshold,
        config,
    )
    return theta
