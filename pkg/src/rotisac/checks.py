"""Self-contained diagnostic suites: finite-difference verification of every
analytic gradient, sampled Lipschitz/majorizer inequalities, and solver
certificates (power/KKT, manifold feasibility, box stationarity). Used by
the ``check`` CLI subcommand; the test suite exercises the same properties
at larger sample counts.
"""

from __future__ import annotations

import numpy as np

from . import geometry
from .ao import AoConfig, initial_state
from .channel import (
    ScenarioConfig,
    channel_snapshot,
    effective_channels,
    sample_scenario,
    sensing_jacobians,
    sensing_steering_all,
    user_channel_jacobians,
)
from .metrics import noise_variances
from .precoder import (
    PrecoderConfig,
    assemble_qcqp_data,
    build_surrogate,
    lipschitz_constants,
    mm_gradients,
    qt_auxiliaries,
    solve_precoder,
    water_filling,
)
from .ris import RisConfig, build_quadratics, euclidean_gradient, ris_objective, riemannian_gradient, solve_ris_forms
from .rotation import (
    RotationConfig,
    StackedBox,
    objective_and_gradient,
    projected_gradient_mapping,
    solve_rotations,
    stack_rotations,
)

FD_STEP = 1e-6


def _random_unit(rng):
    v = rng.standard_normal(3)
    return v / np.linalg.norm(v)


def smooth_rotations(scenario, rng, margin=5e-2, max_tries=200):
    """Draw interior rotations whose every involved direction stays clear of
    the directivity boundary by at least ``margin``."""
    dirs_bs = []
    dirs_ris = []
    for u in scenario.users:
        dirs_bs.append(geometry.direction_vectors(u.bu_elevations, u.bu_azimuths))
        dirs_ris.append(geometry.direction_vectors(u.ru_elevations, u.ru_azimuths))
    dirs_bs.append(
        geometry.direction_vectors(scenario.bridge.br_elevations, scenario.bridge.br_azimuths)
    )
    dirs_ris.append(
        geometry.direction_vectors(scenario.bridge.rb_elevations, scenario.bridge.rb_azimuths)
    )
    dirs_bs.append(
        geometry.direction_vectors(scenario.sensing.bt_elevations, scenario.sensing.bt_azimuths)
    )
    dirs_ris.append(
        geometry.direction_vectors(scenario.sensing.rt_elevations, scenario.sensing.rt_azimuths)
    )
    dirs_bs = np.vstack(dirs_bs)
    dirs_ris = np.vstack(dirs_ris)
    lo_b = scenario.bs_rotation_box.lower + 2 * FD_STEP
    hi_b = scenario.bs_rotation_box.upper - 2 * FD_STEP
    lo_r = scenario.ris_rotation_box.lower + 2 * FD_STEP
    hi_r = scenario.ris_rotation_box.upper - 2 * FD_STEP
    for _ in range(max_tries):
        r_bs = rng.uniform(lo_b, np.maximum(lo_b, hi_b))
        r_ris = rng.uniform(lo_r, np.maximum(lo_r, hi_r))
        margin_bs = np.min(np.abs(dirs_bs @ geometry.boresight(r_bs)))
        margin_ris = np.min(np.abs(dirs_ris @ geometry.boresight(r_ris)))
        if min(margin_bs, margin_ris) > margin:
            return r_bs, r_ris
    raise RuntimeError("could not find a smooth rotation sample")


def _relative_error(fd, analytic):
    scale = max(np.max(np.abs(fd)), np.max(np.abs(analytic)), 1e-9)
    return float(np.max(np.abs(fd - analytic)) / scale)


def check_rotation_matrix_partials(num_points=50, seed=0, tol=1e-5):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(num_points):
        angles = rng.uniform(-np.pi, np.pi, 3)
        partials = geometry.rotation_matrix_partials(angles)
        for i in range(3):
            e = np.zeros(3)
            e[i] = FD_STEP
            fd = (
                geometry.rotation_matrix(angles + e) - geometry.rotation_matrix(angles - e)
            ) / (2 * FD_STEP)
            worst = max(worst, _relative_error(fd, partials[i]))
    return worst <= tol, f"rotation-matrix partials: max rel err {worst:.2e}"


def check_steering_jacobian(num_points=50, seed=1, tol=1e-5):
    rng = np.random.default_rng(seed)
    spec = geometry.ArraySpec(rows=2, cols=3, element_spacing=0.05, wavelength=0.1)
    worst = 0.0
    for _ in range(num_points):
        angles = rng.uniform(-1.2, 1.2, 3)
        u = _random_unit(rng)
        jac = geometry.steering_jacobian(spec, angles, u)
        for i in range(3):
            e = np.zeros(3)
            e[i] = FD_STEP
            fd = (
                geometry.steering_vector(spec, angles + e, u)
                - geometry.steering_vector(spec, angles - e, u)
            ) / (2 * FD_STEP)
            worst = max(worst, _relative_error(fd, jac[:, i]))
    return worst <= tol, f"steering Jacobians: max rel err {worst:.2e}"


def check_directivity_gradient(num_points=50, seed=2, tol=1e-5):
    rng = np.random.default_rng(seed)
    spec = geometry.ArraySpec(
        rows=2, cols=2, element_spacing=0.05, wavelength=0.1, max_gain=2.0,
        directivity_exponent=2.0,
    )
    worst = 0.0
    tested = 0
    while tested < num_points:
        angles = rng.uniform(-1.2, 1.2, 3)
        u = _random_unit(rng)
        if abs(geometry.boresight(angles) @ u) <= 1e-3:
            continue
        tested += 1
        grad = geometry.directivity_gradient(spec, angles, u)
        fd = np.zeros(3)
        for i in range(3):
            e = np.zeros(3)
            e[i] = FD_STEP
            fd[i] = (
                geometry.directivity_gain(spec, angles + e, u)
                - geometry.directivity_gain(spec, angles - e, u)
            ) / (2 * FD_STEP)
        worst = max(worst, _relative_error(fd, grad))
    return worst <= tol, f"directivity gradients: max rel err {worst:.2e}"


def check_channel_jacobians(num_points=50, seed=3, tol=1e-4):
    scenario = sample_scenario(ScenarioConfig(), seed=seed)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for point in range(num_points):
        r_bs, r_ris = smooth_rotations(scenario, rng)
        theta = np.exp(1j * rng.uniform(0, 2 * np.pi, scenario.num_ris_elements))
        _, jac_f = user_channel_jacobians(scenario, r_bs, r_ris, theta)
        _, jac_s = sensing_jacobians(scenario, r_bs, r_ris, theta)
        r0 = stack_rotations(r_bs, r_ris)
        k = int(rng.integers(scenario.num_users))
        a = int(rng.integers(scenario.num_grid_points))
        for i in range(6):
            e = np.zeros(6)
            e[i] = FD_STEP
            fp, sp = channel_snapshot(scenario, (r0 + e)[:3], (r0 + e)[3:], theta)
            fm, sm = channel_snapshot(scenario, (r0 - e)[:3], (r0 - e)[3:], theta)
            worst = max(worst, _relative_error((fp[:, k] - fm[:, k]) / (2 * FD_STEP), jac_f[k, :, i]))
            worst = max(worst, _relative_error((sp[:, a] - sm[:, a]) / (2 * FD_STEP), jac_s[:, a, i]))
    return worst <= tol, f"channel Jacobians: max rel err {worst:.2e}"


def check_mm_gradient(num_points=50, seed=4, tol=1e-5):
    scenario = sample_scenario(ScenarioConfig(), seed=seed)
    rng = np.random.default_rng(seed)
    f_s = sensing_steering_all(
        scenario, np.zeros(3), np.zeros(3), np.ones(scenario.num_ris_elements)
    )
    desired = scenario.sensing.grid.desired
    worst = 0.0
    shape = (scenario.num_bs_antennas, scenario.num_beams)
    for _ in range(num_points):
        w = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * 0.2
        a = int(rng.integers(scenario.num_grid_points))
        grad = mm_gradients(f_s, desired, w)[a]

        def g_a(mat):
            power = float(np.linalg.norm(mat.conj().T @ f_s[:, a]) ** 2)
            return (power - desired[a]) ** 2

        fd = np.zeros_like(w)
        for idx in np.ndindex(*shape):
            for dv in (1.0, 1j):
                e = np.zeros_like(w)
                e[idx] = dv * FD_STEP
                deriv = (g_a(w + e) - g_a(w - e)) / (2 * FD_STEP)
                fd[idx] += deriv * dv
        worst = max(worst, _relative_error(fd, grad))
    return worst <= tol, f"penalty-error gradients: max rel err {worst:.2e}"


def check_ris_gradient(num_points=50, seed=5, tol=1e-4):
    scenario = sample_scenario(ScenarioConfig(), seed=seed)
    rng = np.random.default_rng(seed)
    config = AoConfig()
    state = initial_state(scenario, config)
    state.penalty_weight = 4.0
    forms = build_quadratics(scenario, state)
    worst = 0.0
    for _ in range(num_points):
        theta = np.exp(1j * rng.uniform(0, 2 * np.pi, scenario.num_ris_elements))
        grad = euclidean_gradient(forms, theta, 4.0, scenario.mse_threshold)
        n = int(rng.integers(theta.size))
        for dv in (1.0, 1j):
            e = np.zeros_like(theta)
            e[n] = dv * FD_STEP
            fd = (
                ris_objective(forms, theta + e, 4.0, scenario.mse_threshold)
                - ris_objective(forms, theta - e, 4.0, scenario.mse_threshold)
            ) / (2 * FD_STEP)
            analytic = float(np.real(np.conj(grad[n]) * dv))
            scale = max(abs(fd), np.max(np.abs(grad)) * 1e-3, 1e-9)
            worst = max(worst, abs(fd - analytic) / scale)
    return worst <= tol, f"phase-vector gradients: max rel err {worst:.2e}"


def check_rotation_gradient(num_points=50, seed=6, tol=1e-4):
    scenario = sample_scenario(ScenarioConfig(), seed=seed)
    rng = np.random.default_rng(seed)
    config = AoConfig()
    state = initial_state(scenario, config)
    w = state.precoder
    worst = 0.0
    for _ in range(num_points):
        r_bs, r_ris = smooth_rotations(scenario, rng)
        theta = np.exp(1j * rng.uniform(0, 2 * np.pi, scenario.num_ris_elements))
        r0 = stack_rotations(r_bs, r_ris)
        value, grad = objective_and_gradient(scenario, w, theta, r0, rho=4.0)
        for i in range(6):
            e = np.zeros(6)
            e[i] = FD_STEP
            vp, _ = objective_and_gradient(scenario, w, theta, r0 + e, rho=4.0)
            vm, _ = objective_and_gradient(scenario, w, theta, r0 - e, rho=4.0)
            fd = (vp - vm) / (2 * FD_STEP)
            scale = max(abs(fd), float(np.max(np.abs(grad))) * 1e-3, 1e-9)
            worst = max(worst, abs(fd - grad[i]) / scale)
    return worst <= tol, f"rotation gradients: max rel err {worst:.2e}"


def check_lipschitz(num_pairs=1000, seed=7):
    scenario = sample_scenario(ScenarioConfig(), seed=seed)
    rng = np.random.default_rng(seed)
    f_s = sensing_steering_all(
        scenario, np.zeros(3), np.zeros(3), np.ones(scenario.num_ris_elements)
    )
    desired = scenario.sensing.grid.desired
    budget = scenario.power_budget
    lips = lipschitz_constants(f_s, desired, budget)
    shape = (scenario.num_bs_antennas, scenario.num_beams)

    def sample_in_ball():
        w = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        norm = np.linalg.norm(w)
        radius = np.sqrt(budget) * rng.uniform(0, 1) ** 0.25
        return w * (radius / norm)

    ok = True
    margin = np.inf
    for _ in range(num_pairs):
        w1, w2 = sample_in_ball(), sample_in_ball()
        a = int(rng.integers(scenario.num_grid_points))
        g1 = mm_gradients(f_s, desired, w1)[a]
        g2 = mm_gradients(f_s, desired, w2)[a]
        lhs = float(np.linalg.norm(g1 - g2))
        rhs = lips[a] * float(np.linalg.norm(w1 - w2))
        margin = min(margin, rhs - lhs)
        if lhs > rhs * (1 + 1e-10):
            ok = False
    return ok, f"sampled Lipschitz inequality: min slack {margin:.3e}"


def check_surrogate_dominance(num_samples=500, seed=8, tol=1e-9):
    scenario = sample_scenario(ScenarioConfig(), seed=seed)
    rng = np.random.default_rng(seed)
    f_s = sensing_steering_all(
        scenario, np.zeros(3), np.zeros(3), np.ones(scenario.num_ris_elements)
    )
    desired = scenario.sensing.grid.desired
    budget = scenario.power_budget
    shape = (scenario.num_bs_antennas, scenario.num_beams)
    anchor = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    anchor *= np.sqrt(budget) / np.linalg.norm(anchor) * 0.8
    surrogate = build_surrogate(f_s, desired, budget, anchor)
    anchor_gap = np.max(
        np.abs(surrogate.surrogate_values(anchor) - surrogate.error_values(anchor))
    )
    ok = anchor_gap <= tol
    worst = -np.inf
    for _ in range(num_samples):
        w = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        w *= np.sqrt(budget) / np.linalg.norm(w) * rng.uniform(0, 1)
        gap = surrogate.error_values(w) - surrogate.surrogate_values(w)
        worst = max(worst, float(np.max(gap)))
        if np.any(gap > tol):
            ok = False
    return ok, f"majorizer dominance: anchor gap {anchor_gap:.1e}, worst overshoot {worst:.1e}"


def check_solver_certificates(seed=9):
    scenario = sample_scenario(ScenarioConfig(), seed=seed)
    config = AoConfig()
    state = initial_state(scenario, config)
    state.penalty_weight = 5.0
    notes = []
    ok = True

    # Water-filling: power feasibility + KKT residual
    f = effective_channels(scenario, state.bs_angles, state.ris_angles, state.ris_phases)
    f_s = sensing_steering_all(scenario, state.bs_angles, state.ris_angles, state.ris_phases)
    aux = qt_auxiliaries(f, state.precoder, noise_variances(scenario))
    surrogate = build_surrogate(f_s, scenario.sensing.grid.desired, scenario.power_budget, state.precoder)
    data = assemble_qcqp_data(
        f, noise_variances(scenario), aux, surrogate, 5.0, True, scenario.mse_threshold
    )
    w, nu = water_filling(data, scenario.power_budget)
    power = float(np.linalg.norm(w) ** 2)
    kkt = float(np.linalg.norm(-data.q @ w + data.p - nu * w))
    kkt_scale = max(1.0, float(np.linalg.norm(data.p)))
    power_ok = power <= scenario.power_budget * (1 + 1e-8)
    if nu > 0:
        power_ok = power_ok and abs(power - scenario.power_budget) <= 1e-8 * scenario.power_budget
    if not power_ok or kkt > 1e-6 * kkt_scale:
        ok = False
    notes.append(f"water-filling power {power:.9f}, kkt residual {kkt/kkt_scale:.1e}")

    # Phase solver: manifold feasibility + tangent gradient
    state.precoder = solve_precoder(scenario, state, config.precoder)
    forms = build_quadratics(scenario, state)
    theta, _ = solve_ris_forms(forms, state.ris_phases, 5.0, scenario.mse_threshold, config.ris)
    unit_err = float(np.max(np.abs(np.abs(theta) - 1.0)))
    rgrad = riemannian_gradient(forms, theta, 5.0, scenario.mse_threshold)
    tangent_err = float(np.max(np.abs(np.real(rgrad * theta.conj()))))
    if unit_err > 1e-12 or tangent_err > 1e-10 * max(1.0, float(np.max(np.abs(rgrad)))):
        ok = False
    notes.append(f"phases unit-modulus err {unit_err:.1e}, tangent err {tangent_err:.1e}")

    # Rotation solver: feasibility + projected-gradient norm at solution
    state.ris_phases = theta
    box = StackedBox.from_scenario(scenario)
    r = solve_rotations(scenario, state, config.rotation)
    feasible = np.all(r >= box.lower) and np.all(r <= box.upper)
    _, grad = objective_and_gradient(scenario, state.precoder, theta, r, 5.0)
    mapping = float(np.linalg.norm(projected_gradient_mapping(grad, r, box)))
    if not feasible:
        ok = False
    notes.append(f"rotations in box: {bool(feasible)}, projected-gradient norm {mapping:.1e}")
    return ok, "; ".join(notes)


ALL_CHECKS = (
    ("rotation_matrix_partials", check_rotation_matrix_partials),
    ("steering_jacobian", check_steering_jacobian),
    ("directivity_gradient", check_directivity_gradient),
    ("channel_jacobians", check_channel_jacobians),
    ("mm_gradient", check_mm_gradient),
    ("ris_gradient", check_ris_gradient),
    ("rotation_gradient", check_rotation_gradient),
    ("lipschitz", check_lipschitz),
    ("surrogate_dominance", check_surrogate_dominance),
    ("solver_certificates", check_solver_certificates),
)


def run_all_checks(verbose=True):
    """Run every diagnostic; returns True only if all pass."""
    all_ok = True
    for name, fn in ALL_CHECKS:
        ok, detail = fn()
        all_ok = all_ok and ok
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return all_ok
