"""Random multipath scenarios and rotation-dependent channel synthesis.

A :class:`Scenario` holds everything sampled once per realization: the two
array specs, per-user path angles/gains toward the base station and the
reflecting surface, the bridge (BS-RIS) path pairs, the sensing grid with
its desired spotlight pattern, and the optimization constants. All channel
synthesis is a pure function of a scenario plus the current rotation angles
and surface phases, so scenarios can be shared freely across solvers.

Complex path gains are circularly-symmetric Gaussian with per-link variance
1/(number of paths on that link), making the average total link power one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np
from numpy.typing import NDArray

from .geometry import (
    ArraySpec,
    RotationBox,
    direction_vectors,
    rotation_matrix_partials,
    sqrt_gains_with_gradients,
    steering_jacobians,
    steering_matrix,
    directivity_gains,
)

AZIMUTH_RANGE = (-np.pi, np.pi)
ELEVATION_RANGE = (-np.pi / 3.0, np.pi / 3.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * np.log10(watts) + 30.0


@dataclass
class UserPaths:
    """Sampled propagation paths of one user (BS side and RIS side)."""

    bu_gains: NDArray[np.complex128]
    bu_elevations: NDArray[np.float64]
    bu_azimuths: NDArray[np.float64]
    ru_gains: NDArray[np.complex128]
    ru_elevations: NDArray[np.float64]
    ru_azimuths: NDArray[np.float64]
    noise_variance: float


@dataclass
class BridgePaths:
    """BS-RIS path pairs: one shared complex gain per pair, independent
    departure (BR) and arrival (RB) angle pairs."""

    gains: NDArray[np.complex128]
    br_elevations: NDArray[np.float64]
    br_azimuths: NDArray[np.float64]
    rb_elevations: NDArray[np.float64]
    rb_azimuths: NDArray[np.float64]


@dataclass
class SensingGrid:
    """Sampled sensing directions with the 0/1 desired spotlight pattern."""

    elevations: NDArray[np.float64]
    azimuths: NDArray[np.float64]
    desired: NDArray[np.float64]
    focused: NDArray[np.intp]

    def __post_init__(self):
        self.elevations = np.asarray(self.elevations, dtype=float)
        self.azimuths = np.asarray(self.azimuths, dtype=float)
        self.desired = np.asarray(self.desired, dtype=float)
        self.focused = np.asarray(self.focused, dtype=np.intp)
        want = np.zeros(self.elevations.size)
        want[self.focused] = 1.0
        if not np.array_equal(want, self.desired):
            raise ValueError("desired pattern must be 1 exactly on the focused set")

    @property
    def size(self) -> int:
        return int(self.elevations.size)


@dataclass
class SensingData:
    """Sensing grid plus per-direction echo gains and link angles."""

    grid: SensingGrid
    bs_gains: NDArray[np.complex128]
    ris_gains: NDArray[np.complex128]
    bt_elevations: NDArray[np.float64]
    bt_azimuths: NDArray[np.float64]
    rt_elevations: NDArray[np.float64]
    rt_azimuths: NDArray[np.float64]


@dataclass
class Scenario:
    """One sampled realization of the whole environment."""

    bs_spec: ArraySpec
    ris_spec: ArraySpec
    users: list[UserPaths]
    bridge: BridgePaths
    sensing: SensingData
    power_budget: float
    mse_threshold: float
    bs_rotation_box: RotationBox
    ris_rotation_box: RotationBox
    rng_seed: int

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def num_bs_antennas(self) -> int:
        return self.bs_spec.size

    @property
    def num_ris_elements(self) -> int:
        return self.ris_spec.size

    @property
    def num_grid_points(self) -> int:
        return self.sensing.grid.size

    @property
    def num_beams(self) -> int:
        """Total precoder columns: K communication + M sensing."""
        return self.num_users + self.num_bs_antennas

    def without_ris_user_links(self) -> "Scenario":
        """Copy with all RIS-side path gains zeroed (No-RIS baselines)."""
        users = [
            UserPaths(
                u.bu_gains.copy(),
                u.bu_elevations.copy(),
                u.bu_azimuths.copy(),
                np.zeros_like(u.ru_gains),
                u.ru_elevations.copy(),
                u.ru_azimuths.copy(),
                u.noise_variance,
            )
            for u in self.users
        ]
        sens = SensingData(
            grid=self.sensing.grid,
            bs_gains=self.sensing.bs_gains.copy(),
            ris_gains=np.zeros_like(self.sensing.ris_gains),
            bt_elevations=self.sensing.bt_elevations.copy(),
            bt_azimuths=self.sensing.bt_azimuths.copy(),
            rt_elevations=self.sensing.rt_elevations.copy(),
            rt_azimuths=self.sensing.rt_azimuths.copy(),
        )
        return Scenario(
            bs_spec=self.bs_spec,
            ris_spec=self.ris_spec,
            users=users,
            bridge=self.bridge,
            sensing=sens,
            power_budget=self.power_budget,
            mse_threshold=self.mse_threshold,
            bs_rotation_box=self.bs_rotation_box,
            ris_rotation_box=self.ris_rotation_box,
            rng_seed=self.rng_seed,
        )

    def with_mse_threshold(self, threshold: float) -> "Scenario":
        return Scenario(
            bs_spec=self.bs_spec,
            ris_spec=self.ris_spec,
            users=self.users,
            bridge=self.bridge,
            sensing=self.sensing,
            power_budget=self.power_budget,
            mse_threshold=float(threshold),
            bs_rotation_box=self.bs_rotation_box,
            ris_rotation_box=self.ris_rotation_box,
            rng_seed=self.rng_seed,
        )

    def with_rotation_boxes(self, bs_box: RotationBox, ris_box: RotationBox) -> "Scenario":
        return Scenario(
            bs_spec=self.bs_spec,
            ris_spec=self.ris_spec,
            users=self.users,
            bridge=self.bridge,
            sensing=self.sensing,
            power_budget=self.power_budget,
            mse_threshold=self.mse_threshold,
            bs_rotation_box=bs_box,
            ris_rotation_box=ris_box,
            rng_seed=self.rng_seed,
        )


@dataclass
class ScenarioConfig:
    """Knobs controlling :func:`sample_scenario`. Defaults follow the
    reference low-altitude setup: 2x2 BS and 6x6 RIS half-wavelength arrays
    at 0.1 m wavelength, RIS centered at (10, 0, 0) m, two users with two
    paths per link, 30 dBm budget, noise 1e-6 W, a 11x6 sensing grid with
    two spotlight points, and an MSE threshold of 0.2."""

    num_users: int = 2
    bs_rows: int = 2
    bs_cols: int = 2
    ris_rows: int = 6
    ris_cols: int = 6
    wavelength: float = 0.1
    spacing_factor: float = 0.5
    bs_center: tuple = (0.0, 0.0, 0.0)
    ris_center: tuple = (10.0, 0.0, 0.0)
    num_bs_user_paths: int = 2
    num_ris_user_paths: int = 2
    num_bridge_paths: int = 2
    noise_variance: float = 1e-6
    power_budget_dbm: float = 30.0
    mse_threshold: float = 0.2
    bs_max_gain: float = 2.0
    ris_max_gain: float = 2.0
    bs_directivity_exponent: float = 2.0
    ris_directivity_exponent: float = 2.0
    grid_azimuths: int = 11
    grid_elevations: int = 6
    grid_azimuth_range: tuple = (-np.pi, np.pi)
    grid_elevation_range: tuple = (-np.pi / 4.0, np.pi / 4.0)
    num_spotlights: int = 2
    bs_rotation_range_deg: float = 90.0
    ris_rotation_range_deg: float = 90.0

    def validate(self):
        positive = {
            "num_users": self.num_users,
            "bs_rows": self.bs_rows,
            "bs_cols": self.bs_cols,
            "ris_rows": self.ris_rows,
            "ris_cols": self.ris_cols,
            "num_bs_user_paths": self.num_bs_user_paths,
            "num_ris_user_paths": self.num_ris_user_paths,
            "num_bridge_paths": self.num_bridge_paths,
            "grid_azimuths": self.grid_azimuths,
            "grid_elevations": self.grid_elevations,
        }
        for name, value in positive.items():
            if int(value) < 1:
                raise ValueError(f"{name} must be a positive integer, got {value}")
        if self.noise_variance <= 0:
            raise ValueError("noise_variance must be > 0")
        if self.mse_threshold <= 0:
            raise ValueError("mse_threshold must be > 0")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be > 0")
        grid = self.grid_azimuths * self.grid_elevations
        if not (0 < self.num_spotlights <= grid):
            raise ValueError("num_spotlights must lie in (0, grid size]")

    @property
    def power_budget_watts(self) -> float:
        return dbm_to_watts(self.power_budget_dbm)


def _complex_gains(rng: np.random.Generator, count: int, variance: float):
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(count) + 1j * rng.standard_normal(count))


def _sample_angles(rng: np.random.Generator, count: int):
    az = rng.uniform(*AZIMUTH_RANGE, size=count)
    el = rng.uniform(*ELEVATION_RANGE, size=count)
    return el, az


def sample_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """Draw one scenario; identical ``(config, seed)`` gives identical bits.

    Path azimuths are uniform on [-pi, pi] and elevations uniform on
    [-pi/3, pi/3]; gains are complex Gaussian with variance 1/(path count).
    The sensing grid spans the configured azimuth/elevation ranges uniformly
    and the spotlight set is drawn without replacement.
    """
    config.validate()
    rng = np.random.default_rng(seed)

    bs_spec = ArraySpec(
        rows=config.bs_rows,
        cols=config.bs_cols,
        element_spacing=config.spacing_factor * config.wavelength,
        wavelength=config.wavelength,
        center=np.asarray(config.bs_center, dtype=float),
        max_gain=config.bs_max_gain,
        directivity_exponent=config.bs_directivity_exponent,
    )
    ris_spec = ArraySpec(
        rows=config.ris_rows,
        cols=config.ris_cols,
        element_spacing=config.spacing_factor * config.wavelength,
        wavelength=config.wavelength,
        center=np.asarray(config.ris_center, dtype=float),
        max_gain=config.ris_max_gain,
        directivity_exponent=config.ris_directivity_exponent,
    )

    users = []
    for _ in range(config.num_users):
        bu_el, bu_az = _sample_angles(rng, config.num_bs_user_paths)
        bu_gains = _complex_gains(rng, config.num_bs_user_paths, 1.0 / config.num_bs_user_paths)
        ru_el, ru_az = _sample_angles(rng, config.num_ris_user_paths)
        ru_gains = _complex_gains(rng, config.num_ris_user_paths, 1.0 / config.num_ris_user_paths)
        users.append(
            UserPaths(
                bu_gains=bu_gains,
                bu_elevations=bu_el,
                bu_azimuths=bu_az,
                ru_gains=ru_gains,
                ru_elevations=ru_el,
                ru_azimuths=ru_az,
                noise_variance=config.noise_variance,
            )
        )

    br_el, br_az = _sample_angles(rng, config.num_bridge_paths)
    rb_el, rb_az = _sample_angles(rng, config.num_bridge_paths)
    bridge = BridgePaths(
        gains=_complex_gains(rng, config.num_bridge_paths, 1.0 / config.num_bridge_paths),
        br_elevations=br_el,
        br_azimuths=br_az,
        rb_elevations=rb_el,
        rb_azimuths=rb_az,
    )

    az = np.linspace(*config.grid_azimuth_range, config.grid_azimuths)
    el = np.linspace(*config.grid_elevation_range, config.grid_elevations)
    grid_el, grid_az = np.meshgrid(el, az, indexing="ij")
    grid_el = grid_el.ravel()
    grid_az = grid_az.ravel()
    total = grid_el.size
    focused = np.sort(rng.choice(total, size=config.num_spotlights, replace=False))
    desired = np.zeros(total)
    desired[focused] = 1.0
    grid = SensingGrid(elevations=grid_el, azimuths=grid_az, desired=desired, focused=focused)

    sensing = SensingData(
        grid=grid,
        bs_gains=_complex_gains(rng, total, 1.0),
        ris_gains=_complex_gains(rng, total, 1.0),
        bt_elevations=grid_el.copy(),
        bt_azimuths=grid_az.copy(),
        rt_elevations=grid_el.copy(),
        rt_azimuths=grid_az.copy(),
    )

    bs_box = RotationBox.symmetric(np.deg2rad(config.bs_rotation_range_deg))
    ris_box = RotationBox.symmetric(np.deg2rad(config.ris_rotation_range_deg))

    return Scenario(
        bs_spec=bs_spec,
        ris_spec=ris_spec,
        users=users,
        bridge=bridge,
        sensing=sensing,
        power_budget=config.power_budget_watts,
        mse_threshold=config.mse_threshold,
        bs_rotation_box=bs_box,
        ris_rotation_box=ris_box,
        rng_seed=int(seed),
    )


# ---------------------------------------------------------------------------
# Channel synthesis
# ---------------------------------------------------------------------------


def user_channel(scenario: Scenario, k: int, r_bs) -> NDArray[np.complex128]:
    """Direct BS-to-user channel ``h_k = sum_l a_l sqrt(G_l) t_l``, (M,)."""
    user = scenario.users[k]
    dirs = direction_vectors(user.bu_elevations, user.bu_azimuths)
    gains = directivity_gains(scenario.bs_spec, r_bs, dirs)
    t = steering_matrix(scenario.bs_spec, r_bs, dirs)
    return t @ (user.bu_gains * np.sqrt(gains))


def ris_user_channel(scenario: Scenario, k: int, r_ris) -> NDArray[np.complex128]:
    """RIS-to-user channel ``g_k``, (N,)."""
    user = scenario.users[k]
    dirs = direction_vectors(user.ru_elevations, user.ru_azimuths)
    gains = directivity_gains(scenario.ris_spec, r_ris, dirs)
    t = steering_matrix(scenario.ris_spec, r_ris, dirs)
    return t @ (user.ru_gains * np.sqrt(gains))


def bs_ris_channel(scenario: Scenario, r_bs, r_ris) -> NDArray[np.complex128]:
    """Bridge channel ``B = sum_p b_p sqrt(G_p^B G_p^R) t_p^BR (t_p^RB)^H``,
    an (M, N) matrix of rank at most P."""
    bridge = scenario.bridge
    br_dirs = direction_vectors(bridge.br_elevations, bridge.br_azimuths)
    rb_dirs = direction_vectors(bridge.rb_elevations, bridge.rb_azimuths)
    g_bs = directivity_gains(scenario.bs_spec, r_bs, br_dirs)
    g_ris = directivity_gains(scenario.ris_spec, r_ris, rb_dirs)
    t_br = steering_matrix(scenario.bs_spec, r_bs, br_dirs)  # (M, P)
    t_rb = steering_matrix(scenario.ris_spec, r_ris, rb_dirs)  # (N, P)
    weights = bridge.gains * np.sqrt(g_bs * g_ris)
    return (t_br * weights[None, :]) @ t_rb.conj().T


def effective_channel(scenario: Scenario, k: int, r_bs, r_ris, theta) -> NDArray[np.complex128]:
    """Composite downlink channel ``f_k = h_k + B diag(theta) g_k``, (M,)."""
    h = user_channel(scenario, k, r_bs)
    b = bs_ris_channel(scenario, r_bs, r_ris)
    g = ris_user_channel(scenario, k, r_ris)
    return h + b @ (np.asarray(theta) * g)


def effective_channels(scenario: Scenario, r_bs, r_ris, theta) -> NDArray[np.complex128]:
    """All composite user channels stacked as an (M, K) matrix."""
    b = bs_ris_channel(scenario, r_bs, r_ris)
    theta = np.asarray(theta)
    cols = [
        user_channel(scenario, k, r_bs) + b @ (theta * ris_user_channel(scenario, k, r_ris))
        for k in range(scenario.num_users)
    ]
    return np.stack(cols, axis=1)


def _sensing_components(scenario: Scenario, r_bs, r_ris):
    """Direct term D (M, A) and pre-phase RIS term V (N, A) of the sensing
    steering: ``f_S,a = D[:, a] + B diag(theta) V[:, a]``."""
    sens = scenario.sensing
    bt_dirs = direction_vectors(sens.bt_elevations, sens.bt_azimuths)
    rt_dirs = direction_vectors(sens.rt_elevations, sens.rt_azimuths)
    g_bt = directivity_gains(scenario.bs_spec, r_bs, bt_dirs)
    g_rt = directivity_gains(scenario.ris_spec, r_ris, rt_dirs)
    t_bt = steering_matrix(scenario.bs_spec, r_bs, bt_dirs)  # (M, A)
    t_rt = steering_matrix(scenario.ris_spec, r_ris, rt_dirs)  # (N, A)
    direct = t_bt * (sens.bs_gains * np.sqrt(g_bt))[None, :]
    ris_side = t_rt * (sens.ris_gains * np.sqrt(g_rt))[None, :]
    return direct, ris_side


def sensing_steering_all(scenario: Scenario, r_bs, r_ris, theta) -> NDArray[np.complex128]:
    """Effective sensing steering vectors for every grid direction, (M, A)."""
    direct, ris_side = _sensing_components(scenario, r_bs, r_ris)
    b = bs_ris_channel(scenario, r_bs, r_ris)
    return direct + b @ (np.asarray(theta)[:, None] * ris_side)


def sensing_steering(scenario: Scenario, a: int, r_bs, r_ris, theta) -> NDArray[np.complex128]:
    """Effective sensing steering toward grid direction ``a``, (M,)."""
    return sensing_steering_all(scenario, r_bs, r_ris, theta)[:, a]


def channel_snapshot(scenario: Scenario, r_bs, r_ris, theta):
    """All effective channels at one rotation pair in a single pass.

    Returns ``(F (M, K), F_S (M, A))``. Per-user path sums are batched into
    one steering evaluation per array side, which makes this the cheap path
    for line searches that only need objective values.
    """
    theta = np.asarray(theta)
    bs, ris = scenario.bs_spec, scenario.ris_spec
    users = scenario.users

    bu_el = np.concatenate([u.bu_elevations for u in users])
    bu_az = np.concatenate([u.bu_azimuths for u in users])
    bu_gain = np.concatenate([u.bu_gains for u in users])
    ru_el = np.concatenate([u.ru_elevations for u in users])
    ru_az = np.concatenate([u.ru_azimuths for u in users])
    ru_gain = np.concatenate([u.ru_gains for u in users])

    bu_dirs = direction_vectors(bu_el, bu_az)
    ru_dirs = direction_vectors(ru_el, ru_az)
    bu_w = bu_gain * np.sqrt(directivity_gains(bs, r_bs, bu_dirs))
    ru_w = ru_gain * np.sqrt(directivity_gains(ris, r_ris, ru_dirs))
    t_bu = steering_matrix(bs, r_bs, bu_dirs) * bu_w[None, :]
    t_ru = steering_matrix(ris, r_ris, ru_dirs) * ru_w[None, :]

    b = bs_ris_channel(scenario, r_bs, r_ris)
    b_theta = b * theta[None, :]

    k_users = len(users)
    f = np.empty((scenario.num_bs_antennas, k_users), dtype=complex)
    lo_b = lo_r = 0
    for k, u in enumerate(users):
        hi_b = lo_b + u.bu_gains.size
        hi_r = lo_r + u.ru_gains.size
        g = t_ru[:, lo_r:hi_r].sum(axis=1)
        f[:, k] = t_bu[:, lo_b:hi_b].sum(axis=1) + b_theta @ g
        lo_b, lo_r = hi_b, hi_r

    direct, ris_side = _sensing_components(scenario, r_bs, r_ris)
    f_s = direct + b_theta @ ris_side
    return f, f_s


# ---------------------------------------------------------------------------
# Rotation Jacobians
# ---------------------------------------------------------------------------


def _weighted_sum_jacobian(spec: ArraySpec, angles, elevations, azimuths, gains):
    """Channel value and its three-angle Jacobian for a gain-weighted path sum
    ``sum_l gains_l sqrt(G_l) t_l``. Returns (value (V,), jac (V, 3))."""
    dirs = direction_vectors(elevations, azimuths)
    sqrt_g, d_sqrt_g = sqrt_gains_with_gradients(spec, angles, dirs)
    t = steering_matrix(spec, angles, dirs)
    jac_t = steering_jacobians(spec, angles, dirs)
    value = t @ (gains * sqrt_g)
    jac = np.einsum("l,li,vl->vi", gains, d_sqrt_g, t) + np.einsum(
        "l,vli->vi", gains * sqrt_g, jac_t
    )
    return value, jac


def _bridge_with_jacobians(scenario: Scenario, r_bs, r_ris):
    """Bridge matrix B plus its six partial-derivative matrices.

    Returns ``(B, dB_bs (3, M, N), dB_ris (3, M, N))``.
    """
    bridge = scenario.bridge
    br_dirs = direction_vectors(bridge.br_elevations, bridge.br_azimuths)
    rb_dirs = direction_vectors(bridge.rb_elevations, bridge.rb_azimuths)
    sg_b, dsg_b = sqrt_gains_with_gradients(scenario.bs_spec, r_bs, br_dirs)
    sg_r, dsg_r = sqrt_gains_with_gradients(scenario.ris_spec, r_ris, rb_dirs)
    t_br = steering_matrix(scenario.bs_spec, r_bs, br_dirs)  # (M, P)
    t_rb = steering_matrix(scenario.ris_spec, r_ris, rb_dirs)  # (N, P)
    j_br = steering_jacobians(scenario.bs_spec, r_bs, br_dirs)  # (M, P, 3)
    j_rb = steering_jacobians(scenario.ris_spec, r_ris, rb_dirs)  # (N, P, 3)
    b = (t_br * (bridge.gains * sg_b * sg_r)[None, :]) @ t_rb.conj().T

    # d/dr^B: (d sqrtG^B) sqrtG^R t (t')^H + sqrtG^B sqrtG^R (dt) (t')^H
    w_gain = bridge.gains * sg_r  # (P,)
    db_bs = np.einsum("p,pi,mp,np->imn", w_gain, dsg_b, t_br, t_rb.conj()) + np.einsum(
        "p,mpi,np->imn", w_gain * sg_b, j_br, t_rb.conj()
    )
    w_gain = bridge.gains * sg_b
    db_ris = np.einsum("p,pi,mp,np->imn", w_gain, dsg_r, t_br, t_rb.conj()) + np.einsum(
        "p,mp,npi->imn", w_gain * sg_r, t_br, j_rb.conj()
    )
    return b, db_bs, db_ris


def user_channel_jacobians(scenario: Scenario, r_bs, r_ris, theta):
    """Composite-channel Jacobians for all users.

    Returns ``(F (M, K), J (K, M, 6))`` where columns 0-2 of ``J[k]`` are the
    partials w.r.t. the BS angles and columns 3-5 w.r.t. the RIS angles.
    """
    theta = np.asarray(theta)
    b, db_bs, db_ris = _bridge_with_jacobians(scenario, r_bs, r_ris)
    k_users = scenario.num_users
    m = scenario.num_bs_antennas
    f = np.zeros((m, k_users), dtype=complex)
    jac = np.zeros((k_users, m, 6), dtype=complex)
    for k, user in enumerate(scenario.users):
        h, jac_h = _weighted_sum_jacobian(
            scenario.bs_spec, r_bs, user.bu_elevations, user.bu_azimuths, user.bu_gains
        )
        g, jac_g = _weighted_sum_jacobian(
            scenario.ris_spec, r_ris, user.ru_elevations, user.ru_azimuths, user.ru_gains
        )
        tg = theta * g
        f[:, k] = h + b @ tg
        jac[k, :, :3] = jac_h + np.einsum("imn,n->mi", db_bs, tg)
        jac[k, :, 3:] = np.einsum("imn,n->mi", db_ris, tg) + b @ (theta[:, None] * jac_g)
    return f, jac


def sensing_jacobians(scenario: Scenario, r_bs, r_ris, theta):
    """Sensing steering vectors and Jacobians for every grid direction.

    Returns ``(F_S (M, A), J (M, A, 6))`` with the same column convention as
    :func:`user_channel_jacobians`.
    """
    sens = scenario.sensing
    theta = np.asarray(theta)
    b, db_bs, db_ris = _bridge_with_jacobians(scenario, r_bs, r_ris)

    bt_dirs = direction_vectors(sens.bt_elevations, sens.bt_azimuths)
    rt_dirs = direction_vectors(sens.rt_elevations, sens.rt_azimuths)
    sg_bt, dsg_bt = sqrt_gains_with_gradients(scenario.bs_spec, r_bs, bt_dirs)
    sg_rt, dsg_rt = sqrt_gains_with_gradients(scenario.ris_spec, r_ris, rt_dirs)
    t_bt = steering_matrix(scenario.bs_spec, r_bs, bt_dirs)
    t_rt = steering_matrix(scenario.ris_spec, r_ris, rt_dirs)
    j_bt = steering_jacobians(scenario.bs_spec, r_bs, bt_dirs)  # (M, A, 3)
    j_rt = steering_jacobians(scenario.ris_spec, r_ris, rt_dirs)  # (N, A, 3)

    direct = t_bt * (sens.bs_gains * sg_bt)[None, :]  # (M, A)
    ris_side = t_rt * (sens.ris_gains * sg_rt)[None, :]  # (N, A)
    theta_v = theta[:, None] * ris_side  # (N, A)
    f_s = direct + b @ theta_v

    a_count = sens.grid.size
    m = scenario.num_bs_antennas
    jac = np.zeros((m, a_count, 6), dtype=complex)

    # BS angles: derivative of the direct term plus dB/dr^B acting on the
    # (fixed) RIS-side vector.
    d_direct = np.einsum("a,ai,ma->mai", sens.bs_gains, dsg_bt, t_bt) + np.einsum(
        "a,mai->mai", sens.bs_gains * sg_bt, j_bt
    )
    jac[:, :, :3] = d_direct + np.einsum("imn,na->mai", db_bs, theta_v)

    # RIS angles: dB/dr^R on the RIS-side vector plus B acting on the
    # derivative of the RIS-side vector.
    d_ris_side = np.einsum("a,ai,na->nai", sens.ris_gains, dsg_rt, t_rt) + np.einsum(
        "a,nai->nai", sens.ris_gains * sg_rt, j_rt
    )
    jac[:, :, 3:] = np.einsum("imn,na->mai", db_ris, theta_v) + np.einsum(
        "mn,n,nai->mai", b, theta, d_ris_side
    )
    return f_s, jac


def channel_jacobians(scenario: Scenario, index: int, r_bs, r_ris, theta, *, link: str = "user"):
    """Single-link Jacobian as an (M, 6) matrix.

    ``link='user'`` differentiates the composite channel of user ``index``;
    ``link='sensing'`` the effective sensing steering of grid point
    ``index``. Columns 0-2 are BS-angle partials, 3-5 RIS-angle partials.
    """
    if link == "user":
        _, jac = user_channel_jacobians(scenario, r_bs, r_ris, theta)
        return jac[index]
    if link == "sensing":
        _, jac = sensing_jacobians(scenario, r_bs, r_ris, theta)
        return jac[:, index, :]
    raise ValueError(f"unknown link type {link!r}")


# ---------------------------------------------------------------------------
# JSON serialization (regression fixtures)
# ---------------------------------------------------------------------------


def _complex_list(values) -> list:
    arr = np.asarray(values, dtype=complex)
    return [[float(v.real), float(v.imag)] for v in arr.ravel()]


def _complex_array(pairs) -> NDArray[np.complex128]:
    return np.array([complex(re, im) for re, im in pairs], dtype=complex)


def _spec_to_dict(spec: ArraySpec) -> dict:
    return {
        "rows": spec.rows,
        "cols": spec.cols,
        "element_spacing": spec.element_spacing,
        "wavelength": spec.wavelength,
        "center": list(map(float, spec.center)),
        "max_gain": spec.max_gain,
        "directivity_exponent": spec.directivity_exponent,
        "local_offsets": [list(map(float, row)) for row in spec.local_offsets],
    }


def _spec_from_dict(d: dict) -> ArraySpec:
    return ArraySpec(
        rows=d["rows"],
        cols=d["cols"],
        element_spacing=d["element_spacing"],
        wavelength=d["wavelength"],
        center=np.asarray(d["center"]),
        max_gain=d["max_gain"],
        directivity_exponent=d["directivity_exponent"],
        local_offsets=np.asarray(d["local_offsets"]),
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "bs_spec": _spec_to_dict(scenario.bs_spec),
        "ris_spec": _spec_to_dict(scenario.ris_spec),
        "users": [
            {
                "bu_gains": _complex_list(u.bu_gains),
                "bu_elevations": list(map(float, u.bu_elevations)),
                "bu_azimuths": list(map(float, u.bu_azimuths)),
                "ru_gains": _complex_list(u.ru_gains),
                "ru_elevations": list(map(float, u.ru_elevations)),
                "ru_azimuths": list(map(float, u.ru_azimuths)),
                "noise_variance": u.noise_variance,
            }
            for u in scenario.users
        ],
        "bridge": {
            "gains": _complex_list(scenario.bridge.gains),
            "br_elevations": list(map(float, scenario.bridge.br_elevations)),
            "br_azimuths": list(map(float, scenario.bridge.br_azimuths)),
            "rb_elevations": list(map(float, scenario.bridge.rb_elevations)),
            "rb_azimuths": list(map(float, scenario.bridge.rb_azimuths)),
        },
        "sensing": {
            "grid": {
                "elevations": list(map(float, scenario.sensing.grid.elevations)),
                "azimuths": list(map(float, scenario.sensing.grid.azimuths)),
                "desired": list(map(float, scenario.sensing.grid.desired)),
                "focused": list(map(int, scenario.sensing.grid.focused)),
            },
            "bs_gains": _complex_list(scenario.sensing.bs_gains),
            "ris_gains": _complex_list(scenario.sensing.ris_gains),
            "bt_elevations": list(map(float, scenario.sensing.bt_elevations)),
            "bt_azimuths": list(map(float, scenario.sensing.bt_azimuths)),
            "rt_elevations": list(map(float, scenario.sensing.rt_elevations)),
            "rt_azimuths": list(map(float, scenario.sensing.rt_azimuths)),
        },
        "power_budget": scenario.power_budget,
        "mse_threshold": scenario.mse_threshold,
        "bs_rotation_box": {
            "lower": list(map(float, scenario.bs_rotation_box.lower)),
            "upper": list(map(float, scenario.bs_rotation_box.upper)),
        },
        "ris_rotation_box": {
            "lower": list(map(float, scenario.ris_rotation_box.lower)),
            "upper": list(map(float, scenario.ris_rotation_box.upper)),
        },
        "rng_seed": scenario.rng_seed,
    }


def scenario_from_dict(data: dict) -> Scenario:
    users = [
        UserPaths(
            bu_gains=_complex_array(u["bu_gains"]),
            bu_elevations=np.asarray(u["bu_elevations"]),
            bu_azimuths=np.asarray(u["bu_azimuths"]),
            ru_gains=_complex_array(u["ru_gains"]),
            ru_elevations=np.asarray(u["ru_elevations"]),
            ru_azimuths=np.asarray(u["ru_azimuths"]),
            noise_variance=u["noise_variance"],
        )
        for u in data["users"]
    ]
    bridge = BridgePaths(
        gains=_complex_array(data["bridge"]["gains"]),
        br_elevations=np.asarray(data["bridge"]["br_elevations"]),
        br_azimuths=np.asarray(data["bridge"]["br_azimuths"]),
        rb_elevations=np.asarray(data["bridge"]["rb_elevations"]),
        rb_azimuths=np.asarray(data["bridge"]["rb_azimuths"]),
    )
    grid = SensingGrid(
        elevations=np.asarray(data["sensing"]["grid"]["elevations"]),
        azimuths=np.asarray(data["sensing"]["grid"]["azimuths"]),
        desired=np.asarray(data["sensing"]["grid"]["desired"]),
        focused=np.asarray(data["sensing"]["grid"]["focused"]),
    )
    sensing = SensingData(
        grid=grid,
        bs_gains=_complex_array(data["sensing"]["bs_gains"]),
        ris_gains=_complex_array(data["sensing"]["ris_gains"]),
        bt_elevations=np.asarray(data["sensing"]["bt_elevations"]),
        bt_azimuths=np.asarray(data["sensing"]["bt_azimuths"]),
        rt_elevations=np.asarray(data["sensing"]["rt_elevations"]),
        rt_azimuths=np.asarray(data["sensing"]["rt_azimuths"]),
    )
    return Scenario(
        bs_spec=_spec_from_dict(data["bs_spec"]),
        ris_spec=_spec_from_dict(data["ris_spec"]),
        users=users,
        bridge=bridge,
        sensing=sensing,
        power_budget=data["power_budget"],
        mse_threshold=data["mse_threshold"],
        bs_rotation_box=RotationBox(
            np.asarray(data["bs_rotation_box"]["lower"]),
            np.asarray(data["bs_rotation_box"]["upper"]),
        ),
        ris_rotation_box=RotationBox(
            np.asarray(data["ris_rotation_box"]["lower"]),
            np.asarray(data["ris_rotation_box"]["upper"]),
        ),
        rng_seed=data["rng_seed"],
    )


def scenario_to_json(scenario: Scenario) -> str:
    return json.dumps(scenario_to_dict(scenario))


def scenario_from_json(text: str) -> Scenario:
    return scenario_from_dict(json.loads(text))
