"""Rigid-body rotation math for planar arrays: element positioning, steering
vectors, direction-dependent element gains, and their analytic derivatives
with respect to the Euler rotation angles.

Conventions
-----------
* Euler angles ``[zeta_x, zeta_y, zeta_z]`` follow the intrinsic z-y-x
  convention, ``R = Rx(zeta_x) @ Ry(zeta_y) @ Rz(zeta_z)``.
* A far-field direction with elevation ``el`` (from the x-y plane) and
  azimuth ``az`` (from the x axis) is the unit vector
  ``[cos(el)cos(az), cos(el)sin(az), sin(el)]``.
* The unrotated array boresight is +z. A direction ``u`` lies in the front
  half-space when ``n(r)^T u < 0``; the element gain there is
  ``G0 * (-n^T u)^p`` and zero in the rear half-space.

All functions are pure and accept plain arrays; angles are ``(3,)`` float
vectors, directions ``(3,)`` unit vectors or ``(L, 3)`` stacks of them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray


def rotation_x(angle: float) -> NDArray[np.float64]:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(angle: float) -> NDArray[np.float64]:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(angle: float) -> NDArray[np.float64]:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_x_derivative(angle: float) -> NDArray[np.float64]:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]])


def rotation_y_derivative(angle: float) -> NDArray[np.float64]:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]])


def rotation_z_derivative(angle: float) -> NDArray[np.float64]:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])


def rotation_matrix(angles) -> NDArray[np.float64]:
    """Rotation matrix ``Rx(zx) @ Ry(zy) @ Rz(zz)`` for intrinsic z-y-x angles.

    The result is orthonormal with determinant +1.
    """
    zx, zy, zz = np.asarray(angles, dtype=float)
    return rotation_x(zx) @ rotation_y(zy) @ rotation_z(zz)


def rotation_matrix_partials(angles) -> NDArray[np.float64]:
    """Partial derivatives of :func:`rotation_matrix` w.r.t. each angle.

    Returns a ``(3, 3, 3)`` array whose slice ``[i]`` is the derivative with
    respect to the i-th angle (product rule over the per-axis factors).
    """
    zx, zy, zz = np.asarray(angles, dtype=float)
    rx, ry, rz = rotation_x(zx), rotation_y(zy), rotation_z(zz)
    return np.stack(
        [
            rotation_x_derivative(zx) @ ry @ rz,
            rx @ rotation_y_derivative(zy) @ rz,
            rx @ ry @ rotation_z_derivative(zz),
        ]
    )


def upa_offsets(rows: int, cols: int, spacing: float) -> NDArray[np.float64]:
    """Centered element offsets of a rows-by-cols planar grid in the local
    x-y plane (boresight +z), row-major element ordering."""
    ix = np.arange(rows) - (rows - 1) / 2.0
    iy = np.arange(cols) - (cols - 1) / 2.0
    gx, gy = np.meshgrid(ix, iy, indexing="ij")
    offsets = np.zeros((rows * cols, 3))
    offsets[:, 0] = spacing * gx.ravel()
    offsets[:, 1] = spacing * gy.ravel()
    return offsets


@dataclass
class RotationBox:
    """Componentwise mechanical limits on the three Euler angles (radians)."""

    lower: NDArray[np.float64]
    upper: NDArray[np.float64]

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float).reshape(3)
        self.upper = np.asarray(self.upper, dtype=float).reshape(3)
        if np.any(self.lower > self.upper):
            raise ValueError("rotation box requires lower <= upper componentwise")

    @classmethod
    def symmetric(cls, half_range: float) -> "RotationBox":
        h = abs(float(half_range))
        return cls(-h * np.ones(3), h * np.ones(3))

    @classmethod
    def fixed(cls) -> "RotationBox":
        return cls(np.zeros(3), np.zeros(3))

    def contains(self, angles, atol: float = 0.0) -> bool:
        r = np.asarray(angles, dtype=float)
        return bool(np.all(r >= self.lower - atol) and np.all(r <= self.upper + atol))

    def clip(self, angles) -> NDArray[np.float64]:
        return np.clip(np.asarray(angles, dtype=float), self.lower, self.upper)

    def is_degenerate(self) -> bool:
        return bool(np.all(self.lower == self.upper))


@dataclass
class ArraySpec:
    """Geometry and element-pattern parameters of one planar array.

    ``local_offsets`` defaults to a centered grid with the given spacing in
    the local x-y plane; a custom ``(rows*cols, 3)`` array may be supplied
    but must stay centered (offsets summing to zero).
    """

    rows: int
    cols: int
    element_spacing: float
    wavelength: float
    center: NDArray[np.float64] = field(default_factory=lambda: np.zeros(3))
    max_gain: float = 1.0
    directivity_exponent: float = 0.0
    local_offsets: NDArray[np.float64] | None = None

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("array dimensions must be positive")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if self.max_gain < 0:
            raise ValueError("max_gain must be nonnegative")
        if self.directivity_exponent < 0:
            raise ValueError("directivity_exponent must be nonnegative")
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        if self.local_offsets is None:
            self.local_offsets = upa_offsets(self.rows, self.cols, self.element_spacing)
        else:
            self.local_offsets = np.asarray(self.local_offsets, dtype=float)
            if self.local_offsets.shape != (self.rows * self.cols, 3):
                raise ValueError("local_offsets must have shape (rows*cols, 3)")
            if not np.allclose(self.local_offsets.sum(axis=0), 0.0, atol=1e-9):
                raise ValueError("local_offsets must be centered (zero mean)")

    @property
    def size(self) -> int:
        return self.rows * self.cols

    @property
    def wavenumber(self) -> float:
        return 2.0 * np.pi / self.wavelength


def rotated_positions(spec: ArraySpec, angles) -> NDArray[np.float64]:
    """Global element coordinates ``center + R(angles) @ offset_v``, (V, 3)."""
    rot = rotation_matrix(angles)
    return spec.center[None, :] + spec.local_offsets @ rot.T


def direction_vector(elevation: float, azimuth: float) -> NDArray[np.float64]:
    """Unit direction vector for an elevation/azimuth pair (radians)."""
    ce = np.cos(elevation)
    return np.array([ce * np.cos(azimuth), ce * np.sin(azimuth), np.sin(elevation)])


def direction_vectors(elevations, azimuths) -> NDArray[np.float64]:
    """Stacked unit direction vectors, shape (L, 3)."""
    el = np.asarray(elevations, dtype=float)
    az = np.asarray(azimuths, dtype=float)
    ce = np.cos(el)
    return np.stack([ce * np.cos(az), ce * np.sin(az), np.sin(el)], axis=-1)


def boresight(angles) -> NDArray[np.float64]:
    """Rotated boresight ``R(angles) @ [0, 0, 1]`` (unit norm)."""
    return rotation_matrix(angles)[:, 2].copy()


def steering_matrix(spec: ArraySpec, angles, directions) -> NDArray[np.complex128]:
    """Steering vectors toward a stack of directions, shape (V, L).

    Entry (v, l) is ``exp(j * (2*pi/lambda) * u_l^T d_v(angles))`` with the
    rotated element positions of Eq-style geometry above; every entry has
    unit magnitude by construction.
    """
    positions = rotated_positions(spec, angles)
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    phase = spec.wavenumber * (positions @ dirs.T)
    return np.exp(1j * phase)


def steering_vector(spec: ArraySpec, angles, u) -> NDArray[np.complex128]:
    """Steering vector toward one direction, shape (V,)."""
    return steering_matrix(spec, angles, np.asarray(u, dtype=float)[None, :])[:, 0]


def steering_jacobians(spec: ArraySpec, angles, directions) -> NDArray[np.complex128]:
    """Derivatives of the steering vectors w.r.t. the three Euler angles.

    Returns (V, L, 3); slice ``[:, l, i]`` is ``t_l ⊙ (j k u_l^T dR_i d̄_v)``
    with ``dR_i`` the rotation-matrix partial for the i-th angle.
    """
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    t = steering_matrix(spec, angles, dirs)
    partials = rotation_matrix_partials(angles)
    # (L, 3, 3): u_l^T dR_i, then contract with element offsets -> (V, L, 3)
    u_dr = np.einsum("lc,icd->lid", dirs, partials)
    omega = 1j * spec.wavenumber * np.einsum("lid,vd->vli", u_dr, spec.local_offsets)
    return t[:, :, None] * omega


def steering_jacobian(spec: ArraySpec, angles, u) -> NDArray[np.complex128]:
    """Steering-vector Jacobian for a single direction, shape (V, 3)."""
    return steering_jacobians(spec, angles, np.asarray(u, dtype=float)[None, :])[:, 0, :]


def _front_projection(spec: ArraySpec, angles, directions):
    """Boresight-direction inner products ``n(r)^T u_l`` as an (L,) array."""
    n = boresight(angles)
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    return dirs @ n


def directivity_gains(spec: ArraySpec, angles, directions) -> NDArray[np.float64]:
    """Element gains ``G0 * (-n^T u)^p`` on the front half-space, 0 elsewhere."""
    c = _front_projection(spec, angles, directions)
    front = c < 0.0
    gains = np.zeros_like(c)
    if spec.directivity_exponent == 0.0:
        gains[front] = spec.max_gain
    else:
        gains[front] = spec.max_gain * np.power(-c[front], spec.directivity_exponent)
    return gains


def directivity_gain(spec: ArraySpec, angles, u) -> float:
    return float(directivity_gains(spec, angles, np.asarray(u, dtype=float)[None, :])[0])


def _boresight_partials(angles) -> NDArray[np.float64]:
    """Rows i = d n / d r_i = dR_i @ [0,0,1], shape (3, 3)."""
    return rotation_matrix_partials(angles)[:, :, 2]


def directivity_gradients(spec: ArraySpec, angles, directions) -> NDArray[np.float64]:
    """Gradients of the gain w.r.t. the Euler angles, shape (L, 3).

    Zero on the rear half-space and (zero subgradient) on the boundary
    ``n^T u = 0``.
    """
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    c = _front_projection(spec, angles, dirs)
    p = spec.directivity_exponent
    out = np.zeros((dirs.shape[0], 3))
    front = c < 0.0
    if p == 0.0 or not np.any(front):
        return out
    dn = _boresight_partials(angles)  # (3, 3), row i = dn/dr_i
    dc = dirs @ dn.T  # (L, 3), [l, i] = dn_i^T u_l
    out[front] = (
        -spec.max_gain * p * np.power(-c[front], p - 1.0)[:, None] * dc[front]
    )
    return out


def directivity_gradient(spec: ArraySpec, angles, u) -> NDArray[np.float64]:
    return directivity_gradients(spec, angles, np.asarray(u, dtype=float)[None, :])[0]


def sqrt_gains_with_gradients(spec: ArraySpec, angles, directions):
    """``sqrt(G)`` and its angle gradient for a stack of directions.

    Returns ``(sqrt_gains (L,), gradients (L, 3))``; both are zero wherever
    the gain vanishes (rear half-space and boundary).
    """
    dirs = np.atleast_2d(np.asarray(directions, dtype=float))
    c = _front_projection(spec, angles, dirs)
    p = spec.directivity_exponent
    sqrt_g = np.zeros(dirs.shape[0])
    grad = np.zeros((dirs.shape[0], 3))
    front = c < 0.0
    if not np.any(front):
        return sqrt_g, grad
    root_g0 = np.sqrt(spec.max_gain)
    if p == 0.0:
        sqrt_g[front] = root_g0
        return sqrt_g, grad
    sqrt_g[front] = root_g0 * np.power(-c[front], p / 2.0)
    dn = _boresight_partials(angles)
    dc = dirs @ dn.T
    grad[front] = (
        -root_g0 * (p / 2.0) * np.power(-c[front], p / 2.0 - 1.0)[:, None] * dc[front]
    )
    return sqrt_g, grad


def sqrt_gain_gradient(spec: ArraySpec, angles, u) -> NDArray[np.float64]:
    """Gradient of ``sqrt(G)`` for one direction, shape (3,)."""
    return sqrt_gains_with_gradients(spec, angles, np.asarray(u, dtype=float)[None, :])[1][0]
