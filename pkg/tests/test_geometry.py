import numpy as np
import pytest

from rotisac.geometry import (
    ArraySpec,
    RotationBox,
    boresight,
    direction_vector,
    directivity_gain,
    directivity_gradient,
    rotated_positions,
    rotation_matrix,
    rotation_matrix_partials,
    rotation_x,
    rotation_y,
    rotation_z,
    sqrt_gain_gradient,
    steering_jacobian,
    steering_matrix,
    steering_vector,
    upa_offsets,
)

FD = 1e-6


def small_spec(**kw):
    defaults = dict(rows=2, cols=3, element_spacing=0.05, wavelength=0.1)
    defaults.update(kw)
    return ArraySpec(**defaults)


class TestRotationMatrix:
    def test_zero_angles_identity(self):
        assert np.allclose(rotation_matrix([0, 0, 0]), np.eye(3))

    def test_z_quarter_turn_maps_x_to_y(self):
        r = rotation_matrix([0.0, 0.0, np.pi / 2])
        assert np.allclose(r @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-15)

    def test_orthonormal_unit_determinant(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            r = rotation_matrix(rng.uniform(-np.pi, np.pi, 3))
            assert np.abs(r.T @ r - np.eye(3)).max() <= 1e-10
            assert abs(np.linalg.det(r) - 1.0) <= 1e-10

    def test_matches_axis_product_oracle(self):
        # independent oracle: multiply explicitly constructed axis matrices
        rng = np.random.default_rng(1)
        for _ in range(20):
            zx, zy, zz = rng.uniform(-np.pi, np.pi, 3)
            cx, sx = np.cos(zx), np.sin(zx)
            cy, sy = np.cos(zy), np.sin(zy)
            cz, sz = np.cos(zz), np.sin(zz)
            rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
            ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
            rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
            assert np.allclose(rotation_matrix([zx, zy, zz]), rx @ ry @ rz, atol=1e-14)


class TestRotationPartials:
    def test_zero_angle_x_generator(self):
        partials = rotation_matrix_partials([0.0, 0.0, 0.0])
        generator = np.array([[0, 0, 0], [0, 0, -1], [0, 1, 0]], dtype=float)
        assert np.allclose(partials[0], generator, atol=1e-15)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            angles = rng.uniform(-np.pi, np.pi, 3)
            partials = rotation_matrix_partials(angles)
            for i in range(3):
                e = np.zeros(3)
                e[i] = FD
                fd = (rotation_matrix(angles + e) - rotation_matrix(angles - e)) / (2 * FD)
                scale = max(np.abs(fd).max(), 1.0)
                assert np.abs(fd - partials[i]).max() / scale <= 1e-5

    def test_trace_matches_trace_derivative(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            angles = rng.uniform(-np.pi, np.pi, 3)
            partials = rotation_matrix_partials(angles)
            for i in range(3):
                e = np.zeros(3)
                e[i] = FD
                fd = (
                    np.trace(rotation_matrix(angles + e))
                    - np.trace(rotation_matrix(angles - e))
                ) / (2 * FD)
                assert abs(np.trace(partials[i]) - fd) <= 1e-6


class TestRotatedPositions:
    def test_zero_rotation_keeps_offsets(self):
        spec = small_spec(center=np.array([1.0, 2.0, 3.0]))
        positions = rotated_positions(spec, [0, 0, 0])
        assert np.allclose(positions, spec.center + spec.local_offsets)

    def test_pairwise_distances_invariant(self):
        spec = small_spec()
        rng = np.random.default_rng(4)
        base = rotated_positions(spec, [0, 0, 0])
        ref = np.linalg.norm(base[:, None, :] - base[None, :, :], axis=2)
        for _ in range(20):
            pos = rotated_positions(spec, rng.uniform(-np.pi, np.pi, 3))
            dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=2)
            assert np.abs(dist - ref).max() <= 1e-10

    def test_matches_matvec_oracle(self):
        spec = small_spec(center=np.array([0.5, -0.25, 2.0]))
        rng = np.random.default_rng(5)
        angles = rng.uniform(-1, 1, 3)
        rot = rotation_x(angles[0]) @ rotation_y(angles[1]) @ rotation_z(angles[2])
        expected = np.array([spec.center + rot @ off for off in spec.local_offsets])
        assert np.allclose(rotated_positions(spec, angles), expected, atol=1e-14)


class TestDirectionVector:
    def test_axis_cases(self):
        assert np.allclose(direction_vector(0.0, 0.0), [1, 0, 0])
        assert np.allclose(direction_vector(np.pi / 2, 0.7), [0, 0, 1], atol=1e-15)

    def test_analytic_case(self):
        got = direction_vector(np.pi / 4, np.pi / 2)
        assert np.allclose(got, [0.0, np.sqrt(2) / 2, np.sqrt(2) / 2], atol=1e-15)

    def test_unit_norm(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            u = direction_vector(rng.uniform(-np.pi / 2, np.pi / 2), rng.uniform(-np.pi, np.pi))
            assert abs(np.linalg.norm(u) - 1.0) <= 1e-12


class TestSteering:
    def test_single_element_at_origin(self):
        spec = ArraySpec(rows=1, cols=1, element_spacing=0.05, wavelength=0.1)
        t = steering_vector(spec, [0.1, -0.2, 0.3], direction_vector(0.2, 0.4))
        assert np.allclose(t, [1.0])

    def test_matches_elementwise_oracle(self):
        spec = ArraySpec(rows=2, cols=1, element_spacing=0.05, wavelength=0.1)
        u = direction_vector(0.3, -1.1)
        positions = rotated_positions(spec, [0, 0, 0])
        expected = np.exp(1j * 2 * np.pi / spec.wavelength * positions @ u)
        assert np.allclose(steering_vector(spec, [0, 0, 0], u), expected, atol=1e-14)

    def test_unit_magnitude_entries(self):
        spec = small_spec()
        rng = np.random.default_rng(7)
        for _ in range(50):
            angles = rng.uniform(-np.pi, np.pi, 3)
            u = direction_vector(rng.uniform(-1.0, 1.0), rng.uniform(-np.pi, np.pi))
            t = steering_vector(spec, angles, u)
            assert np.abs(np.abs(t) - 1.0).max() <= 1e-12

    def test_batched_matches_single(self):
        spec = small_spec()
        dirs = np.array([direction_vector(0.2, 0.3), direction_vector(-0.4, 1.0)])
        batch = steering_matrix(spec, [0.1, 0.2, -0.3], dirs)
        for col, u in enumerate(dirs):
            assert np.allclose(batch[:, col], steering_vector(spec, [0.1, 0.2, -0.3], u))


class TestSteeringJacobian:
    def test_zero_offset_element(self):
        spec = ArraySpec(rows=1, cols=1, element_spacing=0.05, wavelength=0.1)
        jac = steering_jacobian(spec, [0.4, -0.5, 0.6], direction_vector(0.1, 0.2))
        assert np.abs(jac).max() == 0.0

    def test_matches_finite_differences(self):
        spec = small_spec()
        rng = np.random.default_rng(8)
        for _ in range(50):
            angles = rng.uniform(-1.4, 1.4, 3)
            u = direction_vector(rng.uniform(-1.0, 1.0), rng.uniform(-np.pi, np.pi))
            jac = steering_jacobian(spec, angles, u)
            for i in range(3):
                e = np.zeros(3)
                e[i] = FD
                fd = (
                    steering_vector(spec, angles + e, u)
                    - steering_vector(spec, angles - e, u)
                ) / (2 * FD)
                scale = max(np.abs(fd).max(), 1e-9)
                assert np.abs(fd - jac[:, i]).max() / scale <= 1e-5

    def test_columns_are_phase_rotations(self):
        # each entry divided by the steering entry must be purely imaginary
        spec = small_spec()
        angles = [0.3, -0.7, 1.1]
        u = direction_vector(-0.5, 2.2)
        t = steering_vector(spec, angles, u)
        jac = steering_jacobian(spec, angles, u)
        ratio = jac / t[:, None]
        assert np.abs(np.real(ratio)).max() <= 1e-12


class TestBoresight:
    def test_zero_rotation(self):
        assert np.allclose(boresight([0, 0, 0]), [0, 0, 1])

    def test_x_quarter_turn(self):
        assert np.allclose(boresight([np.pi / 2, 0, 0]), [0, -1, 0], atol=1e-15)

    def test_unit_norm(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            n = boresight(rng.uniform(-np.pi, np.pi, 3))
            assert abs(np.linalg.norm(n) - 1.0) <= 1e-12


class TestDirectivity:
    def test_boresight_aligned_peak(self):
        spec = small_spec(max_gain=2.0, directivity_exponent=2.0)
        assert directivity_gain(spec, [0, 0, 0], np.array([0.0, 0.0, -1.0])) == pytest.approx(2.0)

    def test_rear_half_space_zero(self):
        spec = small_spec(max_gain=2.0, directivity_exponent=2.0)
        assert directivity_gain(spec, [0, 0, 0], np.array([0.0, 0.0, 1.0])) == 0.0

    def test_isotropic_front(self):
        spec = small_spec(max_gain=2.0, directivity_exponent=0.0)
        u = direction_vector(-0.3, 0.9)  # negative elevation: front half-space
        assert directivity_gain(spec, [0, 0, 0], u) == pytest.approx(2.0)

    def test_bounded_by_max_gain(self):
        spec = small_spec(max_gain=1.7, directivity_exponent=2.0)
        rng = np.random.default_rng(10)
        for _ in range(200):
            angles = rng.uniform(-np.pi, np.pi, 3)
            u = direction_vector(rng.uniform(-1.2, 1.2), rng.uniform(-np.pi, np.pi))
            g = directivity_gain(spec, angles, u)
            assert 0.0 <= g <= 1.7 + 1e-12

    def test_non_integer_exponent(self):
        spec = small_spec(max_gain=1.0, directivity_exponent=1.5)
        g = directivity_gain(spec, [0, 0, 0], np.array([0.0, 0.0, -0.5]) / 0.5)
        assert g == pytest.approx(1.0)
        u = direction_vector(-np.pi / 6, 0.0)
        assert directivity_gain(spec, [0, 0, 0], u) == pytest.approx(0.5**1.5)


class TestDirectivityGradient:
    def test_isotropic_zero_gradient(self):
        spec = small_spec(max_gain=2.0, directivity_exponent=0.0)
        grad = directivity_gradient(spec, [0.2, 0.1, -0.4], direction_vector(-0.4, 0.3))
        assert np.abs(grad).max() == 0.0

    def test_rear_zero_gradient(self):
        spec = small_spec(max_gain=2.0, directivity_exponent=2.0)
        grad = directivity_gradient(spec, [0, 0, 0], direction_vector(0.5, 0.1))
        assert np.abs(grad).max() == 0.0

    def test_matches_finite_differences(self):
        spec = small_spec(max_gain=2.0, directivity_exponent=2.0)
        rng = np.random.default_rng(11)
        tested = 0
        while tested < 50:
            angles = rng.uniform(-1.2, 1.2, 3)
            u = direction_vector(rng.uniform(-1.0, 1.0), rng.uniform(-np.pi, np.pi))
            if abs(boresight(angles) @ u) <= 1e-3:
                continue
            tested += 1
            grad = directivity_gradient(spec, angles, u)
            for i in range(3):
                e = np.zeros(3)
                e[i] = FD
                fd = (
                    directivity_gain(spec, angles + e, u)
                    - directivity_gain(spec, angles - e, u)
                ) / (2 * FD)
                assert abs(fd - grad[i]) / max(abs(fd), 1e-6) <= 1e-5

    def test_sqrt_gain_gradient_matches_fd(self):
        spec = small_spec(max_gain=2.0, directivity_exponent=2.0)
        rng = np.random.default_rng(12)
        tested = 0
        while tested < 20:
            angles = rng.uniform(-1.0, 1.0, 3)
            u = direction_vector(rng.uniform(-1.0, 1.0), rng.uniform(-np.pi, np.pi))
            if boresight(angles) @ u > -5e-2:  # require a front-region point
                continue
            tested += 1
            grad = sqrt_gain_gradient(spec, angles, u)
            for i in range(3):
                e = np.zeros(3)
                e[i] = FD
                fd = (
                    np.sqrt(directivity_gain(spec, angles + e, u))
                    - np.sqrt(directivity_gain(spec, angles - e, u))
                ) / (2 * FD)
                assert abs(fd - grad[i]) / max(abs(fd), 1e-6) <= 1e-5


class TestSpecsAndBoxes:
    def test_offsets_centered_half_wavelength(self):
        offsets = upa_offsets(2, 2, 0.05)
        assert np.allclose(offsets.sum(axis=0), 0.0)
        assert np.allclose(np.abs(offsets[0][:2]), [0.025, 0.025])
        assert np.all(offsets[:, 2] == 0.0)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ArraySpec(rows=0, cols=2, element_spacing=0.05, wavelength=0.1)
        with pytest.raises(ValueError):
            ArraySpec(rows=2, cols=2, element_spacing=0.05, wavelength=0.1, max_gain=-1.0)
        with pytest.raises(ValueError):
            ArraySpec(
                rows=2, cols=1, element_spacing=0.05, wavelength=0.1,
                local_offsets=np.ones((2, 3)),
            )

    def test_rotation_box(self):
        box = RotationBox.symmetric(0.5)
        assert box.contains([0.5, -0.5, 0.0])
        assert not box.contains([0.6, 0.0, 0.0])
        assert np.allclose(box.clip([1.0, -1.0, 0.1]), [0.5, -0.5, 0.1])
        assert RotationBox.fixed().is_degenerate()
        with pytest.raises(ValueError):
            RotationBox(np.ones(3), -np.ones(3))
