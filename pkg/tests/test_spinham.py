"""Tests for the hole Hamiltonian, orientational subsets and g-factors."""

import numpy as np
import pytest

from tcentre_hyperpol.core.exceptions import ConsistencyError, ValidationError
from tcentre_hyperpol.core.spinham import (
    EV_TO_MHZ,
    Doublet,
    FieldSpec,
    HoleModel,
    StrainConfig,
    axis_frame,
    build_strain_hamiltonian,
    build_zeeman_hamiltonian,
    compute_hole_g,
    cubic_rotations,
    doublet_splitting_mhz,
    enumerate_orientations,
    orientation_g_values,
    propagate_alignment_uncertainty,
    spin_three_halves,
)

# fitted <110> column of the calibration table, descending
FITTED_110 = [3.460, 3.459, 2.269, 2.252, 2.036, 2.015, 1.779, 1.758, 1.566, 1.537, 1.029, 1.023]


@pytest.fixture(scope="module")
def orientations():
    return enumerate_orientations(StrainConfig())


def test_spin_operator_algebra():
    """Test the j=3/2 commutation relations and Casimir."""
    ops = spin_three_halves()
    jx, jy, jz = ops.components

    assert np.allclose(jx @ jy - jy @ jx, 1j * jz)
    assert np.allclose(jy @ jz - jz @ jy, 1j * jx)
    assert np.allclose(jx @ jx + jy @ jy + jz @ jz, 15.0 / 4.0 * ops.identity)
    assert np.allclose(np.diag(jz).real, [1.5, 0.5, -0.5, -1.5])


def test_spin_operators_are_read_only():
    """Test that the cached operators cannot be modified in place."""
    with pytest.raises(ValueError):
        spin_three_halves().jx[0, 0] = 1.0


def test_defect_frame_strain_gap_matches_closed_form():
    """Test the doublet gap of the diagonal defect-frame tensor against the 2x2 block solution."""
    strain = StrainConfig()
    h = build_strain_hamiltonian(strain.defect_tensor(), strain.b_deform, strain.d_deform)
    energies = np.linalg.eigvalsh(h)

    # block {+3/2, -1/2} of eps_yy Jy^2 + eps_zz Jz^2
    a = 0.75 * strain.eps_yy + 2.25 * strain.eps_zz
    c = 1.75 * strain.eps_yy + 0.25 * strain.eps_zz
    off = -np.sqrt(3.0) / 2.0 * strain.eps_yy
    expected = abs(strain.b_deform) * np.sqrt((a - c) ** 2 + 4.0 * off ** 2)

    assert energies[1] - energies[0] == pytest.approx(0.0, abs=1e-15)
    assert energies[3] - energies[2] == pytest.approx(0.0, abs=1e-15)
    assert energies[2] - energies[1] == pytest.approx(expected, rel=1e-10)
    assert (energies[2] - energies[1]) * 1e3 == pytest.approx(0.91, abs=0.01)


def test_strain_hamiltonian_hermitian(orientations):
    """Test hermiticity and Kramers degeneracy for every orientation."""
    for orientation in orientations:
        h = build_strain_hamiltonian(orientation.strain_crystal, -0.8, -2.7)
        assert np.allclose(h, h.conj().T)
        energies = np.linalg.eigvalsh(h)
        assert energies[1] - energies[0] == pytest.approx(0.0, abs=1e-14)
        assert energies[3] - energies[2] == pytest.approx(0.0, abs=1e-14)


def test_non_symmetric_strain_rejected():
    """Test that an asymmetric strain tensor is refused."""
    strain = np.zeros((3, 3))
    strain[0, 1] = 1e-3
    with pytest.raises(ValidationError):
        build_strain_hamiltonian(strain, -0.8, -2.7)


def test_zeeman_hamiltonian_linear_in_field():
    """Test that the Zeeman term is Hermitian and scales linearly with B."""
    field = FieldSpec.along((1, 1, 1), 10.0)
    h1 = build_zeeman_hamiltonian(field, 1.505, -0.138)
    h2 = build_zeeman_hamiltonian(FieldSpec.along((1, 1, 1), 20.0), 1.505, -0.138)

    assert np.allclose(h1, h1.conj().T)
    assert np.allclose(h2, 2.0 * h1)
    assert np.allclose(build_zeeman_hamiltonian(field.reversed(), 1.505, -0.138), -h1)


def test_zeeman_along_z_is_diagonal():
    """Test the Jz and Jz^3 terms for B along [001]."""
    field = FieldSpec.along((0, 0, 1), 1.0)
    h = build_zeeman_hamiltonian(field, 1.0, 1.0, mu_b_mhz_per_gauss=1.0)
    m = np.array([1.5, 0.5, -0.5, -1.5])
    assert np.allclose(h, np.diag(m + m ** 3))


def test_twenty_four_cubic_rotations():
    """Test the cubic point group."""
    rotations = cubic_rotations()
    assert len(rotations) == 24
    for rotation in rotations:
        assert np.allclose(rotation @ rotation.T, np.eye(3))
        assert np.linalg.det(rotation) == pytest.approx(1.0)


def test_twelve_orientations(orientations):
    """Test that rotation yields exactly twelve distinct strain tensors."""
    assert len(orientations) == 12
    assert [o.label for o in orientations] == list(range(1, 13))
    assert sum(o.weight for o in orientations) == pytest.approx(1.0)

    stack = orientations.strain_stack()
    for i in range(12):
        for j in range(i + 1, 12):
            assert not np.allclose(stack[i], stack[j], atol=1e-9, rtol=0)


def test_incomplete_group_is_inconsistent():
    """Test that too few group elements raise ConsistencyError."""
    with pytest.raises(ConsistencyError):
        enumerate_orientations(StrainConfig(), rotations=[np.eye(3)])


def test_untilted_defect_has_six_orientations():
    """Test that a zero tilt collapses the twelve subsets to six."""
    with pytest.raises(ConsistencyError, match="found 6"):
        enumerate_orientations(StrainConfig(tilt_deg=0.0))


@pytest.mark.parametrize("field", [
    FieldSpec.along((1, 0, 0), 100.0),
    FieldSpec.along((1, 1, 0), 100.0),
    FieldSpec.from_angles(100.0, 0.3 * np.pi, 0.25 * np.pi),
])
def test_hole_g_independent_of_tilt_sense(orientations, field):
    """Test that tilting toward -x gives the same set of g-factors."""
    mirrored = enumerate_orientations(StrainConfig(), tilt_sense=-1)
    model = HoleModel()

    plus = np.sort(orientation_g_values(model, orientations, field))
    minus = np.sort(orientation_g_values(model, mirrored, field))
    assert minus == pytest.approx(plus, rel=1e-9)


def test_hole_g_independent_of_rotation_order(orientations):
    """Test that enumerating the group in another order gives the same g-factors."""
    shuffled = enumerate_orientations(StrainConfig(), rotations=cubic_rotations()[::-1])
    field = FieldSpec.from_angles(100.0, 0.3 * np.pi, 0.25 * np.pi)
    model = HoleModel()

    assert len(shuffled) == 12
    assert np.sort(orientation_g_values(model, shuffled, field)) == pytest.approx(
        np.sort(orientation_g_values(model, orientations, field)), rel=1e-9
    )
    assert np.array_equal(
        compute_hole_g(model, shuffled, FieldSpec.along((1, 0, 0), 100.0)).multiplicities,
        [4, 8],
    )


def test_crystal_frame_doublet_gap(orientations):
    """Test the zero-field TX0/TX1 gap of the crystal-frame tensors."""
    model = HoleModel()
    gaps = [doublet_splitting_mhz(model, o) for o in orientations]
    assert np.allclose(gaps, gaps[0], rtol=1e-9)
    assert gaps[0] / EV_TO_MHZ * 1e3 == pytest.approx(1.756, abs=0.01)


def test_hole_g_along_100(orientations):
    """Test the two grouped g-factors for B along <100>."""
    holes = compute_hole_g(HoleModel(), orientations, FieldSpec.along((1, 0, 0), 100.0))

    assert len(holes.entries) == 2
    assert holes.values == pytest.approx([0.91, 2.55], abs=0.02)
    assert list(holes.multiplicities) == [4, 8]


def test_hole_g_upper_doublet_differs(orientations):
    """Test that the upper Kramers doublet gives its own g-factors."""
    model = HoleModel(doublet=Doublet.UPPER)
    holes = compute_hole_g(model, orientations, FieldSpec.along((1, 0, 0), 100.0))
    assert holes.values == pytest.approx([1.217, 2.490], abs=0.01)


def test_hole_g_misaligned_110_matches_fitted_column(orientations):
    """Test the calibrated misalignment against the fitted <110> g-factors."""
    field = FieldSpec.from_angles(100.0, np.radians(10.1), np.radians(71.9), axis=(1, 1, 0))
    values = np.sort(orientation_g_values(HoleModel(), orientations, field))[::-1]
    assert values == pytest.approx(FITTED_110, abs=0.01)


def test_hole_g_independent_of_field_sign_and_size(orientations):
    """Test that g_h depends only on the field direction."""
    model = HoleModel()
    field = FieldSpec.along((1, 2, 3), 50.0)
    reference = orientation_g_values(model, orientations, field)

    assert orientation_g_values(model, orientations, field.reversed()) == pytest.approx(reference)
    assert orientation_g_values(
        model, orientations, FieldSpec.along((1, 2, 3), 5.0)
    ) == pytest.approx(reference, rel=1e-6)


def test_zero_field_rejected(orientations):
    """Test that a zero field has no g-factor."""
    with pytest.raises(ValidationError):
        compute_hole_g(HoleModel(), orientations, FieldSpec.along((1, 0, 0), 0.0))


def test_field_spec_validation():
    """Test FieldSpec input checks."""
    with pytest.raises(ValidationError):
        FieldSpec(-1.0, np.array([1.0, 0.0, 0.0]))
    with pytest.raises(ValidationError):
        FieldSpec(1.0, np.array([1.0, 1.0, 0.0]))
    with pytest.raises(ValidationError):
        FieldSpec.along((0, 0, 0), 1.0)


def test_from_angles_about_001_is_spherical():
    """Test that the default axis gives ordinary spherical angles."""
    theta, phi = 0.7, 1.1
    field = FieldSpec.from_angles(2.0, theta, phi)
    expected = [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)]

    assert field.direction == pytest.approx(expected)
    assert field.vector == pytest.approx(2.0 * np.array(expected))
    assert field.to_angles() == pytest.approx((theta, phi))


def test_from_angles_round_trip_about_110():
    """Test to_angles as the inverse of from_angles for a tilted axis."""
    field = FieldSpec.from_angles(1.0, np.radians(10.1), np.radians(71.9), axis=(1, 1, 0))
    incl, azim = field.to_angles(axis=(1, 1, 0))
    assert np.degrees(incl) == pytest.approx(10.1)
    assert np.degrees(azim) == pytest.approx(71.9)


def test_axis_frame_orthonormal():
    """Test the (n, u, v) frame including the [001] special case."""
    for axis in [(1, 1, 0), (0, 0, 1), (1, 2, 3)]:
        frame = np.array(axis_frame(axis))
        assert np.allclose(frame @ frame.T, np.eye(3))
    n, u, _ = axis_frame((1, 1, 0))
    assert u == pytest.approx([0.0, 0.0, 1.0])


def test_strain_config_rejects_bad_tilt():
    """Test the tilt range check."""
    with pytest.raises(ValidationError):
        StrainConfig(tilt_deg=95.0)


class TestAlignmentUncertainty:
    """Monte-Carlo propagation of field misalignment."""

    def test_deterministic_per_seed(self, orientations):
        """Test that the same seed reproduces the same table."""
        field = FieldSpec.along((1, 0, 0), 100.0)
        first = propagate_alignment_uncertainty(HoleModel(), orientations, field, 10.0, 10.0,
                                                n_samples=200, seed=3)
        second = propagate_alignment_uncertainty(HoleModel(), orientations, field, 10.0, 10.0,
                                                 n_samples=200, seed=3)
        other = propagate_alignment_uncertainty(HoleModel(), orientations, field, 10.0, 10.0,
                                                n_samples=200, seed=4)

        assert len(first.entries) == 12
        assert all(entry.multiplicity == 1 for entry in first.entries)
        assert np.array_equal(first.values, second.values)
        assert np.array_equal(first.sigmas, second.sigmas)
        assert not np.array_equal(first.sigmas, other.sigmas)

    def test_zero_error_reproduces_nominal(self, orientations):
        """Test that no misalignment leaves the nominal g-factors with zero spread."""
        field = FieldSpec.along((1, 0, 0), 100.0)
        holes = propagate_alignment_uncertainty(HoleModel(), orientations, field, 0.0, 0.0,
                                                n_samples=100)
        nominal = compute_hole_g(HoleModel(), orientations, field).expanded()

        assert np.sort(holes.values) == pytest.approx(nominal, rel=1e-9)
        assert holes.sigmas == pytest.approx(np.zeros(12), abs=1e-9)

    def test_ten_degree_spread_along_100(self, orientations):
        """Test the error bars for +/-10 deg inclination and azimuth errors along <100>."""
        field = FieldSpec.along((1, 0, 0), 100.0)
        holes = propagate_alignment_uncertainty(HoleModel(), orientations, field, 10.0, 10.0)

        low = holes.sigmas[holes.values < 1.5]
        high = holes.sigmas[holes.values >= 1.5]
        assert len(low) == 4
        assert len(high) == 8
        # tabulated mean error bars: 0.13 for the 0.91 group, 0.24 for the 2.55 group
        assert 0.13 / 3.0 < low.mean() < 0.13 * 3.0
        assert 0.24 / 2.0 < high.mean() < 0.24 * 2.0

    def test_too_few_samples(self, orientations):
        """Test the minimum sample count."""
        with pytest.raises(ValidationError):
            propagate_alignment_uncertainty(HoleModel(), orientations,
                                            FieldSpec.along((1, 0, 0), 1.0), 1.0, 1.0,
                                            n_samples=50)
