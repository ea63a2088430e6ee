"""Spin-3/2 hole Hamiltonian, T-centre orientational subsets and hole g-factors.

The hole Hamiltonian is H_h = H_s(eps) + H_b(B): a strain term written with
the j = 3/2 angular momentum operators and deformation potentials b, d, plus
a Zeeman term with the cubic g-factors g1, g2. Strain energies are handled in
eV on input and converted to MHz; field terms are in MHz throughout.
"""

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from tcentre_hyperpol.core.contracts import HoleGFactors, N_ORIENTATIONS
from tcentre_hyperpol.core.exceptions import ConsistencyError, ValidationError

logger = logging.getLogger(__name__)

EV_TO_MHZ = 2.41798924e8
MU_B_MHZ_PER_GAUSS = 1.39962449

# elementwise tolerance for merging identical crystal-frame strain tensors
STRAIN_DEDUP_TOL = 1e-9


@dataclass(frozen=True)
class SpinOperators:
    """Angular momentum matrices in the m_z basis, highest m first."""
    jx: np.ndarray
    jy: np.ndarray
    jz: np.ndarray
    identity: np.ndarray

    @classmethod
    def for_spin(cls, j: float) -> "SpinOperators":
        """Build Jx, Jy, Jz from the raising operator for total angular momentum j."""
        dim = int(round(2 * j + 1))
        m = j - np.arange(dim)
        jp = np.zeros((dim, dim), dtype=complex)
        for k in range(1, dim):
            jp[k - 1, k] = np.sqrt(j * (j + 1) - m[k] * (m[k] + 1))
        jm = jp.conj().T

        ops = cls(
            jx=0.5 * (jp + jm),
            jy=0.5j * (jm - jp),
            jz=np.diag(m).astype(complex),
            identity=np.eye(dim, dtype=complex),
        )
        for matrix in (ops.jx, ops.jy, ops.jz, ops.identity):
            matrix.setflags(write=False)
        return ops

    @property
    def components(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.jx, self.jy, self.jz)

    def stacked(self) -> np.ndarray:
        """(3, d, d) array of Jx, Jy, Jz."""
        return np.stack(self.components)


@lru_cache(maxsize=None)
def spin_three_halves() -> SpinOperators:
    return SpinOperators.for_spin(1.5)


@lru_cache(maxsize=None)
def _operator_tables() -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Symmetrized products 1/2(JiJj + JjJi), Ji^2 - I on the diagonal, and Ji^3."""
    ops = spin_three_halves()
    J = ops.stacked()
    sym = 0.5 * (np.einsum("iab,jbc->ijac", J, J) + np.einsum("jab,ibc->ijac", J, J))
    square_minus_identity = np.stack([sym[i, i] - ops.identity for i in range(3)])
    cubes = np.einsum("iab,ibc,icd->iad", J, J, J)
    return sym, square_minus_identity, cubes


class Doublet(str, Enum):
    """Which Kramers doublet of the strain Hamiltonian is taken as TX0."""
    LOWER = "lower"
    UPPER = "upper"


@dataclass(frozen=True)
class StrainConfig:
    """Internal strain of the defect, given in the defect frame."""
    eps_yy: float = -0.65e-3
    eps_zz: float = -0.26e-3
    b_deform: float = -0.8  # eV
    d_deform: float = -2.7  # eV
    tilt_deg: float = 4.0

    def __post_init__(self):
        if not 0.0 <= self.tilt_deg < 90.0:
            raise ValidationError(f"tilt_deg must lie in [0, 90), got {self.tilt_deg}")

    def defect_tensor(self) -> np.ndarray:
        return np.diag([0.0, self.eps_yy, self.eps_zz])


@dataclass(frozen=True)
class Orientation:
    """One orientational subset: defect-to-crystal rotation and crystal-frame strain."""
    rotation: np.ndarray
    strain_crystal: np.ndarray
    label: int
    weight: float = 1.0 / N_ORIENTATIONS

    def __post_init__(self):
        rotation = np.asarray(self.rotation, dtype=float)
        if not np.allclose(rotation @ rotation.T, np.eye(3), atol=1e-12, rtol=0):
            raise ValidationError("rotation must be orthogonal")
        if abs(np.linalg.det(rotation) - 1.0) > 1e-12:
            raise ValidationError("rotation must be proper (determinant +1)")
        strain = np.asarray(self.strain_crystal, dtype=float)
        _check_symmetric(strain)
        if self.weight < 0:
            raise ValidationError("orientation weight must be non-negative")
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "strain_crystal", strain)


@dataclass(frozen=True)
class OrientationSet:
    """The twelve crystallographically equivalent orientations."""
    orientations: Tuple[Orientation, ...]

    def __iter__(self) -> Iterator[Orientation]:
        return iter(self.orientations)

    def __len__(self) -> int:
        return len(self.orientations)

    def __getitem__(self, index: int) -> Orientation:
        return self.orientations[index]

    def strain_stack(self) -> np.ndarray:
        """(n, 3, 3) array of crystal-frame strain tensors in label order."""
        return np.stack([o.strain_crystal for o in self.orientations])


@dataclass(frozen=True)
class HoleModel:
    """Everything needed to build H_h for a given orientation and field."""
    strain: StrainConfig = field(default_factory=StrainConfig)
    g1: float = 1.505
    g2: float = -0.138
    doublet: Doublet = Doublet.LOWER
    mu_b_mhz_per_gauss: float = MU_B_MHZ_PER_GAUSS

    def __post_init__(self):
        if not self.mu_b_mhz_per_gauss > 0:
            raise ValidationError("mu_b_mhz_per_gauss must be positive")
        object.__setattr__(self, "doublet", Doublet(self.doublet))


def axis_frame(axis: Sequence[float]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Orthonormal frame (n, u, v) attached to a crystal axis.

    n is the normalized axis, u is the crystal [001] direction projected
    perpendicular to n ([100] when n is along [001]) and v = n x u.
    """
    n = np.asarray(axis, dtype=float)
    norm = np.linalg.norm(n)
    if norm == 0:
        raise ValidationError("axis must be a non-zero vector")
    n = n / norm
    reference = np.array([0.0, 0.0, 1.0])
    if np.linalg.norm(np.cross(n, reference)) < 1e-12:
        reference = np.array([1.0, 0.0, 0.0])
    u = reference - np.dot(reference, n) * n
    u /= np.linalg.norm(u)
    return n, u, np.cross(n, u)


@dataclass(frozen=True)
class FieldSpec:
    """Magnetic field: magnitude in gauss and unit direction in crystal coordinates."""
    magnitude: float
    direction: np.ndarray

    def __post_init__(self):
        direction = np.asarray(self.direction, dtype=float)
        if direction.shape != (3,):
            raise ValidationError("direction must be a 3-vector")
        if self.magnitude < 0:
            raise ValidationError(f"field magnitude must be >= 0, got {self.magnitude}")
        if self.magnitude > 0 and abs(np.linalg.norm(direction) - 1.0) > 1e-12:
            raise ValidationError("direction must be a unit vector")
        object.__setattr__(self, "direction", direction)

    @classmethod
    def along(cls, axis: Sequence[float], magnitude: float) -> "FieldSpec":
        """Field of the given magnitude along a crystal axis such as (1, 0, 0)."""
        n, _, _ = axis_frame(axis)
        return cls(float(magnitude), n)

    @classmethod
    def from_angles(
        cls,
        magnitude: float,
        inclination: float,
        azimuth: float,
        axis: Sequence[float] = (0.0, 0.0, 1.0),
    ) -> "FieldSpec":
        """
        Field tilted by an inclination (radians) away from a named axis, then
        rotated by an azimuth (radians) about that axis.

        With the default [001] axis these are ordinary spherical angles.
        """
        n, u, v = axis_frame(axis)
        direction = (np.cos(inclination) * n
                     + np.sin(inclination) * (np.cos(azimuth) * u + np.sin(azimuth) * v))
        return cls(float(magnitude), direction / np.linalg.norm(direction))

    @property
    def vector(self) -> np.ndarray:
        return self.magnitude * self.direction

    def reversed(self) -> "FieldSpec":
        return FieldSpec(self.magnitude, -self.direction)

    def to_angles(self, axis: Sequence[float] = (0.0, 0.0, 1.0)) -> Tuple[float, float]:
        """Inverse of from_angles: (inclination, azimuth) in radians."""
        n, u, v = axis_frame(axis)
        d = self.direction
        inclination = float(np.arccos(np.clip(np.dot(d, n), -1.0, 1.0)))
        azimuth = float(np.arctan2(np.dot(d, v), np.dot(d, u)))
        return inclination, azimuth


def _check_symmetric(strain: np.ndarray) -> None:
    if strain.shape[-2:] != (3, 3):
        raise ValidationError(f"strain tensor must be 3x3, got shape {strain.shape}")
    scale = max(float(np.max(np.abs(strain))), 1e-30)
    if not np.allclose(strain, np.swapaxes(strain, -1, -2), atol=1e-12 * scale, rtol=0):
        raise ValidationError("strain tensor must be symmetric")


def _strain_hamiltonian(strain: np.ndarray, b: float, d: float) -> np.ndarray:
    sym, square_minus_identity, _ = _operator_tables()
    diagonal = np.einsum("...ii->...i", strain)
    off_diagonal = strain * (1.0 - np.eye(3))
    h = (-b * np.einsum("...i,iab->...ab", diagonal, square_minus_identity)
         - d / np.sqrt(3.0) * np.einsum("...ij,ijab->...ab", off_diagonal, sym))
    return 0.5 * (h + np.conj(np.swapaxes(h, -1, -2)))


def _zeeman_hamiltonian(b_vectors: np.ndarray, g1: float, g2: float, mu_b: float) -> np.ndarray:
    _, _, cubes = _operator_tables()
    J = spin_three_halves().stacked()
    h = mu_b * (g1 * np.einsum("...i,iab->...ab", b_vectors, J)
                + g2 * np.einsum("...i,iab->...ab", b_vectors, cubes))
    return 0.5 * (h + np.conj(np.swapaxes(h, -1, -2)))


def build_strain_hamiltonian(strain_crystal: np.ndarray, b: float, d: float) -> np.ndarray:
    """
    Strain part of the hole Hamiltonian.

    H_s = -b sum_i (J_i^2 - I) eps_ii - d/sqrt(3) sum_{i != j} 1/2 (J_i J_j + J_j J_i) eps_ij

    Args:
        strain_crystal: Symmetric 3x3 dimensionless strain tensor
        b: Deformation potential b in eV
        d: Deformation potential d in eV

    Returns:
        4x4 Hermitian matrix in eV
    """
    strain = np.asarray(strain_crystal, dtype=float)
    _check_symmetric(strain)
    return _strain_hamiltonian(strain, b, d)


def build_zeeman_hamiltonian(
    field_spec: FieldSpec,
    g1: float,
    g2: float,
    mu_b_mhz_per_gauss: float = MU_B_MHZ_PER_GAUSS,
) -> np.ndarray:
    """Zeeman part mu_B (g1 sum_i B_i J_i + g2 sum_i B_i J_i^3), 4x4 Hermitian in MHz."""
    return _zeeman_hamiltonian(field_spec.vector, g1, g2, mu_b_mhz_per_gauss)


def cubic_rotations() -> Tuple[np.ndarray, ...]:
    """The 24 proper rotations of the cubic point group as signed permutation matrices."""
    rotations = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1.0, -1.0), repeat=3):
            matrix = np.zeros((3, 3))
            for row, (col, sign) in enumerate(zip(perm, signs)):
                matrix[row, col] = sign
            if round(np.linalg.det(matrix)) == 1:
                rotations.append(matrix)
    return tuple(rotations)


def defect_frame(tilt_deg: float, tilt_sense: int = 1) -> np.ndarray:
    """
    Rotation whose columns are the defect axes x, y, z in crystal coordinates.

    y is along [110]; z starts at [001] and is tilted by tilt_deg inside the
    (110) plane toward +x (tilt_sense = 1) or -x (tilt_sense = -1).
    """
    if tilt_sense not in (1, -1):
        raise ValidationError("tilt_sense must be +1 or -1")
    y = np.array([1.0, 1.0, 0.0]) / np.sqrt(2.0)
    z0 = np.array([0.0, 0.0, 1.0])
    x0 = np.cross(y, z0)
    tilt = np.radians(tilt_deg)
    z = np.cos(tilt) * z0 + tilt_sense * np.sin(tilt) * x0
    x = np.cross(y, z)
    return np.column_stack([x, y, z])


def enumerate_orientations(
    strain: StrainConfig,
    rotations: Optional[Sequence[np.ndarray]] = None,
    tilt_sense: int = 1,
) -> OrientationSet:
    """
    Rotate the defect-frame strain into the crystal frame for every cubic
    rotation and keep the distinct tensors.

    Args:
        strain: Defect-frame strain configuration
        rotations: Group elements to apply, defaults to cubic_rotations()
        tilt_sense: Sign of the tilt of the defect z axis

    Returns:
        OrientationSet of twelve orientations with equal weights

    Raises:
        ConsistencyError: If the number of distinct tensors is not twelve
    """
    if rotations is None:
        rotations = cubic_rotations()
    base = defect_frame(strain.tilt_deg, tilt_sense)
    defect_tensor = strain.defect_tensor()

    kept_rotations = []
    kept_tensors = []
    for group_element in rotations:
        rotation = np.asarray(group_element, dtype=float) @ base
        tensor = rotation @ defect_tensor @ rotation.T
        tensor = 0.5 * (tensor + tensor.T)
        if any(np.all(np.abs(tensor - seen) <= STRAIN_DEDUP_TOL) for seen in kept_tensors):
            continue
        kept_rotations.append(rotation)
        kept_tensors.append(tensor)

    count = len(kept_tensors)
    if count != N_ORIENTATIONS:
        raise ConsistencyError(
            f"expected {N_ORIENTATIONS} distinct orientations, found {count}"
        )
    logger.debug(f"Enumerated {count} orientations (tilt {strain.tilt_deg} deg)")

    return OrientationSet(tuple(
        Orientation(rotation=r, strain_crystal=t, label=i + 1, weight=1.0 / count)
        for i, (r, t) in enumerate(zip(kept_rotations, kept_tensors))
    ))


def _hole_g_values(model: HoleModel, strains: np.ndarray, b_vectors: np.ndarray) -> np.ndarray:
    """g_h for every (field, orientation) pair; returns shape b_vectors.shape[:-1] + (n,)."""
    strain_part = _strain_hamiltonian(strains, model.strain.b_deform, model.strain.d_deform)
    strain_part = strain_part * EV_TO_MHZ
    field_part = _zeeman_hamiltonian(b_vectors, model.g1, model.g2, model.mu_b_mhz_per_gauss)
    hamiltonian = strain_part + field_part[..., np.newaxis, :, :]
    energies = np.linalg.eigvalsh(hamiltonian)
    if model.doublet is Doublet.LOWER:
        pair = energies[..., 0:2]
    else:
        pair = energies[..., 2:4]
    magnitude = np.linalg.norm(b_vectors, axis=-1)[..., np.newaxis]
    return (pair[..., 1] - pair[..., 0]) / (model.mu_b_mhz_per_gauss * magnitude)


def orientation_g_values(
    model: HoleModel,
    orientations: OrientationSet,
    field_spec: FieldSpec,
) -> np.ndarray:
    """Hole g-factor of every orientation, in label order."""
    if field_spec.magnitude == 0:
        raise ValidationError("g-factor undefined at zero field")
    return _hole_g_values(model, orientations.strain_stack(), field_spec.vector)


def compute_hole_g(
    model: HoleModel,
    orientations: OrientationSet,
    field_spec: FieldSpec,
) -> HoleGFactors:
    """
    Diagonalize H_s + H_b per orientation and divide the selected doublet's
    splitting by mu_B B.

    Returns:
        HoleGFactors with values agreeing to 1e-6 (relative) grouped together
    """
    return HoleGFactors.from_values(orientation_g_values(model, orientations, field_spec))


def doublet_splitting_mhz(model: HoleModel, orientation: Orientation) -> float:
    """Zero-field gap between the two Kramers doublets of H_s, in MHz."""
    strain_part = _strain_hamiltonian(
        orientation.strain_crystal, model.strain.b_deform, model.strain.d_deform
    )
    energies = np.linalg.eigvalsh(strain_part * EV_TO_MHZ)
    return float(energies[2] - energies[1])


def propagate_alignment_uncertainty(
    model: HoleModel,
    orientations: OrientationSet,
    field_spec: FieldSpec,
    incl_err_deg: float,
    azim_err_deg: float,
    n_samples: int = 1000,
    seed: int = 0,
) -> HoleGFactors:
    """
    Monte-Carlo spread of the hole g-factors under field misalignment.

    The nominal direction's spherical angles about [001] are perturbed
    uniformly within +/- incl_err_deg and +/- azim_err_deg.

    Returns:
        HoleGFactors with one entry per orientation (label order), g_h the
        sample mean and sigma the sample standard deviation
    """
    if n_samples < 100:
        raise ValidationError(f"n_samples must be >= 100, got {n_samples}")
    if field_spec.magnitude == 0:
        raise ValidationError("g-factor undefined at zero field")

    theta0, phi0 = field_spec.to_angles()
    rng = np.random.default_rng(seed)
    offsets = rng.uniform(-1.0, 1.0, size=(n_samples, 2))
    theta = theta0 + offsets[:, 0] * np.radians(incl_err_deg)
    phi = phi0 + offsets[:, 1] * np.radians(azim_err_deg)
    directions = np.column_stack([
        np.sin(theta) * np.cos(phi),
        np.sin(theta) * np.sin(phi),
        np.cos(theta),
    ])

    samples = _hole_g_values(model, orientations.strain_stack(),
                             field_spec.magnitude * directions)
    means = samples.mean(axis=0)
    sigmas = samples.std(axis=0, ddof=1)
    logger.info(
        f"Propagated +/-{incl_err_deg} deg / +/-{azim_err_deg} deg alignment errors "
        f"over {n_samples} samples"
    )
    return HoleGFactors.from_values(means, sigmas=sigmas)
