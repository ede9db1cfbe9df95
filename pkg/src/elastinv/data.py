"""Measurement synthesis: inclusion phantoms, difference data, and noise.

The forward pipeline builds two material fields (background and background
plus inclusions), computes their boundary measurement matrices, and works
with the difference V = Lambda_background - Lambda_inclusion.  Noise is an
additive random matrix scaled to a prescribed Frobenius norm, so the
realized perturbation size delta is exact and reproducible from the seed.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import InvalidArgumentError, NumericalFailureError
from .fem import LameField, NtDMatrix
from .mesh import BoxMesh, PixelPartition

# Relative slack when snapping inclusion corners to the pixel lattice.
ALIGNMENT_TOL = 1e-9


@dataclass
class InclusionBox:
    """One axis-aligned inclusion with signed material contrasts.

    Positive contrasts make the inclusion stiffer than the background,
    negative contrasts softer.  The box corners must lie on the pixel
    lattice so that membership is unambiguous per pixel.
    """

    lo: np.ndarray
    hi: np.ndarray
    contrast_lam: float
    contrast_mu: float

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=float)
        self.hi = np.asarray(self.hi, dtype=float)
        if self.lo.shape != (3,) or self.hi.shape != (3,):
            raise InvalidArgumentError("inclusion corners must have length 3")
        if not np.all(self.hi > self.lo):
            raise InvalidArgumentError(f"inclusion box is empty: lo={self.lo}, hi={self.hi}")


@dataclass
class InclusionGeometry:
    """A set of inclusion boxes forming the unknown region."""

    boxes: list[InclusionBox] = dc_field(default_factory=list)

    def validate(self, mesh: BoxMesh) -> None:
        lo = mesh.origin
        hi = mesh.origin + mesh.extents
        scale = np.max(mesh.extents)
        for i, box in enumerate(self.boxes):
            if np.any(box.lo < lo - ALIGNMENT_TOL * scale) or np.any(
                box.hi > hi + ALIGNMENT_TOL * scale
            ):
                raise InvalidArgumentError(
                    f"inclusion box {i} [{box.lo}, {box.hi}] is not inside the mesh box"
                )

    def pixel_mask(self, partition: PixelPartition) -> np.ndarray:
        """Boolean mask of pixels covered by any inclusion box.

        Box corners are required to sit on the pixel lattice within a
        relative tolerance; a pixel is inside when its center is.
        """
        for i, box in enumerate(self.boxes):
            for corner in (box.lo, box.hi):
                rel = (corner - partition.origin) / partition.pixel_size
                snap = np.round(rel)
                if np.any(np.abs(rel - snap) > ALIGNMENT_TOL * np.maximum(1.0, np.abs(rel))):
                    raise InvalidArgumentError(
                        f"inclusion box {i} corner {corner} is not aligned with the "
                        f"pixel lattice (pixel size {partition.pixel_size})"
                    )
        centers = partition.origin + (partition.pixel_grid + 0.5) * partition.pixel_size
        mask = np.zeros(partition.n_pixels, dtype=bool)
        for box in self.boxes:
            inside = np.all((centers > box.lo) & (centers < box.hi), axis=1)
            mask |= inside
        return mask

    def complement_connected(self, partition: PixelPartition) -> bool:
        """True when the pixels outside the inclusions form one 6-connected blob."""
        mask = self.pixel_mask(partition)
        outside = ~mask
        if not outside.any():
            return False
        res = partition.resolution
        grid = outside.reshape(res[2], res[1], res[0])  # z, y, x order
        start = tuple(np.argwhere(grid)[0])
        seen = np.zeros_like(grid)
        queue = deque([start])
        seen[start] = True
        while queue:
            z, y, x = queue.popleft()
            for dz, dy, dx in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)):
                nz, ny, nx = z + dz, y + dy, x + dx
                if 0 <= nz < res[2] and 0 <= ny < res[1] and 0 <= nx < res[0]:
                    if grid[nz, ny, nx] and not seen[nz, ny, nx]:
                        seen[nz, ny, nx] = True
                        queue.append((nz, ny, nx))
        return bool(seen.sum() == outside.sum())


def synthesize_field(
    background: tuple[float, float],
    inclusion: InclusionGeometry,
    mesh: BoxMesh,
    partition: PixelPartition,
) -> LameField:
    """Material field equal to the background plus contrasts on the inclusions.

    Parameters
    ----------
    background : (lam0, mu0)
    inclusion : InclusionGeometry
        Boxes may overlap; later boxes in the list win on overlaps.
    mesh, partition : discretization the field lives on.

    Returns
    -------
    LameField with per-element values.  Elements inherit the value of the
    pixel containing them, so element and pixel truth always agree.
    """
    lam0, mu0 = (float(v) for v in background)
    inclusion.validate(mesh)
    pixel_lam = np.full(partition.n_pixels, lam0)
    pixel_mu = np.full(partition.n_pixels, mu0)
    centers = partition.origin + (partition.pixel_grid + 0.5) * partition.pixel_size
    inclusion.pixel_mask(partition)  # runs the alignment check
    for box in inclusion.boxes:
        inside = np.all((centers > box.lo) & (centers < box.hi), axis=1)
        pixel_lam[inside] = lam0 + box.contrast_lam
        pixel_mu[inside] = mu0 + box.contrast_mu
    return LameField(lam=pixel_lam[partition.tet_pixel], mu=pixel_mu[partition.tet_pixel])


@dataclass
class DifferenceData:
    """Difference of two measurement matrices, possibly with noise.

    Attributes
    ----------
    matrix : (M, M) array, background measurements minus (noisy) inclusion
        measurements.
    delta : realized Frobenius norm of the added noise, zero for exact data.
    eta : relative noise fraction requested.
    seed : noise seed, None for exact data.
    """

    matrix: np.ndarray
    delta: float = 0.0
    eta: float = 0.0
    seed: int | None = None

    @property
    def n_patches(self) -> int:
        return self.matrix.shape[0]

    def flatten(self) -> np.ndarray:
        """Row-major vectorization matching the sensitivity layout."""
        return self.matrix.reshape(-1)


def _check_measurement(ntd: NtDMatrix, name: str, tol: float) -> None:
    defect = ntd.symmetry_defect()
    if defect > tol:
        raise InvalidArgumentError(
            f"{name} measurement matrix asymmetry {defect:.3e} exceeds {tol:.1e}"
        )


def difference_data(
    background: NtDMatrix, perturbed: NtDMatrix, symmetry_tol: float = 1e-10
) -> DifferenceData:
    """Exact difference data from two measurement matrices."""
    if background.entries.shape != perturbed.entries.shape:
        raise InvalidArgumentError(
            f"measurement shapes differ: {background.entries.shape} vs {perturbed.entries.shape}"
        )
    _check_measurement(background, "background", symmetry_tol)
    _check_measurement(perturbed, "perturbed", symmetry_tol)
    return DifferenceData(matrix=background.entries - perturbed.entries)


def add_noise(ntd: NtDMatrix, eta: float, seed: int) -> tuple[np.ndarray, float]:
    """Additive noise with exact Frobenius size eta * ||Lambda||_F.

    The perturbation direction is a uniform [-1, 1] matrix from a seeded
    PCG64 generator, rescaled to unit Frobenius norm, so the realized
    noise norm equals the returned delta exactly and is reproducible.
    """
    if eta < 0:
        raise InvalidArgumentError(f"noise fraction must be >= 0, got {eta}")
    m = ntd.n_patches
    rng = np.random.Generator(np.random.PCG64(int(seed)))
    direction = rng.uniform(-1.0, 1.0, size=(m, m))
    norm = np.linalg.norm(direction, "fro")
    delta = float(eta) * ntd.frobenius_norm()
    return ntd.entries + delta * (direction / norm), delta


def noisy_difference(
    background: NtDMatrix,
    perturbed: NtDMatrix,
    eta: float,
    seed: int,
    symmetry_tol: float = 1e-10,
) -> DifferenceData:
    """Difference data where the inclusion measurement carries noise."""
    if background.entries.shape != perturbed.entries.shape:
        raise InvalidArgumentError(
            f"measurement shapes differ: {background.entries.shape} vs {perturbed.entries.shape}"
        )
    _check_measurement(background, "background", symmetry_tol)
    _check_measurement(perturbed, "perturbed", symmetry_tol)
    noisy, delta = add_noise(perturbed, eta, seed)
    return DifferenceData(
        matrix=background.entries - noisy, delta=delta, eta=float(eta), seed=int(seed)
    )


def symmetrized_abs(matrix: np.ndarray, delta: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Spectral absolute value of a matrix plus its shifted Cholesky factor.

    The input is symmetrized, its eigenvalues replaced by their absolute
    values, and ``delta * I`` added before factorization.

    Returns
    -------
    (abs_matrix, chol_lower)
        ``chol_lower @ chol_lower.T == delta * I + abs_matrix``.

    Raises
    ------
    NumericalFailureError
        If the eigendecomposition produces non-finite values or the
        shifted matrix is not numerically positive definite (possible only
        for delta = 0 with singular data; add a small delta in that case).
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {a.shape}")
    if delta < 0:
        raise InvalidArgumentError(f"delta must be >= 0, got {delta}")
    sym = 0.5 * (a + a.T)
    eigvals, eigvecs = np.linalg.eigh(sym)
    if not np.all(np.isfinite(eigvals)):
        raise NumericalFailureError("non-finite eigenvalues in symmetrized absolute value")
    abs_matrix = (eigvecs * np.abs(eigvals)) @ eigvecs.T
    abs_matrix = 0.5 * (abs_matrix + abs_matrix.T)
    shifted = abs_matrix + delta * np.eye(a.shape[0])
    try:
        chol = np.linalg.cholesky(shifted)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(
            "shifted absolute difference matrix is not positive definite "
            f"({exc}); use a small positive noise floor delta"
        ) from exc
    return abs_matrix, chol
