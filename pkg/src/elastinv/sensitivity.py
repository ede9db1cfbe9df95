"""Pixelwise sensitivity of the boundary measurements to material changes.

For background displacement fields u^(1)..u^(M), the sensitivity of the
measurement matrix to a unit material change on pixel k is captured by two
M-by-M Gram matrices per pixel: one pairing divergences (volumetric
response) and one pairing symmetric gradients (shear response).  Each is
positive semidefinite by construction, and summing over all pixels
reproduces the corresponding global energy pairing.

The flattened layout stacks matrix entry (l, k) at row l * M + k, the
row-major vectorization, matching the vectorized difference data used by
the linearized reconstruction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .fem import ForwardSolution, element_geometry, strain_fields
from .mesh import BoxMesh, PatchSet, PixelPartition


@dataclass
class SensitivitySet:
    """Per-pixel sensitivity Gram matrices.

    Attributes
    ----------
    vol : (p, M, M) array
        Divergence pairings per pixel.
    shear : (p, M, M) array
        Symmetric gradient pairings per pixel, including the factor 2.
    key : dict
        Identity of the inputs (content hashes and background parameters)
        used to validate cache hits.
    """

    vol: np.ndarray
    shear: np.ndarray
    key: dict

    @property
    def n_pixels(self) -> int:
        return self.vol.shape[0]

    @property
    def n_patches(self) -> int:
        return self.vol.shape[1]

    def vol_columns(self) -> np.ndarray:
        """Flattened volumetric sensitivities, shape (M*M, p)."""
        return self.vol.reshape(self.n_pixels, -1).T

    def shear_columns(self) -> np.ndarray:
        """Flattened shear sensitivities, shape (M*M, p)."""
        return self.shear.reshape(self.n_pixels, -1).T


def sensitivity_key(
    mesh: BoxMesh, partition: PixelPartition, patches: PatchSet, lam0: float, mu0: float
) -> dict:
    """Cache key identifying one background sensitivity computation."""
    return {
        "mesh": mesh.content_hash(),
        "partition": partition.content_hash(),
        "patches": patches.content_hash(),
        "lam0": float(lam0),
        "mu0": float(mu0),
    }


def compute_sensitivities(
    mesh: BoxMesh,
    partition: PixelPartition,
    solution: ForwardSolution,
    key: dict | None = None,
) -> SensitivitySet:
    """Assemble the per-pixel Gram matrices from background displacements."""
    geom = element_geometry(mesh)
    divs, syms = strain_fields(geom, solution.displacements)
    m = divs.shape[0]
    p = partition.n_pixels
    vol = np.empty((p, m, m))
    shear = np.empty((p, m, m))
    for k in range(p):
        idx = partition.elements_in_pixel(k)
        w = geom.volumes[idx]
        d = divs[:, idx]
        vol[k] = (d * w) @ d.T
        s = syms[:, idx].reshape(m, -1)
        shear[k] = 2.0 * (s * np.repeat(w, 9)) @ s.T
    # Enforce exact symmetry; the products are symmetric up to roundoff.
    vol = 0.5 * (vol + vol.transpose(0, 2, 1))
    shear = 0.5 * (shear + shear.transpose(0, 2, 1))
    return SensitivitySet(vol=vol, shear=shear, key=key or {})


def combine_tau(sens: SensitivitySet, tau: float) -> np.ndarray:
    """Combined per-pixel sensitivities shear + tau * vol, shape (p, M, M)."""
    if tau < 0:
        raise InvalidArgumentError(f"tau must be >= 0, got {tau}")
    return sens.shear + tau * sens.vol


def save_cache(path, sens: SensitivitySet) -> None:
    """Write the sensitivity set and its key to a compressed npz file."""
    np.savez_compressed(
        path, vol=sens.vol, shear=sens.shear, key=json.dumps(sens.key, sort_keys=True)
    )


def load_cache(path, key: dict) -> SensitivitySet | None:
    """Load a cached sensitivity set, or None when the key does not match."""
    try:
        with np.load(path, allow_pickle=False) as npz:
            stored = json.loads(str(npz["key"]))
            if stored != key:
                return None
            return SensitivitySet(vol=npz["vol"], shear=npz["shear"], key=stored)
    except FileNotFoundError:
        return None
