"""Artifact writers and readers for run outputs.

Matrices go to plain CSV with 17 significant digits, which round-trips
IEEE doubles exactly.  Voxel maps go to one CSV row per pixel with the
fixed header ``pixel,ix,iy,iz,nu,kappa,lambda,mu,inside_truth``.  Meshes
and cell fields can optionally be dumped as legacy ASCII VTK for visual
inspection.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import InvalidArgumentError
from .mesh import BoxMesh, PixelPartition

FLOAT_FMT = "%.17g"
VOXEL_HEADER = "pixel,ix,iy,iz,nu,kappa,lambda,mu,inside_truth"


def write_matrix_csv(path, matrix: np.ndarray) -> None:
    """Full dense matrix, row-major, comma separated, 17 significant digits."""
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    np.savetxt(path, a, fmt=FLOAT_FMT, delimiter=",")


def read_matrix_csv(path) -> np.ndarray:
    matrix = np.loadtxt(path, delimiter=",", ndmin=2)
    return matrix


def write_scalar(path, value: float) -> None:
    with open(path, "w") as fh:
        fh.write(FLOAT_FMT % float(value) + "\n")


def read_scalar(path) -> float:
    with open(path) as fh:
        return float(fh.read().strip())


def write_voxel_csv(
    path,
    partition: PixelPartition,
    nu: np.ndarray,
    kappa: np.ndarray,
    lam_map: np.ndarray,
    mu_map: np.ndarray,
    truth_mask: np.ndarray,
) -> None:
    """One row per pixel with contrasts, absolute maps, and the truth flag."""
    p = partition.n_pixels
    for name, arr in (("nu", nu), ("kappa", kappa), ("lambda", lam_map), ("mu", mu_map)):
        if np.shape(arr) != (p,):
            raise InvalidArgumentError(f"{name} must have shape ({p},), got {np.shape(arr)}")
    with open(path, "w") as fh:
        fh.write(VOXEL_HEADER + "\n")
        for k in range(p):
            ix, iy, iz = partition.pixel_grid[k]
            fh.write(
                f"{k},{ix},{iy},{iz},"
                + ",".join(FLOAT_FMT % v for v in (nu[k], kappa[k], lam_map[k], mu_map[k]))
                + f",{int(bool(truth_mask[k]))}\n"
            )


def write_constraints_csv(path, beta: np.ndarray, caps: np.ndarray) -> None:
    """Per-pixel spectral caps and the effective box bounds."""
    with open(path, "w") as fh:
        fh.write("pixel,beta,cap\n")
        for k in range(len(beta)):
            fh.write(f"{k}," + FLOAT_FMT % beta[k] + "," + FLOAT_FMT % caps[k] + "\n")


def write_flags_csv(path, partition: PixelPartition, flags: np.ndarray) -> None:
    """Boolean pixel map, one row per pixel."""
    with open(path, "w") as fh:
        fh.write("pixel,ix,iy,iz,flag\n")
        for k in range(partition.n_pixels):
            ix, iy, iz = partition.pixel_grid[k]
            fh.write(f"{k},{ix},{iy},{iz},{int(bool(flags[k]))}\n")


def write_metadata(path, metadata: dict) -> None:
    with open(path, "w") as fh:
        json.dump(metadata, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_vtk(path, mesh: BoxMesh, cell_data: dict[str, np.ndarray] | None = None, title="run output") -> None:
    """Legacy ASCII VTK dump of the tetrahedral mesh with cell scalars."""
    cell_data = cell_data or {}
    for name, arr in cell_data.items():
        if np.shape(arr) != (mesh.n_tets,):
            raise InvalidArgumentError(
                f"cell field {name!r} must have shape ({mesh.n_tets},), got {np.shape(arr)}"
            )
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title[:255] + "\n")
        fh.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_nodes} double\n")
        for x, y, z in mesh.nodes:
            fh.write(f"{x!r} {y!r} {z!r}\n")
        fh.write(f"CELLS {mesh.n_tets} {5 * mesh.n_tets}\n")
        for tet in mesh.tets:
            fh.write("4 " + " ".join(str(n) for n in tet) + "\n")
        fh.write(f"CELL_TYPES {mesh.n_tets}\n")
        fh.write("\n".join(["10"] * mesh.n_tets) + "\n")
        if cell_data:
            fh.write(f"CELL_DATA {mesh.n_tets}\n")
            for name, arr in cell_data.items():
                fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
                fh.write("\n".join(FLOAT_FMT % v for v in np.asarray(arr, dtype=float)) + "\n")


def pixel_field_to_cells(partition: PixelPartition, values: np.ndarray) -> np.ndarray:
    """Broadcast a per-pixel field to per-element values for VTK dumps."""
    return np.asarray(values)[partition.tet_pixel]
