"""Structured tetrahedral meshing of a box, voxel partitions, and boundary patches.

Geometry conventions used throughout the package:

* The computational domain is an axis-aligned box described by an origin
  corner, edge extents, and a grid resolution ``(nx, ny, nz)``.
* Grid nodes are indexed lexicographically, x fastest:
  ``node(i, j, k) = i + (nx + 1) * (j + (ny + 1) * k)``.
* Each hexahedral grid cell is split into six tetrahedra that all share
  the main cell diagonal.  The split is translation invariant, so face
  diagonals of neighbouring cells coincide and the global mesh is
  conforming.
* The six box faces are identified by ids 0..5 with labels
  ``x-, x+, y-, y+, z-, z+``.
* Reconstruction voxels ("pixels") form a coarser axis-aligned grid whose
  resolution must divide the mesh resolution, so every tetrahedron lies in
  exactly one pixel.  Pixels are indexed x fastest, like nodes.
* Boundary load patches tile each non-clamped face with a q-by-q grid of
  equal rectangles.  Patch ids run over faces in id order, then row-major
  over the q-by-q grid of each face.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

FACE_LABELS = ("x-", "x+", "y-", "y+", "z-", "z+")

# Outward unit normal of each box face.
FACE_NORMALS = np.array(
    [
        [-1.0, 0.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, -1.0],
        [0.0, 0.0, 1.0],
    ]
)


def face_id(label: str) -> int:
    """Map a face label like ``"z-"`` to its integer id."""
    try:
        return FACE_LABELS.index(label)
    except ValueError:
        raise InvalidArgumentError(
            f"unknown face label {label!r}, expected one of {FACE_LABELS}"
        ) from None


def _cell_template() -> np.ndarray:
    """Return the (6, 4) corner-index template splitting one cell into tets.

    Corner ids follow ``bx + 2*by + 4*bz`` for corner offsets
    ``(bx, by, bz)`` in {0, 1}^3.  Each tetrahedron walks from corner 0 to
    corner 7 along one of the six axis orderings, so all six share the
    main diagonal.  Vertex order is fixed up to give positive volume.
    """
    corners = np.array([[(i >> a) & 1 for a in range(3)] for i in range(8)])

    def cid(offset):
        return int(offset[0] + 2 * offset[1] + 4 * offset[2])

    eye = np.eye(3, dtype=int)
    tets = []
    for p0, p1, p2 in (
        (0, 1, 2),
        (0, 2, 1),
        (1, 0, 2),
        (1, 2, 0),
        (2, 0, 1),
        (2, 1, 0),
    ):
        ids = [0, cid(eye[p0]), cid(eye[p0] + eye[p1]), 7]
        verts = corners[ids].astype(float)
        vol6 = np.linalg.det(verts[1:] - verts[0])
        if vol6 < 0:
            ids[2], ids[3] = ids[3], ids[2]
        tets.append(ids)
    out = np.array(tets)
    assert len({tuple(sorted(t)) for t in out}) == 6
    return out


_CELL_TETS = _cell_template()


@dataclass
class BoxMesh:
    """Conforming tetrahedral mesh of an axis-aligned box.

    Attributes
    ----------
    origin, extents : (3,) float arrays
        Box corner of smallest coordinates and edge lengths.
    resolution : (3,) int array
        Number of grid cells per axis.
    nodes : (n_nodes, 3) float array
        Node coordinates.
    node_grid : (n_nodes, 3) int array
        Integer lattice coordinates of each node, 0..resolution inclusive.
    tets : (n_tets, 4) int array
        Node ids of each tetrahedron, positively oriented.
    tet_cells : (n_tets, 3) int array
        Grid cell containing each tetrahedron.
    boundary_tris : (n_tris, 3) int array
        Node ids of each boundary triangle.
    boundary_faces : (n_tris,) int array
        Box face id (0..5) each boundary triangle lies on.
    """

    origin: np.ndarray
    extents: np.ndarray
    resolution: np.ndarray
    nodes: np.ndarray
    node_grid: np.ndarray
    tets: np.ndarray
    tet_cells: np.ndarray
    boundary_tris: np.ndarray
    boundary_faces: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_tets(self) -> int:
        return self.tets.shape[0]

    def cell_size(self) -> np.ndarray:
        return self.extents / self.resolution

    def tet_volumes(self) -> np.ndarray:
        """Signed volumes of all tetrahedra (positive by construction)."""
        v = self.nodes[self.tets]
        return np.linalg.det(v[:, 1:] - v[:, :1]) / 6.0

    def tri_areas(self) -> np.ndarray:
        """Areas of all boundary triangles."""
        v = self.nodes[self.boundary_tris]
        cross = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        return 0.5 * np.linalg.norm(cross, axis=1)

    def face_nodes(self, face: int) -> np.ndarray:
        """Ids of all nodes lying on the given box face."""
        axis, side = face // 2, face % 2
        target = 0 if side == 0 else self.resolution[axis]
        return np.flatnonzero(self.node_grid[:, axis] == target)

    def content_hash(self) -> str:
        """Deterministic hex digest of the mesh definition."""
        h = hashlib.sha256()
        for arr in (self.origin, self.extents, self.resolution, self.nodes, self.tets):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def build_box_mesh(origin, extents, resolution) -> BoxMesh:
    """Mesh the box ``[origin, origin + extents]`` with 6 tets per grid cell.

    Parameters
    ----------
    origin, extents : length-3 sequences of floats
        Box placement; all extents must be positive.
    resolution : length-3 sequence of ints
        Cells per axis, each at least 1.

    Returns
    -------
    BoxMesh
    """
    origin = np.asarray(origin, dtype=float)
    extents = np.asarray(extents, dtype=float)
    resolution = np.asarray(resolution)
    if origin.shape != (3,) or extents.shape != (3,) or resolution.shape != (3,):
        raise InvalidArgumentError("origin, extents, resolution must have length 3")
    if not np.all(extents > 0):
        raise InvalidArgumentError(f"extents must be positive, got {extents}")
    if resolution.dtype.kind not in "iu" or np.any(resolution < 1):
        raise InvalidArgumentError(f"resolution must be integers >= 1, got {resolution}")
    resolution = resolution.astype(np.int64)
    nx, ny, nz = (int(r) for r in resolution)

    # Nodes on the tensor grid, x fastest.  linspace pins both endpoints.
    xs = np.linspace(origin[0], origin[0] + extents[0], nx + 1)
    ys = np.linspace(origin[1], origin[1] + extents[1], ny + 1)
    zs = np.linspace(origin[2], origin[2] + extents[2], nz + 1)
    gz, gy, gx = np.meshgrid(np.arange(nz + 1), np.arange(ny + 1), np.arange(nx + 1), indexing="ij")
    node_grid = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()]).astype(np.int64)
    nodes = np.column_stack([xs[node_grid[:, 0]], ys[node_grid[:, 1]], zs[node_grid[:, 2]]])

    def node_id(ix, iy, iz):
        return ix + (nx + 1) * (iy + (ny + 1) * iz)

    # Cells, x fastest, then 6 template tets per cell.
    cz, cy, cx = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    cells = np.column_stack([cx.ravel(), cy.ravel(), cz.ravel()]).astype(np.int64)
    corner_off = np.array([[(i >> a) & 1 for a in range(3)] for i in range(8)])
    # (n_cells, 8) global node id of every cell corner
    corner_nodes = node_id(
        cells[:, None, 0] + corner_off[None, :, 0],
        cells[:, None, 1] + corner_off[None, :, 1],
        cells[:, None, 2] + corner_off[None, :, 2],
    )
    tets = corner_nodes[:, _CELL_TETS].reshape(-1, 4)
    tet_cells = np.repeat(cells, 6, axis=0)

    boundary_tris, counts = _extract_boundary(tets)
    if counts.max() > 2:
        raise InvalidArgumentError("mesh is not conforming, a face is shared by >2 tets")
    boundary_faces = _classify_boundary(boundary_tris, node_grid, resolution)

    mesh = BoxMesh(
        origin=origin,
        extents=extents,
        resolution=resolution,
        nodes=nodes,
        node_grid=node_grid,
        tets=tets,
        tet_cells=tet_cells,
        boundary_tris=boundary_tris,
        boundary_faces=boundary_faces,
    )
    vols = mesh.tet_volumes()
    if not np.all(vols > 0):
        raise InvalidArgumentError("degenerate or inverted tetrahedron produced")
    return mesh


def _extract_boundary(tets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Faces appearing in exactly one tet, plus the multiplicity of every face."""
    local = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
    faces = tets[:, local].reshape(-1, 3)
    faces = np.sort(faces, axis=1)
    order = np.lexsort(faces.T)
    sorted_faces = faces[order]
    is_new = np.ones(len(sorted_faces), dtype=bool)
    is_new[1:] = np.any(sorted_faces[1:] != sorted_faces[:-1], axis=1)
    group = np.cumsum(is_new) - 1
    counts = np.bincount(group)
    boundary = sorted_faces[is_new][counts == 1]
    return boundary, counts


def _classify_boundary(tris, node_grid, resolution) -> np.ndarray:
    """Assign each boundary triangle to the unique box face containing it."""
    grid = node_grid[tris]  # (n_tris, 3, 3)
    out = np.full(len(tris), -1, dtype=np.int64)
    for axis in range(3):
        on_lo = np.all(grid[:, :, axis] == 0, axis=1)
        on_hi = np.all(grid[:, :, axis] == resolution[axis], axis=1)
        out[on_lo] = 2 * axis
        out[on_hi] = 2 * axis + 1
    if np.any(out < 0):
        raise InvalidArgumentError("boundary triangle not on any box face")
    return out


@dataclass
class PixelPartition:
    """Partition of the mesh into axis-aligned reconstruction voxels.

    Attributes
    ----------
    resolution : (3,) int array
        Pixels per axis.
    n_pixels : int
        Total pixel count, the product of the resolution.
    tet_pixel : (n_tets,) int array
        Pixel id containing each tetrahedron.
    pixel_grid : (n_pixels, 3) int array
        Voxel coordinates of each pixel id.
    origin, pixel_size : (3,) float arrays
        Physical placement so pixel boxes can be reconstructed.
    """

    resolution: np.ndarray
    n_pixels: int
    tet_pixel: np.ndarray
    pixel_grid: np.ndarray
    origin: np.ndarray
    pixel_size: np.ndarray

    def elements_in_pixel(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.tet_pixel == k)

    def pixel_box(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Physical (lo, hi) corners of pixel k."""
        lo = self.origin + self.pixel_grid[k] * self.pixel_size
        return lo, lo + self.pixel_size

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.resolution, self.tet_pixel, self.origin, self.pixel_size):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def build_pixel_partition(mesh: BoxMesh, resolution) -> PixelPartition:
    """Group mesh cells into a coarser voxel grid.

    The voxel resolution must divide the mesh resolution on every axis so
    that no tetrahedron straddles a voxel boundary.
    """
    resolution = np.asarray(resolution)
    if resolution.shape != (3,):
        raise InvalidArgumentError("pixel resolution must have length 3")
    if resolution.dtype.kind not in "iu" or np.any(resolution < 1):
        raise InvalidArgumentError(f"pixel resolution must be integers >= 1, got {resolution}")
    resolution = resolution.astype(np.int64)
    if np.any(mesh.resolution % resolution != 0):
        raise InvalidArgumentError(
            f"pixel resolution {tuple(resolution)} does not divide "
            f"mesh resolution {tuple(mesh.resolution)}"
        )
    stride = mesh.resolution // resolution
    px, py, pz = (int(r) for r in resolution)

    pix = mesh.tet_cells // stride
    tet_pixel = pix[:, 0] + px * (pix[:, 1] + py * pix[:, 2])

    kz, ky, kx = np.meshgrid(np.arange(pz), np.arange(py), np.arange(px), indexing="ij")
    pixel_grid = np.column_stack([kx.ravel(), ky.ravel(), kz.ravel()]).astype(np.int64)

    part = PixelPartition(
        resolution=resolution,
        n_pixels=px * py * pz,
        tet_pixel=tet_pixel,
        pixel_grid=pixel_grid,
        origin=mesh.origin.copy(),
        pixel_size=mesh.extents / resolution,
    )
    counts = np.bincount(tet_pixel, minlength=part.n_pixels)
    assert np.all(counts == 6 * np.prod(stride)), "pixel population is not uniform"
    return part


@dataclass
class PatchSet:
    """Square load patches tiling every face except the clamped one.

    Each patch carries a constant traction along the outward face normal,
    scaled so the traction has unit L2 norm over the patch.  Distinct
    patches have disjoint supports, so the patch loads are orthonormal.

    Attributes
    ----------
    dirichlet_face : int
        Id of the clamped face, which carries no patches.
    patches_per_side : int
        Grid dimension q; every loaded face holds q*q patches.
    n_patches : int
        Total patch count M = 5 q^2.
    tri_patch : (n_boundary_tris,) int array
        Patch id of each boundary triangle, -1 on the clamped face.
    face_of_patch : (M,) int array
        Box face id each patch lies on.
    tractions : (M, 3) float array
        Constant traction vector applied on each patch.
    areas : (M,) float array
        Patch areas.
    """

    dirichlet_face: int
    patches_per_side: int
    n_patches: int
    tri_patch: np.ndarray
    face_of_patch: np.ndarray
    tractions: np.ndarray
    areas: np.ndarray

    def tris_in_patch(self, l: int) -> np.ndarray:
        return np.flatnonzero(self.tri_patch == l)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.int64(self.dirichlet_face).tobytes())
        h.update(np.int64(self.patches_per_side).tobytes())
        for arr in (self.tri_patch, self.tractions, self.areas):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def build_patch_set(mesh: BoxMesh, patches_per_side: int, dirichlet_face="z-") -> PatchSet:
    """Tile the five loaded faces of the box with q-by-q traction patches.

    Parameters
    ----------
    mesh : BoxMesh
    patches_per_side : int
        q, must divide both tangential mesh resolutions of every loaded face.
    dirichlet_face : str or int
        Face that is clamped and left unloaded.

    Returns
    -------
    PatchSet
        Patch ids are ordered by face id, then row-major over the face
        grid with the lower-numbered tangential axis fastest.
    """
    q = int(patches_per_side)
    if q < 1:
        raise InvalidArgumentError(f"patches_per_side must be >= 1, got {patches_per_side}")
    dface = face_id(dirichlet_face) if isinstance(dirichlet_face, str) else int(dirichlet_face)
    if not 0 <= dface <= 5:
        raise InvalidArgumentError(f"dirichlet_face id must be 0..5, got {dface}")

    loaded_faces = [f for f in range(6) if f != dface]
    for f in loaded_faces:
        axis = f // 2
        t1, t2 = [a for a in range(3) if a != axis]
        if mesh.resolution[t1] % q or mesh.resolution[t2] % q:
            raise InvalidArgumentError(
                f"patches_per_side {q} does not divide face {FACE_LABELS[f]} "
                f"resolution {(int(mesh.resolution[t1]), int(mesh.resolution[t2]))}"
            )

    n_patches = 5 * q * q
    tri_patch = np.full(mesh.boundary_tris.shape[0], -1, dtype=np.int64)
    face_of_patch = np.empty(n_patches, dtype=np.int64)
    tractions = np.zeros((n_patches, 3))
    tri_area = mesh.tri_areas()
    areas = np.zeros(n_patches)

    for fpos, f in enumerate(loaded_faces):
        axis = f // 2
        t1, t2 = [a for a in range(3) if a != axis]
        s1 = mesh.resolution[t1] // q
        s2 = mesh.resolution[t2] // q
        sel = np.flatnonzero(mesh.boundary_faces == f)
        grid = mesh.node_grid[mesh.boundary_tris[sel]]  # (n, 3, 3)
        # Cell holding each triangle, then its patch on the face grid.
        c1 = grid[:, :, t1].min(axis=1) // s1
        c2 = grid[:, :, t2].min(axis=1) // s2
        pid = fpos * q * q + c2 * q + c1
        tri_patch[sel] = pid
        face_of_patch[fpos * q * q : (fpos + 1) * q * q] = f
        np.add.at(areas, pid, tri_area[sel])

    # Unit L2 normalization: |traction|^2 * area = 1.
    for l in range(n_patches):
        tractions[l] = FACE_NORMALS[face_of_patch[l]] / np.sqrt(areas[l])

    return PatchSet(
        dirichlet_face=dface,
        patches_per_side=q,
        n_patches=n_patches,
        tri_patch=tri_patch,
        face_of_patch=face_of_patch,
        tractions=tractions,
        areas=areas,
    )
