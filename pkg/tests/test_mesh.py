"""Mesh construction: tetrahedra, boundary extraction, pixels, patches."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from elastinv.errors import InvalidArgumentError
from elastinv.mesh import (
    FACE_LABELS,
    FACE_NORMALS,
    _CELL_TETS,
    build_box_mesh,
    build_patch_set,
    build_pixel_partition,
    face_id,
)

UNIT = ((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))


def test_face_id_labels():
    for i, label in enumerate(FACE_LABELS):
        assert face_id(label) == i
    with pytest.raises(InvalidArgumentError):
        face_id("w+")


def test_cell_template_partitions_cube():
    corners = np.array([[(i >> a) & 1 for a in range(3)] for i in range(8)], dtype=float)
    assert _CELL_TETS.shape == (6, 4)
    # Six distinct tets, all sharing the main diagonal 0-7, each of volume 1/6.
    assert len({tuple(sorted(t)) for t in _CELL_TETS}) == 6
    total = 0.0
    for tet in _CELL_TETS:
        assert 0 in tet and 7 in tet
        v = corners[tet]
        vol = np.linalg.det(v[1:] - v[0]) / 6.0
        assert vol > 0
        total += vol
    assert total == pytest.approx(1.0, rel=1e-14)


def test_desk_counts():
    mesh = build_box_mesh(*UNIT, (12, 12, 12))
    assert mesh.n_nodes == 13**3
    assert mesh.n_tets == 6 * 12**3
    assert mesh.boundary_tris.shape[0] == 6 * 2 * 12**2
    assert mesh.tet_volumes().min() > 0


def test_node_ordering_x_fastest():
    mesh = build_box_mesh((1.0, 2.0, 3.0), (2.0, 4.0, 6.0), (2, 3, 4))
    nx, ny, nz = 2, 3, 4
    xs = np.linspace(1.0, 3.0, nx + 1)
    ys = np.linspace(2.0, 6.0, ny + 1)
    zs = np.linspace(3.0, 9.0, nz + 1)
    for k in range(nz + 1):
        for j in range(ny + 1):
            for i in range(nx + 1):
                nid = i + (nx + 1) * (j + (ny + 1) * k)
                assert np.array_equal(mesh.node_grid[nid], (i, j, k))
                assert np.allclose(mesh.nodes[nid], (xs[i], ys[j], zs[k]))


@given(
    res=st.tuples(*[st.integers(min_value=1, max_value=3)] * 3),
    origin=st.tuples(*[st.floats(-5, 5, allow_nan=False)] * 3),
    extents=st.tuples(*[st.floats(0.1, 10, allow_nan=False)] * 3),
)
def test_volumes_fill_box(res, origin, extents):
    mesh = build_box_mesh(origin, extents, res)
    vols = mesh.tet_volumes()
    assert np.all(vols > 0)
    assert np.sum(vols) == pytest.approx(np.prod(extents), rel=1e-12)


def test_mesh_is_conforming():
    mesh = build_box_mesh(*UNIT, (3, 2, 2))
    local = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
    faces = np.sort(mesh.tets[:, local].reshape(-1, 3), axis=1)
    _, counts = np.unique(faces, axis=0, return_counts=True)
    assert counts.max() == 2
    # Total face incidences split exactly into boundary plus paired interior.
    assert np.sum(counts == 1) == mesh.boundary_tris.shape[0]


def test_boundary_classification_and_areas():
    extents = (2.0, 3.0, 5.0)
    mesh = build_box_mesh((0.0, 0.0, 0.0), extents, (4, 6, 2))
    areas = mesh.tri_areas()
    face_area = {0: 15.0, 1: 15.0, 2: 10.0, 3: 10.0, 4: 6.0, 5: 6.0}
    for face in range(6):
        sel = mesh.boundary_faces == face
        assert np.sum(areas[sel]) == pytest.approx(face_area[face], rel=1e-12)
        # Every node of every triangle lies on the claimed face plane.
        axis, side = face // 2, face % 2
        coords = mesh.nodes[mesh.boundary_tris[sel]][:, :, axis]
        expected = extents[axis] if side else 0.0
        assert np.allclose(coords, expected)


def test_build_box_mesh_validation():
    with pytest.raises(InvalidArgumentError):
        build_box_mesh((0, 0, 0), (1, 1), (2, 2, 2))
    with pytest.raises(InvalidArgumentError):
        build_box_mesh((0, 0, 0), (1, -1, 1), (2, 2, 2))
    with pytest.raises(InvalidArgumentError):
        build_box_mesh((0, 0, 0), (1, 1, 1), (2, 0, 2))
    with pytest.raises(InvalidArgumentError):
        build_box_mesh((0, 0, 0), (1, 1, 1), (2.5, 2, 2))


def test_mesh_content_hash_deterministic():
    a = build_box_mesh(*UNIT, (3, 3, 3))
    b = build_box_mesh(*UNIT, (3, 3, 3))
    c = build_box_mesh(*UNIT, (3, 3, 2))
    assert a.content_hash() == b.content_hash()
    assert a.content_hash() != c.content_hash()


def test_partition_assignment_matches_centroids():
    mesh = build_box_mesh((0.0, -1.0, 0.5), (2.0, 2.0, 1.5), (4, 4, 6))
    part = build_pixel_partition(mesh, (2, 4, 3))
    assert part.n_pixels == 24
    centroids = mesh.nodes[mesh.tets].mean(axis=1)
    for k in range(part.n_pixels):
        lo, hi = part.pixel_box(k)
        inside = centroids[part.elements_in_pixel(k)]
        assert np.all(inside > lo - 1e-12) and np.all(inside < hi + 1e-12)
    counts = np.bincount(part.tet_pixel, minlength=part.n_pixels)
    assert np.all(counts == counts[0])


def test_partition_divisibility_required():
    mesh = build_box_mesh(*UNIT, (4, 4, 4))
    with pytest.raises(InvalidArgumentError):
        build_pixel_partition(mesh, (3, 2, 2))
    with pytest.raises(InvalidArgumentError):
        build_pixel_partition(mesh, (2, 2))
    with pytest.raises(InvalidArgumentError):
        build_pixel_partition(mesh, (2, 2, 0))


def test_patch_set_desk_layout():
    mesh = build_box_mesh(*UNIT, (12, 12, 12))
    patches = build_patch_set(mesh, 2, dirichlet_face="z-")
    assert patches.n_patches == 20
    assert patches.dirichlet_face == face_id("z-")
    assert np.all(patches.areas == pytest.approx(0.25, rel=1e-12))
    # 6x6 cells of 2 triangles under each patch on every loaded face.
    for l in range(patches.n_patches):
        assert patches.tris_in_patch(l).size == 72
    # The clamped face carries no patches.
    clamped = mesh.boundary_faces == face_id("z-")
    assert np.all(patches.tri_patch[clamped] == -1)
    assert np.all(patches.tri_patch[~clamped] >= 0)


def test_patch_tractions_unit_normalized():
    mesh = build_box_mesh((0.0, 0.0, 0.0), (2.0, 1.0, 1.0), (4, 2, 2))
    patches = build_patch_set(mesh, 1, dirichlet_face="x+")
    for l in range(patches.n_patches):
        t = patches.tractions[l]
        face = patches.face_of_patch[l]
        # Outward direction, and |t|^2 * area == 1 for unit load size.
        assert np.dot(t, FACE_NORMALS[face]) > 0
        assert np.dot(t, t) * patches.areas[l] == pytest.approx(1.0, rel=1e-12)


def test_patch_divisibility_required():
    mesh = build_box_mesh(*UNIT, (12, 12, 12))
    with pytest.raises(InvalidArgumentError):
        build_patch_set(mesh, 5)
    with pytest.raises(InvalidArgumentError):
        build_patch_set(mesh, 0)
    with pytest.raises(InvalidArgumentError):
        build_patch_set(mesh, 2, dirichlet_face="q-")


def test_patch_content_hash_tracks_layout():
    mesh = build_box_mesh(*UNIT, (4, 4, 4))
    a = build_patch_set(mesh, 2)
    b = build_patch_set(mesh, 2)
    c = build_patch_set(mesh, 1)
    d = build_patch_set(mesh, 2, dirichlet_face="z+")
    assert a.content_hash() == b.content_hash()
    assert len({a.content_hash(), c.content_hash(), d.content_hash()}) == 3
