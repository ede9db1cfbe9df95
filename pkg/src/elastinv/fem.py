"""Linear elasticity forward solver on tetrahedral meshes.

Piecewise linear displacements with one-point integration, which is exact
for the piecewise constant material fields used here.  The boundary value
problem clamps one box face and applies traction patches on the rest; the
quantity of interest is the force-to-displacement map whose (l, k) entry
is the work of load patch l against the displacement caused by patch k.

Dirichlet conditions are imposed by eliminating the constrained rows and
columns.  Systems are solved by sparse LU factorization shared across all
load cases, with a conjugate gradient fallback; the choice is reported in
the solver info so runs can record it.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgumentError, NumericalFailureError
from .mesh import BoxMesh, PatchSet


@dataclass
class LameField:
    """Piecewise constant material parameters, one pair per tetrahedron."""

    lam: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=float)
        self.mu = np.asarray(self.mu, dtype=float)
        if self.lam.shape != self.mu.shape or self.lam.ndim != 1:
            raise InvalidArgumentError("lam and mu must be 1-d arrays of equal length")
        if not (np.all(self.lam > 0) and np.all(self.mu > 0)):
            raise InvalidArgumentError("material parameters must be positive")

    @classmethod
    def uniform(cls, mesh: BoxMesh, lam0: float, mu0: float) -> "LameField":
        n = mesh.n_tets
        return cls(lam=np.full(n, float(lam0)), mu=np.full(n, float(mu0)))


@dataclass
class ElementGeometry:
    """Cached per-element quantities for assembly and strain evaluation."""

    tets: np.ndarray      # (T, 4) node ids
    volumes: np.ndarray   # (T,)
    grads: np.ndarray     # (T, 4, 3) gradients of the four shape functions


def element_geometry(mesh: BoxMesh) -> ElementGeometry:
    """Volumes and shape function gradients for every tetrahedron."""
    verts = mesh.nodes[mesh.tets]
    edges = verts[:, 1:] - verts[:, :1]          # rows are p_i - p_0
    volumes = np.linalg.det(edges) / 6.0
    grads = np.empty((mesh.n_tets, 4, 3))
    # Rows of inv(J) are the gradients of the barycentric coordinates 1..3,
    # where J has the edge vectors as columns.
    grads[:, 1:, :] = np.linalg.inv(edges.transpose(0, 2, 1))
    grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
    return ElementGeometry(tets=mesh.tets, volumes=volumes, grads=grads)


def assemble_stiffness(mesh: BoxMesh, field: LameField, geom: ElementGeometry | None = None) -> sp.csr_matrix:
    """Assemble the elastic stiffness matrix on all displacement dofs.

    The bilinear form is the integral of
    ``2 mu sym(grad u) : sym(grad v) + lam div(u) div(v)``.

    Returns
    -------
    scipy.sparse.csr_matrix of shape (3 n_nodes, 3 n_nodes), symmetric.
    """
    if field.lam.shape[0] != mesh.n_tets:
        raise InvalidArgumentError(
            f"material field has {field.lam.shape[0]} entries for {mesh.n_tets} elements"
        )
    if geom is None:
        geom = element_geometry(mesh)
    G = geom.grads
    mu_vol = field.mu * geom.volumes
    lam_vol = field.lam * geom.volumes

    # K[(i,a),(j,b)] = vol * (mu * (delta_ab G_i.G_j + G_ib G_ja) + lam * G_ia G_jb)
    gg = np.einsum("tid,tjd->tij", G, G)
    ke = np.einsum("t,tij,ab->tiajb", mu_vol, gg, np.eye(3))
    ke += np.einsum("t,tib,tja->tiajb", mu_vol, G, G)
    ke += np.einsum("t,tia,tjb->tiajb", lam_vol, G, G)

    dofs = (3 * geom.tets[:, :, None] + np.arange(3)).reshape(-1, 12)
    rows = np.repeat(dofs, 12, axis=1).ravel()
    cols = np.tile(dofs, (1, 12)).ravel()
    n = 3 * mesh.n_nodes
    return sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def dirichlet_dofs(mesh: BoxMesh, face: int) -> np.ndarray:
    """All displacement dofs clamped on the given box face."""
    nodes = mesh.face_nodes(face)
    return (3 * nodes[:, None] + np.arange(3)).ravel()


def assemble_patch_loads(mesh: BoxMesh, patches: PatchSet) -> np.ndarray:
    """Nodal load vectors of all traction patches, shape (M, 3 n_nodes).

    Constant traction against a linear test function integrates to one
    third of the traction times the triangle area at each corner node.
    """
    loads = np.zeros((patches.n_patches, 3 * mesh.n_nodes))
    areas = mesh.tri_areas()
    active = patches.tri_patch >= 0
    tri_ids = np.flatnonzero(active)
    pid = patches.tri_patch[tri_ids]
    contrib = patches.tractions[pid] * (areas[tri_ids] / 3.0)[:, None]
    for corner in range(3):
        nodes = mesh.boundary_tris[tri_ids, corner]
        for a in range(3):
            np.add.at(loads, (pid, 3 * nodes + a), contrib[:, a])
    return loads


@dataclass
class SolverInfo:
    """Record of how the linear systems were solved."""

    method: str
    max_rel_residual: float
    fallback_reason: str | None = None

    def as_dict(self) -> dict:
        return {
            "method": self.method,
            "max_rel_residual": self.max_rel_residual,
            "fallback_reason": self.fallback_reason,
        }


def solve_displacement(
    stiffness: sp.spmatrix,
    loads: np.ndarray,
    fixed_dofs: np.ndarray,
    tol: float = 1e-10,
    prefer_direct: bool = True,
) -> tuple[np.ndarray, SolverInfo]:
    """Solve the clamped elasticity system for one or more load vectors.

    Parameters
    ----------
    stiffness : sparse matrix on all dofs, as from assemble_stiffness.
    loads : (n_dofs,) or (n_loads, n_dofs) array.
    fixed_dofs : dof ids forced to zero.
    tol : relative residual each solution must satisfy.
    prefer_direct : try sparse LU first, fall back to conjugate gradients.

    Returns
    -------
    (solutions, info)
        Solutions have the same leading shape as ``loads`` with zeros in
        the fixed dofs.  Solves run sequentially in load order, so results
        are deterministic.
    """
    single = loads.ndim == 1
    loads = np.atleast_2d(loads)
    n = stiffness.shape[0]
    if loads.shape[1] != n:
        raise InvalidArgumentError(f"load length {loads.shape[1]} != system size {n}")
    free = np.ones(n, dtype=bool)
    free[fixed_dofs] = False
    if not free.any():
        raise InvalidArgumentError("all dofs are fixed")
    k_red = stiffness.tocsr()[free][:, free].tocsc()
    f_red = loads[:, free]

    sols = np.zeros_like(loads)
    method = "sparse-lu"
    fallback_reason = None

    lu = None
    if prefer_direct:
        try:
            lu = spla.splu(k_red)
        except Exception as exc:  # singular factor or resource failure
            fallback_reason = f"sparse LU failed: {exc}"
    else:
        fallback_reason = "direct solver disabled"

    max_rel = 0.0
    norm_k = spla.norm(k_red)
    for i, rhs in enumerate(f_red):
        rhs_norm = np.linalg.norm(rhs)
        if rhs_norm == 0.0:
            continue
        x = lu.solve(rhs) if lu is not None else None
        if x is None or not np.all(np.isfinite(x)):
            x = _cg_solve(k_red, rhs, tol)
            method = "conjugate-gradient"
        rel = np.linalg.norm(k_red @ x - rhs) / rhs_norm
        if rel > tol:
            # Polish with CG before giving up; the LU result seeds it.
            x = _cg_solve(k_red, rhs, tol, x0=x)
            method = "sparse-lu+cg-refine" if lu is not None else "conjugate-gradient"
            rel = np.linalg.norm(k_red @ x - rhs) / rhs_norm
        if rel > tol:
            raise NumericalFailureError(
                f"forward solve {i}: relative residual {rel:.3e} exceeds tol {tol:.1e} "
                f"(matrix norm {norm_k:.3e})"
            )
        max_rel = max(max_rel, rel)
        sols[i, free] = x

    info = SolverInfo(method=method, max_rel_residual=max_rel, fallback_reason=fallback_reason)
    return (sols[0] if single else sols), info


def _cg_solve(k_red, rhs, tol, x0=None):
    """Jacobi preconditioned CG, tolerances on the true residual."""
    diag = k_red.diagonal()
    if np.any(diag <= 0):
        raise NumericalFailureError("stiffness diagonal not positive, system is not SPD")
    precond = spla.LinearOperator(k_red.shape, matvec=lambda v: v / diag)
    x, code = spla.cg(k_red, rhs, x0=x0, rtol=tol * 1e-2, atol=0.0, M=precond, maxiter=20000)
    if code != 0:
        raise NumericalFailureError(f"conjugate gradient did not converge (info={code})")
    return x


@dataclass
class ForwardSolution:
    """Displacement fields of all patch loads for one material field.

    Attributes
    ----------
    displacements : (M, n_nodes, 3) array
        One displacement field per load patch.
    loads : (M, 3 n_nodes) array
        The assembled nodal load vectors.
    fixed_dofs : int array
        Dofs clamped to zero.
    info : SolverInfo
    """

    displacements: np.ndarray
    loads: np.ndarray
    fixed_dofs: np.ndarray
    info: SolverInfo


@dataclass
class NtDMatrix:
    """Boundary force-to-displacement matrix for one material field.

    entries[l, k] is the work of load patch l against the displacement
    response to load patch k.  The matrix is symmetric positive definite
    up to solver accuracy.
    """

    entries: np.ndarray
    metadata: dict = dc_field(default_factory=dict)

    @property
    def n_patches(self) -> int:
        return self.entries.shape[0]

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.entries, "fro"))

    def symmetry_defect(self) -> float:
        """Relative asymmetry, zero for exact reciprocity."""
        a = self.entries
        denom = np.linalg.norm(a, "fro")
        if denom == 0:
            return 0.0
        return float(np.linalg.norm(a - a.T, "fro") / denom)


def solve_forward(
    mesh: BoxMesh,
    field: LameField,
    patches: PatchSet,
    tol: float = 1e-10,
    prefer_direct: bool = True,
) -> ForwardSolution:
    """Solve the clamped elasticity problem for every patch load."""
    stiffness = assemble_stiffness(mesh, field)
    loads = assemble_patch_loads(mesh, patches)
    fixed = dirichlet_dofs(mesh, patches.dirichlet_face)
    flat, info = solve_displacement(stiffness, loads, fixed, tol=tol, prefer_direct=prefer_direct)
    disp = flat.reshape(patches.n_patches, mesh.n_nodes, 3)
    return ForwardSolution(displacements=disp, loads=loads, fixed_dofs=fixed, info=info)


def ntd_from_solution(solution: ForwardSolution, symmetry_tol: float = 1e-10) -> NtDMatrix:
    """Pair loads with displacements to form the measurement matrix."""
    m = solution.loads.shape[0]
    entries = solution.loads @ solution.displacements.reshape(m, -1).T
    ntd = NtDMatrix(entries=entries, metadata={"solver": solution.info.as_dict()})
    defect = ntd.symmetry_defect()
    if defect > symmetry_tol:
        raise NumericalFailureError(
            f"measurement matrix asymmetry {defect:.3e} exceeds {symmetry_tol:.1e}, "
            "forward solves are not accurate enough"
        )
    return ntd


def compute_ntd(
    mesh: BoxMesh,
    field: LameField,
    patches: PatchSet,
    tol: float = 1e-10,
    prefer_direct: bool = True,
) -> NtDMatrix:
    """Forward solves plus measurement assembly in one call."""
    return ntd_from_solution(solve_forward(mesh, field, patches, tol=tol, prefer_direct=prefer_direct))


def strain_fields(geom: ElementGeometry, displacements: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-element divergence and symmetric gradient of displacement fields.

    Parameters
    ----------
    geom : ElementGeometry
    displacements : (n_nodes, 3) or (M, n_nodes, 3) array

    Returns
    -------
    (divs, symgrads)
        divs has shape (T,) or (M, T); symgrads has shape (T, 3, 3) or
        (M, T, 3, 3).  Both are constant per element for P1 displacements.
    """
    single = displacements.ndim == 2
    u = displacements[None] if single else displacements
    nodal = u[:, geom.tets]                       # (M, T, 4, 3)
    grad = np.einsum("mtia,tib->mtab", nodal, geom.grads)
    sym = 0.5 * (grad + grad.transpose(0, 1, 3, 2))
    div = np.einsum("mtaa->mt", grad)
    if single:
        return div[0], sym[0]
    return div, sym


def energy_inner_product(
    geom: ElementGeometry,
    field: LameField,
    div1: np.ndarray,
    sym1: np.ndarray,
    div2: np.ndarray,
    sym2: np.ndarray,
) -> float:
    """Elastic energy pairing of two strain states.

    Integrates ``2 mu sym1 : sym2 + lam div1 div2`` over the mesh.
    """
    shear = np.einsum("tab,tab->t", sym1, sym2)
    return float(np.sum(geom.volumes * (2.0 * field.mu * shear + field.lam * div1 * div2)))
