"""Linear-triangle finite element machinery.

Provides the reference element, a degree-2 quadrature, vectorised sparse
assembly for transient scalar diffusion and plane-strain elasticity, and a
direct sparse solve with symmetric Dirichlet elimination.  scipy supplies
the CSR storage and the LU factorisation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from corrocrack.mesh import CONCRETE, STEEL, Mesh


class AssemblyError(ValueError):
    """Raised when assembly preconditions are violated."""


class SolverError(RuntimeError):
    """Raised when the direct factorisation or solve fails."""


def tri3_shape(xi: float, eta: float) -> tuple[np.ndarray, np.ndarray]:
    """Shape values and reference gradients of the linear triangle.

    N = (1 - xi - eta, xi, eta); gradients are constant.
    """
    n = np.array([1.0 - xi - eta, xi, eta])
    dn = np.array([[-1.0, 1.0, 0.0],
                   [-1.0, 0.0, 1.0]])
    return n, dn


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (nq, 2) reference coordinates
    weights: np.ndarray  # (nq,), summing to the reference area 1/2
    degree: int

    def __post_init__(self):
        if np.any(self.weights <= 0.0):
            raise AssemblyError("quadrature weights must be positive")


def tri3_quadrature() -> QuadratureRule:
    """Three-point, degree-2 rule on the reference triangle."""
    pts = np.array([[1.0 / 6.0, 1.0 / 6.0],
                    [2.0 / 3.0, 1.0 / 6.0],
                    [1.0 / 6.0, 2.0 / 3.0]])
    w = np.full(3, 1.0 / 6.0)
    return QuadratureRule(points=pts, weights=w, degree=2)


@dataclass(frozen=True)
class SparseSystem:
    """Square CSR system with right-hand side and Dirichlet constraints."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dirichlet: list[tuple[int, float]] = field(default_factory=list)

    def __post_init__(self):
        n, m = self.matrix.shape
        if n != m:
            raise AssemblyError("system matrix must be square")
        if self.rhs.shape != (n,):
            raise AssemblyError("rhs dimension does not match the matrix")
        ids = [d for d, _ in self.dirichlet]
        if len(ids) != len(set(ids)):
            raise AssemblyError("constrained dofs must appear at most once")
        if ids and (min(ids) < 0 or max(ids) >= n):
            raise AssemblyError("constraint dof id out of range")


@dataclass(frozen=True)
class Tri3Cache:
    """Per-mesh precomputed element geometry shared by all assemblies."""

    mesh: Mesh
    quad: QuadratureRule
    areas: np.ndarray  # (ne,)
    grads: np.ndarray  # (ne, 2, 3) physical shape gradients
    shape: np.ndarray  # (nq, 3) shape values at quadrature points
    concrete: np.ndarray  # indices of concrete triangles
    steel: np.ndarray  # indices of steel triangles
    c_dof: np.ndarray  # (n_nodes,) transport dof id or -1
    c_nodes: np.ndarray  # node ids carrying transport/phase-field dofs

    @property
    def n_cdof(self) -> int:
        return len(self.c_nodes)


def build_cache(mesh: Mesh) -> Tri3Cache:
    quad = tri3_quadrature()
    p = mesh.nodes[mesh.tris]
    x, y = p[..., 0], p[..., 1]
    # Jacobian entries of the affine map from the reference triangle.
    j11 = x[:, 1] - x[:, 0]
    j12 = x[:, 2] - x[:, 0]
    j21 = y[:, 1] - y[:, 0]
    j22 = y[:, 2] - y[:, 0]
    det = j11 * j22 - j12 * j21
    if np.any(det <= 0.0):
        raise AssemblyError("mesh contains non-positively oriented triangles")
    areas = 0.5 * det

    _, dn = tri3_shape(0.0, 0.0)
    inv = np.empty((len(det), 2, 2))
    inv[:, 0, 0] = j22 / det
    inv[:, 0, 1] = -j12 / det
    inv[:, 1, 0] = -j21 / det
    inv[:, 1, 1] = j11 / det
    # physical gradient = J^{-T} . reference gradient
    grads = np.einsum("eji,jk->eik", inv, dn)

    shape = np.array([tri3_shape(xi, eta)[0] for xi, eta in quad.points])

    concrete = np.flatnonzero(mesh.subdomain == CONCRETE)
    steel = np.flatnonzero(mesh.subdomain == STEEL)
    c_dof = np.full(mesh.n_nodes, -1, dtype=np.int64)
    c_nodes = np.unique(mesh.tris[concrete].ravel())
    c_dof[c_nodes] = np.arange(len(c_nodes))
    return Tri3Cache(mesh=mesh, quad=quad, areas=areas, grads=grads,
                     shape=shape, concrete=concrete, steel=steel,
                     c_dof=c_dof, c_nodes=c_nodes)


def interp_qp(cache: Tri3Cache, elems: np.ndarray, nodal: np.ndarray) -> np.ndarray:
    """Interpolate a nodal field to quadrature points, shape (ne, nq)."""
    vals = nodal[cache.mesh.tris[elems]]  # (ne, 3)
    return vals @ cache.shape.T


def _coo_scalar(cache, elems, dof_map, n_dof, local):
    """Scatter (ne,3,3) local matrices into a CSR over scalar dofs."""
    tri = dof_map[cache.mesh.tris[elems]]
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n_dof, n_dof))
    return mat.tocsr()


def mass_matrix(cache: Tri3Cache, elems: np.ndarray, dof_map: np.ndarray,
                n_dof: int, a_qp: np.ndarray,
                lumped: bool = False) -> sp.csr_matrix:
    """Mass matrix with a spatially varying capacity a(x) >= 0.

    ``lumped=True`` returns the row-sum diagonal, which preserves every
    integral of the form 1^T M v exactly while restoring the discrete
    maximum principle of the implicit transport steps.
    """
    w = cache.quad.weights
    scale = 2.0 * cache.areas[elems]  # |J|
    if lumped:
        local = np.einsum("q,eq,qi->ei", w, a_qp, cache.shape) \
            * scale[:, None]
        diag = np.zeros(n_dof)
        np.add.at(diag, dof_map[cache.mesh.tris[elems]].ravel(), local.ravel())
        return sp.diags(diag).tocsr()
    # (ne,3,3) = sum_q w_q |J| a_q N_i(q) N_j(q)
    nn = np.einsum("qi,qj->qij", cache.shape, cache.shape)
    local = np.einsum("q,eq,qij->eij", w, a_qp, nn) * scale[:, None, None]
    return _coo_scalar(cache, elems, dof_map, n_dof, local)


def stiffness_matrix(cache: Tri3Cache, elems: np.ndarray, dof_map: np.ndarray,
                     n_dof: int, d_qp: np.ndarray) -> sp.csr_matrix:
    """Diffusion stiffness with isotropic scalar coefficient per qp."""
    w = cache.quad.weights
    scale = 2.0 * cache.areas[elems]
    dbar = (d_qp @ w) * scale  # (ne,), gradients are element-constant
    g = cache.grads[elems]
    local = np.einsum("e,eki,ekj->eij", dbar, g, g)
    return _coo_scalar(cache, elems, dof_map, n_dof, local)


def load_vector(cache: Tri3Cache, elems: np.ndarray, dof_map: np.ndarray,
                n_dof: int, s_qp: np.ndarray) -> np.ndarray:
    """Source load vector f_i = int s N_i."""
    w = cache.quad.weights
    scale = 2.0 * cache.areas[elems]
    local = np.einsum("q,eq,qi->ei", w, s_qp, cache.shape) * scale[:, None]
    f = np.zeros(n_dof)
    np.add.at(f, dof_map[cache.mesh.tris[elems]].ravel(), local.ravel())
    return f


def edge_load_vector(mesh: Mesh, edges: np.ndarray, nodal_flux: np.ndarray,
                     dof_map: np.ndarray, n_dof: int) -> np.ndarray:
    """Boundary load f_i = int J N_i dGamma with J linear on each edge.

    The edge integral of linear shape x linear flux is closed-form:
    f_a = L (2 J_a + J_b) / 6, f_b = L (J_a + 2 J_b) / 6.
    """
    f = np.zeros(n_dof)
    if len(edges) == 0:
        return f
    a, b = edges[:, 0], edges[:, 1]
    vec = mesh.nodes[b] - mesh.nodes[a]
    length = np.hypot(vec[:, 0], vec[:, 1])
    ja, jb = nodal_flux[a], nodal_flux[b]
    np.add.at(f, dof_map[a], length * (2.0 * ja + jb) / 6.0)
    np.add.at(f, dof_map[b], length * (ja + 2.0 * jb) / 6.0)
    return f


def assemble_transient_diffusion(cache: Tri3Cache, elems: np.ndarray,
                                 dof_map: np.ndarray, n_dof: int,
                                 a_qp: np.ndarray, d_qp: np.ndarray,
                                 s_qp: np.ndarray, c_prev: np.ndarray,
                                 dt: float) -> SparseSystem:
    """Backward-Euler step of a(x) dc/dt = div(D(x) grad c) + s(x).

    Builds (M(a)/dt + K(D)) c_new = M(a)/dt c_old + f(s); ``c_prev`` are the
    previous dof values.  Capacity must be strictly positive at every
    quadrature point (a vanishing liquid fraction upstream shows up here).
    """
    if dt <= 0.0:
        raise AssemblyError("dt must be positive")
    if np.any(a_qp <= 0.0):
        raise AssemblyError("nonpositive capacity at a quadrature point")
    m = mass_matrix(cache, elems, dof_map, n_dof, a_qp)
    k = stiffness_matrix(cache, elems, dof_map, n_dof, d_qp)
    rhs = m @ c_prev / dt + load_vector(cache, elems, dof_map, n_dof, s_qp)
    return SparseSystem(matrix=(m / dt + k).tocsr(), rhs=rhs)


def plane_strain_matrix(e_mod, nu):
    """Plane-strain constitutive matrix for Voigt strain (exx, eyy, gxy).

    Accepts scalars or arrays; output shape is broadcast + (3, 3).
    """
    e_mod = np.asarray(e_mod, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if np.any(nu >= 0.5):
        raise AssemblyError("plane strain requires nu < 0.5")
    lam = e_mod * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    mu = e_mod / (2.0 * (1.0 + nu))
    out = np.zeros(np.broadcast_shapes(e_mod.shape, nu.shape) + (3, 3))
    out[..., 0, 0] = lam + 2.0 * mu
    out[..., 1, 1] = lam + 2.0 * mu
    out[..., 0, 1] = lam
    out[..., 1, 0] = lam
    out[..., 2, 2] = mu
    return out


def strain_displacement(cache: Tri3Cache, elems: np.ndarray) -> np.ndarray:
    """Element B matrices (ne, 3, 6) mapping nodal displacements to strain."""
    g = cache.grads[elems]  # (ne, 2, 3)
    ne = len(elems)
    b = np.zeros((ne, 3, 6))
    b[:, 0, 0::2] = g[:, 0, :]
    b[:, 1, 1::2] = g[:, 1, :]
    b[:, 2, 0::2] = g[:, 1, :]
    b[:, 2, 1::2] = g[:, 0, :]
    return b


def assemble_elasticity(cache: Tri3Cache, d_qp: np.ndarray,
                        eps_star_qp: np.ndarray,
                        body_force: tuple[float, float] = (0.0, 0.0),
                        dirichlet: list[tuple[int, float]] | None = None
                        ) -> SparseSystem:
    """Plane-strain elasticity over all elements with eigenstrain loads.

    ``d_qp`` holds the (possibly degraded) constitutive matrix per element
    quadrature point, shape (ne, nq, 3, 3); ``eps_star_qp`` the Voigt
    eigenstrain (ne, nq, 3).  Returns K u = f with
    f = int B^T D eps_star + body-force terms.
    """
    mesh = cache.mesh
    elems = np.arange(mesh.n_tris)
    w = cache.quad.weights
    scale = 2.0 * cache.areas  # (ne,)
    b = strain_displacement(cache, elems)

    dbar = np.einsum("q,eqkl->ekl", w, d_qp) * scale[:, None, None]
    local = np.einsum("eki,ekl,elj->eij", b, dbar, b)

    fbar = np.einsum("q,eqkl,eql->ek", w, d_qp, eps_star_qp) * scale[:, None]
    floc = np.einsum("eki,ek->ei", b, fbar)

    n_dof = 2 * mesh.n_nodes
    dofs = np.empty((mesh.n_tris, 6), dtype=np.int64)
    dofs[:, 0::2] = 2 * mesh.tris
    dofs[:, 1::2] = 2 * mesh.tris + 1
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)),
                        shape=(n_dof, n_dof)).tocsr()

    f = np.zeros(n_dof)
    np.add.at(f, dofs.ravel(), floc.ravel())
    if body_force != (0.0, 0.0):
        third = cache.areas / 3.0  # exact nodal lumping of a constant load
        for comp in (0, 1):
            np.add.at(f, 2 * mesh.tris.ravel() + comp,
                      np.repeat(third * body_force[comp], 3))
    return SparseSystem(matrix=mat, rhs=f, dirichlet=list(dirichlet or []))


def solve_direct(system: SparseSystem) -> np.ndarray:
    """Direct sparse LU solve with symmetric Dirichlet elimination."""
    a = system.matrix
    n = a.shape[0]
    x = np.zeros(n)
    if system.dirichlet:
        fixed = np.array([d for d, _ in system.dirichlet], dtype=np.int64)
        vals = np.array([v for _, v in system.dirichlet])
        mask = np.ones(n, dtype=bool)
        mask[fixed] = False
        free = np.flatnonzero(mask)
        x[fixed] = vals
        a_ff = a[free][:, free]
        rhs = system.rhs[free] - a[free][:, fixed] @ vals
    else:
        free = np.arange(n)
        a_ff = a
        rhs = system.rhs.copy()

    if a_ff.shape[0] > 0:
        try:
            lu = spla.splu(a_ff.tocsc())
        except RuntimeError as exc:  # SuperLU reports the zero pivot
            raise SolverError(f"direct factorisation failed: {exc}") from exc
        sol = lu.solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise SolverError("solver produced non-finite values")
        x[free] = sol
    return x
