"""Precipitation eigenstrain mechanics and cohesive-zone phase-field fracture.

The degradation function is calibrated to the Cornelissen-Hordijk concrete
softening curve; the crack driving force is the positive part of the maximum
in-plane principal effective stress with a history latch enforcing
irreversibility.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse

from corrocrack import fem
from corrocrack.fem import Tri3Cache
from corrocrack.params import MechParams, ParameterError
from corrocrack.state import FieldState, StepRejection

# Residual stiffness factor applied only inside the mechanics assembly so a
# fully broken element cannot make the factorisation singular.
G_MIN = 1e-12

# Cornelissen-Hordijk softening constants: limit opening w_c = WC_FACTOR
# G_f / f_t and initial slope k_0 = -K0_FACTOR f_t^2 / G_f.
WC_FACTOR = 5.1361
K0_FACTOR = 1.3546


@dataclass(frozen=True)
class CzmParams:
    """Calibrated cohesive-zone phase-field constants."""

    p: float
    a1: float
    a2: float
    a3: float
    ell: float  # m, phase-field length
    ell_irw: float  # m, Irwin length E~ G_f / f_t^2
    w_c: float  # m, limit crack opening
    k_0: float  # initial softening slope
    E_tilde: float  # Pa, elongation modulus
    f_t: float  # Pa
    G_f: float  # J/m2

    def __post_init__(self):
        if self.p < 2.0:
            raise ParameterError("softening exponent p must be >= 2")
        if self.a1 <= 0.0:
            raise ParameterError("a1 must be positive")

    @property
    def h_floor(self) -> float:
        """Damage nucleation threshold f_t^2 / (2 E~)."""
        return self.f_t ** 2 / (2.0 * self.E_tilde)

    @property
    def ell_bound(self) -> float:
        """Largest length keeping results length-scale insensitive."""
        return 8.0 * self.ell_irw / (3.0 * math.pi)


def elongation_modulus(e_mod: float, nu: float) -> float:
    return e_mod * (1.0 - nu) / ((1.0 + nu) * (1.0 - 2.0 * nu))


def default_ell(params: MechParams, width: float, height: float) -> float:
    """Default phase-field length: min(8 l_irw / 3 pi, L/100)."""
    e_tilde = elongation_modulus(params.E_c, params.nu_c)
    ell_irw = e_tilde * params.G_f / params.f_t ** 2
    return min(8.0 * ell_irw / (3.0 * math.pi), min(width, height) / 100.0)


def czm_calibrate(params: MechParams, ell: float) -> CzmParams:
    """Derive the degradation-function constants for the chosen softening."""
    if ell <= 0.0:
        raise ParameterError("phase-field length must be positive")
    e_tilde = elongation_modulus(params.E_c, params.nu_c)
    ell_irw = e_tilde * params.G_f / params.f_t ** 2
    p = 2.0
    w_c = WC_FACTOR * params.G_f / params.f_t
    k_0 = -K0_FACTOR * params.f_t ** 2 / params.G_f
    beta_w = w_c * params.f_t / (2.0 * params.G_f)
    beta_k = 2.0 * K0_FACTOR  # k_0 / (-f_t^2 / (2 G_f))
    a1 = (4.0 / math.pi) * ell_irw / ell
    a2 = 2.0 * beta_k ** (2.0 / 3.0) - p - 0.5
    a3 = 0.5 * beta_w ** 2 - a2 - 1.0
    czm = CzmParams(p=p, a1=a1, a2=a2, a3=a3, ell=ell, ell_irw=ell_irw,
                    w_c=w_c, k_0=k_0, E_tilde=e_tilde, f_t=params.f_t,
                    G_f=params.G_f)
    if ell > czm.ell_bound * (1.0 + 1e-12):
        warnings.warn(
            f"phase-field length {ell:.3e} m exceeds the insensitivity bound "
            f"{czm.ell_bound:.3e} m", RuntimeWarning, stacklevel=2)
    return czm


def mixture_properties(theta_p, params: MechParams):
    """Rule-of-mixtures stiffness of rust-filled concrete."""
    theta_p = np.asarray(theta_p, dtype=float)
    e = (1.0 - theta_p) * params.E_c + theta_p * params.E_rust
    nu = (1.0 - theta_p) * params.nu_c + theta_p * params.nu_rust
    return e, nu


def eigenstrain_coefficient(theta_p, params: MechParams):
    """Eigenstrain per unit precipitate saturation (the tensor is c S_p 1)."""
    e, nu = mixture_properties(theta_p, params)
    if np.any(nu >= 0.5 - 1e-12) or params.nu_rust >= 0.5 - 1e-12:
        raise ParameterError("eigenstrain undefined in the incompressible limit")
    k_p = params.E_rust / (3.0 * (1.0 - 2.0 * params.nu_rust))
    k = e / (3.0 * (1.0 - 2.0 * nu))
    expansion = params.rho_iron_ref * params.M_rust / (
        (1.0 - params.rust_porosity) * params.rho_rust * params.M_iron) - 1.0
    return (1.0 - nu) * k_p / ((1.0 + nu) * k_p + (2.0 - 4.0 * nu) * k) * expansion


def eigenstrain(s_p, theta_p, params: MechParams) -> np.ndarray:
    """Voigt eigenstrain (exx, eyy, gxy) = (c, c, 0), isotropic in plane."""
    c = eigenstrain_coefficient(theta_p, params) * np.asarray(s_p, dtype=float)
    out = np.zeros(np.shape(c) + (3,))
    out[..., 0] = c
    out[..., 1] = c
    return out


def degradation(phi, czm: CzmParams):
    """Degradation function g and its derivative dg/dphi."""
    phi = np.asarray(phi, dtype=float)
    p, a1, a2, a3 = czm.p, czm.a1, czm.a2, czm.a3
    omf = 1.0 - phi
    n = omf ** p
    dn = -p * omf ** (p - 1.0)
    poly = 1.0 + a2 * phi + a3 * phi ** 2
    d = n + a1 * phi * poly
    dd = dn + a1 * (1.0 + 2.0 * a2 * phi + 3.0 * a3 * phi ** 2)
    g = n / d
    dg = (dn * d - n * dd) / d ** 2
    return g, dg


def _degradation_second(phi, czm: CzmParams):
    """Second derivative of g, for the phase-field Newton matrix."""
    phi = np.asarray(phi, dtype=float)
    p, a1, a2, a3 = czm.p, czm.a1, czm.a2, czm.a3
    omf = 1.0 - phi
    n = omf ** p
    dn = -p * omf ** (p - 1.0)
    d2n = p * (p - 1.0) * omf ** (p - 2.0)
    poly = 1.0 + a2 * phi + a3 * phi ** 2
    d = n + a1 * phi * poly
    dd = dn + a1 * (1.0 + 2.0 * a2 * phi + 3.0 * a3 * phi ** 2)
    d2d = d2n + a1 * (2.0 * a2 + 6.0 * a3 * phi)
    return (d2n * d - n * d2d) / d ** 2 - 2.0 * dd * (dn * d - n * dd) / d ** 3


def element_strain(cache: Tri3Cache, u: np.ndarray,
                   elems: np.ndarray) -> np.ndarray:
    """Element-constant Voigt strain from nodal displacements."""
    b = fem.strain_displacement(cache, elems)
    ue = np.empty((len(elems), 6))
    tris = cache.mesh.tris[elems]
    ue[:, 0::2] = u[:, 0][tris]
    ue[:, 1::2] = u[:, 1][tris]
    return np.einsum("eij,ej->ei", b, ue)


def crack_driving_force(cache: Tri3Cache, state: FieldState,
                        params: MechParams, czm: CzmParams,
                        porosity: float) -> np.ndarray:
    """Updated quadrature-point history from the current displacement field.

    The effective stress is undegraded; only the two in-plane principal
    values enter (the out-of-plane stress is compressive under confined
    expansion and would be removed by the positive part anyway).
    """
    elems = cache.concrete
    eps = element_strain(cache, state.u, elems)  # (ne, 3)
    tp_qp = fem.interp_qp(cache, elems, state.theta_p)
    sp_qp = tp_qp / porosity
    e, nu = mixture_properties(tp_qp, params)
    d_qp = fem.plane_strain_matrix(e, nu)  # (ne, nq, 3, 3)
    eps_star = eigenstrain(sp_qp, tp_qp, params)  # (ne, nq, 3)
    mismatch = eps[:, None, :] - eps_star
    sig = np.einsum("eqij,eqj->eqi", d_qp, mismatch)
    mean = 0.5 * (sig[..., 0] + sig[..., 1])
    radius = np.sqrt((0.5 * (sig[..., 0] - sig[..., 1])) ** 2
                     + sig[..., 2] ** 2)
    sigma1 = np.maximum(mean + radius, 0.0)
    h_new = sigma1 ** 2 / (2.0 * czm.E_tilde)
    return np.maximum(np.maximum(state.history, h_new), czm.h_floor)


def rigid_body_pins(mesh, tol: float = 1e-9) -> list[tuple[int, float]]:
    """Pin one bottom corner in x and y and the other bottom corner in y.

    The eigenstrain loading is self-equilibrated, so the pins carry no
    reaction; they only remove the rigid-body null space.
    """
    y_min = mesh.nodes[:, 1].min()
    bottom = np.flatnonzero(mesh.nodes[:, 1] <= y_min + tol)
    order = bottom[np.argsort(mesh.nodes[bottom, 0], kind="stable")]
    left, right = int(order[0]), int(order[-1])
    return [(2 * left, 0.0), (2 * left + 1, 0.0), (2 * right + 1, 0.0)]


def solve_mechanics(state: FieldState, cache: Tri3Cache, params: MechParams,
                    czm: CzmParams, porosity: float,
                    dirichlet: list[tuple[int, float]] | None = None
                    ) -> np.ndarray:
    """Degraded elasticity with eigenstrain loading; steel stays elastic."""
    mesh = cache.mesh
    nq = len(cache.quad.weights)
    d_qp = np.zeros((mesh.n_tris, nq, 3, 3))
    eps_star = np.zeros((mesh.n_tris, nq, 3))

    ce = cache.concrete
    tp_qp = fem.interp_qp(cache, ce, state.theta_p)
    sp_qp = tp_qp / porosity
    phi_qp = np.clip(fem.interp_qp(cache, ce, state.phi), 0.0, 1.0)
    g_qp, _ = degradation(phi_qp, czm)
    g_qp = np.maximum(g_qp, G_MIN)
    e, nu = mixture_properties(tp_qp, params)
    d_qp[ce] = g_qp[..., None, None] * fem.plane_strain_matrix(e, nu)
    eps_star[ce] = eigenstrain(sp_qp, tp_qp, params)

    se = cache.steel
    if len(se):
        d_qp[se] = fem.plane_strain_matrix(params.E_s, params.nu_s)

    if dirichlet is None:
        dirichlet = rigid_body_pins(mesh)
    system = fem.assemble_elasticity(cache, d_qp, eps_star,
                                     body_force=params.body_force,
                                     dirichlet=dirichlet)
    try:
        u_flat = fem.solve_direct(system)
    except fem.SolverError as exc:
        raise StepRejection(f"mechanics solve failed: {exc}") from exc
    return u_flat.reshape(-1, 2)


def project_history_to_nodes(cache: Tri3Cache, history: np.ndarray) -> np.ndarray:
    """Volume-weighted quadrature-to-node projection over concrete."""
    elems = cache.concrete
    w = cache.quad.weights
    scale = 2.0 * cache.areas[elems]
    weights = np.einsum("q,qi->qi", w, cache.shape)  # (nq, 3)
    num = np.zeros(cache.mesh.n_nodes)
    den = np.zeros(cache.mesh.n_nodes)
    contrib = np.einsum("eq,qi,e->ei", history, weights, scale)
    base = np.einsum("qi,e->ei", weights, scale)
    tris = cache.mesh.tris[elems]
    np.add.at(num, tris.ravel(), contrib.ravel())
    np.add.at(den, tris.ravel(), base.ravel())
    out = np.zeros(cache.mesh.n_nodes)
    mask = den > 0.0
    out[mask] = num[mask] / den[mask]
    return out


PHASEFIELD_MAX_NEWTON = 100
PHASEFIELD_MAX_BISECT = 10
PHASEFIELD_RTOL = 1e-8


def solve_phasefield(history: np.ndarray, cache: Tri3Cache, czm: CzmParams,
                     phi_prev: np.ndarray | None = None) -> np.ndarray:
    """Solve the screened phase-field equation by damped projected Newton.

    ``history`` holds quadrature-point values; it is projected to nodes for
    the solve.  Returns the full-length nodal field (zero on steel-interior
    nodes).  Raises StepRejection if Newton fails to converge.
    """
    mesh = cache.mesh
    elems = cache.concrete
    dof = cache.c_dof
    nd = cache.n_cdof
    w = cache.quad.weights
    scale = 2.0 * cache.areas[elems]
    tris_dof = dof[mesh.tris[elems]]

    h_nodal = project_history_to_nodes(cache, history)
    h_qp = fem.interp_qp(cache, elems, h_nodal)

    c_grad = czm.ell * czm.G_f / math.pi
    c_react = czm.G_f / (math.pi * czm.ell)
    k = fem.stiffness_matrix(cache, elems, dof, nd,
                             np.full_like(h_qp, c_grad))

    if phi_prev is None:
        phi = np.zeros(nd)
    else:
        phi = phi_prev[cache.c_nodes].copy()

    def residual(phi_dof):
        phi_qp = fem.interp_qp(cache, elems, _scatter(cache, phi_dof))
        _, dg = degradation(np.clip(phi_qp, 0.0, 1.0), czm)
        integrand = 0.5 * dg * h_qp + c_react * (1.0 - phi_qp)
        local = np.einsum("q,eq,qi->ei", w, integrand, cache.shape) \
            * scale[:, None]
        r = np.zeros(nd)
        np.add.at(r, tris_dof.ravel(), local.ravel())
        return r + k @ phi_dof

    def masked_norm(r, phi_dof):
        rm = r.copy()
        rm[(phi_dof <= 0.0) & (r > 0.0)] = 0.0
        rm[(phi_dof >= 1.0) & (r < 0.0)] = 0.0
        return float(np.abs(rm).max()) if len(rm) else 0.0

    r = residual(phi)
    norm0 = masked_norm(r, phi)
    # Absolute floor: an initial residual at roundoff level (e.g. a field
    # sitting exactly at the nucleation threshold) counts as converged.
    scale_ref = c_react * float(np.sum(cache.areas[elems])) / max(nd, 1)
    tol = max(PHASEFIELD_RTOL * norm0, 1e-12 * scale_ref)
    if norm0 <= tol:
        return _scatter(cache, phi)

    for _ in range(PHASEFIELD_MAX_NEWTON):
        norm_r = masked_norm(r, phi)
        if norm_r <= tol:
            return _scatter(cache, phi)
        phi_qp = fem.interp_qp(cache, elems, _scatter(cache, phi))
        d2g = _degradation_second(np.clip(phi_qp, 0.0, 1.0), czm)
        coef = 0.5 * d2g * h_qp - c_react
        nn = np.einsum("qi,qj->qij", cache.shape, cache.shape)
        local = np.einsum("q,eq,qij->eij", w, coef, nn) * scale[:, None, None]
        rows = np.repeat(tris_dof, 3, axis=1).ravel()
        cols = np.tile(tris_dof, (1, 3)).ravel()
        jac = (k + sparse.coo_matrix((local.ravel(), (rows, cols)),
                                     shape=(nd, nd)).tocsr())
        # Projected Newton: dofs sitting on a bound with the residual
        # pushing outward stay frozen this iteration.
        active = ((phi <= 0.0) & (r > 0.0)) | ((phi >= 1.0) & (r < 0.0))
        constraints = [(int(i), 0.0) for i in np.flatnonzero(active)]
        try:
            step = fem.solve_direct(fem.SparseSystem(matrix=jac, rhs=-r,
                                                     dirichlet=constraints))
        except fem.SolverError as exc:
            raise StepRejection(f"phase-field Newton failed: {exc}") from exc

        s = 1.0
        accepted = False
        for _ in range(PHASEFIELD_MAX_BISECT):
            trial = np.clip(phi + s * step, 0.0, 1.0)
            r_trial = residual(trial)
            if masked_norm(r_trial, trial) < norm_r:
                phi, r = trial, r_trial
                accepted = True
                break
            s *= 0.5
        if not accepted:
            # Accept the smallest damped step; stagnation is caught by the
            # iteration cap.
            phi = np.clip(phi + s * step, 0.0, 1.0)
            r = residual(phi)
    if masked_norm(r, phi) <= tol:
        return _scatter(cache, phi)
    raise StepRejection("phase-field Newton did not converge")


def _scatter(cache: Tri3Cache, dof_values: np.ndarray) -> np.ndarray:
    full = np.zeros(cache.mesh.n_nodes)
    full[cache.c_nodes] = dof_values
    return full
