"""Reactive transport: chloride ingress with binding, corrosion activation,
iron transport with oxidation/precipitation kinetics, and exposure models.

All implicit steps are backward Euler with the liquid fraction lagged one
staggered pass, so every solve stays linear.  Old-step masses are carried
with the capacity they were solved under, which keeps the discrete species
balances exact while precipitates squeeze the pore space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from corrocrack import fem
from corrocrack.fem import Tri3Cache
from corrocrack.params import (
    ConstantBC,
    MeiraBC,
    NACL_MOLAR_MASS,
    ParameterError,
    TransportParams,
)
from corrocrack.state import FieldState, StepRejection, StepReport


def binding_rate(c_f, c_b, params: TransportParams):
    """Kinetic binding rate <alpha (beta c_f - c_b)>; release is excluded."""
    return np.maximum(params.alpha * (params.beta * np.asarray(c_f) - c_b), 0.0)


def total_chloride(c_f, c_b, params: TransportParams):
    """Total chloride content in percent of binder mass."""
    if params.m_c <= 0.0:
        raise ParameterError("binder mass m_c must be positive")
    return 100.0 * params.M_cl * params.porosity * (np.asarray(c_f) + c_b) / params.m_c


def faraday_flux(i_a, params: TransportParams):
    """Ferrous-ion influx (mol m^-2 s^-1) released by the anodic current."""
    return np.asarray(i_a) / (params.z_anodic * params.faraday)


def reaction_rates(c_ii, c_iii, params: TransportParams):
    """Sink/source rates (R_II, R_III, R_p); their sum vanishes identically."""
    r_ii = -params.k_oxidation * np.asarray(c_ii) * params.c_ox
    r_p = params.k_precipitation * np.asarray(c_iii)
    r_iii = -r_ii - r_p
    return r_ii, r_iii, r_p


def damage_diffusivity(phi, theta_l, d_eff0: float, d_crack: float,
                       p0: float):
    """Isotropic transport coefficient blending matrix and crack pathways.

    The undamaged effective diffusivity is rescaled by theta_l/p0 as
    precipitates fill the pores; the cracked contribution is unscaled.
    """
    theta_l = np.asarray(theta_l, dtype=float)
    if np.any(theta_l <= 0.0):
        raise ParameterError("liquid fraction must stay positive")
    phi = np.asarray(phi, dtype=float)
    return (1.0 - phi) * d_eff0 * (theta_l / p0) + phi * d_crack


def meira_surface_concentration(t: float, bc: MeiraBC,
                                params: TransportParams) -> float:
    """Dirichlet value of free chlorides for the deposition-driven surface
    buildup, inverting the total-content formula under binding equilibrium
    c_b = beta c_f."""
    d_ac = bc.I_s * bc.w_cl * max(t, 0.0)  # accumulated deposition, g/m2
    c_max_pct = bc.C0_pct + bc.k_cmax * np.sqrt(d_ac)
    return (c_max_pct / 100.0) * params.m_c / (
        params.M_cl * params.porosity * (1.0 + params.beta))


def salinity_to_concentration(salinity_g_per_l: float) -> float:
    """Chloride molarity (mol/m3) of dissolved NaCl at S g/L."""
    if salinity_g_per_l < 0.0:
        raise ParameterError("salinity must be non-negative")
    return 1000.0 * salinity_g_per_l / (NACL_MOLAR_MASS * 1000.0)


def surface_concentration(t: float, exposure, params: TransportParams) -> float:
    if isinstance(exposure, MeiraBC):
        return meira_surface_concentration(t, exposure, params)
    if isinstance(exposure, ConstantBC):
        return exposure.c_bar
    raise ParameterError(f"unknown exposure model {type(exposure).__name__}")


@dataclass
class ActivationState:
    """Per interface-node activation latch and smoothed current density."""

    node_ids: np.ndarray  # sorted gamma_s node ids
    running_max: np.ndarray  # latched max of C_tot, percent
    i_a: np.ndarray  # A/m2
    fully_activated: np.ndarray  # bool per node
    activation_time: np.ndarray  # s, NaN until the node turns anodic
    uniform_triggered: bool = False

    @classmethod
    def zero(cls, node_ids: np.ndarray) -> "ActivationState":
        n = len(node_ids)
        return cls(node_ids=np.asarray(node_ids, dtype=np.int64),
                   running_max=np.zeros(n), i_a=np.zeros(n),
                   fully_activated=np.zeros(n, dtype=bool),
                   activation_time=np.full(n, np.nan))

    def copy(self) -> "ActivationState":
        return ActivationState(
            node_ids=self.node_ids,
            running_max=self.running_max.copy(),
            i_a=self.i_a.copy(),
            fully_activated=self.fully_activated.copy(),
            activation_time=self.activation_time.copy(),
            uniform_triggered=self.uniform_triggered,
        )

    @property
    def anodic_fraction(self) -> float:
        if len(self.i_a) == 0:
            return 0.0
        return float(np.count_nonzero(self.i_a > 0.0)) / len(self.i_a)


# Smoothing window of the current-density jump, as a fraction of the
# threshold; the jump is replaced by a cubic smoothstep over it.
ACTIVATION_RAMP = 0.05

# Largest undershoot (relative to the concentration scale) the conservative
# clip-and-redistribute limiter may absorb; anything worse rejects the step.
LIMITER_CAP = 0.02


def _clip_redistribute(values: np.ndarray, lumped_mass: np.ndarray,
                       scale: float) -> np.ndarray:
    """Remove max-principle undershoots while conserving the lumped-mass
    integral exactly.

    Graded anisotropic grids are never M-matrices, so implicit steps can
    undershoot slightly near fronts that are locally under-resolved; the
    deficit is clipped and taken proportionally out of the positive nodes.
    Raises StepRejection when the undershoot exceeds LIMITER_CAP * scale,
    which signals a genuinely unresolved step rather than boundary noise.
    """
    worst = float(values.min())
    if worst >= -1e-10 * scale:
        return np.maximum(values, 0.0) if worst < 0.0 else values
    if worst < -LIMITER_CAP * scale:
        raise StepRejection(
            f"negative concentration {worst:.3e} beyond the limiter cap "
            f"({LIMITER_CAP:g} of scale {scale:.3e})")
    negative = values < 0.0
    deficit = -float(lumped_mass[negative] @ values[negative])
    out = np.where(negative, 0.0, values)
    positive_mass = float(lumped_mass[~negative] @ out[~negative])
    if positive_mass <= deficit:
        raise StepRejection("limiter cannot conserve mass (field sign-degenerate)")
    out[~negative] *= 1.0 - deficit / positive_mass
    return out


def activation_update(activation: ActivationState, c_tot_pct: np.ndarray,
                      params: TransportParams, t: float,
                      uniform: bool = False) -> ActivationState:
    """Advance the activation latch from the interface chloride content.

    Non-uniform mode ramps each node's current density with a cubic
    smoothstep over [T, 1.05 T] of its running maximum; uniform mode turns
    the whole interface fully anodic the first instant any node reaches T.
    """
    T = params.threshold_pct
    if T <= 0.0:
        raise ParameterError("chloride threshold must be positive")
    out = activation.copy()
    out.running_max = np.maximum(activation.running_max, c_tot_pct)
    if uniform:
        if out.uniform_triggered or np.any(out.running_max >= T):
            newly = ~(out.i_a > 0.0)
            out.i_a = np.full_like(out.i_a, params.kappa)
            out.fully_activated[:] = True
            out.activation_time[newly] = t
            out.uniform_triggered = True
        return out
    x = np.clip((out.running_max - T) / (ACTIVATION_RAMP * T), 0.0, 1.0)
    i_a = params.kappa * (3.0 * x ** 2 - 2.0 * x ** 3)
    newly = (i_a > 0.0) & ~(out.i_a > 0.0)
    out.activation_time[newly] = t
    # The running max latches, so i_a and the anodic set never shrink.
    out.i_a = i_a
    out.fully_activated = out.fully_activated | (x >= 1.0)
    return out


def _theta_l_nodal(state: FieldState, params: TransportParams) -> np.ndarray:
    return np.maximum(params.porosity - state.theta_p, params.theta_l_floor)


def _inventory(cache: Tri3Cache, weight_nodal: np.ndarray,
               value_nodal: np.ndarray) -> float:
    """Exact integral of the product of two P1 fields over concrete."""
    elems = cache.concrete
    w = cache.quad.weights
    scale = 2.0 * cache.areas[elems]
    wq = fem.interp_qp(cache, elems, weight_nodal)
    vq = fem.interp_qp(cache, elems, value_nodal)
    return float(np.einsum("q,eq,eq,e->", w, wq, vq, scale))


def chloride_inventory(state: FieldState, cache: Tri3Cache,
                       params: TransportParams) -> tuple[float, float]:
    """(free, bound) chloride moles under the carried capacity."""
    free = _inventory(cache, state.theta_l_prev, state.c_f)
    bound = _inventory(cache, state.theta_l_prev, state.c_b)
    return free, bound


def iron_inventory(state: FieldState, cache: Tri3Cache,
                   params: TransportParams) -> tuple[float, float]:
    """(dissolved, precipitated) iron moles."""
    dissolved = _inventory(cache, state.theta_l_prev, state.c_ii + state.c_iii)
    ones = np.ones(cache.mesh.n_nodes)
    precipitated = (params.rho_rust / params.M_rust) * _inventory(
        cache, ones, state.theta_p)
    return dissolved, precipitated


def _transport_coefficient(cache: Tri3Cache, state: FieldState,
                           theta_l: np.ndarray, d_eff0: float, d_crack: float,
                           params: TransportParams,
                           crack_transport: bool) -> np.ndarray:
    elems = cache.concrete
    phi_qp = np.clip(fem.interp_qp(cache, elems, state.phi), 0.0, 1.0)
    tl_qp = fem.interp_qp(cache, elems, theta_l)
    if crack_transport:
        return damage_diffusivity(phi_qp, tl_qp, d_eff0, d_crack, params.porosity)
    # Crack enhancement suppressed: the cracked branch collapses onto the
    # undamaged coefficient, making transport independent of phi.
    undamaged = d_eff0 * tl_qp / params.porosity
    return undamaged


def step_chlorides(state: FieldState, dt: float, cache: Tri3Cache,
                   params: TransportParams, c_bar: float,
                   cc_nodes: np.ndarray,
                   crack_transport: bool = True) -> StepReport:
    """One backward-Euler chloride step: implicit free-chloride transport
    with a semi-implicit binding sink, then the nodal bound-chloride update.

    Returns bookkeeping with the discrete boundary influx of this step.
    """
    if dt <= 0.0:
        raise ParameterError("dt must be positive")
    mesh = cache.mesh
    elems = cache.concrete
    dof = cache.c_dof
    nd = cache.n_cdof
    theta_l = _theta_l_nodal(state, params)
    tl_qp = fem.interp_qp(cache, elems, theta_l)
    tl_prev_qp = fem.interp_qp(cache, elems, state.theta_l_prev)

    coef_qp = _transport_coefficient(cache, state, theta_l, params.D_f_eff,
                                     params.D_f_crack, params, crack_transport)

    m_new = fem.mass_matrix(cache, elems, dof, nd, tl_qp, lumped=True)
    m_prev = fem.mass_matrix(cache, elems, dof, nd, tl_prev_qp, lumped=True)
    k = fem.stiffness_matrix(cache, elems, dof, nd, coef_qp)

    cf_old = state.c_f[cache.c_nodes]
    cb_old = state.c_b[cache.c_nodes]
    rhs_mass = m_prev @ cf_old / dt

    bc = [(int(dof[n]), float(c_bar)) for n in cc_nodes]

    mask = (params.beta * cf_old - cb_old >= 0.0).astype(float)
    cf_new = None
    flips = 0
    for _ in range(2):  # one positive-part fixed-point pass
        a_bind = params.alpha * params.beta * (m_new @ sp.diags(mask)).tocsr()
        rhs = rhs_mass + params.alpha * (m_new @ (mask * cb_old))
        system = fem.SparseSystem(matrix=(m_new / dt + k + a_bind).tocsr(),
                                  rhs=rhs, dirichlet=bc)
        try:
            cf_new = fem.solve_direct(system)
        except fem.SolverError as exc:
            raise StepRejection(f"chloride solve failed: {exc}") from exc
        new_mask = (params.beta * cf_new - cb_old >= 0.0).astype(float)
        flips = int(np.count_nonzero(new_mask != mask))
        if flips == 0:
            break
        mask = new_mask

    # Discrete boundary influx: residual of the interior operator at the
    # constrained rows equals the Dirichlet reaction.
    full = (m_new / dt + k + params.alpha * params.beta
            * (m_new @ sp.diags(mask))).tocsr()
    rhs_full = rhs_mass + params.alpha * (m_new @ (mask * cb_old))
    residual = full @ cf_new - rhs_full
    cc_dofs = dof[cc_nodes]
    influx = float(residual[cc_dofs].sum()) * dt

    # Bound update pairs with the sink of the solved system; the limiter
    # afterwards only redistributes free-chloride mass conservatively.  The
    # pore-squeeze factor uses the lumped-capacity ratio so the bound mass
    # telescopes exactly across steps while theta_l evolves.
    rate = mask * params.alpha * (params.beta * cf_new - cb_old)
    cb_new = (m_prev.diagonal() / m_new.diagonal()) * cb_old + dt * rate

    scale = max(abs(c_bar), float(np.abs(cf_old).max()), 1.0)
    cf_new = _clip_redistribute(cf_new, m_new.diagonal(), scale)

    state.c_f[cache.c_nodes] = cf_new
    state.c_b[cache.c_nodes] = cb_new
    return StepReport(chloride_influx_mol=influx, binding_mask_flips=flips)


def step_iron(state: FieldState, dt: float, cache: Tri3Cache,
              params: TransportParams, activation: ActivationState,
              crack_transport: bool = True) -> StepReport:
    """Sequential iron update: ferrous transport with the Faraday influx,
    ferric transport with oxidation source and precipitation sink, then the
    nodal precipitate growth and pore-space bookkeeping."""
    if dt <= 0.0:
        raise ParameterError("dt must be positive")
    mesh = cache.mesh
    elems = cache.concrete
    dof = cache.c_dof
    nd = cache.n_cdof
    theta_l = _theta_l_nodal(state, params)
    tl_qp = fem.interp_qp(cache, elems, theta_l)
    tl_prev_qp = fem.interp_qp(cache, elems, state.theta_l_prev)

    m_new = fem.mass_matrix(cache, elems, dof, nd, tl_qp, lumped=True)
    m_prev = fem.mass_matrix(cache, elems, dof, nd, tl_prev_qp, lumped=True)
    m_plain = fem.mass_matrix(cache, elems, dof, nd, np.ones_like(tl_qp),
                              lumped=True)

    # Ferrous ions: sink k c_ox c_II, Neumann influx on the interface.
    coef_ii = _transport_coefficient(cache, state, theta_l, params.D_ii_eff,
                                     params.D_ii_crack, params, crack_transport)
    k_ii = fem.stiffness_matrix(cache, elems, dof, nd, coef_ii)
    nodal_flux = np.zeros(mesh.n_nodes)
    nodal_flux[activation.node_ids] = faraday_flux(activation.i_a, params)
    j_vec = fem.edge_load_vector(mesh, mesh.gamma_s, nodal_flux, dof, nd)
    injected = float(j_vec.sum()) * dt

    sink_ox = params.k_oxidation * params.c_ox
    cii_old = state.c_ii[cache.c_nodes]
    system = fem.SparseSystem(
        matrix=(m_new / dt + k_ii + sink_ox * m_new).tocsr(),
        rhs=m_prev @ cii_old / dt + j_vec)
    try:
        cii_new = fem.solve_direct(system)
    except fem.SolverError as exc:
        raise StepRejection(f"ferrous solve failed: {exc}") from exc

    # Ferric ions: oxidation source, precipitation sink.  The sink pairs a
    # plain mass matrix with nodal theta_l so the removed moles match the
    # precipitate update below identically.
    coef_iii = _transport_coefficient(cache, state, theta_l, params.D_iii_eff,
                                      params.D_iii_crack, params,
                                      crack_transport)
    k_iii = fem.stiffness_matrix(cache, elems, dof, nd, coef_iii)
    tl_nodes = theta_l[cache.c_nodes]
    sink_p = params.k_precipitation * (m_plain @ sp.diags(tl_nodes)).tocsr()
    ciii_old = state.c_iii[cache.c_nodes]
    system = fem.SparseSystem(
        matrix=(m_new / dt + k_iii + sink_p).tocsr(),
        rhs=m_prev @ ciii_old / dt + sink_ox * (m_new @ cii_new))
    try:
        ciii_new = fem.solve_direct(system)
    except fem.SolverError as exc:
        raise StepRejection(f"ferric solve failed: {exc}") from exc

    # Precipitate growth, capped by the liquid-fraction floor.
    growth = dt * (params.M_rust / params.rho_rust) * tl_nodes \
        * params.k_precipitation * ciii_new
    tp_new = state.theta_p[cache.c_nodes] + growth
    tp_cap = params.porosity - params.theta_l_floor
    clamped = int(np.count_nonzero(tp_new > tp_cap))
    if clamped:
        tp_new = np.minimum(tp_new, tp_cap)
    precipitated = float((params.rho_rust / params.M_rust)
                         * _inventory(cache, np.ones(mesh.n_nodes),
                                      _scatter(cache, growth)))

    state.c_ii[cache.c_nodes] = cii_new
    state.c_iii[cache.c_nodes] = ciii_new
    state.theta_p[cache.c_nodes] = tp_new
    state.theta_l_prev = theta_l
    if clamped > 0.01 * nd:
        import warnings

        warnings.warn(f"liquid-fraction floor engaged on {clamped} nodes",
                      RuntimeWarning, stacklevel=2)
    return StepReport(iron_influx_mol=injected, precipitated_mol=precipitated,
                      theta_l_clamped_nodes=clamped)


def _scatter(cache: Tri3Cache, dof_values: np.ndarray) -> np.ndarray:
    full = np.zeros(cache.mesh.n_nodes)
    full[cache.c_nodes] = dof_values
    return full
