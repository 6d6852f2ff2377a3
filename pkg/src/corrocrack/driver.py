"""Staggered multiphysics time loop with two-regime adaptive stepping.

During the initiation period only the chloride equations advance, at a
multiple of the propagation step; full staggered stepping (chlorides,
activation, iron, mechanics/phase-field alternation) starts the instant the
first interface node turns anodic.  Rejected steps are retried with halved
dt up to eight times.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from corrocrack import chem, fem, mech, post
from corrocrack.params import M_IRON
from corrocrack.runcard import RunCard, RunMode
from corrocrack.state import (
    FieldState,
    NumericalAbort,
    StepRejection,
    TimelineRecord,
)

log = logging.getLogger(__name__)

MAX_HALVINGS = 8
INNER_TOL = 1e-4  # max nodal |delta phi| closing the mechanics alternation
INNER_MAX = 50
# Irreversibility is enforced by the history latch plus a nodewise max-merge;
# the post-check only catches gross dips of a fresh solve below the carried
# field (small tail relaxation near a saturating crack is legitimate).
PHI_MONOTONE_TOL = 5e-3
WIDTH_MONOTONE_TOL = 1e-12  # m, quadrature noise allowance per record


@dataclass
class Timeline:
    """Recorded observables plus run metadata; append enforces the
    monotonicity invariants of an accepted run."""

    rows: list[TimelineRecord] = dc_field(default_factory=list)
    meta: dict = dc_field(default_factory=dict)
    snapshots: list[str] = dc_field(default_factory=list)

    def append(self, row: TimelineRecord) -> None:
        if self.rows:
            prev = self.rows[-1]
            if row.t_s <= prev.t_s:
                raise RuntimeError("timeline times must strictly increase")
            if row.activated_frac < prev.activated_frac:
                raise RuntimeError("activated fraction decreased")
            if (not math.isnan(row.mass_loss_rel)
                    and row.mass_loss_rel < prev.mass_loss_rel):
                raise RuntimeError("mass loss decreased")
            if row.w_m < prev.w_m - WIDTH_MONOTONE_TOL:
                raise RuntimeError("crack width decreased beyond tolerance")
        if row.w_m < -WIDTH_MONOTONE_TOL:
            raise RuntimeError("negative crack width")
        self.rows.append(row)

    @property
    def end(self) -> TimelineRecord:
        return self.rows[-1]


@dataclass
class _RunContext:
    card: RunCard
    mesh: object
    cache: fem.Tri3Cache
    czm: mech.CzmParams
    pins: list
    cc_nodes: np.ndarray
    gs_nodes: np.ndarray
    rebar_center: tuple[float, float] | None


def _make_context(card: RunCard) -> _RunContext:
    mesh = card.build_mesh()
    cache = fem.build_cache(mesh)
    czm = mech.czm_calibrate(card.mechanics, card.ell)
    center = None
    if card.mesh.kind == "ogrid":
        center = card.mesh.ogrid.center
    return _RunContext(
        card=card, mesh=mesh, cache=cache, czm=czm,
        pins=mech.rigid_body_pins(mesh),
        cc_nodes=np.unique(mesh.gamma_cc),
        gs_nodes=np.unique(mesh.gamma_s),
        rebar_center=center,
    )


def staggered_step(state: FieldState, activation: chem.ActivationState,
                   dt: float, ctx: _RunContext, propagation: bool
                   ) -> tuple[FieldState, chem.ActivationState, dict]:
    """One attempted step on copies of the state; raises StepRejection on
    any failure so the caller can retry with a smaller dt."""
    card = ctx.card
    tp = card.transport
    st = state.copy()
    t_new = state.t + dt

    c_bar = chem.surface_concentration(t_new, card.exposure, tp)
    chloride_cracks = card.mode is not RunMode.NO_CRACK_TRANSPORT
    rep_cl = chem.step_chlorides(st, dt, ctx.cache, tp, c_bar, ctx.cc_nodes,
                                 crack_transport=chloride_cracks)

    ctot = chem.total_chloride(st.c_f[ctx.gs_nodes], st.c_b[ctx.gs_nodes], tp)
    act = chem.activation_update(activation, ctot, tp, t_new,
                                 uniform=card.mode is RunMode.UNIFORM)

    tallies = {
        "chloride_influx_mol": rep_cl.chloride_influx_mol,
        "iron_influx_mol": 0.0,
        "inner_iterations": 0,
    }

    if propagation:
        iron_cracks = not card.disable_iron_crack_transport
        rep_fe = chem.step_iron(st, dt, ctx.cache, tp, act,
                                crack_transport=iron_cracks)
        tallies["iron_influx_mol"] = rep_fe.iron_influx_mol

        porosity = tp.porosity
        for it in range(INNER_MAX):
            st.u = mech.solve_mechanics(st, ctx.cache, card.mechanics,
                                        ctx.czm, porosity, ctx.pins)
            st.history = mech.crack_driving_force(ctx.cache, st,
                                                  card.mechanics, ctx.czm,
                                                  porosity)
            phi_new = mech.solve_phasefield(st.history, ctx.cache, ctx.czm,
                                            phi_prev=st.phi)
            drop = float((phi_new - st.phi).min())
            if drop < -PHI_MONOTONE_TOL:
                raise StepRejection(
                    f"phase field decreased by {-drop:.2e} at fixed history")
            delta = float(np.abs(phi_new - st.phi).max())
            st.phi = np.maximum(phi_new, st.phi)
            tallies["inner_iterations"] = it + 1
            if delta < INNER_TOL:
                break

    st.t = t_new
    st.check_finite()
    return st, act, tallies


def run_simulation(card: RunCard, out_dir: str | Path | None = None,
                   ) -> Timeline:
    """Run one scenario to its horizon and return the Timeline.

    Writes snapshots/timeline under ``out_dir`` when given; a numerical
    abort flushes the partial timeline before propagating.
    """
    ctx = _make_context(card)
    tp = card.transport
    nq = len(ctx.cache.quad.weights)
    state = FieldState.zero(ctx.mesh.n_nodes, len(ctx.cache.concrete), nq,
                            tp.porosity, ctx.czm.h_floor)
    activation = chem.ActivationState.zero(np.sort(ctx.gs_nodes))

    timeline = Timeline(meta={
        "card": card.name,
        "mode": card.mode.value,
        "ell_m": ctx.czm.ell,
        "elements": ctx.mesh.n_tris,
        "activation_time_s": None,
        "first_phi95_angle_deg": None,
        "first_phi95_time_s": None,
        "chloride_influx_mol": 0.0,
        "iron_influx_mol": 0.0,
        "iron_moles_dissolved": 0.0,
        "steps_accepted": 0,
        "steps_rejected": 0,
    })

    cumulative_fe = 0.0
    radius = card.rebar_radius()

    def observables(t: float) -> TimelineRecord:
        w = post.crack_width(state, ctx.mesh, ctx.cache, ctx.czm,
                             card.mechanics, tp.porosity)
        ml = post.relative_mass_loss(cumulative_fe, radius)
        ctot = chem.total_chloride(state.c_f[ctx.gs_nodes],
                                   state.c_b[ctx.gs_nodes], tp)
        return TimelineRecord(
            t_s=t, w_m=w, w_rel=w / card.reference_width,
            mass_loss_rel=ml,
            activated_frac=activation.anodic_fraction,
            max_ctot_pct=float(ctot.max()) if len(ctot) else 0.0,
            max_sp=float(state.theta_p.max()) / tp.porosity,
        )

    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    def snapshot(step: int) -> None:
        if out_path is None:
            return
        name = f"snap_{step:06d}.vtk"
        post.write_vtk(state, ctx.mesh, out_path / name, tp)
        timeline.snapshots.append(name)

    def flush() -> None:
        if out_path is not None:
            post.write_timeseries(timeline.rows, out_path / "timeline.csv")

    timeline.append(observables(0.0))
    propagation = False
    next_output = card.output_every
    step_count = 0
    outputs_since_snapshot = 0

    try:
        while state.t < card.horizon - 1e-9:
            dt_base = card.dt if propagation \
                else card.dt * card.initiation_multiplier
            dt = min(dt_base, card.horizon - state.t)
            for attempt in range(MAX_HALVINGS + 1):
                try:
                    state_new, act_new, tallies = staggered_step(
                        state, activation, dt, ctx, propagation)
                    break
                except StepRejection as exc:
                    timeline.meta["steps_rejected"] += 1
                    log.warning("step at t=%.3e rejected (%s); halving dt",
                                state.t, exc)
                    dt *= 0.5
            else:
                raise NumericalAbort(
                    f"step at t={state.t:.6e} s failed after "
                    f"{MAX_HALVINGS} dt halvings")

            state, activation = state_new, act_new
            step_count += 1
            timeline.meta["steps_accepted"] = step_count
            timeline.meta["chloride_influx_mol"] += tallies["chloride_influx_mol"]
            timeline.meta["iron_influx_mol"] += tallies["iron_influx_mol"]
            cumulative_fe += tallies["iron_influx_mol"]

            if not propagation and activation.anodic_fraction > 0.0:
                propagation = True
                timeline.meta["activation_time_s"] = state.t
                log.info("corrosion initiated at t = %.4e s (%.2f days)",
                         state.t, state.t / 86400.0)

            if (timeline.meta["first_phi95_angle_deg"] is None
                    and ctx.rebar_center is not None):
                angle = _first_damaged_angle(ctx, state.phi)
                if angle is not None:
                    timeline.meta["first_phi95_angle_deg"] = angle
                    timeline.meta["first_phi95_time_s"] = state.t

            if state.t >= next_output - 1e-9 or state.t >= card.horizon - 1e-9:
                timeline.append(observables(state.t))
                while next_output <= state.t + 1e-9:
                    next_output += card.output_every
                outputs_since_snapshot += 1
                if (card.snapshot_every > 0
                        and outputs_since_snapshot >= card.snapshot_every):
                    snapshot(step_count)
                    outputs_since_snapshot = 0
    except NumericalAbort:
        flush()
        raise

    if timeline.rows[-1].t_s < state.t - 1e-9:
        timeline.append(observables(state.t))
    diss, prec = chem.iron_inventory(state, ctx.cache, tp)
    free, bound = chem.chloride_inventory(state, ctx.cache, tp)
    timeline.meta.update({
        "iron_moles_dissolved": diss,
        "iron_moles_precipitated": prec,
        "chloride_moles_free": free,
        "chloride_moles_bound": bound,
        "mass_loss_kg_per_m": cumulative_fe * M_IRON,
    })
    snapshot(step_count)
    flush()
    return timeline


def _first_damaged_angle(ctx: _RunContext, phi: np.ndarray) -> float | None:
    """Angle (deg) of the first concrete element whose mean damage exceeds
    0.95, measured from the rebar center; None until that happens."""
    elems = ctx.cache.concrete
    vals = phi[ctx.mesh.tris[elems]].mean(axis=1)
    hot = np.flatnonzero(vals > 0.95)
    if not len(hot):
        return None
    cx, cy = ctx.rebar_center
    cent = ctx.mesh.nodes[ctx.mesh.tris[elems[hot]]].mean(axis=1)
    d2 = (cent[:, 0] - cx) ** 2 + (cent[:, 1] - cy) ** 2
    nearest = hot[np.argmin(d2)]
    c = ctx.mesh.nodes[ctx.mesh.tris[elems[nearest]]].mean(axis=0)
    return math.degrees(math.atan2(c[1] - cy, c[0] - cx))


def write_runlog(card: RunCard, timeline: Timeline, path: str | Path) -> None:
    """Human-readable run log with the parameter dump and policy notes."""
    lines = [f"run: {card.name}", f"mode: {card.mode.value}",
             f"horizon_s: {card.horizon}", f"dt_s: {card.dt}",
             f"initiation_multiplier: {card.initiation_multiplier}",
             f"ell_m: {card.ell}", ""]
    lines.append("policy notes:")
    lines.append(
        "  - dissolved-iron reference values rho_iron_ref="
        f"{card.mechanics.rho_iron_ref} kg/m3, M_iron={card.mechanics.M_iron}"
        " kg/mol enter the eigenstrain amplification and are overridable in"
        " [mechanics].")
    from corrocrack.params import MeiraBC

    if isinstance(card.exposure, MeiraBC):
        lines.append(
            "  - surface buildup unit chain: I_s in g/(m2 s) of deposited"
            f" salt ({card.exposure.I_s:.6e}), chloride mass fraction w_cl="
            f"{card.exposure.w_cl:.4f}, accumulated deposition in g/m2;"
            f" k_cmax={card.exposure.k_cmax} % per sqrt(g/m2).")
    if card.surface_offset > 0.0:
        lines.append(
            f"  - exposure plane sits {card.surface_offset * 1e3:.1f} mm"
            " below the physical surface (convection-dominated skin);"
            " profile depths include this offset.")
    lines.append("")
    lines.append("meta:")
    for key, value in timeline.meta.items():
        lines.append(f"  {key}: {value}")
    Path(path).write_text("\n".join(lines) + "\n")
