"""Derived quantities and file output: surface crack width, steel mass loss,
field profiles, legacy-VTK snapshots and CSV time series."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from corrocrack import chem, fem, mech
from corrocrack.fem import Tri3Cache
from corrocrack.mesh import CONCRETE, Mesh, _edge_key
from corrocrack.params import M_IRON, RHO_STEEL, TransportParams
from corrocrack.state import FieldState, TimelineRecord

# 2-point Gauss abscissae on [0, 1].
_EDGE_GAUSS = (0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0))


def _edge_elements(mesh: Mesh, edges: np.ndarray) -> np.ndarray:
    """Adjacent concrete element of each boundary edge."""
    incidence: dict[tuple[int, int], int] = {}
    for t, tri in enumerate(mesh.tris):
        if mesh.subdomain[t] != CONCRETE:
            continue
        for k in range(3):
            key = _edge_key(int(tri[k]), int(tri[(k + 1) % 3]))
            incidence.setdefault(key, t)
    out = np.empty(len(edges), dtype=np.int64)
    for i, (a, b) in enumerate(edges):
        key = _edge_key(int(a), int(b))
        if key not in incidence:
            raise ValueError(f"edge {key} has no adjacent concrete element")
        out[i] = incidence[key]
    return out


def crack_width(state: FieldState, mesh: Mesh, cache: Tri3Cache,
                czm: mech.CzmParams, mech_params, porosity: float) -> float:
    """Surface crack width: the x-component of the inelastic strain
    integrated over the upper surface, two Gauss points per edge with the
    strain taken from the adjacent element."""
    edges = mesh.gamma_us
    if len(edges) == 0:
        raise ValueError("mesh has no upper-surface edges for the width integral")
    elems = _edge_elements(mesh, edges)
    eps = mech.element_strain(cache, state.u, elems)  # per-edge element strain
    coeff = mech.eigenstrain_coefficient(state.theta_p, mech_params) \
        * state.theta_p / porosity  # nodal eigenstrain coefficient

    a, b = edges[:, 0], edges[:, 1]
    vec = mesh.nodes[b] - mesh.nodes[a]
    length = np.hypot(vec[:, 0], vec[:, 1])
    total = 0.0
    for s in _EDGE_GAUSS:
        phi_g = (1.0 - s) * state.phi[a] + s * state.phi[b]
        g_g, _ = mech.degradation(np.clip(phi_g, 0.0, 1.0), czm)
        star_g = (1.0 - s) * coeff[a] + s * coeff[b]
        total += 0.5 * np.sum(length * (1.0 - g_g) * (eps[:, 0] - star_g))
    return float(total)


def mass_loss_rate(i_a_nodal: np.ndarray, mesh: Mesh,
                   params: TransportParams) -> float:
    """Steel mass loss rate per unit length (kg m^-1 s^-1), the Faraday
    integral of the anodic current over the interface."""
    dof = np.arange(mesh.n_nodes)
    flux = chem.faraday_flux(i_a_nodal, params)
    vec = fem.edge_load_vector(mesh, mesh.gamma_s, flux, dof, mesh.n_nodes)
    return float(vec.sum()) * M_IRON


def relative_mass_loss(cumulative_moles: float, rebar_radius: float | None
                       ) -> float:
    """Mass loss as a percentage of the initial rebar mass per unit length."""
    if rebar_radius is None or rebar_radius <= 0.0:
        return float("nan")
    initial = RHO_STEEL * np.pi * rebar_radius ** 2
    return 100.0 * cumulative_moles * M_IRON / initial


PROFILE_FIELDS = ("c_f", "c_b", "C_tot", "c_II", "c_III", "S_p", "phi")


@dataclass(frozen=True)
class ProfileRequest:
    start: tuple[float, float]
    end: tuple[float, float]
    count: int
    field: str

    def __post_init__(self):
        if self.count < 2:
            raise ValueError("profile needs at least 2 sample points")
        if self.field not in PROFILE_FIELDS:
            raise ValueError(f"unknown field {self.field!r}; choose from "
                             + ", ".join(PROFILE_FIELDS))


def _nodal_field(state: FieldState, name: str, params: TransportParams
                 ) -> np.ndarray:
    if name == "c_f":
        return state.c_f
    if name == "c_b":
        return state.c_b
    if name == "C_tot":
        return chem.total_chloride(state.c_f, state.c_b, params)
    if name == "c_II":
        return state.c_ii
    if name == "c_III":
        return state.c_iii
    if name == "S_p":
        return state.theta_p / params.porosity
    if name == "phi":
        return state.phi
    raise ValueError(name)


def interpolate_at(state: FieldState, mesh: Mesh, points: np.ndarray,
                   field_name: str, params: TransportParams) -> np.ndarray:
    """Linear interpolation of a concrete field at arbitrary points; NaN for
    points outside the domain or inside steel."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    values = np.full(len(points), np.nan)
    nodal = _nodal_field(state, field_name, params)

    p = mesh.nodes[mesh.tris]
    x1, y1 = p[:, 0, 0], p[:, 0, 1]
    x2, y2 = p[:, 1, 0], p[:, 1, 1]
    x3, y3 = p[:, 2, 0], p[:, 2, 1]
    det = (x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1)
    tol = 1e-10
    concrete = mesh.subdomain == CONCRETE
    for i, (px, py) in enumerate(points):
        l2 = ((px - x1) * (y3 - y1) - (x3 - x1) * (py - y1)) / det
        l3 = ((x2 - x1) * (py - y1) - (px - x1) * (y2 - y1)) / det
        l1 = 1.0 - l2 - l3
        inside = (l1 >= -tol) & (l2 >= -tol) & (l3 >= -tol)
        hits = np.flatnonzero(inside & concrete)
        if len(hits):
            t = hits[0]
            lam = np.array([l1[t], l2[t], l3[t]])
            values[i] = float(lam @ nodal[mesh.tris[t]])
        # outside the mesh, or inside steel only: stays NaN
    return values


def sample_profile(state: FieldState, mesh: Mesh, req: ProfileRequest,
                   params: TransportParams) -> np.ndarray:
    """(position, value) samples along the polyline; NaN marks points
    outside the domain or inside steel (all requested fields live on
    concrete only)."""
    start = np.asarray(req.start)
    end = np.asarray(req.end)
    ts = np.linspace(0.0, 1.0, req.count)
    points = start[None, :] + ts[:, None] * (end - start)[None, :]
    values = interpolate_at(state, mesh, points, req.field, params)
    if np.all(np.isnan(values)):
        raise ValueError("profile polyline lies entirely outside the domain")
    dist = np.hypot(*(points - start).T)
    return np.column_stack([dist, values])


_VTK_FIELDS = ("c_f", "c_b", "C_tot", "c_II", "c_III", "theta_p", "S_p", "phi")


def write_vtk(state: FieldState, mesh: Mesh, path: str | Path,
              params: TransportParams) -> None:
    """Legacy VTK ASCII unstructured-grid snapshot of all nodal fields."""
    arrays = {
        "c_f": state.c_f, "c_b": state.c_b,
        "C_tot": chem.total_chloride(state.c_f, state.c_b, params),
        "c_II": state.c_ii, "c_III": state.c_iii,
        "theta_p": state.theta_p, "S_p": state.theta_p / params.porosity,
        "phi": state.phi,
    }
    for name, arr in list(arrays.items()) + [("u", state.u)]:
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"refusing to write NaN/inf field {name!r}")

    def fmt(x):
        return f"{x:.17g}"

    lines = ["# vtk DataFile Version 3.0",
             "corrocrack snapshot",
             "ASCII",
             "DATASET UNSTRUCTURED_GRID",
             f"POINTS {mesh.n_nodes} double"]
    for x, y in mesh.nodes:
        lines.append(f"{fmt(x)} {fmt(y)} 0")
    lines.append(f"CELLS {mesh.n_tris} {4 * mesh.n_tris}")
    for tri in mesh.tris:
        lines.append(f"3 {tri[0]} {tri[1]} {tri[2]}")
    lines.append(f"CELL_TYPES {mesh.n_tris}")
    lines.extend(["5"] * mesh.n_tris)
    lines.append(f"POINT_DATA {mesh.n_nodes}")
    for name in _VTK_FIELDS:
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(fmt(v) for v in arrays[name])
    lines.append("VECTORS u double")
    for ux, uy in state.u:
        lines.append(f"{fmt(ux)} {fmt(uy)} 0")
    Path(path).write_text("\n".join(lines) + "\n")


TIMESERIES_HEADER = ["t_s", "t_days", "w_m", "w_rel", "mass_loss_rel",
                     "activated_frac", "max_Ctot_pct", "max_Sp"]


def write_timeseries(rows: list[TimelineRecord], path: str | Path) -> None:
    """RFC-4180 CSV of the scalar observables, full float precision."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TIMESERIES_HEADER)
        for r in rows:
            writer.writerow([repr(v) for v in (
                r.t_s, r.t_s / 86400.0, r.w_m, r.w_rel, r.mass_loss_rel,
                r.activated_frac, r.max_ctot_pct, r.max_sp)])


SWEEP_HEADER = ["point", "cover_m", "D_f_m2s", "threshold_pct",
                "salinity_gpl", "w_m", "w_rel", "mass_loss_rel", "max_Sp",
                "status"]


def write_sweep_summary(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        for row in rows:
            writer.writerow([
                row.get("point", ""),
                *(repr(row[k]) if isinstance(row.get(k), float) else
                  row.get(k, "") for k in SWEEP_HEADER[1:]),
            ])
