"""Parameter sweeps over scenario cards and the diffusivity-fitting harness."""

from __future__ import annotations

import dataclasses
import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from corrocrack import chem, fem, post
from corrocrack.driver import Timeline, run_simulation
from corrocrack.params import ConstantBC
from corrocrack.runcard import CardError, MeshSource, RunCard
from corrocrack.state import FieldState, NumericalAbort

log = logging.getLogger(__name__)

SWEEP_AXES = ("cover", "D_f", "threshold", "salinity")

FIT_RANGE = (1e-13, 1e-11)  # m2/s, admissible chloride diffusivities
FIT_DEPTH_MIN = 7.5e-3  # m, diffusion-dominated region starts here


def apply_axis(card: RunCard, axis: str, value: float) -> RunCard:
    """Return a copy of the card with one sweep axis applied."""
    if axis == "cover":
        if card.mesh.kind != "ogrid":
            raise CardError("cover sweeps need a generated o-grid mesh")
        spec = card.mesh.ogrid
        center = (spec.center[0], spec.height - value - spec.radius)
        mesh = MeshSource(kind="ogrid",
                          ogrid=dataclasses.replace(spec, center=center))
        return dataclasses.replace(card, mesh=mesh)
    if axis == "D_f":
        tp = dataclasses.replace(card.transport, D_f_eff=value)
        return dataclasses.replace(card, transport=tp)
    if axis == "threshold":
        tp = dataclasses.replace(card.transport, threshold_pct=value)
        return dataclasses.replace(card, transport=tp)
    if axis == "salinity":
        bc = ConstantBC(c_bar=chem.salinity_to_concentration(value))
        return dataclasses.replace(card, exposure=bc)
    raise CardError(f"unknown sweep axis {axis!r}")


def sweep_points(card: RunCard) -> list[tuple[str, dict, RunCard]]:
    """Expand the card's sweep axes into labelled run points."""
    axes = {k: v for k, v in card.sweep_axes.items() if v}
    if not axes:
        raise CardError("sweep requires at least one non-empty axis")
    points: list[tuple[str, dict, RunCard]] = []
    if card.sweep_cartesian:
        names = sorted(axes)
        for combo in itertools.product(*(axes[n] for n in names)):
            values = dict(zip(names, combo))
            point = card
            for axis, value in values.items():
                point = apply_axis(point, axis, value)
            label = ",".join(f"{n}={v:.6g}" for n, v in values.items())
            points.append((label, values, point))
    else:
        for axis in sorted(axes):
            for value in axes[axis]:
                label = f"{axis}={value:.6g}"
                points.append((label, {axis: value},
                               apply_axis(card, axis, value)))
    return points


def _summary_row(label: str, values: dict, card: RunCard,
                 timeline: Timeline | None, error: str | None) -> dict:
    row = {
        "point": label,
        "cover_m": values.get("cover", float("nan")),
        "D_f_m2s": values.get("D_f", card.transport.D_f_eff),
        "threshold_pct": values.get("threshold", card.transport.threshold_pct),
        "salinity_gpl": values.get("salinity", float("nan")),
        "w_m": float("nan"), "w_rel": float("nan"),
        "mass_loss_rel": float("nan"), "max_Sp": float("nan"),
        "status": "ok" if error is None else f"failed: {error}",
    }
    if timeline is not None and timeline.rows:
        end = timeline.end
        row.update(w_m=end.w_m, w_rel=end.w_rel,
                   mass_loss_rel=end.mass_loss_rel, max_Sp=end.max_sp)
    return row


def _run_point(args):
    index, label, values, card, out_dir = args
    try:
        point_dir = None
        if out_dir is not None:
            safe = label.replace("=", "_").replace(",", "__").replace(".", "p")
            point_dir = Path(out_dir) / f"point_{index:03d}_{safe}"
        timeline = run_simulation(card, out_dir=point_dir)
        return index, timeline, None
    except (NumericalAbort, Exception) as exc:  # per-point failures recorded
        return index, None, f"{type(exc).__name__}: {exc}"


def run_sweep(card: RunCard, out_dir: str | Path | None = None,
              threads: int = 1) -> tuple[list[tuple[str, Timeline | None]],
                                         list[dict]]:
    """Run all sweep points; failures are recorded and the sweep continues.

    Returns (labelled timelines, summary rows); results are merged in the
    deterministic point order regardless of worker scheduling.
    """
    points = sweep_points(card)
    jobs = [(i, label, values, pt, out_dir)
            for i, (label, values, pt) in enumerate(points)]
    results: dict[int, tuple[Timeline | None, str | None]] = {}
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for index, timeline, error in pool.map(_run_point, jobs):
                results[index] = (timeline, error)
    else:
        for job in jobs:
            index, timeline, error = _run_point(job)
            results[index] = (timeline, error)

    labelled: list[tuple[str, Timeline | None]] = []
    summary: list[dict] = []
    for i, (label, values, pt) in enumerate(points):
        timeline, error = results[i]
        if error is not None:
            log.warning("sweep point %s failed: %s", label, error)
        labelled.append((label, timeline))
        summary.append(_summary_row(label, values, pt, timeline, error))
    if out_dir is not None:
        post.write_sweep_summary(summary, Path(out_dir) / "sweep_summary.csv")
    return labelled, summary


@dataclass(frozen=True)
class FitResult:
    candidates: np.ndarray
    r2: np.ndarray
    best: float
    best_index: int


def _exposure_ray(card: RunCard, mesh) -> tuple[np.ndarray, np.ndarray]:
    """Start point on the exposed surface and the inward unit direction of
    the depth-sampling line."""
    xmin, ymin = mesh.nodes.min(axis=0)
    xmax, ymax = mesh.nodes.max(axis=0)
    if card.mesh.kind == "ogrid":
        cx = card.mesh.ogrid.center[0]
        cy = card.mesh.ogrid.center[1]
    else:
        cx, cy = 0.5 * (xmin + xmax), 0.5 * (ymin + ymax)
    side = card.exposed_sides[0]
    rays = {
        "TOP": (np.array([cx, ymax]), np.array([0.0, -1.0])),
        "BOTTOM": (np.array([cx, ymin]), np.array([0.0, 1.0])),
        "LEFT": (np.array([xmin, cy]), np.array([1.0, 0.0])),
        "RIGHT": (np.array([xmax, cy]), np.array([-1.0, 0.0])),
    }
    return rays[side]


def chloride_only_profiles(card: RunCard, times: np.ndarray,
                           depths: np.ndarray) -> np.ndarray:
    """Total chloride content (percent of binder) at the requested physical
    depths and times, from a chloride-only simulation of the card."""
    mesh = card.build_mesh()
    cache = fem.build_cache(mesh)
    tp = card.transport
    state = FieldState.zero(mesh.n_nodes, len(cache.concrete),
                            len(cache.quad.weights), tp.porosity, 0.0)
    cc_nodes = np.unique(mesh.gamma_cc)
    start, direction = _exposure_ray(card, mesh)
    # Physical depth includes the convection-skin offset of the exposure
    # plane; points shallower than the offset lie outside the model.
    model_depth = np.asarray(depths) - card.surface_offset
    points = start[None, :] + model_depth[:, None] * direction[None, :]

    dt_base = card.dt * card.initiation_multiplier
    grid = set(np.round(times, 9).tolist())
    t_end = float(np.max(times))
    k = 1
    while k * dt_base < t_end - 1e-9:
        grid.add(round(k * dt_base, 9))
        k += 1
    grid.add(round(t_end, 9))
    grid = sorted(grid)

    out = np.full((len(times), len(depths)), np.nan)
    t_prev = 0.0
    eps = 1e-6
    for t in grid:
        dt = t - t_prev
        if dt <= 0.0:
            continue
        c_bar = chem.surface_concentration(t, card.exposure, tp)
        chem.step_chlorides(state, dt, cache, tp, c_bar, cc_nodes)
        t_prev = t
        for i, tm in enumerate(times):
            if abs(tm - t) <= eps * max(tm, 1.0):
                out[i] = post.interpolate_at(state, mesh, points, "C_tot", tp)
    return out


def fit_diffusivity(measurements: np.ndarray, card: RunCard,
                    candidates: np.ndarray) -> FitResult:
    """Fit the undamaged chloride diffusivity against measured profiles.

    ``measurements`` rows are (depth_m, C_tot_pct, time_s) with depth taken
    from the physical surface; only the diffusion-dominated region deeper
    than 7.5 mm enters the coefficient of determination.
    """
    meas = np.asarray(measurements, dtype=float)
    if meas.ndim != 2 or meas.shape[1] != 3:
        raise CardError("measurements must be rows of (depth_m, C_tot_pct, time_s)")
    meas = meas[meas[:, 0] > FIT_DEPTH_MIN]
    if len(meas) < 3:
        raise CardError("need at least 3 measurement points deeper than "
                        f"{FIT_DEPTH_MIN * 1e3:.1f} mm")
    candidates = np.asarray(candidates, dtype=float)
    if np.any((candidates < FIT_RANGE[0]) | (candidates > FIT_RANGE[1])):
        raise CardError(
            f"candidate diffusivities must lie within [{FIT_RANGE[0]:g}, "
            f"{FIT_RANGE[1]:g}] m2/s")

    times = np.unique(meas[:, 2])
    depths = np.unique(meas[:, 0])
    t_idx = {t: i for i, t in enumerate(times)}
    d_idx = {d: j for j, d in enumerate(depths)}

    measured = meas[:, 1]
    ss_tot = float(np.sum((measured - measured.mean()) ** 2))
    r2 = np.empty(len(candidates))
    for k, d_f in enumerate(candidates):
        point = apply_axis(card, "D_f", float(d_f))
        table = chloride_only_profiles(point, times, depths)
        predicted = np.array([table[t_idx[t], d_idx[d]]
                              for d, _, t in meas])
        if np.any(np.isnan(predicted)):
            raise CardError("a measurement point falls outside the mesh")
        ss_res = float(np.sum((predicted - measured) ** 2))
        r2[k] = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else float("nan")
    best = int(np.argmax(r2))
    return FitResult(candidates=candidates, r2=r2,
                     best=float(candidates[best]), best_index=best)


def default_fit_grid(n: int = 20) -> np.ndarray:
    """Log-spaced candidate grid over the admissible diffusivity range."""
    return np.logspace(np.log10(FIT_RANGE[0]), np.log10(FIT_RANGE[1]), n)
