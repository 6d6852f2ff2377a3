"""Command-line interface: run, sweep, fit-diffusivity and mesh subcommands.

Exit codes: 0 on success, 2 for run-card validation errors, 3 for numerical
aborts.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from corrocrack import post, report
from corrocrack.driver import run_simulation, write_runlog
from corrocrack.mesh import GeometryError, MeshValidationError
from corrocrack.msh import MshParseError
from corrocrack.params import ParameterError
from corrocrack.runcard import PRESETS, CardError, RunMode, build_card, \
    load_card, preset_doc
from corrocrack.state import NumericalAbort
from corrocrack.sweep import default_fit_grid, fit_diffusivity, run_sweep

log = logging.getLogger("corrocrack")

EXIT_OK = 0
EXIT_CARD = 2
EXIT_NUMERICAL = 3


def _add_card_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--card", type=Path, help="run-card TOML file")
    parser.add_argument("--preset", choices=sorted(PRESETS),
                        help="built-in scenario; --card overrides its values")
    parser.add_argument("--mode", choices=[m.value for m in RunMode],
                        help="override the run mode")
    parser.add_argument("--out", type=Path, default=Path("out"),
                        help="output directory (default: ./out)")
    parser.add_argument("--threads", type=int, default=1,
                        help="concurrent sweep workers")
    parser.add_argument("--seedless", action="store_true",
                        help="assert the fully deterministic, RNG-free mode "
                             "(always on; flag kept for pipelines)")


def _resolve_card(args):
    if args.card is None and args.preset is None:
        raise CardError("either --card or --preset is required")
    if args.card is not None:
        card = load_card(args.card, preset=args.preset)
    else:
        card = PRESETS[args.preset]()
    if args.mode is not None:
        import dataclasses

        card = dataclasses.replace(card, mode=RunMode(args.mode))
    return card


def _cmd_run(args) -> int:
    card = _resolve_card(args)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    timeline = run_simulation(card, out_dir=out)
    write_runlog(card, timeline, out / "run.log")
    report.timeline_figures(timeline.rows, out / "figures")
    end = timeline.end
    print(f"run '{card.name}' finished at t = {end.t_s / 86400.0:.1f} days: "
          f"w = {end.w_m * 1e3:.4f} mm (w_rel = {end.w_rel * 100:.1f} %), "
          f"mass loss = {end.mass_loss_rel:.3f} %, "
          f"max S_p = {end.max_sp:.3f}")
    print(f"outputs in {out}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    card = _resolve_card(args)
    if args.axis:
        import dataclasses

        from corrocrack.runcard import parse_quantity

        dims = {"cover": "length", "D_f": "diffusivity",
                "threshold": "percent", "salinity": "salinity"}
        axes = dict(card.sweep_axes)
        for spec in args.axis:
            if "=" not in spec:
                raise CardError(f"--axis expects name=v1,v2,... got {spec!r}")
            name, _, values = spec.partition("=")
            if name not in dims:
                raise CardError(f"unknown sweep axis {name!r}")
            axes[name] = [parse_quantity(v.strip(), dims[name], f"axis {name}")
                          for v in values.split(",")]
        card = dataclasses.replace(card, sweep_axes=axes,
                                   sweep_cartesian=args.cartesian)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    labelled, summary = run_sweep(card, out_dir=out, threads=args.threads)
    report.sweep_figure(summary, out / "figures")
    failed = [row for row in summary if row["status"] != "ok"]
    for row in summary:
        print(f"{row['point']}: w = {row['w_m'] * 1e3 if row['w_m'] == row['w_m'] else float('nan'):.4f} mm "
              f"({row['status']})")
    print(f"summary in {out / 'sweep_summary.csv'}"
          + (f"; {len(failed)} point(s) failed" if failed else ""))
    return EXIT_NUMERICAL if len(failed) == len(summary) else EXIT_OK


def _read_measurements(path: Path) -> np.ndarray:
    """CSV with header depth_mm,C_tot_pct,time_day."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"depth_mm", "C_tot_pct", "time_day"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise CardError(
                f"measurement file needs columns {sorted(required)}")
        for row in reader:
            rows.append((float(row["depth_mm"]) * 1e-3,
                         float(row["C_tot_pct"]),
                         float(row["time_day"]) * 86400.0))
    return np.asarray(rows)


def _cmd_fit(args) -> int:
    card = _resolve_card(args)
    measurements = _read_measurements(args.measurements)
    candidates = default_fit_grid(args.grid)
    result = fit_diffusivity(measurements, card, candidates)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "fit_r2.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["D_f_m2s", "r2"])
        for d, r in zip(result.candidates, result.r2):
            writer.writerow([repr(float(d)), repr(float(r))])
    report.fit_figure(result.candidates, result.r2, out / "figures")
    print(f"best diffusivity: {result.best:.4e} m2/s "
          f"(R2 = {result.r2[result.best_index]:.4f}); "
          f"table in {out / 'fit_r2.csv'}")
    return EXIT_OK


def _cmd_mesh(args) -> int:
    from corrocrack import fem
    from corrocrack.msh import read_msh
    from corrocrack.state import FieldState

    if args.msh is not None:
        mesh = read_msh(Path(args.msh).read_bytes())
        card = None
    else:
        card = _resolve_card(args)
        mesh = card.build_mesh()
    areas = mesh.areas()
    cache = fem.build_cache(mesh)
    gs = mesh.gamma_s
    print(f"nodes: {mesh.n_nodes}")
    print(f"triangles: {mesh.n_tris} "
          f"(concrete {int((mesh.subdomain == 0).sum())}, "
          f"steel {int((mesh.subdomain == 1).sum())})")
    print(f"area: {areas.sum():.6e} m2, smallest element {areas.min():.3e} m2")
    if len(gs):
        L = np.hypot(*(mesh.nodes[gs[:, 1]] - mesh.nodes[gs[:, 0]]).T)
        print(f"interface edges: {len(gs)}, length {L.min():.3e}"
              f"..{L.max():.3e} m")
    print(f"boundary edges: exposed {len(mesh.gamma_cc)}, "
          f"sealed {len(mesh.gamma_cf)}, upper surface {len(mesh.gamma_us)}")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        tp = card.transport if card is not None else None
        if tp is None:
            from corrocrack.params import chen_transport

            tp = chen_transport()
        state = FieldState.zero(mesh.n_nodes, len(cache.concrete),
                                len(cache.quad.weights), tp.porosity, 0.0)
        post.write_vtk(state, mesh, args.out / "mesh.vtk", tp)
        print(f"wrote {args.out / 'mesh.vtk'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corrocrack",
        description="Chloride-driven corrosion cracking simulator for "
                    "reinforced concrete cross-sections")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    _add_card_args(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a parameter sweep")
    _add_card_args(p_sweep)
    p_sweep.add_argument("--axis", action="append", default=[],
                         metavar="NAME=V1,V2,...",
                         help="override/define a sweep axis, e.g. "
                              "--axis 'cover=15 mm,20 mm'")
    p_sweep.add_argument("--cartesian", action="store_true",
                         help="take the Cartesian product of all axes")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_fit = sub.add_parser("fit-diffusivity",
                           help="fit the chloride diffusivity to measured "
                                "content profiles")
    _add_card_args(p_fit)
    p_fit.add_argument("--measurements", type=Path, required=True,
                       help="CSV with columns depth_mm,C_tot_pct,time_day")
    p_fit.add_argument("--grid", type=int, default=20,
                       help="number of log-spaced candidates (default 20)")
    p_fit.set_defaults(func=_cmd_fit)

    p_mesh = sub.add_parser("mesh", help="generate or inspect a mesh")
    _add_card_args(p_mesh)
    p_mesh.add_argument("--msh", type=Path,
                        help="inspect an MSH 2.2 file instead of generating")
    p_mesh.set_defaults(func=_cmd_mesh)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CardError, ParameterError, GeometryError, MeshValidationError,
            MshParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CARD
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
