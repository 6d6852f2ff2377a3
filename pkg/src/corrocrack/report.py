"""Figure rendering for run, sweep and fit outputs.

Figures are written next to the delimited output files; the solver layer
never imports this module.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from corrocrack.state import TimelineRecord

DPI = 150


def _days(rows: list[TimelineRecord]) -> np.ndarray:
    return np.array([r.t_s for r in rows]) / 86400.0


def timeline_figures(rows: list[TimelineRecord], out_dir: str | Path) -> list[Path]:
    """Crack-width, transport and mass-loss histories as PNG files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    days = _days(rows)
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(days, [1e3 * r.w_m for r in rows], "-", color="tab:red")
    ax.set_xlabel("time [days]")
    ax.set_ylabel("surface crack width [mm]")
    ax2 = ax.twinx()
    ax2.plot(days, [100.0 * r.w_rel for r in rows], alpha=0.0)
    ax2.set_ylabel("relative width [%]")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = out / "crack_width.png"
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(days, [r.max_ctot_pct for r in rows], label="max C_tot [%]")
    ax.plot(days, [r.activated_frac for r in rows], label="anodic fraction")
    ax.plot(days, [r.max_sp for r in rows], label="max S_p")
    ax.set_xlabel("time [days]")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = out / "transport.png"
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(days, [r.mass_loss_rel for r in rows], color="tab:gray")
    ax.set_xlabel("time [days]")
    ax.set_ylabel("relative steel mass loss [%]")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = out / "mass_loss.png"
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    written.append(path)
    return written


def sweep_figure(summary: list[dict], out_dir: str | Path) -> list[Path]:
    """End-time crack width against each swept axis."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    axes = {"cover_m": ("cover [mm]", 1e3), "D_f_m2s": ("D_f [m2/s]", 1.0),
            "threshold_pct": ("threshold [% binder]", 1.0),
            "salinity_gpl": ("salinity [g/L]", 1.0)}
    for key, (label, scale) in axes.items():
        pts = [(row[key] * scale, row["w_m"] * 1e3, row["w_rel"])
               for row in summary
               if row["status"] == "ok" and np.isfinite(row.get(key, np.nan))]
        if len(pts) < 2:
            continue
        pts.sort()
        xs, ws, rel = zip(*pts)
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(xs, ws, "o-", color="tab:red")
        if key == "D_f_m2s":
            ax.set_xscale("log")
        ax.set_xlabel(label)
        ax.set_ylabel("end-time crack width [mm]")
        ax2 = ax.twinx()
        ax2.plot(xs, [100.0 * r for r in rel], alpha=0.0)
        ax2.set_ylabel("relative width [%]")
        ax.grid(alpha=0.3)
        fig.tight_layout()
        path = out / f"sweep_{key}.png"
        fig.savefig(path, dpi=DPI)
        plt.close(fig)
        written.append(path)
    return written


def fit_figure(candidates: np.ndarray, r2: np.ndarray,
               out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogx(candidates, r2, "o-")
    best = int(np.argmax(r2))
    ax.axvline(candidates[best], color="tab:red", ls="--",
               label=f"best = {candidates[best]:.2e} m2/s")
    ax.set_xlabel("chloride diffusivity [m2/s]")
    ax.set_ylabel("R2")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = out / "fit_r2.png"
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path
