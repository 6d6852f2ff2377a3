"""Mutable per-run field state and step bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class StepRejection(RuntimeError):
    """A time step failed and should be retried with a smaller dt."""


class NumericalAbort(RuntimeError):
    """A step kept failing after the maximum number of dt halvings."""


@dataclass
class FieldState:
    """All nodal unknowns plus the quadrature-point crack driving history.

    Transport and phase-field values are meaningful on concrete nodes only;
    entries on steel-interior nodes stay zero.  ``theta_l_prev`` is the
    nodal liquid fraction under which the current concentrations were
    solved, carried so the next transport step conserves mass exactly while
    pores keep filling.
    """

    t: float
    c_f: np.ndarray
    c_b: np.ndarray
    c_ii: np.ndarray
    c_iii: np.ndarray
    theta_p: np.ndarray
    theta_l_prev: np.ndarray
    u: np.ndarray  # (n_nodes, 2)
    phi: np.ndarray
    history: np.ndarray  # (n_concrete_tris, nq)

    @classmethod
    def zero(cls, n_nodes: int, n_concrete_tris: int, n_qp: int,
             porosity: float, h_floor: float) -> "FieldState":
        return cls(
            t=0.0,
            c_f=np.zeros(n_nodes),
            c_b=np.zeros(n_nodes),
            c_ii=np.zeros(n_nodes),
            c_iii=np.zeros(n_nodes),
            theta_p=np.zeros(n_nodes),
            theta_l_prev=np.full(n_nodes, porosity),
            u=np.zeros((n_nodes, 2)),
            phi=np.zeros(n_nodes),
            history=np.full((n_concrete_tris, n_qp), h_floor),
        )

    def copy(self) -> "FieldState":
        return FieldState(
            t=self.t,
            c_f=self.c_f.copy(),
            c_b=self.c_b.copy(),
            c_ii=self.c_ii.copy(),
            c_iii=self.c_iii.copy(),
            theta_p=self.theta_p.copy(),
            theta_l_prev=self.theta_l_prev.copy(),
            u=self.u.copy(),
            phi=self.phi.copy(),
            history=self.history.copy(),
        )

    def check_finite(self) -> None:
        for name in ("c_f", "c_b", "c_ii", "c_iii", "theta_p", "u", "phi",
                     "history"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise StepRejection(f"non-finite values in field {name}")


@dataclass
class StepReport:
    """Per-step bookkeeping used by the conservation accounting."""

    chloride_influx_mol: float = 0.0
    iron_influx_mol: float = 0.0
    precipitated_mol: float = 0.0
    theta_l_clamped_nodes: int = 0
    binding_mask_flips: int = 0


@dataclass(frozen=True)
class TimelineRecord:
    """Scalar observables of one output instant."""

    t_s: float
    w_m: float
    w_rel: float
    mass_loss_rel: float
    activated_frac: float
    max_ctot_pct: float
    max_sp: float
