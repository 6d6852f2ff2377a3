"""Material, transport and exposure parameter sets (SI units throughout).

Chloride contents and thresholds are expressed in percent of binder mass,
matching how they are usually reported; everything else is plain SI.
"""

from __future__ import annotations

from dataclasses import dataclass, field

FARADAY = 96485.0  # C/mol
ANODIC_ELECTRONS = 2  # electrons per dissolved Fe in the anodic reaction
M_IRON = 0.05585  # kg/mol, elemental iron
RHO_STEEL = 7850.0  # kg/m3, used for relative mass loss
NACL_MOLAR_MASS = 58.44e-3  # kg/mol
CL_MASS_FRACTION_NACL = 35.45 / 58.44  # chloride mass fraction of NaCl


class ParameterError(ValueError):
    """Raised when a parameter set violates its physical bounds."""


@dataclass(frozen=True)
class TransportParams:
    """Chloride and iron reactive-transport parameters.

    Diffusivities prefixed ``D_*_eff`` are effective values of the saturated,
    precipitate-free material (the tabulated liquid-fraction/diffusivity
    product); ``D_*_crack`` are the fully cracked values.
    """

    porosity: float  # p0
    D_f_eff: float  # m2/s, chlorides, undamaged
    D_f_crack: float  # m2/s, chlorides, fully cracked
    D_ii_eff: float  # m2/s, ferrous ions, undamaged
    D_iii_eff: float  # m2/s, ferric ions, undamaged
    D_ii_crack: float  # m2/s, ferrous ions, fully cracked
    D_iii_crack: float  # m2/s, ferric ions, fully cracked
    alpha: float  # 1/s, binding kinetics
    beta: float  # -, binding equilibrium slope
    threshold_pct: float  # chloride threshold, % of binder mass
    kappa: float  # A/m2, corrosion current density plateau
    M_cl: float  # kg/mol
    m_c: float  # kg/m3, binder mass per unit volume
    k_oxidation: float  # mol^-1 m3 s^-1, Fe2+ -> Fe3+
    k_precipitation: float  # 1/s, Fe3+ -> rust
    c_ox: float  # mol/m3, dissolved oxygen
    M_rust: float  # kg/mol
    rho_rust: float  # kg/m3
    faraday: float = FARADAY
    z_anodic: int = ANODIC_ELECTRONS

    def __post_init__(self):
        if not 0.0 < self.porosity < 1.0:
            raise ParameterError(f"porosity must be in (0,1), got {self.porosity}")
        for name in ("alpha", "beta", "kappa"):
            if getattr(self, name) < 0.0:
                raise ParameterError(f"{name} must be non-negative")
        for eff, crk in (("D_f_eff", "D_f_crack"), ("D_ii_eff", "D_ii_crack"),
                         ("D_iii_eff", "D_iii_crack")):
            d_eff, d_crk = getattr(self, eff), getattr(self, crk)
            if d_eff < 0.0 or d_crk < 0.0:
                raise ParameterError(f"{eff}/{crk} must be non-negative")
            if d_crk < d_eff:
                raise ParameterError(f"{crk}={d_crk} below undamaged {eff}={d_eff}")
        if self.m_c <= 0.0:
            raise ParameterError("binder mass m_c must be positive")
        if self.threshold_pct <= 0.0:
            raise ParameterError("chloride threshold must be positive")

    @property
    def theta_l_floor(self) -> float:
        """Liquid-fraction floor preventing a singular capacity matrix."""
        return 1e-3 * self.porosity


@dataclass(frozen=True)
class MechParams:
    """Elasticity, fracture and rust mechanics parameters."""

    E_c: float  # Pa, concrete
    nu_c: float
    f_t: float  # Pa, tensile strength
    G_f: float  # J/m2, fracture energy
    E_s: float = 205e9  # Pa, steel
    nu_s: float = 0.28
    E_rust: float = 440e6  # Pa
    nu_rust: float = 0.4
    rust_porosity: float = 0.16  # r0
    M_rust: float = 0.10685  # kg/mol
    rho_rust: float = 3560.0  # kg/m3
    rho_iron_ref: float = 7870.0  # kg/m3, dissolved-iron reference density
    M_iron: float = M_IRON  # kg/mol
    ell: float | None = None  # m, phase-field length; None = derived default
    body_force: tuple[float, float] = (0.0, 0.0)  # N/m3

    def __post_init__(self):
        for e_name, nu_name in (("E_c", "nu_c"), ("E_s", "nu_s"), ("E_rust", "nu_rust")):
            e, nu = getattr(self, e_name), getattr(self, nu_name)
            if e <= 0.0:
                raise ParameterError(f"{e_name} must be positive")
            if not 0.0 < nu < 0.5:
                raise ParameterError(f"{nu_name} must be in (0, 0.5), got {nu}")
        if self.G_f <= 0.0 or self.f_t <= 0.0:
            raise ParameterError("G_f and f_t must be positive")
        if not 0.0 <= self.rust_porosity < 1.0:
            raise ParameterError("rust porosity r0 must be in [0,1)")


@dataclass(frozen=True)
class MeiraBC:
    """Deposition-driven surface chloride buildup C(t) = C0 + k * sqrt(D_ac).

    ``D_ac`` is the accumulated chloride deposition ``I_s * w_cl * t`` in
    g/m2.  The coefficient absorbs the unit ambiguity of reported deposition
    intensities, so the chain (I_s in g/m2/s of salt, w_cl the chloride mass
    fraction of that salt) is fixed here and logged with every run.
    """

    C0_pct: float = 0.0  # initial surface content, % of binder
    k_cmax: float = 1.96e-3  # % per sqrt(g/m2), fitted coefficient
    I_s: float = 5.69 / 3600.0  # g/(m2 s), salt deposition rate
    w_cl: float = CL_MASS_FRACTION_NACL  # chloride mass fraction of the salt

    def __post_init__(self):
        for name in ("C0_pct", "k_cmax", "I_s", "w_cl"):
            if getattr(self, name) < 0.0:
                raise ParameterError(f"{name} must be non-negative")


@dataclass(frozen=True)
class ConstantBC:
    """Fixed surface concentration of free chlorides (mol/m3)."""

    c_bar: float

    def __post_init__(self):
        if self.c_bar < 0.0:
            raise ParameterError("surface concentration must be non-negative")


Exposure = MeiraBC | ConstantBC


def chen_transport() -> TransportParams:
    """Mortar prism transport preset (marine chamber exposure study)."""
    return TransportParams(
        porosity=0.15,
        D_f_eff=2.7e-12,
        D_f_crack=1e-9,
        D_ii_eff=1e-11,
        D_iii_eff=1e-11,
        D_ii_crack=7e-10,
        D_iii_crack=7e-10,
        alpha=1e-5,
        beta=0.7,
        threshold_pct=0.22,
        kappa=0.8e-2,  # 0.8 uA/cm2
        M_cl=0.0355,
        m_c=575.0,
        k_oxidation=0.1,
        k_precipitation=2e-4,
        c_ox=0.28,
        M_rust=0.10685,
        rho_rust=3560.0,
    )


def ye_transport() -> TransportParams:
    """Concrete prism transport preset (wet/dry salt cycling study)."""
    return TransportParams(
        porosity=0.19,
        D_f_eff=2.7e-12,
        D_f_crack=1e-9,
        D_ii_eff=1e-11,
        D_iii_eff=1e-11,
        D_ii_crack=7e-10,
        D_iii_crack=7e-10,
        alpha=1e-5,
        beta=0.7,
        threshold_pct=0.56,
        kappa=4.6e-2,  # 4.6 uA/cm2
        M_cl=0.0355,
        m_c=372.0,
        k_oxidation=0.1,
        k_precipitation=2e-4,
        c_ox=0.28,
        M_rust=0.10685,
        rho_rust=3560.0,
    )


def chen_mechanics() -> MechParams:
    return MechParams(E_c=29e9, nu_c=0.18, f_t=4.1e6, G_f=67.0, ell=1e-3)


def ye_mechanics() -> MechParams:
    return MechParams(E_c=34e9, nu_c=0.18, f_t=3.2e6, G_f=100.0, ell=1e-3)


# Full scenario presets (geometry + exposure + stepping) live in
# corrocrack.runcard; re-exported lazily to avoid an import cycle.
def chen2020():
    from corrocrack.runcard import preset_chen2020

    return preset_chen2020()


def ye2017():
    from corrocrack.runcard import preset_ye2017

    return preset_ye2017()


def seawater():
    from corrocrack.runcard import preset_seawater

    return preset_seawater()
