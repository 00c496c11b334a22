"""Physical parameters, closed-form coupling estimates and regime checks.

Estimators work in SI (rates in rad/s, lengths in m). The simulation
modules work in units of the transmon-cavity coupling ``g_c`` (hbar = 1);
:func:`to_dimensionless` converts a parameter record between the two.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field
from decimal import Decimal

from scipy import constants as _sc

EXACT_DICKE = "exact_dicke"
BOSONIC = "bosonic"
SPIN_MODELS = (EXACT_DICKE, BOSONIC)

# default factor used to read "much larger than"
HIERARCHY_FACTOR = 10.0

_INT64_MAX = 2**63 - 1


class ParameterError(ValueError):
    """Raised for out-of-domain physical inputs."""


@dataclass(frozen=True)
class PhysicalConstants:
    bohr_magneton: float = _sc.physical_constants["Bohr magneton"][0]
    vacuum_permeability: float = _sc.mu_0
    hbar: float = _sc.hbar
    fine_structure_alpha: float = _sc.fine_structure
    boltzmann: float = _sc.k

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if not getattr(self, f.name) > 0:
                raise ParameterError(f"{f.name} must be positive")


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class Ensemble:
    """One spin ensemble: size, detuning below the cavity, optional own g_m."""

    N_s: int
    Delta: float
    g_m: float | None = None

    def __post_init__(self):
        if isinstance(self.N_s, float):
            if not self.N_s.is_integer():
                raise ParameterError("N_s must be an integer count")
            object.__setattr__(self, "N_s", int(self.N_s))
        if self.N_s < 1:
            raise ParameterError("every ensemble needs N_s >= 1")
        if self.g_m is not None and self.g_m < 0:
            raise ParameterError("g_m must be non-negative")


@dataclass(frozen=True)
class SystemParams:
    g_c: float
    g_m: float
    ensembles: tuple[Ensemble, ...]
    delta: float = 0.0
    omega_c: float | None = None
    kappa_c: float = 0.0
    gamma_JJ: float = 0.0
    gamma_spin: float = 0.0
    spin_model: str = EXACT_DICKE

    def __post_init__(self):
        object.__setattr__(self, "ensembles", tuple(self.ensembles))
        if not self.g_c > 0:
            raise ParameterError("g_c must be positive")
        if self.g_m < 0:
            raise ParameterError("g_m must be non-negative")
        if not self.ensembles:
            raise ParameterError("at least one ensemble is required")
        for name in ("kappa_c", "gamma_JJ", "gamma_spin"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be non-negative")
        if self.spin_model not in SPIN_MODELS:
            raise ParameterError(f"spin_model must be one of {SPIN_MODELS}")
        if self.omega_c is not None and not self.omega_c > 0:
            raise ParameterError("omega_c must be positive when given")

    def coupling(self, j: int) -> float:
        """Single-spin coupling of ensemble ``j``."""
        g = self.ensembles[j].g_m
        return self.g_m if g is None else g

    def collective(self, j: int = 0) -> float:
        return collective_coupling(self.coupling(j), self.ensembles[j].N_s)

    def replace(self, **changes) -> SystemParams:
        return dataclasses.replace(self, **changes)

    def with_detunings(self, delta=None, Deltas=None) -> SystemParams:
        ens = self.ensembles
        if Deltas is not None:
            if len(Deltas) != len(ens):
                raise ParameterError("one Delta per ensemble expected")
            ens = tuple(dataclasses.replace(e, Delta=float(d)) for e, d in zip(ens, Deltas))
        return dataclasses.replace(
            self, delta=self.delta if delta is None else float(delta), ensembles=ens
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["ensembles"] = [dataclasses.asdict(e) for e in self.ensembles]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SystemParams:
        d = dict(d)
        d["ensembles"] = tuple(Ensemble(**e) for e in d["ensembles"])
        return cls(**d)


def from_collective(g_c=1.0, G=0.02, N_s=10**6, delta=0.0, Delta=1.0, **kw) -> SystemParams:
    """Single-ensemble parameters specified by the collective coupling G."""
    return SystemParams(
        g_c=g_c,
        g_m=G / math.sqrt(N_s),
        ensembles=(Ensemble(N_s=N_s, Delta=Delta),),
        delta=delta,
        **kw,
    )


def embedded_defaults(**kw) -> SystemParams:
    """Resonant embedded-JC working point: delta = 0, Delta = g_c, G = 0.02 g_c."""
    return from_collective(g_c=1.0, G=0.02, N_s=10**6, delta=0.0, Delta=1.0, **kw)


def to_dimensionless(params: SystemParams) -> tuple[SystemParams, float]:
    """Rescale every rate by ``g_c``. Returns the new record and the scale (rad/s)."""
    s = params.g_c
    ens = tuple(
        dataclasses.replace(e, Delta=e.Delta / s, g_m=None if e.g_m is None else e.g_m / s)
        for e in params.ensembles
    )
    return (
        dataclasses.replace(
            params,
            g_c=1.0,
            g_m=params.g_m / s,
            ensembles=ens,
            delta=params.delta / s,
            omega_c=None if params.omega_c is None else params.omega_c / s,
            kappa_c=params.kappa_c / s,
            gamma_JJ=params.gamma_JJ / s,
            gamma_spin=params.gamma_spin / s,
        ),
        s,
    )


def magnetic_coupling(omega_c: float, g_c: float, V_c: float, constants=CONSTANTS) -> float:
    """Single-spin magnetic-dipole coupling (rad/s) for a mode volume ``V_c`` in m^3."""
    if not V_c > 0:
        raise ParameterError("mode volume must be positive")
    if g_c < 0 or not omega_c > g_c:
        raise ParameterError("need omega_c > g_c >= 0")
    c = constants
    return (
        c.bohr_magneton
        * math.sqrt(c.vacuum_permeability * (omega_c - g_c))
        / math.sqrt(2.0 * c.hbar * V_c)
    )


def max_electric_coupling(omega_c: float, constants=CONSTANTS) -> float:
    if omega_c < 0:
        raise ParameterError("omega_c must be non-negative")
    return math.sqrt(constants.fine_structure_alpha) * omega_c


def spin_count(density: float, thickness: float, width: float, length: float) -> int:
    """Number of dopant spins in a rectangular slab.

    ``density`` is per cm^3, dimensions in m. Decimal arithmetic keeps
    round inputs (1e16 cm^-3 in 1e-14 m^3) from landing one below an integer.
    """
    for name, v in (("density", density), ("thickness", thickness), ("width", width), ("length", length)):
        if not v > 0:
            raise ParameterError(f"{name} must be positive")
    # 1 m^3 = 1e6 cm^3
    n = Decimal(repr(float(density))) * Decimal(repr(float(thickness))) \
        * Decimal(repr(float(width))) * Decimal(repr(float(length))) * Decimal(10) ** 6
    count = int(n)  # truncates toward zero, inputs are positive
    if count > _INT64_MAX:
        raise OverflowError(f"spin count {n:.3e} exceeds the 64-bit count range")
    if count == 0:
        warnings.warn("density * volume < 1: no spins in the slab", RuntimeWarning, stacklevel=2)
    return count


def collective_coupling(g_m: float, N_s: float) -> float:
    if N_s < 1:
        raise ParameterError("N_s must be >= 1")
    return g_m * math.sqrt(N_s)


def dispersive_resonance(delta: float, g_c: float) -> float:
    """Spin detuning that matches the Stark-shifted transmon: delta + g_c^2/delta."""
    if delta == 0:
        raise ParameterError("dispersive resonance undefined at delta = 0")
    return delta + g_c**2 / delta


def thermal_occupation(omega: float, T: float, constants=CONSTANTS) -> float:
    if not (omega > 0 and T > 0):
        raise ParameterError("omega and T must be positive")
    x = constants.hbar * omega / (constants.boltzmann * T)
    # e^-x / (1 - e^-x) stays finite as T -> 0
    return math.exp(-x) / -math.expm1(-x)


def _ratio(num: float, den: float) -> float:
    if den > 0:
        return num / den
    return math.inf if num > 0 else 0.0


@dataclass
class RegimeReport:
    collective_coupling: float
    anharmonicity_scale: float
    hierarchy_valid: bool
    resonant_strong_coupling: bool
    two_level_valid: bool
    dispersive_strong_coupling: bool
    dispersive_applicable: bool
    margin_ratios: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def classify_regime(params: SystemParams, hierarchy_factor: float = HIERARCHY_FACTOR) -> RegimeReport:
    """Evaluate the coupling hierarchy and strong-coupling inequalities.

    Every flag is ``ratio > 1`` for the matching entry of ``margin_ratios``.
    The dispersive check uses the first ensemble's Delta and is reported as
    not applicable (ratio ``None``, flag False) when delta or Delta is zero.
    """
    G = params.collective(0)
    anh = G * (math.sqrt(2.0) - 1.0)
    decoherence = max(params.kappa_c, params.gamma_JJ, params.gamma_spin)
    ratios = {
        "hierarchy": _ratio(params.g_c, hierarchy_factor * G),
        "two_level": _ratio(anh, decoherence),
        "resonant_strong": _ratio(G, decoherence),
    }
    delta, Delta = params.delta, params.ensembles[0].Delta
    applicable = delta != 0 and Delta != 0
    if applicable:
        g_disp = params.g_c * G / abs(Delta)
        try:
            purcell = params.kappa_c * (params.g_c / delta) ** 2 if params.kappa_c else 0.0
        except OverflowError:
            purcell = math.inf
        loss = max(purcell, params.gamma_spin, params.gamma_JJ)
        ratios["dispersive_strong"] = _ratio(g_disp, loss)
    else:
        ratios["dispersive_strong"] = None
    return RegimeReport(
        collective_coupling=G,
        anharmonicity_scale=anh,
        hierarchy_valid=ratios["hierarchy"] > 1,
        resonant_strong_coupling=ratios["resonant_strong"] > 1,
        two_level_valid=ratios["two_level"] > 1,
        dispersive_strong_coupling=applicable and ratios["dispersive_strong"] > 1,
        dispersive_applicable=applicable,
        margin_ratios=ratios,
    )
