"""Detuning-only pulse schedules through the transmon bus and gate fidelity.

The computational subspace is k in {0, 1} for two ensembles (i, j) with
the transmon in |a> and the cavity empty; basis index is 2*k_i + k_j.
Single-qubit Z phases are free: fidelities are maximised over local phases
before and after the gate and the optimal phases are reported.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as la
from scipy.optimize import minimize

from .dynamics import lindblad_propagator
from .effective import build_effective, effective_basis
from .hamiltonian import build_collapse_ops, build_hamiltonian
from .hilbert import EnumeratedBasis, SpaceTruncation, enumerate_basis
from .params import SystemParams, dispersive_resonance

PARK_DETUNING = 50.0  # in units of g_c
MAX_DURATION = 1e7
MIN_DELTA_RATIO = 5.0
MAX_G_RATIO = 0.1
D = 4

TRANSMON = "transmon"

_s = (1 + 1j) / 2
TARGETS = {
    "identity": np.eye(4, dtype=complex),
    "sqrt_swap": np.array([[1, 0, 0, 0], [0, _s, _s.conjugate(), 0], [0, _s.conjugate(), _s, 0], [0, 0, 0, 1]]),
    "swap": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
    "iswap": np.array([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]]),
    "sqrt_iswap": np.array(
        [[1, 0, 0, 0], [0, 1 / math.sqrt(2), 1j / math.sqrt(2), 0], [0, 1j / math.sqrt(2), 1 / math.sqrt(2), 0], [0, 0, 0, 1]]
    ),
}


class RegimeError(ValueError):
    pass


@dataclass(frozen=True)
class PulseSegment:
    """Constant-detuning segment. ``overrides`` may set ``delta`` and ``Delta``
    (a mapping from ensemble index to detuning)."""

    duration: float
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("segment duration must be positive")
        unknown = set(self.overrides) - {"delta", "Delta"}
        if unknown:
            raise ValueError(f"only detunings may be overridden, got {sorted(unknown)}")

    def apply(self, params: SystemParams) -> SystemParams:
        Deltas = [e.Delta for e in params.ensembles]
        for j, v in self.overrides.get("Delta", {}).items():
            Deltas[int(j)] = float(v)
        return params.with_detunings(self.overrides.get("delta"), Deltas)

    def to_dict(self) -> dict:
        ov = dict(self.overrides)
        if "Delta" in ov:
            ov["Delta"] = {str(k): float(v) for k, v in sorted(ov["Delta"].items(), key=lambda kv: int(kv[0]))}
        return {"duration": float(self.duration), "overrides": ov}


def schedule_to_json(schedule) -> str:
    return json.dumps([s.to_dict() for s in schedule], indent=2)


def schedule_from_json(text: str) -> list[PulseSegment]:
    return [PulseSegment(float(d["duration"]), d.get("overrides", {})) for d in json.loads(text)]


def _check_dispersive(params: SystemParams, j: int):
    ratio = abs(params.delta) / params.g_c
    if ratio < MIN_DELTA_RATIO:
        raise RegimeError(f"|delta|/g_c = {ratio:.3g} < {MIN_DELTA_RATIO:g}: not dispersive")
    g_ratio = params.collective(j) / params.g_c
    if g_ratio > MAX_G_RATIO:
        raise RegimeError(f"G/g_c = {g_ratio:.3g} > {MAX_G_RATIO:g} for ensemble {j}")


def _parked(params: SystemParams, active: int, value: float) -> dict:
    Ds = {}
    for e in range(len(params.ensembles)):
        Ds[e] = value if e == active else PARK_DETUNING * params.g_c
    return {"Delta": Ds}


def _exchange(params: SystemParams, j: int, Delta: float) -> float:
    return params.g_c * params.collective(j) / Delta


def transfer_schedule(
    params: SystemParams, source, target, max_duration: float = MAX_DURATION, lamb_compensated: bool = False
) -> list[PulseSegment]:
    """Full excitation swap between one ensemble and the transmon.

    The ensemble is tuned to delta + g_c^2/delta; ``lamb_compensated``
    additionally subtracts its own cavity Lamb shift G^2/Delta.
    """
    if (source == TRANSMON) == (target == TRANSMON):
        raise ValueError("exactly one end of a transfer must be the transmon")
    j = int(target if source == TRANSMON else source)
    if not 0 <= j < len(params.ensembles):
        raise ValueError(f"no ensemble {j}")
    _check_dispersive(params, j)
    Delta = dispersive_resonance(params.delta, params.g_c)
    g = _exchange(params, j, Delta)
    if g == 0:
        raise RegimeError("exchange coupling is zero: transfer never completes")
    if lamb_compensated:
        Delta -= params.collective(j) ** 2 / Delta
    duration = math.pi / (2 * abs(g))
    if duration > max_duration:
        raise RegimeError(f"transfer duration {duration:.3g} exceeds limit {max_duration:.3g}")
    return [PulseSegment(duration, _parked(params, j, Delta))]


# --- calibration of the entangling segment --------------------------------

def _ideal_exchange_gate(x: float, tau: float) -> np.ndarray:
    """Qubit-oscillator exchange with coupling 1 and detuning 2x, restricted to {0,1}^2.

    Levels: |a0>, |b0>, |a1>, |b1>, |a2>; the oscillator is harmonic so |b1>
    couples to |a2> with sqrt(2).
    """
    d = 2 * x
    H = np.diag([0.0, d / 2, -d / 2, 0.0, -d]).astype(complex)
    H[1, 2] = H[2, 1] = 1.0
    H[3, 4] = H[4, 3] = math.sqrt(2.0)
    U = la.expm(-1j * H * tau)
    # reorder to index 2*k_transmon + k_osc: |a0>=0, |a1>=1, |b0>=2, |b1>=3
    idx = [0, 2, 1, 3]
    return U[np.ix_(idx, idx)]


# seeds located by a coarse (x, tau) scan of the ideal exchange model
_EXCHANGE_SEEDS = {"sqrt_swap": (-0.825, 5.75), "swap": (0.0, 11.0)}

# converged optima of the search below; the swap optimum sits at x = 0 by symmetry
EXCHANGE_POINTS = {"sqrt_swap": (-0.8162334862062594, 5.76917912295829), "swap": (0.0, 11.057582784701339)}


def ideal_exchange_point(target: str = "sqrt_swap", recalibrate: bool = False) -> tuple[float, float]:
    """(x, tau) for which the detuned qubit-oscillator exchange best matches ``target``.

    A resonant half-swap leaks |1,1> into the oscillator's second level. With
    detuning 2x and duration tau the doubly excited state can complete a full
    cycle while the single-excitation states split (sqrt_swap) or swap fully,
    and the same choice sets the conditional phase. The tabulated optimum is
    returned unless ``recalibrate`` reruns the search (about 15 s).
    """
    if target not in _EXCHANGE_SEEDS:
        raise ValueError(f"no exchange calibration for {target!r}")
    if not recalibrate:
        return EXCHANGE_POINTS[target]
    return _search_exchange_point(target)


@functools.lru_cache(maxsize=None)
def _search_exchange_point(target: str) -> tuple[float, float]:
    U_t = TARGETS[target]

    def cost(p):
        return 1 - _best_phases(_unitary_channel(_ideal_exchange_gate(*p)), U_t)[0]

    res = minimize(cost, np.array(_EXCHANGE_SEEDS[target]), method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    return float(res.x[0]), float(res.x[1])


def exchange_schedule(
    params: SystemParams,
    i: int,
    j: int,
    target: str = "sqrt_swap",
    calibrated: bool = True,
    max_duration: float = MAX_DURATION,
) -> list[PulseSegment]:
    """transfer(i -> transmon), exchange(transmon, j), transfer(transmon -> i).

    With ``calibrated`` the middle segment uses :func:`ideal_exchange_point`
    for ``target`` and compensates ensemble j's Lamb shift in its detuning.
    Otherwise it is the plain resonant exchange: pi/(4 g_eff) for sqrt_swap,
    pi/(2 g_eff) for swap.
    """
    if len(params.ensembles) < 2:
        raise ValueError("a two-ensemble gate needs two ensembles")
    if i == j:
        raise ValueError("ensembles must differ")
    _check_dispersive(params, i)
    _check_dispersive(params, j)
    Delta_res = dispersive_resonance(params.delta, params.g_c)
    g = abs(_exchange(params, j, Delta_res))
    if g == 0:
        raise RegimeError("exchange coupling of ensemble j is zero")
    if calibrated:
        x, tau = ideal_exchange_point(target)
        Gj = params.collective(j)
        Delta_j = Delta_res + 2 * x * g - Gj**2 / Delta_res
        middle = PulseSegment(tau / g, _parked(params, j, Delta_j))
    else:
        quarter = {"sqrt_swap": 4, "swap": 2}[target]
        middle = PulseSegment(math.pi / (quarter * g), _parked(params, j, Delta_res))
    if middle.duration > max_duration:
        raise RegimeError(f"exchange duration {middle.duration:.3g} exceeds limit")
    return (
        transfer_schedule(params, i, TRANSMON, max_duration)
        + [middle]
        + transfer_schedule(params, TRANSMON, i, max_duration)
    )


def sqrt_swap_schedule(params: SystemParams, i: int, j: int, calibrated: bool = True, max_duration: float = MAX_DURATION):
    return exchange_schedule(params, i, j, "sqrt_swap", calibrated, max_duration)


# --- fidelity --------------------------------------------------------------

def _unitary_channel(V: np.ndarray) -> np.ndarray:
    """E[i, j] = V |i><j| V^dag restricted to the computational subspace."""
    return np.einsum("ai,bj->ijab", V, V.conj())


def _phase_vec(a, b):
    return np.exp(1j * np.array([0.0, b, a, a + b]))


def _fidelity_parts(E, target, p):
    """Process fidelity with phases p = (a, b, c, e): post diag(a,b), pre diag(c,e)."""
    lam = _phase_vec(p[0], p[1])
    r = _phase_vec(p[2], p[3])
    W = target.conj().T * lam[None, :]  # U^dag Lambda
    # T_ij = (W E_ij W^dag)[i, j]
    Tij = np.einsum("ia,ijab,jb->ij", W, E, W.conj())
    return np.real(np.sum(np.outer(r, r.conj()) * Tij)) / D**2


def _best_phases(E, target, starts=None):
    kept = np.real(np.einsum("iiaa->i", E))
    leak = 1.0 - kept.mean()

    def neg(p):
        return -_fidelity_parts(E, target, p)

    if starts is None:
        starts = [np.array(s, dtype=float) for s in
                  [(0, 0, 0, 0), (1.5, 1.5, 0, 0), (0, 0, 1.5, -1.5), (3, -1.5, 1.5, 3), (-1.5, 3, -3, 1.5)]]
    best = None
    for s in starts:
        res = minimize(neg, s, method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-15, "maxiter": 4000})
        if best is None or res.fun < best.fun:
            best = res
    f_pro = -best.fun
    f_avg = ((1.0 - leak) + D * f_pro) / (D + 1)
    return f_avg, np.mod(best.x, 2 * np.pi), leak, f_pro


def _pauli_states():
    one = [np.array([1, 0]), np.array([0, 1]), np.array([1, 1]) / math.sqrt(2),
           np.array([1, -1]) / math.sqrt(2), np.array([1, 1j]) / math.sqrt(2), np.array([1, -1j]) / math.sqrt(2)]
    return [np.kron(a, b).astype(complex) for a in one for b in one]


@dataclass
class GateReport:
    target: str
    realized_unitary: np.ndarray  # raw restriction (unitary runs) or None
    average_fidelity: float
    worst_case_state_fidelity: float
    leakage: float
    process_fidelity: float
    local_phases: tuple  # post (a, b), pre (c, e)
    model: str
    dissipative: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        U = self.realized_unitary
        d["realized_unitary"] = None if U is None else {"re": U.real.tolist(), "im": U.imag.tolist()}
        d["local_phases"] = [float(x) for x in self.local_phases]
        return d


def _gate_basis(params: SystemParams, model: str) -> EnumeratedBasis:
    if model == "full":
        return enumerate_basis(SpaceTruncation(2, 2, 2), params.ensembles)
    if model == "effective":
        b = effective_basis(params.ensembles, k_max=2)
        return EnumeratedBasis([s for s in b.states if s.excitations <= 2], b.n_ensembles)
    raise ValueError(f"unknown model {model!r}")


def _segment_hamiltonian(p: SystemParams, basis: EnumeratedBasis, model: str, stark: bool):
    if model == "full":
        return build_hamiltonian(p, basis)
    return build_effective(p, stark=stark, basis=basis)[1]


def evaluate_gate(
    schedule,
    params: SystemParams,
    target: str = "sqrt_swap",
    ensembles=(0, 1),
    model: str = "full",
    dissipative: bool = False,
    stark: bool = True,
) -> GateReport:
    """Propagate the computational subspace through ``schedule`` and score it."""
    if target not in TARGETS:
        raise ValueError(f"unknown target {target!r}; choose from {sorted(TARGETS)}")
    i, j = ensembles
    if max(i, j) >= len(params.ensembles) or i == j:
        raise ValueError("two distinct configured ensembles are required")
    U_t = TARGETS[target]
    basis = _gate_basis(params, model)
    nens = len(params.ensembles)
    comp = []
    for ki in (0, 1):
        for kj in (0, 1):
            k = [0] * nens
            k[i], k[j] = ki, kj
            comp.append(basis.find(0, 0, k))
    comp = np.array(comp)
    n = basis.dim

    if not dissipative:
        U = np.eye(n, dtype=complex)
        for seg in schedule:
            H = _segment_hamiltonian(seg.apply(params), basis, model, stark)
            Useg = np.zeros((n, n), dtype=complex)
            for idx in basis.blocks.values():
                idx = np.asarray(idx)
                e, v = np.linalg.eigh(H.block(idx))
                Useg[np.ix_(idx, idx)] = (v * np.exp(-1j * e * seg.duration)) @ v.conj().T
            U = Useg @ U
        V = U[np.ix_(comp, comp)]
        E = _unitary_channel(V)
    else:
        if model != "full":
            raise ValueError("dissipative evaluation uses the full model")
        S = np.eye(n * n, dtype=complex)
        for seg in schedule:
            S = lindblad_propagator(build_collapse_ops(seg.apply(params), basis), seg.duration) @ S
        V = None
        E = np.empty((D, D, D, D), dtype=complex)
        for a in range(D):
            for b in range(D):
                rho = np.zeros((n, n), dtype=complex)
                rho[comp[a], comp[b]] = 1.0
                out = (S @ rho.reshape(-1)).reshape(n, n)
                E[a, b] = out[np.ix_(comp, comp)]

    f_avg, phases, leak, f_pro = _best_phases(E, U_t)
    lam, r = _phase_vec(*phases[:2]), _phase_vec(*phases[2:])
    worst = 1.0
    for psi in _pauli_states():
        psi_in = r * psi
        rho_out = np.einsum("i,ijab,j->ab", psi_in, E, psi_in.conj())
        rho_out = lam[:, None] * rho_out * lam.conj()[None, :]
        ideal = U_t @ psi
        worst = min(worst, float(np.real(ideal.conj() @ rho_out @ ideal)))
    return GateReport(
        target=target,
        realized_unitary=V,
        average_fidelity=float(f_avg),
        worst_case_state_fidelity=worst,
        leakage=float(max(leak, 0.0)),
        process_fidelity=float(f_pro),
        local_phases=tuple(float(x) for x in phases),
        model=model,
        dissipative=dissipative,
    )
