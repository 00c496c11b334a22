"""Cavity-eliminated exchange model for the dispersive bus and its validation.

With the transmon and spins far detuned from the cavity, second-order
elimination of the photon leaves an exchange term between |b, k> and
|a, k+1> of strength g_c * g_m * <k+1|S+|k> / Delta, plus Stark/Lamb
shifts of the same order (optional, on by default).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import curve_fit

from .hamiltonian import SparseOperator, build_hamiltonian
from .hilbert import BasisState, EnumeratedBasis, SpaceTruncation, collective_raising_element, enumerate_basis
from .params import SystemParams
from .dynamics import basis_vector, evolve_unitary


@dataclass
class EffectiveModel:
    g_eff: float  # collective exchange coupling of ensemble 0
    g_eff_per_spin: float
    couplings: tuple  # collective exchange per ensemble
    transmon_shift: float
    spin_shifts: tuple  # single-excitation Lamb shift per ensemble
    stark: bool
    validity_ratios: dict

    def to_dict(self) -> dict:
        return asdict(self)


def effective_basis(ensembles, k_max: int = 3) -> EnumeratedBasis:
    """Transmon x spin-wave states with the photon in vacuum."""
    full = enumerate_basis(SpaceTruncation(1, k_max, None), ensembles)
    return EnumeratedBasis([s for s in full.states if s.photons == 0], full.n_ensembles)


def exchange_coupling(params: SystemParams, j: int = 0) -> float:
    Delta = params.ensembles[j].Delta
    if Delta == 0:
        raise ValueError("exchange coupling undefined at Delta = 0")
    return params.g_c * params.collective(j) / Delta


def build_effective(params: SystemParams, k_max: int = 3, stark: bool = True, basis=None):
    """Effective model record and its Hamiltonian on the photon-vacuum subspace."""
    if params.delta == 0 or any(e.Delta == 0 for e in params.ensembles):
        raise ValueError("effective model needs non-zero delta and Delta")
    basis = basis or effective_basis(params.ensembles, k_max)
    nens = len(params.ensembles)
    model = params.spin_model
    g = [params.coupling(j) for j in range(nens)]
    Ds = [e.Delta for e in params.ensembles]
    Ns = [e.N_s for e in params.ensembles]

    diag = np.empty(basis.dim)
    r, c, v = [], [], []
    for i, s in enumerate(basis.states):
        e = -params.delta * s.transmon - sum(D * k for D, k in zip(Ds, s.k))
        if stark:
            e -= s.transmon * params.g_c**2 / params.delta
            for j in range(nens):
                if s.k[j]:
                    e -= g[j] ** 2 * collective_raising_element(Ns[j], s.k[j] - 1, model) ** 2 / Ds[j]
        diag[i] = e
        for j in range(nens):
            amp = collective_raising_element(Ns[j], s.k[j], model)
            if amp == 0 or g[j] == 0:
                continue
            k = list(s.k)
            k[j] += 1
            # |b, k> -> |a, k + e_j>
            if s.transmon == 1:
                t = basis.find(0, 0, k)
                if t is not None:
                    r.append(t)
                    c.append(i)
                    v.append(params.g_c * g[j] * amp / Ds[j])
            # cavity-mediated ensemble-ensemble exchange, same order as the Lamb shifts
            if stark:
                for m in range(nens):
                    if m == j or s.k[m] == 0:
                        continue
                    kk = list(k)
                    kk[m] -= 1
                    t = basis.find(s.transmon, 0, kk)
                    if t is not None:
                        low = collective_raising_element(Ns[m], s.k[m] - 1, model)
                        v_jm = -g[j] * g[m] * amp * low * 0.5 * (1 / Ds[j] + 1 / Ds[m])
                        if m > j:
                            r.append(t)
                            c.append(i)
                            v.append(v_jm)
    n = basis.dim
    low = sp.coo_matrix((v, (r, c)), shape=(n, n), dtype=complex).tocsr()
    H = sp.diags(diag).astype(complex) + low + low.conj().T
    op = SparseOperator(H.tocsr(), hermitian=True, basis=basis)

    couplings = tuple(params.g_c * params.collective(j) / Ds[j] for j in range(nens))
    G0 = params.collective(0)
    D0 = Ds[0]
    info = EffectiveModel(
        g_eff=couplings[0],
        g_eff_per_spin=params.g_c * g[0] / D0,
        couplings=couplings,
        transmon_shift=-params.g_c**2 / params.delta if stark else 0.0,
        spin_shifts=tuple(-(params.collective(j) ** 2) / Ds[j] if stark else 0.0 for j in range(nens)),
        stark=stark,
        validity_ratios={
            "G_over_g_c": G0 / params.g_c,
            "detuning_mismatch": abs(params.delta - D0) / abs(D0),
            "g_c_over_delta": params.g_c / abs(params.delta),
        },
    )
    return info, op


def extract_frequency(series, t_grid, pad: int = 16, refine: bool = True) -> float:
    """Angular frequency of the dominant oscillation.

    Hann-windowed, zero-padded FFT with a parabolic fit to the log-magnitude
    around the peak; optionally refined by a least-squares sinusoid fit.
    """
    y = np.asarray(series, dtype=float)
    t = np.asarray(t_grid, dtype=float)
    dt = t[1] - t[0]
    y0 = y - y.mean()
    w = np.hanning(y0.size)
    nfft = 1 << int(math.ceil(math.log2(y0.size * pad)))
    spec = np.abs(np.fft.rfft(y0 * w, nfft))
    spec[0] = 0.0
    k = int(np.argmax(spec))
    if 0 < k < spec.size - 1:
        a, b, c = np.log(spec[k - 1 : k + 2] + 1e-300)
        denom = a - 2 * b + c
        shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
    else:
        shift = 0.0
    omega = 2 * math.pi * (k + shift) / (nfft * dt)
    if not refine:
        return omega

    def model(tt, amp, om, ph, off):
        return amp * np.cos(om * tt + ph) + off

    amp0 = 0.5 * np.ptp(y)
    # phase seed from the projection at the estimated frequency
    z = np.sum(y0 * np.exp(-1j * omega * t))
    try:
        popt, _ = curve_fit(model, t, y, p0=(amp0, omega, float(np.angle(z)), y.mean()), maxfev=20000)
        return float(abs(popt[1]))
    except RuntimeError:
        return omega


@dataclass
class DeviationReport:
    freq_full: float | None
    freq_eff: float | None
    freq_exchange: float
    rel_error: float | None
    rel_error_vs_effective: float | None
    max_population_deviation: float
    max_photon_pop: float
    sw_breakdown: bool
    validity_ratios: dict

    def to_dict(self) -> dict:
        return asdict(self)


def validate_effective(params: SystemParams, t_end: float | None = None, periods: float = 40.0, stark: bool = True) -> DeviationReport:
    """Full versus effective dynamics from |E, a, 0> for ensemble 0.

    Reports the exchange frequency measured on the full-model transmon
    population against 2 g_c G / Delta and against the effective model.
    """
    info, Heff = build_effective(params, k_max=1, stark=stark)
    nens = len(params.ensembles)
    kE = (1,) + (0,) * (nens - 1)
    full_basis = enumerate_basis(SpaceTruncation(1, 1, 1), params.ensembles)
    H = build_hamiltonian(params, full_basis)
    ref = 2 * abs(info.g_eff)
    if t_end is None:
        t_end = periods * 2 * math.pi / ref if ref > 0 else 100.0 / params.g_c
    fastest = max(abs(params.delta), max(abs(e.Delta) for e in params.ensembles), params.g_c)
    n = max(4096, int(math.ceil(4 * t_end * fastest / math.pi)))
    t = np.linspace(0.0, t_end, n)

    full = evolve_unitary(H, basis_vector(full_basis, 0, 0, kE), t)
    eff = evolve_unitary(Heff, basis_vector(Heff.basis, 0, 0, kE), t)

    def pops(traj, basis):
        p = traj.populations()
        spin = p[:, basis.find(0, 0, kE)]
        tr = p @ np.array([s.transmon for s in basis.states], dtype=float)
        photon = p @ np.array([s.photons for s in basis.states], dtype=float)
        return spin, tr, photon

    s_f, b_f, ph_f = pops(full, full_basis)
    s_e, b_e, _ = pops(eff, Heff.basis)
    dev = float(max(np.abs(s_f - s_e).max(), np.abs(b_f - b_e).max()))
    max_photon = float(ph_f.max())
    breakdown = max_photon > 5 * (params.g_c / params.delta) ** 2

    if ref > 0 and np.ptp(b_f) > 1e-6:
        f_full = extract_frequency(b_f, t)
        f_eff = extract_frequency(b_e, t)
        rel = abs(f_full - ref) / ref
        rel_eff = abs(f_full - f_eff) / f_eff
    else:
        f_full = f_eff = rel = rel_eff = None
    return DeviationReport(
        freq_full=f_full,
        freq_eff=f_eff,
        freq_exchange=ref,
        rel_error=rel,
        rel_error_vs_effective=rel_eff,
        max_population_deviation=dev,
        max_photon_pop=max_photon,
        sw_breakdown=breakdown,
        validity_ratios=info.validity_ratios,
    )
