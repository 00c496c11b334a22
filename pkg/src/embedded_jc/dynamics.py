"""Time evolution, observables, decay fits and cavity-assisted spin cooling.

Pure states are propagated with the exact per-block eigendecomposition of
the (block-diagonal) Hamiltonian, or with ``expm_multiply`` when no basis is
attached. Density matrices are integrated on the vectorised Liouvillian
with an adaptive explicit Runge-Kutta method (DOP853), or with a dense
one-step propagator for small systems.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.optimize import curve_fit
from scipy.sparse.linalg import expm_multiply

from .hamiltonian import (
    InteractionPictureGenerator,
    LindbladModel,
    SparseOperator,
    bare_energies,
    build_collapse_ops,
    build_hamiltonian,
)
from .hilbert import EnumeratedBasis, SpaceTruncation, enumerate_basis
from .params import SystemParams

log = logging.getLogger(__name__)

NORM_TOL = 1e-9
TRACE_TOL = 1e-8
HERMITIAN_TOL = 1e-10
POSITIVITY_TOL = 1e-8
RTOL_UNITARY = 1e-10
RTOL_LINDBLAD = 1e-10  # 1e-8 leaves ~4e-8 errors, past the positivity contract


class IntegrationError(RuntimeError):
    pass


class ContractError(IntegrationError):
    """A state left the norm/trace/positivity envelope."""


class FitError(RuntimeError):
    def __init__(self, msg, history=()):
        super().__init__(msg)
        self.history = list(history)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (nt, dim) kets or (nt, dim, dim) density matrices
    observables: dict = field(default_factory=dict)
    basis: EnumeratedBasis | None = field(default=None, repr=False)

    @property
    def is_pure(self) -> bool:
        return self.states.ndim == 2

    def populations(self) -> np.ndarray:
        if self.is_pure:
            return np.abs(self.states) ** 2
        return np.real(np.einsum("tii->ti", self.states))

    def population(self, index: int) -> np.ndarray:
        return self.populations()[:, index]

    def expectation(self, op) -> np.ndarray:
        m = op.matrix if isinstance(op, SparseOperator) else sp.csr_matrix(op)
        if self.is_pure:
            return np.real(np.einsum("ti,ti->t", self.states.conj(), (m @ self.states.T).T))
        return np.real(np.array([(m @ r).trace() for r in self.states]))


def check_trajectory(traj: Trajectory):
    """Enforce the norm (kets) or trace/Hermiticity/positivity (densities) contract."""
    if traj.is_pure:
        drift = np.abs(np.linalg.norm(traj.states, axis=1) - 1.0)
        if drift.max(initial=0.0) > NORM_TOL:
            raise ContractError(f"norm drift {drift.max():.3e} exceeds {NORM_TOL:g}")
        return
    for t, r in zip(traj.times, traj.states):
        tr = np.trace(r).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ContractError(f"trace {tr!r} at t={t}")
        herm = np.abs(r - r.conj().T).max()
        if herm > HERMITIAN_TOL:
            raise ContractError(f"hermiticity error {herm:.3e} at t={t}")
        lam = np.linalg.eigvalsh((r + r.conj().T) / 2)[0]
        if lam < -POSITIVITY_TOL:
            raise ContractError(
                f"negative eigenvalue {lam:.3e} at t={t}; reduce the step size or tighten rtol"
            )


def _grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("time grid must be a non-empty 1-d array")
    if np.any(np.diff(t) < 0):
        raise ValueError("time grid must be ascending")
    return t


def basis_vector(basis: EnumeratedBasis, transmon: int, photons: int, k) -> np.ndarray:
    i = basis.find(transmon, photons, k)
    if i is None:
        raise KeyError(f"state ({transmon},{photons},{tuple(k)}) not in basis")
    v = np.zeros(basis.dim, dtype=complex)
    v[i] = 1.0
    return v


def evolve_unitary(H: SparseOperator, psi0, t_grid, method: str = "eig", check: bool = True) -> Trajectory:
    """psi(t) = exp(-iHt) psi0 on every grid point (grid times measured from 0)."""
    t = _grid(t_grid)
    psi0 = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi0) - 1.0) > NORM_TOL:
        raise ValueError("initial state must be normalised")
    if method == "eig":
        blocks = H.basis.blocks.values() if H.basis is not None else [range(H.dim)]
        out = np.zeros((t.size, H.dim), dtype=complex)
        for idx in blocks:
            idx = np.asarray(idx)
            c = psi0[idx]
            if not np.any(c):
                continue
            e, v = np.linalg.eigh(H.block(idx))
            coef = v.conj().T @ c
            out[:, idx] = (np.exp(-1j * np.outer(t, e)) * coef) @ v.T
    elif method == "krylov":
        A = -1j * H.matrix.tocsc()
        if t.size > 1 and np.allclose(np.diff(t), t[1] - t[0]):
            out = expm_multiply(A, psi0, start=t[0], stop=t[-1], num=t.size, endpoint=True)
        else:
            out = np.array([expm_multiply(A * s, psi0) for s in t])
    else:
        raise ValueError(f"unknown method {method!r}")
    traj = Trajectory(t, out, basis=H.basis)
    if check:
        check_trajectory(traj)
    return traj


def liouvillian(model: LindbladModel) -> sp.csr_matrix:
    """Row-major vectorisation: vec(A rho B) = (A kron B^T) vec(rho)."""
    n = model.dim
    eye = sp.identity(n, dtype=complex, format="csr")
    H = model.hamiltonian.matrix
    L = -1j * (sp.kron(H, eye) - sp.kron(eye, H.T))
    for op, rate in model.collapse_ops:
        if rate == 0:
            continue
        c = op.matrix
        cdc = (c.conj().T @ c).tocsr()
        L = L + rate * (sp.kron(c, c.conj()) - 0.5 * sp.kron(cdc, eye) - 0.5 * sp.kron(eye, cdc.T))
    return L.tocsr()


def _as_density(rho0, n):
    r = np.asarray(rho0, dtype=complex)
    if r.ndim == 1:
        r = np.outer(r, r.conj())
    if r.shape != (n, n):
        raise ValueError("initial state has the wrong dimension")
    return r


def evolve_lindblad(
    model: LindbladModel,
    rho0,
    t_grid,
    method: str = "ode",
    rtol: float = RTOL_LINDBLAD,
    atol: float | None = None,
    max_step: float = np.inf,
    check: bool = True,
) -> Trajectory:
    """Integrate the master equation from ``t_grid[0]``.

    ``method="ode"`` uses DOP853 on the sparse Liouvillian; ``"expm"`` uses
    dense propagators between grid points and is only meant for small
    systems (dim^2 of a few thousand).
    """
    t = _grid(t_grid)
    n = model.dim
    rho = _as_density(rho0, n)
    if check and abs(np.trace(rho) - 1) > TRACE_TOL:
        raise ValueError("initial density matrix must have unit trace")
    L = liouvillian(model)
    y0 = rho.reshape(-1)
    if method == "ode":
        if t.size == 1 or t[-1] == t[0]:
            ys = np.repeat(y0[None, :], t.size, axis=0)
        else:
            sol = solve_ivp(
                lambda _, y: L @ y,
                (t[0], t[-1]),
                y0,
                method="DOP853",
                t_eval=t,
                rtol=rtol,
                atol=atol if atol is not None else rtol * 1e-2,
                max_step=max_step,
            )
            if not sol.success:
                raise IntegrationError(f"Lindblad integration failed: {sol.message}")
            ys = sol.y.T
    elif method == "expm":
        Ld = L.toarray()
        ys = np.empty((t.size, y0.size), dtype=complex)
        ys[0] = y0
        cache = {}
        for i in range(1, t.size):
            dt = t[i] - t[i - 1]
            key = round(dt, 14)
            if key not in cache:
                cache[key] = la.expm(Ld * dt)
            ys[i] = cache[key] @ ys[i - 1]
    else:
        raise ValueError(f"unknown method {method!r}")
    traj = Trajectory(t, ys.reshape(t.size, n, n), basis=model.hamiltonian.basis)
    if check:
        check_trajectory(traj)
    return traj


def lindblad_propagator(model: LindbladModel, duration: float) -> np.ndarray:
    """Dense superoperator exp(L * duration) acting on row-major vec(rho)."""
    return la.expm(liouvillian(model).toarray() * duration)


def standard_observables(traj: Trajectory) -> dict:
    """Transmon, photon and per-ensemble excitation expectations."""
    basis = traj.basis
    pops = traj.populations()
    obs = {
        "transmon_excited": pops @ np.array([s.transmon for s in basis.states], dtype=float),
        "photon_number": pops @ np.array([s.photons for s in basis.states], dtype=float),
    }
    for j in range(basis.n_ensembles):
        obs[f"spin_excitation_{j}"] = pops @ np.array([s.k[j] for s in basis.states], dtype=float)
    obs["total_excitation"] = pops @ np.array([s.excitations for s in basis.states], dtype=float)
    return obs


def frame_equivalence(
    params: SystemParams,
    psi0=None,
    t_end: float = 50.0,
    n_points: int = 201,
    basis: EnumeratedBasis | None = None,
    rtol: float = RTOL_UNITARY,
) -> float:
    """Max population difference between interaction-picture and rotating-frame evolution.

    The interaction-picture run integrates the explicitly time-dependent
    generator with DOP853; the rotating-frame run uses the exact propagator.
    The frames differ by exp(iH0 t), which is diagonal, so bare-state
    populations must agree; the amplitudes are also compared after the map.
    """
    if basis is None:
        basis = enumerate_basis(SpaceTruncation(2, 2, 2), params.ensembles)
    if psi0 is None:
        psi0 = basis_vector(basis, 0, 1, (0,) * basis.n_ensembles)
    psi0 = np.asarray(psi0, dtype=complex)
    if t_end == 0:
        return 0.0
    t = np.linspace(0.0, t_end, n_points)
    rot = evolve_unitary(build_hamiltonian(params, basis), psi0, t)
    gen = InteractionPictureGenerator(params, basis)
    sol = solve_ivp(
        lambda s, y: -1j * gen.apply(s, y),
        (0.0, t_end),
        psi0,
        method="DOP853",
        t_eval=t,
        rtol=rtol,
        atol=rtol * 1e-2,
    )
    if not sol.success:
        raise IntegrationError(f"interaction-picture integration failed: {sol.message}")
    inter = sol.y.T
    E0 = bare_energies(params, basis)
    mapped = np.exp(1j * np.outer(t, E0)) * rot.states
    pop_dev = np.abs(np.abs(inter) ** 2 - rot.populations()).max()
    amp_dev = np.abs(inter - mapped).max()
    log.debug("frame equivalence: population %.3e amplitude %.3e", pop_dev, amp_dev)
    return float(max(pop_dev, amp_dev))


@dataclass
class FitResult:
    rate: float
    amplitude: float
    offset: float
    rms_residual: float


def fit_decay(series, t_grid) -> FitResult:
    """Least-squares fit of A exp(-rate t) + C with rate >= 0."""
    y = np.asarray(series, dtype=float)
    t = np.asarray(t_grid, dtype=float)
    if y.size < 10 or y.size != t.size:
        raise ValueError("need at least 10 matching points")
    if np.any(y < 0):
        raise ValueError("decay series must be non-negative")
    span = np.ptp(y)
    if span <= 1e-14 * max(1.0, abs(y).max()):
        return FitResult(0.0, 0.0, float(y.mean()), float(np.sqrt(np.mean((y - y.mean()) ** 2))))
    # initial guess from the 1/e crossing of the excess over the final value
    c0 = y[-1]
    excess = y - c0
    a0 = excess[0] if excess[0] != 0 else span
    below = np.flatnonzero(excess <= a0 / np.e)
    tau = (t[below[0]] - t[0]) if below.size and t[below[0]] > t[0] else (t[-1] - t[0])
    p0 = (a0, 1.0 / max(tau, 1e-300), c0)
    history = []

    def model(tt, a, r, c):
        return a * np.exp(-r * (tt - t[0])) + c

    for attempt, guess in enumerate((p0, (a0, 0.1 * p0[1], c0), (a0, 10 * p0[1], c0))):
        try:
            popt, _ = curve_fit(
                model, t, y, p0=guess,
                bounds=([-np.inf, 0.0, -np.inf], [np.inf, np.inf, np.inf]),
                xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=20000,
            )
        except (RuntimeError, ValueError) as exc:
            history.append((attempt, guess, str(exc)))
            continue
        resid = float(np.sqrt(np.mean((model(t, *popt) - y) ** 2)))
        history.append((attempt, guess, resid))
        if np.all(np.isfinite(popt)):
            a, r, c = popt
            return FitResult(float(r), float(a), float(c), resid)
    raise FitError("exponential fit did not converge", history)


@dataclass
class CoolingResult:
    trajectory: Trajectory
    fit: FitResult
    purcell_estimate: float
    overdamped: bool


def cooling_simulation(params: SystemParams, initial_k: int = 1, t_grid=None, ensemble: int = 0) -> CoolingResult:
    """Collective spin excitation leaking out through the lossy cavity.

    The spins are resonant with the bare cavity and the transmon is taken
    as parked far off resonance (its cavity coupling is dropped). The fitted
    decay of <k> is compared with the adiabatic-elimination rate 4 G^2 / kappa.
    """
    if params.kappa_c <= 0:
        raise ValueError("cooling needs kappa_c > 0")
    G = params.collective(ensemble)
    overdamped = params.kappa_c >= 2 * G
    if not overdamped:
        warnings.warn("kappa_c < 2G: cavity not overdamped, Purcell estimate unreliable", RuntimeWarning, stacklevel=2)
    purcell = 4 * G**2 / params.kappa_c
    if t_grid is None:
        t_end = 4.0 / purcell if purcell > 0 else 10.0 / params.kappa_c
        t_grid = np.linspace(0.0, t_end, 400)
    nens = len(params.ensembles)
    trunc = SpaceTruncation(n_max=max(1, initial_k), k_max=max(1, initial_k), total_excitation_max=max(1, initial_k))
    basis = enumerate_basis(trunc, params.ensembles)
    model = build_collapse_ops(params, basis, couple_transmon=False)
    k = [0] * nens
    k[ensemble] = initial_k
    psi0 = basis_vector(basis, 0, 0, k)
    traj = evolve_lindblad(model, psi0, t_grid)
    traj.observables = standard_observables(traj)
    fit = fit_decay(traj.observables[f"spin_excitation_{ensemble}"], traj.times)
    return CoolingResult(traj, fit, purcell, overdamped)
