"""Sparse Hamiltonians and collapse operators on an enumerated basis.

Rotating frame at the cavity frequency, hbar = 1. Both the transmon and the
spins are red detuned, so their bare energies are ``-delta`` and ``-Delta_j``
per excitation. All couplings are in rotating-wave (excitation conserving)
form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .hilbert import EnumeratedBasis, collective_raising_element
from .params import SystemParams

HERMITIAN_TOL = 1e-12


class HermiticityError(RuntimeError):
    pass


@dataclass(frozen=True)
class SparseOperator:
    matrix: sp.csr_matrix
    hermitian: bool = False
    basis: EnumeratedBasis | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=complex)
        if m.shape[0] != m.shape[1]:
            raise ValueError("operator must be square")
        if self.basis is not None and m.shape[0] != self.basis.dim:
            raise ValueError("operator dimension does not match its basis")
        object.__setattr__(self, "matrix", m)
        if self.hermitian:
            err = hermiticity_error(m)
            if err > HERMITIAN_TOL * max(1.0, abs(m).max() if m.nnz else 0.0):
                raise HermiticityError(f"operator flagged Hermitian but |A - A^H| = {err:.3e}")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def norm_max(self) -> float:
        return float(abs(self.matrix).max()) if self.matrix.nnz else 0.0

    def block(self, indices) -> np.ndarray:
        idx = np.asarray(indices)
        return self.matrix[idx][:, idx].toarray()

    def dump(self) -> str:
        """Coordinate-list text: header ``dim nnz hermitian``, then ``row col re im``."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        lines = [f"{self.dim} {coo.nnz} {int(self.hermitian)}"]
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            lines.append(f"{r} {c} {v.real:.17g} {v.imag:.17g}")
        return "\n".join(lines) + "\n"

    @classmethod
    def load(cls, text: str) -> SparseOperator:
        rows = text.strip().splitlines()
        dim, nnz, herm = (int(x) for x in rows[0].split())
        r, c, v = [], [], []
        for line in rows[1 : 1 + nnz]:
            a, b, re, im = line.split()
            r.append(int(a))
            c.append(int(b))
            v.append(float(re) + 1j * float(im))
        m = sp.coo_matrix((v, (r, c)), shape=(dim, dim)).tocsr()
        return cls(m, hermitian=bool(herm))


def hermiticity_error(m) -> float:
    d = (m - m.conj().T).tocoo()
    return float(abs(d.data).max()) if d.nnz else 0.0


@dataclass(frozen=True)
class LindbladModel:
    hamiltonian: SparseOperator
    collapse_ops: tuple = ()  # (SparseOperator, rate) pairs

    def __post_init__(self):
        object.__setattr__(self, "collapse_ops", tuple(self.collapse_ops))
        for op, rate in self.collapse_ops:
            if rate < 0:
                raise ValueError("collapse rates must be non-negative")
            if op.dim != self.hamiltonian.dim:
                raise ValueError("collapse operator dimension mismatch")

    @property
    def dim(self) -> int:
        return self.hamiltonian.dim


def _check_ensembles(params: SystemParams, basis: EnumeratedBasis):
    if len(params.ensembles) != basis.n_ensembles:
        raise ValueError(
            f"params describe {len(params.ensembles)} ensembles, basis has {basis.n_ensembles}"
        )


def bare_energies(params: SystemParams, basis: EnumeratedBasis) -> np.ndarray:
    """Diagonal of the rotating-frame Hamiltonian."""
    _check_ensembles(params, basis)
    Deltas = np.array([e.Delta for e in params.ensembles])
    return np.array(
        [-params.delta * s.transmon - float(np.dot(Deltas, s.k)) for s in basis.states]
    )


def _coupling_triplets(params, basis, couple_transmon=True):
    """Upper-triangle-free list of (row, col, value) for the lowering-photon terms.

    Each entry is <row| V |col> with ``col`` holding one more photon; the
    Hermitian conjugate is added by the caller.
    """
    rows, cols, vals = [], [], []
    for i, s in enumerate(basis.states):
        if s.photons == 0:
            continue
        sq = math.sqrt(s.photons)
        if couple_transmon and s.transmon == 0:
            j = basis.find(1, s.photons - 1, s.k)
            if j is not None:
                rows.append(j)
                cols.append(i)
                vals.append(params.g_c * sq)
        for e, ens in enumerate(params.ensembles):
            g = params.coupling(e)
            if g == 0:
                continue
            k = list(s.k)
            amp = collective_raising_element(ens.N_s, k[e], params.spin_model)
            if amp == 0:
                continue
            k[e] += 1
            j = basis.find(s.transmon, s.photons - 1, k)
            if j is not None:
                rows.append(j)
                cols.append(i)
                vals.append(g * sq * amp)
    return rows, cols, vals


def coupling_operator(params: SystemParams, basis: EnumeratedBasis, couple_transmon=True) -> sp.csr_matrix:
    _check_ensembles(params, basis)
    r, c, v = _coupling_triplets(params, basis, couple_transmon)
    n = basis.dim
    lower = sp.coo_matrix((v, (r, c)), shape=(n, n), dtype=complex).tocsr()
    return (lower + lower.conj().T).tocsr()


def build_hamiltonian(params: SystemParams, basis: EnumeratedBasis, couple_transmon: bool = True) -> SparseOperator:
    """Time-independent rotating-frame Hamiltonian.

    ``couple_transmon=False`` drops the transmon-cavity term, which models a
    transmon parked far outside the dispersive range.
    """
    V = coupling_operator(params, basis, couple_transmon)
    H = (sp.diags(bare_energies(params, basis)).astype(complex) + V).tocsr()
    return SparseOperator(H, hermitian=True, basis=basis)


def excitation_number_operator(basis: EnumeratedBasis) -> SparseOperator:
    return SparseOperator(
        sp.diags([float(s.excitations) for s in basis.states]).tocsr(), hermitian=True, basis=basis
    )


def photon_lowering(basis: EnumeratedBasis) -> sp.csr_matrix:
    r, c, v = [], [], []
    for i, s in enumerate(basis.states):
        if s.photons:
            j = basis.find(s.transmon, s.photons - 1, s.k)
            if j is not None:
                r.append(j)
                c.append(i)
                v.append(math.sqrt(s.photons))
    return sp.coo_matrix((v, (r, c)), shape=(basis.dim,) * 2, dtype=complex).tocsr()


def transmon_lowering(basis: EnumeratedBasis) -> sp.csr_matrix:
    r, c = [], []
    for i, s in enumerate(basis.states):
        if s.transmon:
            j = basis.find(0, s.photons, s.k)
            if j is not None:
                r.append(j)
                c.append(i)
    return sp.coo_matrix((np.ones(len(r)), (r, c)), shape=(basis.dim,) * 2, dtype=complex).tocsr()


def spin_lowering(basis: EnumeratedBasis, params: SystemParams, e: int, normalized: bool = True) -> sp.csr_matrix:
    """Collective S- of ensemble ``e``; divided by sqrt(N_s) when ``normalized``."""
    N = params.ensembles[e].N_s
    norm = math.sqrt(N) if normalized else 1.0
    r, c, v = [], [], []
    for i, s in enumerate(basis.states):
        if s.k[e] == 0:
            continue
        k = list(s.k)
        k[e] -= 1
        j = basis.find(s.transmon, s.photons, k)
        if j is not None:
            amp = collective_raising_element(N, k[e], params.spin_model)
            r.append(j)
            c.append(i)
            v.append(amp / norm)
    return sp.coo_matrix((v, (r, c)), shape=(basis.dim,) * 2, dtype=complex).tocsr()


def build_collapse_ops(params: SystemParams, basis: EnumeratedBasis, couple_transmon: bool = True) -> LindbladModel:
    """Photon loss, transmon decay and collective spin decay, one channel each.

    The spin channel is S-/sqrt(N_s) so that a single collective excitation
    decays at ``gamma_spin``. Zero-rate channels are omitted.
    """
    H = build_hamiltonian(params, basis, couple_transmon)
    ops = []
    if params.kappa_c > 0:
        ops.append((SparseOperator(photon_lowering(basis), basis=basis), params.kappa_c))
    if params.gamma_JJ > 0:
        ops.append((SparseOperator(transmon_lowering(basis), basis=basis), params.gamma_JJ))
    if params.gamma_spin > 0:
        for e in range(len(params.ensembles)):
            ops.append((SparseOperator(spin_lowering(basis, params, e), basis=basis), params.gamma_spin))
    return LindbladModel(H, ops)


class InteractionPictureGenerator:
    """H(t) = e^{iH0 t} V e^{-iH0 t} with H0 the bare detuning part.

    Each coupling element V_ij acquires the phase exp(i (E_i - E_j) t).
    """

    def __init__(self, params: SystemParams, basis: EnumeratedBasis):
        self.basis = basis
        self.energies = bare_energies(params, basis)
        coo = coupling_operator(params, basis).tocoo()
        self.rows, self.cols, self.vals = coo.row, coo.col, coo.data
        self.freqs = self.energies[self.rows] - self.energies[self.cols]

    def matrix(self, t: float) -> sp.csr_matrix:
        data = self.vals * np.exp(1j * self.freqs * t)
        n = self.basis.dim
        return sp.coo_matrix((data, (self.rows, self.cols)), shape=(n, n)).tocsr()

    def apply(self, t: float, psi: np.ndarray) -> np.ndarray:
        data = self.vals * np.exp(1j * self.freqs * t)
        out = np.zeros_like(psi, dtype=complex)
        np.add.at(out, self.rows, data * psi[self.cols])
        return out

    def __call__(self, t: float) -> SparseOperator:
        return SparseOperator(self.matrix(t), hermitian=True, basis=self.basis)


def interaction_picture_generator(params: SystemParams, basis: EnumeratedBasis, t: float) -> SparseOperator:
    return InteractionPictureGenerator(params, basis)(t)
