"""Block eigensolver, JC-ladder analytics and the embedded-JC hybrid doublet."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .hamiltonian import SparseOperator, build_hamiltonian
from .hilbert import DEFAULT_TRUNCATION, EnumeratedBasis, SpaceTruncation, enumerate_basis
from .params import SystemParams

RESIDUAL_TOL = 1e-9


class NumericalError(RuntimeError):
    pass


class DoubletError(RuntimeError):
    """The hybrid doublet could not be isolated in the one-excitation block."""


@dataclass
class Spectrum:
    eigenvalues: np.ndarray
    block_tags: np.ndarray
    eigenvectors: np.ndarray | None = None
    max_residual: float = 0.0

    def block(self, n: int) -> np.ndarray:
        return self.eigenvalues[self.block_tags == n]

    def block_min(self, n: int) -> float:
        vals = self.block(n)
        if vals.size == 0:
            raise KeyError(f"spectrum has no excitation block {n}")
        return float(vals[0])

    def rows(self):
        """(block, index-within-block, eigenvalue) in block order."""
        out = []
        for n in sorted(set(self.block_tags.tolist())):
            for i, e in enumerate(self.block(n)):
                out.append((n, i, float(e)))
        return out


def eigensystem(H: SparseOperator, want_vectors: bool = True, basis: EnumeratedBasis | None = None) -> Spectrum:
    """Dense eigensolve of every excitation block of ``H``.

    Eigenvalues are returned globally ascending; the per-block subsequences
    are therefore ascending too.
    """
    basis = basis or H.basis
    blocks = basis.blocks if basis is not None else {0: tuple(range(H.dim))}
    scale = max(H.norm_max(), 1e-300)
    vals, tags, vecs = [], [], []
    worst = 0.0
    for n, idx in blocks.items():
        h = H.block(idx)
        e, v = np.linalg.eigh(h)
        res = np.linalg.norm(h @ v - v * e, axis=0)
        worst = max(worst, float(res.max()) if res.size else 0.0)
        vals.append(e)
        tags.append(np.full(e.size, n))
        if want_vectors:
            full = np.zeros((H.dim, e.size), dtype=complex)
            full[np.asarray(idx)] = v
            vecs.append(full)
    if worst > RESIDUAL_TOL * scale:
        raise NumericalError(f"eigen residual {worst:.3e} exceeds {RESIDUAL_TOL:g} * |H|")
    vals = np.concatenate(vals)
    tags = np.concatenate(tags)
    order = np.argsort(vals, kind="stable")
    vectors = np.concatenate(vecs, axis=1)[:, order] if want_vectors else None
    return Spectrum(vals[order], tags[order], vectors, worst)


def jc_ladder(g_c: float, delta: float, n: int) -> tuple[float, float]:
    """Dressed energies of the n-excitation JC doublet {|a,n>, |b,n-1>}."""
    if n < 1:
        raise ValueError("n must be >= 1")
    r = math.sqrt(delta**2 / 4 + n * g_c**2)
    return (-delta / 2 - r, -delta / 2 + r)


def anharmonicity(spec: Spectrum) -> float:
    """Difference of successive ladder steps between the lowest states of blocks 0, 1, 2."""
    e0, e1, e2 = (spec.block_min(n) for n in (0, 1, 2))
    return (e2 - e1) - (e1 - e0)


def manifold_gap(spec: Spectrum) -> float:
    """Rotating-frame separation of the lowest one- and two-excitation states."""
    return spec.block_min(1) - spec.block_min(2)


@dataclass
class EmbeddedJcReport:
    hybrid_ground_index: int
    hybrid_excited_indices: tuple[int, int]
    doublet_energies: tuple[float, float]
    splitting: float
    coefficient_magnitudes: tuple[float, float, float]  # spin, transmon, photon
    coefficient_signs: tuple[int, int, int]
    anharmonicity: float | None
    leakage: float
    off_resonant_polariton_population: float
    expected_splitting: float
    collective_coupling: float

    def to_dict(self) -> dict:
        return asdict(self)


def _polaritons(params: SystemParams, basis: EnumeratedBasis, k0):
    """Bare-cavity JC eigenvectors of the one-excitation doublet, ordered (resonant, other)."""
    ib = basis.find(1, 0, k0)
    ia = basis.find(0, 1, k0)
    h = np.array([[-params.delta, params.g_c], [params.g_c, 0.0]])
    e, v = np.linalg.eigh(h)
    target = -params.ensembles[0].Delta
    order = np.argsort(np.abs(e - target), kind="stable")
    out = []
    for j in order:
        vec = np.zeros(basis.dim, dtype=complex)
        vec[ib], vec[ia] = v[0, j], v[1, j]
        out.append(vec)
    return out


def embedded_jc_analysis(
    params: SystemParams,
    basis: EnumeratedBasis | None = None,
    min_doublet_weight: float = 0.5,
) -> EmbeddedJcReport:
    """Locate and characterise the hybrid doublet addressed by ensemble 0.

    The doublet is the pair of one-excitation eigenvectors with the largest
    weight on span{|E,a,0>, resonant polariton}; identification by overlap
    rather than by ordering keeps it stable through near-degeneracies.
    """
    if basis is None:
        basis = enumerate_basis(DEFAULT_TRUNCATION, params.ensembles)
    spec = eigensystem(build_hamiltonian(params, basis), want_vectors=True)
    nens = len(params.ensembles)
    k0 = (0,) * nens
    kE = (1,) + (0,) * (nens - 1)
    iE, ib, ia = basis.find(0, 0, kE), basis.find(1, 0, k0), basis.find(0, 1, k0)
    if None in (iE, ib, ia):
        raise DoubletError("basis does not contain the one-excitation states")
    p_res, p_off = _polaritons(params, basis, k0)
    one = np.flatnonzero(spec.block_tags == 1)
    vecs = spec.eigenvectors[:, one]
    w = np.abs(vecs[iE]) ** 2 + np.abs(p_res.conj() @ vecs) ** 2
    pick = one[np.argsort(-w, kind="stable")[:2]]
    pick = pick[np.argsort(spec.eigenvalues[pick], kind="stable")]
    weights = np.abs(spec.eigenvectors[iE, pick]) ** 2 + np.abs(p_res.conj() @ spec.eigenvectors[:, pick]) ** 2
    if weights.min() < min_doublet_weight:
        raise DoubletError(
            f"hybrid doublet not resolvable: weight {weights.min():.3f} in the expected subspace"
        )
    lo, hi = (int(i) for i in pick)
    v = spec.eigenvectors[:, hi]
    # fix the global phase so the spin amplitude is real positive
    if abs(v[iE]) > 0:
        v = v * np.exp(-1j * np.angle(v[iE]))
    amps = (v[iE], v[ib], v[ia])
    mags = tuple(float(abs(a)) for a in amps)
    signs = tuple(int(np.sign(a.real)) if abs(a) > 1e-12 else 0 for a in amps)
    G = params.collective(0)
    try:
        anh = anharmonicity(spec)
    except KeyError:
        anh = None
    ground = int(np.flatnonzero(spec.block_tags == 0)[0])
    return EmbeddedJcReport(
        hybrid_ground_index=ground,
        hybrid_excited_indices=(lo, hi),
        doublet_energies=(float(spec.eigenvalues[lo]), float(spec.eigenvalues[hi])),
        splitting=float(spec.eigenvalues[hi] - spec.eigenvalues[lo]),
        coefficient_magnitudes=mags,
        coefficient_signs=signs,
        anharmonicity=anh,
        leakage=float(max(0.0, 1.0 - sum(m * m for m in mags))),
        off_resonant_polariton_population=float(abs(p_off.conj() @ v) ** 2),
        expected_splitting=math.sqrt(2.0) * G,
        collective_coupling=G,
    )


@dataclass
class ConvergenceScan:
    truncations: list
    doublets: list  # (E_lo, E_hi) per truncation
    differences: list  # max |change| between successive truncations
    converged: bool
    monotone: bool
    tolerance: float = field(default=1e-8)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["truncations"] = [asdict(t) for t in self.truncations]
        return d


def convergence_scan(params: SystemParams, trunc_list, rel_tol: float = 1e-8) -> ConvergenceScan:
    """Hybrid-doublet eigenvalues across a list of increasing truncations."""
    trunc_list = list(trunc_list)
    if len(trunc_list) < 2:
        raise ValueError("need at least two truncations")
    doublets = []
    for tr in trunc_list:
        rep = embedded_jc_analysis(params, enumerate_basis(tr, params.ensembles))
        doublets.append(rep.doublet_energies)
    diffs = [
        float(max(abs(a - b) for a, b in zip(d1, d0))) for d0, d1 in zip(doublets, doublets[1:])
    ]
    tol = rel_tol * params.g_c
    return ConvergenceScan(
        truncations=trunc_list,
        doublets=doublets,
        differences=diffs,
        converged=diffs[-1] < tol,
        monotone=all(b <= a + tol for a, b in zip(diffs, diffs[1:])),
        tolerance=tol,
    )


def default_truncations():
    return [SpaceTruncation(n, k, n) for n, k in ((2, 1), (3, 2), (4, 3), (5, 4))]
