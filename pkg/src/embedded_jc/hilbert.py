"""Truncated product basis: transmon x cavity photons x collective spin waves.

Spins live in the fully symmetric Dicke sector, so an ensemble contributes
only its collective excitation number ``k``. ``N_s`` enters through matrix
elements and never through the basis size.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

from .params import BOSONIC, EXACT_DICKE

DEFAULT_DIMENSION_CAP = 20_000


class DimensionError(RuntimeError):
    """Basis would exceed the configured hard cap."""


@dataclass(frozen=True)
class SpaceTruncation:
    n_max: int = 4
    k_max: int = 3
    total_excitation_max: int | None = 4

    def __post_init__(self):
        if self.n_max < 1 or self.k_max < 1:
            raise ValueError("n_max and k_max must be >= 1")
        if self.total_excitation_max is not None and self.total_excitation_max < 1:
            raise ValueError("total_excitation_max must be >= 1 when set")


DEFAULT_TRUNCATION = SpaceTruncation()


@dataclass(frozen=True, order=True)
class BasisState:
    transmon: int  # 0 -> |a>, 1 -> |b>
    photons: int
    k: tuple[int, ...]

    @property
    def excitations(self) -> int:
        return self.transmon + self.photons + sum(self.k)

    @property
    def sort_key(self):
        return (self.excitations, self.transmon, self.photons, self.k)

    def label(self) -> str:
        ks = ",".join(str(x) for x in self.k)
        return f"{'ab'[self.transmon]},{self.photons},{ks}"


class EnumeratedBasis:
    """Ordered basis with index maps and the total-excitation partition.

    Treated as immutable after construction.
    """

    def __init__(self, states, n_ensembles: int):
        self.states = tuple(sorted(states, key=lambda s: s.sort_key))
        self.n_ensembles = n_ensembles
        self._index = {s: i for i, s in enumerate(self.states)}
        if len(self._index) != len(self.states):
            raise ValueError("duplicate basis states")
        blocks: dict[int, list[int]] = {}
        for i, s in enumerate(self.states):
            blocks.setdefault(s.excitations, []).append(i)
        self.blocks = {n: tuple(idx) for n, idx in sorted(blocks.items())}

    def __len__(self):
        return len(self.states)

    @property
    def dim(self) -> int:
        return len(self.states)

    def index_of(self, state: BasisState) -> int:
        return self._index[state]

    def find(self, transmon, photons, k) -> int | None:
        return self._index.get(BasisState(transmon, photons, tuple(k)))

    def state_at(self, i: int) -> BasisState:
        return self.states[i]

    def labels(self) -> list[str]:
        return [s.label() for s in self.states]

    def to_json(self) -> str:
        return json.dumps(
            [{"transmon": s.transmon, "photons": s.photons, "k": list(s.k)} for s in self.states]
        )


def enumerate_basis(trunc: SpaceTruncation, ensembles, cap: int = DEFAULT_DIMENSION_CAP) -> EnumeratedBasis:
    """Enumerate every admissible state once.

    ``ensembles`` is a sequence of ``N_s`` values or objects with an ``N_s``
    attribute; each ensemble's ladder stops at ``min(k_max, N_s)``.
    """
    sizes = [int(getattr(e, "N_s", e)) for e in ensembles]
    kcaps = [min(trunc.k_max, n) for n in sizes]
    cut = trunc.total_excitation_max
    # estimate before materialising, so a huge request fails fast
    raw = 2 * (trunc.n_max + 1) * math.prod(c + 1 for c in kcaps)
    if cut is None and raw > cap:
        raise DimensionError(f"basis dimension {raw} exceeds cap {cap}")
    states = []
    for t in (0, 1):
        for n in range(trunc.n_max + 1):
            if cut is not None and t + n > cut:
                break
            for k in itertools.product(*(range(c + 1) for c in kcaps)):
                if cut is not None and t + n + sum(k) > cut:
                    continue
                states.append(BasisState(t, n, tuple(k)))
                if len(states) > cap:
                    raise DimensionError(f"basis dimension exceeds cap {cap}")
    return EnumeratedBasis(states, len(sizes))


def collective_raising_element(N_s: int, k: int, model: str = EXACT_DICKE) -> float:
    """<k+1| S+ |k> in the symmetric sector (exact) or its bosonic limit."""
    if k < 0:
        raise ValueError("k must be non-negative")
    if model == EXACT_DICKE:
        if k >= N_s:
            return 0.0
        return math.sqrt((k + 1) * (N_s - k))
    if model == BOSONIC:
        return math.sqrt((k + 1) * N_s)
    raise ValueError(f"unknown spin model {model!r}")


def excitation_blocks(basis: EnumeratedBasis) -> list[tuple[int, ...]]:
    return list(basis.blocks.values())
