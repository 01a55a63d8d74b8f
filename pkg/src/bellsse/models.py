"""Model definitions and their operator tables.

Both Hamiltonians decompose into two operator families:

==========  =======================  ==========================
            A family (coupling h)    B family (coupling 1)
==========  =======================  ==========================
Ising       site flip X_i            bond ZZ
gauge       link Z_l                 plaquette XXXX
==========  =======================  ==========================

and each family contributes a diagonal partner that is the identity on
its locus, so the series expansion draws from four operator kinds per
locus with all matrix elements equal to one.  What distinguishes the
models inside the update kernels is only which Bell component the A/B
families toggle: the Ising A-ops toggle r_x and B-ops toggle r_z, the
gauge model is the mirror image.  ``ModelSpec.components`` hands the
kernels the two arrays in toggle order so a single implementation
serves both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bellstate import BellConfig
from .lattice import Lattice, build_chain, build_torus_links

TFIM = "tfim"
Z2_LGT = "z2_lgt"

# operator kinds stored in the expansion slots
OP_NULL = 0
OP_DIAG_A = 1
OP_OFFDIAG_A = 2
OP_DIAG_B = 3
OP_OFFDIAG_B = 4

# the three ways to split four plaquette links into two pairs
PLAQUETTE_PAIRINGS = np.array(
    [[0, 1, 2, 3], [0, 2, 1, 3], [0, 3, 1, 2]], dtype=np.int64)


@dataclass(frozen=True)
class OperatorEntry:
    kind: int
    locus: int


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    lat: Lattice
    h: float

    @property
    def n_spins(self) -> int:
        return self.lat.n_spins

    @property
    def n_a_loci(self) -> int:
        return self.lat.n_spins

    @property
    def n_b_loci(self) -> int:
        return self.lat.n_b

    @property
    def coupling_a(self) -> float:
        return self.h

    @property
    def coupling_b(self) -> float:
        return 1.0

    def components(self, cfg: BellConfig) -> tuple[np.ndarray, np.ndarray]:
        """(component toggled by A-operators, component toggled by B-operators).

        Ising: (r_x, r_z); gauge: (r_z, r_x).  The kernels only ever see
        this pair, which is what makes them model-agnostic."""
        if self.kind == TFIM:
            return cfg.r_x, cfg.r_z
        return cfg.r_z, cfg.r_x

    @property
    def has_global_flip(self) -> bool:
        """The Ising chain commutes with the global X product, realized
        on configurations as flipping every r_x.  The gauge model gets
        its sector moves from the dual-cycle flips instead (see
        ``lattice.dual_cycle_flips``); winding x-strings stay
        unreachable in both schemes."""
        return self.kind == TFIM


def tfim_model(L: int, h: float, boundary: str = "open") -> ModelSpec:
    return ModelSpec(kind=TFIM, lat=build_chain(L, boundary), h=h)


def lgt_model(L: int, h: float) -> ModelSpec:
    return ModelSpec(kind=Z2_LGT, lat=build_torus_links(L), h=h)


def initial_config(model: ModelSpec) -> BellConfig:
    """All identity letters: the infinite-temperature / maximally mixed
    reference string, which is in the sampled symmetry sector."""
    return BellConfig.zeros(model.n_spins)


def operator_table(model: ModelSpec) -> dict:
    """Static arrays the engine kernels consume."""
    return {
        "n_a": model.n_a_loci,
        "n_b": model.n_b_loci,
        "coupling_a": model.coupling_a,
        "coupling_b": model.coupling_b,
        "b_members": model.lat.b_members,
        "b_size": model.lat.b_size,
        "spin_b_adj": model.lat.spin_b_adj,
    }


def flippable(model: ModelSpec, cfg: BellConfig, entry: OperatorEntry) -> bool:
    """Whether a diagonal operator could trade places with its
    off-diagonal partner given the state at its slot: the partner's
    constraint must hold there."""
    c_a, c_b = model.components(cfg)
    if entry.kind == OP_DIAG_A:
        return c_b[entry.locus] == 0
    if entry.kind == OP_DIAG_B:
        par = 0
        for m in model.lat.b_members[entry.locus]:
            if m >= 0:
                par ^= c_a[m]
        return par == 0
    raise ValueError("flippability is a property of diagonal operators")


def apply_offdiag(model: ModelSpec, cfg: BellConfig, entry: OperatorEntry) -> None:
    """Propagate the state through an off-diagonal operator (assumed
    allowed; the kernels maintain that invariant)."""
    c_a, c_b = model.components(cfg)
    if entry.kind == OP_OFFDIAG_A:
        c_a[entry.locus] ^= 1
    elif entry.kind == OP_OFFDIAG_B:
        for m in model.lat.b_members[entry.locus]:
            if m >= 0:
                c_b[m] ^= 1
    else:
        raise ValueError("diagonal operators do not move the state")


def split_plaquette_vertex(rng: np.random.Generator, links) -> tuple[tuple[int, int], tuple[int, int]]:
    """Randomly split four plaquette links into two pairs (three equally
    likely pairings).  The kernels roll this split freshly for every
    off-diagonal plaquette operator in every sweep."""
    t = PLAQUETTE_PAIRINGS[rng.integers(3)]
    return (links[t[0]], links[t[1]]), (links[t[2]], links[t[3]])
