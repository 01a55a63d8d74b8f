"""Two-copy Bell-basis configurations and Pauli-string bookkeeping.

A configuration assigns every spin a pair of bits ``(r_z, r_x)``; the
four combinations label the Bell pair states, equivalently the unsigned
Pauli operators 1, X, Z, iY through

    (0,0) -> 1      (0,1) -> X      (1,0) -> Z      (1,1) -> iY

so a whole configuration is an unsigned Pauli string.  The Monte Carlo
weight of every allowed operator in the expansion is one; the operators
merely impose parity constraints and toggle bits:

* a site/link X-type flip acts iff ``r_z == 0`` and toggles ``r_x``;
* a bond ZZ acts iff ``r_x_i ^ r_x_j == 0`` and toggles both ``r_z``;
* a plaquette XXXX acts iff the four ``r_z`` bits have even parity and
  toggles the four ``r_x`` bits;
* a single-site Z (gauge model) acts iff ``r_x == 0`` and toggles ``r_z``.

All of these mutate the configuration in place and return ``False``
without touching it when the constraint fails.

Estimator signs:

* ``pauli_sign(cfg, s)``  = (-1)^(s_x.r_z + s_z.r_x), the eigenvalue of
  the two-copy observable attached to the Pauli string ``s``; averaging
  it over configurations gives the squared thermal expectation of ``s``.
* ``swap_sign(cfg, mask)`` = (-1)^(sum_{i in A} r_z_i r_x_i), the
  two-copy SWAP eigenvalue of region A, averaging to Tr rho_A^2.

For speed the bit vectors can be packed into uint64 words; the packed
helpers are what the measurement kernels use.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_SITE_CHARS = {(0, 0): "i", (0, 1): "x", (1, 0): "z", (1, 1): "y"}
_CHARS_SITE = {v: k for k, v in _SITE_CHARS.items()}


@dataclass
class BellConfig:
    """Mutable pair of bit vectors, one spin per entry."""

    r_z: np.ndarray  # uint8
    r_x: np.ndarray  # uint8

    @classmethod
    def zeros(cls, n: int) -> "BellConfig":
        return cls(np.zeros(n, dtype=np.uint8), np.zeros(n, dtype=np.uint8))

    @property
    def n_spins(self) -> int:
        return self.r_z.shape[0]

    def copy(self) -> "BellConfig":
        return BellConfig(self.r_z.copy(), self.r_x.copy())

    def __eq__(self, other) -> bool:
        return (np.array_equal(self.r_z, other.r_z)
                and np.array_equal(self.r_x, other.r_x))

    def weight(self) -> int:
        """Number of non-identity sites of the Pauli string."""
        return int(np.count_nonzero(self.r_z | self.r_x))

    def encode(self) -> int:
        """Pack into an integer label, site i contributing (r_z + 2 r_x)*4^i."""
        code = 0
        for i in range(self.n_spins - 1, -1, -1):
            code = 4 * code + int(self.r_z[i]) + 2 * int(self.r_x[i])
        return code

    @classmethod
    def decode(cls, code: int, n: int) -> "BellConfig":
        cfg = cls.zeros(n)
        for i in range(n):
            cfg.r_z[i] = code & 1
            cfg.r_x[i] = (code >> 1) & 1
            code >>= 2
        return cfg

    def to_string(self) -> str:
        """Two characters per site, the bits 'zx', so site (r_z=1, r_x=0)
        prints as '10' and a 4-site all-identity string as '00000000'."""
        return "".join(f"{int(z)}{int(x)}" for z, x in zip(self.r_z, self.r_x))

    @classmethod
    def from_string(cls, text: str) -> "BellConfig":
        if len(text) % 2 or set(text) - {"0", "1"}:
            raise ValueError("expected an even-length string of 0/1 bit pairs")
        cfg = cls.zeros(len(text) // 2)
        for i in range(cfg.n_spins):
            cfg.r_z[i] = int(text[2 * i])
            cfg.r_x[i] = int(text[2 * i + 1])
        return cfg

    def pauli_letters(self) -> str:
        """One letter from {i,x,z,y} per site, for human-readable logs."""
        return "".join(_SITE_CHARS[(int(z), int(x))]
                       for z, x in zip(self.r_z, self.r_x))


@dataclass(frozen=True)
class PauliString:
    """Unsigned Pauli string given by its z/x bit masks."""

    z_bits: np.ndarray  # uint8
    x_bits: np.ndarray  # uint8
    label: str = ""

    @classmethod
    def from_ops(cls, n: int, ops: dict[int, str], label: str = "") -> "PauliString":
        """ops maps site -> 'X' | 'Y' | 'Z'."""
        z = np.zeros(n, dtype=np.uint8)
        x = np.zeros(n, dtype=np.uint8)
        for site, op in ops.items():
            op = op.upper()
            if op in ("Z", "Y"):
                z[site] = 1
            if op in ("X", "Y"):
                x[site] = 1
            if op not in ("X", "Y", "Z"):
                raise ValueError(f"bad Pauli letter {op!r}")
        if not label:
            label = "".join(f"{op.upper()}{site}" for site, op in sorted(ops.items()))
        return cls(z, x, label)

    @property
    def weight(self) -> int:
        return int(np.count_nonzero(self.z_bits | self.x_bits))


# ------------------------------------------------------------- operator actions

def try_apply_site_x(cfg: BellConfig, i: int) -> bool:
    """X-flip on spin i; allowed iff r_z_i = 0.  Mutates cfg on success."""
    if cfg.r_z[i]:
        return False
    cfg.r_x[i] ^= 1
    return True


def try_apply_bond_zz(cfg: BellConfig, i: int, j: int) -> bool:
    """ZZ on a bond; allowed iff r_x_i ^ r_x_j = 0."""
    if cfg.r_x[i] ^ cfg.r_x[j]:
        return False
    cfg.r_z[i] ^= 1
    cfg.r_z[j] ^= 1
    return True


def try_apply_plaquette_x(cfg: BellConfig, links) -> bool:
    """XXXX on the four links of a plaquette; allowed iff the r_z parity
    over the links is even."""
    par = 0
    for l in links:
        par ^= cfg.r_z[l]
    if par:
        return False
    for l in links:
        cfg.r_x[l] ^= 1
    return True


def try_apply_site_z(cfg: BellConfig, i: int) -> bool:
    """Z on spin i; allowed iff r_x_i = 0."""
    if cfg.r_x[i]:
        return False
    cfg.r_z[i] ^= 1
    return True


# --------------------------------------------------------------------- signs

def pauli_sign(cfg: BellConfig, s: PauliString) -> int:
    """(-1)^(s_x . r_z + s_z . r_x) for the two-copy string observable."""
    par = (int(np.sum(s.x_bits & cfg.r_z)) + int(np.sum(s.z_bits & cfg.r_x))) & 1
    return -1 if par else 1


def swap_sign(cfg: BellConfig, mask: np.ndarray) -> int:
    """(-1)^(number of iY sites inside the region mask)."""
    par = int(np.count_nonzero(cfg.r_z & cfg.r_x & mask)) & 1
    return -1 if par else 1


def parity_z(cfg: BellConfig) -> int:
    """Total r_z parity; conserved by every chain update, so the sampler
    explores only the even sector it starts in."""
    return int(np.sum(cfg.r_z)) & 1


# ------------------------------------------------------------------ bit packing

def pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a 0/1 uint8 vector into little-endian uint64 words."""
    n = bits.shape[0]
    n_words = (n + 63) // 64
    padded = np.zeros(n_words * 64, dtype=np.uint8)
    padded[:n] = bits
    words = np.zeros(n_words, dtype=np.uint64)
    for w in range(n_words):
        chunk = padded[w * 64:(w + 1) * 64]
        words[w] = np.bitwise_or.reduce(
            chunk.astype(np.uint64) << np.arange(64, dtype=np.uint64))
    return words


def parity_of_and(a_words: np.ndarray, b_words: np.ndarray) -> int:
    """Parity of popcount(a & b) over packed words."""
    return int(np.bitwise_count(a_words & b_words).sum()) & 1
