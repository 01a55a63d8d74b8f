"""Exact references: small-system diagonalization and closed-form sums.

Everything here works in the computational z basis with the convention
that bit ``i`` of a basis index is spin ``i`` and ``Z|0> = +|0>``.  An
unsigned Pauli string with masks ``(z, x)`` is the operator product
``prod_i Z^z_i X^x_i`` (so the (1,1) letter is iY, matching the Bell
configuration labels), acting as

    sigma |a> = (-1)^(z . (a ^ x)) |a ^ x>.

Dense thermal states are limited to 12 spins, sparse ground states to
22; the gauge model on the 3x3 torus (18 links) is handled through its
Gauss-sector block structure instead of the full dense space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DegenerateGroundState
from .lattice import Lattice

DENSE_LIMIT = 12      # spins; 4096-dimensional eigh is still quick
SPARSE_LIMIT = 22
DEGENERACY_TOL = 1e-10


# ----------------------------------------------------------------- hamiltonians

def tfim_hamiltonian(lat: Lattice, h: float) -> sp.csr_matrix:
    """H = - sum_<ij> Z_i Z_j - h sum_i X_i on a chain lattice."""
    if lat.kind != "chain":
        raise ValueError("tfim_hamiltonian wants a chain lattice")
    n = lat.n_spins
    dim = 1 << n
    idx = np.arange(dim, dtype=np.int64)
    diag = np.zeros(dim)
    for k in range(lat.n_b):
        i, j = int(lat.b_members[k, 0]), int(lat.b_members[k, 1])
        si = 1.0 - 2.0 * ((idx >> i) & 1)
        sj = 1.0 - 2.0 * ((idx >> j) & 1)
        diag -= si * sj
    H = sp.diags(diag, format="csr", dtype=np.float64)
    ones = np.full(dim, -h)
    for i in range(n):
        H = H + sp.csr_matrix((ones, (idx ^ (1 << i), idx)), shape=(dim, dim))
    return H.tocsr()


def lgt_hamiltonian(lat: Lattice, h: float) -> sp.csr_matrix:
    """H = - sum_p prod_{l in p} X_l - h sum_l Z_l on the torus links."""
    if lat.kind != "torus_links":
        raise ValueError("lgt_hamiltonian wants torus links")
    n = lat.n_spins
    dim = 1 << n
    idx = np.arange(dim, dtype=np.int64)
    diag = -h * (n - 2.0 * _popcount(idx))
    H = sp.diags(diag, format="csr", dtype=np.float64)
    for p in range(lat.n_b):
        mask = 0
        for l in lat.b_members[p]:
            mask |= 1 << int(l)
        vals = np.full(dim, -1.0)
        H = H + sp.csr_matrix((vals, (idx ^ mask, idx)), shape=(dim, dim))
    return H.tocsr()


def _popcount(a: np.ndarray) -> np.ndarray:
    return np.bitwise_count(a.astype(np.uint64)).astype(np.int64)


def _bit_parity(a: np.ndarray, mask: int) -> np.ndarray:
    return (np.bitwise_count(a.astype(np.uint64) & np.uint64(mask)) & 1).astype(np.int64)


# ----------------------------------------------------------------------- states

@dataclass
class DenseState:
    """Either a pure state vector or a (normalized) thermal density matrix."""

    n_spins: int
    kind: str                 # "pure" | "thermal"
    psi: np.ndarray = None
    rho: np.ndarray = None
    energy: float = None      # ground energy (pure) / not set for thermal
    beta: float = None
    degenerate: bool = False

    def density(self) -> np.ndarray:
        if self.kind == "pure":
            return np.outer(self.psi, self.psi)
        return self.rho


def ground_state(H, n_spins: int, require_unique: bool = True) -> DenseState:
    """Lowest eigenvector.  Dense path below 2^12, Lanczos above (with a
    fixed start vector so results are reproducible).  A degenerate bottom
    of the spectrum raises unless ``require_unique=False``, in which case
    the returned state carries ``degenerate=True``."""
    dim = H.shape[0]
    if n_spins > SPARSE_LIMIT:
        raise ValueError(f"{n_spins} spins is past the sparse limit {SPARSE_LIMIT}")
    if n_spins <= DENSE_LIMIT:
        w, v = scipy.linalg.eigh(np.asarray(H.todense()) if sp.issparse(H) else H)
        e0, e1 = w[0], w[1] if dim > 1 else np.inf
        psi = v[:, 0]
    else:
        v0 = np.ones(dim) / np.sqrt(dim)
        w, v = spla.eigsh(H, k=2, which="SA", v0=v0)
        order = np.argsort(w)
        e0, e1 = w[order[0]], w[order[1]]
        psi = v[:, order[0]]
    degenerate = bool(e1 - e0 < DEGENERACY_TOL * max(1.0, abs(e0)))
    if degenerate and require_unique:
        raise DegenerateGroundState(
            f"gap {e1 - e0:.3e} below tolerance; pick the sector by hand")
    return DenseState(n_spins=n_spins, kind="pure", psi=psi, energy=float(e0),
                      degenerate=degenerate)


def thermal_state(H, n_spins: int, beta: float) -> DenseState:
    """exp(-beta H)/Z through a dense eigendecomposition."""
    if n_spins > DENSE_LIMIT:
        raise ValueError(f"dense thermal state capped at {DENSE_LIMIT} spins")
    Hd = np.asarray(H.todense()) if sp.issparse(H) else np.asarray(H)
    w, v = scipy.linalg.eigh(Hd)
    g = np.exp(-beta * (w - w[0]))
    rho = (v * g) @ v.T
    rho /= np.trace(rho)
    return DenseState(n_spins=n_spins, kind="thermal", rho=rho, beta=beta)


# ----------------------------------------------------- reduced states and purity

def _spin_axes(n: int, spins) -> list[int]:
    # axis 0 of the [2]*n reshape is the most significant bit = spin n-1
    return [n - 1 - int(s) for s in spins]


def reduced_density(state: DenseState, mask: np.ndarray) -> np.ndarray:
    """Partial trace onto the masked spins."""
    n = state.n_spins
    keep = np.flatnonzero(mask)
    drop = np.flatnonzero(~np.asarray(mask, dtype=bool))
    ka, kb = len(keep), len(drop)
    perm = _spin_axes(n, keep[::-1]) + _spin_axes(n, drop[::-1])
    if state.kind == "pure":
        m = state.psi.reshape([2] * n).transpose(perm).reshape(1 << ka, 1 << kb)
        return m @ m.T
    rho = state.rho.reshape([2] * n + [2] * n)
    perm2 = perm + [n + p for p in perm]
    rho = rho.transpose(perm2).reshape(1 << ka, 1 << kb, 1 << ka, 1 << kb)
    return np.einsum("abcb->ac", rho)


def exact_purity(state: DenseState, mask: np.ndarray) -> float:
    ra = reduced_density(state, mask)
    return float(np.sum(ra * ra.T))


def exact_renyi2(state: DenseState, mask: np.ndarray) -> float:
    return -float(np.log(exact_purity(state, mask)))


def exact_dephased_purity(state: DenseState, region_mask: np.ndarray,
                          boundary_mask: np.ndarray) -> float:
    """Purity of the reduced state after z-dephasing the boundary spins.

    Coherences between different z patterns on ``boundary_mask`` are
    dropped before squaring; with an empty boundary this is the plain
    purity.  This is the quantity the boundary-projected (gauge
    symmetrised) swap estimator averages to.
    """
    region_mask = np.asarray(region_mask, dtype=bool)
    boundary_mask = np.asarray(boundary_mask, dtype=bool)
    if np.any(boundary_mask & ~region_mask):
        raise ValueError("boundary spins must lie inside the region")
    ra = reduced_density(state, region_mask)
    keep = np.flatnonzero(region_mask)
    bbits = 0
    for k, s in enumerate(keep):
        if boundary_mask[s]:
            bbits |= 1 << k
    idx = np.arange(ra.shape[0], dtype=np.int64)
    same = ((idx[:, None] ^ idx[None, :]) & bbits) == 0
    kept = np.where(same, ra, 0.0)
    return float(np.sum(kept * kept.T))


# -------------------------------------------------------------- string averages

def apply_string(psi: np.ndarray, z_mask: int, x_mask: int) -> np.ndarray:
    """sigma |psi> for the unsigned string with the given masks:
    out[b] = (-1)^(z.b) psi[b ^ x]."""
    idx = np.arange(psi.shape[0], dtype=np.int64)
    sign = 1.0 - 2.0 * _bit_parity(idx, z_mask)
    return sign * psi[idx ^ x_mask]


def pauli_expect(state: DenseState, z_mask: int, x_mask: int) -> float:
    """Tr(rho sigma_{z,x}) with the ZX product convention (iY letters)."""
    if state.kind == "pure":
        return float(state.psi @ apply_string(state.psi, z_mask, x_mask))
    dim = state.rho.shape[0]
    idx = np.arange(dim, dtype=np.int64)
    sign = 1.0 - 2.0 * _bit_parity(idx ^ x_mask, z_mask)
    return float(np.sum(sign * state.rho[idx, idx ^ x_mask]))


def mask_of(spins) -> int:
    """Integer bitmask from either a boolean mask array or index iterable."""
    arr = np.asarray(spins)
    if arr.dtype == bool:
        arr = np.flatnonzero(arr)
    m = 0
    for s in arr:
        m |= 1 << int(s)
    return m


# ------------------------------------------------------- Bell-basis distribution

def label_fields(n: int) -> tuple[np.ndarray, np.ndarray]:
    """For every Bell label (site i contributing (r_z + 2 r_x) 4^i) the
    z- and x-bitmask over spins, as int64 arrays of length 4^n."""
    labels = np.arange(1 << (2 * n), dtype=np.int64)
    z = np.zeros_like(labels)
    x = np.zeros_like(labels)
    for i in range(n):
        z |= ((labels >> (2 * i)) & 1) << i
        x |= ((labels >> (2 * i + 1)) & 1) << i
    return z, x


def thermal_bell_distribution(state: DenseState, lam: float = 1.0,
                              region_mask: np.ndarray = None) -> np.ndarray:
    """Probability of every Bell configuration label under the two-copy
    Gibbs ensemble: P(r) ~ Tr(sigma_r rho sigma_r rho), optionally
    damped by lam^(string weight inside region) for the interpolating
    ensembles.  Normalized over all 4^n labels.  Feasible to ~8 spins."""
    n = state.n_spins
    if n > 8:
        raise ValueError("Bell distribution enumeration capped at 8 spins")
    rho = state.density()
    dim = 1 << n
    idx = np.arange(dim, dtype=np.int64)
    # Walsh sign matrix S[z, a] = (-1)^(z . a)
    S = 1.0 - 2.0 * ((_popcount((idx[:, None] & idx[None, :]).astype(np.int64))
                      & 1).astype(np.float64))
    out = np.zeros(1 << (2 * n))
    z_of, x_of = label_fields(n)
    label_of_zx = np.zeros((dim, dim), dtype=np.int64)
    label_of_zx[z_of, x_of] = np.arange(1 << (2 * n), dtype=np.int64)
    for x in range(dim):
        # A[a, b] = rho[a^x, b^x] * rho[b, a]; then T[z] = sum_ab S[z,a] S[z,b] A[a,b]
        rho_x = rho[np.ix_(idx ^ x, idx ^ x)]
        A = rho_x * rho.T
        T = ((S @ A) * S).sum(axis=1)
        out[label_of_zx[:, x]] = T
    out = np.maximum(out, 0.0)
    if lam != 1.0:
        if region_mask is None:
            w = _popcount(z_of | x_of)
        else:
            m = mask_of(region_mask)
            w = _popcount((z_of | x_of) & m)
        out = out * lam ** w
    return out / out.sum()


def label_parity_z(n: int) -> np.ndarray:
    """Total r_z parity of every Bell label (0 or 1)."""
    z_of, _ = label_fields(n)
    return (_popcount(z_of) & 1).astype(np.int64)


def label_support_mask(n: int, region_mask: np.ndarray) -> np.ndarray:
    """True for labels whose string acts trivially outside the region."""
    z_of, x_of = label_fields(n)
    outside = ((1 << n) - 1) ^ mask_of(region_mask)
    return ((z_of | x_of) & outside) == 0


# ------------------------------------------------------ interpolating ensembles

def _depolarize_site(rho: np.ndarray, n: int, site: int, lam: float) -> np.ndarray:
    keep = np.ones(n, dtype=bool)
    keep[site] = False
    sub = reduced_density(DenseState(n_spins=n, kind="thermal", rho=rho), keep)
    # re-embed Tr_site(rho) (x) I/2 with the site back in place
    dim = 1 << n
    idx = np.arange(dim, dtype=np.int64)
    low = idx & ((1 << site) - 1)
    high = idx >> (site + 1)
    sub_index = low | (high << site)
    bit = (idx >> site) & 1
    embedded = np.where(bit[:, None] == bit[None, :],
                        sub[np.ix_(sub_index, sub_index)], 0.0) * 0.5
    return lam * rho + (1.0 - lam) * embedded


def exact_q_lambda(state: DenseState, region_mask: np.ndarray, lams) -> np.ndarray:
    """Q(lambda)/Q(0) = sum over strings P inside the region of
    lambda^weight(P) <P>^2, evaluated through the equivalent per-site
    depolarization form 2^|A| Tr[rho_A Gamma_lambda(rho_A)], which keeps
    the cost polynomial in the region size (|A| <= 12)."""
    keep = np.flatnonzero(region_mask)
    na = len(keep)
    if na > 12:
        raise ValueError("region capped at 12 spins")
    rho_a = reduced_density(state, region_mask)
    out = np.empty(len(np.atleast_1d(lams)))
    for k, lam in enumerate(np.atleast_1d(lams)):
        g = rho_a.copy()
        for site in range(na):
            g = _depolarize_site(g, na, site, float(lam))
        out[k] = (1 << na) * float(np.sum(rho_a * g.T))
    return out


def exact_q_lambda_strings(state: DenseState, region_mask: np.ndarray, lams) -> np.ndarray:
    """Brute-force string sum (small regions only), for cross-checks."""
    keep = np.flatnonzero(region_mask)
    na = len(keep)
    if na > 8:
        raise ValueError("string enumeration capped at 8 spins")
    rho_a = reduced_density(state, region_mask)
    st = DenseState(n_spins=na, kind="thermal", rho=rho_a)
    z_of, x_of = label_fields(na)
    w = _popcount(z_of | x_of)
    vals = np.array([pauli_expect(st, int(z), int(x)) ** 2
                     for z, x in zip(z_of, x_of)])
    lams = np.atleast_1d(lams)
    return np.array([float(np.sum(lam ** w * vals)) for lam in lams])


def exact_e_lambda(state: DenseState, region_mask: np.ndarray, lams,
                   eps: float = 1e-6) -> np.ndarray:
    """d ln Q / d lambda by symmetric differences of the closed form."""
    lams = np.atleast_1d(lams)
    lo = np.log(exact_q_lambda(state, region_mask, lams - eps))
    hi = np.log(exact_q_lambda(state, region_mask, lams + eps))
    return (hi - lo) / (2 * eps)


# --------------------------------------------------- simulation-ensemble oracle
#
# The cluster sampler is restricted in two ways that matter for exact
# comparisons on small systems.  First, the slice-zero label can only
# reach part of the 4^n label space: chains conserve the total r_z
# parity (constraint-operator flips touch r_z in pairs), and on the
# torus the plaquette moves generate only the contractible part of the
# x-mask group.  Second, on lattices with a periodic direction the
# number of constraint operators on a given locus can only change by
# two at a time, so the spatial winding parity of their worldlines is
# conserved and the all-odd winding sector is never entered.  The
# missing sector is exactly the partition sum with one coupling's sign
# reversed (a boundary-condition twist), which gives a closed form for
# the distribution actually sampled:
#
#     P(r)  ~  [ Tr(s_r rho s_r rho) + Tr(s_r rho' s_r rho') ]
#              * lam^(weight in region) * [r in reachable sector]
#
# with rho' built from the twisted Hamiltonian.  Open chains have no
# winding sector and no twist term.  The twist weight decays like
# exp(-2 beta (F_twist - F)), so at the low temperatures used for
# production runs the plain conditioned distribution is recovered.

def twisted_hamiltonian(lat: Lattice, h: float) -> sp.csr_matrix:
    """The model Hamiltonian with the sign of one constraint coupling
    reversed (bond 0 on chains, plaquette 0 on the torus)."""
    if lat.kind == "chain":
        H = tfim_hamiltonian(lat, h)
        n = lat.n_spins
        idx = np.arange(1 << n, dtype=np.int64)
        i, j = int(lat.b_members[0, 0]), int(lat.b_members[0, 1])
        si = 1.0 - 2.0 * ((idx >> i) & 1)
        sj = 1.0 - 2.0 * ((idx >> j) & 1)
        return (H + sp.diags(2.0 * si * sj, format="csr")).tocsr()
    H = lgt_hamiltonian(lat, h)
    n = lat.n_spins
    dim = 1 << n
    idx = np.arange(dim, dtype=np.int64)
    mask = 0
    for l in lat.b_members[0]:
        mask |= 1 << int(l)
    flip = sp.csr_matrix((np.full(dim, 2.0), (idx ^ mask, idx)),
                         shape=(dim, dim))
    return (H + flip).tocsr()


def reachable_label_mask(lat: Lattice,
                         confine_mask: np.ndarray = None) -> np.ndarray:
    """Bool mask over the 4^n labels the cluster dynamics can reach
    from the identity configuration.

    One Bell component is toggled site by site (r_x on chains, r_z on
    the torus) and is free on every unfrozen site; the other is toggled
    in whole constraint-locus patterns (bond pairs, plaquette masks)
    and ranges over their GF(2) span.  With ``confine_mask`` the
    exterior is frozen — the weighted sampling modes — so only loci
    lying entirely inside the region contribute to the span."""
    n = lat.n_spins
    region = (1 << n) - 1
    if confine_mask is not None:
        region = mask_of(np.asarray(confine_mask, dtype=bool))
    span = {0}
    for p in range(lat.n_b):
        m = 0
        for t in range(lat.b_size):
            m |= 1 << int(lat.b_members[p, t])
        if (m & ~region) == 0:
            span |= {s ^ m for s in span}
    z_of, x_of = label_fields(n)
    free, grouped = (x_of, z_of) if lat.kind == "chain" else (z_of, x_of)
    ok = np.isin(grouped, np.fromiter(span, dtype=np.int64))
    ok &= (free & ~region) == 0
    return ok


def label_region_weight(n: int, region_mask: np.ndarray = None) -> np.ndarray:
    """Number of non-identity letters of each label inside the region
    (whole system if no mask)."""
    z_of, x_of = label_fields(n)
    sup = z_of | x_of
    if region_mask is not None:
        sup = sup & mask_of(region_mask)
    return _popcount(sup)


def reachable_bell_distribution(lat: Lattice, h: float, beta: float,
                                lam: float = 1.0,
                                region_mask: np.ndarray = None,
                                confined: bool = False) -> np.ndarray:
    """Exact label distribution sampled by the cluster dynamics: the
    conditioned (and, on periodic lattices, winding-projected) version
    of ``thermal_bell_distribution``.  With ``confined`` the exterior
    of the region is frozen, as in the weighted sampling modes.
    Feasible to 8 spins."""
    n = lat.n_spins
    build = tfim_hamiltonian if lat.kind == "chain" else lgt_hamiltonian
    H = np.asarray(build(lat, h).todense())
    w, v = scipy.linalg.eigh(H)
    terms = [(w, v)]
    if lat.kind != "chain" or lat.boundary == "periodic":
        Ht = np.asarray(twisted_hamiltonian(lat, h).todense())
        terms.append(scipy.linalg.eigh(Ht))
    e0 = min(t[0][0] for t in terms)
    out = np.zeros(1 << (2 * n))
    for wk, vk in terms:
        g = np.exp(-beta * (wk - e0))
        zk = g.sum()
        rho = (vk * g) @ vk.T / zk
        st = DenseState(n_spins=n, kind="thermal", rho=rho, beta=beta)
        out = out + zk ** 2 * thermal_bell_distribution(st)
    reach = reachable_label_mask(lat, region_mask if confined else None)
    out = np.where(reach, out, 0.0)
    if lam != 1.0:
        out = out * lam ** label_region_weight(n, region_mask)
    return out / out.sum()


# ------------------------------------------------------------ gauge sector tools

def gauss_star_masks(lat: Lattice) -> np.ndarray:
    masks = np.zeros(lat.L * lat.L, dtype=np.int64)
    for v in range(lat.L * lat.L):
        for l in lat.stars[v]:
            masks[v] |= 1 << int(l)
    return masks


def winding_cut_masks(lat: Lattice) -> tuple[int, int]:
    """Two dual non-contractible cuts: all horizontal links in column 0,
    and all vertical links in row 0.  The Z-products over them commute
    with the gauge Hamiltonian and label its electric winding sectors."""
    L = lat.L
    c1 = 0
    for y in range(L):
        c1 |= 1 << (2 * (y * L + 0))          # H(0, y)
    c2 = 0
    for x in range(L):
        c2 |= 1 << (2 * (0 * L + x) + 1)      # V(x, 0)
    return c1, c2


def z2_sector_states(lat: Lattice) -> tuple[np.ndarray, np.ndarray]:
    """Group all z-basis states of the torus links by their Gauss charge
    pattern.  Returns (sorted state indices, charge code per state) where
    the code packs the star parities of vertices 0..L^2-2 (the last one
    is fixed by the rest)."""
    n = lat.n_spins
    idx = np.arange(1 << n, dtype=np.int64)
    masks = gauss_star_masks(lat)
    code = np.zeros(1 << n, dtype=np.int64)
    for v in range(lat.L * lat.L - 1):
        code |= _bit_parity(idx, int(masks[v])) << v
    order = np.argsort(code, kind="stable")
    return idx[order], code[order]


def sector_hamiltonian(lat: Lattice, h: float, states: np.ndarray) -> np.ndarray:
    """Dense gauge Hamiltonian restricted to one charge sector, in the
    basis of the given (sorted) z-basis states."""
    states = np.sort(states)
    dim = len(states)
    H = np.zeros((dim, dim))
    diag = -h * (lat.n_spins - 2.0 * _popcount(states))
    H[np.arange(dim), np.arange(dim)] = diag
    for p in range(lat.n_b):
        mask = 0
        for l in lat.b_members[p]:
            mask |= 1 << int(l)
        flipped = np.searchsorted(states, states ^ mask)
        H[flipped, np.arange(dim)] -= 1.0
    return H


def charge_free_states(lat: Lattice) -> np.ndarray:
    """Sorted z-basis states with even star parity at every vertex."""
    n = lat.n_spins
    idx = np.arange(1 << n, dtype=np.int64)
    keep = np.ones(1 << n, dtype=bool)
    for m in gauss_star_masks(lat):
        keep &= _bit_parity(idx, int(m)) == 0
    return idx[keep]


def lgt_sector_sums(lat: Lattice, h: float, beta: float, obs_masks: dict[str, int]):
    """Partition function and X-string observables resolved over the
    exactly conserved sectors (Gauss charges x two electric windings).

    For every sector s the conserved-charge projection makes
    Tr_s(e^{-beta H} O) well defined for any X-loop observable O that
    commutes with the charges.  Returns (Z_s array, {name: array of
    Tr_s(e^{-beta H} O)}) with one entry per (charge pattern, t1, t2)
    block, normalized by the global exp(-beta E_min) scale."""
    if lat.n_spins > 18:
        raise ValueError("sector enumeration capped at the 3x3 torus")
    states, code = z2_sector_states(lat)
    c1, c2 = winding_cut_masks(lat)
    boundaries = np.searchsorted(code, np.arange(code[-1] + 2))
    z_list, obs_list = [], {k: [] for k in obs_masks}
    # first pass to find the global ground energy for stable scaling
    e_min = np.inf
    blocks = []
    for c in range(len(boundaries) - 1):
        lo, hi = boundaries[c], boundaries[c + 1]
        if lo == hi:
            continue
        sec = np.sort(states[lo:hi])
        t_code = _bit_parity(sec, c1) | (_bit_parity(sec, c2) << 1)
        for t in range(4):
            sub = sec[t_code == t]
            if len(sub) == 0:
                continue
            blocks.append(sub)
    for sub in blocks:
        w = scipy.linalg.eigvalsh(sector_hamiltonian(lat, h, sub))
        e_min = min(e_min, w[0])
    for sub in blocks:
        Hs = sector_hamiltonian(lat, h, sub)
        w, v = scipy.linalg.eigh(Hs)
        g = np.exp(-beta * (w - e_min))
        z_list.append(float(g.sum()))
        rho = (v * g) @ v.T
        for name, mask in obs_masks.items():
            flipped = np.searchsorted(sub, sub ^ mask)
            if not np.array_equal(sub[flipped], sub ^ mask):
                raise ValueError(f"observable {name} leaves the sector")
            obs_list[name].append(float(rho[np.arange(len(sub)), flipped].sum()))
    return np.array(z_list), {k: np.array(v) for k, v in obs_list.items()}


def lgt_wilson_reference(lat: Lattice, h: float, beta: float, loop_mask: int):
    """Thermal <W>^2 for an X-loop, plus the value conditioned on the
    winding-trivial x-sector that the cluster sampler can actually reach:
    conditioned = sum_s Tr_s(e^{-bH} W)^2 / sum_s Z_s^2."""
    zs, obs = lgt_sector_sums(lat, h, beta, {"w": loop_mask})
    ws = obs["w"]
    full = (ws.sum() / zs.sum()) ** 2
    conditioned = float((ws ** 2).sum() / (zs ** 2).sum())
    return full, conditioned
