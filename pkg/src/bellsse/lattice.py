"""Lattice geometry for the two models.

Two layouts are supported:

* a 1D chain of ``L`` spins with open or periodic boundaries, bonds
  connecting nearest neighbours;
* the links of an ``L x L`` square torus, which carry the Ising spins of
  the Z2 gauge theory.  Plaquettes take the role bonds play on the chain.

Torus link indexing: the link leaving vertex ``(x, y)`` in the +x
direction has index ``2*(y*L + x)``, the one leaving in +y direction
``2*(y*L + x) + 1``.  Plaquette ``(x, y)`` is bounded by the links
``H(x,y), V(x+1,y), H(x,y+1), V(x,y)`` (coordinates mod L), and the star
of vertex ``(x, y)`` consists of ``H(x,y), H(x-1,y), V(x,y), V(x,y-1)``.

Everything downstream (operator tables, cluster kernels) consumes plain
integer arrays from these structures, so this module is the only place
that knows about coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPEN = "open"
PERIODIC = "periodic"


@dataclass(frozen=True)
class Lattice:
    """Geometry shared by the models.

    ``n_spins`` counts the quantum degrees of freedom (chain sites, or
    torus links).  ``b_members`` lists the spins touched by each
    "B-locus" -- a bond of the chain or a plaquette of the torus --
    padded with -1 up to four columns.  ``spin_b_adj`` is the reverse
    map: for every spin the (at most two) B-loci it belongs to, again
    padded with -1.
    """

    kind: str                 # "chain" or "torus_links"
    L: int
    boundary: str             # chain only; torus is always periodic
    n_spins: int
    b_members: np.ndarray     # (n_b, 4) int32
    b_size: int               # 2 for bonds, 4 for plaquettes
    spin_b_adj: np.ndarray    # (n_spins, 2) int32
    stars: np.ndarray = field(default=None)  # (L*L, 4) int32, torus only

    @property
    def n_b(self) -> int:
        return self.b_members.shape[0]


@dataclass(frozen=True)
class Region:
    """A subset of spins, with an optional distinguished boundary layer.

    ``mask`` is a boolean array over all spins of the parent lattice.
    For gauge-theory regions, ``boundary_mask`` marks the links of the
    region whose removal disconnects it from the exterior star structure
    (see :func:`square_region`); it is empty for chain regions.
    """

    spins: np.ndarray         # sorted int32 indices
    mask: np.ndarray          # (n_spins,) bool
    boundary_mask: np.ndarray  # (n_spins,) bool
    label: str = ""

    @property
    def size(self) -> int:
        return int(self.mask.sum())

    @property
    def interior_mask(self) -> np.ndarray:
        return self.mask & ~self.boundary_mask


def _region_from_mask(mask, boundary_mask=None, label=""):
    mask = np.asarray(mask, dtype=bool)
    if boundary_mask is None:
        boundary_mask = np.zeros_like(mask)
    return Region(
        spins=np.flatnonzero(mask).astype(np.int32),
        mask=mask,
        boundary_mask=np.asarray(boundary_mask, dtype=bool),
        label=label,
    )


def build_chain(L: int, boundary: str = OPEN) -> Lattice:
    """Nearest-neighbour chain of L sites."""
    if L < 2:
        raise ValueError("need at least two sites")
    if boundary not in (OPEN, PERIODIC):
        raise ValueError(f"unknown boundary {boundary!r}")
    n_b = L - 1 if boundary == OPEN else L
    b = np.full((n_b, 4), -1, dtype=np.int32)
    for k in range(n_b):
        b[k, 0] = k
        b[k, 1] = (k + 1) % L
    adj = np.full((L, 2), -1, dtype=np.int32)
    for k in range(n_b):
        for s in (b[k, 0], b[k, 1]):
            if adj[s, 0] < 0:
                adj[s, 0] = k
            else:
                adj[s, 1] = k
    # keep [left bond, right bond] ordering for interior sites
    for s in range(L):
        if adj[s, 0] >= 0 and adj[s, 1] >= 0 and adj[s, 0] > adj[s, 1]:
            adj[s, 0], adj[s, 1] = adj[s, 1], adj[s, 0]
    return Lattice(kind="chain", L=L, boundary=boundary, n_spins=L,
                   b_members=b, b_size=2, spin_b_adj=adj)


def _h(L, x, y):
    return 2 * ((y % L) * L + (x % L))


def _v(L, x, y):
    return 2 * ((y % L) * L + (x % L)) + 1


def build_torus_links(L: int) -> Lattice:
    """Links of an L x L square torus; spins live on the links."""
    if L < 2:
        raise ValueError("need at least a 2x2 torus")
    n_links = 2 * L * L
    plaq = np.empty((L * L, 4), dtype=np.int32)
    stars = np.empty((L * L, 4), dtype=np.int32)
    for y in range(L):
        for x in range(L):
            p = y * L + x
            plaq[p] = (_h(L, x, y), _v(L, x + 1, y), _h(L, x, y + 1), _v(L, x, y))
            stars[p] = (_h(L, x, y), _h(L, x - 1, y), _v(L, x, y), _v(L, x, y - 1))
    adj = np.full((n_links, 2), -1, dtype=np.int32)
    for p in range(L * L):
        for link in plaq[p]:
            if adj[link, 0] < 0:
                adj[link, 0] = p
            else:
                adj[link, 1] = p
    assert (adj >= 0).all(), "every torus link borders two plaquettes"
    return Lattice(kind="torus_links", L=L, boundary=PERIODIC, n_spins=n_links,
                   b_members=plaq, b_size=4, spin_b_adj=adj, stars=stars)


def dual_cycle_flips(lat: Lattice) -> np.ndarray:
    """Generator masks of the dual-cycle group of the torus: the vertex
    stars plus the two non-contractible cuts (horizontal links of column
    0, vertical links of row 0).

    Every mask crosses each plaquette an even number of times, so
    flipping ``r_z`` on one never changes a plaquette parity at any time
    slice and costs no weight.  The cluster updates change the charge
    and electric-winding sectors only through rare cluster shapes, so
    the sampler tosses a coin per generator each sweep to hop between
    those sectors directly."""
    if lat.kind != "torus_links":
        raise ValueError("dual-cycle flips are defined on the link torus")
    L = lat.L
    out = np.zeros((L * L + 2, lat.n_spins), dtype=np.uint8)
    for v in range(L * L):
        out[v, lat.stars[v]] = 1
    for y in range(L):
        out[L * L, _h(L, 0, y)] = 1
    for x in range(L):
        out[L * L + 1, _v(L, x, 0)] = 1
    return out


# ---------------------------------------------------------------- chain regions

def interval_region(lat: Lattice, start: int, stop: int, label: str = "") -> Region:
    """Sites start..stop-1 of a chain."""
    if lat.kind != "chain":
        raise ValueError("interval_region is for chains")
    mask = np.zeros(lat.n_spins, dtype=bool)
    mask[start:stop] = True
    return _region_from_mask(mask, label=label or f"[{start}:{stop})")


def half_region(lat: Lattice, label: str = "half") -> Region:
    return interval_region(lat, 0, lat.L // 2, label=label)


def mid_interval(lat: Lattice, ell: int, label: str = "") -> Region:
    """Centred interval of even length ell: sites L/2 - ell/2 .. L/2 + ell/2 - 1."""
    if ell % 2 or ell > lat.L:
        raise ValueError("ell must be even and fit in the chain")
    start = lat.L // 2 - ell // 2
    return interval_region(lat, start, start + ell, label=label or f"mid{ell}")


def thirds_regions(lat: Lattice) -> dict[str, Region]:
    """Equal thirds A|B|C of a chain, and the unions entering the
    topological combination S(AB) + S(BC) - S(ABC) - S(B)."""
    if lat.L % 3:
        raise ValueError("chain length must be divisible by 3")
    t = lat.L // 3
    return {
        "AB": interval_region(lat, 0, 2 * t, "AB"),
        "BC": interval_region(lat, t, 3 * t, "BC"),
        "ABC": interval_region(lat, 0, 3 * t, "ABC"),
        "B": interval_region(lat, t, 2 * t, "B"),
    }


# ---------------------------------------------------------------- torus regions

def square_region(lat: Lattice, m: int | None = None, x0: int = 0, y0: int = 0,
                  label: str = "") -> Region:
    """All links inside an m x m block of plaquettes (default m = L/2),
    anchored at vertex (x0, y0), not wrapping around the torus.

    The region consists of the horizontal links H(x,y) with x0 <= x < x0+m,
    y0 <= y <= y0+m and the vertical links V(x,y) with x0 <= x <= x0+m,
    y0 <= y < y0+m, i.e. 2*m*(m+1) links; its perimeter (as induced by the
    vertex stars, see below) has 4*m links, 2*L for the default block.

    ``boundary_mask`` marks the links of the region both of whose end
    vertices have stars not fully contained in the region.  These form the
    outer ring; the complementary interior links are the ones whose
    Bell-basis x-components are constrained by the gauge-symmetrised
    entropy estimator.
    """
    if lat.kind != "torus_links":
        raise ValueError("square_region is for the torus")
    L = lat.L
    if m is None:
        m = L // 2
    if not 1 <= m < L:
        raise ValueError("region must be smaller than the torus")
    mask = np.zeros(lat.n_spins, dtype=bool)
    for dy in range(m + 1):
        for dx in range(m):
            mask[_h(L, x0 + dx, y0 + dy)] = True
    for dy in range(m):
        for dx in range(m + 1):
            mask[_v(L, x0 + dx, y0 + dy)] = True

    # a vertex is "internal" if all four star links lie inside the region
    internal_vertex = np.zeros(L * L, dtype=bool)
    for vtx in range(L * L):
        internal_vertex[vtx] = mask[lat.stars[vtx]].all()

    boundary = np.zeros(lat.n_spins, dtype=bool)
    for link in np.flatnonzero(mask):
        va, vb = link_vertices(lat, int(link))
        if not internal_vertex[va] and not internal_vertex[vb]:
            boundary[link] = True
    return _region_from_mask(mask, boundary, label=label or f"square{m}")


def link_vertices(lat: Lattice, link: int) -> tuple[int, int]:
    """End vertices of a torus link."""
    L = lat.L
    cell, horiz = divmod(link, 2)
    y, x = divmod(cell, L)
    if horiz == 0:  # even index = horizontal
        return cell, y * L + (x + 1) % L
    return cell, ((y + 1) % L) * L + x


def translate_links(lat: Lattice, mask: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Image of a link mask under the torus translation by (dx, dy)."""
    L = lat.L
    out = np.zeros_like(mask)
    for link in np.flatnonzero(mask):
        cell, horiz = divmod(int(link), 2)
        y, x = divmod(cell, L)
        out[2 * (((y + dy) % L) * L + (x + dx) % L) + horiz] = True
    return out


def translated_regions(lat: Lattice, region: Region) -> list[Region]:
    """All L*L torus translates of a region (for symmetry averaging)."""
    out = []
    for dy in range(lat.L):
        for dx in range(lat.L):
            mask = translate_links(lat, region.mask, dx, dy)
            bmask = translate_links(lat, region.boundary_mask, dx, dy)
            out.append(Region(spins=np.flatnonzero(mask).astype(np.int32),
                              mask=mask, boundary_mask=bmask,
                              label=f"{region.label}+({dx},{dy})"))
    return out


def wilson_loop_links(lat: Lattice, w: int, h: int, x0: int = 0, y0: int = 0) -> np.ndarray:
    """Link mask of the boundary of a w x h rectangle of plaquettes.

    The product of sigma-x over these links is the Wilson loop; its
    boundary has perimeter 2*(w+h) links and encloses area w*h."""
    if lat.kind != "torus_links":
        raise ValueError("wilson loops live on the torus")
    if w >= lat.L or h >= lat.L:
        raise ValueError("loop must not wrap the torus")
    L = lat.L
    mask = np.zeros(lat.n_spins, dtype=bool)
    for dx in range(w):
        mask[_h(L, x0 + dx, y0)] = True
        mask[_h(L, x0 + dx, y0 + h)] = True
    for dy in range(h):
        mask[_v(L, x0, y0 + dy)] = True
        mask[_v(L, x0 + w, y0 + dy)] = True
    return mask


def plaquette_boundaries_basis(lat: Lattice) -> np.ndarray:
    """Boolean matrix whose rows are the link sets of all plaquettes.
    The row space over GF(2) is the group of contractible x-loops; used
    by the exact-reference tooling to enumerate reachable sectors."""
    n = lat.b_members.shape[0]
    out = np.zeros((n, lat.n_spins), dtype=bool)
    for p in range(n):
        out[p, lat.b_members[p]] = True
    return out
