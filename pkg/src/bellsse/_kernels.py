"""Numba kernels for the series-expansion sampler.

The engine stores a fixed-length list of expansion slots (``op_kind``,
``op_locus``) plus the two Bell component arrays of the time-slice-0
configuration.  Kernels receive the component arrays in *toggle order*
``(c_a, c_b)``: ``c_a`` is the component flipped by off-diagonal
A-operators, ``c_b`` the one flipped by off-diagonal B-operators (see
``models.ModelSpec.components``), which makes every routine here work
unchanged for both models.

Update scheme per sweep:

1. ``diagonal_update`` exchanges null slots with diagonal operators.
   All diagonal operators are identities, so this needs no state.
2. ``site_cluster_update`` builds clusters over the spin worldlines and
   flips ``c_a`` on them, trading diagonal and off-diagonal A-operators.
3. ``dual_cluster_update`` does the mirror-image move with the bond /
   plaquette loci as cluster variables, flipping ``c_b``.

Both cluster kernels share the same skeleton: scan the slots building a
doubly linked leg list per variable (with branch groups that force legs
of constraint operators into a common cluster), label clusters by
depth-first search, then flip clusters *sequentially* with probability
``0.5 * min(1, lam**dwt)``.  Sequential processing matters: in dual mode
two clusters may toggle the same spin, so the weight change of a flip
depends on flips already applied.  Variables not touched by any operator
get a free coin through the same loop (a fresh singleton cluster).

``free_mask``/``wt_mask`` support the reweighted ensembles used for the
entropy integration: clusters whose toggles would touch a non-free spin
are frozen, and ``dwt`` counts the change in the number of non-identity
Bell letters on the masked spins.  A plain simulation passes
``lam = 1``, all spins free, empty weight mask.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ._rng import rng_below, rng_uniform
from .models import (OP_DIAG_A, OP_DIAG_B, OP_NULL, OP_OFFDIAG_A,
                     OP_OFFDIAG_B, PLAQUETTE_PAIRINGS)

# ------------------------------------------------------------------ diagonal


@njit(cache=True)
def diagonal_update(op_kind, op_locus, n, n_a, n_b, coupling_a, two_beta,
                    rstate):
    """One pass exchanging null slots and diagonal operators.

    Acceptance only involves the fill fraction and the coupling of the
    proposed locus (drawn uniformly from the combined A+B pool), never
    the spin state.  Returns the updated operator count."""
    M = op_kind.size
    K = n_a + n_b
    for p in range(M):
        k = op_kind[p]
        if k == OP_NULL:
            u = rng_below(rstate, K)
            c = coupling_a if u < n_a else 1.0
            if rng_uniform(rstate) * (M - n) < two_beta * c * K:
                if u < n_a:
                    op_kind[p] = OP_DIAG_A
                    op_locus[p] = u
                else:
                    op_kind[p] = OP_DIAG_B
                    op_locus[p] = u - n_a
                n += 1
        elif k == OP_DIAG_A or k == OP_DIAG_B:
            c = coupling_a if k == OP_DIAG_A else 1.0
            if rng_uniform(rstate) * (two_beta * c * K) < M - n + 1:
                op_kind[p] = OP_NULL
                op_locus[p] = -1
                n -= 1
    return n


# ------------------------------------------------------------- leg plumbing


@njit(cache=True, inline="always")
def _attach(link, first_leg, last_open, v, below, above):
    """Hook an operator's (below, above) leg pair into variable v's
    worldline list."""
    lo = last_open[v]
    if lo >= 0:
        link[below] = lo
        link[lo] = below
    else:
        first_leg[v] = below
    last_open[v] = above


@njit(cache=True, inline="always")
def _ring4(gnext, l0, l1, l2, l3):
    gnext[l0] = l1
    gnext[l1] = l2
    gnext[l2] = l3
    gnext[l3] = l0


@njit(cache=True)
def _label_clusters(link, gnext, nl):
    """Connected components of the leg graph (worldline links plus group
    rings).  Returns per-leg labels and the component count."""
    cl = np.full(nl, -1, np.int32)
    stack = np.empty(nl, np.int32)
    nc = 0
    for start in range(nl):
        if cl[start] >= 0:
            continue
        cl[start] = nc
        stack[0] = start
        sp = 1
        while sp > 0:
            sp -= 1
            l = stack[sp]
            l2 = link[l]
            if cl[l2] < 0:
                cl[l2] = nc
                stack[sp] = l2
                sp += 1
            l3 = gnext[l]
            if cl[l3] < 0:
                cl[l3] = nc
                stack[sp] = l3
                sp += 1
        nc += 1
    return cl, nc


@njit(cache=True)
def _bucket(ne, ent_c, ent_j, nc):
    """Counting sort of (cluster, spin) toggle entries into per-cluster
    contiguous lists."""
    off = np.zeros(nc + 1, np.int32)
    for e in range(ne):
        off[ent_c[e] + 1] += 1
    for c in range(nc):
        off[c + 1] += off[c]
    lst = np.empty(ne, np.int32)
    cur = off[:nc].copy()
    for e in range(ne):
        c = ent_c[e]
        lst[cur[c]] = ent_j[e]
        cur[c] += 1
    return off, lst


@njit(cache=True)
def _flip_clusters(nc, frozen, off, lst, comp_t, comp_o, lam, wt_mask,
                   rstate):
    """Sequential Metropolis pass over the clusters, in label order.

    ``comp_t`` is the component a flip toggles (on the cluster's spin
    list), ``comp_o`` the spectator component; together they determine
    how many masked spins change between identity and non-identity
    letters, which sets the ``lam**dwt`` acceptance factor.  Toggles are
    applied immediately so later clusters see the updated state."""
    flipped = np.zeros(nc, np.uint8)
    for c in range(nc):
        if frozen[c]:
            continue
        p = 0.5
        if lam != 1.0:
            dwt = 0
            for e in range(off[c], off[c + 1]):
                j = lst[e]
                if wt_mask[j] != 0 and comp_o[j] == 0:
                    dwt += 1 if comp_t[j] == 0 else -1
            w = lam ** np.float64(dwt)
            if w < 1.0:
                p = 0.5 * w
        if rng_uniform(rstate) < p:
            flipped[c] = 1
            for e in range(off[c], off[c + 1]):
                comp_t[lst[e]] ^= 1
    return flipped


# --------------------------------------------------------------- site mode


@njit(cache=True)
def site_cluster_update(op_kind, op_locus, c_a, c_b, b_members, b_size,
                        lam, wt_mask, free_mask, rstate):
    """Cluster update over spin worldlines; flips ``c_a``.

    Cluster terminators ("targets") are off-diagonal A-operators and
    those diagonal A-operators whose slot state allows the swap
    (``c_b == 0`` there); flipping exactly one side of a target swaps it
    with its partner kind.  Off-diagonal B-operators are branches: their
    legs are ringed together in pairs of spins so that any flip
    preserves the parity constraint, which for four-spin loci requires a
    fresh random split into two pairs per occurrence.  Pinned diagonal
    A-operators and all diagonal B-operators are transparent."""
    M = op_kind.size
    ns = c_a.size
    nlc = 0
    for p in range(M):
        k = op_kind[p]
        if k == OP_DIAG_A or k == OP_OFFDIAG_A:
            nlc += 2
        elif k == OP_OFFDIAG_B:
            nlc += 2 * b_size
    link = np.empty(nlc, np.int32)
    gnext = np.empty(nlc, np.int32)
    leg_slot = np.empty(nlc, np.int32)
    first_leg = np.full(ns, -1, np.int32)
    last_open = np.full(ns, -1, np.int32)
    has_op = np.zeros(ns, np.uint8)
    scr_b = c_b.copy()
    nl = 0
    for p in range(M):
        k = op_kind[p]
        if k == OP_NULL:
            continue
        loc = op_locus[p]
        if k == OP_DIAG_A or k == OP_OFFDIAG_A:
            has_op[loc] = 1
            if k == OP_DIAG_A and scr_b[loc] != 0:
                continue  # pinned: worldline passes straight through
            below = nl
            above = nl + 1
            nl += 2
            leg_slot[below] = p
            leg_slot[above] = p
            gnext[below] = below
            gnext[above] = above
            _attach(link, first_leg, last_open, loc, below, above)
        elif k == OP_DIAG_B:
            for t in range(b_size):
                has_op[b_members[loc, t]] = 1
        else:  # OP_OFFDIAG_B
            base = nl
            for t in range(b_size):
                j = b_members[loc, t]
                has_op[j] = 1
                below = nl
                above = nl + 1
                nl += 2
                leg_slot[below] = p
                leg_slot[above] = p
                _attach(link, first_leg, last_open, j, below, above)
                scr_b[j] ^= 1
            if b_size == 2:
                _ring4(gnext, base, base + 1, base + 2, base + 3)
            else:
                pr = rng_below(rstate, 3)
                a0 = base + 2 * PLAQUETTE_PAIRINGS[pr, 0]
                a1 = base + 2 * PLAQUETTE_PAIRINGS[pr, 1]
                b0 = base + 2 * PLAQUETTE_PAIRINGS[pr, 2]
                b1 = base + 2 * PLAQUETTE_PAIRINGS[pr, 3]
                _ring4(gnext, a0, a0 + 1, a1, a1 + 1)
                _ring4(gnext, b0, b0 + 1, b1, b1 + 1)
    for v in range(ns):
        fl = first_leg[v]
        if fl >= 0:
            lo = last_open[v]
            link[fl] = lo
            link[lo] = fl
    cl, nc = _label_clusters(link[:nl], gnext[:nl], nl)

    # slice-0 owner of every spin: its worldline cluster, a fresh coin
    # cluster if nothing touches it, or none (pinned by transparent ops)
    spin_cl = np.full(ns, -1, np.int32)
    nct = nc
    for v in range(ns):
        if first_leg[v] >= 0:
            spin_cl[v] = cl[first_leg[v]]
        elif has_op[v] == 0:
            spin_cl[v] = nct
            nct += 1
    ent_c = np.empty(ns, np.int32)
    ent_j = np.empty(ns, np.int32)
    ne = 0
    for v in range(ns):
        if spin_cl[v] >= 0:
            ent_c[ne] = spin_cl[v]
            ent_j[ne] = v
            ne += 1
    off, lst = _bucket(ne, ent_c, ent_j, nct)
    frozen = np.zeros(nct, np.uint8)
    for e in range(ne):
        if free_mask[ent_j[e]] == 0:
            frozen[ent_c[e]] = 1
    flipped = _flip_clusters(nct, frozen, off, lst, c_a, c_b, lam, wt_mask,
                             rstate)

    parity = np.zeros(M, np.uint8)
    for l in range(nl):
        if flipped[cl[l]]:
            parity[leg_slot[l]] ^= 1
    for p in range(M):
        if parity[p]:
            k = op_kind[p]
            if k == OP_DIAG_A:
                op_kind[p] = OP_OFFDIAG_A
            elif k == OP_OFFDIAG_A:
                op_kind[p] = OP_DIAG_A


# --------------------------------------------------------------- dual mode


@njit(cache=True)
def dual_cluster_update(op_kind, op_locus, c_a, c_b, b_members, b_size,
                        spin_b_adj, n_b, lam, wt_mask, free_mask, rstate):
    """Cluster update over bond/plaquette worldlines; flips ``c_b``.

    Targets are off-diagonal B-operators and swappable diagonal ones
    (member ``c_a`` parity even at the slot).  Off-diagonal A-operators
    branch: their legs ring together the worldlines of the two loci
    flanking the operator's spin, so both flip as one and the spin's
    ``c_b`` (toggled once per flanking flip) stays zero there.  At an
    open chain end one flank is missing and the ring poisons its
    cluster, which is then never flipped.  On the new slice-0 state a
    spin toggles when exactly one of its flanking loci flipped; the
    sequential flip loop realises that by toggling every member of each
    flipped locus, letting shared spins cancel pairwise."""
    M = op_kind.size
    ns = c_a.size
    nlc = 0
    for p in range(M):
        k = op_kind[p]
        if k == OP_DIAG_B or k == OP_OFFDIAG_B:
            nlc += 2
        elif k == OP_OFFDIAG_A:
            nlc += 4
    link = np.empty(nlc, np.int32)
    gnext = np.empty(nlc, np.int32)
    leg_slot = np.empty(nlc, np.int32)
    leg_poison = np.zeros(nlc, np.uint8)
    first_leg = np.full(n_b, -1, np.int32)
    last_open = np.full(n_b, -1, np.int32)
    has_op = np.zeros(n_b, np.uint8)
    scr_a = c_a.copy()
    nl = 0
    for p in range(M):
        k = op_kind[p]
        if k == OP_NULL:
            continue
        loc = op_locus[p]
        if k == OP_DIAG_B or k == OP_OFFDIAG_B:
            has_op[loc] = 1
            if k == OP_DIAG_B:
                x = np.uint8(0)
                for t in range(b_size):
                    x ^= scr_a[b_members[loc, t]]
                if x != 0:
                    continue  # pinned: worldline passes straight through
            below = nl
            above = nl + 1
            nl += 2
            leg_slot[below] = p
            leg_slot[above] = p
            gnext[below] = below
            gnext[above] = above
            _attach(link, first_leg, last_open, loc, below, above)
        elif k == OP_OFFDIAG_A:
            v0 = spin_b_adj[loc, 0]
            v1 = spin_b_adj[loc, 1]
            base = nl
            if v0 >= 0:
                below = nl
                above = nl + 1
                nl += 2
                has_op[v0] = 1
                leg_slot[below] = p
                leg_slot[above] = p
                _attach(link, first_leg, last_open, v0, below, above)
            if v1 >= 0:
                below = nl
                above = nl + 1
                nl += 2
                has_op[v1] = 1
                leg_slot[below] = p
                leg_slot[above] = p
                _attach(link, first_leg, last_open, v1, below, above)
            if nl - base == 4:
                _ring4(gnext, base, base + 1, base + 2, base + 3)
            elif nl - base == 2:
                # chain end: flipping the lone flank would violate the
                # operator's constraint, so its whole cluster is frozen
                gnext[base] = base + 1
                gnext[base + 1] = base
                leg_poison[base] = 1
                leg_poison[base + 1] = 1
            scr_a[loc] ^= 1
        else:  # OP_DIAG_A: transparent identity, but pins the flanks
            v0 = spin_b_adj[loc, 0]
            v1 = spin_b_adj[loc, 1]
            if v0 >= 0:
                has_op[v0] = 1
            if v1 >= 0:
                has_op[v1] = 1
    for v in range(n_b):
        fl = first_leg[v]
        if fl >= 0:
            lo = last_open[v]
            link[fl] = lo
            link[lo] = fl
    cl, nc = _label_clusters(link[:nl], gnext[:nl], nl)

    loc_cl = np.full(n_b, -1, np.int32)
    nct = nc
    for v in range(n_b):
        if first_leg[v] >= 0:
            loc_cl[v] = cl[first_leg[v]]
        elif has_op[v] == 0:
            loc_cl[v] = nct
            nct += 1
    frozen = np.zeros(nct, np.uint8)
    for l in range(nl):
        if leg_poison[l]:
            frozen[cl[l]] = 1

    # a spin belongs to a cluster's toggle list when exactly one of its
    # flanking loci lives in that cluster at slice 0
    ent_c = np.empty(2 * ns, np.int32)
    ent_j = np.empty(2 * ns, np.int32)
    ne = 0
    for j in range(ns):
        v0 = spin_b_adj[j, 0]
        v1 = spin_b_adj[j, 1]
        c0 = np.int32(-1)
        c1 = np.int32(-1)
        if v0 >= 0:
            c0 = loc_cl[v0]
        if v1 >= 0:
            c1 = loc_cl[v1]
        if c0 == c1:
            continue
        if c0 >= 0:
            ent_c[ne] = c0
            ent_j[ne] = j
            ne += 1
        if c1 >= 0:
            ent_c[ne] = c1
            ent_j[ne] = j
            ne += 1
    off, lst = _bucket(ne, ent_c, ent_j, nct)
    for e in range(ne):
        if free_mask[ent_j[e]] == 0:
            frozen[ent_c[e]] = 1
    flipped = _flip_clusters(nct, frozen, off, lst, c_b, c_a, lam, wt_mask,
                             rstate)

    parity = np.zeros(M, np.uint8)
    for l in range(nl):
        if flipped[cl[l]]:
            parity[leg_slot[l]] ^= 1
    for p in range(M):
        if parity[p]:
            k = op_kind[p]
            if k == OP_DIAG_B:
                op_kind[p] = OP_OFFDIAG_B
            elif k == OP_OFFDIAG_B:
                op_kind[p] = OP_DIAG_B


# ----------------------------------------------------------- small moves


@njit(cache=True)
def maybe_flip_all(comp, rstate):
    """Global flip of one component with probability 1/2 (spin-flip
    symmetry of the chain model).  Returns 1 if flipped."""
    if rng_uniform(rstate) < 0.5:
        for i in range(comp.size):
            comp[i] ^= 1
        return 1
    return 0


@njit(cache=True)
def maybe_flip_masks(comp, masks, rstate):
    """Flip ``comp`` on each mask row independently with probability 1/2
    (weight-neutral dual-cycle moves of the gauge model)."""
    for g in range(masks.shape[0]):
        if rng_uniform(rstate) < 0.5:
            for i in range(comp.size):
                comp[i] ^= masks[g, i]


@njit(cache=True)
def subset_pass(region_sites, in_b, c_a, c_b, lam, rstate):
    """Resample the free subset inside the entangling region.

    Joint-ensemble weights: each region spin contributes ``lam`` when in
    the subset and ``1 - lam`` otherwise, and spins outside the subset
    must carry the identity letter.  Only identity-letter spins move."""
    p_add = 1.0
    if lam < 0.5:
        p_add = lam / (1.0 - lam)
    p_rem = 1.0
    if lam > 0.5:
        p_rem = (1.0 - lam) / lam
    for t in range(region_sites.size):
        j = region_sites[t]
        if c_a[j] == 0 and c_b[j] == 0:
            if in_b[j] != 0:
                if rng_uniform(rstate) < p_rem:
                    in_b[j] = 0
            else:
                if rng_uniform(rstate) < p_add:
                    in_b[j] = 1


# ------------------------------------------------------------ measurement


@njit(cache=True)
def measure_values(r_z, r_x, copy_off, z_off, z_idx, x_off, x_idx, y_off,
                   y_idx, p_off, p_idx, out):
    """Evaluate packed observables on the slice-0 configuration.

    Each observable averages over a run of copies (symmetry translates);
    a copy is 0 if any of its projector sites carries a nonzero
    x-component, otherwise a sign counting z-, x- and y-letters on its
    three index lists."""
    n_obs = copy_off.size - 1
    for o in range(n_obs):
        acc = 0.0
        lo = copy_off[o]
        hi = copy_off[o + 1]
        for c in range(lo, hi):
            alive = True
            for t in range(p_off[c], p_off[c + 1]):
                if r_x[p_idx[t]] != 0:
                    alive = False
                    break
            if not alive:
                continue
            par = np.uint8(0)
            for t in range(z_off[c], z_off[c + 1]):
                par ^= r_z[z_idx[t]]
            for t in range(x_off[c], x_off[c + 1]):
                par ^= r_x[x_idx[t]]
            for t in range(y_off[c], y_off[c + 1]):
                par ^= r_z[y_idx[t]] & r_x[y_idx[t]]
            acc += -1.0 if par else 1.0
        out[o] = acc / (hi - lo)


@njit(cache=True)
def region_weight(r_z, r_x, mask):
    """Number of non-identity Bell letters on the masked spins."""
    w = 0
    for i in range(r_z.size):
        if mask[i] != 0 and (r_z[i] | r_x[i]) != 0:
            w += 1
    return w


@njit(cache=True)
def accumulate_label(r_z, r_x, hist):
    """Histogram the full configuration label (base-4 digits
    ``r_z + 2 r_x``, site 0 least significant)."""
    lab = 0
    for i in range(r_z.size - 1, -1, -1):
        lab = 4 * lab + r_z[i] + 2 * r_x[i]
    hist[lab] += 1


@njit(cache=True)
def check_propagation(op_kind, op_locus, c_a, c_b, b_members, b_size):
    """Invariant check: propagating slice 0 through the operator list
    must satisfy every off-diagonal constraint and close periodically."""
    a = c_a.copy()
    b = c_b.copy()
    for p in range(op_kind.size):
        k = op_kind[p]
        if k == OP_OFFDIAG_A:
            loc = op_locus[p]
            if b[loc] != 0:
                return False
            a[loc] ^= 1
        elif k == OP_OFFDIAG_B:
            loc = op_locus[p]
            x = np.uint8(0)
            for t in range(b_size):
                x ^= a[b_members[loc, t]]
            if x != 0:
                return False
            for t in range(b_size):
                b[b_members[loc, t]] ^= 1
    for i in range(a.size):
        if a[i] != c_a[i] or b[i] != c_b[i]:
            return False
    return True
