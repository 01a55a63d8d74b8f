import numpy as np
import pytest

from bellsse import lattice as lt


def test_chain_open_bonds():
    lat = lt.build_chain(6, lt.OPEN)
    assert lat.n_spins == 6 and lat.n_b == 5
    assert lat.b_members[0, 0] == 0 and lat.b_members[0, 1] == 1
    assert (lat.b_members[:, 2:] == -1).all()
    # end sites touch one bond, interior two
    assert lat.spin_b_adj[0].tolist() == [0, -1]
    assert lat.spin_b_adj[5].tolist() == [4, -1]
    assert lat.spin_b_adj[3].tolist() == [2, 3]


def test_chain_periodic_bonds():
    lat = lt.build_chain(6, lt.PERIODIC)
    assert lat.n_b == 6
    assert lat.b_members[5].tolist()[:2] == [5, 0]
    adj = lat.spin_b_adj
    assert (adj >= 0).all()
    # every site appears in exactly two bonds
    counts = np.zeros(6, int)
    for k in range(6):
        counts[lat.b_members[k, 0]] += 1
        counts[lat.b_members[k, 1]] += 1
    assert (counts == 2).all()


def test_torus_links_incidence():
    lat = lt.build_torus_links(4)
    assert lat.n_spins == 32 and lat.n_b == 16
    # every link is in exactly two plaquettes and two stars
    pc = np.zeros(32, int)
    sc = np.zeros(32, int)
    for p in range(16):
        for l in lat.b_members[p]:
            pc[l] += 1
        for l in lat.stars[p]:
            sc[l] += 1
    assert (pc == 2).all() and (sc == 2).all()
    # plaquette and star of the same cell share exactly two links
    for c in range(16):
        assert len(set(lat.b_members[c]) & set(lat.stars[c])) == 2


def test_square_region_counts():
    # |A| = 2m(m+1), |boundary| = 4m for the non-wrapping m x m block
    for L in (2, 4, 6, 8):
        lat = lt.build_torus_links(L)
        m = L // 2
        reg = lt.square_region(lat)
        assert reg.size == 2 * m * (m + 1)
        assert int(reg.boundary_mask.sum()) == 4 * m
        assert (reg.boundary_mask & ~reg.mask).sum() == 0


def test_square_region_interior_l4():
    lat = lt.build_torus_links(4)
    reg = lt.square_region(lat)
    # the four links of the single fully-internal vertex (1,1)
    interior = np.flatnonzero(reg.interior_mask)
    star_11 = set(int(x) for x in lat.stars[1 * 4 + 1])
    assert set(interior.tolist()) == star_11


def test_translate_region_preserves_shape():
    lat = lt.build_torus_links(4)
    reg = lt.square_region(lat)
    regs = lt.translated_regions(lat, reg)
    assert len(regs) == 16
    sizes = {r.size for r in regs}
    bsizes = {int(r.boundary_mask.sum()) for r in regs}
    assert sizes == {reg.size} and bsizes == {int(reg.boundary_mask.sum())}
    # translating by a full period is the identity
    back = lt.translate_links(lat, reg.mask, 4, 4)
    assert (back == reg.mask).all()


def test_wilson_loop_perimeter():
    lat = lt.build_torus_links(8)
    for w, h in [(1, 1), (2, 3), (4, 4)]:
        mask = lt.wilson_loop_links(lat, w, h, 1, 2)
        assert int(mask.sum()) == 2 * (w + h)
    # a 1x1 loop is a plaquette
    m = lt.wilson_loop_links(lat, 1, 1, 2, 2)
    assert set(np.flatnonzero(m).tolist()) == set(int(x) for x in lat.b_members[2 * 8 + 2])


def test_chain_regions():
    lat = lt.build_chain(12)
    assert lt.half_region(lat).spins.tolist() == list(range(6))
    assert lt.mid_interval(lat, 4).spins.tolist() == [4, 5, 6, 7]
    thirds = lt.thirds_regions(lt.build_chain(24))
    assert thirds["AB"].size == 16 and thirds["B"].size == 8
    assert thirds["ABC"].size == 24
    with pytest.raises(ValueError):
        lt.thirds_regions(lt.build_chain(10))


def test_plaquette_boundary_space():
    lat = lt.build_torus_links(3)
    basis = lt.plaquette_boundaries_basis(lat).astype(np.uint8)
    # GF(2) rank is L^2 - 1: the product of all plaquettes is trivial
    mat = basis.copy()
    rank = 0
    for col in range(mat.shape[1]):
        piv = None
        for r in range(rank, mat.shape[0]):
            if mat[r, col]:
                piv = r
                break
        if piv is None:
            continue
        mat[[rank, piv]] = mat[[piv, rank]]
        for r in range(mat.shape[0]):
            if r != rank and mat[r, col]:
                mat[r] ^= mat[rank]
        rank += 1
    assert rank == 3 * 3 - 1
