"""Sampler checks against exact references on small systems.

Every stochastic test runs a fixed seed, so the numbers below are
reproducible; thresholds leave wide margin over the values these seeds
actually produce.  Label histograms are compared to the exact sampled
distribution (``ed.reachable_bell_distribution``), which includes the
symmetry-sector restriction and, on periodic lattices, the winding
projection onto the twisted-boundary mixture.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst

from bellsse import _kernels, ed
from bellsse.engine import Chain
from bellsse.models import lgt_model, tfim_model


# ----------------------------------------------------------------- helpers

def _collect_labels(chain, n_samples, stride):
    """Strided label histogram (thinning keeps samples weakly correlated)."""
    hist = np.zeros(4 ** chain.model.n_spins, np.int64)
    for _ in range(n_samples):
        for _ in range(stride):
            chain.sweep()
        _kernels.accumulate_label(chain.r_z, chain.r_x, hist)
    return hist


def _chi2_per_dof(hist, probs, min_expected=10.0):
    """Pearson chi-square per dof; cells with small expectation are
    pooled into one tail cell."""
    n_tot = int(hist.sum())
    support = probs > 1e-15
    assert int(hist[~support].sum()) == 0, "counts outside the exact support"
    exp = probs[support] * n_tot
    obs = hist[support].astype(float)
    big = exp >= min_expected
    chi2 = float(np.sum((obs[big] - exp[big]) ** 2 / exp[big]))
    dof = int(big.sum()) - 1
    tail_e, tail_o = float(exp[~big].sum()), float(obs[~big].sum())
    if tail_e >= min_expected:
        chi2 += (tail_o - tail_e) ** 2 / tail_e
        dof += 1
    return chi2 / dof, dof


def _blocked_mean_err(series, n_blocks=60):
    series = np.asarray(series, float)
    m = (series.size // n_blocks) * n_blocks
    blocks = series[:m].reshape(n_blocks, -1).mean(axis=1)
    return float(blocks.mean()), float(blocks.std(ddof=1) / np.sqrt(n_blocks))


def _chain_insertion_transfer(L, h, periodic, twist=False):
    """One-operator transfer matrix on packed labels for an Ising chain.

    Diagonal vertices (weight h per site, 1 per bond) leave the label
    alone; a site vertex needs r_z=0 and toggles r_x, a bond vertex
    needs equal r_x on its ends and toggles both r_z.  With ``twist``
    the wrap-around bond vertex carries weight -1, which turns the
    half-sum of the two matrices into the projector onto even winding.
    """
    dim = 4 ** L
    bonds = [(i, i + 1) for i in range(L - 1)]
    if periodic:
        bonds.append((L - 1, 0))
    T = np.zeros((dim, dim))
    for lab in range(dim):
        T[lab, lab] += h * L + len(bonds)
        for i in range(L):
            if not (lab >> (2 * i)) & 1:
                T[lab ^ (2 << (2 * i)), lab] += h
        for k, (i, j) in enumerate(bonds):
            if ((lab >> (2 * i + 1)) & 1) == ((lab >> (2 * j + 1)) & 1):
                w = -1.0 if (twist and periodic and k == len(bonds) - 1) else 1.0
                T[lab ^ (1 << (2 * i)) ^ (1 << (2 * j)), lab] += w
    return T


def _chain_nbar_reference(L, h, beta, periodic, n_max):
    """<n> in the fixed-size operator-string ensemble, summed exactly
    over the even-r_z-parity sector (and even winding if periodic)."""
    sector = ed.label_parity_z(L) == 0
    mats = [_chain_insertion_transfer(L, h, periodic)]
    if periodic:
        mats.append(_chain_insertion_transfer(L, h, periodic, twist=True))
    a_n = np.zeros(n_max + 1)
    for T in mats:
        V = np.eye(4 ** L)
        for n in range(n_max + 1):
            a_n[n] += float(np.trace(V[np.ix_(sector, sector)]))
            V = T @ V
    logp = np.arange(n_max + 1) * np.log(2 * beta) + np.log(a_n)
    logp -= [sum(np.log(np.arange(1, n + 1))) if n else 0.0
             for n in range(n_max + 1)]
    p = np.exp(logp - logp.max())
    p /= p.sum()
    return float(np.sum(np.arange(n_max + 1) * p))


def _lambda_slope_reference(lat, h, beta, lam, region):
    """Exact d(ln Q)/d(lam) for the confined region-weighted ensemble."""
    p1 = ed.reachable_bell_distribution(lat, h, beta, region_mask=region,
                                        confined=True)
    wt = ed.label_region_weight(lat.n_spins, region)
    q = float(np.sum(p1 * lam ** wt))
    return float(np.sum(p1 * wt * lam ** wt)) / (lam * q)


# ----------------------------------------------- stationary label distribution

def test_open_chain_label_distribution():
    m = tfim_model(3, 0.9, boundary="open")
    ch = Chain(m, 0.4, seed=11)
    ch.equilibrate(2000)
    hist = _collect_labels(ch, 40_000, stride=6)
    probs = ed.reachable_bell_distribution(m.lat, 0.9, 0.4)
    red, dof = _chi2_per_dof(hist, probs)
    assert dof >= 30
    assert red < 1.8


def test_periodic_chain_label_distribution():
    m = tfim_model(3, 0.8, boundary="periodic")
    ch = Chain(m, 0.5, seed=12)
    ch.equilibrate(2000)
    hist = _collect_labels(ch, 40_000, stride=6)
    probs = ed.reachable_bell_distribution(m.lat, 0.8, 0.5)
    red, dof = _chi2_per_dof(hist, probs)
    assert dof >= 30
    assert red < 1.8


def test_small_ring_needs_winding_projection():
    # At L=2, beta=0.6 the twisted term carries ~28% of the weight, so
    # this point distinguishes the projected mixture from the plain
    # conditioned distribution by a wide margin.
    m = tfim_model(2, 1.1, boundary="periodic")
    ch = Chain(m, 0.6, seed=13)
    ch.equilibrate(3000)
    hist = _collect_labels(ch, 40_000, stride=12)
    mixture = ed.reachable_bell_distribution(m.lat, 1.1, 0.6)
    red, _ = _chi2_per_dof(hist, mixture)
    assert red < 1.8

    st = ed.thermal_state(ed.tfim_hamiltonian(m.lat, 1.1), 2, beta=0.6)
    plain = ed.thermal_bell_distribution(st)
    plain = np.where(ed.reachable_label_mask(m.lat), plain, 0.0)
    red_plain, _ = _chi2_per_dof(hist, plain / plain.sum())
    assert red_plain > 5.0


def test_torus_label_distribution():
    m = lgt_model(2, 0.7)
    ch = Chain(m, 0.45, seed=14)
    ch.equilibrate(3000)
    hist = _collect_labels(ch, 50_000, stride=8)
    probs = ed.reachable_bell_distribution(m.lat, 0.7, 0.45)
    red, dof = _chi2_per_dof(hist, probs)
    assert dof > 1000
    assert red < 1.15


# --------------------------------------------------------------- operator count

def test_operator_count_matches_transfer_matrix():
    m = tfim_model(2, 1.1, boundary="periodic")
    ch = Chain(m, 0.6, seed=15)
    ch.equilibrate(3000)
    out = ch.run(150_000)
    nbar, err = _blocked_mean_err(out["n"])
    ref = _chain_nbar_reference(2, 1.1, 0.6, periodic=True, n_max=ch.n_slots)
    assert abs(nbar - ref) < 5 * err
    assert err < 0.02


# ------------------------------------------------------- region-weight ensembles

def test_analytic_weighting_matches_damped_distribution():
    # frozen exterior + lam-weighting: the sampled labels live on the
    # region with the damped conditioned distribution
    region = np.array([True, True, False])
    m = tfim_model(3, 0.9, boundary="open")
    ch = Chain(m, 0.4, seed=16, lam=0.65, mode="analytic", region_mask=region)
    ch.equilibrate(2000)
    hist = _collect_labels(ch, 30_000, stride=6)
    probs = ed.reachable_bell_distribution(m.lat, 0.9, 0.4, lam=0.65,
                                           region_mask=region, confined=True)
    red, _ = _chi2_per_dof(hist, probs)
    assert red < 1.8

    out = ch.run(120_000, wt_region=region)
    slope, err = _blocked_mean_err(out["wt"] / 0.65)
    ref = _lambda_slope_reference(m.lat, 0.9, 0.4, 0.65, region)
    assert abs(slope - ref) < 5 * err


def test_subset_weighting_marginal_and_estimator():
    region = np.array([True, True, False])
    m = tfim_model(3, 0.9, boundary="open")
    lam = 0.65
    ch = Chain(m, 0.4, seed=17, lam=lam, mode="subset", region_mask=region)
    ch.equilibrate(2000)
    hist = _collect_labels(ch, 30_000, stride=6)
    # the subset occupation is auxiliary: the label marginal matches the
    # analytic-mode distribution
    probs = ed.reachable_bell_distribution(m.lat, 0.9, 0.4, lam=lam,
                                           region_mask=region, confined=True)
    red, _ = _chi2_per_dof(hist, probs)
    assert red < 1.8

    out = ch.run(120_000)
    n_a = int(region.sum())
    e1 = out["n_b"] / lam - (n_a - out["n_b"]) / (1.0 - lam)
    slope, err = _blocked_mean_err(e1)
    ref = _lambda_slope_reference(m.lat, 0.9, 0.4, lam, region)
    assert abs(slope - ref) < 5 * err


def test_lambda_weighting_on_torus():
    # region = the four links of one plaquette, so the confined dynamics
    # still has a nontrivial x-move (that plaquette's mask)
    m = lgt_model(2, 0.7)
    region = np.zeros(8, dtype=bool)
    region[m.lat.b_members[0]] = True
    lam = 0.7
    ch = Chain(m, 0.45, seed=18, lam=lam, mode="analytic", region_mask=region)
    ch.equilibrate(3000)
    hist = _collect_labels(ch, 30_000, stride=8)
    probs = ed.reachable_bell_distribution(m.lat, 0.7, 0.45, lam=lam,
                                           region_mask=region, confined=True)
    red, _ = _chi2_per_dof(hist, probs)
    assert red < 1.8

    out = ch.run(120_000, wt_region=region)
    slope, err = _blocked_mean_err(out["wt"] / lam)
    ref = _lambda_slope_reference(m.lat, 0.7, 0.45, lam, region)
    assert abs(slope - ref) < 5 * err


# ------------------------------------------------------------------ swap signs

def test_swap_sign_matches_conditioned_reference():
    # <(-1)^(# iY letters in A)> equals the purity ratio in the sampled
    # (conditioned) ensemble; compare to the same sum over the exact
    # sampled distribution.
    region = np.array([True, True, False])
    m = tfim_model(3, 0.9, boundary="open")
    ch = Chain(m, 0.5, seed=19)
    ch.equilibrate(2000)
    reg = region.astype(np.uint8)
    signs = np.empty(60_000)
    for s in range(signs.size):
        for _ in range(4):
            ch.sweep()
        signs[s] = 1.0 - 2.0 * (int((ch.r_z & ch.r_x & reg).sum()) & 1)
    got, err = _blocked_mean_err(signs)

    probs = ed.reachable_bell_distribution(m.lat, 0.9, 0.5)
    z_of, x_of = ed.label_fields(3)
    sgn = 1 - 2 * (ed._popcount(z_of & x_of & ed.mask_of(region)) & 1)
    ref = float(np.sum(probs * sgn))
    assert abs(got - ref) < 5 * err
    assert err < 0.01


# ------------------------------------------------------------------ invariants

def test_propagation_invariant_all_modes():
    region = np.array([True, False, True])
    cases = [
        Chain(tfim_model(3, 1.0, boundary="periodic"), 0.7, seed=21),
        Chain(tfim_model(3, 1.0, boundary="open"), 0.7, seed=22,
              lam=0.4, mode="analytic", region_mask=region),
        Chain(tfim_model(3, 1.0, boundary="open"), 0.7, seed=23,
              lam=0.4, mode="subset", region_mask=region),
        Chain(lgt_model(2, 0.8), 0.5, seed=24),
    ]
    for ch in cases:
        ch.equilibrate(300)
        for _ in range(10):
            for _ in range(10):
                ch.sweep()
            assert ch.check_propagation()


def test_subset_occupation_covers_support():
    region = np.array([True, True, False, True])
    m = tfim_model(4, 1.0, boundary="open")
    ch = Chain(m, 0.6, seed=25, lam=0.3, mode="subset", region_mask=region)
    ch.equilibrate(200)
    for _ in range(300):
        ch.sweep()
        occupied = ch.in_b.astype(bool)
        letters = (ch.r_z | ch.r_x).astype(bool)
        assert not occupied[~region].any()
        assert (occupied | ~letters)[region].all()


# ------------------------------------------------------------- reproducibility

def test_seed_reproducibility():
    m = tfim_model(3, 0.9, boundary="periodic")
    runs = []
    for _ in range(2):
        ch = Chain(m, 0.5, seed=31)
        ch.equilibrate(500)
        runs.append(ch.run(500)["n"])
    assert np.array_equal(runs[0], runs[1])
    other = Chain(m, 0.5, seed=32)
    other.equilibrate(500)
    assert not np.array_equal(runs[0], other.run(500)["n"])


def test_checkpoint_roundtrip_resumes_identically(tmp_path):
    region = np.array([True, False, True])
    for mode, kwargs in [("plain", {}),
                         ("subset", {"lam": 0.5, "region_mask": region})]:
        ch = Chain(tfim_model(3, 0.8, boundary="open"), 0.6, seed=33,
                   mode=mode, **kwargs)
        ch.equilibrate(400)
        path = tmp_path / f"chk_{mode}.npz"
        ch.save(path)
        resumed = Chain.load(path)
        a = ch.run(400)
        b = resumed.run(400)
        assert np.array_equal(a["n"], b["n"])
        assert np.array_equal(ch.r_z, resumed.r_z)
        assert np.array_equal(ch.r_x, resumed.r_x)
        if mode == "subset":
            assert np.array_equal(a["n_b"], b["n_b"])
            assert np.array_equal(ch.in_b, resumed.in_b)


def test_slot_list_growth():
    ch = Chain(tfim_model(6, 1.0, boundary="open"), 1.5, seed=34, m_init=4)
    assert ch.n_slots == 4
    ch.equilibrate(2000)
    assert ch.n_slots > 4
    out = ch.run(500)
    # measurement runs never grow the list, and the stored n stays valid
    assert int(out["n"].max()) <= ch.n_slots
    assert ch.check_propagation()


# ------------------------------------------------------------------- fuzzing

def _torus_x_span(lat):
    span = {0}
    for p in range(lat.n_b):
        mask = 0
        for l in lat.b_members[p]:
            mask |= 1 << int(l)
        span |= {s ^ mask for s in span}
    return span


@settings(max_examples=25, deadline=None)
@given(hst.data())
def test_random_chain_invariants(data):
    family = data.draw(hst.sampled_from(["open", "periodic", "torus"]))
    h = data.draw(hst.floats(0.2, 1.5))
    beta = data.draw(hst.floats(0.1, 0.8))
    seed = data.draw(hst.integers(0, 2 ** 31 - 1))
    if family == "torus":
        model = lgt_model(data.draw(hst.integers(2, 3)), h)
    else:
        model = tfim_model(data.draw(hst.integers(2, 5)), h, boundary=family)
    n = model.n_spins
    mode = data.draw(hst.sampled_from(["plain", "analytic", "subset"]))
    kwargs = {}
    if mode != "plain":
        sites = data.draw(hst.sets(hst.integers(0, n - 1), min_size=1))
        region = np.zeros(n, dtype=bool)
        region[sorted(sites)] = True
        kwargs = {"lam": data.draw(hst.floats(0.05, 0.95)),
                  "mode": mode, "region_mask": region}
    ch = Chain(model, beta, seed=seed, **kwargs)
    ch.equilibrate(25)
    for _ in range(15):
        ch.sweep()
    assert ch.check_propagation()
    if family == "torus":
        x_mask = int(sum(int(b) << i for i, b in enumerate(ch.r_x)))
        assert x_mask in _torus_x_span(model.lat)
    else:
        assert int(ch.r_z.sum()) % 2 == 0
    if mode == "subset":
        occupied = ch.in_b.astype(bool)
        letters = (ch.r_z | ch.r_x).astype(bool)
        region = kwargs["region_mask"]
        assert not occupied[~region].any()
        assert (occupied | ~letters)[region].all()
        wt = _kernels.region_weight(ch.r_z, ch.r_x,
                                    region.astype(np.uint8))
        assert wt == int(letters[region].sum())
