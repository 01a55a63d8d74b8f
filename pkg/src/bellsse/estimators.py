"""Measurement layer over the slice-0 configuration.

Everything measurable here is a diagonal function of the slice-0 Pauli
string.  A :class:`MeasurementPlan` collects observables before the run
and flattens them into the index arrays the measurement kernel consumes;
:meth:`Chain.run` then writes one row of values per sweep.  An
observable owns one or more *copies* -- symmetry translates evaluated
together and averaged on the spot -- and every copy reduces to three
sign lists and one projector list:

    value = 0   if any projector site has r_x != 0, else
            (-1)^( sum r_z[z_idx] + sum r_x[x_idx] + sum (r_z r_x)[y_idx] )

The standard recipes, all instances of this shape:

* squared Pauli expectation of a string ``s``: ``z_idx`` are the sites
  where ``s`` acts with X or Y, ``x_idx`` those with Z or Y.  The mean
  of the sign estimates ``<s>^2`` at the simulated temperature.
* swap of a region ``A``: ``y_idx = A``.  The mean is the purity of the
  reduced state, and ``-ln`` of it the second Renyi entropy.
* gauge-symmetrised swap (gauge model only): projector on the boundary
  links of ``A``, ``y_idx`` on the interior links.  The projector keeps
  exactly the configurations whose electric strings do not pierce the
  region boundary.  The mean is the purity of the reduced state with
  its boundary links dephased in the electric basis -- the
  gauge-invariant purity, in which coherences between boundary flux
  sectors carry no weight.  Dropping those coherences can only lower
  the purity, so this entropy upper-bounds the plain one; the two
  coincide when the reduced state is already flux-diagonal.
* Wilson loop, an x-string: ``z_idx`` = the loop links; the mean is
  ``|<W>|^2``.

Post-processing lives here too: ``-ln`` estimates with jackknife
errors, the four-region topological combination, and the operator-count
energy diagnostic.  Binning defaults come from :mod:`bellsse.stats`.
"""

from __future__ import annotations

import csv

import numpy as np

from . import stats
from .bellstate import PauliString
from .engine import energy_offset
from .errors import EstimatorExhausted
from .lattice import Region, translate_links
from .models import Z2_LGT, ModelSpec

KIND_PAULI_SQ = "pauli_sq"
KIND_SWAP = "swap"
KIND_SWAP_GAUGE = "swap_gauge"
KIND_WILSON = "wilson"

_IDX = np.int64


def _as_mask(region, n: int) -> np.ndarray:
    mask = region.mask if isinstance(region, Region) else np.asarray(region)
    mask = mask.astype(bool)
    if mask.shape != (n,):
        raise ValueError(f"mask shape {mask.shape} != ({n},)")
    return mask


def _idx(mask_or_sites) -> np.ndarray:
    a = np.asarray(mask_or_sites)
    if a.dtype == bool or a.dtype == np.uint8:
        return np.flatnonzero(a).astype(_IDX)
    return a.astype(_IDX)


class MeasurementPlan:
    """Packed observable set for one model.

    Build one per run, ``add_*`` the observables, hand it to
    :meth:`Chain.run`.  Columns of the returned value matrix follow the
    addition order; :meth:`series` pulls one out by name.
    """

    def __init__(self, model: ModelSpec):
        self.model = model
        self.names: list[str] = []
        self.kinds: list[str] = []
        self._copies: list[list[tuple]] = []   # per obs: [(z,x,y,p), ...]
        self._packed = None

    # ------------------------------------------------------------- building

    def _add(self, name: str, kind: str, copies: list[tuple]) -> str:
        if name in self.names:
            raise ValueError(f"duplicate observable name {name!r}")
        if not copies:
            raise ValueError(f"observable {name!r} has no copies")
        self.names.append(name)
        self.kinds.append(kind)
        self._copies.append(copies)
        self._packed = None
        return name

    def _translates(self, mask: np.ndarray, translations) -> list[np.ndarray]:
        """The symmetry copies of a spin mask.  ``translations=None``
        means the lattice default: every torus translate, nothing on
        chains."""
        lat = self.model.lat
        if translations is None:
            translations = lat.kind == "torus_links"
        if not translations:
            return [mask]
        if lat.kind == "torus_links":
            return [translate_links(lat, mask, dx, dy)
                    for dy in range(lat.L) for dx in range(lat.L)]
        if lat.boundary != "periodic":
            raise ValueError("translation averaging needs a periodic lattice")
        return [np.roll(mask, d) for d in range(lat.L)]

    def add_pauli_sq(self, s: PauliString, name: str | None = None) -> str:
        """Mean of the attached sign estimates <s>^2."""
        z = _idx(s.x_bits)            # X/Y letters of s read r_z
        x = _idx(s.z_bits)            # Z/Y letters of s read r_x
        e = np.empty(0, _IDX)
        return self._add(name or f"pauli2:{s.label}", KIND_PAULI_SQ,
                         [(z, x, e, e)])

    def add_swap(self, region, name: str | None = None,
                 translations: bool | None = None) -> str:
        """Two-copy swap of a region; mean = purity of the reduced state."""
        mask = _as_mask(region, self.model.n_spins)
        label = region.label if isinstance(region, Region) else ""
        e = np.empty(0, _IDX)
        copies = [(e, e, _idx(m), e) for m in self._translates(mask, translations)]
        return self._add(name or f"swap:{label or _span_label(mask)}",
                         KIND_SWAP, copies)

    def add_swap_gauge(self, region: Region, name: str | None = None,
                       translations: bool | None = None) -> str:
        """Swap with the region boundary dephased in the electric basis;
        mean = gauge-invariant purity.  Needs the boundary/interior
        split of a torus region."""
        if self.model.kind != Z2_LGT:
            raise ValueError("the gauge-symmetrised swap is a gauge-model "
                             "observable")
        if not isinstance(region, Region):
            raise ValueError("need a Region carrying a boundary mask")
        bnd = self._translates(region.boundary_mask, translations)
        inr = self._translates(region.interior_mask, translations)
        e = np.empty(0, _IDX)
        copies = [(e, e, _idx(i), _idx(b)) for i, b in zip(inr, bnd)]
        return self._add(name or f"swapg:{region.label}", KIND_SWAP_GAUGE,
                         copies)

    def add_wilson(self, loop_mask, name: str | None = None,
                   translations: bool | None = None) -> str:
        """|<W>|^2 for the x-string on a closed loop of links."""
        mask = _as_mask(loop_mask, self.model.n_spins)
        e = np.empty(0, _IDX)
        copies = [(_idx(m), e, e, e) for m in self._translates(mask, translations)]
        return self._add(name or f"wilson:{_span_label(mask)}", KIND_WILSON,
                         copies)

    # ------------------------------------------------------------- packing

    @property
    def n_obs(self) -> int:
        return len(self.names)

    @property
    def packed(self) -> tuple:
        """The nine flat arrays the measurement kernel takes, built once."""
        if self._packed is None:
            copy_off = np.zeros(self.n_obs + 1, _IDX)
            flat: list[tuple] = []
            for o, copies in enumerate(self._copies):
                flat.extend(copies)
                copy_off[o + 1] = len(flat)
            offs, idxs = [], []
            for part in range(4):
                off = np.zeros(len(flat) + 1, _IDX)
                for c, copy in enumerate(flat):
                    off[c + 1] = off[c] + len(copy[part])
                cat = (np.concatenate([copy[part] for copy in flat])
                       if flat else np.empty(0, _IDX))
                offs.append(off)
                idxs.append(cat.astype(_IDX))
            self._packed = (copy_off,
                            offs[0], idxs[0], offs[1], idxs[1],
                            offs[2], idxs[2], offs[3], idxs[3])
        return self._packed

    # ------------------------------------------------------------- reading

    def index(self, name: str) -> int:
        return self.names.index(name)

    def series(self, out, name: str) -> np.ndarray:
        """Column of a run's value matrix (accepts the run dict too)."""
        values = out["values"] if isinstance(out, dict) else out
        return values[:, self.index(name)]


def _span_label(mask: np.ndarray) -> str:
    sites = np.flatnonzero(mask)
    if len(sites) == 0:
        return "empty"
    lo, hi = int(sites[0]), int(sites[-1])
    if len(sites) == hi - lo + 1:
        return f"{lo}..{hi}"
    return f"{lo}..{hi}(n={len(sites)})"


# -------------------------------------------------------------- estimates

def mean_estimate(series, block_size: int = stats.DEFAULT_BLOCK):
    """(mean, stderr) of a value series with blocking."""
    b = stats.bin_series(series, block_size)
    return b.mean, b.stderr


def renyi2(series, block_size: int = stats.DEFAULT_BLOCK):
    """Second Renyi entropy -ln<swap> with jackknife error.

    Raises :class:`EstimatorExhausted` when the swap mean is not
    positive -- the signal is below the sampling noise and more sweeps
    (or the thermodynamic-integration route) are needed."""
    return stats.jackknife_log(stats.bin_series(series, block_size))


def topo_ee(swap_ab, swap_bc, swap_abc, swap_b,
            block_size: int = stats.DEFAULT_BLOCK):
    """S2(AB) + S2(BC) - S2(ABC) - S2(B) from the four swap series of a
    single run, with the correlated jackknife error."""
    binned = [stats.bin_series(s, block_size)
              for s in (swap_ab, swap_bc, swap_abc, swap_b)]

    def fn(ab, bc, abc, b):
        if min(ab, bc, abc, b) <= 0.0:
            raise EstimatorExhausted("a swap mean is non-positive in the "
                                     "topological combination")
        return -np.log(ab) - np.log(bc) + np.log(abc) + np.log(b)

    return stats.jackknife_combine(binned, fn)


def topo_ee_independent(est_ab, est_bc, est_abc, est_b):
    """Same combination from four independent (value, error) estimates;
    errors add in quadrature."""
    vals = [est_ab, est_bc, est_abc, est_b]
    value = vals[0][0] + vals[1][0] - vals[2][0] - vals[3][0]
    err = float(np.sqrt(sum(e ** 2 for _, e in vals)))
    return value, err


def energy(n_series, model: ModelSpec, beta: float,
           block_size: int = stats.DEFAULT_BLOCK):
    """Thermal energy from the operator count: offset - <n>/(2 beta).

    A consistency diagnostic (the expansion samples two thermal factors,
    so the count couples to 2 beta); compare against the exact value
    when checking equilibration."""
    b = stats.bin_series(np.asarray(n_series, dtype=np.float64), block_size)
    scale = 1.0 / (2.0 * beta)
    return energy_offset(model) - b.mean * scale, b.stderr * scale


# ------------------------------------------------------------------ output

def summary_rows(plan: MeasurementPlan, out,
                 block_size: int = stats.DEFAULT_BLOCK) -> list[dict]:
    """One row per observable: raw mean, stderr and the binning that
    produced them.  Derived numbers (entropies) are left to the caller
    so the table stays faithful to what was sampled."""
    rows = []
    for name, kind in zip(plan.names, plan.kinds):
        b = stats.bin_series(plan.series(out, name), block_size)
        rows.append({"observable": name, "kind": kind,
                     "mean": b.mean, "stderr": b.stderr,
                     "n_bins": b.n_bins, "block_size": b.block_size})
    return rows


def write_csv(path, rows: list[dict]) -> None:
    """Plain CSV with the union of the row keys as header."""
    if not rows:
        raise ValueError("nothing to write")
    fields = list(rows[0])
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow(r)
