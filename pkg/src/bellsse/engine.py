"""Markov chain driver wrapping the update kernels.

A :class:`Chain` owns the slice-0 Bell components, the expansion slot
list and the generator state, and exposes ``equilibrate`` / ``run``.
Three sampling modes are supported:

``plain``
    the bare squared-trace ensemble; all estimator runs use this.
``analytic``
    slice-0 letters outside a chosen region are frozen at the identity;
    every non-identity letter inside the region carries a factor
    ``lam``, so cluster flips pick up ``lam**dwt`` acceptance factors.
``subset``
    the equivalent joint ensemble with an explicit free subset of the
    region resampled each sweep; spins outside the subset (whether
    outside the region or inside it but currently unselected) are
    pinned to the identity letter.  The two reweighted modes
    interpolate between the unrestricted ensemble confined to the
    region (``lam = 1``) and the all-identity one (``lam -> 0``), and
    feed the thermodynamic integration of the second Renyi entropy.

Checkpoints round-trip every piece of sampler state bit-exactly,
including the generator, so a resumed run continues the same stream.
"""

from __future__ import annotations

import warnings

import numpy as np

from . import _kernels
from ._rng import make_state
from .bellstate import BellConfig
from .lattice import dual_cycle_flips
from .models import TFIM, Z2_LGT, ModelSpec, lgt_model, tfim_model

MODE_PLAIN = "plain"
MODE_ANALYTIC = "analytic"
MODE_SUBSET = "subset"
_MODES = (MODE_PLAIN, MODE_ANALYTIC, MODE_SUBSET)

# grow the slot list whenever more than 3/4 of it is occupied
_GROW_NUM, _GROW_DEN = 3, 4


class Chain:
    """One sampler instance for a model at inverse temperature ``beta``.

    The sampled weight carries two factors of ``exp(-beta*H)``, so the
    operator count couples to ``2*beta``: the energy estimator reads
    ``offset - <n>/(2*beta)``.  Measured observables still refer to the
    physical ensemble at ``beta`` itself, because the doubled trace
    factorizes into two independent thermal factors.
    """

    def __init__(self, model: ModelSpec, beta: float, *, seed=None,
                 rstate=None, lam: float = 1.0, mode: str = MODE_PLAIN,
                 region_mask=None, m_init: int | None = None):
        if mode not in _MODES:
            raise ValueError(f"unknown mode {mode!r}")
        if mode != MODE_PLAIN:
            if region_mask is None:
                raise ValueError(f"mode {mode!r} needs a region mask")
            if not 0.0 < lam <= 1.0:
                raise ValueError("lam must lie in (0, 1]")
        self.model = model
        self.beta = float(beta)
        self.lam = float(lam)
        self.mode = mode
        ns = model.n_spins
        self.r_z = np.zeros(ns, np.uint8)
        self.r_x = np.zeros(ns, np.uint8)
        if m_init is None:
            m_init = max(16, int(2.0 * beta
                                 * (model.coupling_a * model.n_a_loci
                                    + model.n_b_loci)))
        self.op_kind = np.zeros(m_init, np.int8)
        self.op_locus = np.full(m_init, -1, np.int32)
        self.n = 0
        self.rstate = rstate if rstate is not None else make_state(seed)
        self.sweeps_done = 0

        self.region_mask = np.zeros(ns, np.uint8)
        if region_mask is not None:
            self.region_mask = np.asarray(region_mask).astype(np.uint8)
        self._region_sites = np.flatnonzero(self.region_mask).astype(np.int32)
        self.wt_mask = np.zeros(ns, np.uint8)
        if mode == MODE_ANALYTIC:
            self.wt_mask = self.region_mask.copy()
        # weighted modes keep the exterior of the region frozen at the
        # identity letter: a slice-0 label outside the region never flips
        if mode == MODE_PLAIN:
            self.free_mask = np.ones(ns, np.uint8)
        else:
            self.free_mask = self.region_mask.copy()
        self.in_b = self.region_mask.copy()  # subset starts at the full region
        self._cycle_masks = (dual_cycle_flips(model.lat)
                             if model.kind == Z2_LGT else None)

    # ------------------------------------------------------------ plumbing

    @property
    def n_slots(self) -> int:
        return self.op_kind.size

    @property
    def c_a(self) -> np.ndarray:
        return self.r_x if self.model.kind == TFIM else self.r_z

    @property
    def c_b(self) -> np.ndarray:
        return self.r_z if self.model.kind == TFIM else self.r_x

    def config(self) -> BellConfig:
        return BellConfig(self.r_z.copy(), self.r_x.copy())

    def _refresh_free(self) -> None:
        self.free_mask[self._region_sites] = self.in_b[self._region_sites]

    # -------------------------------------------------------------- updates

    def sweep(self) -> None:
        m = self.model
        lam_k = self.lam if self.mode == MODE_ANALYTIC else 1.0
        self.n = _kernels.diagonal_update(
            self.op_kind, self.op_locus, self.n, m.n_a_loci, m.n_b_loci,
            m.coupling_a, 2.0 * self.beta, self.rstate)
        _kernels.site_cluster_update(
            self.op_kind, self.op_locus, self.c_a, self.c_b,
            m.lat.b_members, m.lat.b_size, lam_k, self.wt_mask,
            self.free_mask, self.rstate)
        _kernels.dual_cluster_update(
            self.op_kind, self.op_locus, self.c_a, self.c_b,
            m.lat.b_members, m.lat.b_size, m.lat.spin_b_adj, m.lat.n_b,
            lam_k, self.wt_mask, self.free_mask, self.rstate)
        if self.mode == MODE_SUBSET:
            _kernels.subset_pass(self._region_sites, self.in_b, self.c_a,
                                 self.c_b, self.lam, self.rstate)
            self._refresh_free()
        elif self.mode == MODE_PLAIN:
            if m.has_global_flip:
                _kernels.maybe_flip_all(self.c_a, self.rstate)
            if self._cycle_masks is not None:
                _kernels.maybe_flip_masks(self.c_a, self._cycle_masks,
                                          self.rstate)
        self.sweeps_done += 1

    def _grow(self) -> None:
        new_m = int(np.ceil(4 * self.n / 3)) + 1
        if new_m <= self.n_slots:
            return
        kind = np.zeros(new_m, np.int8)
        locus = np.full(new_m, -1, np.int32)
        kind[:self.n_slots] = self.op_kind
        locus[:self.n_slots] = self.op_locus
        self.op_kind = kind
        self.op_locus = locus

    def equilibrate(self, n_sweeps: int) -> None:
        """Burn-in sweeps, letting the slot list grow to fit the
        operator number distribution.  Measurement runs keep the list
        fixed, so equilibrate long enough for the growth to settle."""
        for _ in range(n_sweeps):
            self.sweep()
            if _GROW_DEN * self.n > _GROW_NUM * self.n_slots:
                self._grow()

    # ---------------------------------------------------------------- runs

    def run(self, n_sweeps: int, plan=None, *, wt_region=None, hist=None):
        """Measurement run: one sweep plus one measurement per step.

        ``plan`` is a packed observable set (``estimators.MeasurementPlan``);
        ``wt_region`` a spin mask whose non-identity letter count is
        recorded each sweep; ``hist`` an int64 array of length
        ``4**n_spins`` accumulating configuration labels.  Returns a dict
        of per-sweep series (plus subset occupation in subset mode).

        The slot list stays at its current capacity, so
        :meth:`equilibrate` must run first; a chain measured cold pins
        the operator number at the initial capacity and samples a
        truncated expansion (a warning is issued when that happens).
        """
        out = {"n": np.empty(n_sweeps, np.int64)}
        values = None
        if plan is not None:
            values = np.empty((n_sweeps, plan.n_obs), np.float64)
            out["values"] = values
        wt = None
        if wt_region is not None:
            wt_region = np.asarray(wt_region).astype(np.uint8)
            wt = np.empty(n_sweeps, np.int64)
            out["wt"] = wt
        nb = None
        if self.mode == MODE_SUBSET:
            nb = np.empty(n_sweeps, np.int64)
            out["n_b"] = nb
        for s in range(n_sweeps):
            self.sweep()
            out["n"][s] = self.n
            if values is not None:
                _kernels.measure_values(self.r_z, self.r_x, *plan.packed,
                                        values[s])
            if wt is not None:
                wt[s] = _kernels.region_weight(self.r_z, self.r_x, wt_region)
            if nb is not None:
                nb[s] = int(self.in_b.sum())
            if hist is not None:
                _kernels.accumulate_label(self.r_z, self.r_x, hist)
        if n_sweeps and np.mean(out["n"] >= self.n_slots) > 1e-3:
            warnings.warn(
                "operator list saturated during measurement; equilibrate "
                "longer so the capacity can grow", RuntimeWarning,
                stacklevel=2)
        return out

    def check_propagation(self) -> bool:
        """Debug invariant: the operator list must propagate slice 0
        consistently and periodically."""
        return bool(_kernels.check_propagation(
            self.op_kind, self.op_locus, self.c_a, self.c_b,
            self.model.lat.b_members, self.model.lat.b_size))

    # ---------------------------------------------------------- checkpoints

    def save(self, path) -> None:
        np.savez_compressed(
            path,
            model_kind=self.model.kind,
            L=self.model.lat.L,
            boundary=self.model.lat.boundary,
            h=self.model.h,
            beta=self.beta,
            lam=self.lam,
            mode=self.mode,
            r_z=self.r_z,
            r_x=self.r_x,
            op_kind=self.op_kind,
            op_locus=self.op_locus,
            n=self.n,
            rstate=self.rstate,
            sweeps_done=self.sweeps_done,
            region_mask=self.region_mask,
            in_b=self.in_b,
        )

    @classmethod
    def load(cls, path) -> "Chain":
        with np.load(path) as f:
            kind = str(f["model_kind"])
            L = int(f["L"])
            h = float(f["h"])
            if kind == TFIM:
                model = tfim_model(L, h, boundary=str(f["boundary"]))
            elif kind == Z2_LGT:
                model = lgt_model(L, h)
            else:
                raise ValueError(f"unknown model kind {kind!r} in checkpoint")
            mode = str(f["mode"])
            region = f["region_mask"] if mode != MODE_PLAIN else None
            chain = cls(model, float(f["beta"]), lam=float(f["lam"]),
                        mode=mode, region_mask=region,
                        m_init=int(f["op_kind"].size))
            chain.r_z[:] = f["r_z"]
            chain.r_x[:] = f["r_x"]
            chain.op_kind[:] = f["op_kind"]
            chain.op_locus[:] = f["op_locus"]
            chain.n = int(f["n"])
            chain.rstate[:] = f["rstate"]
            chain.sweeps_done = int(f["sweeps_done"])
            chain.in_b[:] = f["in_b"]
            chain._refresh_free()
        return chain


def energy_offset(model: ModelSpec) -> float:
    """Constant added to the Hamiltonian by the operator decomposition;
    the thermal energy at inverse temperature ``beta`` is
    ``offset - <n> / (2*beta)``."""
    return model.coupling_a * model.n_a_loci + model.n_b_loci
