"""Thermodynamic integration of the second Renyi entropy.

Direct swap sampling dies exponentially with the entropy, so large
regions go through a family of partition sums interpolating between the
identity-only ensemble and the one confined to the region A:

    Q(lam) = sum_{B subset A} lam^{N_B} (1-lam)^{N_A-N_B} Q_B

where Q_B keeps every spin outside B frozen at the identity letter and
N_A = |A|.  Summing the binomial against the per-string weights turns
the subset sum into a single factor lam^{wt} per configuration, with
``wt`` the number of non-identity letters inside A; integrating the
exact derivative of ln Q over lam gives

    S2 = - int_0^1 <e>_lam  dlam + N_A ln 2 .

Two on-the-fly estimators of the integrand share this mean:

    e1 = N_B/lam - (N_A - N_B)/(1 - lam)      (subset mode only)
    e2 = wt/lam                               (either mode)

e2 is e1 with the free subset sites summed out, so its variance can
only be smaller; between the two samplers the analytic mode usually
decorrelates faster as well.  Each lam node runs as an independent
chain (no replica exchange) and the Gauss-Legendre weights fold the
node means into the entropy.

The lam = 1 node doubles as a consistency ensemble: there
``<lam'^wt>`` traces out the whole Q(lam')/Q(1) curve, and the fraction
of all-identity strings gives S2 again through
``N_A ln 2 + ln P(wt = 0)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import stats
from ._rng import spawn_states
from .engine import MODE_ANALYTIC, MODE_SUBSET, Chain
from .errors import EstimatorExhausted, InsufficientData
from .lattice import Region
from .models import ModelSpec

DEFAULT_NODES = 16


def quadrature(n_nodes: int = DEFAULT_NODES):
    """Gauss-Legendre nodes and weights mapped to (0, 1); interior
    nodes only, so the lam = 0 and lam = 1 degeneracies never arise."""
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    return (x + 1.0) / 2.0, w / 2.0


def estimator_e1(n_b, n_region: int, lam: float):
    """Subset-occupation integrand N_B/lam - (N_A - N_B)/(1 - lam)."""
    if not 0.0 < lam < 1.0:
        raise ValueError("e1 needs lam strictly inside (0, 1)")
    n_b = np.asarray(n_b, dtype=np.float64)
    return n_b / lam - (n_region - n_b) / (1.0 - lam)


def estimator_e2(wt, lam: float):
    """String-weight integrand wt/lam."""
    if not 0.0 < lam <= 1.0:
        raise ValueError("e2 needs lam in (0, 1]")
    return np.asarray(wt, dtype=np.float64) / lam


@dataclass
class EstimatorStats:
    mean: float
    err: float
    block_var: float      # variance of the block means

    @classmethod
    def from_series(cls, series, block_size: int) -> "EstimatorStats":
        b = stats.bin_series(series, block_size)
        return cls(mean=b.mean, err=b.stderr,
                   block_var=float(np.var(b.means, ddof=1)))


@dataclass
class NodeResult:
    lam: float
    weight: float
    n_samples: int = 0
    block_size: int = 0
    e1: EstimatorStats | None = None     # subset mode only
    e2: EstimatorStats | None = None
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error

    def get(self, estimator: str) -> EstimatorStats:
        st = {"e1": self.e1, "e2": self.e2}[estimator]
        if st is None:
            raise ValueError(f"node lam={self.lam:.4f} did not record "
                             f"{estimator}")
        return st


@dataclass
class TIResult:
    s2: float
    err: float
    n_region: int
    mode: str
    estimator: str
    nodes: list[NodeResult] = field(default_factory=list)


def _region_mask(region, n: int) -> np.ndarray:
    mask = region.mask if isinstance(region, Region) else np.asarray(region)
    mask = mask.astype(bool)
    if mask.shape != (n,):
        raise ValueError(f"region mask shape {mask.shape} != ({n},)")
    if not mask.any():
        raise ValueError("empty region: S2 = 0 without simulation")
    return mask


def run_node(model: ModelSpec, beta: float, region, lam: float, weight: float,
             *, mode: str = MODE_ANALYTIC, n_eq: int, n_sweeps: int,
             seed=None, rstate=None,
             block_size: int = stats.DEFAULT_BLOCK) -> NodeResult:
    """Equilibrate and measure one lam node; returns its integrand
    statistics (both estimators in subset mode)."""
    mask = _region_mask(region, model.n_spins)
    n_region = int(mask.sum())
    chain = Chain(model, beta, seed=seed, rstate=rstate, lam=lam, mode=mode,
                  region_mask=mask)
    chain.equilibrate(n_eq)
    out = chain.run(n_sweeps, wt_region=mask)
    node = NodeResult(lam=lam, weight=weight, n_samples=n_sweeps,
                      block_size=block_size)
    node.e2 = EstimatorStats.from_series(estimator_e2(out["wt"], lam),
                                         block_size)
    if mode == MODE_SUBSET:
        node.e1 = EstimatorStats.from_series(
            estimator_e1(out["n_b"], n_region, lam), block_size)
    return node


def integrate_s2(nodes: list[NodeResult], n_region: int,
                 estimator: str = "e2"):
    """Fold the node means into S2 = -sum w <e> + N_A ln 2; errors are
    the quadrature-weighted node errors summed in quadrature."""
    bad = [f"lam={n.lam:.4f}: {n.error}" for n in nodes if not n.ok]
    if bad:
        raise EstimatorExhausted("failed integration nodes -- "
                                 + "; ".join(bad))
    s2 = n_region * np.log(2.0)
    var = 0.0
    for node in nodes:
        st = node.get(estimator)
        s2 -= node.weight * st.mean
        var += (node.weight * st.err) ** 2
    return float(s2), float(np.sqrt(var))


def ti_renyi2(model: ModelSpec, beta: float, region, *,
              mode: str = MODE_ANALYTIC, estimator: str | None = None,
              n_nodes: int = DEFAULT_NODES, n_eq: int = 10_000,
              n_sweeps: int = 200_000, seed=None,
              block_size: int = stats.DEFAULT_BLOCK) -> TIResult:
    """Full thermodynamic integration: one independent chain per
    Gauss-Legendre node, folded into S2 with propagated errors.

    The default integrand is e2; requesting e1 switches the sampler to
    subset mode automatically since only that mode records it."""
    if estimator is None:
        estimator = "e2"
    if estimator == "e1":
        mode = MODE_SUBSET
    mask = _region_mask(region, model.n_spins)
    n_region = int(mask.sum())
    lams, weights = quadrature(n_nodes)
    states = spawn_states(seed, n_nodes)
    nodes = []
    for lam, w, st in zip(lams, weights, states):
        try:
            nodes.append(run_node(model, beta, mask, float(lam), float(w),
                                  mode=mode, n_eq=n_eq, n_sweeps=n_sweeps,
                                  rstate=st, block_size=block_size))
        except (EstimatorExhausted, InsufficientData) as exc:
            nodes.append(NodeResult(lam=float(lam), weight=float(w),
                                    error=str(exc)))
    s2, err = integrate_s2(nodes, n_region, estimator)
    return TIResult(s2=s2, err=err, n_region=n_region, mode=mode,
                    estimator=estimator, nodes=nodes)


# ------------------------------------------------ lam = 1 consistency checks

def s2_from_identity_fraction(wt_series, n_region: int,
                              block_size: int = stats.DEFAULT_BLOCK):
    """S2 = N_A ln 2 + ln P(wt = 0) from a lam = 1 confined run.

    Algebraically this is the fully integrated Q(0)/Q(1) ratio measured
    in one ensemble; it only works while the all-identity string is
    visited often enough to resolve the fraction."""
    indicator = (np.asarray(wt_series) == 0).astype(np.float64)
    neg_log, err = stats.jackknife_log(stats.bin_series(indicator, block_size))
    return n_region * np.log(2.0) - neg_log, err


def q_ratio_curve(wt_series, lams,
                  block_size: int = stats.DEFAULT_BLOCK):
    """Q(lam)/Q(1) = <lam^wt> from a lam = 1 confined run, with binned
    errors, one value per requested lam."""
    wt = np.asarray(wt_series, dtype=np.float64)
    lams = np.atleast_1d(np.asarray(lams, dtype=np.float64))
    q = np.empty(len(lams))
    err = np.empty(len(lams))
    for k, lam in enumerate(lams):
        b = stats.bin_series(lam ** wt, block_size)
        q[k] = b.mean
        err[k] = b.stderr
    return q, err


# ------------------------------------------------------------------ output

def node_rows(ti: TIResult) -> list[dict]:
    """One CSV row per integration node."""
    rows = []
    for n in ti.nodes:
        row = {"lam": n.lam, "weight": n.weight,
               "n_samples": n.n_samples, "block_size": n.block_size,
               "error": n.error}
        for tag in ("e1", "e2"):
            st = getattr(n, tag)
            row[f"{tag}_mean"] = st.mean if st else ""
            row[f"{tag}_err"] = st.err if st else ""
            row[f"{tag}_block_var"] = st.block_var if st else ""
        rows.append(row)
    return rows
