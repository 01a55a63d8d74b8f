"""Stochastic series expansion in the two-copy Bell basis.

Sampling the doubled thermal ensemble over unsigned Pauli strings gives
direct access to squared expectation values and swap-based Renyi-2
entropies for the transverse-field Ising chain and the 2D Z2 lattice
gauge theory, with a thermodynamic-integration route for large regions
and a dense exact-reference layer for small systems.
"""

from .bellstate import BellConfig, PauliString
from .engine import Chain, energy_offset
from .errors import DegenerateGroundState, EstimatorExhausted, InsufficientData
from .estimators import MeasurementPlan, energy, renyi2, topo_ee, topo_ee_independent
from .extensemble import integrate_s2, q_ratio_curve, quadrature, \
    run_node, s2_from_identity_fraction, ti_renyi2
from .lattice import Region, build_chain, build_torus_links, half_region, \
    interval_region, mid_interval, square_region, thirds_regions, \
    wilson_loop_links
from .models import ModelSpec, initial_config, lgt_model, tfim_model

__version__ = "0.1.0"

__all__ = [
    "BellConfig", "PauliString", "Chain", "energy_offset",
    "DegenerateGroundState", "EstimatorExhausted", "InsufficientData",
    "MeasurementPlan", "energy", "renyi2", "topo_ee", "topo_ee_independent",
    "integrate_s2", "q_ratio_curve", "quadrature", "run_node",
    "s2_from_identity_fraction", "ti_renyi2",
    "Region", "build_chain", "build_torus_links", "half_region",
    "interval_region", "mid_interval", "square_region", "thirds_regions",
    "wilson_loop_links",
    "ModelSpec", "initial_config", "lgt_model", "tfim_model",
    "__version__",
]
