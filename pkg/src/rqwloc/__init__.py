"""Random coined quantum walks on Z^d and numerical probes of their localization."""

__version__ = "0.1.0"

from .coins import CoinPermutation, coin_distance, hadamard_coin, permutation_coin, perturbed_coin, tr_coin
from .disorder import PhaseDistribution, PhaseField, decorate_coin, sample_phases
from .lattice import BasisLabel, CubeRegion, cube_sites, jump, sup_norm
from .model import WalkModel
from .walk import WalkOperator, apply, build_bulk, build_collared, invariant_restriction

__all__ = [
    "BasisLabel",
    "CoinPermutation",
    "CubeRegion",
    "PhaseDistribution",
    "PhaseField",
    "WalkModel",
    "WalkOperator",
    "apply",
    "build_bulk",
    "build_collared",
    "coin_distance",
    "cube_sites",
    "decorate_coin",
    "hadamard_coin",
    "invariant_restriction",
    "jump",
    "permutation_coin",
    "perturbed_coin",
    "sample_phases",
    "sup_norm",
    "tr_coin",
]
