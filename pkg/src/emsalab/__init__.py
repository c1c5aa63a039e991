"""Numerical laboratory for the eigensystem multiscale analysis of the Anderson model."""
from .certificates import EnergyInterval, certify_box, h_eval, is_localized, shrink_expand
from .disorder import DisorderSpec, hamiltonian, sample_potential
from .exponents import ExponentSet, derive, validate
from .lattice import BoxSpec, Region, boundary, interior, suitable_cover
from .spectral import Eigensystem, eigensystem

__all__ = [
    "BoxSpec", "DisorderSpec", "Eigensystem", "EnergyInterval", "ExponentSet", "Region",
    "boundary", "certify_box", "derive", "eigensystem", "h_eval", "hamiltonian", "interior",
    "is_localized", "sample_potential", "shrink_expand", "suitable_cover", "validate",
]
__version__ = "0.1.0"
