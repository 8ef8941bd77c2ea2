"""Numerical toolkit for Levy measures on sequence spaces and grid L^p spaces:
measures and their infinitely divisible laws, integrand norms, Levy-measure
criteria, Poisson random measure simulation and gamma-radonifying norms."""
from .measures import (DiscreteMeasure, DomainError, MeasureSequence, ModelSpace, RadialFamily, convolve,
                       measure_from_json, measure_to_json)
from .norms import SimpleFunction, identity_integrand, ip_norm, ip_norm_max, ip_norm_sum
from .infconv import SolverConfig
from .criteria import CheckReport
from .prm import PointConfiguration, sample_prm
from .gamma import FiniteRankOperator
from .rng import substream

__all__ = [
    "CheckReport", "DiscreteMeasure", "DomainError", "FiniteRankOperator", "MeasureSequence", "ModelSpace",
    "PointConfiguration", "RadialFamily", "SimpleFunction", "SolverConfig", "convolve", "identity_integrand",
    "ip_norm", "ip_norm_max", "ip_norm_sum", "measure_from_json", "measure_to_json", "sample_prm", "substream",
]
__version__ = "0.1.0"
