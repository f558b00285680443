"""
Simulation of heralded three-photon GHZ state generation with linear optics
under photon loss, two-photon emission and partial distinguishability.

Modules
-------
fock      sparse bosonic Fock states and the elementary optical maps
circuit   netlists, the element stepper and the permanent oracle
sources   distinguishable inputs, emission events and the event space
herald    post-selection, GHZ sign table and mixture measures
engine    vectorized branch simulation with exact loss polynomials
mixture   class tables and their recombination for any parameter point
analysis  regimes, sweeps and influence metrics
cli       command-line front end
"""

__version__ = "0.1.0"

from .analysis import (REGIMES, MeasureGrid, Regime, correlation_coefficient, evaluate_point,
                       influence_report, relative_image_range, simplified_loss, sweep)
from .circuit import Netlist, canonical_ghz_netlist, load_netlist, validate_netlist
from .mixture import MixtureModel, Params, PointResult

__all__ = [
    "REGIMES", "MeasureGrid", "Regime", "correlation_coefficient", "evaluate_point",
    "influence_report", "relative_image_range", "simplified_loss", "sweep",
    "Netlist", "canonical_ghz_netlist", "load_netlist", "validate_netlist",
    "MixtureModel", "Params", "PointResult", "__version__",
]
