"""Global sensitivity analysis of uncertain parameters in discrete Bayesian networks."""

from .bif import read_bif, write_bif
from .bn import BayesianNetwork, NetworkError, ParameterId
from .encode import BetaPrior, UncertaintySpec
from .montecarlo import mc_pick_freeze
from .networks import BUNDLED, load_network
from .oat import select_uncertainties, sensitivity_function, sensitivity_values_all
from .sobol import SobolReport, analyze

__version__ = "0.1.0"

__all__ = [
    "BUNDLED",
    "BayesianNetwork",
    "BetaPrior",
    "NetworkError",
    "ParameterId",
    "SobolReport",
    "UncertaintySpec",
    "analyze",
    "load_network",
    "mc_pick_freeze",
    "read_bif",
    "select_uncertainties",
    "sensitivity_function",
    "sensitivity_values_all",
    "write_bif",
]
