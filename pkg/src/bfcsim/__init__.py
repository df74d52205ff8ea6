"""Monte Carlo and analytic simulator for microring biphoton frequency combs."""

from .spectral import RingParams, SidebandWeights, Flat, Explicit, LorentzianRolloff
from .state import BiphotonState, CorrelationCurve, JsiMatrix
from .events import SourceConfig, ChannelConfig, Gate, TagStream, simulate
from .correlator import Histogram, cross_correlate, car, measure_jsi
from .franson import FransonConfig, coincidence_rate, fringe_scan, fit_visibility
from .dispersion import DispersionElement, dispersed_correlation
from .schmidt import jacobi_svd, schmidt_decompose, diagonal_schmidt

__version__ = "0.1.0"

__all__ = [
    "RingParams", "SidebandWeights", "Flat", "Explicit", "LorentzianRolloff",
    "BiphotonState", "CorrelationCurve", "JsiMatrix",
    "SourceConfig", "ChannelConfig", "Gate", "TagStream", "simulate",
    "Histogram", "cross_correlate", "car", "measure_jsi",
    "FransonConfig", "coincidence_rate", "fringe_scan", "fit_visibility",
    "DispersionElement", "dispersed_correlation",
    "jacobi_svd", "schmidt_decompose", "diagonal_schmidt",
]
