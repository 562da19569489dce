"""Infinite-horizon Wasserstein distributionally robust LQR."""

from .errors import (
    ConvergenceError,
    DivergenceError,
    DRLQRError,
    InfeasibleError,
    InputError,
    UnsupportedError,
)
from .grid import GridSamples, unit_circle
from .lti import StateSpace, hinf_gamma_lower_bound, load_system, lqr_blocks, noncausal_blocks, normalize_weights
from .rational import ControllerSS, fit_rational, rational_controller, realize_controller, realize_L
from .simulate import SimRun, monte_carlo, simulate
from .spectral import cepstral_factor, stationary_gaussian
from .synth import Baselines, SynthesisConfig, SynthesisResult, fixed_point, synthesize, worst_case_cost

__version__ = "0.1.0"
