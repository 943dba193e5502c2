"""Reflected Brownian motion with semipermeable barriers.

Simulation of the process, truncated-Wasserstein and crossing-count barrier
estimators, cover-time experiments and track ingestion.
"""
__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .geometry import Barrier, ClosedCurve, Environment, Side, environment_parameters, side_of  # noqa: F401
from .process import SamplePath, SimConfig, simulate, stationary_start  # noqa: F401
from .transport import EmpiricalMeasure, hausdorff, truncated_w1  # noqa: F401
from .estimators import (EstimateSet, FixedFreqParams, HighFreqParams, default_params,  # noqa: F401
                         recover_fixed_frequency, recover_high_frequency, refine)
