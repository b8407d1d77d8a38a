"""Stability and limit-cycle analysis of PID-controlled motion stages with
LuGre friction, with and without a friction isolator between bearing and table.
"""

from .equilibrium import (
    EquilibriumPoint,
    Family,
    PreconditionError,
    slipping,
    slipping_pd,
    slipping_pid,
    sticking_pd,
    sticking_pid,
)
from .friction import FrictionParams
from .linearize import jacobian, nondim_scaling, nondimensionalize
from .plant import Model, PidGains, Reference, StageParams, System, rhs
from .sim import CycleMetrics, Trajectory, analyze_steady_state, integrate
from .stability import (
    SpectrumReport,
    analyze,
    classify_spectrum,
    eigvals,
    sigma0_inf_margin,
    sigma0_inf_margin_exact,
)
from .sweep import GridSpec, amplitude_chart, parameter_stack, root_locus, stability_chart

__version__ = "0.1.0"

__all__ = [
    "CycleMetrics",
    "EquilibriumPoint",
    "Family",
    "FrictionParams",
    "GridSpec",
    "Model",
    "PidGains",
    "PreconditionError",
    "Reference",
    "SpectrumReport",
    "StageParams",
    "System",
    "Trajectory",
    "amplitude_chart",
    "analyze",
    "analyze_steady_state",
    "classify_spectrum",
    "eigvals",
    "integrate",
    "jacobian",
    "nondim_scaling",
    "nondimensionalize",
    "parameter_stack",
    "rhs",
    "root_locus",
    "sigma0_inf_margin",
    "sigma0_inf_margin_exact",
    "slipping",
    "slipping_pd",
    "slipping_pid",
    "stability_chart",
    "sticking_pd",
    "sticking_pid",
]
