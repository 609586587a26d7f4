"""Causal evolution of probability measures on 1+1 Minkowski spacetime.

Optimal causal couplings of discrete measures, spectral evolution of wave
packets, deficiency quantifiers of acausal flow, free Dirac evolution and
classical continuity checks.
"""
__version__ = "0.1.0"

from .errors import ConfigError, NumericalBudgetError
from .spacetime import Event, GridMeasure, SpatialRegion, causally_precedes, future_region, region_mass
from .transport import (
    CouplingResult,
    DiscreteMeasure,
    brute_force_deficiency,
    check_precedence_compact,
    max_causal_mass,
    support_condition,
)
from .packets import (
    Dispersion,
    Grid,
    StateFamily,
    WavePacket,
    density,
    evolve,
    momentum_amplitude,
    nonrel_cone_mass,
    nonrel_deficiency,
)
from .quantify import (
    NoiseFloor,
    ViolationProfile,
    hegerfeldt_witness,
    m_of_region,
    m_tilde,
    n_tilde_packet,
    outside_probability,
    scaling_check,
    sweep,
)
from .dirac import CurrentField, SpinorField, continuity_residual, current, dirac_causality_check, evolve_dirac
from .continuity import SampledFlow, causal_current_check, continuity_residual_check, velocity_bound_check
