"""Dimension spectra of Birkhoff level sets and irregular sets for expanding and
parabolic interval maps."""

from .errors import (
    BudgetError,
    ConvergenceError,
    EscapeError,
    EstimationError,
    HarvestError,
    InfeasibleError,
    IrregdimError,
    NumericError,
    ValidationError,
)
from .interval_maps import (
    BranchMap,
    cantor_map,
    doubling_map,
    make_farey,
    make_linear_map,
    make_manneville_pomeau,
    map_from_descriptor,
    parabolic_hull,
)
from .measures import bernoulli, entropy, lyapunov, markov, mix
from .potentials import g_potential, indicator, phi_star, phi_star_bracket, variation_norm
from .spectrum import compute_L_phi, dimension_spectrum, hyperbolic_dimension, spectrum_curve
from .moran import build_concatenated, build_schedule, generate_point, local_dimension, oscillation_profile
from .dimension import attractor_sample, box_counting

__version__ = "0.1.0"
