"""Strong coordination over a three-agent line network.

Exact finite-alphabet information measures, the rate regions of the line
network, and a simulator for superposition codebooks that measures how
closely they reproduce a target joint distribution of actions.
"""
from .dist import (
    Alphabet, Channel, JointPmf, TypicalityParams, condition, conditional_mutual_information, entropy,
    is_markov_chain, is_typical, l1_distance, marginal, mutual_information, product_extension, sample,
    total_variation,
)
from .errors import ConditioningError, PreconditionError, ResourceBudgetError
from .region import (
    AuxiliaryJoint, RatePoint, RateRegion, baseline_region, contains, corollary_joint, in_S_in, in_S_out,
    inner_bound_sample, matched_vs_swapped, region_of, star_region,
)
from .scheme import SchemeSpec, corollary_scheme
from .code import (
    CodeConfig, Codebook, SimulationReport, generate_codebook, induced_hat_distribution,
    induced_tilde_distribution, monte_carlo_gap, posterior_m12, protocol_gap, resolvability_gap,
    run_line_protocol, secrecy_gap, simulate,
)

__version__ = "0.1.0"
