"""Equilibria of strongly coupled Frenkel-Kontorova chains.

Constructs equilibrium configurations of generalized Frenkel-Kontorova
models in the strong-coupling regime by a certified contraction, verifies
their linear hyperbolicity through invariant cone fields, and exposes the
associated twist-map orbits. See the README for the command-line
interface.
"""

from .errors import (
    CertificateError,
    CertificationError,
    ConfigError,
    ConvergenceError,
    ConvexityError,
    DomainError,
)
from .hyperbolicity import (
    ConeParameters,
    ConeVerdict,
    HyperbolicityCertificate,
    LinearizationSite,
    SplittingReport,
    backward_transfer_step,
    cone_parameters,
    cone_splitting,
    legendre_bounds,
    legendre_transform,
    linearize,
    momentum,
    orbit_to_csv,
    position_pair_step,
    transfer_matrix,
    transfer_step,
    twist_map_step,
    verify_cone_conditions,
    verify_orbit,
)
from .interactions import (
    LongRangeInteraction,
    NearestNeighborInteraction,
    PerturbedQuadraticCoupling,
    QuadraticCoupling,
    apply_delta,
    coupling_from_dict,
    delta_hom,
    interaction_from_dict,
    lipschitz_bound,
)
from .lattice import (
    AnchorTail,
    Configuration,
    DerivedTail,
    HomomorphismTail,
    RotationVector,
    Window,
    anchor_configuration,
    as_rotation,
    configuration_from_csv,
    configuration_to_csv,
    configuration_to_json,
    ext_distance,
    homomorphism_configuration,
    nearest_anchor,
    rotation_vector_estimate,
    shift,
    translate,
)
from .potentials import (
    AubryCertificate,
    DeloneBumpPotential,
    FiniteZeroSet,
    PeriodicZeroSet,
    TrigSumPotential,
    cosine_certificate,
    cosine_potential,
    estimate_aubry,
    local_inverse,
    local_inverse_batch,
    potential_from_dict,
    potential_to_dict,
    sampler_from_dict,
    truncated_almost_periodic,
)
from .solver import (
    ContractionSolver,
    SolveParams,
    SolveReport,
    UniquenessVerdict,
    lambda_threshold,
    phi_step,
    residual,
    solve_equilibrium,
    uniqueness_check,
)

__version__ = "0.1.0"

__all__ = [
    "AnchorTail",
    "AubryCertificate",
    "CertificateError",
    "CertificationError",
    "ConeParameters",
    "ConeVerdict",
    "ConfigError",
    "Configuration",
    "ContractionSolver",
    "ConvergenceError",
    "ConvexityError",
    "DeloneBumpPotential",
    "DerivedTail",
    "DomainError",
    "FiniteZeroSet",
    "HomomorphismTail",
    "HyperbolicityCertificate",
    "LinearizationSite",
    "LongRangeInteraction",
    "NearestNeighborInteraction",
    "PeriodicZeroSet",
    "PerturbedQuadraticCoupling",
    "QuadraticCoupling",
    "RotationVector",
    "SolveParams",
    "SolveReport",
    "SplittingReport",
    "TrigSumPotential",
    "UniquenessVerdict",
    "Window",
    "anchor_configuration",
    "apply_delta",
    "as_rotation",
    "backward_transfer_step",
    "cone_parameters",
    "cone_splitting",
    "configuration_from_csv",
    "configuration_to_csv",
    "configuration_to_json",
    "cosine_certificate",
    "cosine_potential",
    "coupling_from_dict",
    "delta_hom",
    "estimate_aubry",
    "ext_distance",
    "homomorphism_configuration",
    "interaction_from_dict",
    "lambda_threshold",
    "legendre_bounds",
    "legendre_transform",
    "linearize",
    "lipschitz_bound",
    "local_inverse",
    "local_inverse_batch",
    "momentum",
    "nearest_anchor",
    "orbit_to_csv",
    "phi_step",
    "position_pair_step",
    "potential_from_dict",
    "potential_to_dict",
    "residual",
    "rotation_vector_estimate",
    "sampler_from_dict",
    "shift",
    "solve_equilibrium",
    "transfer_matrix",
    "transfer_step",
    "translate",
    "truncated_almost_periodic",
    "twist_map_step",
    "uniqueness_check",
    "verify_cone_conditions",
    "verify_orbit",
]
