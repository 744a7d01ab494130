"""Cocycles, Calabi-type invariants and distortion bounds for
area-preserving maps of the plane and the open cylinder."""

from .errors import (
    NonconvergenceError,
    NumericalError,
    SymCocycleError,
    ValidationError,
)
from .geometry import (
    GridSpec,
    ManifoldModel,
    Primitive,
    Window,
    WrongManifold,
    cylinder,
    plane,
)
from .dynamics import (
    ComposedMap,
    EscapedWindowWarning,
    FlowMap,
    GroupWord,
    HamiltonianSpec,
    IdentityMap,
    TwistMap,
    UnknownGenerator,
    compose,
)
from .cocycle import (
    GridFunction,
    HamHatReport,
    NonExactForm,
    Normalization,
    cocycle_by_action,
    cocycle_by_path,
    hamiltonian_test,
    normalize_compact,
    pullback_difference,
)
from .invariants import (
    FixedPoint,
    FixedPointReport,
    FluxReport,
    NoFixedPointFound,
    NotFixedPoint,
    WrongNormalization,
    calabi,
    calabi_from_hamiltonian,
    find_fixed_points,
    flux_compare,
    oscillation,
    polterovich,
    twist_boundary_difference,
)
from .cover import (
    LiftedMap,
    TrajectoryGap,
    growth_rate,
    lift,
    lifted_cocycle,
    periodicity_residual,
)
from .distortion import (
    DegenerateBound,
    FingerprintCollisionWarning,
    GeneratorSet,
    distortion_lower_bound,
    distortion_table,
    lipschitz_constant,
    word_ball_norm,
)
from .verify import CHECK_NAMES, CheckResult, run_all, run_check

__version__ = "0.1.0"

__all__ = [
    "CHECK_NAMES",
    "CheckResult",
    "ComposedMap",
    "DegenerateBound",
    "EscapedWindowWarning",
    "FingerprintCollisionWarning",
    "FixedPoint",
    "FixedPointReport",
    "FlowMap",
    "FluxReport",
    "GeneratorSet",
    "GridFunction",
    "GridSpec",
    "GroupWord",
    "HamHatReport",
    "HamiltonianSpec",
    "IdentityMap",
    "LiftedMap",
    "ManifoldModel",
    "NoFixedPointFound",
    "NonExactForm",
    "NonconvergenceError",
    "Normalization",
    "NotFixedPoint",
    "NumericalError",
    "Primitive",
    "SymCocycleError",
    "TrajectoryGap",
    "TwistMap",
    "UnknownGenerator",
    "ValidationError",
    "Window",
    "WrongManifold",
    "WrongNormalization",
    "__version__",
    "calabi",
    "calabi_from_hamiltonian",
    "cocycle_by_action",
    "cocycle_by_path",
    "compose",
    "cylinder",
    "distortion_lower_bound",
    "distortion_table",
    "find_fixed_points",
    "flux_compare",
    "growth_rate",
    "hamiltonian_test",
    "lift",
    "lifted_cocycle",
    "lipschitz_constant",
    "normalize_compact",
    "oscillation",
    "periodicity_residual",
    "plane",
    "polterovich",
    "pullback_difference",
    "run_all",
    "run_check",
    "twist_boundary_difference",
    "word_ball_norm",
]
