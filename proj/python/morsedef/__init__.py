"""Python bindings for the morsedef C++ core."""

from ._core import (
    BettiReport,
    DecayProfile,
    DimensionMismatch,
    EmptyRegion,
    Error,
    FlowConfig,
    GradientTooSmall,
    GridRegion,
    GridSpec,
    GridTooSmall,
    InvalidProfile,
    OnSingularSet,
    OutOfRange,
    PreconditionViolation,
    ResolutionTooCoarse,
    ScalarField,
    StepLimit,
    ascend_to_level,
    betti,
    betti_mask,
    calibrate_level_along_ray,
    check_fast_decreasing,
    descend,
    gradient_check,
    knot_energy_field,
    quadrifolium_field,
    radial_field,
    retract,
    retract_batch,
    retract_detailed,
    run_cli,
    transform,
    verify_lipschitz,
    verify_retraction_consistency,
    voxelize,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
