"""Budget-aware sequential design for scaling-law fitting."""

from ._core import (
    DEFAULT_ALPHA,
    DEFAULT_FIT_STARTS,
    WARM_START_FACTOR,
    Basin,
    DomainError,
    FitResult,
    Instance,
    LawSpec,
    Posterior,
    PosteriorError,
    ValidationError,
    all_data_reference,
    estimate_posterior,
    evaluate,
    fit_multistart,
    generate_instance,
    load_instance,
    param_jacobian,
    registered_families,
    run_episode,
    save_instance,
    scaled_jacobian,
    score_candidates,
    target_r2,
    warm_start_size,
)

__all__ = [name for name in dir() if not name.startswith("_")]
