"""Python access to the embryolab core: stimulus generation, chance bounds and learning-curve analysis."""

from ._embryolab import (
    PROTOCOL_VERSION,
    analyze_logs,
    chance_upper,
    clopper_pearson,
    data_efficiency,
    generalisation_lag,
    moving_average,
    pink_noise_mask,
    render_child,
    run_dataset,
    run_gen,
    ssim,
    stage_seeds,
)

__all__ = [
    "PROTOCOL_VERSION",
    "analyze_logs",
    "chance_upper",
    "clopper_pearson",
    "data_efficiency",
    "generalisation_lag",
    "moving_average",
    "pink_noise_mask",
    "render_child",
    "run_dataset",
    "run_gen",
    "ssim",
    "stage_seeds",
]
