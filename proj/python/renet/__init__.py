"""Region ensemble network for 3D hand pose regression from depth images."""

from ._core import (
    Checkpoint,
    Error,
    InputError,
    generate_synthetic,
    load_dataset,
    lr_at,
    mean_3d_error,
    mean_average_precision,
    mean_precision,
    read_depth,
    run_cli,
    smooth_l1,
    success_curve,
    write_depth,
)

__all__ = [
    "Checkpoint",
    "Error",
    "InputError",
    "generate_synthetic",
    "load_dataset",
    "lr_at",
    "mean_3d_error",
    "mean_average_precision",
    "mean_precision",
    "read_depth",
    "run_cli",
    "smooth_l1",
    "success_curve",
    "write_depth",
]
