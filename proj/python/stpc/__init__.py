"""Spatial transformer point convolution (float64, CPU)."""

from ._stpc import (
    Model,
    anisotropic_conv,
    compute_metrics,
    decorrelation_loss,
    encode_directions,
    gen_synthetic,
    knn,
    nearest_upsample,
    random_subsample,
    run_cli,
    spatial_transform,
)

__all__ = [
    "Model",
    "anisotropic_conv",
    "cli",
    "compute_metrics",
    "decorrelation_loss",
    "encode_directions",
    "gen_synthetic",
    "knn",
    "nearest_upsample",
    "random_subsample",
    "run_cli",
    "spatial_transform",
]


def cli(*args):
    """Run an `stpc` subcommand, raising on a non-zero exit code."""
    code, out, err = run_cli([str(a) for a in args])
    if code != 0:
        raise RuntimeError(f"stpc {' '.join(map(str, args))} exited {code}: {err.strip()}")
    return out
