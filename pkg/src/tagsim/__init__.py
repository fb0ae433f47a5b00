"""Tagged-MRI simulation, harmonic phase extraction, and motion estimation.

The package simulates fading tagged-MRI movies with known dense motion,
extracts harmonic-phase (sharp) representations, registers frame pairs with
a multi-resolution variational optimizer under six similarity losses, and
scores the results against the simulated ground truth.
"""
from __future__ import annotations

from .image_ops import (
    bilinear_sample,
    warp_image,
    warp_mask,
    gradient,
    downsample2,
    upsample2,
    resize_bilinear,
    dft2,
    idft2,
)
from .tagging import (
    SpammParams,
    FadingCoeffs,
    fading_coeffs,
    fading_coeffs_iterative,
    steady_state,
    tag_pattern,
    frame_intensity,
)
from .simulate import (
    AnatomyParams,
    MotionParams,
    Movie,
    make_anatomy,
    make_motion_fields,
    add_rician_noise,
    make_movie,
    make_static_phantom,
    derive_seed,
)
from .harp import (
    HarpFilter,
    SharpExtractor,
    extract_harmonic_phase,
    harmonic_image,
    harp_window,
    movie_to_sharp,
    phase_difference,
    sharp_transform,
    wrap_phase,
)
from .losses import (
    LossConfig,
    LossEval,
    loss_value_and_grad,
    multichannel_value_and_grad,
    mse_loss,
    ncc_loss,
    mi_loss,
    ssim_loss,
    ngf_loss,
    mind_loss,
    mind_descriptor,
    smoothness,
)

from .register import (
    RegConfig,
    RegResult,
    register_pair,
    register_movie,
    VariationalRegistration,
)
from .metrics import (
    deformation_gradient,
    green_lagrange,
    max_principal_strain,
    field_mps,
    epe,
    mps95,
    dice,
)
from .io import read_raster, write_raster, read_pgm, write_pgm
from .experiment import (
    ExperimentConfig,
    build_channels,
    evaluate_dataset,
    export_strain_maps,
    load_config,
    load_manifest,
    manifest_movies,
    register_dataset,
    run_search,
    simulate_dataset,
    split_counts,
    summarize_rows,
    write_report,
)

__version__ = "0.1.0"

__all__ = [
    "bilinear_sample", "warp_image", "warp_mask", "gradient", "downsample2",
    "upsample2", "resize_bilinear", "dft2", "idft2",
    "RegConfig", "RegResult", "register_pair", "register_movie",
    "VariationalRegistration",
    "deformation_gradient", "green_lagrange", "max_principal_strain",
    "field_mps", "epe", "mps95", "dice",
    "read_raster", "write_raster", "read_pgm", "write_pgm",
    "SpammParams", "FadingCoeffs", "fading_coeffs", "fading_coeffs_iterative",
    "steady_state", "tag_pattern", "frame_intensity",
    "AnatomyParams", "MotionParams", "Movie", "make_anatomy",
    "make_motion_fields", "add_rician_noise", "make_movie",
    "make_static_phantom", "derive_seed",
    "HarpFilter", "SharpExtractor", "extract_harmonic_phase",
    "harmonic_image", "harp_window", "movie_to_sharp", "phase_difference",
    "sharp_transform", "wrap_phase",
    "LossConfig", "LossEval", "loss_value_and_grad",
    "multichannel_value_and_grad", "mse_loss", "ncc_loss", "mi_loss",
    "ssim_loss", "ngf_loss", "mind_loss", "mind_descriptor", "smoothness",
    "ExperimentConfig", "simulate_dataset", "register_dataset",
    "evaluate_dataset", "run_search", "write_report", "export_strain_maps",
    "build_channels", "load_config", "load_manifest", "manifest_movies",
    "split_counts", "summarize_rows",
]
