"""Calibration-free parallel MRI reconstruction with an unrolled network."""

from ._core import (
    ContractError,
    FormatError,
    Network,
    ShapeError,
    cartesian_mask,
    dft2,
    gradcheck,
    idft2,
    load_sample,
    make_sample,
    phantom,
    psnr,
    rmse_image,
    rmse_multicoil,
    rss,
    ssim,
)

__all__ = [
    "ContractError",
    "FormatError",
    "Network",
    "ShapeError",
    "cartesian_mask",
    "dft2",
    "gradcheck",
    "idft2",
    "load_sample",
    "make_sample",
    "phantom",
    "psnr",
    "rmse_image",
    "rmse_multicoil",
    "rss",
    "ssim",
]
