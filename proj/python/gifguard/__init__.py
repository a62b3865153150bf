"""GIF watermarking: codec, quality metrics, distortion simulator and trained models."""

import torch  # noqa: F401

from ._gifguard import (
    GifGuardError,
    Model,
    attack,
    ber,
    build_dataset,
    default_spec,
    gif_read,
    gif_write,
    lzw_decode,
    lzw_encode,
    psnr,
    ssim,
    stage_for_epoch,
    synth_face,
    train,
    vif_p,
)

__all__ = [
    "GifGuardError",
    "Model",
    "attack",
    "ber",
    "build_dataset",
    "default_spec",
    "gif_read",
    "gif_write",
    "lzw_decode",
    "lzw_encode",
    "psnr",
    "ssim",
    "stage_for_epoch",
    "synth_face",
    "train",
    "vif_p",
]
