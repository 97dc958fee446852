"""Decoding of 8-bit images and index-label segmentation maps to tensors."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .errors import DataError


def load_rgb(path: str | Path, size: tuple[int, int] | None = None) -> torch.Tensor:
    """Decode an 8-bit RGB image to a float32 (3, H, W) tensor in [0, 1].

    ``size`` is (height, width); mismatched images are bilinearly resized.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"image file not found: {path}")
    with Image.open(path) as img:
        img = img.convert("RGB")
        if size is not None and img.size != (size[1], size[0]):
            img = img.resize((size[1], size[0]), Image.BILINEAR)
        arr = np.asarray(img, dtype=np.float32) / 255.0
    return torch.from_numpy(arr).permute(2, 0, 1).contiguous()


def load_labels(path: str | Path, size: tuple[int, int] | None = None) -> torch.Tensor:
    """Decode a single-channel 8-bit index image to a long (H, W) tensor.

    Resizing, when needed, is nearest-neighbor so label values stay discrete.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"segmentation file not found: {path}")
    with Image.open(path) as img:
        img = img.convert("L")
        if size is not None and img.size != (size[1], size[0]):
            img = img.resize((size[1], size[0]), Image.NEAREST)
        arr = np.asarray(img, dtype=np.int64)
    return torch.from_numpy(arr)


def to_grayscale(path: str | Path) -> np.ndarray:
    """Decode to a float64 grayscale array in [0, 1] (for spectrum analysis)."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"image file not found: {path}")
    with Image.open(path) as img:
        arr = np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    return arr
