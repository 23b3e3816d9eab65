"""Image I/O and value-range conversions.

All in-memory images are float32 torch tensors shaped (C, H, W) or
(N, C, H, W) with values in [-1, 1]. On disk they are 8-bit RGB PNGs.
"""

from __future__ import annotations

import os

import numpy as np
import torch
from PIL import Image

from .errors import LoadError, ValidationError


def from_uint8(arr: np.ndarray) -> torch.Tensor:
    """Convert an (H, W, C) uint8 array to a float32 (C, H, W) tensor in [-1, 1]."""
    if arr.dtype != np.uint8:
        raise ValidationError(f"expected uint8 array, got {arr.dtype}")
    scaled = arr.astype(np.float32) / 127.5 - 1.0
    return torch.from_numpy(scaled).permute(2, 0, 1).contiguous()


def to_uint8(image: torch.Tensor) -> np.ndarray:
    """Convert a (C, H, W) tensor in [-1, 1] back to an (H, W, C) uint8 array.

    Exact inverse of :func:`from_uint8` for every 8-bit value.
    """
    arr = image.detach().cpu().numpy()
    out = np.rint((arr + 1.0) * 127.5)
    return np.clip(out, 0, 255).astype(np.uint8).transpose(1, 2, 0)


def load_image(path: str | os.PathLike, size: int | None = None) -> torch.Tensor:
    """Load an image file as a (3, H, W) tensor in [-1, 1], optionally resized."""
    try:
        with Image.open(path) as img:
            img = img.convert("RGB")
            if size is not None and img.size != (size, size):
                img = img.resize((size, size), Image.BILINEAR)
            arr = np.asarray(img, dtype=np.uint8)
    except FileNotFoundError:
        raise LoadError(f"image file not found: {path}") from None
    except OSError as exc:
        raise LoadError(f"cannot decode image {path}: {exc}") from None
    return from_uint8(arr)


def save_image(image: torch.Tensor, path: str | os.PathLike) -> None:
    """Write a (C, H, W) tensor in [-1, 1] as an 8-bit RGB PNG."""
    if image.dim() != 3:
        raise ValidationError(f"expected a single (C, H, W) image, got shape {tuple(image.shape)}")
    Image.fromarray(to_uint8(image)).save(path)


def image_grid(images: torch.Tensor, rows: int, cols: int, pad: int = 2) -> torch.Tensor:
    """Tile (N, C, H, W) images into one (C, H', W') mosaic, row-major.

    Missing cells (N < rows*cols) are filled with the background value -1.
    """
    if images.dim() != 4:
        raise ValidationError(f"expected (N, C, H, W) images, got shape {tuple(images.shape)}")
    n, c, h, w = images.shape
    if n > rows * cols:
        raise ValidationError(f"{n} images do not fit a {rows}x{cols} grid")
    canvas = torch.full(
        (c, rows * h + (rows + 1) * pad, cols * w + (cols + 1) * pad),
        -1.0,
        dtype=images.dtype,
    )
    for idx in range(n):
        r, q = divmod(idx, cols)
        top = pad + r * (h + pad)
        left = pad + q * (w + pad)
        canvas[:, top : top + h, left : left + w] = images[idx]
    return canvas
