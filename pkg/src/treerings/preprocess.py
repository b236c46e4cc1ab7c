"""Resize, grayscale and contrast equalization of a pre-segmented slice image."""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np
from PIL import Image

CLAHE_CLIP_LIMIT = 10.0
CLAHE_TILE = 8
BACKGROUND = 255


@dataclass
class PreprocessedImage:
    gray: np.ndarray
    height: int
    width: int
    pith: tuple
    scale: tuple
    original_shape: tuple

    @property
    def cy(self) -> float:
        return self.pith[0]

    @property
    def cx(self) -> float:
        return self.pith[1]

    @property
    def background(self) -> np.ndarray:
        return self.gray == BACKGROUND


def background_mask(image: np.ndarray) -> np.ndarray:
    """Pixels that are exactly white in every channel."""
    if image.ndim == 2:
        return image == BACKGROUND
    return np.all(image == BACKGROUND, axis=2)


def resize_image(image: np.ndarray, height_out: int, width_out: int) -> np.ndarray:
    return np.asarray(Image.fromarray(image).resize((width_out, height_out), Image.LANCZOS))


def rescale_pith(cy: float, cx: float, height: int, width: int, height_out: int, width_out: int):
    return cy * height_out / height, cx * width_out / width


def to_gray(image: np.ndarray) -> np.ndarray:
    if image.ndim == 2:
        return image.astype(np.uint8)
    if image.shape[2] == 4:
        image = image[..., :3]
    return cv2.cvtColor(np.ascontiguousarray(image, dtype=np.uint8), cv2.COLOR_RGB2GRAY)


def equalize(gray: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """CLAHE on the foreground, with the background held at 255.

    The background is first filled with the foreground mean so the white field
    does not dominate tile histograms near the slice border.
    """
    if mask is None:
        mask = gray == BACKGROUND
    if mask.all():
        return gray.copy()
    work = gray.copy()
    work[mask] = int(round(float(gray[~mask].mean())))
    clahe = cv2.createCLAHE(clipLimit=CLAHE_CLIP_LIMIT, tileGridSize=(CLAHE_TILE, CLAHE_TILE))
    out = clahe.apply(work)
    # keep the background mask recoverable from intensities alone
    np.minimum(out, BACKGROUND - 1, out=out, where=~mask)
    out[mask] = BACKGROUND
    return out


def preprocess(image: np.ndarray, height_out: int | None, width_out: int | None,
               cy: float, cx: float) -> PreprocessedImage:
    if image.size == 0:
        raise ValueError("empty image")
    h, w = image.shape[:2]
    if not (0 <= cy < h and 0 <= cx < w):
        raise ValueError(f"pith ({cy}, {cx}) outside a {h}x{w} image")
    if height_out is not None and width_out is not None:
        if height_out <= 0 or width_out <= 0:
            raise ValueError("output dimensions must be positive")
        mask = background_mask(image)
        image = resize_image(image, height_out, width_out)
        # Lanczos ringing would blur the exact-white contract; carry the mask over instead
        mask = np.asarray(Image.fromarray(mask.astype(np.uint8) * 255).resize(
            (width_out, height_out), Image.NEAREST)) > 0
        cy, cx = rescale_pith(cy, cx, h, w, height_out, width_out)
    else:
        mask = background_mask(image)
        height_out, width_out = h, w
    gray = to_gray(image)
    gray[mask] = BACKGROUND
    # foreground that happens to be pure white would otherwise join the background
    gray[(gray == BACKGROUND) & ~mask] = BACKGROUND - 1
    gray = equalize(gray, mask)
    return PreprocessedImage(gray, height_out, width_out, (float(cy), float(cx)),
                             (height_out / h, width_out / w), (h, w))
