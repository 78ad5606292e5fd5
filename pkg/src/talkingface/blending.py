"""Morphology-augmented face blending.

Swaps predicted expression coefficients into target-frame parameters, cleans
the rendered face mask with binary morphology (closing fills the inner-mouth
hole; random dilation/erosion jitters the outline during training), and
composites rendered and target frames pixel-wise.

Structuring elements are all-ones squares with odd sides.  Outside-image
pixels count as background for both dilation and erosion, so erosion shrinks
masks at the borders.
"""

from __future__ import annotations

import numpy as np

from .facemodel import CoeffSet

DEFAULT_KERNEL_SIZES = (3, 5, 7)
DEFAULT_CLOSE_SIZE = 9


def combine_params(target: CoeffSet, predicted_beta) -> CoeffSet:
    """Copy of `target` with its expression replaced; everything else untouched."""
    predicted_beta = np.asarray(predicted_beta, dtype=np.float64).ravel()
    if predicted_beta.shape != target.beta.shape:
        raise ValueError(
            f"predicted beta has length {predicted_beta.shape[0]}, "
            f"expected {target.beta.shape[0]}"
        )
    return target.with_beta(predicted_beta)


def structuring_element(size: int) -> np.ndarray:
    if size % 2 == 0 or size < 1:
        raise ValueError(f"structuring element side must be odd and positive, got {size}")
    return np.ones((size, size), dtype=bool)


def _as_mask(mask):
    m = np.asarray(mask)
    if m.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {m.shape}")
    return m.astype(bool)


def morph_dilate(mask, size: int) -> np.ndarray:
    """Binary dilation by an odd all-ones square; zero-padded borders."""
    m = _as_mask(mask)
    structuring_element(size)
    r = size // 2
    padded = np.pad(m, r)
    out = np.zeros_like(m)
    for di in range(size):
        for dj in range(size):
            out |= padded[di : di + m.shape[0], dj : dj + m.shape[1]]
    return out.astype(np.uint8)


def morph_erode(mask, size: int) -> np.ndarray:
    """Binary erosion; outside-image treated as 0, so masks shrink at borders."""
    m = _as_mask(mask)
    structuring_element(size)
    r = size // 2
    padded = np.pad(m, r)
    out = np.ones_like(m)
    for di in range(size):
        for dj in range(size):
            out &= padded[di : di + m.shape[0], dj : dj + m.shape[1]]
    return out.astype(np.uint8)


def morph_close(mask, size: int) -> np.ndarray:
    """Closing (dilate then erode): fills holes up to the kernel scale."""
    return morph_erode(morph_dilate(mask, size), size)


def augment_mask(
    mask,
    rng,
    kernel_sizes=DEFAULT_KERNEL_SIZES,
    close_size=DEFAULT_CLOSE_SIZE,
) -> np.ndarray:
    """Close the mask, then randomly dilate or erode it (training-time jitter).

    Exactly one of dilation/erosion is applied, with a kernel size drawn
    uniformly from `kernel_sizes`; deterministic for a seeded `rng`.
    """
    closed = morph_close(mask, close_size)
    dilate = bool(rng.integers(0, 2))
    size = int(rng.choice(np.asarray(kernel_sizes)))
    return morph_dilate(closed, size) if dilate else morph_erode(closed, size)


def blend(rendered, target, face_mask) -> np.ndarray:
    """Pixel-wise composite: rendered where the mask is 1, target elsewhere.

    Bit-exact on both sides of the mask: unmasked pixels equal the target
    image exactly (background preservation), masked pixels the rendered one.
    """
    rendered = np.asarray(rendered, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    mask = np.asarray(face_mask, dtype=np.float64)
    if rendered.shape != target.shape:
        raise ValueError(f"image shapes differ: {rendered.shape} vs {target.shape}")
    if mask.shape != rendered.shape[:2]:
        raise ValueError(
            f"mask shape {mask.shape} does not match image {rendered.shape[:2]}"
        )
    if rendered.ndim == 3:
        mask = mask[..., None]
    return rendered * mask + target * (1.0 - mask)
