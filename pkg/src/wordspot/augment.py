"""Pixel normalization and random affine augmentation of word images.

A word image is an H x W float array in [0, 1] with 0 for background
and 1 for ink.  Scanned documents usually come as dark ink on light
paper, so normalization inverts by default to reach that convention.

Augmentation picks three fixed points in the middle of the image,
scales each coordinate by an independent uniform draw from [0.8, 1.1],
and warps with the affine map those three correspondences determine.
"""

import numpy as np

from wordspot.errors import DataError

# Relative source-point positions (x, y) as fractions of (W, H).
SOURCE_POINTS = ((0.35, 0.5), (0.65, 0.35), (0.65, 0.65))
SCALE_LOW = 0.8
SCALE_HIGH = 1.1
_MAX_RETRIES = 32


def normalize_pixels(raw, background="light"):
    """Map an 8-bit grayscale image to a [0, 1] word image, ink = 1.

    ``background`` names the source convention: "light" (dark ink on
    light paper — the usual scan) divides by 255 and inverts so paper
    maps to 0 and ink to 1; "dark" (bright ink on dark ground) only
    divides; ``None`` asserts the input is already a [0, 1] float image
    and passes it through unchanged (idempotent re-normalization).
    """
    raw = np.asarray(raw)
    if raw.size == 0:
        raise DataError("empty image")
    if raw.ndim != 2:
        raise DataError("expected a 2-d grayscale image, got %d-d" % raw.ndim)
    if background is None:
        img = raw.astype(np.float64)
        if img.min() < 0.0 or img.max() > 1.0:
            raise DataError("image marked pre-normalized has values outside [0, 1]")
        return img
    if background not in ("light", "dark"):
        raise DataError("unknown background convention %r" % (background,))
    if raw.min() < 0 or raw.max() > 255:
        raise DataError("8-bit image has values outside [0, 255]")
    img = raw.astype(np.float64) / 255.0
    if background == "light":
        img = 1.0 - img
    return img


def sample_augmentation_transform(width, height, rng):
    """Draw a random affine transform for a width x height image.

    Source points sit at fixed relative positions in the middle of the
    image; each destination coordinate is its source coordinate times
    an independent U[0.8, 1.1] draw.  Returns a 2x3 matrix ``M`` mapping
    homogeneous (x, y, 1) source points to destination points.
    """
    if width < 4 or height < 4:
        raise DataError("image too small to augment: %dx%d" % (width, height))
    src = np.array([(fx * width, fy * height) for fx, fy in SOURCE_POINTS])
    for _ in range(_MAX_RETRIES):
        scales = rng.uniform(SCALE_LOW, SCALE_HIGH, size=(3, 2))
        dst = src * scales
        # Degenerate (collinear) destinations cannot pin down an affine
        # map; the draw is continuous so this is a measure-zero guard.
        area2 = abs((dst[1, 0] - dst[0, 0]) * (dst[2, 1] - dst[0, 1])
                    - (dst[2, 0] - dst[0, 0]) * (dst[1, 1] - dst[0, 1]))
        if area2 > 1e-9 * max(width, height) ** 2:
            return solve_affine(src, dst)
    raise DataError("could not sample a non-degenerate transform")


def solve_affine(src, dst):
    """The unique affine map sending three source points to three targets."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    ones = np.ones((3, 1))
    a = np.hstack([src, ones])
    try:
        coeffs = np.linalg.solve(a, dst)
    except np.linalg.LinAlgError as exc:
        raise DataError("collinear source points: %s" % exc) from exc
    return coeffs.T


def identity_transform():
    return np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def invert_affine(transform):
    m = np.asarray(transform, dtype=np.float64)
    a, t = m[:, :2], m[:, 2]
    a_inv = np.linalg.inv(a)
    return np.hstack([a_inv, (-a_inv @ t)[:, None]])


def warp_image(image, transform):
    """Apply an affine transform with inverse-mapped bilinear sampling.

    Output has the input's size; samples falling outside the input fill
    with 0 (background).  Pixel (row r, column c) sits at coordinate
    (x=c, y=r).
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.size == 0:
        raise DataError("expected a non-empty 2-d word image")
    h, w = image.shape
    inv = invert_affine(transform)
    xs, ys = np.meshgrid(np.arange(w, dtype=np.float64),
                         np.arange(h, dtype=np.float64))
    sx = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    sy = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    out = np.zeros_like(image)
    for dy in (0, 1):
        for dx in (0, 1):
            xi = x0 + dx
            yi = y0 + dy
            weight = ((fx if dx else 1.0 - fx) * (fy if dy else 1.0 - fy))
            inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            vals = image[yi.clip(0, h - 1), xi.clip(0, w - 1)]
            out += np.where(inside, weight * vals, 0.0)
    return np.clip(out, 0.0, 1.0)


def augment_word_image(image, rng):
    """Convenience hook for the train loop: sample a transform and warp."""
    h, w = image.shape
    return warp_image(image, sample_augmentation_transform(w, h, rng))
