"""Affine geometry between camera views.

Transforms are 2x3 row-major matrices acting on homogeneous pixel
coordinates [x, y, 1]. Pixel (ix, iy) has its center at (ix + 0.5,
iy + 0.5); warps inverse-map output pixel centers into the source frame,
images via bilinear interpolation and label masks via nearest neighbor.
Samples falling outside the source are black (0) for images and class 0
for masks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, UsageError


@dataclass(frozen=True, eq=False)
class AffineTransform:
    matrix: np.ndarray = field(default_factory=lambda: np.eye(2, 3))

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (2, 3):
            raise UsageError(f"affine matrix must be 2x3, got {m.shape}")
        object.__setattr__(self, "matrix", m)

    @staticmethod
    def identity() -> "AffineTransform":
        return AffineTransform(np.eye(2, 3))

    @staticmethod
    def translation(tx: float, ty: float) -> "AffineTransform":
        return AffineTransform(np.array([[1.0, 0.0, tx], [0.0, 1.0, ty]]))

    @property
    def linear(self) -> np.ndarray:
        return self.matrix[:, :2]

    @property
    def offset(self) -> np.ndarray:
        return self.matrix[:, 2]

    def apply(self, x, y):
        """Transform coordinate arrays elementwise."""
        m = self.matrix
        return (m[0, 0] * x + m[0, 1] * y + m[0, 2],
                m[1, 0] * x + m[1, 1] * y + m[1, 2])

    def as_rows(self) -> list[float]:
        return [float(v) for v in self.matrix.reshape(-1)]


def compose(after: AffineTransform, before: AffineTransform) -> AffineTransform:
    """The transform applying `before` first, then `after`."""
    lin = after.linear @ before.linear
    off = after.linear @ before.offset + after.offset
    return AffineTransform(np.concatenate([lin, off[:, None]], axis=1))


def invert(t: AffineTransform) -> AffineTransform:
    det = float(np.linalg.det(t.linear))
    if abs(det) < 1e-12:
        raise ConfigurationError("affine transform has a singular linear part")
    inv = np.linalg.inv(t.linear)
    return AffineTransform(np.concatenate([inv, (-inv @ t.offset)[:, None]], axis=1))


def max_scale(t: AffineTransform) -> float:
    """Largest singular value of the linear part: the peak length scaling."""
    return float(np.linalg.svd(t.linear, compute_uv=False)[0])


def _source_centers(t: AffineTransform, out_shape):
    """Source-frame coordinates of every output pixel center under t."""
    h, w = out_shape
    inv = invert(t)
    xs = np.arange(w, dtype=np.float64) + 0.5
    ys = np.arange(h, dtype=np.float64) + 0.5
    gx, gy = np.meshgrid(xs, ys)
    return inv.apply(gx, gy)


def warp_image(image: np.ndarray, t: AffineTransform, out_shape=None) -> np.ndarray:
    """Resample an image into the target frame of t (bilinear, zero fill).

    image is (H, W) or (H, W, C); t maps source pixel coordinates to
    target pixel coordinates.
    """
    image = np.asarray(image)
    if image.ndim not in (2, 3):
        raise UsageError(f"warp_image expects (H, W) or (H, W, C), got {image.shape}")
    src_h, src_w = image.shape[:2]
    out_shape = tuple(out_shape) if out_shape is not None else (src_h, src_w)
    sx, sy = _source_centers(t, out_shape)

    tx, ty = sx - 0.5, sy - 0.5
    x0 = np.floor(tx).astype(np.int64)
    y0 = np.floor(ty).astype(np.int64)
    fx = (tx - x0).astype(image.dtype if np.issubdtype(image.dtype, np.floating) else np.float64)
    fy = (ty - y0).astype(fx.dtype)

    out = np.zeros(out_shape + image.shape[2:], dtype=image.dtype)
    for dy in (0, 1):
        for dx in (0, 1):
            xi, yi = x0 + dx, y0 + dy
            valid = (xi >= 0) & (xi < src_w) & (yi >= 0) & (yi < src_h)
            weight = (fx if dx else 1.0 - fx) * (fy if dy else 1.0 - fy)
            weight = np.where(valid, weight, 0.0)
            sample = image[np.clip(yi, 0, src_h - 1), np.clip(xi, 0, src_w - 1)]
            if image.ndim == 3:
                weight = weight[:, :, None]
            out += (weight * sample).astype(out.dtype, copy=False)
    return out


def warp_labels(mask: np.ndarray, t: AffineTransform, out_shape=None) -> np.ndarray:
    """Resample an integer mask (nearest neighbor, class 0 fill)."""
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise UsageError(f"warp_labels expects (H, W), got {mask.shape}")
    if not np.issubdtype(mask.dtype, np.integer):
        raise UsageError("warp_labels needs an integer mask")
    src_h, src_w = mask.shape
    out_shape = tuple(out_shape) if out_shape is not None else (src_h, src_w)
    sx, sy = _source_centers(t, out_shape)
    xi = np.floor(sx).astype(np.int64)
    yi = np.floor(sy).astype(np.int64)
    valid = (xi >= 0) & (xi < src_w) & (yi >= 0) & (yi < src_h)
    out = np.zeros(out_shape, dtype=mask.dtype)
    out[valid] = mask[yi[valid], xi[valid]]
    return out


def inter_view_transform(manifest, view_a: int, view_b: int) -> AffineTransform:
    """Pixel mapping from view_a's frame into view_b's frame.

    Accepts a dataset manifest or a plain sequence of per-view transforms.
    """
    views = getattr(manifest, "views", manifest)
    try:
        ta, tb = views[view_a], views[view_b]
    except (IndexError, KeyError):
        raise ConfigurationError(
            f"manifest has {len(views)} views; pair ({view_a}, {view_b}) is invalid") from None
    return compose(tb, invert(ta))
