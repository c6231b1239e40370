"""Heatmap rendering for attribution maps.

Maps are reduced to one value per pixel (channels summed), min-max
normalized, and written as binary PPM (P6); PNG additionally when Pillow
is installed. An all-equal map renders as uniform mid-gray.
"""

import numpy as np

from .errors import ShapeError


def write_ppm(path, rgb):
    """Writes a uint8 (H,W,3) array as binary P6."""
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(rgb.tobytes())


def _try_write_png(path, rgb):
    try:
        from PIL import Image
    except ImportError:
        return False
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")
    return True


def _normalize(per_pixel):
    lo, hi = per_pixel.min(), per_pixel.max()
    if hi == lo:
        return np.full_like(per_pixel, 0.5)
    return (per_pixel - lo) / (hi - lo)


def _colorize(t, colormap):
    if colormap == "gray":
        level = np.round(t * 255).astype(np.uint8)
        return np.stack([level] * 3, axis=-1)
    if colormap == "diverging":
        # blue (0) -> white (0.5) -> red (1)
        low = np.clip(t * 2.0, 0.0, 1.0)
        high = np.clip((t - 0.5) * 2.0, 0.0, 1.0)
        r = np.round(low * 255).astype(np.uint8)
        g = np.round((low - high) * 255).astype(np.uint8)
        b = np.round((1.0 - high) * 255).astype(np.uint8)
        return np.stack([r, g, b], axis=-1)
    raise ValueError(f"unknown colormap {colormap!r}")


def render_heatmap(values, image_shape, out_path, colormap="gray"):
    """Renders attribution values to image_shape=(H,W) and writes out_path.

    values of size C*H*W have their channel scores summed per pixel. A .png
    path needs Pillow; any other extension gets a P6 PPM.
    """
    values = np.asarray(values, dtype=np.float64)
    h, w = (int(d) for d in image_shape)
    if h <= 0 or w <= 0 or values.size == 0 or values.size % (h * w) != 0:
        raise ShapeError(f"cannot reduce {values.size} values to {h}x{w} pixels")
    per_pixel = values.reshape(-1, h, w).sum(axis=0)
    rgb = _colorize(_normalize(per_pixel), colormap)
    out_path = str(out_path)
    if out_path.lower().endswith(".png"):
        if not _try_write_png(out_path, rgb):
            raise ShapeError("PNG output requires Pillow; use a .ppm path instead")
    else:
        write_ppm(out_path, rgb)
    return out_path
