"""
Image output and comparison.

Rendered frames are (H, W, 4) premultiplied rgba arrays; writing drops alpha,
which is the same as compositing over black. PPM (P6) is always available,
PNG goes through matplotlib.
"""

import os

import matplotlib
import numpy as np
from matplotlib import image as mpimg

from common.errors import ImageShapeError
from common.scene_paths import ensure_dirs_for

DIFF_COLORMAP = "inferno"


def to_uint8(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    rgb = img[..., :3]
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)


def write_ppm(path: str, image) -> None:
    rgb = image if np.asarray(image).dtype == np.uint8 else to_uint8(image)
    h, w = rgb.shape[:2]
    ensure_dirs_for(path)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(rgb[..., :3]).tobytes())


def read_ppm(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P6" or int(tokens[3]) != 255:
        raise ValueError(f"{path}: only binary 8-bit PPM (P6) is supported")
    w, h = int(tokens[1]), int(tokens[2])
    pixels = np.frombuffer(data[pos + 1:pos + 1 + w * h * 3], dtype=np.uint8)
    if len(pixels) != w * h * 3:
        raise ValueError(f"{path}: truncated pixel data")
    return pixels.reshape(h, w, 3).copy()


def write_png(path: str, image) -> None:
    rgb = image if np.asarray(image).dtype == np.uint8 else to_uint8(image)
    ensure_dirs_for(path)
    mpimg.imsave(path, rgb)


def save_image(path: str, image) -> None:
    ext = os.path.splitext(path)[1].lower()
    if ext == ".png":
        write_png(path, image)
    elif ext in (".ppm", ""):
        write_ppm(path, image)
    else:
        raise ValueError(f"unsupported image format {ext!r} (use .ppm or .png)")


def colorize(values, cmap: str = DIFF_COLORMAP, vmax=None) -> np.ndarray:
    """Map non-negative values through a colormap; exact zeros stay black."""
    v = np.asarray(values, dtype=np.float64)
    top = float(v.max()) if vmax is None and v.size else (vmax or 0.0)
    norm = v / top if top > 0 else np.zeros_like(v)
    rgb = np.asarray(matplotlib.colormaps[cmap](norm), dtype=np.float64)[..., :3]
    rgb[v == 0] = 0.0
    return rgb


def diff_images(a, b, cmap: str = DIFF_COLORMAP) -> tuple[np.ndarray, float, float]:
    """(L2 heatmap rgb, max per-channel |a - b|, mean per-pixel rgb L2)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[:2] != b.shape[:2]:
        raise ImageShapeError(f"image sizes differ: {a.shape[:2]} vs {b.shape[:2]}")
    delta = a[..., :3] - b[..., :3]
    l2 = np.sqrt((delta ** 2).sum(axis=-1))
    max_abs = float(np.abs(delta).max()) if delta.size else 0.0
    mean_l2 = float(l2.mean()) if l2.size else 0.0
    return colorize(l2, cmap), max_abs, mean_l2


def l2_map(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[:2] != b.shape[:2]:
        raise ImageShapeError(f"image sizes differ: {a.shape[:2]} vs {b.shape[:2]}")
    return np.sqrt(((a[..., :3] - b[..., :3]) ** 2).sum(axis=-1))
