"""Off-line image path: rasterize stroke logs and classify with a small CNN.

Rasterization scales the trajectory uniformly (aspect preserved) into a
centered box covering 90% of a square canvas and draws each stroke as
connected one-pixel midpoint lines, ink 1.0 on background 0.0. The result
is invariant to translation and uniform scaling of the input coordinates.
"""

from __future__ import annotations

import numpy as np

from .data import StrokeLog
from .model import ImageClassifier, count_params
from .nn import conv_apply, gap_apply

BOX_FRACTION = 0.9


def _midpoint_line(img: np.ndarray, x0: int, y0: int, x1: int, y1: int) -> None:
    # 8-connected midpoint/Bresenham segment
    dx = abs(x1 - x0)
    dy = abs(y1 - y0)
    sx = 1 if x1 >= x0 else -1
    sy = 1 if y1 >= y0 else -1
    err = dx - dy
    x, y = x0, y0
    while True:
        img[y, x] = 1.0
        if x == x1 and y == y1:
            return
        e2 = 2 * err
        if e2 > -dy:
            err -= dy
            x += sx
        if e2 < dx:
            err += dx
            y += sy


def rasterize(s: StrokeLog, size: int) -> np.ndarray:
    """Render a canonical sample onto a size x size float canvas in [0, 1]."""
    if size < 16:
        raise ValueError(f"canvas size must be >= 16, got {size}")
    pts = s.points()
    xs, ys = pts[:, 0], pts[:, 1]
    span = max(xs.max() - xs.min(), ys.max() - ys.min())
    img = np.zeros((size, size), dtype=np.float64)
    if span == 0.0:
        c = size // 2
        img[c, c] = 1.0
        return img
    scale = BOX_FRACTION * (size - 1) / span
    off_x = (size - 1 - scale * (xs.max() - xs.min())) / 2.0
    off_y = (size - 1 - scale * (ys.max() - ys.min())) / 2.0

    def to_px(x, y):
        col = int(round((x - xs.min()) * scale + off_x))
        row = int(round((y - ys.min()) * scale + off_y))
        return min(max(col, 0), size - 1), min(max(row, 0), size - 1)

    for stroke in s.stroke_arrays():
        cx, cy = to_px(stroke[0, 0], stroke[0, 1])
        img[cy, cx] = 1.0
        for x, y, _ in stroke[1:]:
            nx, ny = to_px(x, y)
            _midpoint_line(img, cx, cy, nx, ny)
            cx, cy = nx, ny
    return img


def build_custom_cnn(size: int, seed: int = 0, dtype=np.float64) -> ImageClassifier:
    """The from-scratch image classifier; see ImageClassifier for layers."""
    return ImageClassifier(image_size=size, seed=seed, dtype=dtype)


def cnn_forward(m: ImageClassifier, img: np.ndarray) -> float:
    """Probability that the rendered movement is human; eval mode."""
    return m.predict(img)


def write_pgm(img: np.ndarray, path: str) -> None:
    """Dump a [0, 1] grayscale image as binary PGM (P5) for inspection."""
    data = np.clip(np.asarray(img) * 255.0, 0, 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


__all__ = ["rasterize", "build_custom_cnn", "cnn_forward", "write_pgm",
           "conv_apply", "gap_apply", "count_params"]
