"""Deterministic ink-to-image conversion and binary PGM I/O.

Points are mapped with one uniform scale factor, consecutive points are joined
with Bresenham segments, and every line pixel is stamped as a square block to
give the stroke its width. Pixels are strictly 0 (ink) or 255 (background).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .ink import InkSample

INK, BACKGROUND = 0, 255
MARGIN = 2


class PGMFormatError(ValueError):
    pass


@dataclass
class RasterImage:
    """Single-channel 8-bit image, row-major, 255 = background."""

    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if self.pixels.ndim != 2:
            raise ValueError(f"raster pixels must be 2-d, got shape {self.pixels.shape}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def is_binary(self) -> bool:
        return bool(np.isin(self.pixels, (INK, BACKGROUND)).all())

    def to_input(self, dtype=np.float32) -> np.ndarray:
        """Model polarity: ink -> 1.0, background -> 0.0."""
        return ((255.0 - self.pixels) / 255.0).astype(dtype)

    def __eq__(self, other):
        return isinstance(other, RasterImage) and np.array_equal(self.pixels, other.pixels)


def bresenham(x0: int, y0: int, x1: int, y1: int) -> list[tuple[int, int]]:
    """Integer pixels on the segment from (x0, y0) to (x1, y1), endpoints included."""
    points = []
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        points.append((x0, y0))
        if x0 == x1 and y0 == y1:
            return points
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def _round(v: float) -> int:
    return math.floor(v + 0.5)


def render(
    sample: InkSample,
    target_height: int = 64,
    stroke_width: int = 2,
    max_width: int = 512,
) -> RasterImage:
    """Rasterize ``sample`` at ``target_height`` rows, width proportional.

    The vertical ink extent fills the rows between the margins; the width
    follows from the same scale, rounded up to an even count and capped at
    ``max_width`` (shrinking the content when the cap bites).
    """
    if not sample.strokes or sample.n_points == 0:
        raise ValueError("cannot render an empty sample")
    if target_height < 8 or target_height % 2:
        raise ValueError(f"target_height must be even and >= 8, got {target_height}")
    if stroke_width < 1:
        raise ValueError("stroke_width must be positive")
    if max_width % 2 or max_width < 2 * MARGIN + stroke_width + 2:
        raise ValueError(f"max_width must be even and leave room for the margins, got {max_width}")

    x0, y0, x1, y1 = sample.bbox()
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    ext_w, ext_h = x1 - x0, y1 - y0

    span_h = target_height - 2 * MARGIN - stroke_width
    scale = span_h / ext_h
    needed = 2 * MARGIN + _round(ext_w * scale) + stroke_width
    if needed > max_width:
        scale = min(scale, (max_width - 2 * MARGIN - stroke_width) / ext_w)
        needed = 2 * MARGIN + _round(ext_w * scale) + stroke_width
    width = min(needed + needed % 2, max_width)
    height = target_height
    off_y = MARGIN + (span_h - _round(ext_h * scale)) // 2

    pixels = np.full((height, width), BACKGROUND, dtype=np.uint8)

    def to_px(p):
        return MARGIN + _round((p[0] - x0) * scale), off_y + _round((p[1] - y0) * scale)

    for stroke in sample.strokes:
        pts = [to_px(p) for p in stroke]
        line = [pts[0]]
        for a, b in zip(pts, pts[1:]):
            line.extend(bresenham(*a, *b)[1:])
        for px, py in line:
            assert 0 <= px and px + stroke_width <= width, "ink point outside the raster"
            assert 0 <= py and py + stroke_width <= height, "ink point outside the raster"
            pixels[py : py + stroke_width, px : px + stroke_width] = INK
    return RasterImage(pixels)


def write_pgm(img: RasterImage) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def read_pgm(data: bytes) -> RasterImage:
    pos = 0
    fields = []
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise PGMFormatError("truncated PGM header")
        fields.append(m.group(1))
        pos = m.end()
    magic = fields[0].decode("ascii", "replace")
    if magic != "P5":
        raise PGMFormatError(f"unsupported PGM magic {magic!r} (only binary 'P5')")
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise PGMFormatError("non-integer PGM header field") from None
    if maxval != 255:
        raise PGMFormatError(f"unsupported maxval {maxval} (only 255)")
    pos += 1  # single whitespace byte after maxval
    body = data[pos : pos + width * height]
    if len(body) != width * height:
        raise PGMFormatError(f"PGM body has {len(body)} bytes, expected {width * height}")
    return RasterImage(np.frombuffer(body, dtype=np.uint8).reshape(height, width))
