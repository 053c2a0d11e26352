"""Stroke-based glyph templates and a deterministic word rasterizer.

Each lowercase letter is a set of polylines in the unit square
(x right, y down).  A word renders as horizontally concatenated
character cells; per-character jitter (shift and scale, drawn from the
caller's rng in a fixed order) makes repeated renderings of the same
word class-consistent but not identical.  Strokes are drawn by stamping
small Gaussian blobs along each segment, giving antialiased ink of
roughly two pixels width.  Output is a float image in [0, 1] with
1 = ink, 0 = background.
"""

import numpy as np

from wordspot.errors import DataError


def _loop(cx, cy, rx, ry, n=12):
    """Closed ellipse-ish polyline used for bowls and rings."""
    angles = np.linspace(0.0, 2.0 * np.pi, n + 1)
    return tuple((cx + rx * np.cos(a), cy + ry * np.sin(a)) for a in angles)


_ARCH = ((0.15, 0.95), (0.15, 0.45), (0.3, 0.28), (0.6, 0.28), (0.78, 0.45), (0.78, 0.95))

GLYPHS = {
    "a": (_loop(0.45, 0.62, 0.3, 0.3), ((0.75, 0.32), (0.75, 0.95))),
    "b": (((0.2, 0.05), (0.2, 0.95)), _loop(0.5, 0.65, 0.3, 0.28)),
    "c": (((0.8, 0.4), (0.6, 0.3), (0.35, 0.3), (0.2, 0.5), (0.2, 0.75),
           (0.35, 0.95), (0.6, 0.95), (0.8, 0.85)),),
    "d": (((0.78, 0.05), (0.78, 0.95)), _loop(0.48, 0.65, 0.3, 0.28)),
    "e": (((0.18, 0.62), (0.8, 0.62), (0.8, 0.45), (0.6, 0.3), (0.35, 0.3),
           (0.18, 0.5), (0.18, 0.75), (0.35, 0.95), (0.7, 0.95)),),
    "f": (((0.7, 0.1), (0.45, 0.05), (0.35, 0.2), (0.35, 0.95)),
          ((0.15, 0.4), (0.65, 0.4))),
    "g": (_loop(0.45, 0.5, 0.28, 0.25), ((0.73, 0.28), (0.73, 0.8), (0.55, 0.95),
                                         (0.25, 0.92))),
    "h": (((0.18, 0.05), (0.18, 0.95)),
          ((0.18, 0.5), (0.4, 0.3), (0.65, 0.3), (0.8, 0.5), (0.8, 0.95))),
    "i": (((0.5, 0.35), (0.5, 0.95)), ((0.5, 0.08), (0.5, 0.16))),
    "j": (((0.6, 0.35), (0.6, 0.82), (0.45, 0.95), (0.25, 0.9)),
          ((0.6, 0.08), (0.6, 0.16))),
    "k": (((0.2, 0.05), (0.2, 0.95)), ((0.75, 0.3), (0.2, 0.65)),
          ((0.45, 0.52), (0.8, 0.95))),
    "l": (((0.5, 0.05), (0.5, 0.88), (0.62, 0.95)),),
    "m": (((0.12, 0.95), (0.12, 0.3)),
          ((0.12, 0.45), (0.28, 0.28), (0.42, 0.4), (0.42, 0.95)),
          ((0.42, 0.45), (0.6, 0.28), (0.78, 0.4), (0.78, 0.95))),
    "n": (_ARCH,),
    "o": (_loop(0.5, 0.62, 0.3, 0.3),),
    "p": (((0.2, 0.3), (0.2, 0.95)), _loop(0.5, 0.5, 0.28, 0.22)),
    "q": (_loop(0.45, 0.5, 0.28, 0.22), ((0.73, 0.3), (0.73, 0.95), (0.85, 0.82))),
    "r": (((0.25, 0.3), (0.25, 0.95)), ((0.25, 0.5), (0.45, 0.3), (0.72, 0.3))),
    "s": (((0.78, 0.38), (0.6, 0.28), (0.35, 0.3), (0.25, 0.45), (0.4, 0.58),
           (0.65, 0.65), (0.76, 0.78), (0.6, 0.93), (0.32, 0.93), (0.18, 0.85)),),
    "t": (((0.45, 0.08), (0.45, 0.82), (0.6, 0.95), (0.75, 0.9)),
          ((0.2, 0.35), (0.72, 0.35))),
    "u": (((0.2, 0.3), (0.2, 0.78), (0.38, 0.95), (0.62, 0.95), (0.78, 0.78),
           (0.78, 0.3)), ((0.78, 0.78), (0.78, 0.95))),
    "v": (((0.15, 0.3), (0.5, 0.95)), ((0.5, 0.95), (0.85, 0.3))),
    "w": (((0.1, 0.3), (0.3, 0.95)), ((0.3, 0.95), (0.5, 0.45)),
          ((0.5, 0.45), (0.7, 0.95)), ((0.7, 0.95), (0.9, 0.3))),
    "x": (((0.15, 0.3), (0.85, 0.95)), ((0.85, 0.3), (0.15, 0.95))),
    "y": (((0.2, 0.3), (0.5, 0.72)), ((0.85, 0.3), (0.4, 0.95), (0.2, 0.88))),
    "z": (((0.2, 0.3), (0.8, 0.3), (0.2, 0.95), (0.8, 0.95)),),
}


def supported_characters():
    return "".join(sorted(GLYPHS))


def default_char_width(height):
    return max(10, int(round(height * 0.56)))


def render_word(word, height=32, rng=None, char_width=None, margin=2,
                jitter=1.5, scale_jitter=0.1, sigma=0.62):
    """Rasterize a word into an ink-on-background float image.

    With an rng, every character cell gets an independent shift
    (uniform in +-jitter pixels) and axis scale (uniform in
    1 +- scale_jitter); without one the canonical glyphs are drawn.
    The image width is margin + cells + margin, so it grows linearly
    with the word length.
    """
    if not word:
        raise DataError("cannot render an empty word")
    if height < 8:
        raise DataError("render height must be at least 8")
    cw = default_char_width(height) if char_width is None else int(char_width)
    width = 2 * margin + cw * len(word)
    canvas = np.zeros((height, width), dtype=np.float64)
    cell_h = height - 2 * margin
    for pos, ch in enumerate(word):
        strokes = GLYPHS.get(ch)
        if strokes is None:
            raise DataError("unsupported character %r (no glyph)" % ch)
        if rng is not None:
            dx = rng.uniform(-jitter, jitter)
            dy = rng.uniform(-jitter, jitter)
            sx = rng.uniform(1.0 - scale_jitter, 1.0 + scale_jitter)
            sy = rng.uniform(1.0 - scale_jitter, 1.0 + scale_jitter)
        else:
            dx = dy = 0.0
            sx = sy = 1.0
        # Glyph box: the cell, shrunk a little so strokes stay inside
        # after jitter.
        box_w = (cw - 2) * sx
        box_h = (cell_h - 2) * sy
        x0 = margin + pos * cw + 1 + dx + (cw - 2 - box_w) / 2.0
        y0 = margin + 1 + dy + (cell_h - 2 - box_h) / 2.0
        for stroke in strokes:
            pts = np.asarray(stroke, dtype=np.float64)
            xs = x0 + pts[:, 0] * box_w
            ys = y0 + pts[:, 1] * box_h
            for i in range(len(pts) - 1):
                _draw_segment(canvas, xs[i], ys[i], xs[i + 1], ys[i + 1], sigma)
    return np.clip(canvas, 0.0, 1.0)


def _draw_segment(canvas, x_a, y_a, x_b, y_b, sigma):
    """Stamp Gaussian blobs along the segment (spacing ~ half a pixel)."""
    length = float(np.hypot(x_b - x_a, y_b - y_a))
    n = max(2, int(np.ceil(length * 2.0)) + 1)
    ts = np.linspace(0.0, 1.0, n)
    xs = x_a + ts * (x_b - x_a)
    ys = y_a + ts * (y_b - y_a)
    h, w = canvas.shape
    cx = np.round(xs).astype(np.int64)
    cy = np.round(ys).astype(np.int64)
    inv = 1.0 / (2.0 * sigma * sigma)
    for dy in range(-2, 3):
        for dx in range(-2, 3):
            xi = cx + dx
            yi = cy + dy
            ok = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            if not np.any(ok):
                continue
            d2 = (xi - xs) ** 2 + (yi - ys) ** 2
            np.add.at(canvas, (yi[ok], xi[ok]), 0.9 * np.exp(-d2[ok] * inv))
