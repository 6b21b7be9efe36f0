"""LAB raster encoding of feature images, point file formats, rendering.

The density/correlation image convention: lightness L holds density
(0 = black = maximum ink), and the latent coordinate is stored in the AB
chroma plane as u = (a + 128)/255, v = (b + 128)/255. Conversions follow
the standard sRGB (D65) <-> CIELAB transform.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image

from .types import FeatureImage, PointPattern
from .util import atomic_write_bytes, atomic_write_text

# D65 reference white and the sRGB primaries matrix
_WHITE = np.array([0.95047, 1.0, 1.08883])
_RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_XYZ_TO_RGB = np.linalg.inv(_RGB_TO_XYZ)
_EPS = 216.0 / 24389.0
_KAPPA = 24389.0 / 27.0


def _srgb_to_linear(s: np.ndarray) -> np.ndarray:
    return np.where(s <= 0.04045, s / 12.92, ((s + 0.055) / 1.055) ** 2.4)


def _linear_to_srgb(lin: np.ndarray) -> np.ndarray:
    lin = np.maximum(lin, 0.0)
    return np.where(lin <= 0.0031308, 12.92 * lin,
                    1.055 * lin ** (1.0 / 2.4) - 0.055)


def _f_lab(t: np.ndarray) -> np.ndarray:
    return np.where(t > _EPS, np.cbrt(t), (_KAPPA * t + 16.0) / 116.0)


def rgb_to_lab(r, g, b):
    """8-bit sRGB to CIELAB (D65). Accepts scalars or equal-shape arrays;
    returns (L, a, b) as float arrays/scalars."""
    rgb = np.stack(np.broadcast_arrays(np.asarray(r, dtype=np.float64),
                                       np.asarray(g, dtype=np.float64),
                                       np.asarray(b, dtype=np.float64)),
                   axis=-1) / 255.0
    xyz = _srgb_to_linear(rgb) @ _RGB_TO_XYZ.T
    fxyz = _f_lab(xyz / _WHITE)
    L = 116.0 * fxyz[..., 1] - 16.0
    a = 500.0 * (fxyz[..., 0] - fxyz[..., 1])
    bb = 200.0 * (fxyz[..., 1] - fxyz[..., 2])
    return L, a, bb


def lab_to_rgb(L, a, b):
    """CIELAB (D65) to 8-bit sRGB with gamut clamping; inverse of
    rgb_to_lab. Returns integer arrays/scalars."""
    L = np.asarray(L, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    fy = (L + 16.0) / 116.0
    fx = fy + a / 500.0
    fz = fy - b / 200.0
    xr = np.where(fx ** 3 > _EPS, fx ** 3, (116.0 * fx - 16.0) / _KAPPA)
    yr = np.where(L > _KAPPA * _EPS, fy ** 3, L / _KAPPA)
    zr = np.where(fz ** 3 > _EPS, fz ** 3, (116.0 * fz - 16.0) / _KAPPA)
    xyz = np.stack([xr, yr, zr], axis=-1) * _WHITE
    rgb = np.clip(_linear_to_srgb(xyz @ _XYZ_TO_RGB.T), 0.0, 1.0)
    out = _round_half_away(rgb * 255.0).astype(np.int64)
    return out[..., 0], out[..., 1], out[..., 2]


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def load_feature_image(path) -> FeatureImage:
    """Decode an 8-bit RGB(A) PNG into L plus latent (u, v) channels."""
    try:
        with Image.open(path) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
    except Exception as exc:
        raise ValueError(f"cannot load feature image {path}: {exc}") from exc
    L, a, b = rgb_to_lab(rgb[..., 0], rgb[..., 1], rgb[..., 2])
    u = np.clip((a + 128.0) / 255.0, 0.0, 1.0)
    v = np.clip((b + 128.0) / 255.0, 0.0, 1.0)
    return FeatureImage(L=np.clip(L, 0.0, 100.0), u=u, v=v)


def save_feature_image(img: FeatureImage, path) -> None:
    """Encode a FeatureImage as an 8-bit RGB PNG (gamut-clamped LAB).

    The latent mapping a = round(255 u - 128) rounds half away from zero.
    """
    img.validate()
    a = _round_half_away(255.0 * img.u - 128.0)
    b = _round_half_away(255.0 * img.v - 128.0)
    r, g, bb = lab_to_rgb(img.L, a, b)
    rgb = np.stack([r, g, bb], axis=-1).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(rgb, mode="RGB").save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def save_points_csv(P: PointPattern, path) -> None:
    """Write points as CSV with header x,y or x,y,r at %.9g precision."""
    lines = []
    if P.radii is None:
        lines.append("x,y")
        for x, y in P.points:
            lines.append("%.9g,%.9g" % (x, y))
    else:
        lines.append("x,y,r")
        for (x, y), r in zip(P.points, P.radii):
            lines.append("%.9g,%.9g,%.9g" % (x, y, r))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_points_csv(path) -> PointPattern:
    """Read a points CSV produced by save_points_csv."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            body = fh.read()
    except Exception as exc:
        raise ValueError(f"cannot load points {path}: {exc}") from exc
    if header not in ("x,y", "x,y,r"):
        raise ValueError(f"cannot load points {path}: unknown header {header!r}")
    rows = [ln for ln in body.splitlines() if ln.strip()]
    if not rows:
        cols = 3 if header == "x,y,r" else 2
        data = np.zeros((0, cols))
    else:
        data = np.array([[float(tok) for tok in ln.split(",")] for ln in rows])
    if header == "x,y":
        if data.shape[1] != 2:
            raise ValueError(f"cannot load points {path}: column mismatch")
        return PointPattern(data)
    if data.shape[1] != 3:
        raise ValueError(f"cannot load points {path}: column mismatch")
    return PointPattern(data[:, :2], data[:, 2])


def render(P: PointPattern, size: int, format: str, path,
           default_radius: float | None = None) -> None:
    """Render black dots on white. PNG output is anti-aliased by 4x
    supersampling; SVG emits one circle per point with 6-decimal
    coordinates. Domain [0,1]^2 maps to size x size pixels, y down."""
    if size < 1:
        raise ValueError("size must be >= 1 pixel")
    radii = P.radii
    if radii is None:
        if default_radius is None:
            raise ValueError("pattern has no radii and no default given")
        radii = np.full(len(P), float(default_radius))
    if format == "svg":
        parts = [
            '<svg xmlns="http://www.w3.org/2000/svg" '
            f'width="{size}" height="{size}" viewBox="0 0 {size} {size}">',
            f'<rect width="{size}" height="{size}" fill="white"/>',
            "<g fill=\"black\">",
        ]
        for (x, y), r in zip(P.points, radii):
            parts.append('<circle cx="%.6f" cy="%.6f" r="%.6f"/>'
                         % (x * size, y * size, r * size))
        parts.append("</g>")
        parts.append("</svg>")
        atomic_write_text(path, "\n".join(parts) + "\n")
        return
    if format != "png":
        raise ValueError("format must be png or svg")
    ss = 4
    big = size * ss
    canvas = np.zeros((big, big), dtype=bool)
    centers = P.points * big
    rads = radii * big
    for (cx, cy), r in zip(centers, rads):
        x0 = max(0, int(np.floor(cx - r)))
        x1 = min(big - 1, int(np.ceil(cx + r)))
        y0 = max(0, int(np.floor(cy - r)))
        y1 = min(big - 1, int(np.ceil(cy + r)))
        if x1 < x0 or y1 < y0:
            continue
        xs = np.arange(x0, x1 + 1) + 0.5
        ys = np.arange(y0, y1 + 1) + 0.5
        mask = ((xs[None, :] - cx) ** 2 + (ys[:, None] - cy) ** 2) <= r * r
        canvas[y0:y1 + 1, x0:x1 + 1] |= mask
    ink = canvas.reshape(size, ss, size, ss).mean(axis=(1, 3))
    gray = _round_half_away((1.0 - ink) * 255.0).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(gray, mode="L").save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())
