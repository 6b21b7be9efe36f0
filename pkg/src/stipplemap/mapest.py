"""Inverse path: estimate a density/correlation image from a point pattern.

Density comes from Gaussian kernel density estimation, rescaled so the mean
grid density inverts the point-count formula. Correlation comes from a
sliding-window decode: each window's points are rescaled to the unit
domain, summarized by the perceptual feature statistics, and snapped to
the feature-nearest palette entry's latent coordinate. Windowing plus a
median filter stands in for full-image context.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import median_filter

from .embedding import Palette, nearest_basis
from .features import bank_for_seed, feature_stats, gaussian_accumulate
from .types import FeatureImage, GuidanceField, PointPattern, ScalarField
from .util import run_indexed

MIN_WINDOW_POINTS = 64


def estimate_density(P: PointPattern, resolution: int = 256,
                     bandwidth: float = 0.05,
                     scale: float = 50000.0) -> ScalarField:
    """KDE lightness field: mean density equals N/scale, L = 100 (1 - rho).

    The KDE is computed on a resolution^2 grid and rescaled so that its
    grid mean inverts the point-count formula, making estimate_density a
    left inverse of the budget N = scale * mean(1 - L/100) up to clamping.
    """
    if len(P) == 0:
        raise ValueError("empty pattern")
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    raw = gaussian_accumulate(P.points, bandwidth, resolution)
    mean = float(raw.mean())
    if mean <= 0.0:
        raise ValueError("degenerate density estimate")
    rho = raw * (len(P) / scale / mean)
    return ScalarField(np.clip(100.0 * (1.0 - rho), 0.0, 100.0))


def _window_starts(resolution: int, window_px: int, stride_px: int) -> np.ndarray:
    last = max(resolution - window_px, 0)
    starts = np.arange(0, last + 1, stride_px)
    if starts[-1] != last:
        starts = np.append(starts, last)
    return starts


def estimate_correlation_map(P: PointPattern, density: ScalarField,
                             palette: Palette, window: float = 0.25,
                             stride: int | None = None, *,
                             threads: int = 1) -> np.ndarray:
    """Latent coordinates on a window grid, shape (rows, cols, 2).

    A square window of side `window` (domain units) slides in steps of
    `stride` pixels of the density grid (default grid/16). Windows holding
    at least MIN_WINDOW_POINTS points are decoded: their points rescale to
    the unit domain, and the feature-nearest palette entry supplies the
    coordinate. Sparse windows inherit the nearest decoded window's
    coordinate; each latent channel is then median-filtered 3x3.
    """
    if not 0.0 < window <= 1.0:
        raise ValueError("window side must be in (0, 1]")
    resolution = density.grid.shape[0]
    if stride is None:
        stride = max(1, resolution // 16)
    if stride < 1:
        raise ValueError("stride must be >= 1 pixel")
    window_px = max(1, int(round(window * resolution)))
    starts = _window_starts(resolution, window_px, stride) / resolution
    side = window_px / resolution
    cols, rows = len(starts), len(starts)
    centers = starts + side / 2.0

    pts = P.points
    boxes = []
    for y0 in starts:
        for x0 in starts:
            inside = ((pts[:, 0] >= x0) & (pts[:, 0] <= x0 + side)
                      & (pts[:, 1] >= y0) & (pts[:, 1] <= y0 + side))
            boxes.append((x0, y0, inside))
    counts = np.array([int(b[2].sum()) for b in boxes])
    valid = counts >= MIN_WINDOW_POINTS
    if not valid.any():
        raise ValueError("pattern too sparse")

    bank = bank_for_seed(palette.feature_seed)
    valid_ids = np.flatnonzero(valid)

    def decode_window(i: int) -> np.ndarray:
        x0, y0, inside = boxes[valid_ids[i]]
        local = (pts[inside] - (x0, y0)) / side
        stats = feature_stats(PointPattern(np.clip(local, 0.0, 1.0)), bank)
        return palette.latents[nearest_basis(stats, palette)].astype(np.float64)

    decoded = run_indexed(decode_window, len(valid_ids), threads)
    grid = np.zeros((rows * cols, 2))
    grid[valid_ids] = np.stack(decoded)

    if not valid.all():
        # sparse windows inherit the nearest decoded window (center
        # distance, ties to the lowest flat index)
        cx, cy = np.meshgrid(centers, centers)
        flat = np.column_stack([cx.ravel(), cy.ravel()])
        for i in np.flatnonzero(~valid):
            d2 = ((flat[valid_ids] - flat[i]) ** 2).sum(axis=1)
            grid[i] = grid[valid_ids[int(np.argmin(d2))]]

    grid = grid.reshape(rows, cols, 2)
    for ch in range(2):
        grid[:, :, ch] = median_filter(grid[:, :, ch], size=3, mode="nearest")
    return grid


def estimate_feature_image(P: PointPattern, palette: Palette,
                           resolution: int = 256, bandwidth: float = 0.05,
                           window: float = 0.25, stride: int | None = None,
                           scale: float = 50000.0, *,
                           threads: int = 1) -> FeatureImage:
    """Full inverse map: KDE lightness plus window-decoded latent channels,
    bilinearly upsampled to the pixel grid."""
    density = estimate_density(P, resolution, bandwidth, scale)
    grid = estimate_correlation_map(P, density, palette, window, stride,
                                    threads=threads)
    field = GuidanceField(grid)
    ii = (np.arange(resolution) + 0.5) / resolution
    xx, yy = np.meshgrid(ii, ii)
    uv = field.sample(np.column_stack([xx.ravel(), yy.ravel()]))
    u = np.clip(uv[:, 0].reshape(resolution, resolution), 0.0, 1.0)
    v = np.clip(uv[:, 1].reshape(resolution, resolution), 0.0, 1.0)
    return FeatureImage(L=density.grid.copy(), u=u, v=v)
