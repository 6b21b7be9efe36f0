"""Shared domain types: point patterns, sampled fields, images, configs."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass
class PointPattern:
    """Ordered list of 2D points in the unit domain, optional per-point radii.

    points: (n, 2) float array, every coordinate in [0, 1].
    radii:  optional (n,) float array of dot radii in domain units, all > 0.
    """

    points: np.ndarray
    radii: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if self.radii is not None:
            self.radii = np.asarray(self.radii, dtype=np.float64).reshape(-1)

    def validate(self) -> None:
        if self.points.size and (self.points.min() < 0.0 or self.points.max() > 1.0):
            raise ValueError("point coordinates must lie in [0,1]")
        if not np.isfinite(self.points).all():
            raise ValueError("point coordinates must be finite")
        if self.radii is not None:
            if len(self.radii) != len(self.points):
                raise ValueError("radii length must match point count")
            if self.radii.size and self.radii.min() <= 0.0:
                raise ValueError("radii must be positive")

    def __len__(self) -> int:
        return len(self.points)


@dataclass
class ScalarField:
    """W x H scalar grid with bilinear sampling over [0,1]^2.

    grid[j, i] holds the value at cell center ((i + 0.5)/W, (j + 0.5)/H);
    x maps to columns, y to rows. Samples are edge-clamped.
    """

    grid: np.ndarray

    def __post_init__(self) -> None:
        self.grid = np.asarray(self.grid, dtype=np.float64)
        if self.grid.ndim != 2:
            raise ValueError("ScalarField grid must be 2D")
        if not np.isfinite(self.grid).all():
            raise ValueError("ScalarField values must be finite")

    def sample(self, xy: np.ndarray) -> np.ndarray:
        """Bilinear sample at (m, 2) positions; returns (m,)."""
        return _bilinear(self.grid[:, :, None], xy)[:, 0]


@dataclass
class GuidanceField:
    """W x H grid of m-dimensional guide vectors with bilinear sampling.

    grid[j, i, :] is the vector at cell center ((i + 0.5)/W, (j + 0.5)/H).
    """

    grid: np.ndarray

    def __post_init__(self) -> None:
        self.grid = np.asarray(self.grid, dtype=np.float64)
        if self.grid.ndim != 3:
            raise ValueError("GuidanceField grid must be (H, W, m)")
        if not np.isfinite(self.grid).all():
            raise ValueError("GuidanceField values must be finite")

    @property
    def dim(self) -> int:
        return self.grid.shape[2]

    def sample(self, xy: np.ndarray) -> np.ndarray:
        """Bilinear sample at (m, 2) positions; returns (m, dim)."""
        return _bilinear(self.grid, xy)

    def sample_jacobian(self, xy: np.ndarray) -> np.ndarray:
        """d(sample)/d(x,y) at (m, 2) positions; returns (m, dim, 2).

        The bilinear interpolant is piecewise-smooth; inside a cell the
        derivative is exact, on cell boundaries the lower cell's branch
        applies. Edge-clamped samples have zero derivative past the last
        cell centers.
        """
        return _bilinear_jacobian(self.grid, xy)


def uniform_density(value: float = 1.0, resolution: int = 4) -> ScalarField:
    return ScalarField(np.full((resolution, resolution), float(value)))


def uniform_guidance(vector=(1.0,), resolution: int = 4) -> GuidanceField:
    vec = np.asarray(vector, dtype=np.float64).reshape(-1)
    return GuidanceField(np.broadcast_to(vec, (resolution, resolution, vec.size)).copy())


def _bilinear_setup(shape, xy):
    h, w = shape
    xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
    fx = np.clip(xy[:, 0] * w - 0.5, 0.0, w - 1.0)
    fy = np.clip(xy[:, 1] * h - 0.5, 0.0, h - 1.0)
    ix = np.minimum(fx.astype(np.int64), w - 2) if w > 1 else np.zeros(len(fx), dtype=np.int64)
    iy = np.minimum(fy.astype(np.int64), h - 2) if h > 1 else np.zeros(len(fy), dtype=np.int64)
    tx = fx - ix
    ty = fy - iy
    if w == 1:
        tx = np.zeros_like(tx)
    if h == 1:
        ty = np.zeros_like(ty)
    return ix, iy, tx, ty


def _bilinear(grid: np.ndarray, xy: np.ndarray) -> np.ndarray:
    h, w = grid.shape[:2]
    ix, iy, tx, ty = _bilinear_setup((h, w), xy)
    ix1 = np.minimum(ix + 1, w - 1)
    iy1 = np.minimum(iy + 1, h - 1)
    g00 = grid[iy, ix]
    g01 = grid[iy, ix1]
    g10 = grid[iy1, ix]
    g11 = grid[iy1, ix1]
    tx = tx[:, None]
    ty = ty[:, None]
    return (g00 * (1 - tx) * (1 - ty) + g01 * tx * (1 - ty)
            + g10 * (1 - tx) * ty + g11 * tx * ty)


def _bilinear_jacobian(grid: np.ndarray, xy: np.ndarray) -> np.ndarray:
    h, w = grid.shape[:2]
    ix, iy, tx, ty = _bilinear_setup((h, w), xy)
    ix1 = np.minimum(ix + 1, w - 1)
    iy1 = np.minimum(iy + 1, h - 1)
    g00 = grid[iy, ix]
    g01 = grid[iy, ix1]
    g10 = grid[iy1, ix]
    g11 = grid[iy1, ix1]
    tx = tx[:, None]
    ty = ty[:, None]
    # d/dfx then chain rule dfx/dx = w (zero where the sample clamps).
    xin = ((xy[:, 0] * w - 0.5 > 0.0) & (xy[:, 0] * w - 0.5 < w - 1.0)).astype(np.float64)[:, None]
    yin = ((xy[:, 1] * h - 0.5 > 0.0) & (xy[:, 1] * h - 0.5 < h - 1.0)).astype(np.float64)[:, None]
    dfx = ((g01 - g00) * (1 - ty) + (g11 - g10) * ty) * w * xin
    dfy = ((g10 - g00) * (1 - tx) + (g11 - g01) * tx) * h * yin
    return np.stack([dfx, dfy], axis=-1)


@dataclass
class PcfConfig:
    """Edge-aware PCF estimator configuration.

    sigma is expressed in radius-grid-spacing units; the working standard
    deviation is sigma * (radius spacing). guide_mode selects the guidance
    similarity: "dot" = |ga . (bw I) . gb|, "gauss" = exp(-|ga-gb|^2/(2 bw)).
    """

    bin_count: int = 20
    sigma: float = 0.26
    k_nearest: int = 50
    guide_bandwidth: float = 0.005
    norm_grid_resolution: int = 64
    r_min_factor: float = 0.1
    r_max_factor: float = 2.0
    guide_mode: str = "dot"

    def validate(self) -> None:
        if self.bin_count < 2:
            raise ValueError("bin_count must be >= 2")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if self.k_nearest < 1:
            raise ValueError("k_nearest must be >= 1")
        if self.guide_mode not in ("dot", "gauss"):
            raise ValueError("guide_mode must be 'dot' or 'gauss'")


@dataclass
class SynthesisConfig:
    """Synthesis optimizer configuration (ADAM over point coordinates)."""

    iterations: int = 5000
    spatial_samples: int = 100  # 10 x 10 jittered; must be a perfect square
    point_budget_scale: float = 50000.0
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    knn_refresh: int = 50
    pcf: PcfConfig = field(default_factory=PcfConfig)

    def validate(self) -> None:
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        side = int(round(self.spatial_samples ** 0.5))
        if side * side != self.spatial_samples:
            raise ValueError("spatial_samples must be a perfect square")
        self.pcf.validate()


@dataclass
class FeatureImage:
    """W x H x 3 LAB raster; L = density, normalized AB = latent correlation.

    L in [0,100]; u, v are the latent coordinates in [0,1] (the stored form
    of the AB channels; raster-io defines the 8-bit mapping). Pixel (ix, iy)
    covers position ((ix + 0.5)/W, (iy + 0.5)/H), row 0 at the top (y = 0,
    +y down, matching image convention).
    """

    L: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        self.L = np.asarray(self.L, dtype=np.float64)
        self.u = np.asarray(self.u, dtype=np.float64)
        self.v = np.asarray(self.v, dtype=np.float64)
        if not (self.L.shape == self.u.shape == self.v.shape) or self.L.ndim != 2:
            raise ValueError("FeatureImage channels must share one 2D shape")

    def validate(self) -> None:
        if self.L.min() < 0.0 or self.L.max() > 100.0:
            raise ValueError("L channel must lie in [0,100]")
        for ch in (self.u, self.v):
            if ch.min() < 0.0 or ch.max() > 1.0:
                raise ValueError("latent channels must lie in [0,1]")

    @property
    def shape(self) -> tuple:
        return self.L.shape

    def pixel_index(self, xy: np.ndarray) -> tuple:
        """Nearest-pixel (row, col) indices for (m, 2) positions."""
        h, w = self.L.shape
        xy = np.asarray(xy, dtype=np.float64).reshape(-1, 2)
        ix = np.clip((xy[:, 0] * w).astype(np.int64), 0, w - 1)
        iy = np.clip((xy[:, 1] * h).astype(np.int64), 0, h - 1)
        return iy, ix

    @staticmethod
    def constant(L: float, u: float, v: float, resolution: int = 8) -> "FeatureImage":
        shape = (resolution, resolution)
        return FeatureImage(np.full(shape, float(L)), np.full(shape, float(u)), np.full(shape, float(v)))
