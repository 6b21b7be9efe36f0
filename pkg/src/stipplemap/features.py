"""Perceptual texture descriptor of a point pattern.

Pipeline: rasterize the pattern as Gaussian splats at three sizes, push each
raster through a seeded two-stage convolutional filter bank (3x3 kernels,
rectifier, stride-4 average pooling), and collect channel-by-channel Gram
matrices of the pooled activations. The six Grams (two stages x three splat
sizes) flatten to a 3*(64^2+128^2) = 61,440-float descriptor compared with
the L1 metric. Random unit-norm filters stand in for pretrained network
features; the bank seed travels with every palette so descriptors are only
ever compared within one bank.
"""

from __future__ import annotations

import struct
from functools import lru_cache

import numpy as np

from .types import PointPattern
from .util import atomic_write_bytes, rng_from, run_indexed

FEATURE_LENGTH = 3 * (64 * 64 + 128 * 128)
SPLAT_SIGMAS = (0.015, 0.01, 0.005)
SPLAT_RESOLUTION = 256
DEFAULT_FEATURE_SEED = 0

_MAGIC = b"PPFEAT01"


def gaussian_accumulate(points: np.ndarray, sigma: float, resolution: int,
                        amplitudes: np.ndarray | None = None,
                        wrap: bool = False) -> np.ndarray:
    """Sum of per-point isotropic Gaussians (peak amplitude 1, or given
    per-point amplitudes) sampled at pixel centers ((i+0.5)/res). Tails are
    cut at 6 sigma. `wrap` treats the domain as a torus; otherwise mass
    falling outside the grid is dropped. Returns (res, res) float64,
    unclamped."""
    res = int(resolution)
    grid = np.zeros((res, res), dtype=np.float64)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        return grid
    if amplitudes is None:
        amplitudes = np.ones(len(pts))
    centers = (np.arange(res, dtype=np.float64) + 0.5) / res
    halfwin = int(np.ceil(6.0 * sigma * res))
    inv_2s2 = 1.0 / (2.0 * sigma * sigma)
    for (x, y), amp in zip(pts, amplitudes):
        cx = int(x * res)
        cy = int(y * res)
        if wrap:
            ix = np.arange(cx - halfwin, cx + halfwin + 1)
            iy = np.arange(cy - halfwin, cy + halfwin + 1)
            ex = np.exp(-(((ix + 0.5) / res - x) ** 2) * inv_2s2)
            ey = np.exp(-(((iy + 0.5) / res - y) ** 2) * inv_2s2)
            patch = amp * np.outer(ey, ex)
            dx, dy = ix % res, iy % res
            if len(ix) <= res:
                grid[np.ix_(dy, dx)] += patch
            else:
                np.add.at(grid, np.ix_(dy, dx), patch)
        else:
            x0, x1 = max(0, cx - halfwin), min(res, cx + halfwin + 1)
            y0, y1 = max(0, cy - halfwin), min(res, cy + halfwin + 1)
            if x0 >= x1 or y0 >= y1:
                continue
            ex = np.exp(-((centers[x0:x1] - x) ** 2) * inv_2s2)
            ey = np.exp(-((centers[y0:y1] - y) ** 2) * inv_2s2)
            grid[y0:y1, x0:x1] += amp * np.outer(ey, ex)
    return grid


def splat(pattern: PointPattern, sigma: float, resolution: int) -> np.ndarray:
    """Rasterize the pattern as unit-peak Gaussian dots on the torus,
    clamped to [0,1]."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if resolution < 32:
        raise ValueError("resolution must be >= 32")
    grid = gaussian_accumulate(pattern.points, float(sigma), resolution, wrap=True)
    return np.clip(grid, 0.0, 1.0)


class FilterBank:
    """Seeded random convolutional filters: 64 single-channel 3x3 kernels,
    then 128 64-channel 3x3 kernels, each output channel unit L2 norm."""

    def __init__(self, seed: int = DEFAULT_FEATURE_SEED):
        self.seed = int(seed)
        rng = rng_from(self.seed)
        k1 = rng.standard_normal((64, 1, 3, 3))
        k1 /= np.sqrt((k1 ** 2).sum(axis=(1, 2, 3), keepdims=True))
        k2 = rng.standard_normal((128, 64, 3, 3))
        k2 /= np.sqrt((k2 ** 2).sum(axis=(1, 2, 3), keepdims=True))
        self.stage1 = k1.astype(np.float32)
        self.stage2 = k2.astype(np.float32)


@lru_cache(maxsize=8)
def bank_for_seed(seed: int) -> FilterBank:
    """Cached FilterBank per seed; construction is deterministic."""
    return FilterBank(seed)


def _conv_same(img: np.ndarray, kern: np.ndarray) -> np.ndarray:
    """Circularly padded stride-1 'same' convolution:
    (C,H,W) x (O,C,3,3) -> (O,H,W). Wrap padding keeps the pipeline
    equivariant to toroidal shifts, so Gram statistics are shift-invariant."""
    padded = np.pad(img, ((0, 0), (1, 1), (1, 1)), mode="wrap")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (3, 3), axis=(1, 2))
    return np.tensordot(kern, windows, axes=([1, 2, 3], [0, 3, 4]))


def _relu_pool4(act: np.ndarray) -> np.ndarray:
    o, h, w = act.shape
    act = np.maximum(act, 0.0)
    return act.reshape(o, h // 4, 4, w // 4, 4).mean(axis=(2, 4))


def _gram(act: np.ndarray) -> np.ndarray:
    o, h, w = act.shape
    flat = act.reshape(o, h * w)
    g = (flat @ flat.T) / np.float32(h * w)
    return 0.5 * (g + g.T)


def feature_stats(pattern: PointPattern, bank: FilterBank | None = None) -> np.ndarray:
    """61,440-float texture descriptor of the pattern (float32)."""
    if bank is None:
        bank = bank_for_seed(DEFAULT_FEATURE_SEED)
    parts = []
    for sigma in SPLAT_SIGMAS:
        raster = splat(pattern, sigma, SPLAT_RESOLUTION).astype(np.float32)
        a1 = _relu_pool4(_conv_same(raster[None, :, :], bank.stage1))
        a2 = _relu_pool4(_conv_same(a1, bank.stage2))
        parts.append(_gram(a1).ravel())
        parts.append(_gram(a2).ravel())
    return np.concatenate(parts).astype(np.float32)


def perceptual_distance(a: np.ndarray, b: np.ndarray) -> float:
    """L1 distance between two descriptors (accumulated in float64)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError("feature vector lengths differ")
    return float(np.sum(np.abs(a.astype(np.float64) - b.astype(np.float64))))


def dissimilarity_matrix(corpus, bank: FilterBank | None = None,
                         threads: int = 1) -> np.ndarray:
    """Pairwise perceptual distances of a pattern corpus; exactly symmetric."""
    if len(corpus) == 0:
        raise ValueError("corpus must be non-empty")
    feats = run_indexed(lambda i: feature_stats(corpus[i], bank), len(corpus), threads)
    return distances_from_features(np.stack(feats))


def distances_from_features(features: np.ndarray) -> np.ndarray:
    """Pairwise L1 matrix of row vectors; zero diagonal, exact symmetry."""
    features = np.asarray(features, dtype=np.float64)
    n = len(features)
    out = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        d = np.abs(features[i + 1:] - features[i]).sum(axis=1)
        out[i, i + 1:] = d
        out[i + 1:, i] = d
    return out


def save_feature_vector(path: str, values: np.ndarray, seed: int) -> None:
    """Binary descriptor file: 8-byte magic, u64 bank seed, f32 LE payload."""
    values = np.asarray(values, dtype="<f4").ravel()
    blob = _MAGIC + struct.pack("<Q", int(seed)) + values.tobytes()
    atomic_write_bytes(path, blob)


def load_feature_vector(path: str):
    """Returns (values float32 array, bank seed)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:8] != _MAGIC:
        raise ValueError(f"{path}: not a feature-vector file")
    seed = struct.unpack("<Q", blob[8:16])[0]
    values = np.frombuffer(blob[16:], dtype="<f4").copy()
    return values, int(seed)
