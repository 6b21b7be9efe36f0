"""Perceptual latent space over a basis of point patterns.

A basis corpus is embedded into 2D by metric MDS on the perceptual
dissimilarity matrix, rotated so the most blue-noise-like entry sits at the
top, and min-max normalized to [0,1]^2. Continuous coordinates encode to
pair correlation functions by inverse-distance weighting with a
density-adaptive exponent; patterns decode to coordinates through their
nearest basis entry in feature space. A 256x256 lookup table freezes the
encoder and a per-cell learning rate for the synthesizer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .features import (DEFAULT_FEATURE_SEED, FEATURE_LENGTH, FilterBank,
                       bank_for_seed, feature_stats)
from .util import atomic_write_bytes, child_seed, rng_from, run_indexed

LUT_RESOLUTION = 256
LEARNING_RATE_GRID = (0.02, 0.01, 0.005, 0.001, 0.0005, 0.0001, 0.00005)
PARZEN_WINDOW = 0.01
LOCALITY_RANGE = (3.0, 6.0)

_MAGIC = b"PSHP"
_VERSION = 1


def stress(coords: np.ndarray, dissimilarity: np.ndarray) -> float:
    """Raw MDS stress: sum over ordered pairs of squared residuals between
    target dissimilarity and embedded Euclidean distance."""
    coords = np.asarray(coords, dtype=np.float64)
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    resid = np.asarray(dissimilarity, dtype=np.float64) - dist
    np.fill_diagonal(resid, 0.0)
    return float((resid ** 2).sum())


def _stress_gradient(coords: np.ndarray, dissimilarity: np.ndarray) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    dist = np.sqrt((diff ** 2).sum(axis=2))
    safe = np.where(dist > 1e-12, dist, 1.0)
    resid = dist - dissimilarity
    np.fill_diagonal(resid, 0.0)
    coef = np.where(dist > 1e-12, resid / safe, 0.0)
    return 4.0 * (coef[:, :, None] * diff).sum(axis=1)


def _check_dissimilarity(d: np.ndarray) -> np.ndarray:
    d = np.asarray(d, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("dissimilarity matrix must be square")
    if not np.allclose(d, d.T, rtol=0.0, atol=1e-9 * max(1.0, float(np.abs(d).max()))):
        raise ValueError("dissimilarity matrix must be symmetric")
    if np.any(np.abs(np.diag(d)) > 1e-12):
        raise ValueError("dissimilarity matrix must have a zero diagonal")
    return d


def mds_embed(dissimilarity: np.ndarray, seed: int, *, iterations: int = 1000,
              learning_rate: float = 0.005, batch_size: int = 20,
              polish_iterations: int = 300,
              return_info: bool = False):
    """Metric MDS by stochastic ADAM over row batches, then a monotone
    full-batch descent polish. Returns (count, 2) coordinates prior to
    alignment and normalization; never worse than the initialization."""
    d = _check_dissimilarity(dissimilarity)
    count = d.shape[0]
    rng = rng_from(seed)
    coords = rng.random((count, 2))
    initial = stress(coords, d)
    best = coords.copy()
    best_stress = initial

    m = np.zeros_like(coords)
    v = np.zeros_like(coords)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    rows = min(batch_size, count)
    for t in range(1, iterations + 1):
        batch = rng.choice(count, size=rows, replace=False)
        diff = coords[batch, None, :] - coords[None, :, :]
        dist = np.sqrt((diff ** 2).sum(axis=2))
        safe = np.where(dist > 1e-12, dist, 1.0)
        resid = dist - d[batch]
        resid[np.arange(rows), batch] = 0.0
        coef = np.where(dist > 1e-12, resid / safe, 0.0)
        contrib = coef[:, :, None] * diff
        grad = np.zeros_like(coords)
        grad[batch] += 2.0 * contrib.sum(axis=1)
        grad -= 2.0 * contrib.sum(axis=0)

        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        mhat = m / (1.0 - beta1 ** t)
        vhat = v / (1.0 - beta2 ** t)
        coords = coords - learning_rate * mhat / (np.sqrt(vhat) + eps)

        s = stress(coords, d)
        if s < best_stress:
            best_stress = s
            best = coords.copy()

    # deterministic descent with backtracking keeps the final stress at or
    # below both the stochastic best and the initialization
    coords = best
    current = best_stress
    step = learning_rate
    for _ in range(polish_iterations):
        grad = _stress_gradient(coords, d)
        moved = False
        for _ in range(30):
            trial = coords - step * grad
            s = stress(trial, d)
            if s < current:
                coords, current = trial, s
                step *= 1.3
                moved = True
                break
            step *= 0.5
        if not moved or step < 1e-16 or current < 1e-18:
            break

    if current > initial:
        raise AssertionError("embedding stress exceeded initialization")
    if return_info:
        return coords, {"initial_stress": initial, "final_stress": current}
    return coords


def align_and_normalize(coords: np.ndarray, blue_index: int) -> np.ndarray:
    """Rotate about the centroid so coords[blue_index] points straight up,
    then min-max normalize each axis to [0,1]."""
    coords = np.asarray(coords, dtype=np.float64)
    count = len(coords)
    if not 0 <= blue_index < count:
        raise ValueError("blue_index out of range")
    center = coords.mean(axis=0)
    anchor = coords[blue_index] - center
    norm = np.hypot(anchor[0], anchor[1])
    if norm > 1e-15:
        theta = 0.5 * np.pi - np.arctan2(anchor[1], anchor[0])
        rot = np.array([[np.cos(theta), -np.sin(theta)],
                        [np.sin(theta), np.cos(theta)]])
        coords = (coords - center) @ rot.T + center
    lo = coords.min(axis=0)
    span = coords.max(axis=0) - lo
    if np.any(span < 1e-12):
        raise ValueError("degenerate coordinates cannot be normalized")
    return (coords - lo) / span


@dataclass
class Palette:
    """Immutable basis set plus quantized encode/learning-rate tables.

    `lut[j, i]` and `lr_table[j, i]` correspond to the latent cell center
    (u, v) = ((i + 0.5)/256, (j + 0.5)/256).
    """
    pcfs: np.ndarray          # (count, bins) float32
    latents: np.ndarray       # (count, 2) float32
    features: np.ndarray      # (count, FEATURE_LENGTH) float32
    lut: np.ndarray           # (256, 256, bins) float32
    lr_table: np.ndarray      # (256, 256) float32
    basis_lr: np.ndarray      # (count,) float32
    feature_seed: int
    n_points: int
    parzen_window: float = PARZEN_WINDOW
    locality_range: tuple = LOCALITY_RANGE
    _density_span: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.pcfs = np.asarray(self.pcfs, dtype=np.float32)
        self.latents = np.asarray(self.latents, dtype=np.float32)
        self.features = np.asarray(self.features, dtype=np.float32)
        self.lut = np.asarray(self.lut, dtype=np.float32)
        self.lr_table = np.asarray(self.lr_table, dtype=np.float32)
        self.basis_lr = np.asarray(self.basis_lr, dtype=np.float32)
        count = len(self.pcfs)
        if self.lut.shape != (LUT_RESOLUTION, LUT_RESOLUTION, self.pcfs.shape[1]):
            raise ValueError("lookup table must be 256x256xbins")
        if self.lr_table.shape != (LUT_RESOLUTION, LUT_RESOLUTION):
            raise ValueError("learning-rate table must be 256x256")
        if self.latents.shape != (count, 2) or self.features.shape != (count, FEATURE_LENGTH):
            raise ValueError("basis array shapes disagree")
        if self.basis_lr.shape != (count,):
            raise ValueError("per-basis learning rates missing")
        if count and (self.latents.min() < -1e-6 or self.latents.max() > 1 + 1e-6):
            raise ValueError("basis latent coordinates must lie in [0,1]^2")
        grid = np.array(LEARNING_RATE_GRID, dtype=np.float32)
        if count and not np.isin(self.lr_table, grid).all():
            raise ValueError("learning-rate table contains off-grid values")

    @property
    def count(self) -> int:
        return len(self.pcfs)

    def kde(self, z: np.ndarray) -> np.ndarray:
        """Gaussian Parzen density of the basis latents at query points."""
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        pts = self.latents.astype(np.float64)
        h = self.parzen_window
        d2 = ((z[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        k = np.exp(-d2 / (2.0 * h * h))
        return k.sum(axis=1) / (len(pts) * 2.0 * np.pi * h * h)

    def density_span(self):
        if self._density_span is None:
            at_basis = self.kde(self.latents.astype(np.float64))
            self._density_span = (float(at_basis.min()), float(at_basis.max()))
        return self._density_span


def locality(z: np.ndarray, palette: Palette) -> float:
    """Density-adaptive IDW exponent: basis-latent KDE linearly rescaled
    from its observed range onto [3,6], clamped."""
    return float(_locality_many(np.atleast_2d(np.asarray(z, float)), palette)[0])


def _locality_many(z: np.ndarray, palette: Palette) -> np.ndarray:
    lo, hi = palette.locality_range
    dmin, dmax = palette.density_span()
    dens = palette.kde(z)
    if dmax - dmin <= 1e-12 * max(1.0, abs(dmax)):
        return np.full(len(z), 0.5 * (lo + hi))
    scaled = lo + (hi - lo) * (dens - dmin) / (dmax - dmin)
    return np.clip(scaled, lo, hi)


def encode(z: np.ndarray, palette: Palette) -> np.ndarray:
    """PCF at a continuous latent coordinate: inverse-distance-weighted
    blend of the basis PCFs with exponent locality(z)."""
    return _encode_many(np.atleast_2d(np.asarray(z, dtype=np.float64)), palette)[0]


def _encode_many(z: np.ndarray, palette: Palette) -> np.ndarray:
    pts = palette.latents.astype(np.float64)
    p = _locality_many(z, palette)
    dist = np.sqrt(((z[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    w = 1.0 / np.maximum(dist ** p[:, None], 1e-10)
    return (w @ palette.pcfs.astype(np.float64)) / w.sum(axis=1, keepdims=True)


def nearest_basis(values: np.ndarray, palette: Palette) -> int:
    """Index of the basis entry nearest in feature space (L2, lowest index
    on ties)."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.shape[0] != FEATURE_LENGTH:
        raise ValueError("feature vector length mismatch")
    d2 = ((palette.features.astype(np.float64) - values) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def decode(pattern, palette: Palette, bank: FilterBank | None = None) -> np.ndarray:
    """Latent coordinate of the feature-nearest basis entry."""
    if bank is None:
        bank = bank_for_seed(palette.feature_seed)
    elif bank.seed != palette.feature_seed:
        raise ValueError("palette/extractor mismatch")
    values = feature_stats(pattern, bank)
    return palette.latents[nearest_basis(values, palette)].astype(np.float64)


def lut_cell(z: np.ndarray):
    """(row j, column i) of the lookup-table cell containing latent z."""
    z = np.asarray(z, dtype=np.float64)
    idx = np.clip((z * LUT_RESOLUTION).astype(np.int64), 0, LUT_RESOLUTION - 1)
    return int(idx[..., 1]), int(idx[..., 0])


def build_lut(palette: Palette) -> Palette:
    """Fill the palette's PCF lookup table (encode at cell centers) and its
    learning-rate table (latent-nearest basis entry's rate)."""
    centers = (np.arange(LUT_RESOLUTION, dtype=np.float64) + 0.5) / LUT_RESOLUTION
    uu, vv = np.meshgrid(centers, centers)           # row j -> v, column i -> u
    cells = np.stack([uu.ravel(), vv.ravel()], axis=1)
    lut = np.empty((LUT_RESOLUTION * LUT_RESOLUTION, palette.pcfs.shape[1]), dtype=np.float32)
    chunk = 8192
    for start in range(0, len(cells), chunk):
        lut[start:start + chunk] = _encode_many(cells[start:start + chunk], palette)
    pts = palette.latents.astype(np.float64)
    d2 = ((cells[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    nearest = np.argmin(d2, axis=1)
    palette.lut = lut.reshape(LUT_RESOLUTION, LUT_RESOLUTION, -1)
    palette.lr_table = palette.basis_lr[nearest].reshape(LUT_RESOLUTION, LUT_RESOLUTION)
    return palette


def best_learning_rate(target: np.ndarray, n: int, *,
                       reference_features: np.ndarray | None = None,
                       bank: FilterBank | None = None, seed: int = 0,
                       iterations: int = 1000) -> float:
    """Grid search over synthesis learning rates: match the target PCF from
    a random start at each rate, score results by perceptual distance to a
    reference realization, return the lowest-scoring rate.

    Without an explicit reference, one is synthesized by a longer run at
    the mid-grid rate."""
    from .features import perceptual_distance
    from .synthesis import match_pcf

    if bank is None:
        bank = bank_for_seed(DEFAULT_FEATURE_SEED)
    if reference_features is None:
        ref, _ = match_pcf(target, n, learning_rate=1e-3,
                           iterations=2 * iterations,
                           seed=child_seed(seed, 0xFEED))
        reference_features = feature_stats(ref, bank)

    best_rate, best_score = None, np.inf
    for k, rate in enumerate(LEARNING_RATE_GRID):
        try:
            pattern, _ = match_pcf(target, n, learning_rate=rate,
                                   iterations=iterations,
                                   seed=child_seed(seed, k))
        except AssertionError:
            continue  # a diverging rate disqualifies itself
        score = perceptual_distance(feature_stats(pattern, bank), reference_features)
        if score < best_score:
            best_rate, best_score = rate, score
    if best_rate is None:
        raise RuntimeError("every learning rate diverged on this target")
    return float(best_rate)


def build_palette(count: int, n_points: int, seed: int = 0, *, threads: int = 1,
                  realize_iterations: int = 1000, lr_iterations: int = 1000,
                  mds_iterations: int = 1000, return_patterns: bool = False):
    """End-to-end palette construction: realize a spectrum basis, embed it
    perceptually, pick per-entry learning rates, and quantize the tables."""
    from .realize import generate_basis

    if count < 3:
        raise ValueError("palette needs at least 3 basis entries")
    basis = generate_basis(count, n_points, seed=seed,
                           iterations=realize_iterations, threads=threads)
    patterns = [p for p, _ in basis]
    pcfs = np.stack([g for _, g in basis])

    feature_seed = child_seed(seed, 10)
    bank = bank_for_seed(feature_seed)
    feats = np.stack(run_indexed(
        lambda i: feature_stats(patterns[i], bank), count, threads))

    from .features import distances_from_features
    dmat = distances_from_features(feats)
    coords = mds_embed(dmat, child_seed(seed, 11), iterations=mds_iterations)

    # anchor: most blue-noise-like entry, judged against a step PCF that is
    # zero below 0.8 r_max and one beyond (radius grid spans [0.1, 2] r_max)
    radii_frac = np.linspace(0.1, 2.0, pcfs.shape[1])
    step = (radii_frac >= 0.8).astype(np.float64)
    blue_index = int(np.argmin(((pcfs.astype(np.float64) - step) ** 2).sum(axis=1)))
    latents = align_and_normalize(coords, blue_index)

    rates = run_indexed(
        lambda i: best_learning_rate(
            pcfs[i].astype(np.float64), n_points,
            reference_features=feats[i], bank=bank,
            seed=child_seed(seed, 12, i), iterations=lr_iterations),
        count, threads)

    palette = Palette(
        pcfs=pcfs, latents=latents, features=feats,
        lut=np.zeros((LUT_RESOLUTION, LUT_RESOLUTION, pcfs.shape[1]), np.float32),
        lr_table=np.full((LUT_RESOLUTION, LUT_RESOLUTION), LEARNING_RATE_GRID[0], np.float32),
        basis_lr=np.array(rates, dtype=np.float32),
        feature_seed=feature_seed, n_points=n_points)
    build_lut(palette)
    if return_patterns:
        return palette, patterns
    return palette


def save_palette(path: str, palette: Palette) -> None:
    """Little-endian binary palette: header (magic, version, count,
    feature seed, point count), basis records (pcf, latent, features),
    lookup table, learning-rate table, per-basis learning rates."""
    if palette.pcfs.shape[1] != 20:
        raise ValueError("palette file format stores 20-bin PCFs")
    header = _MAGIC + struct.pack("<HIQI", _VERSION, palette.count,
                                  palette.feature_seed, palette.n_points)
    records = np.concatenate(
        [palette.pcfs, palette.latents, palette.features], axis=1).astype("<f4")
    blob = (header + records.tobytes() + palette.lut.astype("<f4").tobytes()
            + palette.lr_table.astype("<f4").tobytes()
            + palette.basis_lr.astype("<f4").tobytes())
    atomic_write_bytes(path, blob)


def load_palette(path: str) -> Palette:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 22 or blob[:4] != _MAGIC:
        raise ValueError(f"{path}: not a palette file")
    version, count, feature_seed, n_points = struct.unpack("<HIQI", blob[4:22])
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported palette version {version}")
    bins = 20
    rec_len = bins + 2 + FEATURE_LENGTH
    lut_len = LUT_RESOLUTION * LUT_RESOLUTION * bins
    lr_len = LUT_RESOLUTION * LUT_RESOLUTION
    expect = 22 + 4 * (count * rec_len + lut_len + lr_len + count)
    if len(blob) != expect:
        raise ValueError(f"{path}: truncated or oversized palette file")
    body = np.frombuffer(blob, dtype="<f4", offset=22)
    records = body[:count * rec_len].reshape(count, rec_len)
    off = count * rec_len
    lut = body[off:off + lut_len].reshape(LUT_RESOLUTION, LUT_RESOLUTION, bins)
    off += lut_len
    lr_table = body[off:off + lr_len].reshape(LUT_RESOLUTION, LUT_RESOLUTION)
    off += lr_len
    basis_lr = body[off:off + count]
    return Palette(
        pcfs=records[:, :bins].copy(), latents=records[:, bins:bins + 2].copy(),
        features=records[:, bins + 2:].copy(), lut=lut.copy(),
        lr_table=lr_table.copy(), basis_lr=basis_lr.copy(),
        feature_seed=int(feature_seed), n_points=int(n_points))
