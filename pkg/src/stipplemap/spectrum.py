"""Gaussian-mixture target spectra and radially averaged power spectra.

Spectra are 64-bin radial histograms over integer frequency magnitudes
k = 0..63 (cycles per unit domain); the DC bin is always zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .types import PointPattern
from .util import rng_from

SPECTRUM_BINS = 64

AMPLITUDE_RANGE = (1.0, 3.0)
MEAN_RANGE = (0.0, 68.0)
STD_RANGE = (2.0, 12.0)


@dataclass(frozen=True)
class GmmSpectrumParams:
    """Gaussian-mixture spectrum parameters.

    mode_count K in {1,2}; per-mode amplitude in [1,3], mean in [0,68]
    (bin units), std in [2,12] (bin units); additive floor in {0,1}.
    """

    amplitudes: Tuple[float, ...]
    means: Tuple[float, ...]
    stds: Tuple[float, ...]
    floor: float

    @property
    def mode_count(self) -> int:
        return len(self.amplitudes)

    def validate(self) -> None:
        if self.mode_count not in (1, 2):
            raise ValueError("mode_count must be 1 or 2")
        if not (len(self.means) == len(self.stds) == self.mode_count):
            raise ValueError("per-mode parameter lengths differ")
        for a, mu, s in zip(self.amplitudes, self.means, self.stds):
            if not (AMPLITUDE_RANGE[0] <= a <= AMPLITUDE_RANGE[1]):
                raise ValueError("amplitude out of range")
            if not (MEAN_RANGE[0] <= mu <= MEAN_RANGE[1]):
                raise ValueError("mean out of range")
            if not (STD_RANGE[0] <= s <= STD_RANGE[1]):
                raise ValueError("std out of range")
        if self.floor not in (0.0, 1.0):
            raise ValueError("floor must be 0 or 1")


def evaluate_gmm_spectrum(params: GmmSpectrumParams) -> np.ndarray:
    """Evaluate the mixture on bins k = 0..63 and zero the DC bin."""
    k = np.arange(SPECTRUM_BINS, dtype=np.float64)
    bins = np.full(SPECTRUM_BINS, float(params.floor))
    for a, mu, s in zip(params.amplitudes, params.means, params.stds):
        bins += a * np.exp(-((k - mu) ** 2) / (2.0 * s * s))
    bins[0] = 0.0
    return bins


def sample_spectrum(rng_seed: int) -> Tuple[GmmSpectrumParams, np.ndarray]:
    """Draw mixture parameters uniformly from their ranges (seeded, pure).

    Draw order: mode count (fair coin), then (amplitude, mean, std) per
    mode, then the floor (fair coin).
    """
    rng = rng_from(rng_seed)
    k_modes = int(rng.integers(1, 3))
    amps, means, stds = [], [], []
    for _ in range(k_modes):
        amps.append(float(rng.uniform(*AMPLITUDE_RANGE)))
        means.append(float(rng.uniform(*MEAN_RANGE)))
        stds.append(float(rng.uniform(*STD_RANGE)))
    floor = float(rng.integers(0, 2))
    params = GmmSpectrumParams(tuple(amps), tuple(means), tuple(stds), floor)
    return params, evaluate_gmm_spectrum(params)


def frequency_lattice(bin_count: int):
    """Integer frequencies -(B-1)..(B-1) with the annulus index map.

    Returns (freqs, kmap) where kmap[a, b] = round(|f|) for f = (freqs[a],
    freqs[b]); entries with kmap == 0 or kmap >= bin_count are outside the
    averaged annuli.
    """
    freqs = np.arange(-(bin_count - 1), bin_count, dtype=np.float64)
    fa = freqs[:, None]
    fb = freqs[None, :]
    kmap = np.rint(np.sqrt(fa * fa + fb * fb)).astype(np.int64)
    return freqs, kmap


def phase_matrix(coords: np.ndarray, bin_count: int, positive_only: bool = False) -> np.ndarray:
    """exp(-2*pi*i*f*x) factors for one axis, shape (n, |freqs|).

    Built from cumulative products of the unit phase per point (63 complex
    multiplies instead of exp calls). positive_only returns f = 0..B-1,
    otherwise f = -(B-1)..(B-1).
    """
    coords = np.asarray(coords, dtype=np.float64).reshape(-1)
    n = coords.size
    w = np.exp(-2j * np.pi * coords)
    pos = np.empty((n, bin_count), dtype=np.complex128)
    pos[:, 0] = 1.0
    if bin_count > 1:
        np.cumprod(np.broadcast_to(w[:, None], (n, bin_count - 1)), axis=1, out=pos[:, 1:])
    if positive_only:
        return pos
    full = np.empty((n, 2 * bin_count - 1), dtype=np.complex128)
    full[:, bin_count - 1:] = pos
    full[:, :bin_count - 1] = np.conj(pos[:, :0:-1])
    return full


def radial_power_spectrum(pattern: PointPattern, bin_count: int) -> np.ndarray:
    """Radially averaged periodogram |sum_j exp(-2*pi*i*f*x_j)|^2 / n.

    Evaluated on the full integer lattice |f| < bin_count, averaged within
    integer-radius annuli k = round(|f|) <= bin_count - 1, DC forced to 0.
    """
    if len(pattern) == 0:
        raise ValueError("empty pattern")
    if bin_count < 1:
        raise ValueError("bin_count must be >= 1")
    n = len(pattern)
    ex = phase_matrix(pattern.points[:, 0], bin_count)
    ey = phase_matrix(pattern.points[:, 1], bin_count)
    f = ex.T @ ey  # (2B-1, 2B-1) lattice DFT of the point measure
    power = (f.real ** 2 + f.imag ** 2) / n
    _, kmap = frequency_lattice(bin_count)
    valid = (kmap >= 1) & (kmap < bin_count)
    sums = np.bincount(kmap[valid], weights=power[valid], minlength=bin_count)
    counts = np.bincount(kmap[valid], minlength=bin_count)
    bins = np.zeros(bin_count, dtype=np.float64)
    nz = counts > 0
    bins[nz] = sums[nz] / counts[nz]
    bins[0] = 0.0
    return bins
