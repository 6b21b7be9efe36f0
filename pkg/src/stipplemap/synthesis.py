"""Point-pattern synthesis against a density/correlation image.

The target image supplies a density channel (L) and a latent correlation
coordinate per pixel (AB). Points are initialized by rejection sampling and
then moved by ADAM on the squared residual between local PCF estimates of
the evolving pattern and the palette-encoded target PCFs.

The local estimate at a spatial sample is the distance-weighted average of
the ring profiles of nearby points (each point a query of the edge-aware
kernel, excluding itself). Averaging profiles over a neighborhood is what
makes the estimate a pair statistic: the profile field evaluated away from
the points integrates to one ring mass regardless of how the points are
arranged, so only point-conditioned profiles carry correlation information.
The spatial samples are a fixed jittered grid per run; profiles, neighbor
sets, denominators, and aggregation weights refresh together every
`knn_refresh` iterations and are treated as constants in between.
"""

from __future__ import annotations

import time

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.spatial import cKDTree

from .backend import kernels
from .embedding import LUT_RESOLUTION, Palette
from .pcf import DENSITY_FLOOR, _GUIDE_MODES, radius_grid
from .types import (FeatureImage, GuidanceField, PcfConfig, PointPattern,
                    ScalarField, SynthesisConfig, _bilinear_setup,
                    uniform_density)
from .util import child_seed, knn_indices, rng_from, run_indexed

_ADAM_EPS = 1e-8
# quadrature sizes for the ring-integral denominators used inside the
# optimization loop (exact to ~1e-6 for interior queries, ~1e-2 at the
# domain boundary where the annulus is clipped)
_RADIAL_NODES = 5
_ANGULAR_SAMPLES = 64


def point_count(img: FeatureImage, scale: float = 50000.0) -> int:
    """Point budget: scale times the mean inverse intensity of L."""
    if scale <= 0:
        raise ValueError("point budget scale must be positive")
    return int(round(scale * float(np.mean(1.0 - img.L / 100.0))))


def init_points(img: FeatureImage, n: int, seed: int = 0) -> PointPattern:
    """Rejection-sample n points with acceptance proportional to 1 - L/100
    at the nearest pixel."""
    if n < 0:
        raise ValueError("point count must be >= 0")
    if n == 0:
        return PointPattern(np.zeros((0, 2)))
    accept = 1.0 - img.L / 100.0
    peak = float(accept.max())
    if peak <= 0.0:
        raise ValueError("zero density")
    rng = rng_from(seed)
    chunks = []
    have = 0
    while have < n:
        cand = rng.random((max(4096, 2 * (n - have)), 2))
        u = rng.random(len(cand))
        iy, ix = img.pixel_index(cand)
        keep = cand[u * peak < accept[iy, ix]]
        chunks.append(keep)
        have += len(keep)
    return PointPattern(np.concatenate(chunks)[:n])


def _jittered_sites(count: int, seed: int) -> np.ndarray:
    """count jittered stratified samples of [0,1]^2 (count a perfect square)."""
    side = int(round(count ** 0.5))
    rng = rng_from(seed, 7)
    jit = rng.random((side * side, 2))
    b, a = np.divmod(np.arange(side * side), side)
    return np.column_stack([(a + jit[:, 0]) / side, (b + jit[:, 1]) / side])


def _guidance_from_image(img: FeatureImage, palette: Palette) -> GuidanceField:
    """Per-pixel target PCFs: the LUT entry of each pixel's AB coordinate.
    Sampling this field bilinearly defines both the guidance vectors and
    the spatial targets, keeping the objective differentiable."""
    iu = np.clip((img.u * LUT_RESOLUTION).astype(np.int64), 0, LUT_RESOLUTION - 1)
    iv = np.clip((img.v * LUT_RESOLUTION).astype(np.int64), 0, LUT_RESOLUTION - 1)
    return GuidanceField(palette.lut[iv, iu].astype(np.float64))


def _density_from_image(img: FeatureImage, n_basis: int, n: int) -> ScalarField:
    """Distance rescale field: local spacing of n points at density rho,
    relative to the basis spacing (n_basis points, uniform)."""
    rho = 1.0 - img.L / 100.0
    mean_rho = float(rho.mean())
    rho = np.maximum(rho, DENSITY_FLOOR)
    return ScalarField(np.sqrt(n_basis * mean_rho / (max(n, 1) * rho)))


def _annulus_normalization(d_field: ScalarField, guidance: GuidanceField,
                           queries: np.ndarray, radii: np.ndarray,
                           cfg: PcfConfig) -> np.ndarray:
    """Kernel denominators D[q, j] by polar quadrature of the ring integral.

    Equivalent to the area-weighted grid sum of `build_normalization` but
    evaluated as Gauss-Hermite radial nodes x equiangular ring samples, so
    the cost is independent of any grid resolution and the small radial
    sigma is integrated exactly instead of being under-resolved by cells.
    """
    queries = np.asarray(queries, dtype=np.float64)
    radii = np.asarray(radii, dtype=np.float64)
    nodes, weights = hermegauss(_RADIAL_NODES)
    weights = weights / np.sqrt(2.0 * np.pi)
    sigma = cfg.sigma * (radii[1] - radii[0])
    theta = (np.arange(_ANGULAR_SAMPLES) + 0.5) * (2.0 * np.pi / _ANGULAR_SAMPLES)
    ring = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    d_q = np.maximum(d_field.sample(queries), DENSITY_FLOOR)
    g_q = guidance.sample(queries)
    t = np.maximum(radii[None, :, None] + sigma * nodes[None, None, :], 0.0)
    mode = _GUIDE_MODES[cfg.guide_mode]
    bw = cfg.guide_bandwidth
    # a spatially constant guide field makes the bilateral factor uniform
    # per query, leaving a geometry-only clipping integral
    flat = guidance.grid.reshape(-1, guidance.grid.shape[-1])
    uniform = bool(np.ptp(flat, axis=0).max() == 0.0)
    out = np.empty((len(queries), len(radii)), dtype=np.float64)
    chunk = max(1, int(5e5) // (len(radii) * _RADIAL_NODES * _ANGULAR_SAMPLES))
    for s in range(0, len(queries), chunk):
        q = queries[s:s + chunk]
        rad = t * d_q[s:s + chunk, None, None]
        pos = q[:, None, None, None, :] + rad[..., None, None] * ring
        inside = ((pos >= 0.0) & (pos <= 1.0)).all(axis=-1)
        if uniform:
            if mode == 0:
                w_q = bw * np.abs(g_q[s:s + chunk] @ flat[0])
            else:
                diff = flat[0] - g_q[s:s + chunk]
                w_q = np.exp(-(diff * diff).sum(axis=-1) / (2.0 * bw))
            ang = w_q[:, None, None] * inside.mean(axis=3) * (2.0 * np.pi)
        elif mode == 0:
            # the dot guide weight is linear in the sampled vector, so the
            # channel contraction can precede the bilinear interpolation:
            # one scalar gather per sample instead of one per channel
            h_g, w_g = guidance.grid.shape[:2]
            sg = (flat @ g_q[s:s + chunk].T).reshape(h_g, w_g, -1)
            p = np.clip(pos.reshape(-1, 2), 0.0, 1.0)
            ix, iy, tx, ty = _bilinear_setup((h_g, w_g), p)
            ix1 = np.minimum(ix + 1, w_g - 1)
            iy1 = np.minimum(iy + 1, h_g - 1)
            cidx = np.repeat(np.arange(len(q)), pos[0, ..., 0].size)
            val = (sg[iy, ix, cidx] * (1 - tx) * (1 - ty)
                   + sg[iy, ix1, cidx] * tx * (1 - ty)
                   + sg[iy1, ix, cidx] * (1 - tx) * ty
                   + sg[iy1, ix1, cidx] * tx * ty)
            w = bw * np.abs(val.reshape(pos.shape[:-1]))
            ang = (w * inside).mean(axis=3) * (2.0 * np.pi)
        else:
            g_c = guidance.sample(np.clip(pos.reshape(-1, 2), 0.0, 1.0))
            g_c = g_c.reshape(pos.shape[:-1] + (-1,))
            diff = g_c - g_q[s:s + chunk][:, None, None, None, :]
            w = np.exp(-(diff * diff).sum(axis=-1) / (2.0 * bw))
            ang = (w * inside).mean(axis=3) * (2.0 * np.pi)
        out[s:s + chunk] = (d_q[s:s + chunk, None] ** 2) * np.einsum(
            "cjr,r,cjr->cj", ang, weights, np.broadcast_to(t, ang.shape))
    return out


class _PcfProblem:
    """Per-run synthesis state.

    Fixed: the jittered sites, their targets, the guidance and density
    fields, and the radius grid. Movable: everything evaluated at the point
    positions (profiles, neighbor sets, denominators, aggregation weights),
    rebuilt together by refresh(). A site's estimate is the soft-weighted
    mean of point profiles within a Gaussian window of bandwidth half the
    site spacing; sites with no point mass in reach are excluded."""

    def __init__(self, d_field: ScalarField, guidance: GuidanceField,
                 sites: np.ndarray, radii: np.ndarray, cfg: PcfConfig):
        self.d_field = d_field
        self.guidance = guidance
        self.sites = np.ascontiguousarray(sites, dtype=np.float64)
        self.radii = np.ascontiguousarray(radii, dtype=np.float64)
        self.cfg = cfg
        self.mode = _GUIDE_MODES[cfg.guide_mode]
        self.sigma_r = float(cfg.sigma * (radii[1] - radii[0]))
        side = max(1, int(round(len(sites) ** 0.5)))
        self.site_bandwidth = 1.0 / (2.0 * side)
        self.targets = guidance.sample(self.sites)
        # the denominator integral depends only on the density and guidance
        # fields, never on the points, so tabulate it once on a lattice fine
        # enough for the boundary falloff and interpolate at the queries
        d_grid = np.maximum(np.asarray(d_field.grid, dtype=np.float64),
                            DENSITY_FLOOR)
        reach = float(d_grid.max()) * (self.radii[-1] + 5.0 * self.sigma_r)
        res = int(np.clip(np.ceil(4.0 / max(reach, 1e-9)), 16, 64))
        ax = (np.arange(res) + 0.5) / res
        lattice = np.stack(np.meshgrid(ax, ax, indexing="xy"),
                           axis=-1).reshape(-1, 2)
        table = _annulus_normalization(d_field, guidance, lattice,
                                       self.radii, cfg)
        if np.any(table <= 0.0):
            raise ValueError("normalization vanished on the lattice")
        self.norm_field = GuidanceField(
            table.reshape(res, res, len(self.radii)))
        # movable state, filled by refresh()
        self.queries = None
        self.knn = None
        self.denom = None
        self.norm_jac = None
        self.d_q = None
        self.g_q = None
        self.site_weights = None

    def refresh(self, points: np.ndarray) -> None:
        """Rebuild all point-position-dependent tables."""
        pts = np.ascontiguousarray(points, dtype=np.float64)
        self.queries = pts.copy()
        self.knn = np.ascontiguousarray(
            knn_indices(pts, self.queries, self.cfg.k_nearest,
                        exclude_self=True))
        table = self.norm_field.sample(self.queries)
        if np.any(table <= 0.0):
            raise ValueError("isolated query")
        self.denom = len(pts) * table
        self.norm_jac = self.norm_field.sample_jacobian(self.queries)
        self.d_q = np.maximum(self.d_field.sample(self.queries), DENSITY_FLOOR)
        self.g_q = self.guidance.sample(self.queries)
        d2 = ((self.sites[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        h2 = self.site_bandwidth ** 2
        u = np.exp(-d2 / (2.0 * h2))
        mass = u.sum(axis=1)
        live = mass > 1e-12
        u[live] /= mass[live, None]
        u[~live] = 0.0
        self.site_weights = u

    def profiles(self, points: np.ndarray) -> np.ndarray:
        """Per-point ring profiles (n, bins) against the frozen tables."""
        g_pts = self.guidance.sample(points)
        sums = kernels.pcf_sums(points, g_pts, self.knn, self.queries,
                                self.d_q, self.g_q, self.radii,
                                self.sigma_r, self.cfg.guide_bandwidth,
                                self.mode)
        return sums / self.denom

    def pcf(self, points: np.ndarray) -> np.ndarray:
        """Aggregated local estimates at the sites (sites, bins)."""
        return self.site_weights @ self.profiles(points)

    def objective(self, points: np.ndarray) -> float:
        resid = self.pcf(points) - self.targets
        live = self.site_weights.sum(axis=1) > 0.0
        return float((resid[live] ** 2).sum())

    def gradient(self, points: np.ndarray) -> np.ndarray:
        return self.value_and_gradient(points)[1]

    def value_and_gradient(self, points: np.ndarray):
        """(objective, d objective / d points) with neighbor sets and
        denominators held constant; the kernel terms (as neighbor and as
        query), the guidance at the moving positions, and the aggregation
        weights all contribute."""
        g_pts = self.guidance.sample(points)
        g_jac = self.guidance.sample_jacobian(points)
        sums = kernels.pcf_sums(points, g_pts, self.knn, self.queries,
                                self.d_q, self.g_q, self.radii,
                                self.sigma_r, self.cfg.guide_bandwidth,
                                self.mode)
        prof = sums / self.denom
        ghat = self.site_weights @ prof
        resid = ghat - self.targets
        resid[self.site_weights.sum(axis=1) <= 0.0] = 0.0
        value = float((resid ** 2).sum())
        two_resid = 2.0 * resid
        # kernel terms: per-query coefficients fold the site weighting back
        # onto each point's profile; the kernel differentiates both roles
        # (neighbor and owning query) under the per-point protocol
        coeff = (self.site_weights.T @ two_resid) / self.denom
        grad = kernels.pcf_gradient(points, g_pts, g_jac, self.knn,
                                    self.queries, self.d_q, self.g_q,
                                    coeff, self.radii, self.sigma_r,
                                    self.cfg.guide_bandwidth, self.mode)
        # denominator term: the interpolated normalization moves with the
        # owning query
        if self.norm_jac.any():
            grad -= len(points) * np.einsum("qj,qj,qjd->qd", coeff, prof,
                                            self.norm_jac)
        # aggregation term: moving a point reweights every site average
        # it participates in (softmax-style derivative of the weights)
        m_sk = two_resid @ prof.T
        g_s = np.einsum("sj,sj->s", two_resid, ghat)
        w_sk = self.site_weights * (m_sk - g_s[:, None])
        h2 = self.site_bandwidth ** 2
        grad += (w_sk.T @ self.sites - points * w_sk.sum(axis=0)[:, None]) / h2
        return value, grad


def _decay(t: int, iterations: int) -> float:
    """Staged step-size decay: full rate for the first 40% of iterations,
    0.3x to 70%, 0.1x after. ADAM's per-coordinate normalization makes the
    step magnitude ~ the rate itself; late-stage shrinking lets points
    settle into ring structure finer than the initial rate."""
    if t <= 0.4 * iterations:
        return 1.0
    if t <= 0.7 * iterations:
        return 0.3
    return 0.1


def _adam_pcf_loop(problem: _PcfProblem, points: np.ndarray, iterations: int,
                   lr_of, beta1: float, beta2: float, refresh: int):
    """Shared ADAM driver; returns (points, trace). lr_of(points) supplies
    the per-point learning rate each step."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    m = np.zeros_like(points)
    v = np.zeros_like(points)
    trace = np.empty(iterations + 1)
    problem.refresh(points)
    for t in range(1, iterations + 1):
        if (t - 1) % refresh == 0 and t > 1:
            problem.refresh(points)
        trace[t - 1], grad = problem.value_and_gradient(points)
        if not np.isfinite(trace[t - 1]):
            raise AssertionError("synthesis objective became non-finite")
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        mhat = m / (1.0 - beta1 ** t)
        vhat = v / (1.0 - beta2 ** t)
        step = _decay(t, iterations) * lr_of(points)[:, None]
        points = np.clip(points - step * mhat
                         / (np.sqrt(vhat) + _ADAM_EPS), 0.0, 1.0)
        points = np.ascontiguousarray(points)
    problem.refresh(points)
    trace[iterations] = problem.objective(points)
    if not np.isfinite(trace[iterations]):
        raise AssertionError("synthesis objective became non-finite")
    if trace[iterations] > trace[0]:
        raise AssertionError("synthesis objective increased over the run")
    return points, trace


def _problem_for_image(img: FeatureImage, palette: Palette, n: int,
                       cfg: SynthesisConfig) -> _PcfProblem:
    sites = _jittered_sites(cfg.spatial_samples, cfg.seed)
    guidance = _guidance_from_image(img, palette)
    d_field = _density_from_image(img, palette.n_points, n)
    radii = radius_grid(palette.n_points, cfg.pcf)
    return _PcfProblem(d_field, guidance, sites, radii, cfg.pcf)


def objective(P: PointPattern, img: FeatureImage, palette: Palette,
              cfg: SynthesisConfig | None = None) -> float:
    """Monte Carlo PCF-matching objective of a pattern against an image."""
    cfg = cfg or SynthesisConfig()
    cfg.validate()
    img.validate()
    problem = _problem_for_image(img, palette, len(P), cfg)
    pts = np.ascontiguousarray(P.points)
    problem.refresh(pts)
    return problem.objective(pts)


def analytic_gradient(P: PointPattern, img: FeatureImage, palette: Palette,
                      cfg: SynthesisConfig | None = None) -> np.ndarray:
    """d objective / d point coordinates, (n, 2); the neighbor index sets
    are treated as constants (they change discretely), everything else the
    objective evaluates at the point positions is differentiated."""
    cfg = cfg or SynthesisConfig()
    cfg.validate()
    img.validate()
    problem = _problem_for_image(img, palette, len(P), cfg)
    pts = np.ascontiguousarray(P.points)
    problem.refresh(pts)
    return problem.gradient(pts)


def _lr_lookup(palette: Palette, img: FeatureImage):
    """Per-point learning rates: LR-table entry of the image's AB coordinate
    at each point's current position."""

    def lr_of(points: np.ndarray) -> np.ndarray:
        iy, ix = img.pixel_index(points)
        iu = np.clip((img.u[iy, ix] * LUT_RESOLUTION).astype(np.int64),
                     0, LUT_RESOLUTION - 1)
        iv = np.clip((img.v[iy, ix] * LUT_RESOLUTION).astype(np.int64),
                     0, LUT_RESOLUTION - 1)
        return palette.lr_table[iv, iu].astype(np.float64)

    return lr_of


def synthesize(img: FeatureImage, palette: Palette,
               cfg: SynthesisConfig | None = None, *,
               return_report: bool = False):
    """Optimize a point pattern whose local density and correlation match
    the image; dot radii are filled as a post-process."""
    cfg = cfg or SynthesisConfig()
    cfg.validate()
    img.validate()
    started = time.perf_counter()
    n = point_count(img, cfg.point_budget_scale)
    if n == 0:
        pattern = PointPattern(np.zeros((0, 2)))
        report = {"N": 0, "initial_objective": 0.0, "final_objective": 0.0,
                  "wall_time_s": time.perf_counter() - started}
        return (pattern, report) if return_report else pattern

    start = init_points(img, n, child_seed(cfg.seed, 3))
    if n < 2:
        pattern = optimize_dot_sizes(start, img)
        report = {"N": n, "initial_objective": 0.0, "final_objective": 0.0,
                  "wall_time_s": time.perf_counter() - started}
        return (pattern, report) if return_report else pattern
    problem = _problem_for_image(img, palette, n, cfg)
    points, trace = _adam_pcf_loop(problem, start.points, cfg.iterations,
                                   _lr_lookup(palette, img),
                                   cfg.adam_beta1, cfg.adam_beta2,
                                   cfg.knn_refresh)
    pattern = optimize_dot_sizes(PointPattern(points), img)
    report = {"N": n, "initial_objective": float(trace[0]),
              "final_objective": float(trace[-1]),
              "wall_time_s": time.perf_counter() - started}
    return (pattern, report) if return_report else pattern


def match_pcf(target: np.ndarray, n: int, *, learning_rate: float = 0.001,
              iterations: int = 1000, seed: int = 0,
              pcf_cfg: PcfConfig | None = None, spatial_samples: int = 100):
    """Drive a white-noise start of n points toward one constant target PCF.

    The constant target doubles as the guidance map, so the bilateral terms
    are uniform; density is uniform at the scale the target was measured at.
    Returns (PointPattern, {initial_objective, final_objective})."""
    cfg = pcf_cfg or PcfConfig()
    cfg.validate()
    if n < 2:
        raise ValueError("need at least 2 points to match correlations")
    target = np.asarray(target, dtype=np.float64).ravel()
    if target.shape[0] != cfg.bin_count:
        raise ValueError("target PCF bin count mismatch")
    sites = _jittered_sites(spatial_samples, seed)
    guidance = GuidanceField(np.broadcast_to(
        target, (2, 2, cfg.bin_count)).copy())
    problem = _PcfProblem(uniform_density(), guidance, sites,
                          radius_grid(n, cfg), cfg)
    start = rng_from(seed, 3).random((n, 2))
    lr = float(learning_rate)
    points, trace = _adam_pcf_loop(problem, start, iterations,
                                   lambda p: np.full(len(p), lr),
                                   0.9, 0.999, 50)
    info = {"initial_objective": float(trace[0]),
            "final_objective": float(trace[-1])}
    return PointPattern(points), info


def measured_pcf(pattern: PointPattern, cfg: PcfConfig | None = None) -> np.ndarray:
    """Measurement-grade plain PCF of a pattern (per-point protocol)."""
    from .realize import pattern_pcf

    return pattern_pcf(pattern, cfg)


def realizability_metric(palette: Palette, probe_count: int = 16,
                         seed: int = 0, *, iterations: int = 1000,
                         point_budget_scale: float = 50000.0,
                         threads: int = 1):
    """Synthesis fidelity across the latent space: A = mean |realized -
    target| PCF error over probes and bins; B = max target spread over
    probe pairs and bins; returns (A, B, A/B)."""
    if probe_count < 2:
        raise ValueError("need at least 2 probes")
    # probe coordinates snap to LUT cell centers so the synthesis target
    # equals the table entry exactly
    raw = rng_from(seed, 0).random((probe_count, 2))
    cells = np.floor(raw * LUT_RESOLUTION)
    probes = (cells + 0.5) / LUT_RESOLUTION
    # constant-image lightness that makes the budget equal the basis size
    level = 100.0 * (1.0 - palette.n_points / point_budget_scale)

    targets = palette.lut[cells[:, 1].astype(int), cells[:, 0].astype(int)].astype(np.float64)

    def run_probe(i: int) -> np.ndarray:
        img = FeatureImage.constant(level, probes[i, 0], probes[i, 1])
        cfg = SynthesisConfig(iterations=iterations, seed=child_seed(seed, 2, i),
                              point_budget_scale=point_budget_scale)
        pattern = synthesize(img, palette, cfg)
        return measured_pcf(pattern)

    realized = np.stack(run_indexed(run_probe, probe_count, threads))
    a = float(np.mean(np.abs(realized - targets)))
    diff = targets[:, None, :] - targets[None, :, :]
    b = float(np.max(np.abs(diff)))
    if b <= 0.0:
        raise ValueError("degenerate probe set: all targets identical")
    return a, b, a / b


def optimize_dot_sizes(P: PointPattern, img: FeatureImage) -> PointPattern:
    """Closed-form dot radii: local ink coverage tracks the L channel.
    radius = r_base * sqrt(rho/mean rho), clamped to [0.25, 4] r_base,
    r_base = 0.4 x mean nearest-neighbor distance."""
    n = len(P)
    if n == 0:
        return PointPattern(P.points.copy(), np.zeros(0))
    if n >= 2:
        nn_dist, _ = cKDTree(P.points).query(P.points, k=2)
        r_base = 0.4 * float(nn_dist[:, 1].mean())
    else:
        r_base = 0.4
    rho_img = 1.0 - img.L / 100.0
    ink = rho_img[rho_img > 0.0]
    rho_bar = float(ink.mean()) if ink.size else 1.0
    rho_pts = np.maximum(1.0 - ScalarField(img.L).sample(P.points) / 100.0, 0.0)
    radii = np.clip(r_base * np.sqrt(rho_pts / rho_bar),
                    0.25 * r_base, 4.0 * r_base)
    return PointPattern(P.points.copy(), radii)
