"""Pure-numpy kernel implementations (fallback backend).

Signatures mirror the compiled `_kernels` extension exactly; the backend
module selects one of the two at import time. All functions are pure and
single-threaded; callers parallelize only across independent seeded tasks.

guide modes: 0 = |ga . (bw I) . gb|  (inner product form)
             1 = exp(-|ga - gb|^2 / (2 bw))  (Gaussian-of-difference form)
"""

from __future__ import annotations

import numpy as np

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _guide_weights(ga: np.ndarray, gb: np.ndarray, bandwidth: float, mode: int) -> np.ndarray:
    """Pair similarity between query guides ga (..., m) and point guides gb (..., m)."""
    if mode == 0:
        return bandwidth * np.abs(np.sum(ga * gb, axis=-1))
    diff = gb - ga
    return np.exp(-np.sum(diff * diff, axis=-1) / (2.0 * bandwidth))


def norm_table(res: int, g_cells: np.ndarray, queries: np.ndarray,
               d_q: np.ndarray, g_q: np.ndarray, radii: np.ndarray,
               sigma_r: float, bandwidth: float, mode: int) -> np.ndarray:
    """Area-weighted normalization sums D[q, j] over the implicit res^2 grid.

    Cell centers sit at ((i+0.5)/res, (j+0.5)/res); g_cells holds guidance in
    row-major order (flat index j*res + i). Returns (Q, bins) with
    D = (1/res^2) * sum_cells s(cell, q, r_j) * w(g_q, g_cell). Cells more
    than 9 sigma outside the radius band contribute < 1e-17 relative weight
    and are skipped, which keeps the per-query cost near-constant in res.
    """
    radii = np.asarray(radii, dtype=np.float64)
    res = int(res)
    area = 1.0 / (res * res)
    inv_norm = _INV_SQRT_2PI / sigma_r
    lo = float(radii[0]) - 9.0 * sigma_r
    hi = float(radii[-1]) + 9.0 * sigma_r
    centers = (np.arange(res, dtype=np.float64) + 0.5) / res
    out = np.zeros((len(queries), len(radii)), dtype=np.float64)
    for q in range(len(queries)):
        qx, qy = queries[q]
        reach = hi * d_q[q]
        x0 = max(0, int(np.floor((qx - reach) * res - 0.5)))
        x1 = min(res - 1, int(np.floor((qx + reach) * res + 0.5)))
        y0 = max(0, int(np.floor((qy - reach) * res - 0.5)))
        y1 = min(res - 1, int(np.floor((qy + reach) * res + 0.5)))
        if x1 < x0 or y1 < y0:
            continue
        dx = centers[x0:x1 + 1] - qx
        dy = centers[y0:y1 + 1] - qy
        t = np.sqrt(dx[None, :] ** 2 + dy[:, None] ** 2).ravel() / d_q[q]
        keep = (t >= lo) & (t <= hi)
        if not np.any(keep):
            continue
        ids = (np.arange(y0, y1 + 1)[:, None] * res +
               np.arange(x0, x1 + 1)[None, :]).ravel()[keep]
        w = _guide_weights(g_q[q], g_cells[ids], bandwidth, mode)
        z = (t[keep, None] - radii[None, :]) / sigma_r
        pdf = np.exp(-0.5 * z * z) * inv_norm
        out[q] = area * (w @ pdf)
    return out


def pcf_sums(points: np.ndarray, g_pts: np.ndarray, knn: np.ndarray,
             queries: np.ndarray, d_q: np.ndarray, g_q: np.ndarray,
             radii: np.ndarray, sigma_r: float, bandwidth: float,
             mode: int) -> np.ndarray:
    """Raw kernel sums over the k nearest points: sum_i s * w, shape (Q, bins).

    The caller divides by the normalization table and the point count.
    """
    radii = np.asarray(radii, dtype=np.float64)
    inv_norm = _INV_SQRT_2PI / sigma_r
    nbr = points[knn]                       # (Q, k, 2)
    delta = nbr - queries[:, None, :]
    dist = np.sqrt(delta[:, :, 0] ** 2 + delta[:, :, 1] ** 2)
    t = dist / d_q[:, None]                 # (Q, k)
    w = _guide_weights(g_q[:, None, :], g_pts[knn], bandwidth, mode)
    z = (t[:, :, None] - radii[None, None, :]) / sigma_r
    pdf = np.exp(-0.5 * z * z) * inv_norm   # (Q, k, bins)
    return np.einsum("qk,qkj->qj", w, pdf)


def pcf_gradient(points: np.ndarray, g_pts: np.ndarray, g_jac: np.ndarray,
                 knn: np.ndarray, queries: np.ndarray, d_q: np.ndarray,
                 g_q: np.ndarray, coeff: np.ndarray, radii: np.ndarray,
                 sigma_r: float, bandwidth: float, mode: int) -> np.ndarray:
    """Accumulated objective gradient over point coordinates, shape (n, 2).

    coeff[q, j] multiplies d(s_ij * w_i)/dp; for the squared-residual
    objective the caller passes 2 * (ghat - gbar) / (n * D). g_jac is the
    (n, m, 2) guidance jacobian at the current point positions. Each point
    is differentiated in both of its roles under the per-point protocol: as
    a neighbor in other queries' sums, and as the owner of query q (query q
    is point q), whose position and guide vector move with it.
    """
    radii = np.asarray(radii, dtype=np.float64)
    inv_norm = _INV_SQRT_2PI / sigma_r
    nbr = points[knn]
    delta = nbr - queries[:, None, :]       # (Q, k, 2), p_i - x
    dist = np.sqrt(delta[:, :, 0] ** 2 + delta[:, :, 1] ** 2)
    t = dist / d_q[:, None]
    gp = g_pts[knn]                          # (Q, k, m)
    z = (t[:, :, None] - radii[None, None, :]) / sigma_r
    pdf = np.exp(-0.5 * z * z) * inv_norm    # (Q, k, bins)
    # ds/dt = pdf * (r - t) / sigma^2
    dsdt = pdf * (radii[None, None, :] - t[:, :, None]) / (sigma_r * sigma_r)

    if mode == 0:
        dots = np.einsum("qm,qkm->qk", g_q, gp)
        w = bandwidth * np.abs(dots)
        # dw/dp = bw * sign(dot) * (g_q . J)
        gj = np.einsum("qm,qkmd->qkd", g_q, g_jac[knn])
        dw = bandwidth * np.sign(dots)[:, :, None] * gj
        # dw/dg_q contracted with the owning point's jacobian
        dwq = bandwidth * np.sign(dots)[:, :, None] * \
            np.einsum("qkm,qmd->qkd", gp, g_jac)
    else:
        diff = gp - g_q[:, None, :]
        w = np.exp(-np.sum(diff * diff, axis=-1) / (2.0 * bandwidth))
        dj = np.einsum("qkm,qkmd->qkd", diff, g_jac[knn])
        dw = w[:, :, None] * (-1.0 / bandwidth) * dj
        dwq = w[:, :, None] * (1.0 / bandwidth) * \
            np.einsum("qkm,qmd->qkd", diff, g_jac)

    c1 = np.einsum("qj,qkj->qk", coeff, dsdt) * w      # spatial term factor
    c2 = np.einsum("qj,qkj->qk", coeff, pdf)           # guidance term factor
    # dt/dp = (p - x) / (dist * d_q); zero direction at coincident pairs
    safe = np.where(dist > 1e-12, dist, 1.0)
    u_dir = delta / (safe * d_q[:, None])[:, :, None]
    u_dir[dist <= 1e-12] = 0.0

    contrib = c1[:, :, None] * u_dir + c2[:, :, None] * dw
    grad = np.zeros((len(points), 2), dtype=np.float64)
    np.add.at(grad, knn.ravel(), contrib.reshape(-1, 2))
    grad -= np.einsum("qk,qkd->qd", c1, u_dir)
    grad += np.einsum("qkd,qk->qd", dwq, c2)
    return grad
