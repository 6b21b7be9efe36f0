"""Small shared helpers: seeded RNG spawning, worker pools, atomic writes."""

from __future__ import annotations

import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np


def rng_from(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for (seed, key...) so parallel tasks are
    reproducible independent of execution order."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seq))


def child_seed(seed: int, *key: int) -> int:
    """Derive an integer seed for a named child stream of (seed, key...)."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(1, np.uint64)[0] >> 1)


def run_indexed(fn: Callable, count: int, threads: int = 1) -> list:
    """Run fn(i) for i in range(count), collecting results in index order.

    threads <= 1 runs inline; otherwise a thread pool is used. Each task must
    be independently seeded so the result is identical at any thread count.
    """
    if threads is None or threads <= 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(fn, range(count)))


def atomic_write_bytes(path: str, data: bytes) -> None:
    """Write via temp file + rename so partial outputs are never visible."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def knn_indices(points: np.ndarray, queries: np.ndarray, k: int,
                exclude_self: bool = False) -> np.ndarray:
    """Deterministic k-nearest-neighbor indices, shape (len(queries), k).

    Ties are broken by point index (lexsort on distance then index), so the
    result is identical across backends and platforms. With exclude_self,
    query row q drops point index q (caller guarantees queries == points).
    """
    points = np.asarray(points, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64)
    n = len(points)
    k = min(int(k), n - 1 if exclude_self else n)
    if k <= 0:
        return np.zeros((len(queries), 0), dtype=np.int64)
    out = np.empty((len(queries), k), dtype=np.int64)
    block = max(1, int(2e6) // max(n, 1))
    for start in range(0, len(queries), block):
        q = queries[start:start + block]
        d2 = ((q[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
        if exclude_self:
            rows = np.arange(start, start + len(q))
            d2[np.arange(len(q)), rows] = np.inf
        # partial select, then exact distance-then-index ordering inside it
        take = min(n, k + 8)
        part = np.argpartition(d2, take - 1, axis=1)[:, :take]
        pd = np.take_along_axis(d2, part, axis=1)
        order = np.lexsort((part, pd), axis=1)[:, :k]
        out[start:start + len(q)] = np.take_along_axis(part, order, axis=1)
    return out
