"""k-means visual vocabularies and exhaustive nearest-centroid quantization."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _binio
from .descriptors import DescriptorMatrix
from .errors import DataError, ParameterError

log = logging.getLogger(__name__)

VOCABULARY_MAGIC = b"MVVC"

# Fixed row-block size for the assignment step.  Blocks, not threads, define
# the arithmetic, so results do not depend on the worker count.
BLOCK_ROWS = 2048


@dataclass(frozen=True, eq=False)
class Vocabulary:
    """``k x d`` float32 centroids plus how they were produced.

    ``history`` (objective after every assignment step) and ``converged`` are
    only set by :func:`kmeans_train` and are not stored in vocabulary files.
    """

    centroids: np.ndarray
    seed: int = 0
    transform: str = "none"
    channel: str = ""
    training_tag: str = ""
    history: tuple = field(default=(), repr=False, compare=False)
    converged: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        c = np.array(self.centroids, dtype=np.float32, copy=True)
        if c.ndim != 2 or c.shape[0] < 1 or c.shape[1] < 1:
            raise DataError(f"centroids must be k x d with k, d >= 1, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise DataError("non-finite centroid values")
        c.flags.writeable = False
        object.__setattr__(self, "centroids", c)

    @property
    def k(self):
        return self.centroids.shape[0]

    @property
    def d(self):
        return self.centroids.shape[1]


@dataclass(frozen=True, eq=False)
class Assignment:
    word_ids: np.ndarray
    image_id: str = ""
    channel: str = ""

    @property
    def n(self):
        return len(self.word_ids)


def _data(X):
    if isinstance(X, DescriptorMatrix):
        return X.data
    X = np.asarray(X, dtype=np.float32)
    if X.ndim == 1:
        X = X[:, None]
    return X


def _assign_block(X, C, cc):
    scores = cc[None, :] - 2.0 * (X @ C.T)
    labels = np.argmin(scores, axis=1)
    diff = X - C[labels]
    return labels, np.einsum("ij,ij->i", diff, diff)


def _assign(X, C, threads=1):
    """Nearest centroid (lowest index on ties) and exact squared distance.

    ``X`` and ``C`` are float64.  The argmin uses ``|c|^2 - 2 x.c`` (the
    ``|x|^2`` term is constant per row); the returned distance is recomputed
    directly from the difference vector.
    """
    n = X.shape[0]
    cc = np.einsum("ij,ij->i", C, C)
    if n == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    starts = range(0, n, BLOCK_ROWS)
    work = lambda s: _assign_block(X[s:s + BLOCK_ROWS], C, cc)  # noqa: E731
    if threads > 1 and n > BLOCK_ROWS:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    labels = np.concatenate([p[0] for p in parts]).astype(np.int64)
    dist = np.concatenate([p[1] for p in parts])
    return labels, dist


def _kmeanspp(X, k, rng):
    n = X.shape[0]
    centers = [int(rng.integers(n))]
    d2 = np.einsum("ij,ij->i", X - X[centers[0]], X - X[centers[0]])
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            cum = np.cumsum(d2)
            idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
            idx = min(idx, n - 1)
            while d2[idx] == 0:  # guard against landing on a zero-weight point
                idx -= 1
        else:
            # fewer distinct points than k; duplicates are unavoidable
            idx = next(i for i in range(n) if i not in centers) if len(centers) < n else 0
        centers.append(idx)
        diff = X - X[idx]
        d2 = np.minimum(d2, np.einsum("ij,ij->i", diff, diff))
    return X[centers].copy()


def _update(X, labels, dist, C):
    """Cluster means, summed in row order; empty clusters re-seeded.

    An empty cluster takes the point currently farthest from its centroid
    (lowest row index on ties); that point is then unavailable to later
    empty clusters in the same step.
    """
    k, d = C.shape
    counts = np.bincount(labels, minlength=k)
    sums = np.empty((k, d))
    for j in range(d):
        sums[:, j] = np.bincount(labels, weights=X[:, j], minlength=k)
    new = C.copy()
    full = counts > 0
    new[full] = sums[full] / counts[full, None]
    empty = np.flatnonzero(~full)
    if empty.size:
        dist = dist.copy()
        for j in empty:
            far = int(np.argmax(dist))
            if dist[far] <= 0:
                log.warning("cluster %d empty and no point left to re-seed it", j)
                continue
            new[j] = X[far]
            dist[far] = 0.0
    # keep training state on the float32 grid the stored vocabulary lives on
    return new.astype(np.float32).astype(np.float64)


def _lloyd(X, k, rng, max_iters, tol, threads):
    C = _kmeanspp(X, k, rng).astype(np.float32).astype(np.float64)
    labels, dist = _assign(X, C, threads)
    history = [float(dist.sum())]
    converged = False
    for _ in range(max_iters):
        C = _update(X, labels, dist, C)
        new_labels, dist = _assign(X, C, threads)
        history.append(float(dist.sum()))
        if np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels
        prev, cur = history[-2], history[-1]
        if prev <= 0 or (prev - cur) < tol * prev:
            break
    return C, history, converged


def kmeans_train(X, k, seed=0, max_iters=25, tol=1e-4, threads=1, n_init=1,
                 channel="", transform="none", training_tag=""):
    """Train a k-means vocabulary with k-means++ seeding and Lloyd iterations.

    Iteration stops when the assignment no longer changes, when the relative
    objective decrease drops below ``tol``, or after ``max_iters`` updates.
    With ``n_init > 1`` the restart with the lowest final objective is kept
    (earliest restart on ties).  Output is a deterministic function of the
    inputs and ``seed``; ``threads`` only changes speed.
    """
    data = _data(X)
    n = data.shape[0]
    if k < 1:
        raise ParameterError(f"k must be >= 1, got {k}")
    if n < k:
        raise ParameterError(f"need at least k={k} training vectors, got {n}")
    if n_init < 1:
        raise ParameterError(f"n_init must be >= 1, got {n_init}")
    X64 = data.astype(np.float64)
    best = None
    for child in np.random.SeedSequence(seed).spawn(n_init):
        C, history, converged = _lloyd(X64, k, np.random.default_rng(child),
                                       max_iters, tol, threads)
        if best is None or history[-1] < best[1][-1]:
            best = (C, history, converged)
    C, history, converged = best
    if len(np.unique(C, axis=0)) < k:
        log.warning("vocabulary has duplicate centroids (too few distinct training points)")
    return Vocabulary(C, seed=seed, transform=transform, channel=channel,
                      training_tag=training_tag, history=tuple(history),
                      converged=converged)


def quantize(X, V, threads=1):
    """Map each descriptor to its nearest centroid by exhaustive search."""
    data = _data(X)
    if data.shape[0] and data.shape[1] != V.d:
        raise ParameterError(f"descriptor dimension {data.shape[1]} != vocabulary dimension {V.d}")
    labels, _ = _assign(data.astype(np.float64), V.centroids.astype(np.float64), threads)
    image_id = getattr(X, "image_id", "")
    channel = getattr(X, "channel", "")
    return Assignment(labels, image_id=image_id, channel=channel)


def kmeans_objective(X, V):
    """Sum over descriptors of the squared distance to the nearest centroid."""
    data = _data(X)
    if data.shape[0] == 0:
        return 0.0
    if data.shape[1] != V.d:
        raise ParameterError(f"descriptor dimension {data.shape[1]} != vocabulary dimension {V.d}")
    _, dist = _assign(data.astype(np.float64), V.centroids.astype(np.float64))
    return float(dist.sum())


def save_vocabulary(path, V):
    w = _binio.Writer(VOCABULARY_MAGIC)
    w.u32(V.k)
    w.u32(V.d)
    w.u64(V.seed)
    w.string(V.transform)
    w.string(V.channel)
    w.string(V.training_tag)
    w.array(V.centroids, np.float32)
    w.save(path)


def load_vocabulary(path):
    r = _binio.Reader.open(path, VOCABULARY_MAGIC)
    k = r.u32()
    d = r.u32()
    seed = r.u64()
    transform = r.string()
    channel = r.string()
    tag = r.string()
    centroids = r.array(np.float32, k * d, shape=(k, d))
    r.finish()
    return Vocabulary(centroids, seed=seed, transform=transform, channel=channel,
                      training_tag=tag)
