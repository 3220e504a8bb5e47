"""Bag-of-words encoding over one or several vocabularies.

Per vocabulary: word histogram (optionally idf weighted), L2 normalization,
signed power-law normalization.  Blocks are then weighted, concatenated and
normalized once more to give the high-dimensional vector that is later
PCA-reduced.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _binio
from ._linalg import signed_power
from .errors import DataError, ParameterError

BOW_MAGIC = b"MVBW"


@dataclass(frozen=True, eq=False)
class BowVector:
    values: np.ndarray
    image_id: str = ""

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True).reshape(-1)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def D(self):
        return self.values.shape[0]

    @property
    def is_zero(self):
        return not np.any(self.values)


@dataclass(frozen=True, eq=False)
class VocabularyBundle:
    """Ordered vocabularies with per-block weights and optional idf vectors."""

    vocabularies: tuple
    weights: tuple = None
    idf: tuple = None
    offsets: tuple = field(init=False)

    def __post_init__(self):
        vocabs = tuple(self.vocabularies)
        if not vocabs:
            raise ParameterError("bundle needs at least one vocabulary")
        ks = [_k_of(v) for v in vocabs]
        weights = default_weights(ks) if self.weights is None else tuple(float(w) for w in self.weights)
        if len(weights) != len(vocabs):
            raise ParameterError(f"{len(weights)} weights for {len(vocabs)} vocabularies")
        if any(not w > 0 for w in weights):
            raise ParameterError(f"bundle weights must be positive, got {weights}")
        idf = self.idf
        if idf is not None:
            idf = tuple(None if x is None else np.asarray(x, dtype=np.float64) for x in idf)
            if len(idf) != len(vocabs):
                raise ParameterError("one idf entry (or None) per vocabulary required")
            for x, k in zip(idf, ks):
                if x is not None and x.shape != (k,):
                    raise ParameterError(f"idf of length {x.shape} for vocabulary of size {k}")
        object.__setattr__(self, "vocabularies", vocabs)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "idf", idf)
        object.__setattr__(self, "offsets", tuple(np.concatenate([[0], np.cumsum(ks)]).tolist()))

    @property
    def sizes(self):
        return tuple(_k_of(v) for v in self.vocabularies)

    @property
    def D(self):
        return self.offsets[-1]


def _k_of(v):
    return int(v) if isinstance(v, (int, np.integer)) else v.k


def default_weights(ks):
    """``ln k`` per block, or all ones when every block has the same size."""
    ks = [int(k) for k in ks]
    if len(set(ks)) <= 1:
        return tuple(1.0 for _ in ks)
    if min(ks) < 2:
        raise ParameterError("log-size weighting needs every vocabulary size >= 2")
    return tuple(float(np.log(k)) for k in ks)


def _l2(v):
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else np.zeros_like(v)


def encode_bow(word_ids, k, idf=None, image_id=""):
    """L2-normalized (optionally idf-weighted) histogram of word ids."""
    ids = np.asarray(getattr(word_ids, "word_ids", word_ids), dtype=np.int64).reshape(-1)
    if ids.size and (ids.min() < 0 or ids.max() >= k):
        bad = ids[(ids < 0) | (ids >= k)][0]
        raise DataError(f"word id {bad} outside [0, {k})")
    counts = np.bincount(ids, minlength=k).astype(np.float64)
    if idf is not None:
        idf = np.asarray(idf, dtype=np.float64)
        if idf.shape != (k,):
            raise ParameterError(f"idf length {idf.shape} != k={k}")
        counts *= idf
    return BowVector(_l2(counts), image_id=image_id or getattr(word_ids, "image_id", ""))


def compute_idf(corpus, k):
    """``ln(N / n_j)`` over ``N`` images; words never seen get 0."""
    corpus = list(corpus)
    if not corpus:
        raise ParameterError("idf needs at least one image")
    df = np.zeros(k, dtype=np.int64)
    for a in corpus:
        ids = np.unique(np.asarray(getattr(a, "word_ids", a), dtype=np.int64))
        if ids.size and (ids[0] < 0 or ids[-1] >= k):
            raise DataError(f"word id outside [0, {k})")
        df[ids] += 1
    idf = np.zeros(k)
    seen = df > 0
    idf[seen] = np.log(len(corpus) / df[seen])
    return idf


def ssr(v, beta=0.5):
    """Signed power-law normalization followed by L2 normalization."""
    if not 0.0 <= beta <= 1.0:
        raise ParameterError(f"power-law exponent must be in [0, 1], got {beta}")
    values = getattr(v, "values", v)
    values = np.asarray(values, dtype=np.float64)
    out = _l2(signed_power(values, beta))
    if isinstance(v, BowVector):
        return BowVector(out, image_id=v.image_id)
    return out


def concat_bundle(blocks, weights):
    """Weighted concatenation of per-vocabulary blocks, then L2 normalization."""
    blocks = [getattr(b, "values", b) for b in blocks]
    if len(blocks) != len(weights):
        raise ParameterError(f"{len(blocks)} blocks for {len(weights)} weights")
    if any(not w > 0 for w in weights):
        raise ParameterError("block weights must be positive")
    out = np.concatenate([w * np.asarray(b, dtype=np.float64) for b, w in zip(blocks, weights)])
    return _l2(out)


def encode_image(assignments, bundle, beta=0.5, image_id=""):
    """Full BOW vector of one image from its per-vocabulary assignments."""
    if len(assignments) != len(bundle.vocabularies):
        raise ParameterError(f"{len(assignments)} assignments for "
                             f"{len(bundle.vocabularies)} vocabularies")
    blocks = []
    for i, (a, k) in enumerate(zip(assignments, bundle.sizes)):
        idf = bundle.idf[i] if bundle.idf is not None else None
        blocks.append(ssr(encode_bow(a, k, idf=idf).values, beta))
    return BowVector(concat_bundle(blocks, bundle.weights), image_id=image_id)


def quantization_complexity(bundle):
    """Vector comparisons per local descriptor: the total number of centroids."""
    sizes = bundle.sizes if isinstance(bundle, VocabularyBundle) else [_k_of(v) for v in bundle]
    return int(sum(sizes))


def unique_assignments(assignments):
    """Number of distinct word-id tuples (occupied product-vocabulary cells).

    ``assignments`` holds one word-id sequence per vocabulary, all over the
    same descriptors in the same order.
    """
    cols = [np.asarray(getattr(a, "word_ids", a), dtype=np.int64).reshape(-1)
            for a in assignments]
    if not cols:
        return 0
    n = len(cols[0])
    if any(len(c) != n for c in cols):
        raise DataError(f"assignment lengths differ: {[len(c) for c in cols]}")
    if n == 0:
        return 0
    return int(np.unique(np.stack(cols, axis=1), axis=0).shape[0])


def unique_assignment_curve(assignments):
    """Unique-assignment counts as vocabularies 1..V are appended."""
    return [unique_assignments(assignments[:i]) for i in range(1, len(assignments) + 1)]


# -- BOW matrix files -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BowMatrix:
    """Rows of BOW (or reduced) vectors with their image ids."""

    ids: tuple
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float32, copy=True)
        if v.ndim != 2 or v.shape[0] != len(self.ids):
            raise DataError(f"{len(self.ids)} ids for a value matrix of shape {v.shape}")
        v.flags.writeable = False
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "values", v)

    def row(self, image_id):
        return self.values[self.ids.index(image_id)]


def save_bow_matrix(path, M):
    w = _binio.Writer(BOW_MAGIC)
    w.u64(len(M.ids))
    w.u32(M.values.shape[1])
    for image_id in M.ids:
        w.string(image_id)
    w.array(M.values, np.float32)
    w.save(path)


def load_bow_matrix(path):
    r = _binio.Reader.open(path, BOW_MAGIC)
    n = r.u64()
    D = r.u32()
    ids = tuple(r.string() for _ in range(n))
    values = r.array(np.float32, n * D, shape=(n, D))
    r.finish()
    return BowMatrix(ids, values)
