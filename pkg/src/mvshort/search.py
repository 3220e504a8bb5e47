"""Exhaustive inner-product search over short vectors and mAP evaluation."""

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError

NORM_TOL = 1e-6


class Index:
    """Immutable set of unit-norm short vectors keyed by image id.

    All-zero rows (images without descriptors) are allowed and always rank
    after every other row.
    """

    def __init__(self, ids, vectors):
        vectors = np.array(vectors, dtype=np.float32, copy=True)
        ids = tuple(ids)
        if vectors.ndim != 2 or vectors.shape[0] != len(ids):
            raise DataError(f"{len(ids)} ids for vectors of shape {vectors.shape}")
        if len(set(ids)) != len(ids):
            raise DataError("duplicate image ids in index")
        norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
        zero = ~np.any(vectors != 0, axis=1)
        bad = ~zero & (np.abs(norms - 1.0) > NORM_TOL)
        if np.any(bad):
            raise DataError(f"{int(bad.sum())} index rows are neither unit-norm nor zero, "
                            f"first {ids[int(np.argmax(bad))]!r}")
        vectors.flags.writeable = False
        self.ids = ids
        self.vectors = vectors
        self.zero = zero
        self._pos = {image_id: i for i, image_id in enumerate(ids)}
        # rank of each id in ascending string order, used as the tie-breaker
        self._id_rank = np.empty(len(ids), dtype=np.int64)
        self._id_rank[np.argsort(np.array(ids, dtype=object), kind="stable")] = np.arange(len(ids))

    def __len__(self):
        return len(self.ids)

    @property
    def dim(self):
        return self.vectors.shape[1]

    def vector(self, image_id):
        try:
            return self.vectors[self._pos[image_id]]
        except KeyError:
            raise DataError(f"image {image_id!r} not in index") from None

    @classmethod
    def from_matrix(cls, M):
        return cls(M.ids, M.values)


def query(idx, q, top=None):
    """Rank the index by inner product with ``q``.

    Returns ``(image_id, score)`` pairs, best first.  Equal scores are ordered
    by ascending image id; zero rows come last.
    """
    if top is not None and top <= 0:
        raise ParameterError(f"top must be positive, got {top}")
    q = np.asarray(getattr(q, "values", q), dtype=np.float64).reshape(-1)
    if q.shape[0] != idx.dim:
        raise ParameterError(f"query dimension {q.shape[0]} != index dimension {idx.dim}")
    scores = idx.vectors.astype(np.float64) @ q
    order = np.lexsort((idx._id_rank, -scores, idx.zero))
    if top is not None:
        order = order[:top]
    return [(idx.ids[i], float(scores[i])) for i in order]


@dataclass(frozen=True)
class GroundTruthQuery:
    query_id: str
    positives: frozenset
    junk: frozenset = frozenset()
    exclude_self: bool = False

    def __post_init__(self):
        object.__setattr__(self, "positives", frozenset(self.positives))
        object.__setattr__(self, "junk", frozenset(self.junk))
        if self.positives & self.junk:
            raise DataError(f"query {self.query_id!r}: ids both positive and junk")


def average_precision(ranked_ids, gt):
    """Non-interpolated AP after dropping junk (and the query, if excluded).

    Positives missing from the list contribute zero precision.
    """
    if not gt.positives:
        raise DataError(f"query {gt.query_id!r} has no positives")
    hits = 0
    total = 0.0
    rank = 0
    for image_id in ranked_ids:
        if isinstance(image_id, tuple):
            image_id = image_id[0]
        if image_id in gt.junk or (gt.exclude_self and image_id == gt.query_id):
            continue
        rank += 1
        if image_id in gt.positives:
            hits += 1
            total += hits / rank
    return total / len(gt.positives)


def evaluate(idx, ground_truth, query_vectors=None):
    """Per-query AP, in ground-truth order.

    A query's vector is taken from ``query_vectors`` (mapping id -> vector)
    when present, otherwise from the index row with the same id.
    """
    query_vectors = query_vectors or {}
    aps = {}
    for gt in ground_truth:
        try:
            if gt.query_id in query_vectors:
                q = query_vectors[gt.query_id]
            else:
                q = idx.vector(gt.query_id)
            aps[gt.query_id] = average_precision(query(idx, q), gt)
        except (DataError, ParameterError) as exc:
            raise type(exc)(f"query {gt.query_id!r}: {exc}") from exc
    return aps


def mean_ap(idx, ground_truth, query_vectors=None):
    ground_truth = list(ground_truth)
    if not ground_truth:
        raise DataError("ground truth lists no queries")
    aps = evaluate(idx, ground_truth, query_vectors)
    return float(np.mean([aps[gt.query_id] for gt in ground_truth]))


# -- text formats -------------------------------------------------------------

def read_ground_truth(path):
    queries = []
    current = None

    def flush():
        if current is not None:
            queries.append(GroundTruthQuery(current[0], current[2], current[3], current[1]))

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            tag = parts[0]
            if tag == "Q":
                if len(parts) != 3 or parts[2] not in ("0", "1"):
                    raise DataError(f"{path}:{lineno}: expected 'Q<TAB>id<TAB>0|1'")
                flush()
                current = (parts[1], parts[2] == "1", set(), set())
            elif tag in ("P", "J"):
                if current is None or len(parts) != 2:
                    raise DataError(f"{path}:{lineno}: malformed {tag} line")
                current[2 if tag == "P" else 3].add(parts[1])
            else:
                raise DataError(f"{path}:{lineno}: unknown record type {tag!r}")
    flush()
    for gt in queries:
        if not gt.positives:
            raise DataError(f"{path}: query {gt.query_id!r} has no positives")
    return queries


def write_ground_truth(path, queries):
    with open(path, "w", encoding="utf-8") as fh:
        for gt in queries:
            fh.write(f"Q\t{gt.query_id}\t{int(gt.exclude_self)}\n")
            for image_id in sorted(gt.positives):
                fh.write(f"P\t{image_id}\n")
            for image_id in sorted(gt.junk):
                fh.write(f"J\t{image_id}\n")


def write_results(path, results):
    """``results`` maps query id -> ranked ``(image_id, score)`` list."""
    with open(path, "w", encoding="utf-8") as fh:
        for query_id, ranked in results.items():
            for rank, (image_id, score) in enumerate(ranked, 1):
                fh.write(f"{query_id}\t{rank}\t{image_id}\t{score:.6f}\n")


def read_results(path):
    results = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 4 tab-separated fields")
            query_id, rank, image_id, score = parts
            ranked = results.setdefault(query_id, [])
            if int(rank) != len(ranked) + 1:
                raise DataError(f"{path}:{lineno}: rank {rank} out of sequence")
            ranked.append((image_id, float(score)))
    return results
