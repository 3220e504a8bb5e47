"""Planted synthetic retrieval benchmark.

Stand-in for Oxford/Holidays-style data at desk scale.  Every image shows one
"object": a set of local features, each with a core appearance and a context
appearance drawn around shared pattern centers.  Query groups are images of
the same object, observed with independent noise and partially replaced by
clutter features.  Distractor and training images each show their own
object.

Channels emulate measurement regions of different relative size: the larger
the region, the more the context appearance mixes into the descriptor.
Descriptors are nonnegative and unit-norm, like SIFT.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from .descriptors import DEFAULT_CHANNELS, save_descriptors, write_manifest
from .errors import ParameterError
from .search import GroundTruthQuery, write_ground_truth


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_images: int = 500
    n_queries: int = 20
    positives_per_query: int = 5
    n_train_images: int = 300
    descriptors_per_image: int = 100
    dim: int = 32
    n_patterns: int = 64
    pattern_spread: float = 0.3
    noise: float = 0.25
    clutter: float = 0.3
    channels: tuple = field(default=DEFAULT_CHANNELS)

    def validate(self):
        counts = {
            "n_images": self.n_images, "n_queries": self.n_queries,
            "positives_per_query": self.positives_per_query,
            "n_train_images": self.n_train_images,
            "descriptors_per_image": self.descriptors_per_image,
            "dim": self.dim, "n_patterns": self.n_patterns,
        }
        for name, value in counts.items():
            if value < 1:
                raise ParameterError(f"{name} must be >= 1, got {value}")
        if self.n_queries * (self.positives_per_query + 1) > self.n_images:
            raise ParameterError(
                f"{self.n_queries} queries x {self.positives_per_query + 1} group members "
                f"exceed {self.n_images} images")
        if self.noise < 0 or self.pattern_spread < 0:
            raise ParameterError("noise and pattern_spread must be >= 0")
        if not 0 <= self.clutter <= 1:
            raise ParameterError(f"clutter must be in [0, 1], got {self.clutter}")
        if not self.channels or len(set(self.channels)) != len(self.channels):
            raise ParameterError("channels must be a non-empty list of unique labels")


@dataclass
class SyntheticBenchmark:
    db: dict            # channel -> {image_id: n x d float32}
    train: dict         # channel -> {image_id: n x d float32}
    ground_truth: list
    db_ids: list
    train_ids: list


def _context_weight(label, position, count):
    try:
        scale = float(label.strip("r"))
    except ValueError:
        scale = 0.5 + position / max(count - 1, 1)
    return 0.3 * scale


def _unit_rows(X):
    X = np.abs(X)
    norms = np.linalg.norm(X, axis=-1, keepdims=True)
    return np.divide(X, norms, out=np.zeros_like(X), where=norms > 0)


class _Generator:
    def __init__(self, spec):
        self.spec = spec
        self.rng = np.random.default_rng(spec.seed)
        centers = self.rng.gamma(0.6, 1.0, size=(spec.n_patterns, spec.dim))
        self.centers = _unit_rows(centers)

    def object_features(self):
        """Core and context appearance of every feature of a new object."""
        s = self.spec
        shape = (s.descriptors_per_image, s.dim)
        core = self.centers[self.rng.integers(s.n_patterns, size=shape[0])]
        ctx = self.centers[self.rng.integers(s.n_patterns, size=shape[0])]
        core = core + s.pattern_spread * self.rng.standard_normal(shape) / np.sqrt(s.dim)
        ctx = ctx + s.pattern_spread * self.rng.standard_normal(shape) / np.sqrt(s.dim)
        return core, ctx

    def observe(self, core, ctx, clutter):
        """Channel descriptors of one image of the object ``(core, ctx)``."""
        s = self.spec
        n = core.shape[0]
        core, ctx = core.copy(), ctx.copy()
        if clutter > 0:
            swap = self.rng.random(n) < clutter
            c_core, c_ctx = self.object_features()
            core[swap], ctx[swap] = c_core[swap], c_ctx[swap]
        core = core + s.noise * self.rng.standard_normal(core.shape) / np.sqrt(s.dim)
        out = {}
        for pos, label in enumerate(s.channels):
            w = _context_weight(label, pos, len(s.channels))
            x = (1.0 - w) * core + w * ctx
            x = x + s.noise * self.rng.standard_normal(x.shape) / np.sqrt(s.dim)
            out[label] = _unit_rows(x).astype(np.float32)
        return out


def generate_synthetic(spec, out_dir=None):
    """Build the benchmark; optionally write descriptors, manifests and ground truth.

    Written layout under ``out_dir``: ``desc/<channel>/<image>.mvsd``,
    ``db.manifest``, ``train.manifest`` and ``gt.txt``.
    """
    spec.validate()
    gen = _Generator(spec)
    width = len(str(max(spec.n_images, spec.n_train_images)))
    db_ids = [f"db{i:0{width}d}" for i in range(spec.n_images)]
    train_ids = [f"tr{i:0{width}d}" for i in range(spec.n_train_images)]
    db = {c: {} for c in spec.channels}
    train = {c: {} for c in spec.channels}

    group_size = spec.positives_per_query + 1
    order = gen.rng.permutation(spec.n_images)
    ground_truth = []
    for q in range(spec.n_queries):
        members = [db_ids[i] for i in order[q * group_size:(q + 1) * group_size]]
        core, ctx = gen.object_features()
        for image_id in members:
            for c, X in gen.observe(core, ctx, spec.clutter).items():
                db[c][image_id] = X
        ground_truth.append(GroundTruthQuery(members[0], frozenset(members[1:]),
                                             exclude_self=True))
    for i in order[spec.n_queries * group_size:]:
        core, ctx = gen.object_features()
        for c, X in gen.observe(core, ctx, 0.0).items():
            db[c][db_ids[i]] = X
    for image_id in train_ids:
        core, ctx = gen.object_features()
        for c, X in gen.observe(core, ctx, 0.0).items():
            train[c][image_id] = X

    bench = SyntheticBenchmark(db, train, ground_truth, db_ids, train_ids)
    if out_dir is not None:
        write_benchmark(bench, out_dir)
    return bench


def write_benchmark(bench, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    for name, ids, store in (("db", bench.db_ids, bench.db), ("train", bench.train_ids, bench.train)):
        entries = []
        for image_id in ids:
            for channel, per_image in store.items():
                rel = os.path.join("desc", channel, f"{image_id}.mvsd")
                os.makedirs(os.path.join(out_dir, "desc", channel), exist_ok=True)
                save_descriptors(os.path.join(out_dir, rel), per_image[image_id])
                entries.append((image_id, channel, rel))
        write_manifest(os.path.join(out_dir, f"{name}.manifest"), entries)
    write_ground_truth(os.path.join(out_dir, "gt.txt"), bench.ground_truth)
