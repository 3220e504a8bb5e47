"""Pipeline stages.

Each stage reads the artifacts of earlier stages from ``cfg.out`` and writes
its own, so running stages one by one gives the same files as ``run_all``.

Artifacts::

    desc_pca_<vocab>_<i>.mvpj   descriptor projections (train_desc_pca)
    vocab_<vocab>.mvvc          vocabularies (train_vocab)
    idf_<vocab>.mvbw            idf vectors, only with idf = true (encode)
    bow_{train,db,query}.mvbw   concatenated BOW vectors (encode)
    reduction.mvrd              PCA-whitening model (train_reduction)
    short_{db,query}.mvbw       reduced vectors (reduce)
    index.mvbw                  search index (index)
    results.txt                 rankings (search)
    eval.txt                    per-query AP and mAP (evaluate)
"""

import logging
import os
import time
from contextlib import contextmanager

import numpy as np

from . import bow as bowmod
from .descriptors import (
    apply_transforms, describe_transforms, load_projection, read_manifest,
    sample_descriptors, save_projection, train_descriptor_pca,
)
from .errors import ConfigError, DataError
from .reduction import load_reduction, reduce_matrix, save_reduction, train_reduction
from .search import (
    Index, average_precision, query, read_ground_truth, read_results, write_results,
)
from .vocabulary import kmeans_train, load_vocabulary, quantize, save_vocabulary

log = logging.getLogger(__name__)


@contextmanager
def timed(stage):
    start = time.perf_counter()
    yield
    log.info("stage %s: %.3f s", stage, time.perf_counter() - start)


def _require(path, producer):
    if not os.path.isfile(path):
        raise DataError(f"{path} not found; run '{producer}' first")
    return path


def _projection_path(cfg, vocab, i):
    return cfg.artifact(f"desc_pca_{vocab.name}_{i}.mvpj")


def _channel_manifest(path, channel):
    manifest = read_manifest(path)
    if channel not in manifest.channel_labels:
        raise ConfigError(f"channel {channel!r} not in manifest {path}")
    return manifest


def train_desc_pca(cfg):
    """Train every ``pca:D`` transform step, in chain order."""
    os.makedirs(cfg.out, exist_ok=True)
    written = []
    for v in cfg.vocabs:
        steps = []
        for i, step in enumerate(v.transform):
            if step.kind == "pca":
                source = step.path or cfg.train_manifest
                manifest = _channel_manifest(source, v.channel)
                sample = sample_descriptors(
                    manifest, v.channel, cfg.desc_pca_sample, seed=cfg.seed,
                    transform=lambda X, s=tuple(steps): apply_transforms(X, s))
                tag = os.path.splitext(os.path.basename(source))[0]
                proj = train_descriptor_pca(sample, int(step.value), source=tag)
                path = _projection_path(cfg, v, i)
                save_projection(path, proj)
                written.append(path)
                steps.append(proj)
            else:
                steps.append(_load_step(cfg, v, i, step))
    return written


def _load_step(cfg, vocab, i, step):
    if step.kind == "power":
        return step.value
    if step.kind == "projection":
        return load_projection(step.path, source=os.path.basename(step.path))
    path = _require(_projection_path(cfg, vocab, i), "train-desc-pca")
    return load_projection(path, source=os.path.basename(step.path or cfg.train_manifest))


def transform_chain(cfg, vocab):
    return tuple(_load_step(cfg, vocab, i, s) for i, s in enumerate(vocab.transform))


def train_vocab(cfg, threads=1):
    os.makedirs(cfg.out, exist_ok=True)
    written = []
    for v in cfg.vocabs:
        chain = transform_chain(cfg, v)
        manifest = _channel_manifest(cfg.train_manifest, v.channel)
        sample = sample_descriptors(manifest, v.channel, cfg.vocab_sample, seed=cfg.seed,
                                    transform=lambda X: apply_transforms(X, chain))
        with timed(f"train-vocab[{v.name}] k={v.k}"):
            V = kmeans_train(sample, v.k, seed=v.seed, max_iters=cfg.max_iters,
                             tol=cfg.tol, threads=threads, n_init=cfg.n_init,
                             channel=v.channel, transform=describe_transforms(chain),
                             training_tag=cfg.training_tag)
        path = cfg.artifact(f"vocab_{v.name}.mvvc")
        save_vocabulary(path, V)
        written.append(path)
    return written


def load_vocabularies(cfg):
    return [load_vocabulary(_require(cfg.artifact(f"vocab_{v.name}.mvvc"), "train-vocab"))
            for v in cfg.vocabs]


def _bundle_weights(cfg):
    if cfg.weights == "auto":
        return None
    if cfg.weights == "log":
        return tuple(float(np.log(k)) for k in cfg.sizes)
    if cfg.weights == "equal":
        return tuple(1.0 for _ in cfg.sizes)
    return cfg.weights


def assign_manifest(cfg, manifest_path, vocabs, threads=1):
    """Per image, the word ids under every vocabulary (same feature order)."""
    manifest = read_manifest(manifest_path)
    chains = [transform_chain(cfg, v) for v in cfg.vocabs]
    out = {}
    for image_id in manifest.images:
        per_vocab = []
        for spec, V, chain in zip(cfg.vocabs, vocabs, chains):
            if spec.channel not in manifest.channel_labels:
                raise ConfigError(f"channel {spec.channel!r} not in manifest {manifest_path}")
            X = apply_transforms(manifest.load(image_id, spec.channel), chain)
            per_vocab.append(quantize(X, V, threads=threads).word_ids)
        lengths = {len(a) for a in per_vocab}
        if len(lengths) > 1:
            raise DataError(f"image {image_id!r}: channels hold different feature counts")
        out[image_id] = per_vocab
    return out


def encode(cfg, threads=1):
    vocabs = load_vocabularies(cfg)
    sets = [("train", cfg.train_manifest), ("db", cfg.manifest)]
    if cfg.query_manifest:
        sets.append(("query", cfg.query_manifest))
    assigned, by_path = {}, {}
    with timed("quantize"):
        for name, path in sets:
            if path not in by_path:
                by_path[path] = assign_manifest(cfg, path, vocabs, threads)
            assigned[name] = by_path[path]
    idf = None
    if cfg.idf:
        train = assigned["train"]
        idf = []
        for j, (spec, V) in enumerate(zip(cfg.vocabs, vocabs)):
            vec = bowmod.compute_idf([a[j] for a in train.values()], V.k)
            bowmod.save_bow_matrix(cfg.artifact(f"idf_{spec.name}.mvbw"),
                                   bowmod.BowMatrix(("idf",), vec[None, :]))
            idf.append(vec)
    bundle = bowmod.VocabularyBundle(tuple(vocabs), weights=_bundle_weights(cfg),
                                     idf=None if idf is None else tuple(idf))
    written = []
    with timed("encode"):
        for name, _ in sets:
            ids = list(assigned[name])
            rows = [bowmod.encode_image(assigned[name][i], bundle, cfg.ssr_beta).values
                    for i in ids]
            values = np.vstack(rows) if rows else np.zeros((0, bundle.D))
            path = cfg.artifact(f"bow_{name}.mvbw")
            bowmod.save_bow_matrix(path, bowmod.BowMatrix(ids, values))
            written.append(path)
    return written


def train_reduction_stage(cfg):
    M = bowmod.load_bow_matrix(_require(cfg.artifact("bow_train.mvbw"), "encode"))
    Y = M.values.astype(np.float64)
    nonzero = np.any(Y != 0, axis=1)
    if not np.all(nonzero):
        log.info("excluding %d empty training images from PCA", int((~nonzero).sum()))
    Y = Y[nonzero]
    if cfg.reduction_train and cfg.reduction_train < Y.shape[0]:
        Y = Y[:cfg.reduction_train]
    with timed(f"train-reduction N={Y.shape[0]} D={Y.shape[1]}"):
        model = train_reduction(Y, cfg.d_out)
    path = cfg.artifact("reduction.mvrd")
    save_reduction(path, model)
    return [path]


def reduce_stage(cfg):
    model = load_reduction(_require(cfg.artifact("reduction.mvrd"), "train-reduction"))
    written = []
    for name in ("db", "query"):
        src = cfg.artifact(f"bow_{name}.mvbw")
        if name == "query" and not cfg.query_manifest:
            continue
        M = bowmod.load_bow_matrix(_require(src, "encode"))
        values, zero = reduce_matrix(M.values, model) if len(M.ids) else (
            np.zeros((0, model.d_out)), np.zeros(0, bool))
        if np.any(zero):
            log.info("%s: %d images reduce to the zero vector", name, int(zero.sum()))
        path = cfg.artifact(f"short_{name}.mvbw")
        bowmod.save_bow_matrix(path, bowmod.BowMatrix(M.ids, values))
        written.append(path)
    return written


def index_stage(cfg):
    M = bowmod.load_bow_matrix(_require(cfg.artifact("short_db.mvbw"), "reduce"))
    Index.from_matrix(M)  # validates norms and ids
    path = cfg.artifact("index.mvbw")
    bowmod.save_bow_matrix(path, M)
    return [path]


def _ground_truth(cfg):
    if not cfg.ground_truth:
        raise ConfigError("[pipeline] ground_truth is required for search and eval")
    return read_ground_truth(cfg.ground_truth)


def search_stage(cfg):
    idx = Index.from_matrix(bowmod.load_bow_matrix(_require(cfg.artifact("index.mvbw"), "index")))
    queries = {}
    if cfg.query_manifest:
        Q = bowmod.load_bow_matrix(_require(cfg.artifact("short_query.mvbw"), "reduce"))
        queries = dict(zip(Q.ids, Q.values))
    results = {}
    with timed("search"):
        for gt in _ground_truth(cfg):
            q = queries[gt.query_id] if gt.query_id in queries else idx.vector(gt.query_id)
            results[gt.query_id] = query(idx, q, top=cfg.top or None)
    path = cfg.artifact("results.txt")
    write_results(path, results)
    return [path]


def evaluate_stage(cfg):
    """Per-query AP and mAP from the results file; returns ``(aps, mAP)``."""
    results = read_results(_require(cfg.artifact("results.txt"), "search"))
    aps = {}
    for gt in _ground_truth(cfg):
        if gt.query_id not in results:
            raise DataError(f"query {gt.query_id!r} missing from results")
        aps[gt.query_id] = average_precision([r[0] for r in results[gt.query_id]], gt)
    m_ap = float(np.mean(list(aps.values())))
    with open(cfg.artifact("eval.txt"), "w", encoding="utf-8") as fh:
        for query_id, ap in aps.items():
            fh.write(f"AP\t{query_id}\t{ap:.6f}\n")
        fh.write(f"mAP\t{m_ap:.6f}\n")
    return aps, m_ap


def stats(cfg, threads=1):
    """Quantization complexity, plus the unique-assignment curve if vocabularies exist."""
    complexity = bowmod.quantization_complexity(cfg.sizes)
    curve = None
    if all(os.path.isfile(cfg.artifact(f"vocab_{v.name}.mvvc")) for v in cfg.vocabs):
        assigned = assign_manifest(cfg, cfg.manifest, load_vocabularies(cfg), threads)
        pooled = [np.concatenate([a[j] for a in assigned.values()]) if assigned else []
                  for j in range(len(cfg.vocabs))]
        curve = bowmod.unique_assignment_curve(pooled)
    return complexity, curve


STAGES = ("train-desc-pca", "train-vocab", "encode", "train-reduction", "reduce",
          "index", "search", "eval")


def run_stage(name, cfg, threads=1):
    if name == "train-desc-pca":
        return train_desc_pca(cfg)
    if name == "train-vocab":
        return train_vocab(cfg, threads)
    if name == "encode":
        return encode(cfg, threads)
    if name == "train-reduction":
        return train_reduction_stage(cfg)
    if name == "reduce":
        return reduce_stage(cfg)
    if name == "index":
        return index_stage(cfg)
    if name == "search":
        return search_stage(cfg)
    if name == "eval":
        return evaluate_stage(cfg)
    raise ValueError(f"unknown stage {name!r}")


def run_all(cfg, threads=1):
    """Every stage in order; returns ``(per-query AP, mAP)``."""
    result = None
    for name in STAGES:
        with timed(name):
            result = run_stage(name, cfg, threads)
    return result
