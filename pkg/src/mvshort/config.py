"""Pipeline configuration files.

INI syntax, one ``[pipeline]`` section and one ``[vocab.NAME]`` section per
vocabulary, in the order their BOW blocks are concatenated::

    [pipeline]
    manifest = db.manifest          # database images
    train_manifest = train.manifest # vocabulary / PCA training images
    query_manifest =                # optional per-query descriptor files
    ground_truth = gt.txt
    out = run
    ssr_beta = 0.5
    idf = false
    d_out = 128
    weights = auto                  # auto | log | equal | w1,w2,...

    [vocab.sift]
    channel = r1.00
    k = 256
    seed = 1
    transform = none                # none | power:B | pca:D[@manifest] | projection:FILE
                                    # steps may be chained with '+'

Relative paths are resolved against the directory of the config file.
"""

import configparser
import os
from dataclasses import dataclass, field

from .errors import ConfigError

#: relative measurement-region scales, in the order vocabularies are added
MEASUREMENT_REGION_ORDER = ("r0.50", "r0.75", "r1.00", "r1.25", "r1.50")
#: descriptor exponents of the power-law vocabularies (1.0 = plain descriptor)
ROOTSIFT_EXPONENTS = (1.0, 0.4, 0.5, 0.6)

_PIPELINE_KEYS = {
    "manifest", "train_manifest", "query_manifest", "ground_truth", "out",
    "ssr_beta", "idf", "d_out", "weights", "training_tag", "seed", "max_iters",
    "tol", "n_init", "vocab_sample", "desc_pca_sample", "reduction_train", "top",
}
_VOCAB_KEYS = {"channel", "k", "seed", "transform"}


@dataclass(frozen=True)
class TransformStep:
    kind: str           # "power", "pca" or "projection"
    value: float = 0.0  # exponent or output dimension
    path: str = ""      # pca training manifest or projection file


@dataclass(frozen=True)
class VocabSpec:
    name: str
    channel: str
    k: int
    seed: int
    transform: tuple = ()
    transform_text: str = "none"


@dataclass(frozen=True)
class PipelineConfig:
    manifest: str
    out: str
    vocabs: tuple
    train_manifest: str = ""
    query_manifest: str = ""
    ground_truth: str = ""
    ssr_beta: float = 0.5
    idf: bool = False
    d_out: int = 128
    weights: object = "auto"
    training_tag: str = ""
    seed: int = 0
    max_iters: int = 25
    tol: float = 1e-4
    n_init: int = 1
    vocab_sample: int = 100000
    desc_pca_sample: int = 50000
    reduction_train: int = 0   # 0 = all training images
    top: int = 0               # 0 = full ranking
    source: str = field(default="", compare=False)

    @property
    def sizes(self):
        return tuple(v.k for v in self.vocabs)

    def artifact(self, name):
        return os.path.join(self.out, name)


def parse_transform(text, base_dir=""):
    text = (text or "none").strip()
    if text.lower() == "none":
        return ()
    steps = []
    for part in text.split("+"):
        kind, _, arg = part.strip().partition(":")
        kind = kind.strip().lower()
        try:
            if kind == "power":
                beta = float(arg)
                if not 0 < beta <= 1:
                    raise ConfigError(f"power exponent must be in (0, 1], got {beta}")
                steps.append(TransformStep("power", beta))
            elif kind == "pca":
                dim, _, where = arg.partition("@")
                where = os.path.join(base_dir, where.strip()) if where.strip() else ""
                steps.append(TransformStep("pca", int(dim), where))
            elif kind == "projection":
                if not arg.strip():
                    raise ConfigError("projection step needs a file path")
                steps.append(TransformStep("projection", 0, os.path.join(base_dir, arg.strip())))
            else:
                raise ConfigError(f"unknown transform step {part!r}")
        except ValueError as exc:
            raise ConfigError(f"bad transform step {part!r}: {exc}") from None
    return tuple(steps)


def _get(section, key, conv, default):
    if key not in section or section[key].strip() == "":
        return default
    raw = section[key].strip()
    try:
        if conv is bool:
            return section.getboolean(key)
        return conv(raw)
    except ValueError:
        raise ConfigError(f"[{section.name}] {key}: cannot parse {raw!r}") from None


def _parse_weights(raw):
    raw = raw.strip().lower()
    if raw in ("auto", "log", "equal"):
        return raw
    try:
        return tuple(float(x) for x in raw.split(","))
    except ValueError:
        raise ConfigError(f"weights must be auto, log, equal or a number list, got {raw!r}") from None


def load_config(path, overrides=None):
    """Parse and validate a pipeline config; ``overrides`` replace pipeline keys."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    base = os.path.dirname(os.path.abspath(path))
    if "pipeline" not in parser:
        raise ConfigError(f"{path}: missing [pipeline] section")
    sec = parser["pipeline"]
    unknown = set(sec) - _PIPELINE_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown [pipeline] keys {sorted(unknown)}")

    def rel(value):
        return os.path.join(base, value) if value else ""

    vocabs = []
    for name in parser.sections():
        if name == "pipeline":
            continue
        if not name.startswith("vocab."):
            raise ConfigError(f"{path}: unexpected section [{name}]")
        vs = parser[name]
        unknown = set(vs) - _VOCAB_KEYS
        if unknown:
            raise ConfigError(f"[{name}]: unknown keys {sorted(unknown)}")
        for key in ("channel", "k"):
            if not vs.get(key, "").strip():
                raise ConfigError(f"[{name}]: missing {key}")
        text = vs.get("transform", "none").strip() or "none"
        vocabs.append(VocabSpec(
            name=name[len("vocab."):],
            channel=vs["channel"].strip(),
            k=_get(vs, "k", int, 0),
            seed=_get(vs, "seed", int, 0),
            transform=parse_transform(text, base),
            transform_text=text,
        ))
    if not vocabs:
        raise ConfigError(f"{path}: no [vocab.*] sections")

    values = dict(
        manifest=rel(_get(sec, "manifest", str, "")),
        train_manifest=rel(_get(sec, "train_manifest", str, "")),
        query_manifest=rel(_get(sec, "query_manifest", str, "")),
        ground_truth=rel(_get(sec, "ground_truth", str, "")),
        out=rel(_get(sec, "out", str, "run")),
        ssr_beta=_get(sec, "ssr_beta", float, 0.5),
        idf=_get(sec, "idf", bool, False),
        d_out=_get(sec, "d_out", int, 128),
        weights=_parse_weights(sec.get("weights", "auto")),
        training_tag=_get(sec, "training_tag", str, ""),
        seed=_get(sec, "seed", int, 0),
        max_iters=_get(sec, "max_iters", int, 25),
        tol=_get(sec, "tol", float, 1e-4),
        n_init=_get(sec, "n_init", int, 1),
        vocab_sample=_get(sec, "vocab_sample", int, 100000),
        desc_pca_sample=_get(sec, "desc_pca_sample", int, 50000),
        reduction_train=_get(sec, "reduction_train", int, 0),
        top=_get(sec, "top", int, 0),
    )
    values.update(overrides or {})
    if not values["train_manifest"]:
        values["train_manifest"] = values["manifest"]
    cfg = PipelineConfig(vocabs=tuple(vocabs), source=os.path.abspath(path), **values)
    validate(cfg)
    return cfg


def validate(cfg):
    if not cfg.manifest:
        raise ConfigError("[pipeline] manifest is required")
    names = [v.name for v in cfg.vocabs]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate vocabulary names")
    for v in cfg.vocabs:
        if v.k < 1:
            raise ConfigError(f"vocabulary {v.name}: k must be >= 1")
        for step in v.transform:
            if step.kind == "projection" and not os.path.isfile(step.path):
                raise ConfigError(f"vocabulary {v.name}: projection file {step.path} not found")
            if step.kind == "pca" and step.path and not os.path.isfile(step.path):
                raise ConfigError(f"vocabulary {v.name}: PCA manifest {step.path} not found")
            if step.kind == "pca" and step.value < 1:
                raise ConfigError(f"vocabulary {v.name}: PCA dimension must be >= 1")
    for key in ("manifest", "train_manifest", "query_manifest", "ground_truth"):
        p = getattr(cfg, key)
        if p and not os.path.isfile(p):
            raise ConfigError(f"{key} file {p} not found")
    if not 0 <= cfg.ssr_beta <= 1:
        raise ConfigError(f"ssr_beta must be in [0, 1], got {cfg.ssr_beta}")
    if not 1 <= cfg.d_out <= sum(cfg.sizes):
        raise ConfigError(f"d_out={cfg.d_out} must be in [1, sum of k = {sum(cfg.sizes)}]")
    if isinstance(cfg.weights, tuple) and len(cfg.weights) != len(cfg.vocabs):
        raise ConfigError(f"{len(cfg.weights)} weights for {len(cfg.vocabs)} vocabularies")
    if cfg.max_iters < 0 or cfg.tol < 0 or cfg.n_init < 1:
        raise ConfigError("max_iters and tol must be >= 0, n_init >= 1")
