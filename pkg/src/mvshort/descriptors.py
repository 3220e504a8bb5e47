"""Local descriptor storage and descriptor-level transforms.

Descriptors arrive pre-extracted, one binary file per (image, channel).  A
channel is one variant of the same set of local features, e.g. descriptors
computed from measurement regions of a different relative size.  Rows of the
files of one image are in the same feature order across channels.
"""

import logging
import os
import re
from dataclasses import dataclass, field

import numpy as np

from . import _binio
from ._linalg import fix_signs, l2_normalize_rows, signed_power
from .errors import CorruptionError, DataError, ParameterError

log = logging.getLogger(__name__)

DESCRIPTOR_MAGIC = b"MVSD"
PROJECTION_MAGIC = b"MVPJ"

#: relative measurement-region scales, in the order vocabularies are added
DEFAULT_CHANNELS = ("r0.50", "r0.75", "r1.00", "r1.25", "r1.50")

_FLOOR = 1e-10


def _frozen(arr, dtype):
    arr = np.array(arr, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class DescriptorMatrix:
    """``n x d`` float32 descriptors of one image in one channel."""

    data: np.ndarray
    image_id: str = ""
    channel: str = ""

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or data.shape[1] < 1:
            raise DataError(f"descriptors must be n x d with d >= 1, got {data.shape}")
        data = _frozen(data, np.float32)
        if not np.all(np.isfinite(data)):
            raise DataError(f"non-finite descriptor values in {self.image_id!r}")
        object.__setattr__(self, "data", data)

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def d(self):
        return self.data.shape[1]

    @property
    def zero_rows(self):
        """Boolean mask of all-zero rows."""
        return ~np.any(self.data != 0, axis=1)

    def is_normalized(self, atol=1e-4):
        norms = np.linalg.norm(self.data.astype(np.float64), axis=1)
        return bool(np.all((np.abs(norms - 1.0) <= atol) | self.zero_rows))

    def replace(self, data):
        return DescriptorMatrix(data, image_id=self.image_id, channel=self.channel)


def _as_matrix(X):
    return X if isinstance(X, DescriptorMatrix) else DescriptorMatrix(X)


def save_descriptors(path, X):
    X = _as_matrix(X)
    w = _binio.Writer(DESCRIPTOR_MAGIC)
    w.u64(X.n)
    w.u32(X.d)
    w.array(X.data, np.float32)
    w.save(path)


def load_descriptors(path, image_id="", channel=""):
    r = _binio.Reader.open(path, DESCRIPTOR_MAGIC)
    n = r.u64()
    d = r.u32()
    data = r.array(np.float32, n * d, shape=(n, d))
    r.finish()
    return DescriptorMatrix(data, image_id=image_id, channel=channel)


# -- channel manifest ---------------------------------------------------------

def _scale_tag(label):
    m = re.fullmatch(r"r?(\d+(?:\.\d+)?)r?", label)
    return float(m.group(1)) if m else None


@dataclass(frozen=True, eq=False)
class ChannelManifest:
    """Maps every (image, channel) pair to exactly one descriptor file.

    ``channels`` holds ``(label, relative_scale, directory)`` triples; the
    scale is parsed from labels like ``r0.75`` and is ``None`` otherwise.
    """

    root: str
    images: tuple
    channels: tuple
    paths: dict = field(repr=False)

    @property
    def channel_labels(self):
        return tuple(c[0] for c in self.channels)

    def path(self, image_id, channel):
        try:
            rel = self.paths[image_id, channel]
        except KeyError:
            raise DataError(f"no descriptor file for ({image_id!r}, {channel!r})") from None
        return os.path.join(self.root, rel)

    def load(self, image_id, channel):
        return load_descriptors(self.path(image_id, channel), image_id, channel)


def read_manifest(path):
    root = os.path.dirname(os.path.abspath(path))
    images, channels, paths = [], [], {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields")
            image_id, channel, rel = parts
            if (image_id, channel) in paths:
                raise DataError(f"{path}:{lineno}: duplicate entry for ({image_id}, {channel})")
            paths[image_id, channel] = rel
            if image_id not in images:
                images.append(image_id)
            if channel not in channels:
                channels.append(channel)
    missing = [(i, c) for i in images for c in channels if (i, c) not in paths]
    if missing:
        raise DataError(f"{path}: {len(missing)} (image, channel) pairs have no file, "
                        f"first {missing[0]}")
    triples = []
    for c in channels:
        first = os.path.dirname(paths[images[0], c])
        triples.append((c, _scale_tag(c), first))
    return ChannelManifest(root, tuple(images), tuple(triples), paths)


def write_manifest(path, entries):
    """Write ``(image_id, channel, relative_path)`` records."""
    with open(path, "w", encoding="utf-8") as fh:
        for image_id, channel, rel in entries:
            if "\t" in image_id or "\n" in image_id:
                raise ParameterError(f"image id {image_id!r} contains a tab or newline")
            fh.write(f"{image_id}\t{channel}\t{rel}\n")


def sample_descriptors(manifest, channel, max_count=None, seed=0, transform=None):
    """Pool descriptors of ``channel`` over all manifest images.

    When the pool exceeds ``max_count`` a uniform subset (kept in pool order)
    is drawn with ``seed``.  ``transform`` is applied per image before pooling.
    """
    blocks = []
    for image_id in manifest.images:
        X = manifest.load(image_id, channel)
        if transform is not None:
            X = transform(X)
        blocks.append(X.data)
    if not blocks:
        raise DataError("manifest lists no images")
    pool = np.concatenate(blocks, axis=0)
    if max_count is not None and pool.shape[0] > max_count:
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(pool.shape[0], size=max_count, replace=False))
        pool = pool[keep]
    return DescriptorMatrix(pool, image_id="<sample>", channel=channel)


# -- transforms ---------------------------------------------------------------

def power_law_descriptors(X, beta):
    """Signed power ``|x|**beta * sign(x)`` per component, then row L2 norm.

    ``beta=0.5`` on SIFT gives RootSIFT-style descriptors; ``beta=1`` is plain
    row normalization.  All-zero rows stay zero.
    """
    if not 0.0 < beta <= 1.0:
        raise ParameterError(f"power-law exponent must be in (0, 1], got {beta}")
    X = _as_matrix(X)
    out = l2_normalize_rows(signed_power(X.data, beta))
    return X.replace(out)


@dataclass(frozen=True, eq=False)
class DescriptorProjection:
    """Learned linear map ``x -> (x - mean) @ basis``, optionally renormalized."""

    mean: np.ndarray
    basis: np.ndarray
    renormalize: bool = True
    source: str = ""
    eigenvalues: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        mean = _frozen(self.mean, np.float32).reshape(-1)
        basis = _frozen(self.basis, np.float32)
        if basis.ndim != 2 or basis.shape[0] != mean.shape[0]:
            raise DataError(f"basis shape {basis.shape} does not match mean length {mean.shape[0]}")
        gram = basis.astype(np.float64).T @ basis.astype(np.float64)
        err = np.max(np.abs(gram - np.eye(basis.shape[1]))) if basis.size else 0.0
        if err > 1e-5:
            raise DataError(f"projection basis is not column-orthonormal (error {err:.2e})")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "renormalize", bool(self.renormalize))

    @property
    def d_in(self):
        return self.basis.shape[0]

    @property
    def d_out(self):
        return self.basis.shape[1]


def train_descriptor_pca(sample, d_out, renormalize=True, source=""):
    """Fit a PCA projection of descriptors down to ``d_out`` dimensions.

    Covariance uses the 1/n convention.  Each eigenvector is signed so its
    largest-magnitude component is positive.
    """
    X = _as_matrix(sample)
    if not 1 <= d_out <= X.d:
        raise ParameterError(f"d_out must be in [1, {X.d}], got {d_out}")
    if X.n <= d_out:
        raise ParameterError(f"need more than {d_out} samples, got {X.n}")
    data = X.data.astype(np.float64)
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / X.n
    vals, vecs = np.linalg.eigh(cov)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    positive = int(np.sum(vals > _FLOOR * max(vals[0], 0.0))) if vals[0] > 0 else 0
    if positive < d_out:
        raise DataError(f"sample has only {positive} positive-variance directions, "
                        f"{d_out} requested")
    basis = fix_signs(vecs[:, :d_out])
    return DescriptorProjection(mean, basis, renormalize=renormalize, source=source,
                                eigenvalues=vals[:d_out].copy())


def project_descriptors(X, proj):
    X = _as_matrix(X)
    if X.d != proj.d_in:
        raise ParameterError(f"descriptor dimension {X.d} != projection input {proj.d_in}")
    out = (X.data.astype(np.float64) - proj.mean) @ proj.basis.astype(np.float64)
    if proj.renormalize:
        out = l2_normalize_rows(out)
    return X.replace(out)


def apply_transforms(X, steps):
    """Apply a chain of power exponents (floats) and projections in order."""
    X = _as_matrix(X)
    for step in steps:
        if isinstance(step, DescriptorProjection):
            X = project_descriptors(X, step)
        else:
            X = power_law_descriptors(X, float(step))
    return X


def describe_transforms(steps):
    parts = []
    for step in steps:
        if isinstance(step, DescriptorProjection):
            parts.append(f"pca:{step.d_out}" + (f"@{step.source}" if step.source else ""))
        else:
            parts.append(f"power:{float(step):g}")
    return "+".join(parts) or "none"


def save_projection(path, proj):
    w = _binio.Writer(PROJECTION_MAGIC)
    w.u32(proj.d_in)
    w.u32(proj.d_out)
    w.u8(1 if proj.renormalize else 0)
    w.array(proj.mean, np.float32)
    w.array(proj.basis, np.float32, order="F")
    w.save(path)


def load_projection(path, source=""):
    r = _binio.Reader.open(path, PROJECTION_MAGIC)
    d = r.u32()
    d_out = r.u32()
    flag = r.u8()
    if flag > 1:
        raise CorruptionError(f"{path}: renormalize flag must be 0 or 1, got {flag}")
    mean = r.array(np.float32, d)
    basis = r.array(np.float32, d * d_out, shape=(d, d_out), order="F")
    r.finish()
    return DescriptorProjection(mean, np.ascontiguousarray(basis),
                                renormalize=bool(flag), source=source)
