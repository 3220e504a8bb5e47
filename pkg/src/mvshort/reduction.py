"""Joint PCA + whitening of concatenated BOW vectors.

Training centers the vectors and keeps the top ``d_out`` principal
directions.  When there are fewer training vectors than dimensions the
eigenproblem is solved on the ``N x N`` gram matrix and the eigenvectors are
mapped back to the ``D``-dimensional space.  A short vector is

    t = diag(lambda ** -0.5) @ P.T @ (x - mean),   x_hat = t / |t|
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _binio
from ._linalg import fix_signs, top_eigh
from .errors import DataError, ParameterError

log = logging.getLogger(__name__)

REDUCTION_MAGIC = b"MVRD"
FLAG_FLOORED = 1

#: eigenvalues below this fraction of the largest one count as null directions
EIGEN_FLOOR = 1e-10
ZERO_NORM = 1e-12


@dataclass(frozen=True, eq=False)
class ReductionModel:
    mean: np.ndarray
    eigenvectors: np.ndarray
    eigenvalues: np.ndarray
    floored: bool = False
    n_floored: int = field(default=0, compare=False)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float32, copy=True).reshape(-1)
        P = np.array(self.eigenvectors, dtype=np.float32, copy=True)
        lam = np.array(self.eigenvalues, dtype=np.float64, copy=True).reshape(-1)
        if P.ndim != 2 or P.shape != (mean.shape[0], lam.shape[0]):
            raise DataError(f"inconsistent model shapes: mean {mean.shape}, "
                            f"P {P.shape}, eigenvalues {lam.shape}")
        if not np.all(lam > 0):
            raise DataError("eigenvalues must be strictly positive")
        for arr in (mean, P, lam):
            arr.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "eigenvectors", P)
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "floored", bool(self.floored))

    @property
    def D(self):
        return self.eigenvectors.shape[0]

    @property
    def d_out(self):
        return self.eigenvectors.shape[1]


@dataclass(frozen=True, eq=False)
class ShortVector:
    values: np.ndarray
    image_id: str = ""
    is_zero: bool = False


def _matrix(Y):
    Y = getattr(Y, "values", Y)
    return np.asarray(Y, dtype=np.float64)


def train_reduction(Y, d_out=128, method="auto", allow_floor=False):
    """Learn mean, top ``d_out`` eigenvectors and eigenvalues of ``Y``'s rows.

    ``method`` is ``"gram"`` (``N x N`` dual problem), ``"covariance"``
    (``D x D``) or ``"auto"`` (gram when ``N < D``).  Covariance and gram
    matrices are both scaled by ``1/N`` so eigenvalues agree.

    Directions with eigenvalue at most ``EIGEN_FLOOR * lambda_1`` are null.
    Requesting more than the number of non-null directions raises
    :class:`DataError` unless ``allow_floor`` is set, in which case the extra
    eigenvalues are raised to the floor and the model is flagged.
    """
    Y = _matrix(Y)
    if Y.ndim != 2:
        raise DataError(f"training matrix must be 2-D, got shape {Y.shape}")
    N, D = Y.shape
    if not np.all(np.isfinite(Y)):
        raise DataError("non-finite values in training matrix")
    if not 1 <= d_out <= D:
        raise ParameterError(f"d_out must be in [1, {D}], got {d_out}")
    if N < d_out + 1:
        raise ParameterError(f"need at least d_out + 1 = {d_out + 1} training vectors, got {N}")
    if method == "auto":
        method = "gram" if N < D else "covariance"
    if method == "gram" and d_out > N:
        raise ParameterError(f"gram method yields at most {N} components")

    mean = Y.mean(axis=0)
    Yc = Y - mean
    if method == "gram":
        vals, U = top_eigh(Yc @ Yc.T / N, d_out)
        P = Yc.T @ U
        norms = np.linalg.norm(P, axis=0)
        norms[norms == 0] = 1.0
        P /= norms
    elif method == "covariance":
        vals, P = top_eigh(Yc.T @ Yc / N, d_out)
    else:
        raise ParameterError(f"unknown method {method!r}")

    if not vals[0] > 0:
        raise DataError("training vectors have zero variance")
    floor = EIGEN_FLOOR * vals[0]
    kept = int(np.sum(vals > floor))
    n_floored = d_out - kept
    if n_floored:
        if not allow_floor:
            raise DataError(f"only {kept} directions carry variance, {d_out} requested")
        log.warning("%d of %d eigenvalues floored at %.3g", n_floored, d_out, floor)
        vals = np.maximum(vals, floor)
        # null-space columns from the gram map are not reliably orthogonal
        P, _ = np.linalg.qr(P)
    P = fix_signs(P)
    return ReductionModel(mean, P, vals, floored=n_floored > 0, n_floored=n_floored)


def _whiten(Y, M):
    centered = Y - M.mean.astype(np.float64)
    return (centered @ M.eigenvectors.astype(np.float64)) / np.sqrt(M.eigenvalues)


def reduce_matrix(Y, M):
    """Reduce every row; returns ``(short vectors, zero mask)``."""
    Y = _matrix(Y)
    if Y.ndim == 1:
        Y = Y[None, :]
    if Y.shape[1] != M.D:
        raise ParameterError(f"vector dimension {Y.shape[1]} != model dimension {M.D}")
    T = _whiten(Y, M)
    norms = np.linalg.norm(T, axis=1)
    zero = norms < ZERO_NORM
    out = np.zeros_like(T)
    out[~zero] = T[~zero] / norms[~zero, None]
    return out, zero


def reduce(X, M):
    """Project, whiten and re-normalize one vector."""
    out, zero = reduce_matrix(X, M)
    return ShortVector(out[0], image_id=getattr(X, "image_id", ""), is_zero=bool(zero[0]))


def whitening_check(Y, M):
    """Variance of each whitened component over the training rows.

    Equals 1 for every component whose eigenvalue was not floored.
    """
    T = _whiten(_matrix(Y), M)
    return T.var(axis=0)


def save_reduction(path, M):
    w = _binio.Writer(REDUCTION_MAGIC)
    w.u32(M.D)
    w.u32(M.d_out)
    w.u32(FLAG_FLOORED if M.floored else 0)
    w.array(M.mean, np.float32)
    w.array(M.eigenvalues, np.float64)
    w.array(M.eigenvectors, np.float32, order="F")
    w.save(path)


def load_reduction(path):
    r = _binio.Reader.open(path, REDUCTION_MAGIC)
    D = r.u32()
    d_out = r.u32()
    flags = r.u32()
    mean = r.array(np.float32, D)
    lam = r.array(np.float64, d_out)
    P = r.array(np.float32, D * d_out, shape=(D, d_out), order="F")
    r.finish()
    if flags & ~FLAG_FLOORED:
        raise DataError(f"{path}: unknown flag bits {flags:#x}")
    return ReductionModel(mean, np.ascontiguousarray(P), lam, floored=bool(flags & FLAG_FLOORED))
