"""Small numerical helpers shared by the descriptor PCA and the BOW reduction."""

import numpy as np
from scipy.sparse.linalg import eigsh


def l2_normalize_rows(X):
    """Return float64 copy of ``X`` with unit-norm rows; zero rows stay zero."""
    X = np.asarray(X, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", X, X))
    out = np.zeros_like(X)
    nz = norms > 0
    out[nz] = X[nz] / norms[nz, None]
    return out


def signed_power(X, beta):
    X = np.asarray(X, dtype=np.float64)
    return np.sign(X) * np.abs(X) ** beta


def fix_signs(vectors):
    """Flip columns so the largest-magnitude entry of each is positive.

    Ties on magnitude resolve to the lowest row index.
    """
    vectors = np.array(vectors, dtype=np.float64, copy=True)
    if vectors.size == 0:
        return vectors
    rows = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[rows, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def top_eigh(S, k, iterative=None):
    """Top-``k`` eigenpairs of the symmetric matrix ``S``, descending.

    A Lanczos solver (ARPACK) is used when the matrix is large relative to
    ``k``; otherwise a dense LAPACK decomposition.  The Lanczos start vector is
    drawn from a fixed seed: an all-ones start would be orthogonal to every
    eigenvector of a centered gram matrix except the null one.
    """
    m = S.shape[0]
    if not 1 <= k <= m:
        raise ValueError(f"cannot extract {k} eigenpairs from a {m}x{m} matrix")
    if iterative is None:
        iterative = m > 4 * k and k < m - 1
    if iterative:
        v0 = np.random.default_rng(0x5EED).standard_normal(m)
        vals, vecs = eigsh(S, k=k, which="LA", tol=0.0, v0=v0)
    else:
        vals, vecs = np.linalg.eigh(S)
        vals, vecs = vals[-k:], vecs[:, -k:]
    order = np.argsort(vals)[::-1]
    return vals[order], vecs[:, order]
