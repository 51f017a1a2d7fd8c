"""Symmetric and generalized symmetric-definite eigensolvers.

The symmetric solver is a cyclic Jacobi iteration. The generalized problem
``E v = lambda I v`` is reduced to a symmetric one through the Cholesky
factor of ``I`` and triangular solves; no explicit inverse is formed.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ArgumentError, NumericError

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100
# above this size "auto" hands the symmetric solve to LAPACK
JACOBI_AUTO_LIMIT = 128


@dataclass(frozen=True)
class EigenPairs:
    """Eigenvalues in non-increasing order; column j of ``vectors`` pairs with ``values[j]``."""

    values: np.ndarray
    vectors: np.ndarray
    sweeps: int = 0


def _square(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ArgumentError(f"{name} must be square, got shape {a.shape}")
    return a


def _sorted_pairs(values, vectors, sweeps=0):
    order = np.argsort(-values, kind="stable")
    vecs = vectors[:, order]
    # fix the sign so the largest-magnitude entry of each column is positive
    if vecs.size:
        idx = np.argmax(np.abs(vecs), axis=0)
        signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
        signs[signs == 0] = 1.0
        vecs = vecs * signs
    return EigenPairs(values[order], vecs, sweeps)


def jacobi_eigh(a, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Cyclic Jacobi rotations on a symmetric matrix.

    Sweeps over all (p, q) pairs in row order until the off-diagonal
    Frobenius norm drops to ``tol * ||a||_F``.

    Returns
    -------
    values : ndarray
        Diagonal after convergence (unsorted).
    vectors : ndarray
        Accumulated rotations; columns are eigenvectors.
    sweeps : int
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    threshold = tol * scale
    rows, cols = np.triu_indices(n, 1)

    def off_norm():
        return np.sqrt(2.0 * np.sum(a[rows, cols] ** 2))

    sweeps = 0
    while off_norm() > threshold:
        if sweeps >= max_sweeps:
            raise NumericError(
                f"Jacobi iteration did not converge after {sweeps} sweeps "
                f"(off-diagonal norm {off_norm():.3e}, threshold {threshold:.3e})",
                iterations=sweeps,
            )
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(1.0 + theta * theta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q]
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :]
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    return np.diag(a).copy(), v, sweeps


def sym_eig(a, method="auto"):
    """Full eigendecomposition of a symmetric matrix.

    Parameters
    ----------
    a : array_like, shape (n, n)
        Symmetrized internally as ``(a + a.T) / 2``.
    method : {"auto", "jacobi", "lapack"}
        ``auto`` uses Jacobi up to ``JACOBI_AUTO_LIMIT`` rows, LAPACK beyond.

    Returns
    -------
    EigenPairs
        Values sorted descending; ties keep the order of the underlying solve.
    """
    a = _square(a, "a")
    a = 0.5 * (a + a.T)
    if not np.all(np.isfinite(a)):
        raise ArgumentError("matrix has non-finite entries")
    if method == "auto":
        method = "jacobi" if a.shape[0] <= JACOBI_AUTO_LIMIT else "lapack"
    if method == "jacobi":
        values, vectors, sweeps = jacobi_eigh(a)
    elif method == "lapack":
        values, vectors = np.linalg.eigh(a)
        sweeps = 0
    else:
        raise ArgumentError(f"unknown eigen method {method!r}")
    return _sorted_pairs(values, vectors, sweeps)


def gen_eig(e, i, method="auto"):
    """Solve ``e v = lambda i v`` for symmetric ``e`` and SPD ``i``.

    With ``i = L L^T`` the problem becomes the symmetric eigenproblem of
    ``L^{-1} e L^{-T}``; eigenvectors ``w`` map back through ``v = L^{-T} w``,
    which makes them ``i``-orthonormal.

    Raises
    ------
    NumericError
        If ``i`` is not positive-definite. Raise the regularizer and retry.
    """
    e = _square(e, "e")
    i = _square(i, "i")
    if e.shape != i.shape:
        raise ArgumentError(f"e and i differ in size: {e.shape} vs {i.shape}")
    e = 0.5 * (e + e.T)
    i = 0.5 * (i + i.T)
    try:
        chol = linalg.cholesky(i, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericError(
            "denominator matrix is not positive-definite; increase the regularizer lambda"
        ) from exc
    # L^{-1} e L^{-T}
    tmp = linalg.solve_triangular(chol, e, lower=True)
    whitened = linalg.solve_triangular(chol, tmp.T, lower=True)
    pairs = sym_eig(whitened, method=method)
    vectors = linalg.solve_triangular(chol.T, pairs.vectors, lower=False)
    return EigenPairs(pairs.values, vectors, pairs.sweeps)
