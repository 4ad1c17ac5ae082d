"""Randomized linear-algebra kernels shared by all preconditioners.

Provides the randomized Nystrom approximation of a Gram matrix, Cholesky
factorizations of regularized Gram matrices with a Woodbury branch for the
wide case, sparse sign embeddings, and power iteration for the largest
generalized eigenvalue. All randomness flows through an explicit
``numpy.random.Generator`` supplied by the caller; there is no global RNG.
"""

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp


class NumericalError(RuntimeError):
    """A numerical routine broke down (e.g. Cholesky failure after retry)."""


def _as_dense(X):
    return X.toarray() if sp.issparse(X) else np.asarray(X)


def _check_finite(X, name):
    data = X.data if sp.issparse(X) else np.asarray(X)
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{name} contains non-finite entries")


@dataclass
class NystromFactors:
    """Factored low-rank approximation U diag(d) U^T of a Gram matrix X^T X.

    U has orthonormal columns (p x r) and d holds the approximate eigenvalues
    in descending order, all nonnegative.
    """

    U: np.ndarray
    d: np.ndarray

    @property
    def rank(self):
        return self.d.shape[0]


def randomized_nystrom(X, r, rng):
    """Randomized Nystrom approximation of H = X^T X from a b x p factor X.

    Uses a QR-orthonormalized Gaussian test matrix and the shifted,
    shift-corrected construction: the sketch Y = H @ Omega is stabilized by
    delta = sqrt(p) * u * ||Y||_F (u = unit roundoff) before the Cholesky of
    Omega^T Y_delta, and the shift is removed from the recovered eigenvalues.
    The result never overestimates H up to roundoff. A Cholesky breakdown
    triggers exactly one redraw of Omega before raising NumericalError.
    """
    _check_finite(X, "X")
    p = X.shape[1]
    if not 1 <= r <= p:
        raise ValueError(f"rank r={r} must satisfy 1 <= r <= p={p}")

    for attempt in range(2):
        Omega = rng.standard_normal((p, r))
        Omega, _ = np.linalg.qr(Omega, mode="reduced")
        Y = _as_dense(X.T @ (X @ Omega))
        norm_y = np.linalg.norm(Y)
        if norm_y == 0.0:
            # zero operator: any orthonormal U with zero eigenvalues
            return NystromFactors(U=Omega, d=np.zeros(r))
        delta = np.sqrt(p) * np.finfo(Y.dtype).eps * norm_y
        Y_delta = Y + delta * Omega
        try:
            C = np.linalg.cholesky(Omega.T @ Y_delta)
        except np.linalg.LinAlgError:
            if attempt == 1:
                raise NumericalError(
                    "Nystrom sketch Cholesky failed twice; input may be "
                    "numerically degenerate"
                ) from None
            continue
        S = sla.solve_triangular(C, Y_delta.T, lower=True).T
        U, sigma, _ = np.linalg.svd(S, full_matrices=False)
        d = np.maximum(sigma**2 - delta, 0.0)
        return NystromFactors(U=U, d=d)


def nystrom_inverse_apply(factors, rho, v):
    """Apply (U diag(d) U^T + rho I)^{-1} to v via the Woodbury formula."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    U, d = factors.U, factors.d
    if v.shape[0] != U.shape[0]:
        raise ValueError(f"v has length {v.shape[0]}, expected {U.shape[0]}")
    Utv = U.T @ v
    return v / rho + U @ ((1.0 / (d + rho) - 1.0 / rho) * Utv)


@dataclass
class GramCholesky:
    """Cholesky factorization of a regularized Gram matrix X^T X + rho I.

    In the tall case (b >= p) L L^T = X^T X + rho I directly. In the wide
    case (b < p) L L^T = X X^T + rho I and the factor X is retained so the
    inverse can be applied through the Woodbury identity.
    """

    L: np.ndarray
    wide_case: bool
    X: object = None  # retained b x p factor, wide case only
    rho: float = 0.0


def gram_cholesky(X, rho, wide=None):
    """Factor X^T X + rho I, choosing the smaller Gram matrix to decompose.

    ``wide`` forces the branch (True: factor X X^T, False: factor X^T X);
    by default the b >= p test picks it.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    _check_finite(X, "X")
    b, p = X.shape
    if wide is None:
        wide = b < p
    if wide:
        G = _as_dense(X @ X.T)
    else:
        G = _as_dense(X.T @ X)
    G[np.diag_indices_from(G)] += rho
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Cholesky of Gram + rho I failed: {exc}") from None
    return GramCholesky(L=L, wide_case=wide, X=X if wide else None, rho=rho)


def gram_inverse_apply(chol, rho, g):
    """Apply (X^T X + rho I)^{-1} to g using the stored Cholesky factor."""
    L = chol.L
    if not chol.wide_case:
        if g.shape[0] != L.shape[0]:
            raise ValueError(f"g has length {g.shape[0]}, expected {L.shape[0]}")
        v = sla.solve_triangular(L, g, lower=True)
        return sla.solve_triangular(L.T, v, lower=False)
    X = chol.X
    if g.shape[0] != X.shape[1]:
        raise ValueError(f"g has length {g.shape[0]}, expected {X.shape[1]}")
    v = X @ g
    v = sla.solve_triangular(L, v, lower=True)
    v = sla.solve_triangular(L.T, v, lower=False)
    v = X.T @ v
    return (g - np.asarray(v).ravel()) / rho


@dataclass
class SparseEmbedding:
    """Sparse sign embedding of shape r x b with exactly zeta entries per
    column (column-sparse) or per row (row-sparse).

    Stored as raw (rows, cols, vals) triplets so duplicate positions remain
    distinct entries; applying the embedding sums duplicates, which is the
    same linear map.
    """

    shape: tuple
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    zeta: int
    per_column: bool
    _mat: object = field(default=None, repr=False)

    def matrix(self):
        if self._mat is None:
            self._mat = sp.csr_matrix(
                (self.vals, (self.rows, self.cols)), shape=self.shape
            )
        return self._mat

    def apply(self, X):
        """Compute Omega @ X, densifying the r-row result."""
        return _as_dense(self.matrix() @ X)

    def toarray(self):
        return self.matrix().toarray()


def sparse_embedding_cols(r, b, rng):
    """Column-sparse sign embedding: zeta = min(r, 8) entries of value
    +/- sqrt(1/zeta) per column, rows drawn uniformly with replacement."""
    if r < 1 or b < 1:
        raise ValueError("embedding dimensions must be positive")
    zeta = min(r, 8)
    cols = np.repeat(np.arange(b), zeta)
    rows = rng.integers(0, r, size=zeta * b)
    signs = np.sign(rng.uniform(size=zeta * b) - 0.5)
    signs[signs == 0] = 1.0
    vals = np.sqrt(1.0 / zeta) * signs
    return SparseEmbedding(
        shape=(r, b), rows=rows, cols=cols, vals=vals, zeta=zeta, per_column=True
    )


def sparse_embedding_rows(r, b, rng):
    """Row-sparse sign embedding: zeta = min(b, 8) entries of value
    +/- sqrt(b/(zeta r)) per row, columns drawn uniformly with replacement."""
    if r < 1 or b < 1:
        raise ValueError("embedding dimensions must be positive")
    zeta = min(b, 8)
    rows = np.repeat(np.arange(r), zeta)
    cols = rng.integers(0, b, size=zeta * r)
    signs = np.sign(rng.uniform(size=zeta * r) - 0.5)
    signs[signs == 0] = 1.0
    vals = np.sqrt(b / (zeta * r)) * signs
    return SparseEmbedding(
        shape=(r, b), rows=rows, cols=cols, vals=vals, zeta=zeta, per_column=False
    )


class PowerIterationResult(NamedTuple):
    value: float
    converged: bool
    iterations: int
    history: list


def top_generalized_eigenvalue(
    apply_Z: Callable,
    apply_Pinv: Callable,
    p: int,
    rng,
    tol: float = 1e-3,
    max_iter: int = 100,
):
    """Largest eigenvalue of Z P^{-1} by power iteration, matrix-free.

    Z must be symmetric psd and P symmetric positive definite (the caller's
    contract). The iteration runs on v <- Z(P^{-1} v); the estimate is the
    Rayleigh quotient of the symmetrized operator P^{-1/2} Z P^{-1/2},
    computed as (w^T Z w)/(w^T v) with w = P^{-1} v, which is monotone
    nondecreasing. Stops when successive estimates satisfy
    |lam_{k+1} - lam_k| <= tol * lam_k, else flags non-convergence after
    max_iter. A vanishing iterate triggers up to three restarts before
    raising NumericalError.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    restarts = 0
    v = rng.standard_normal(p)
    lam_prev = None
    history = []
    for it in range(1, max_iter + 1):
        w = apply_Pinv(v)
        z = np.asarray(apply_Z(w))
        den = float(w @ v)
        num = float(w @ z)
        norm_z = np.linalg.norm(z)
        if den <= 0 or not np.isfinite(num) or norm_z == 0.0:
            restarts += 1
            if restarts > 3:
                raise NumericalError(
                    "power iteration collapsed to the zero vector repeatedly"
                )
            v = rng.standard_normal(p)
            lam_prev = None
            continue
        lam = num / den
        history.append(lam)
        if lam_prev is not None and abs(lam - lam_prev) <= tol * abs(lam):
            return PowerIterationResult(lam, True, it, history)
        lam_prev = lam
        v = z / norm_z
    return PowerIterationResult(lam_prev, False, max_iter, history)
