"""Curvature-based preconditioners behind a common update/direction interface.

Five kinds are provided, all built from a square-root factor of a subsampled
Hessian: ``ssn`` (subsampled Newton via Cholesky and the wide-case Woodbury
branch), ``nyssn`` (randomized Nystrom low-rank approximation), ``sassn-c``
and ``sassn-r`` (sparse sign embeddings of the square root), and ``diagssn``
(diagonal of the subsampled Hessian). ``update`` rebuilds the factors at the
current iterate from one Hessian batch and then estimates the preconditioned
smoothness constant lambda_P from a second, independent batch via matrix-free
power iteration; the subsampled Hessian is never materialized. ``direction``
applies P^{-1} exactly using the stored factors.
"""

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .sketchlin import (
    gram_cholesky,
    gram_inverse_apply,
    nystrom_inverse_apply,
    randomized_nystrom,
    sparse_embedding_cols,
    sparse_embedding_rows,
    top_generalized_eigenvalue,
)

SSN = "ssn"
NYSSN = "nyssn"
SASSN_C = "sassn-c"
SASSN_R = "sassn-r"
DIAGSSN = "diagssn"
KINDS = (SSN, NYSSN, SASSN_C, SASSN_R, DIAGSSN)

DEFAULT_RHO = 1e-3
DEFAULT_RANK = 10
_LOW_RANK_KINDS = (NYSSN, SASSN_C, SASSN_R)


def default_config(kind):
    """Default (rank, rho) for a preconditioner kind; rank is None where the
    kind does not use one."""
    if kind not in KINDS:
        raise ValueError(f"unknown preconditioner kind {kind!r}")
    rank = DEFAULT_RANK if kind in _LOW_RANK_KINDS else None
    return rank, DEFAULT_RHO


def default_hessian_batch_size(n):
    """Recommended Hessian batchsize: floor(sqrt(n))."""
    return max(1, int(np.sqrt(n)))


class UpdateSchedule:
    """Preconditioner update times: step 0 always, then every u steps
    (u = None means never again after the first build)."""

    def __init__(self, every=None):
        if every is not None and every < 1:
            raise ValueError("update frequency must be >= 1")
        self.every = every

    @classmethod
    def once(cls):
        return cls(every=None)

    def __contains__(self, k):
        if k == 0:
            return True
        return self.every is not None and k % self.every == 0

    def __repr__(self):
        return f"UpdateSchedule(every={self.every})"


def sqrt_hessian_factor(model, batch, w):
    """Square-root factor X with X^T X = (1/b) A_B^T Phi''(A_B w) A_B.

    X = diag(sqrt(phi''/b)) A_B; a CSR A_B stays sparse under the row
    scaling.
    """
    batch = np.asarray(batch, dtype=np.intp)
    A_B = model.get_data(batch)
    d = model.get_hessian_diagonal(batch, w)
    scale = np.sqrt(d / batch.size)
    if sp.issparse(A_B):
        return sp.diags(scale) @ A_B
    return scale[:, None] * A_B


class Preconditioner:
    """Shared machinery: lambda_P estimation and rho >= nu validation."""

    kind = None
    uses_rank = False

    def __init__(self, rho=DEFAULT_RHO, rank=None, rng=None,
                 power_tol=1e-3, power_max_iter=100):
        if rho <= 0:
            raise ValueError("rho must be positive")
        if self.uses_rank:
            self.rank = DEFAULT_RANK if rank is None else int(rank)
            if self.rank < 1:
                raise ValueError("rank must be >= 1")
        self.rho = float(rho)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.power_tol = power_tol
        self.power_max_iter = power_max_iter
        self.lambda_p = None
        self.power_converged = None

    def _require_built(self):
        if self.lambda_p is None:
            raise RuntimeError("direction() called before the first update()")

    def update(self, model, batch1, batch2, w):
        """Rebuild the factors at w from batch1, then refresh lambda_P from
        batch2. The two batches must be sampled independently."""
        if self.rho < model.get_reg():
            raise ValueError(
                f"rho={self.rho} must be >= the model regularization "
                f"nu={model.get_reg()}"
            )
        X = sqrt_hessian_factor(model, batch1, w)
        self._build(X)
        self._estimate_lambda_p(model, batch2, w)
        return self

    def _estimate_lambda_p(self, model, batch2, w):
        batch2 = np.asarray(batch2, dtype=np.intp)
        A2 = model.get_data(batch2)
        d2 = model.get_hessian_diagonal(batch2, w)
        nu = model.get_reg()
        b2 = batch2.size
        if sp.issparse(A2):
            A2s = sp.diags(d2 / b2) @ A2

            def apply_z(v):
                return np.asarray(A2.T @ (A2s @ v)).ravel() + nu * v
        else:
            def apply_z(v):
                return A2.T @ ((d2 / b2) * (A2 @ v)) + nu * v

        result = top_generalized_eigenvalue(
            apply_z,
            self._inverse_apply,
            model.p,
            self.rng,
            tol=self.power_tol,
            max_iter=self.power_max_iter,
        )
        self.lambda_p = result.value
        self.power_converged = result.converged

    def direction(self, g):
        """P^{-1} g using the held factors."""
        self._require_built()
        return self._inverse_apply(np.asarray(g))

    def zeta_estimate(self, H_dense):
        """Spectral-approximation defect of P against a dense Hessian H.

        Returns max(1 - lam_min, lam_max - 1) over the generalized
        eigenvalues of (H, P), so kappa_2(P^{-1/2} H P^{-1/2}) is at most
        (1 + zeta)/(1 - zeta) whenever the estimate is below one. Dense path,
        p <= 500.
        """
        self._require_built()
        H = np.asarray(H_dense)
        if H.shape[0] > 500:
            raise ValueError("zeta_estimate supports p <= 500 only")
        evals = sla.eigh(H, self.assemble(), eigvals_only=True)
        return float(max(1.0 - evals[0], evals[-1] - 1.0))

    # subclasses provide _build, _inverse_apply, assemble


class SSNPreconditioner(Preconditioner):
    """Subsampled Newton: P = X^T X + rho I, factored via Cholesky with the
    b < p branch handled by the Woodbury identity."""

    kind = SSN

    def __init__(self, rho=DEFAULT_RHO, rank=None, **kw):
        super().__init__(rho=rho, **kw)
        self.chol = None

    def _build(self, X):
        self.chol = gram_cholesky(X, self.rho)
        self._X = X

    def _inverse_apply(self, g):
        return gram_inverse_apply(self.chol, self.rho, g)

    def assemble(self):
        self._require_built()
        X = self._X
        G = (X.T @ X).toarray() if sp.issparse(X) else X.T @ X
        G[np.diag_indices_from(G)] += self.rho
        return G


class NySSNPreconditioner(Preconditioner):
    """Nystrom subsampled Newton: P = U diag(d) U^T + rho I with (U, d) from
    the randomized Nystrom approximation of X^T X."""

    kind = NYSSN
    uses_rank = True

    def __init__(self, rho=DEFAULT_RHO, rank=DEFAULT_RANK, **kw):
        super().__init__(rho=rho, rank=rank, **kw)
        self.factors = None

    def _build(self, X):
        r = min(self.rank, X.shape[1])
        self.factors = randomized_nystrom(X, r, self.rng)

    def _inverse_apply(self, g):
        return nystrom_inverse_apply(self.factors, self.rho, g)

    def assemble(self):
        self._require_built()
        U, d = self.factors.U, self.factors.d
        P = (U * d) @ U.T
        P[np.diag_indices_from(P)] += self.rho
        return P


class SASSNPreconditioner(Preconditioner):
    """Sketch-and-solve subsampled Newton: P = Y^T Y + rho I with Y = Omega X
    for a sparse sign embedding Omega (column- or row-sparse)."""

    uses_rank = True

    def __init__(self, rho=DEFAULT_RHO, rank=DEFAULT_RANK, **kw):
        super().__init__(rho=rho, rank=rank, **kw)
        self.Y = None
        self.chol = None

    def _generate_embedding(self, b):
        raise NotImplementedError

    def _build(self, X):
        omega = self._generate_embedding(X.shape[0])
        self.Y = omega.apply(X)
        # Gram of Y is r x r, so the dense Cholesky path is always cheap
        self.chol = gram_cholesky(self.Y, self.rho, wide=True)

    def _inverse_apply(self, g):
        return gram_inverse_apply(self.chol, self.rho, g)

    def assemble(self):
        self._require_built()
        P = self.Y.T @ self.Y
        P[np.diag_indices_from(P)] += self.rho
        return P


class SASSNColumnPreconditioner(SASSNPreconditioner):
    kind = SASSN_C

    def _generate_embedding(self, b):
        return sparse_embedding_cols(self.rank, b, self.rng)


class SASSNRowPreconditioner(SASSNPreconditioner):
    kind = SASSN_R

    def _generate_embedding(self, b):
        return sparse_embedding_rows(self.rank, b, self.rng)


class DiagSSNPreconditioner(Preconditioner):
    """Diagonal subsampled Newton: P = diag(d) + rho I where d holds the
    squared column norms of the square-root factor."""

    kind = DIAGSSN

    def __init__(self, rho=DEFAULT_RHO, rank=None, **kw):
        super().__init__(rho=rho, **kw)
        self.d = None

    def _build(self, X):
        if sp.issparse(X):
            self.d = np.asarray(X.multiply(X).sum(axis=0)).ravel()
        else:
            self.d = np.einsum("ij,ij->j", X, X)

    def _inverse_apply(self, g):
        return g / (self.d + self.rho)

    def assemble(self):
        self._require_built()
        return np.diag(self.d + self.rho)


_CLASSES = {
    SSN: SSNPreconditioner,
    NYSSN: NySSNPreconditioner,
    SASSN_C: SASSNColumnPreconditioner,
    SASSN_R: SASSNRowPreconditioner,
    DIAGSSN: DiagSSNPreconditioner,
}


def make_preconditioner(kind, rho=None, rank=None, rng=None, **kw):
    """Construct a preconditioner of the given kind with defaults filled in."""
    if kind not in _CLASSES:
        raise ValueError(f"unknown preconditioner kind {kind!r}")
    default_rank, default_rho = default_config(kind)
    return _CLASSES[kind](
        rho=default_rho if rho is None else rho,
        rank=default_rank if rank is None else rank,
        rng=rng,
        **kw,
    )
