"""GLM objectives and their sampling oracles.

Supports ridge (squared loss) and l2-regularized logistic regression over a
design matrix that may be dense or CSR-sparse. The five oracles used by the
optimizers and preconditioners are ``get_reg``, ``get_data``,
``get_hessian_diagonal``, ``get_stoch_grad``, and ``get_full_grad``; all are
read-only and safe for concurrent use.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

SQUARED = "squared"
LOGISTIC = "logistic"
LOSSES = (SQUARED, LOGISTIC)


@dataclass
class Dataset:
    """Design matrix A (n x p, dense or CSR) with one label per row."""

    A: object
    labels: np.ndarray
    n: int = field(init=False)
    p: int = field(init=False)

    def __post_init__(self):
        if sp.issparse(self.A):
            self.A = self.A.tocsr()
            self.A.sort_indices()
            data = self.A.data
        else:
            self.A = np.ascontiguousarray(np.asarray(self.A, dtype=np.float64))
            data = self.A
        if not np.all(np.isfinite(data)):
            raise ValueError("design matrix contains NaN or Inf")
        self.labels = np.asarray(self.labels, dtype=np.float64).ravel()
        if not np.all(np.isfinite(self.labels)):
            raise ValueError("labels contain NaN or Inf")
        self.n, self.p = self.A.shape
        if self.labels.shape[0] != self.n:
            raise ValueError(
                f"{self.labels.shape[0]} labels for {self.n} rows"
            )

    @property
    def is_sparse(self):
        return sp.issparse(self.A)

    def row_norms_squared(self):
        if self.is_sparse:
            return np.asarray(self.A.multiply(self.A).sum(axis=1)).ravel()
        return np.einsum("ij,ij->i", self.A, self.A)


def stable_sigmoid(m):
    """Elementwise 1/(1+exp(-m)) without overflow for large |m|."""
    m = np.asarray(m, dtype=np.float64)
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-m[pos]))
    em = np.exp(m[~pos])
    out[~pos] = em / (1.0 + em)
    return out


def _log1pexp_neg(m):
    # log(1 + exp(-m)), stable on both tails
    m = np.asarray(m, dtype=np.float64)
    out = np.empty_like(m)
    pos = m >= 0
    out[pos] = np.log1p(np.exp(-m[pos]))
    out[~pos] = -m[~pos] + np.log1p(np.exp(m[~pos]))
    return out


class GlmModel:
    """A regularized GLM: F(w) = (1/n) sum_i phi_i(a_i^T w) + (nu/2)||w||^2.

    ``loss`` selects phi: squared loss phi_i(t) = (t - b_i)^2 / 2, or
    logistic loss phi_i(t) = log(1 + exp(-b_i t)) with labels b_i in {-1,+1}.
    """

    def __init__(self, dataset, loss, nu):
        if loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}, got {loss!r}")
        if nu < 0:
            raise ValueError("regularization nu must be nonnegative")
        if nu == 0:
            warnings.warn(
                "nu = 0: the objective is not strongly convex", stacklevel=2
            )
        if loss == LOGISTIC:
            bad = np.setdiff1d(np.unique(dataset.labels), [-1.0, 1.0])
            if bad.size:
                raise ValueError(
                    f"logistic labels must be in {{-1,+1}}; found {bad[:5]}"
                )
        self.dataset = dataset
        self.loss = loss
        self.nu = float(nu)

    @property
    def n(self):
        return self.dataset.n

    @property
    def p(self):
        return self.dataset.p

    def get_reg(self):
        return self.nu

    def _check_batch(self, batch):
        batch = np.asarray(batch, dtype=np.intp).ravel()
        if batch.size and (batch.min() < 0 or batch.max() >= self.n):
            raise IndexError(f"batch indices must lie in [0, {self.n})")
        return batch

    def get_data(self, batch):
        """Submatrix A_B with rows stacked in batch order."""
        batch = self._check_batch(batch)
        return self.dataset.A[batch]

    def _margins(self, A_B, batch, w):
        t = np.asarray(A_B @ w).ravel()
        if self.loss == LOGISTIC:
            return self.dataset.labels[batch] * t
        return t

    def get_hessian_diagonal(self, batch, w):
        """Vector of phi_i''(a_i^T w) for i in the batch."""
        batch = self._check_batch(batch)
        if self.loss == SQUARED:
            return np.ones(batch.shape[0])
        m = self._margins(self.dataset.A[batch], batch, w)
        return stable_sigmoid(m) * stable_sigmoid(-m)

    def grad_coefficients(self, batch, w):
        """Per-sample scalars c_i = phi_i'(a_i^T w), so grad f_i = c_i a_i."""
        batch = self._check_batch(batch)
        A_B = self.dataset.A[batch]
        b = self.dataset.labels[batch]
        t = np.asarray(A_B @ w).ravel()
        if self.loss == SQUARED:
            return t - b
        return -b * stable_sigmoid(-b * t)

    def get_stoch_grad(self, batch, w):
        """(1/|B|) sum_{i in B} grad f_i(w) + nu w."""
        batch = self._check_batch(batch)
        if batch.size == 0:
            raise ValueError("batch must contain at least one index")
        c = self.grad_coefficients(batch, w)
        g = np.asarray(self.dataset.A[batch].T @ c).ravel()
        return g / batch.size + self.nu * w

    def get_full_grad(self, w):
        return self.get_stoch_grad(np.arange(self.n), w)

    def full_loss(self, w):
        """F(w), with the logistic term evaluated through log1p."""
        t = np.asarray(self.dataset.A @ w).ravel()
        if self.loss == SQUARED:
            vals = 0.5 * (t - self.dataset.labels) ** 2
        else:
            vals = _log1pexp_neg(self.dataset.labels * t)
        return float(vals.mean() + 0.5 * self.nu * (w @ w))

    def minibatch_loss(self, batch, w):
        batch = self._check_batch(batch)
        t = np.asarray(self.dataset.A[batch] @ w).ravel()
        if self.loss == SQUARED:
            vals = 0.5 * (t - self.dataset.labels[batch]) ** 2
        else:
            vals = _log1pexp_neg(self.dataset.labels[batch] * t)
        return float(vals.mean() + 0.5 * self.nu * (w @ w))


def dense_hessian(model, w, batch=None):
    """Assembled p x p Hessian (1/|B|) A_B^T Phi'' A_B + nu I, dense.

    Intended for diagnostics, reference solves, and test oracles only.
    """
    if batch is None:
        batch = np.arange(model.n)
    batch = np.asarray(batch, dtype=np.intp)
    A_B = model.get_data(batch)
    d = model.get_hessian_diagonal(batch, w)
    if sp.issparse(A_B):
        H = (A_B.T @ sp.diags(d) @ A_B).toarray()
    else:
        H = A_B.T @ (d[:, None] * A_B)
    H /= batch.size
    H[np.diag_indices_from(H)] += model.nu
    return 0.5 * (H + H.T)
