"""Reference minima for suboptimality reporting.

Ridge is solved by a dense regularized normal-equations solve with one step
of iterative refinement; logistic regression by damped Newton with the exact
Hessian. Both drive the gradient norm to 1e-10 relative to max(1, ||grad at
zero||).
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..glm import LOGISTIC, SQUARED, dense_hessian

RESIDUAL_TOL = 1e-10
NEWTON_MAX_ITER = 200


@dataclass
class ReferenceSolution:
    w: np.ndarray
    f_star: float
    method: str
    grad_norm: float


class ReferenceError(RuntimeError):
    """The reference solver failed to meet its residual contract."""


def _gram(model):
    A = model.dataset.A
    if sp.issparse(A):
        return (A.T @ A).toarray() / model.n
    return (A.T @ A) / model.n


def _solve_ridge(model):
    H = _gram(model)
    H[np.diag_indices_from(H)] += model.nu
    rhs = np.asarray(model.dataset.A.T @ model.dataset.labels).ravel() / model.n
    w = np.linalg.solve(H, rhs)
    # one refinement step keeps the gradient residual near roundoff
    w += np.linalg.solve(H, rhs - H @ w)
    return w


def _solve_logistic(model, tol):
    w = np.zeros(model.p)
    for _ in range(NEWTON_MAX_ITER):
        g = model.get_full_grad(w)
        if np.linalg.norm(g) <= tol:
            return w
        H = dense_hessian(model, w)
        step = np.linalg.solve(H, g)
        t = 1.0
        f0 = model.full_loss(w)
        g_dot = g @ step
        while t > 1e-12:
            trial = w - t * step
            if model.full_loss(trial) <= f0 - 0.25 * t * g_dot:
                break
            t *= 0.5
        w = w - t * step
    g = model.get_full_grad(w)
    if np.linalg.norm(g) <= tol:
        return w
    raise ReferenceError(
        f"Newton did not reach gradient norm {tol:g} in "
        f"{NEWTON_MAX_ITER} iterations (final {np.linalg.norm(g):.3e})"
    )


def reference_minimum(model):
    """Solve the model to near machine precision and return (w*, F*)."""
    if model.p > 2000:
        raise ValueError("reference_minimum supports p <= 2000")
    tol = RESIDUAL_TOL * max(1.0, np.linalg.norm(model.get_full_grad(np.zeros(model.p))))
    if model.loss == SQUARED:
        w = _solve_ridge(model)
        method = "normal_equations"
    elif model.loss == LOGISTIC:
        w = _solve_logistic(model, tol)
        method = "damped_newton"
    else:
        raise ValueError(f"unsupported loss {model.loss!r}")
    grad_norm = float(np.linalg.norm(model.get_full_grad(w)))
    if grad_norm > tol:
        raise ReferenceError(
            f"reference residual {grad_norm:.3e} exceeds tolerance {tol:.3e}"
        )
    return ReferenceSolution(
        w=w, f_star=model.full_loss(w), method=method, grad_norm=grad_norm
    )
