"""Spectral and regularity diagnostics, exact at desk scale.

These routines take the dense path with hard size caps; they exist for tests
and reports, not for the optimizer hot loop.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq

from .glm import SQUARED, dense_hessian, stable_sigmoid

_MAX_DENSE_DIM = 2000


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A, dtype=np.float64)


def _svd_terms(A, nu):
    A = _dense(A)
    n, p = A.shape
    if max(n, p) > _MAX_DENSE_DIM:
        raise ValueError(f"dense diagnostics support dimensions <= {_MAX_DENSE_DIM}")
    if n * nu < 0:
        raise ValueError("nu must be nonnegative")
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    s2 = s**2
    if nu > 0:
        weights = s2 / (s2 + n * nu)
    else:
        # pseudoinverse: directions with (numerically) zero singular value
        # contribute nothing
        cutoff = max(n, p) * np.finfo(np.float64).eps * (s[0] if s.size else 0.0)
        weights = (s > cutoff).astype(np.float64)
    return U, weights


def ridge_leverage_scores(A, nu):
    """Leverage scores l_i = a_i^T (A^T A + n nu I)^+ a_i, via thin SVD."""
    U, weights = _svd_terms(A, nu)
    return np.einsum("ij,j,ij->i", U, weights, U)


def effective_dimension(A, nu):
    """Smoothed count of singular values above the regularization level:
    sum_j s_j^2 / (s_j^2 + n nu)."""
    _, weights = _svd_terms(A, nu)
    return float(weights.sum())


def ridge_leverage_coherence(A, nu):
    """Uniformity of the leverage scores: (n / d_eff) * max_i l_i."""
    scores = ridge_leverage_scores(A, nu)
    d_eff = scores.sum()
    return float(A.shape[0] * scores.max() / d_eff)


@dataclass
class SpectrumReport:
    """Singular values, effective dimension over a nu grid, leverage scores,
    and coherence of a design matrix at the model regularization."""

    singular_values: np.ndarray
    nu_grid: np.ndarray
    d_eff: np.ndarray
    leverage_scores: np.ndarray
    coherence: float


def spectrum_report(A, nu, nu_grid=None):
    A = _dense(A)
    if nu_grid is None:
        base = nu if nu > 0 else 1e-6
        nu_grid = base * np.logspace(-3, 3, 13)
    nu_grid = np.asarray(nu_grid, dtype=np.float64)
    s = np.linalg.svd(A, compute_uv=False)
    d_eff = np.array([effective_dimension(A, g) for g in nu_grid])
    scores = ridge_leverage_scores(A, nu)
    return SpectrumReport(
        singular_values=s,
        nu_grid=nu_grid,
        d_eff=d_eff,
        leverage_scores=scores,
        coherence=ridge_leverage_coherence(A, nu),
    )


def _secular_lambda_max(diag, b, c):
    """Largest eigenvalue of diag(diag) + c b b^T (c >= 0) by solving the
    secular equation with bisection-safe bracketing."""
    mask = (b != 0.0) & (c * b**2 > 1e-18 * max(diag.max(), 1e-300))
    if c <= 0 or not mask.any():
        return float(diag.max())
    d = diag[mask]
    bb = c * b[mask] ** 2
    d_top = diag.max()
    lo = max(d.max(), d_top)
    hi = lo + bb.sum()

    def f(lam):
        return 1.0 - np.sum(bb / (lam - d))

    # f is increasing on (max d, inf); nudge off the pole
    eps = 1e-14 * max(hi, 1.0)
    lo_eval = lo + eps
    if f(lo_eval) >= 0.0:
        return float(lo_eval)
    if f(hi) <= 0.0:
        return float(hi)
    root = brentq(f, lo_eval, hi, xtol=1e-15 * max(hi, 1.0), rtol=8.9e-16)
    return float(max(root, d_top))


def hessian_dissimilarity(model, w_grid):
    """Largest generalized eigenvalue, over grid points and summands, of a
    per-sample Hessian against the full one:
    max_{w, i} lambda_1( (H(w) + nu I)^{-1/2} (H_i(w) + nu I) (H(w)+nu I)^{-1/2} ).

    Grid maximum, hence a lower bound on the supremum over a region. Uses the
    rank-one structure of GLM summand Hessians: after diagonalizing the full
    Hessian once per grid point, each summand reduces to a diagonal plus
    rank-one eigenvalue problem solved through its secular equation.
    """
    if model.p > 200 or model.n > 2000:
        raise ValueError("hessian_dissimilarity supports p <= 200, n <= 2000")
    A = _dense(model.dataset.A)
    nu = model.nu
    best = 0.0
    for w in w_grid:
        w = np.asarray(w, dtype=np.float64)
        H = dense_hessian(model, w)  # includes nu I
        evals, Q = np.linalg.eigh(H)
        inv_sqrt = 1.0 / np.sqrt(evals)
        diag = nu * inv_sqrt**2  # spectrum of nu (H)^{-1}
        coeffs = model.get_hessian_diagonal(np.arange(model.n), w)
        B = (A @ Q) * inv_sqrt  # row i holds (H)^{-1/2} a_i in the Q basis
        for i in range(model.n):
            lam = _secular_lambda_max(diag, B[i], float(coeffs[i]))
            if lam > best:
                best = lam
    return best


def gauss_legendre_unit(order):
    """Gauss-Legendre nodes/weights transplanted to [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def local_qr_ratio(model, w_j, segment, w_star, order=16, max_points=64):
    """Local quadratic-regularity ratio of a trajectory segment.

    For each w in the segment, the curvature of F along the chord from w to
    the optimum is averaged with weight 2(1-t) against the Hessian norm at
    the preconditioner build point w_j:

        ratio(w) = int_0^1 2(1-t) ||w*-w||^2_{H(w + t(w*-w))} dt
                   / ||w*-w||^2_{H(w_j)}

    and the returned value is max over the segment divided by min. Equals 1
    exactly for quadratic objectives. Points coinciding with w* are skipped;
    the integral uses fixed-order Gauss-Legendre quadrature. Segments longer
    than ``max_points`` are thinned to evenly spaced points.
    """
    if model.p > 200:
        raise ValueError("local_qr_ratio supports p <= 200")
    segment = [np.asarray(w, dtype=np.float64) for w in segment]
    if len(segment) > max_points:
        idx = np.linspace(0, len(segment) - 1, max_points).round().astype(int)
        segment = [segment[i] for i in sorted(set(idx.tolist()))]
    w_j = np.asarray(w_j, dtype=np.float64)
    w_star = np.asarray(w_star, dtype=np.float64)
    nodes, weights = gauss_legendre_unit(order)
    A = model.dataset.A
    nu = model.nu
    n = model.n
    labels = model.dataset.labels
    t_star = np.asarray(A @ w_star).ravel()
    t_j = np.asarray(A @ w_j).ravel()

    def phi2(t):
        if model.loss == SQUARED:
            return np.ones_like(t)
        m = labels * t
        return stable_sigmoid(m) * stable_sigmoid(-m)

    ratios = []
    for w in segment:
        v = w_star - w
        if not np.any(v):
            continue
        t_w = np.asarray(A @ w).ravel()
        u = t_star - t_w  # A v
        denom = float((u * phi2(t_j)) @ u) / n + nu * float(v @ v)
        if denom <= 0:
            continue
        total = 0.0
        for t, wt in zip(nodes, weights):
            margins = t_w + t * u
            quad = float((u * phi2(margins)) @ u) / n + nu * float(v @ v)
            total += wt * 2.0 * (1.0 - t) * quad
        ratios.append(total / denom)
    if not ratios:
        raise ValueError("every segment point coincided with the optimum")
    gamma_u = max(ratios)
    gamma_l = min(ratios)
    return gamma_u / gamma_l


def zeta_of(precond_state, model, w):
    """Spectral-approximation defect of a built preconditioner against the
    dense full Hessian at w (p <= 500)."""
    if model.p > 500:
        raise ValueError("zeta_of supports p <= 500")
    H = dense_hessian(model, w)
    return precond_state.zeta_estimate(H)


def write_spectrum_csv(report, path):
    """Long-format CSV: quantity,index,value."""
    lines = ["quantity,index,value"]
    for j, s in enumerate(report.singular_values):
        lines.append(f"singular_value,{j},{s!r}")
    for g, d in zip(report.nu_grid, report.d_eff):
        lines.append(f"d_eff,{g!r},{d!r}")
    for i, l in enumerate(report.leverage_scores):
        lines.append(f"leverage,{i},{l!r}")
    lines.append(f"coherence,0,{report.coherence!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path
