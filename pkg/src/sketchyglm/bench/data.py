"""Data ingestion and preprocessing for the benchmark harness.

Covers the SVMLight/LIBSVM text format (1-based indices), row/feature
normalization, random feature maps, and a synthetic ridge/logistic generator
with a controllable singular spectrum.
"""

import numpy as np
import scipy.sparse as sp

from ..glm import Dataset

PREPROCESS_MODES = ("unit_row_norm", "standardize", "none")


class ParseError(ValueError):
    """Malformed SVMLight input; carries the offending line number."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


def parse_svmlight(path, n_features=None):
    """Parse an SVMLight/LIBSVM text file into a CSR-backed Dataset.

    Each data line is ``label idx:val ...`` with 1-based, strictly valid
    indices; duplicate indices within a line are rejected. ``#`` starts a
    comment. The feature count is the maximum index seen unless
    ``n_features`` overrides it.
    """
    labels = []
    indptr = [0]
    indices = []
    values = []
    max_index = 0
    with open(path, "r") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                labels.append(float(tokens[0]))
            except ValueError:
                raise ParseError(f"bad label {tokens[0]!r}", line_no) from None
            seen = set()
            for tok in tokens[1:]:
                idx_s, sep, val_s = tok.partition(":")
                if not sep:
                    raise ParseError(f"bad feature token {tok!r}", line_no)
                try:
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError:
                    raise ParseError(f"bad feature token {tok!r}", line_no) from None
                if idx < 1:
                    raise ParseError(f"index {idx} is not 1-based", line_no)
                if idx in seen:
                    raise ParseError(f"duplicate index {idx}", line_no)
                seen.add(idx)
                indices.append(idx - 1)
                values.append(val)
                max_index = max(max_index, idx)
            indptr.append(len(indices))
    if not labels:
        raise ParseError(f"no data lines in {path}")
    p = max_index if n_features is None else int(n_features)
    if p < max_index:
        raise ParseError(f"n_features={p} below max index {max_index}")
    if p == 0:
        raise ParseError("no features present and n_features not given")
    A = sp.csr_matrix(
        (np.array(values), np.array(indices, dtype=np.int32), np.array(indptr)),
        shape=(len(labels), p),
    )
    A.sort_indices()
    return Dataset(A=A, labels=np.array(labels))


def write_svmlight(dataset, path):
    """Serialize a Dataset in SVMLight format (full-precision values)."""
    A = dataset.A.tocsr() if dataset.is_sparse else sp.csr_matrix(dataset.A)
    with open(path, "w") as fh:
        for i in range(dataset.n):
            start, end = A.indptr[i], A.indptr[i + 1]
            feats = " ".join(
                f"{j + 1}:{float(v)!r}"
                for j, v in zip(A.indices[start:end], A.data[start:end])
            )
            label = repr(float(dataset.labels[i]))
            fh.write(f"{label} {feats}\n" if feats else f"{label}\n")
    return path


def preprocess(dataset, mode):
    """Normalize the design matrix: ``unit_row_norm`` scales each nonzero row
    to unit l2 norm; ``standardize`` centers/scales every feature to mean 0,
    std 1 (constant features are centered only) and standardizes non-binary
    labels; ``none`` is the identity."""
    if mode not in PREPROCESS_MODES:
        raise ValueError(f"mode must be one of {PREPROCESS_MODES}, got {mode!r}")
    if mode == "none":
        return dataset
    if mode == "unit_row_norm":
        norms = np.sqrt(dataset.row_norms_squared())
        scale = np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 1.0)
        if dataset.is_sparse:
            A = sp.diags(scale) @ dataset.A
        else:
            A = dataset.A * scale[:, None]
        return Dataset(A=A, labels=dataset.labels.copy())
    # standardize densifies: feature centering destroys sparsity anyway
    A = dataset.A.toarray() if dataset.is_sparse else dataset.A.copy()
    mean = A.mean(axis=0)
    std = A.std(axis=0)
    A = A - mean
    nonconst = std > 0
    A[:, nonconst] /= std[nonconst]
    labels = dataset.labels.copy()
    if np.unique(labels).size > 2:
        lstd = labels.std()
        labels = (labels - labels.mean()) / (lstd if lstd > 0 else 1.0)
    return Dataset(A=A, labels=labels)


def random_features(dataset, kind, dim, rng, bandwidth=1.0):
    """Replace the design matrix by a random feature map of width ``dim``.

    ``gaussian``: z = sqrt(2/dim) cos(W x + c) with W ~ N(0, 1/bandwidth^2)
    and c ~ U[0, 2 pi), approximating the Gaussian kernel
    exp(-||x-y||^2 / (2 bandwidth^2)). ``relu``: z = sqrt(2/dim) max(0, W x)
    with W ~ N(0, I/p).
    """
    if dim < 1:
        raise ValueError("feature dimension must be >= 1")
    X = dataset.A.toarray() if dataset.is_sparse else dataset.A
    p = X.shape[1]
    if kind == "gaussian":
        W = rng.standard_normal((p, dim)) / bandwidth
        c = rng.uniform(0.0, 2.0 * np.pi, size=dim)
        Z = np.sqrt(2.0 / dim) * np.cos(X @ W + c)
    elif kind == "relu":
        W = rng.standard_normal((p, dim)) / np.sqrt(p)
        Z = np.sqrt(2.0 / dim) * np.maximum(X @ W, 0.0)
    else:
        raise ValueError(f"unknown random feature kind {kind!r}")
    return Dataset(A=Z, labels=dataset.labels.copy())


def synthetic_instance(n, p, task="ridge", decay=1.0, noise=1e-3, seed=0):
    """Synthetic GLM instance with singular values sigma_j = j^{-decay}.

    The design matrix is U diag(sigma) V^T with Haar-ish orthonormal factors,
    rescaled so the mean squared row norm is one (the scale the unit-row-norm
    preprocessing of real data produces). The Hessian A^T A / n then has
    eigenvalues proportional to j^{-2 decay}, so the condition number is
    controlled by ``decay``. Ridge labels are A w_star + noise * N(0, I) for
    a standard normal planted solution; logistic labels are sampled from the
    logistic likelihood at the planted margins.
    """
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, p))
    U, _ = np.linalg.qr(G, mode="reduced")
    V, _ = np.linalg.qr(rng.standard_normal((p, p)))
    sigma = np.arange(1, p + 1, dtype=np.float64) ** (-float(decay))
    A = (U * sigma) @ V.T
    A *= np.sqrt(n / np.sum(sigma**2))
    w_plant = rng.standard_normal(p)
    margins = A @ w_plant
    if task == "ridge":
        labels = margins + noise * rng.standard_normal(n)
    elif task == "logistic":
        probs = 1.0 / (1.0 + np.exp(-margins))
        labels = np.where(rng.uniform(size=n) < probs, 1.0, -1.0)
    else:
        raise ValueError(f"unknown task {task!r}")
    return Dataset(A=A, labels=labels)


def binarize_labels(labels):
    """Map a two-valued label vector onto {-1, +1} (larger value -> +1)."""
    values = np.unique(labels)
    if values.size != 2:
        raise ValueError(
            f"expected exactly two label values, found {values.size}"
        )
    return np.where(labels == values[1], 1.0, -1.0)
