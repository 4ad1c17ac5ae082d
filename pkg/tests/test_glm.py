import itertools

import numpy as np
import pytest
import scipy.sparse as sp

from sketchyglm.glm import (
    LOGISTIC,
    SQUARED,
    Dataset,
    GlmModel,
    dense_hessian,
    stable_sigmoid,
)

# high-precision sigmoid(30) * sigmoid(-30), frozen from a 50-digit evaluation
PHI2_AT_30 = 9.3576229688384233028e-14


def make_model(rng, n=12, p=5, loss=SQUARED, nu=1e-2, sparse=False):
    A = rng.standard_normal((n, p))
    if sparse:
        A[A < 0.3] = 0.0
        A = sp.csr_matrix(A)
    if loss == LOGISTIC:
        labels = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
    else:
        labels = rng.standard_normal(n)
    return GlmModel(Dataset(A=A, labels=labels), loss, nu)


def numerical_grad(f, w, h=1e-6):
    g = np.zeros_like(w)
    for j in range(w.size):
        e = np.zeros_like(w)
        e[j] = h
        g[j] = (f(w + e) - f(w - e)) / (2 * h)
    return g


class TestDataset:
    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            Dataset(A=np.array([[np.nan, 1.0]]), labels=np.array([1.0]))

    def test_rejects_inf_labels(self):
        with pytest.raises(ValueError):
            Dataset(A=np.eye(2), labels=np.array([1.0, np.inf]))

    def test_label_count_checked(self):
        with pytest.raises(ValueError):
            Dataset(A=np.eye(3), labels=np.ones(2))

    def test_csr_canonicalized(self):
        A = sp.csr_matrix(np.array([[0.0, 2.0, 1.0], [3.0, 0.0, 0.0]]))
        ds = Dataset(A=A, labels=np.array([1.0, -1.0]))
        assert ds.A.has_sorted_indices

    def test_logistic_labels_validated(self):
        ds = Dataset(A=np.eye(2), labels=np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            GlmModel(ds, LOGISTIC, 1e-2)


class TestOracles:
    def test_get_reg(self):
        rng = np.random.default_rng(0)
        assert make_model(rng, nu=0.01).get_reg() == 0.01
        with pytest.warns(UserWarning):
            assert make_model(rng, nu=0.0).get_reg() == 0.0
        assert make_model(rng, n=100, nu=1e-2 / 100).get_reg() == 1e-4

    def test_get_data_order(self):
        rng = np.random.default_rng(1)
        model = make_model(rng)
        A = model.dataset.A
        assert np.allclose(model.get_data([0]), A[[0]])
        assert np.allclose(model.get_data([2, 0]), A[[2, 0]])
        assert np.allclose(model.get_data(np.arange(model.n)), A)

    def test_get_data_out_of_range(self):
        model = make_model(np.random.default_rng(2))
        with pytest.raises(IndexError):
            model.get_data([model.n])
        with pytest.raises(IndexError):
            model.get_data([-1])

    def test_hessian_diagonal_logistic_at_zero(self):
        model = make_model(np.random.default_rng(3), loss=LOGISTIC)
        d = model.get_hessian_diagonal(np.arange(model.n), np.zeros(model.p))
        assert np.allclose(d, 0.25)

    def test_hessian_diagonal_squared(self):
        rng = np.random.default_rng(4)
        model = make_model(rng)
        d = model.get_hessian_diagonal([1, 3], rng.standard_normal(model.p))
        assert np.allclose(d, 1.0)

    def test_hessian_diagonal_large_margin_no_overflow(self):
        # a single row e_1 with label +1 gives margin exactly w_1
        ds = Dataset(A=np.array([[1.0, 0.0]]), labels=np.array([1.0]))
        model = GlmModel(ds, LOGISTIC, 1e-2)
        d = model.get_hessian_diagonal([0], np.array([30.0, 0.0]))
        assert np.isfinite(d[0])
        assert abs(d[0] - PHI2_AT_30) <= 1e-12 * PHI2_AT_30

    def test_logistic_diagonal_bounds(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            model = make_model(rng, loss=LOGISTIC)
            w = rng.standard_normal(model.p) * rng.uniform(0.1, 5.0)
            d = model.get_hessian_diagonal(np.arange(model.n), w)
            assert np.all(d > 0)
            assert np.all(d <= 0.25)

    def test_stoch_grad_single_sample(self):
        ds = Dataset(A=np.array([[1.0, 0.0]]), labels=np.array([2.0]))
        with pytest.warns(UserWarning):
            model = GlmModel(ds, SQUARED, 0.0)
        g = model.get_stoch_grad([0], np.zeros(2))
        assert np.allclose(g, [-2.0, 0.0])

    def test_stoch_grad_full_batch_equals_full(self):
        rng = np.random.default_rng(6)
        for loss in (SQUARED, LOGISTIC):
            model = make_model(rng, loss=loss)
            w = rng.standard_normal(model.p)
            assert np.allclose(
                model.get_stoch_grad(np.arange(model.n), w),
                model.get_full_grad(w),
                atol=1e-14,
            )

    def test_empty_batch_rejected(self):
        model = make_model(np.random.default_rng(7))
        with pytest.raises(ValueError):
            model.get_stoch_grad([], np.zeros(model.p))

    @pytest.mark.parametrize("loss", [SQUARED, LOGISTIC])
    @pytest.mark.parametrize("sparse", [False, True])
    def test_stoch_grad_finite_differences(self, loss, sparse):
        rng = np.random.default_rng(8)
        model = make_model(rng, loss=loss, sparse=sparse)
        w = rng.standard_normal(model.p) * 0.5
        batch = np.array([0, 3, 7])
        g = model.get_stoch_grad(batch, w)
        g_fd = numerical_grad(lambda u: model.minibatch_loss(batch, u), w)
        assert np.linalg.norm(g - g_fd) <= 1e-5 * max(1.0, np.linalg.norm(g))

    def test_full_grad_vanishes_at_ridge_minimizer(self):
        rng = np.random.default_rng(9)
        model = make_model(rng, n=30, p=6, nu=1e-2)
        A, b = model.dataset.A, model.dataset.labels
        H = A.T @ A / model.n + model.nu * np.eye(model.p)
        w_star = np.linalg.solve(H, A.T @ b / model.n)
        assert np.linalg.norm(model.get_full_grad(w_star)) <= 1e-8

    def test_full_grad_squared_at_zero(self):
        rng = np.random.default_rng(10)
        model = make_model(rng)
        A, b = model.dataset.A, model.dataset.labels
        assert np.allclose(model.get_full_grad(np.zeros(model.p)), -A.T @ b / model.n)

    def test_full_grad_logistic_symmetric_data(self):
        # each row paired with its negation at the same label: per-pair
        # gradients at w = 0 cancel, leaving only the nu*w = 0 term
        rng = np.random.default_rng(11)
        A_half = rng.standard_normal((5, 4))
        A = np.vstack([A_half, -A_half])
        labels = np.ones(10)
        model = GlmModel(Dataset(A=A, labels=labels), LOGISTIC, 1e-2)
        assert np.allclose(model.get_full_grad(np.zeros(4)), 0.0, atol=1e-14)

    def test_full_loss_squared_at_zero(self):
        rng = np.random.default_rng(12)
        with pytest.warns(UserWarning):
            model = make_model(rng, nu=0.0)
        b = model.dataset.labels
        assert np.isclose(model.full_loss(np.zeros(model.p)), (b**2).sum() / (2 * model.n))

    def test_full_loss_logistic_at_zero(self):
        model = make_model(np.random.default_rng(13), loss=LOGISTIC)
        assert np.isclose(model.full_loss(np.zeros(model.p)), np.log(2.0))

    @pytest.mark.parametrize("loss", [SQUARED, LOGISTIC])
    def test_full_loss_gradient_consistency(self, loss):
        rng = np.random.default_rng(14)
        model = make_model(rng, loss=loss)
        w = rng.standard_normal(model.p) * 0.3
        g_fd = numerical_grad(model.full_loss, w)
        g = model.get_full_grad(w)
        assert np.linalg.norm(g - g_fd) <= 1e-5 * max(1.0, np.linalg.norm(g))


class TestEstimatorProperties:
    @pytest.mark.parametrize("loss", [SQUARED, LOGISTIC])
    def test_unbiasedness_by_enumeration(self, loss):
        rng = np.random.default_rng(15)
        for n, b in [(6, 2), (8, 3), (5, 1)]:
            model = make_model(rng, n=n, p=3, loss=loss)
            w = rng.standard_normal(3)
            batches = list(itertools.combinations(range(n), b))
            mean = np.mean(
                [model.get_stoch_grad(list(batch), w) for batch in batches], axis=0
            )
            assert np.allclose(mean, model.get_full_grad(w), atol=1e-12)

    @pytest.mark.parametrize("loss", [SQUARED, LOGISTIC])
    def test_convexity(self, loss):
        rng = np.random.default_rng(16)
        model = make_model(rng, loss=loss)
        for _ in range(30):
            x = rng.standard_normal(model.p)
            y = rng.standard_normal(model.p)
            lam = rng.uniform()
            lhs = model.full_loss(lam * x + (1 - lam) * y)
            rhs = lam * model.full_loss(x) + (1 - lam) * model.full_loss(y)
            assert lhs <= rhs + 1e-12

    @pytest.mark.parametrize("loss", [SQUARED, LOGISTIC])
    def test_subsampled_hessian_matches_grad_differences(self, loss):
        rng = np.random.default_rng(17)
        model = make_model(rng, n=20, p=6, loss=loss)
        w = rng.standard_normal(6) * 0.4
        batch = np.array([1, 4, 9, 15])
        H = dense_hessian(model, w, batch=batch)
        v = rng.standard_normal(6)
        v /= np.linalg.norm(v)
        h = 1e-5
        fd = (
            model.get_stoch_grad(batch, w + h * v)
            - model.get_stoch_grad(batch, w - h * v)
        ) / (2 * h)
        assert np.linalg.norm(H @ v - fd) <= 1e-4 * max(1.0, np.linalg.norm(H @ v))


class TestStableSigmoid:
    def test_extremes(self):
        assert stable_sigmoid(np.array([800.0]))[0] == 1.0
        assert stable_sigmoid(np.array([-800.0]))[0] == 0.0
        assert stable_sigmoid(np.array([0.0]))[0] == 0.5

    def test_symmetry(self):
        m = np.linspace(-40, 40, 101)
        assert np.allclose(stable_sigmoid(m) + stable_sigmoid(-m), 1.0, atol=1e-15)
