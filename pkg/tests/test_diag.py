import numpy as np
import pytest

from sketchyglm.diag import (
    effective_dimension,
    gauss_legendre_unit,
    hessian_dissimilarity,
    local_qr_ratio,
    ridge_leverage_coherence,
    ridge_leverage_scores,
    spectrum_report,
    write_spectrum_csv,
    zeta_of,
)
from sketchyglm.glm import LOGISTIC, SQUARED, Dataset, GlmModel, dense_hessian
from sketchyglm.precond import make_preconditioner

# heavy-hitter family (one row scaled by n, others unit): closed-form
# coherence n * l_inf / d_eff = n^3 / (n^2 + n - 1); at n=10 this is 1000/109
HEAVY_HITTER_CHI_N10 = 9.174311926605505


def heavy_hitter_matrix(n, p=5):
    u = np.zeros(p)
    u[0] = 1.0
    A = np.tile(u, (n, 1))
    A[0] *= n
    return A


class TestRidgeLeverageScores:
    def test_identity_nu_zero(self):
        scores = ridge_leverage_scores(np.eye(6), 0.0)
        assert np.allclose(scores, 1.0, atol=1e-12)

    def test_identity_half(self):
        n = 4
        scores = ridge_leverage_scores(np.eye(n), 1.0 / n)  # n*nu = 1
        assert np.allclose(scores, 0.5, atol=1e-12)

    def test_matches_explicit_pinv(self):
        rng = np.random.default_rng(0)
        for nu in (0.0, 1e-3, 0.5):
            A = rng.standard_normal((20, 5))
            n = 20
            scores = ridge_leverage_scores(A, nu)
            K = np.linalg.pinv(A.T @ A + n * nu * np.eye(5))
            expected = np.einsum("ij,jk,ik->i", A, K, A)
            assert np.max(np.abs(scores - expected)) <= 1e-10

    def test_rank_deficient_nu_zero(self):
        rng = np.random.default_rng(1)
        A = rng.standard_normal((10, 2)) @ rng.standard_normal((2, 6))
        scores = ridge_leverage_scores(A, 0.0)
        K = np.linalg.pinv(A.T @ A)
        expected = np.einsum("ij,jk,ik->i", A, K, A)
        assert np.max(np.abs(scores - expected)) <= 1e-10

    def test_bounds(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            A = rng.standard_normal((15, 4))
            scores = ridge_leverage_scores(A, rng.uniform(0, 0.1))
            assert np.all(scores >= -1e-12)
            assert np.all(scores <= 1 + 1e-12)


class TestEffectiveDimension:
    def test_full_rank_nu_zero(self):
        rng = np.random.default_rng(3)
        A = rng.standard_normal((12, 5))
        assert np.isclose(effective_dimension(A, 0.0), 5.0)
        assert np.isclose(effective_dimension(A.T, 0.0), 5.0)

    def test_identity_value(self):
        assert np.isclose(effective_dimension(np.eye(4), 0.25), 2.0)

    def test_leverage_sum_identity(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            A = rng.standard_normal((rng.integers(5, 30), rng.integers(2, 10)))
            nu = 10.0 ** rng.uniform(-6, 0)
            d_eff = effective_dimension(A, nu)
            assert abs(d_eff - ridge_leverage_scores(A, nu).sum()) <= 1e-10

    def test_monotone_in_nu(self):
        rng = np.random.default_rng(5)
        A = rng.standard_normal((30, 8))
        grid = np.logspace(-6, 0, 13)
        vals = [effective_dimension(A, nu) for nu in grid]
        assert all(b < a for a, b in zip(vals, vals[1:]))


class TestCoherence:
    def test_identity_is_one(self):
        for nu in (0.0, 0.3, 2.0):
            assert np.isclose(ridge_leverage_coherence(np.eye(7), nu), 1.0)

    def test_heavy_hitter_family(self):
        n = 10
        chi = ridge_leverage_coherence(heavy_hitter_matrix(n), 1.0 / n)
        assert abs(chi - HEAVY_HITTER_CHI_N10) <= 0.01 * HEAVY_HITTER_CHI_N10

    def test_incoherent_gaussian(self):
        rng = np.random.default_rng(6)
        A = rng.standard_normal((100, 10))
        assert ridge_leverage_coherence(A, 1e-3) <= 5.0

    def test_at_least_one(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            A = rng.standard_normal((20, 6)) * rng.uniform(0.1, 3)
            assert ridge_leverage_coherence(A, 10 ** rng.uniform(-5, 0)) >= 1.0


class TestHessianDissimilarity:
    def test_identical_summands(self):
        row = np.array([1.0, -2.0, 0.5])
        A = np.tile(row, (8, 1))
        model = GlmModel(Dataset(A=A, labels=np.zeros(8)), SQUARED, 1e-2)
        tau = hessian_dissimilarity(model, [np.zeros(3)])
        assert np.isclose(tau, 1.0, atol=1e-8)

    def test_single_sample(self):
        model = GlmModel(
            Dataset(A=np.array([[1.0, 2.0]]), labels=np.zeros(1)), SQUARED, 1e-3
        )
        tau = hessian_dissimilarity(model, [np.zeros(2)])
        assert np.isclose(tau, 1.0, atol=1e-8)

    @pytest.mark.parametrize("loss", [SQUARED, LOGISTIC])
    def test_matches_dense_eigensolve(self, loss):
        rng = np.random.default_rng(8)
        n, p = 15, 4
        A = rng.standard_normal((n, p))
        labels = (
            np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
            if loss == LOGISTIC
            else rng.standard_normal(n)
        )
        model = GlmModel(Dataset(A=A, labels=labels), loss, 1e-2)
        w = rng.standard_normal(p) * 0.3
        tau = hessian_dissimilarity(model, [w])
        H = dense_hessian(model, w)
        evals, Q = np.linalg.eigh(H)
        H_inv_half = Q @ np.diag(evals**-0.5) @ Q.T
        coeffs = model.get_hessian_diagonal(np.arange(n), w)
        expected = 0.0
        for i in range(n):
            Hi = coeffs[i] * np.outer(A[i], A[i]) + model.nu * np.eye(p)
            S = H_inv_half @ Hi @ H_inv_half
            expected = max(expected, np.linalg.eigvalsh(S)[-1])
        assert abs(tau - expected) <= 1e-8 * expected

    def test_lemma_bounds(self):
        rng = np.random.default_rng(9)
        for trial in range(5):
            n, p = 25, 6
            nu = 10.0 ** rng.uniform(-4, -1)
            A = rng.standard_normal((n, p))
            labels = rng.standard_normal(n)
            model = GlmModel(Dataset(A=A, labels=labels), SQUARED, nu)
            grid = [rng.standard_normal(p) * 0.5 for _ in range(3)]
            tau = hessian_dissimilarity(model, grid)
            l_max = model.dataset.row_norms_squared().max()
            assert 1.0 - 1e-10 <= tau
            assert tau <= min(n, 1.0 + l_max / nu) + 1e-8

    def test_size_caps(self):
        rng = np.random.default_rng(10)
        A = rng.standard_normal((4, 3))
        model = GlmModel(Dataset(A=A, labels=np.zeros(4)), SQUARED, 1e-2)
        model.dataset.p = 500  # simulate over-cap dimensions
        with pytest.raises(ValueError):
            hessian_dissimilarity(model, [np.zeros(3)])


class TestLocalQrRatio:
    def _ridge(self, seed=0, n=30, p=5):
        rng = np.random.default_rng(seed)
        A = rng.standard_normal((n, p))
        return GlmModel(Dataset(A=A, labels=rng.standard_normal(n)), SQUARED, 1e-2)

    def test_quadratic_is_one(self):
        model = self._ridge()
        rng = np.random.default_rng(1)
        w_star = rng.standard_normal(5)
        segment = [rng.standard_normal(5) for _ in range(6)]
        q = local_qr_ratio(model, rng.standard_normal(5), segment, w_star)
        assert abs(q - 1.0) <= 1e-8

    def test_single_point_is_one(self):
        rng = np.random.default_rng(2)
        n, p = 20, 4
        A = rng.standard_normal((n, p))
        labels = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
        model = GlmModel(Dataset(A=A, labels=labels), LOGISTIC, 1e-2)
        q = local_qr_ratio(
            model, np.zeros(p), [rng.standard_normal(p)], rng.standard_normal(p)
        )
        assert np.isclose(q, 1.0)

    def test_at_least_one(self):
        rng = np.random.default_rng(3)
        n, p = 40, 6
        A = rng.standard_normal((n, p))
        labels = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
        model = GlmModel(Dataset(A=A, labels=labels), LOGISTIC, 1e-3)
        segment = [rng.standard_normal(p) * s for s in (0.1, 0.5, 1.0, 2.0)]
        q = local_qr_ratio(model, segment[0], segment, rng.standard_normal(p))
        assert q >= 1.0 - 1e-8

    def test_all_points_at_optimum_rejected(self):
        model = self._ridge()
        w_star = np.ones(5)
        with pytest.raises(ValueError):
            local_qr_ratio(model, np.zeros(5), [w_star.copy()], w_star)

    def test_quadrature_order_converged(self):
        rng = np.random.default_rng(4)
        n, p = 50, 8
        A = rng.standard_normal((n, p))
        labels = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
        model = GlmModel(Dataset(A=A, labels=labels), LOGISTIC, 1e-3)
        w_j = rng.standard_normal(p)
        w_star = rng.standard_normal(p)
        segment = [rng.standard_normal(p) for _ in range(5)]
        q16 = local_qr_ratio(model, w_j, segment, w_star, order=16)
        q32 = local_qr_ratio(model, w_j, segment, w_star, order=32)
        assert abs(q16 - q32) <= 1e-6

    def test_matches_trapezoid_oracle(self):
        from scipy.integrate import trapezoid
        from sketchyglm.glm import stable_sigmoid

        rng = np.random.default_rng(5)
        n, p = 25, 3
        A = rng.standard_normal((n, p))
        labels = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
        model = GlmModel(Dataset(A=A, labels=labels), LOGISTIC, 1e-2)
        w_j = rng.standard_normal(p)
        w_star = rng.standard_normal(p) * 0.5
        segment = [rng.standard_normal(p) for _ in range(4)]

        ts = np.linspace(0.0, 1.0, 100_001)
        ratios = []
        for w in segment:
            v = w_star - w
            base = A @ w
            u = A @ v
            margins = labels[:, None] * (base[:, None] + u[:, None] * ts[None, :])
            phi2 = stable_sigmoid(margins) * stable_sigmoid(-margins)
            quad = (phi2 * (u**2)[:, None]).sum(axis=0) / n + model.nu * (v @ v)
            integral = trapezoid(2.0 * (1.0 - ts) * quad, ts)
            denom = float(v @ dense_hessian(model, w_j) @ v)
            ratios.append(integral / denom)
        oracle = max(ratios) / min(ratios)
        q = local_qr_ratio(model, w_j, segment, w_star)
        assert abs(q - oracle) <= 1e-6 * oracle


class TestSpectrumReport:
    def test_invariants_and_csv(self, tmp_path):
        rng = np.random.default_rng(6)
        A = rng.standard_normal((30, 6))
        report = spectrum_report(A, 1e-3)
        assert np.all(np.diff(report.singular_values) <= 1e-12)
        assert all(b < a for a, b in zip(report.d_eff, report.d_eff[1:]))
        assert report.coherence >= 1.0
        assert np.all(report.leverage_scores >= -1e-12)
        path = write_spectrum_csv(report, tmp_path / "spectrum.csv")
        lines = open(path).read().strip().splitlines()
        assert lines[0] == "quantity,index,value"
        assert any(line.startswith("coherence,0,") for line in lines)


class TestZetaOf:
    def test_exact_preconditioner(self):
        rng = np.random.default_rng(7)
        A = rng.standard_normal((40, 8))
        model = GlmModel(Dataset(A=A, labels=rng.standard_normal(40)), SQUARED, 1e-3)
        P = make_preconditioner("ssn", rho=model.nu, rng=rng)
        full = np.arange(40)
        P.update(model, full, full, np.zeros(8))
        assert zeta_of(P, model, np.zeros(8)) <= 1e-10


class TestGaussLegendre:
    def test_integrates_weight_exactly(self):
        # integral of 2(1-t) over [0,1] is 1; GL-16 is exact for degree 1
        nodes, weights = gauss_legendre_unit(16)
        assert np.isclose(np.sum(weights * 2 * (1 - nodes)), 1.0, atol=1e-14)
