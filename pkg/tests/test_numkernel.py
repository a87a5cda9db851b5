import numpy as np
import pytest
import scipy.linalg

from riccati_lab import numkernel as nk
from riccati_lab.numkernel import NumericalError


def stable_matrix(n, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    shift = np.max(np.linalg.eigvals(A).real) + 0.5
    return A - shift * np.eye(n)


class TestSpectralData:
    def test_reconstruction(self):
        A = stable_matrix(6, 1)
        sd = nk.spectral_data(A)
        rec = (sd.basis * sd.eigenvalues) @ sd.inverse_basis
        assert np.linalg.norm(rec.real - A, 2) <= 1e-10 * np.linalg.norm(A, 2)
        assert sd.stable

    def test_ill_conditioned_eigenvectors_rejected(self):
        A = np.array([[-1.0, 1.0], [0.0, -1.0 + 1e-14]])  # near-defective
        with pytest.raises(NumericalError):
            nk.spectral_data(A, cond_max=10.0)


class TestPropagator:
    def test_matches_expm(self):
        A = stable_matrix(5, 2)
        prop = nk.Propagator(A)
        for t in (0.0, 0.3, 2.0):
            assert np.linalg.norm(prop.matrix(t) - scipy.linalg.expm(t * A), 2) <= 1e-12 * np.exp(2)

    def test_semigroup_property(self):
        A = stable_matrix(4, 3)
        prop = nk.Propagator(A)
        lhs = prop.matrix(0.7)
        rhs = prop.matrix(0.3) @ prop.matrix(0.4)
        assert np.linalg.norm(lhs - rhs, 2) <= 1e-12

    def test_defective_matrix_falls_back_to_expm(self):
        A = np.array([[-1.0, 1.0], [0.0, -1.0]])  # Jordan block
        prop = nk.Propagator(A)
        assert np.allclose(prop.matrix(1.0), scipy.linalg.expm(A), atol=1e-14)

    def test_apply_batch_matches_apply(self):
        A = stable_matrix(4, 4)
        prop = nk.Propagator(A)
        x = np.arange(1.0, 5.0)
        ts = np.linspace(0.0, 1.0, 7)
        batch = prop.apply_batch(ts, x)
        for t, row in zip(ts, batch):
            assert np.allclose(row, prop.apply(t, x), atol=1e-13)


class TestFractionalPower:
    def test_alpha_out_of_range_rejected(self):
        A = np.diag([-1.0, -4.0])
        with pytest.raises(NumericalError):
            nk.fractional_power(A, 1.0)

    def test_power_inverse_identity(self):
        A = stable_matrix(5, 5)
        F = nk.fractional_power(A, 0.3)
        G = nk.fractional_power(A, -0.3)
        assert np.linalg.norm(F @ G - np.eye(5), 2) <= 1e-10

    def test_half_power_squares_back(self):
        A = np.diag([-1.0, -9.0])
        H = nk.fractional_power(A, 0.5)
        assert np.allclose(H @ H, -A, atol=1e-12)

    def test_unstable_matrix_rejected(self):
        with pytest.raises(NumericalError):
            nk.fractional_power(np.array([[1.0]]), 0.5)


class TestLyapunov:
    def test_residual(self):
        A = stable_matrix(6, 6)
        Q = np.eye(6)
        X = nk.solve_lyapunov(A, Q)
        res = np.linalg.norm(A.T @ X + X @ A + Q, 2)
        assert res <= 1e-10 * max(np.linalg.norm(X, 2) * np.linalg.norm(A, 2), 1.0)
        assert np.allclose(X, X.T, atol=1e-12)
        assert np.min(np.linalg.eigvalsh(X)) > 0


class TestQuadrature:
    def test_trapezoid_exact_on_linear(self):
        g = np.linspace(0.0, 2.0, 9)
        assert abs(nk.trapezoid(3.0 * g + 1.0, g) - 8.0) <= 1e-13

    def test_trapezoid_matrix_valued(self):
        g = np.linspace(0.0, 1.0, 101)
        vals = np.stack([np.eye(2) * t for t in g])
        out = nk.trapezoid(vals, g)
        assert np.allclose(out, 0.5 * np.eye(2), atol=1e-12)

    def test_graded_rule_handles_inverse_sqrt_singularity(self):
        # exact integral of t^(-1/2) over (0, 1] is 2
        ts = nk.graded_grid(1e-12, 1.0, 256)
        val = nk.quadrature(ts ** -0.5, ts, rule="graded")
        assert abs(val - 2.0) <= 1e-4

    def test_graded_rule_refines_monotonically(self):
        errs = []
        for nodes in (64, 128, 256):
            ts = nk.graded_grid(1e-12, 1.0, nodes)
            errs.append(abs(nk.quadrature(ts ** -0.25, ts, rule="graded") - 4.0 / 3.0))
        assert errs[0] >= errs[1] >= errs[2]

    def test_graded_rule_rejects_nonintegrable_singularity(self):
        ts = nk.graded_grid(1e-12, 1.0, 64)
        with pytest.raises(NumericalError):
            nk.quadrature(ts ** -1.5, ts, rule="graded")

    def test_bad_grid_rejected(self):
        with pytest.raises(NumericalError):
            nk.trapezoid(np.ones(3), np.array([0.0, 0.5, 0.25]))
        with pytest.raises(NumericalError):
            nk.quadrature(np.array([1.0, np.nan]), np.array([0.0, 1.0]))

    def test_unknown_rule_rejected(self):
        with pytest.raises(NumericalError):
            nk.quadrature(np.ones(3), np.linspace(0, 1, 3), rule="midpoint")


class TestWeightedNorm:
    def test_sup_mode_discounts_late_times(self):
        grid = np.linspace(0.0, 2.0, 5)
        norms = np.ones(5)
        w = nk.WeightedNorm(rate=1.0, mode="sup")
        assert abs(nk.weighted_norm(grid, norms, w) - 1.0) <= 1e-14

    def test_larger_rate_never_increases_norm(self):
        grid = np.linspace(0.0, 1.0, 11)
        norms = np.linspace(1.0, 3.0, 11)
        vals = [nk.weighted_norm(grid, norms, nk.WeightedNorm(rate=r, mode="sup"))
                for r in (0.0, 1.0, 2.0)]
        assert vals[0] >= vals[1] >= vals[2]
