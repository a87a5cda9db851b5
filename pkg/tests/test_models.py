import math

import numpy as np
import pytest

from riccati_lab import models
from riccati_lab.models import AssumptionParams, LqModel
from riccati_lab.numkernel import NumericalError


def base_assumption(**kw):
    params = dict(gamma=0.3, N=1.0, epsilon=0.1, q=1.5, omega=1.0, eta=1.0,
                  M=1.0, delta=0.5)
    params.update(kw)
    return AssumptionParams(**params)


class TestAssumptionParams:
    def test_q_prime_conjugate(self):
        a = base_assumption(q=1.5)
        assert abs(1.0 / a.q + 1.0 / a.q_prime - 1.0) <= 1e-14

    @pytest.mark.parametrize("bad", [dict(gamma=0.0), dict(gamma=1.0),
                                     dict(q=1.0), dict(q=2.0),
                                     dict(delta=1.0), dict(N=-1.0)])
    def test_invalid_parameters_rejected(self, bad):
        with pytest.raises(NumericalError):
            base_assumption(**bad)


class TestHeatSurrogate:
    def test_construction_n1_beta0(self):
        m = models.heat_boundary_surrogate(1, 0.0)
        assert np.allclose(m.A, [[-np.pi ** 2]])
        assert np.allclose(m.B, [[np.sqrt(2.0)]])
        assert np.allclose(m.R, [[1.0]])

    def test_spectrum_and_column_grading(self):
        m = models.heat_boundary_surrogate(5, 0.5)
        ks = np.arange(1, 6)
        assert np.allclose(np.diag(m.A), -(ks * np.pi) ** 2)
        assert np.allclose(m.B[:, 0], np.sqrt(2.0) * (ks * np.pi))
        assert m.parabolic_block == tuple(range(5))

    def test_gamma_prediction(self):
        m = models.heat_boundary_surrogate(8, 0.5)
        assert abs(m.assumption.gamma - 0.75) <= 1e-12

    def test_beta_out_of_range_rejected(self):
        with pytest.raises(NumericalError):
            models.heat_boundary_surrogate(4, 1.0)


class TestGenerators:
    def test_random_stable_margin(self):
        m = models.random_stable(8, 2, 3, seed=11, margin=0.5)
        assert m.spectral_abscissa() <= -0.5 + 1e-9
        assert m.B.shape == (8, 2) and m.R.shape == (3, 8)

    def test_random_stable_deterministic(self):
        a = models.random_stable(6, 2, 2, seed=5, margin=0.5)
        b = models.random_stable(6, 2, 2, seed=5, margin=0.5)
        assert np.array_equal(a.A, b.A) and np.array_equal(a.B, b.B)

    def test_composite_stable_with_mixed_blocks(self):
        m = models.composite_surrogate(4, 4, 0.5, 0.3, seed=3)
        assert m.spectral_abscissa() < 0
        assert 0 < len(m.parabolic_block) < m.n


class TestKernelDecomposition:
    def test_split_is_additive(self, shipped):
        for m in shipped.values():
            if m.m == 0:
                continue
            for t in (1e-3, 0.1, 1.0):
                F, G = models.decompose_adjoint_kernel(m, t)
                full = m.B.T @ m.adjoint_propagator().matrix(t)
                assert np.linalg.norm(F + G - full, 2) <= 1e-12 * max(np.linalg.norm(full, 2), 1.0)

    def test_pure_parabolic_model_has_zero_smooth_part(self):
        m = models.heat_boundary_surrogate(4, 0.25)
        _, G = models.decompose_adjoint_kernel(m, 0.5)
        assert np.linalg.norm(G) == 0.0


class TestSerialization:
    def test_round_trip_exact(self, shipped, tmp_path):
        for name, m in shipped.items():
            path = tmp_path / f"{name}.txt"
            models.save(m, str(path))
            back = models.load(str(path))
            assert np.array_equal(back.A, m.A)
            assert np.array_equal(back.B, m.B)
            assert np.array_equal(back.R, m.R)
            assert back.parabolic_block == m.parabolic_block
            assert back.model_id() == m.model_id()

    def test_infinite_horizon_round_trip(self, shipped_inf):
        m = shipped_inf["random"]
        back = models.deserialize(models.serialize(m))
        assert math.isinf(back.horizon)

    def test_malformed_text_rejected(self):
        with pytest.raises((NumericalError, ValueError)):
            models.deserialize("not a model file")

    def test_model_id_distinguishes_models(self, shipped):
        ids = {m.model_id() for m in shipped.values()}
        assert len(ids) == len(shipped)


class TestShippedSet:
    def test_contains_the_four_kinds(self, shipped):
        assert set(shipped) == {"scalar", "heat", "random", "composite"}

    def test_all_stable(self, shipped):
        for m in shipped.values():
            assert m.spectral_abscissa() < 0

    def test_scalar_entries(self, shipped):
        m = shipped["scalar"]
        assert np.allclose(m.A, [[-1.0]]) and np.allclose(m.B, [[1.0]])
        assert np.allclose(m.R, [[1.0]])

    def test_with_horizon_keeps_dynamics(self, shipped):
        m = shipped["random"].with_horizon(3.0)
        assert m.horizon == 3.0
        assert np.array_equal(m.A, shipped["random"].A)
