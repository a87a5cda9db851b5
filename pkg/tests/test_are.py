import math

import numpy as np
import pytest

from riccati_lab import are, dre, models
from riccati_lab.models import AssumptionParams, LqModel
from riccati_lab.numkernel import NumericalError


def make_assumption(**kw):
    params = dict(gamma=0.3, N=1.0, epsilon=0.1, q=1.5, omega=1.0, eta=1.0,
                  M=1.0, delta=0.5)
    params.update(kw)
    return AssumptionParams(**params)


class TestSolvers:
    def test_scalar_closed_form_newton(self, shipped_inf):
        sol = are.solve_are_newton(shipped_inf["scalar"])
        assert abs(sol.P[0, 0] - (math.sqrt(2.0) - 1.0)) <= 1e-10

    def test_scalar_closed_form_spectral(self, shipped_inf):
        sol = are.solve_are_spectral(shipped_inf["scalar"])
        assert abs(sol.P[0, 0] - (math.sqrt(2.0) - 1.0)) <= 1e-10

    def test_cross_method_agreement(self, shipped_inf):
        for m in shipped_inf.values():
            Pn = are.solve_are_newton(m).P
            Ps = are.solve_are_spectral(m).P
            assert np.linalg.norm(Pn - Ps, 2) <= 1e-9 * max(np.linalg.norm(Pn, 2), 1.0)

    def test_residual_norm_small(self, shipped_inf, are_newton):
        for name, m in shipped_inf.items():
            sol = are_newton[name]
            scale = max(np.linalg.norm(m.A, 2) * np.linalg.norm(sol.P, 2)
                        + np.linalg.norm(m.R, 2) ** 2, 1.0)
            assert are.are_residual_norm(sol.P, m) <= 1e-9 * scale

    def test_closed_loop_stable(self, are_newton):
        for sol in are_newton.values():
            assert sol.closed_loop_abscissa < 0

    def test_zero_observation_gives_zero_solution(self):
        a = make_assumption()
        m = LqModel(np.array([[-1.0]]), np.array([[1.0]]), np.array([[0.0]]),
                    math.inf, (0,), a, name="freecost")
        sol = are.solve_are_newton(m)
        assert np.linalg.norm(sol.P) <= 1e-14

    def test_finite_horizon_rejected(self, shipped):
        with pytest.raises(NumericalError, match="horizon"):
            are.solve_are_newton(shipped["scalar"])
        with pytest.raises(NumericalError, match="horizon"):
            are.solve_are_spectral(shipped["scalar"])


class TestIntegralForm:
    def test_zero_at_coincident_times(self, shipped_inf, are_newton):
        m = shipped_inf["random"]
        x = np.ones(m.n)
        assert are.are_integral_residual(are_newton["random"], m, 1.0, 1.0, x, x) == 0.0

    def test_residual_small(self, shipped_inf, are_newton, rng):
        for name, m in shipped_inf.items():
            x = rng.standard_normal(m.n)
            y = rng.standard_normal(m.n)
            res = are.are_integral_residual(are_newton[name], m, 0.0, 2.0, x, y,
                                            grid_steps=2000)
            assert res <= 1e-6 * (1.0 + np.linalg.norm(x) * np.linalg.norm(y))

    def test_long_span_reduces_to_total_energy_balance(self, shipped_inf, are_newton, rng):
        # at a long time span the evolved endpoint term is negligible and
        # (Px, x) matches the observation-minus-gain energy integral
        m = shipped_inf["random"]
        x = rng.standard_normal(m.n)
        res = are.are_integral_residual(are_newton["random"], m, 0.0, 40.0, x, x,
                                        grid_steps=40000)
        assert res <= 1e-6 * (1.0 + np.linalg.norm(x) ** 2)


class TestStructure:
    def test_generator_identity_roundoff(self, shipped_inf, are_newton):
        for name, m in shipped_inf.items():
            res = are.generator_identity_check(are_newton[name], m)
            assert res <= 1e-10 * max(np.linalg.norm(m.A, 2), 1.0)

    def test_truncation_horizon_covers_decay(self, shipped_inf):
        for m in shipped_inf.values():
            T = are.truncation_horizon(m)
            a = m.assumption
            assert a.M * math.exp(-a.omega * T) <= 1e-6 * (1.0 + 1e-9)


class TestValueSandwich:
    def test_reference_passes(self, shipped_inf, are_newton):
        m = shipped_inf["random"]
        sol = are_newton["random"]
        x = np.ones(m.n) / math.sqrt(m.n)
        upper, lower = are.value_sandwich_test(sol.P, m, x, reference=sol)
        assert abs(upper) <= 1e-6 and abs(lower) <= 1e-6

    def test_inflated_candidate_caught(self, shipped_inf, are_newton):
        m = shipped_inf["random"]
        sol = are_newton["random"]
        x = np.ones(m.n) / math.sqrt(m.n)
        upper, lower = are.value_sandwich_test(sol.P + 0.1 * np.eye(m.n), m, x,
                                               reference=sol)
        assert lower > 1e-4 or abs(upper) > 1e-4

    def test_asymmetric_candidate_rejected(self, shipped_inf, are_newton):
        m = shipped_inf["random"]
        Q = are_newton["random"].P.copy()
        Q[0, 1] += 1.0
        with pytest.raises(NumericalError):
            are.value_sandwich_test(Q, m, np.ones(m.n), reference=are_newton["random"])

    def test_indefinite_candidate_rejected(self, shipped_inf, are_newton):
        m = shipped_inf["random"]
        with pytest.raises(NumericalError):
            are.value_sandwich_test(-np.eye(m.n), m, np.ones(m.n),
                                    reference=are_newton["random"])


class TestDreLimit:
    def test_finite_horizon_solutions_increase_to_are(self, shipped_inf, are_newton):
        m = shipped_inf["scalar"]
        ref = are_newton["scalar"].P[0, 0]
        vals = [dre.solve_dre(m.with_horizon(float(T)), 200 * T).P[0][0, 0]
                for T in (2, 4, 8)]
        assert vals[0] <= vals[1] <= vals[2] <= ref + 1e-12
        gaps = [ref - v for v in vals]
        assert gaps[0] > gaps[1] > gaps[2]


class TestCsvRoundTrip:
    def test_round_trip(self, shipped_inf, are_newton, tmp_path):
        m = shipped_inf["random"]
        sol = are_newton["random"]
        path = tmp_path / "are.csv"
        are.save_csv(sol, m, str(path))
        back = are.load_csv(str(path), m)
        assert np.allclose(back.P, sol.P)
        assert np.allclose(back.K, sol.K)
        assert back.closed_loop_abscissa < 0
