import math

import numpy as np
import pytest

from opshift.core import HermitianOperator, ec_norm, schatten_norm
from opshift.errors import ContourError, KernelError, OrderingError, SpectralGapError
from opshift.generate import rng_for, sylvester_instance
from opshift.sylvester import (
    SOLVERS,
    ContourSpec,
    FourierKernel,
    SylvesterProblem,
    solve_contour,
    solve_double_stieltjes,
    solve_exponential,
    solve_fourier,
    solve_oracle,
    solve_stieltjes,
    solver_report,
    sylvester_residual,
)

from conftest import random_complex, random_hermitian


def scalar_problem():
    return SylvesterProblem([[2.0]], [[0.0]], [[1.0]])


class TestProblem:
    def test_shape_validation(self, rng):
        with pytest.raises(ValueError, match="rows match C"):
            SylvesterProblem(np.eye(3), np.eye(2), np.zeros((3, 2)))

    def test_gap_cached(self):
        p = scalar_problem()
        assert p.gap == 2.0

    def test_gap_floor_enforced(self):
        p = SylvesterProblem([[1.0]], [[1.0]], [[1.0]])
        with pytest.raises(SpectralGapError):
            solve_stieltjes(p)

    def test_save_load_round_trip(self, tmp_path, rng):
        p = sylvester_instance(rng, 4, 3, 1.0)
        p.save(tmp_path, "case")
        back = SylvesterProblem.load(tmp_path, "case")
        assert np.array_equal(back.a.matrix, p.a.matrix)
        assert np.array_equal(back.y, p.y)


class TestOracle:
    def test_scalar(self):
        assert solve_oracle(scalar_problem()) == pytest.approx(np.array([[0.5]]))

    def test_zero_rhs(self, rng):
        p = SylvesterProblem(random_hermitian(rng, 3, 1, 2), random_hermitian(rng, 2, -2, -1),
                             np.zeros((2, 3)))
        assert np.allclose(solve_oracle(p), 0.0)

    def test_divided_differences_diagonal(self):
        p = SylvesterProblem(np.diag([1.0, 3.0]), [[0.0]], [[1.0, 1.0]])
        assert np.allclose(solve_oracle(p), [[1.0, 1.0 / 3.0]])

    def test_residual_certificate(self, rng):
        p = sylvester_instance(rng, 6, 4, 0.8)
        x = solve_oracle(p)
        assert sylvester_residual(x, p) <= 1e-10 * (1 + np.linalg.norm(p.y))

    def test_resonant_spectra_rejected(self):
        p = SylvesterProblem(np.diag([0.0, 1.0]), np.diag([0.0, 5.0]), np.ones((2, 2)))
        with pytest.raises(SpectralGapError):
            solve_oracle(p)


class TestStieltjes:
    def test_scalar_primal_and_dual(self):
        p = scalar_problem()
        assert solve_stieltjes(p) == pytest.approx(np.array([[0.5]]))
        assert solve_stieltjes(p, dual=True) == pytest.approx(np.array([[-0.5]]))

    def test_matches_oracle(self, rng):
        p = sylvester_instance(rng, 6, 4, 0.7)
        x0 = solve_oracle(p)
        x = solve_stieltjes(p)
        assert np.linalg.norm(x - x0) / np.linalg.norm(x0) <= 1e-10

    def test_duality(self, rng):
        for _ in range(5):
            p = sylvester_instance(rng, 5, 4, 0.5)
            x = solve_stieltjes(p)
            z = solve_stieltjes(p, dual=True)
            assert np.linalg.norm(z + x.conj().T) <= 1e-12 * (1 + np.linalg.norm(x))

    def test_dual_solves_adjoint_equation(self, rng):
        p = sylvester_instance(rng, 4, 3, 0.9)
        z = solve_stieltjes(p, dual=True)
        res = z @ p.c.matrix - p.a.matrix @ z - p.y.conj().T
        assert np.linalg.norm(res) <= 1e-10 * (1 + np.linalg.norm(p.y))


class TestDoubleStieltjes:
    def test_scalar(self):
        assert solve_double_stieltjes(scalar_problem()) == pytest.approx(np.array([[0.5]]))

    def test_agrees_with_single_sum(self, rng):
        for _ in range(5):
            p = sylvester_instance(rng, 5, 5, 0.4)
            x1 = solve_stieltjes(p)
            x2 = solve_double_stieltjes(p)
            assert np.max(np.abs(x1 - x2)) <= 1e-12 * (1 + np.max(np.abs(x1)))


class TestContour:
    def test_scalar_unit_circle(self):
        x = solve_contour(scalar_problem(), ContourSpec(circles=((0.0, 1.0),)))
        assert x[0, 0] == pytest.approx(0.5, abs=1e-12)

    def test_default_contour_matches_oracle(self, rng):
        p = sylvester_instance(rng, 6, 5, 0.6)
        x0 = solve_oracle(p)
        x = solve_contour(p)
        assert np.linalg.norm(x - x0) / np.linalg.norm(x0) <= 1e-8

    def test_winding_validation(self):
        p = scalar_problem()
        # circle around spec(A) instead of spec(C)
        with pytest.raises(ContourError, match="spec"):
            solve_contour(p, ContourSpec(circles=((2.0, 1.0),)))

    def test_winding_numbers(self):
        spec = ContourSpec(circles=((0.0, 1.0), (5.0, 0.5)))
        w = spec.winding_numbers([0.3, 5.2, 9.0])
        assert list(w) == [1, 1, 0]

    def test_node_spectrum_guard(self):
        # eigenvalue of A grazes the contour closer than radius * 1e-3
        p = SylvesterProblem([[1.0 + 1e-5]], [[0.0]], [[1.0]])
        with pytest.raises(ContourError, match="node"):
            solve_contour(p, ContourSpec(circles=((0.0, 1.0),)))


class TestExponential:
    def test_scalar_integral(self):
        p = SylvesterProblem([[1.0]], [[0.0]], [[1.0]])
        assert solve_exponential(p)[0, 0] == pytest.approx(1.0, abs=1e-10)

    def test_zero_rhs(self, rng):
        p = SylvesterProblem(random_hermitian(rng, 3, 2, 3), random_hermitian(rng, 2, 0, 1),
                             np.zeros((2, 3)))
        assert np.allclose(solve_exponential(p), 0.0)

    def test_matches_oracle(self, rng):
        a = HermitianOperator(np.diag([2.0, 3.0]))
        c = HermitianOperator(np.diag([0.0, 1.0]))
        y = random_complex(rng, 2, 2)
        p = SylvesterProblem(a, c, y)
        x0 = solve_oracle(p)
        x = solve_exponential(p)
        assert np.linalg.norm(x - x0) / np.linalg.norm(x0) <= 1e-8

    def test_norm_bound(self, rng):
        for _ in range(5):
            p = sylvester_instance(rng, 4, 4, 1.3)
            x = solve_exponential(p)
            d = p.a.eigenvalues.min() - p.c.eigenvalues.max()
            assert schatten_norm(x, np.inf) <= schatten_norm(p.y, np.inf) / d + 1e-9

    def test_ordering_required(self):
        # spec(C) above spec(A): gap positive but one-sided ordering fails
        p = SylvesterProblem([[0.0]], [[1.0]], [[1.0]])
        with pytest.raises(OrderingError):
            solve_exponential(p)

    def test_large_offset_spectra_stable(self, rng):
        # both spectra far from zero: the shifted semigroups must not overflow
        a = HermitianOperator(np.diag([110.0, 112.0]))
        c = HermitianOperator(np.diag([100.0, 104.0]))
        p = SylvesterProblem(a, c, random_complex(rng, 2, 2))
        x = solve_exponential(p)
        x0 = solve_oracle(p)
        assert np.linalg.norm(x - x0) / np.linalg.norm(x0) <= 1e-8


class TestFourierKernel:
    def test_transform_property(self):
        k = FourierKernel.build(1.0)
        xs = np.concatenate([np.linspace(1.0, 10.0, 25), -np.linspace(1.0, 10.0, 25)])
        err = np.max(np.abs(k.transform(xs) - 1.0 / xs))
        assert err <= 1e-6
        assert k.validated_error <= 1e-6

    def test_scaling_with_gap(self):
        for d in (0.1, 0.5, 2.0):
            k = FourierKernel.build(d)
            xs = np.linspace(d, 10 * d, 17)
            err = np.max(np.abs(k.transform(xs) - 1.0 / xs))
            assert err <= 1e-6

    def test_kernel_is_odd_imaginary(self):
        k = FourierKernel.build(1.0)
        assert np.allclose(k.samples.real, 0.0)
        assert np.allclose(k.samples + k.samples[::-1], 0.0)

    def test_rejects_nonpositive_gap(self):
        with pytest.raises(KernelError):
            FourierKernel.build(0.0)


class TestFourierSolve:
    def test_zero_rhs(self, rng):
        p = SylvesterProblem(random_hermitian(rng, 3, 1, 2), random_hermitian(rng, 3, -2, -1),
                             np.zeros((3, 3)))
        assert np.allclose(solve_fourier(p), 0.0)

    def test_scalar_divided_difference(self):
        # spectra at +-d/2: the transform property gives Y/(a-c) exactly
        d = 1.0
        p = SylvesterProblem([[d / 2.0]], [[-d / 2.0]], [[1.0]])
        x = solve_fourier(p)
        assert abs(x[0, 0] - 1.0) <= 1e-6

    def test_matches_oracle(self, rng):
        p = sylvester_instance(rng, 5, 5, 1.0)
        x0 = solve_oracle(p)
        x = solve_fourier(p)
        assert np.linalg.norm(x - x0) / np.linalg.norm(x0) <= 1e-6

    def test_kernel_gap_precondition(self, rng):
        p = sylvester_instance(rng, 3, 3, 0.5)
        too_wide = FourierKernel.build(1.0, max_freq=p.max_frequency())
        with pytest.raises(SpectralGapError):
            solve_fourier(p, kernel=too_wide)

    def test_kernel_frequency_guard(self):
        # problem frequencies exceed what the kernel grid resolves (10 * d)
        p = SylvesterProblem([[10.5]], [[-10.5]], [[1.0]])
        narrow = FourierKernel.build(1.0)
        with pytest.raises(KernelError, match="max_freq"):
            solve_fourier(p, kernel=narrow)


class TestRepresentationEquivalence:
    def test_all_methods_match_oracle(self, rng):
        tolerances = {
            "stieltjes": 1e-10, "double_stieltjes": 1e-10,
            "contour": 1e-8, "exponential": 1e-8, "fourier": 1e-6,
        }
        for trial in range(20):
            gen = rng_for(991, trial)
            layout = "split" if trial % 2 == 0 else "straddle"
            p = sylvester_instance(
                gen, int(gen.integers(2, 9)), int(gen.integers(2, 9)),
                float(gen.uniform(0.1, 5.0)), layout=layout,
            )
            x0 = solve_oracle(p)
            scale = np.linalg.norm(x0)
            for method, tol in tolerances.items():
                try:
                    x = SOLVERS[method](p)
                except OrderingError:
                    assert layout == "straddle"
                    continue
                assert np.linalg.norm(x - x0) / scale <= tol, method


class TestNormBounds:
    def test_scalar_witness_attains_hs_bound(self):
        for d in (0.25, 1.0, 3.0):
            p = SylvesterProblem([[d / 2.0]], [[-d / 2.0]], [[1.0]])
            x = solve_oracle(p)
            assert schatten_norm(x, 2) == pytest.approx(schatten_norm(p.y, 2) / d, abs=1e-12)

    def test_operator_and_hs_bounds(self, rng):
        for trial in range(25):
            gen = rng_for(992, trial)
            p = sylvester_instance(gen, int(gen.integers(2, 7)), int(gen.integers(2, 7)),
                                   float(gen.uniform(0.2, 3.0)))
            x = solve_oracle(p)
            d = p.gap
            assert schatten_norm(x, np.inf) <= (math.pi / (2 * d)) * schatten_norm(p.y, np.inf) + 1e-9
            assert schatten_norm(x, 2) <= schatten_norm(p.y, 2) / d + 1e-9

    def test_ec_norm_bound(self, rng):
        for trial in range(25):
            gen = rng_for(993, trial)
            p = sylvester_instance(gen, int(gen.integers(2, 7)), int(gen.integers(2, 7)),
                                   float(gen.uniform(0.2, 3.0)))
            x = solve_oracle(p)
            lhs = ec_norm(x, p.c.decomposition)
            rhs = ec_norm(p.y, p.c.decomposition) / p.gap
            assert lhs <= rhs + 1e-9


class TestSolverReport:
    def test_report_fields(self, rng):
        p = sylvester_instance(rng, 4, 3, 1.0)
        rep = solver_report(p, "stieltjes")
        assert rep["method"] == "stieltjes"
        assert rep["oracle_deviation"] <= 1e-10
        assert set(rep["bound_margins"]) == {"operator", "hilbert_schmidt", "ec"}
        assert rep["timings"]["solve_seconds"] >= 0

    def test_unknown_method(self, rng):
        with pytest.raises(ValueError, match="unknown method"):
            solver_report(sylvester_instance(rng, 2, 2, 1.0), "qr")
