import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opshift.blockdiag import AngularOperator, BlockOperatorMatrix, solve_angular
from opshift.core import HermitianOperator
from opshift.generate import block_instance, rng_for
from opshift.ssf import (
    StepFunction,
    bump_family,
    counting_from_spectra,
    counting_ssf,
    perturbation_determinant,
    real_spectrum_of_similar,
    splitting_check,
    ssf_via_argument,
    trace_formula_check,
    vanishing_check,
)

from conftest import random_complex, random_hermitian


class TestStepFunction:
    def test_left_closed_convention(self):
        f = StepFunction([0.0, 1.0], [0, 1, 0])
        assert f(-0.1) == 0
        assert f(0.0) == 1  # value at a breakpoint comes from the right interval
        assert f(0.999) == 1
        assert f(1.0) == 0

    def test_vectorized_eval(self):
        f = StepFunction([0.0, 1.0], [0, 1, 0])
        assert list(f(np.array([-1.0, 0.5, 2.0]))) == [0, 1, 0]

    def test_must_vanish_at_infinity(self):
        with pytest.raises(ValueError, match="vanish"):
            StepFunction([0.0], [0, 1])

    def test_from_jumps_merges_close_positions(self):
        f = StepFunction.from_jumps([0.0, 1e-13, 1.0], [1, 1, -2], merge_tol=1e-10)
        assert f.breakpoints.size == 2
        assert f(0.5) == 2

    def test_cancelling_jumps_dropped(self):
        f = StepFunction.from_jumps([0.0, 0.0, 1.0, 1.0], [1, -1, 1, -1], merge_tol=1e-12)
        assert f.is_zero()

    def test_record_round_trip(self):
        f = StepFunction([0.0, 2.0], [0, -3, 0])
        back = StepFunction.from_record(f.to_record())
        assert back.equals(f)

    def test_sample_table(self):
        f = StepFunction([0.0, 1.0], [0, 1, 0])
        table = f.sample_table([-1.0, 0.5])
        assert table.shape == (2, 2)
        assert table[1, 1] == 1

    @given(
        st.lists(
            st.tuples(
                st.floats(min_value=-10, max_value=10, allow_nan=False),
                st.integers(min_value=-3, max_value=3),
            ),
            min_size=0,
            max_size=8,
        )
    )
    @settings(max_examples=100, deadline=None)
    def test_addition_is_pointwise(self, pairs):
        positions = [p for p, _ in pairs]
        jumps = [j for _, j in pairs]
        # close the function back to zero at the far right
        positions.append(11.0)
        jumps.append(-sum(jumps))
        f = StepFunction.from_jumps(positions, jumps, merge_tol=1e-12)
        g = StepFunction.from_jumps([(-p) for p in positions], jumps, merge_tol=1e-12)
        h = f.add(g, merge_tol=1e-12)
        # pointwise agreement away from the merged breakpoints
        bps = np.concatenate([f.breakpoints, g.breakpoints, h.breakpoints, [0.0]])
        for x in np.linspace(-12.3, 12.3, 101):
            if np.min(np.abs(bps - x)) > 1e-9:
                assert h(x) == f(x) + g(x)

    @given(st.lists(st.floats(min_value=-5, max_value=5, allow_nan=False), min_size=1, max_size=6))
    @settings(max_examples=100, deadline=None)
    def test_self_difference_vanishes(self, positions):
        jumps = [1] * len(positions) + [-len(positions)]
        f = StepFunction.from_jumps(positions + [6.0], jumps, merge_tol=1e-12)
        assert f.subtract(f, merge_tol=1e-12).is_zero()

    def test_mod_integer_collapses_to_exact(self):
        f = StepFunction([0.0, 1.0], [0, 2, 0])
        g = StepFunction([0.0, 1.0], [0, 2, 0])
        h = StepFunction([0.0, 1.0], [0, 1, 0])
        assert f.equals_mod_integer(g)
        # compact support pins the admissible constant to zero
        assert not f.equals_mod_integer(h)
        assert not f.equals(h)
        k = StepFunction([0.0, 2.0], [0, 1, 0])
        m = StepFunction([0.0, 1.0, 2.0], [0, 1, 1, 0])
        assert k.equals_mod_integer(m, merge_tol=1e-12)
        assert k.equals(m, merge_tol=1e-12)


class TestCounting:
    def test_equal_operators_zero(self, rng):
        m = random_hermitian(rng, 5)
        assert counting_ssf(m, m).is_zero()

    def test_single_eigenvalue_shift(self):
        xi = counting_ssf([[1.0]], [[0.0]])
        assert xi(0.0) == 1 and xi(0.5) == 1 and xi(1.0) == 0 and xi(-0.1) == 0

    def test_two_level_example(self):
        xi = counting_ssf(np.diag([1.0, 3.0]), np.diag([0.0, 2.0]))
        for x, expected in [(-0.5, 0), (0.5, 1), (1.5, 0), (2.5, 1), (3.5, 0)]:
            assert xi(x) == expected

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            counting_ssf(np.eye(2), np.eye(3))

    def test_antisymmetry(self, rng):
        h = random_hermitian(rng, 6)
        a = random_hermitian(rng, 6)
        xi = counting_ssf(h, a)
        xi_rev = counting_ssf(a, h)
        assert xi.equals(-xi_rev, merge_tol=1e-10)

    def test_chain_rule_exact(self, rng):
        for _ in range(50):
            n = int(rng.integers(2, 7))
            h, m, a = (random_hermitian(rng, n) for _ in range(3))
            lhs = counting_ssf(h, a)
            rhs = counting_ssf(h, m).add(counting_ssf(m, a), merge_tol=1e-10)
            assert lhs.equals(rhs, merge_tol=1e-9)


class TestTraceFormula:
    def test_equal_pair_is_zero(self, rng):
        m = random_hermitian(rng, 4)
        rep = trace_formula_check(m, m)
        assert rep.max_residual <= 1e-12

    def test_single_shift_identity_window(self):
        # window equal to the identity over the spectra: both sides equal 1
        from opshift.ssf import BumpFunction

        phi = BumpFunction(-1.0, 2.0, kind="identity", taper=1.0)
        rep = trace_formula_check([[1.0]], [[0.0]], [phi])
        row = rep.rows[0]
        assert row["trace_difference"] == pytest.approx(1.0, abs=1e-12)
        assert row["breakpoint_sum"] == pytest.approx(1.0, abs=1e-12)
        assert rep.max_residual <= 1e-6

    def test_random_pairs_with_bump_family(self, rng):
        for _ in range(5):
            n = int(rng.integers(2, 6))
            h = random_hermitian(rng, n)
            a = random_hermitian(rng, n)
            rep = trace_formula_check(h, a)
            assert rep.support_ok
            assert rep.max_residual <= 1e-6

    def test_small_support_reported(self, rng):
        from opshift.ssf import BumpFunction

        h = random_hermitian(rng, 4, -3, 3)
        a = random_hermitian(rng, 4, -3, 3)
        phi = BumpFunction(-0.5, 0.5, kind="bump")  # misses part of the spectra
        rep = trace_formula_check(h, a, [phi])
        assert not rep.support_ok


class TestPerturbationDeterminant:
    def test_equal_pair_gives_one(self, rng):
        m = random_hermitian(rng, 5)
        for z in (1j, 2.0 + 0.5j, -3.0 - 1j):
            assert perturbation_determinant(m, m, z) == pytest.approx(1.0)

    def test_scalar_value(self):
        assert perturbation_determinant([[1.0]], [[0.0]], 1j) == pytest.approx(1 + 1j)

    def test_matches_dense_determinant(self, rng):
        for _ in range(5):
            h = random_hermitian(rng, 6)
            a = random_hermitian(rng, 6)
            z = complex(rng.uniform(-2, 2), rng.uniform(0.2, 2))
            dense = np.linalg.det(
                (h.matrix - z * np.eye(6)) @ np.linalg.inv(a.matrix - z * np.eye(6))
            )
            prod = perturbation_determinant(h, a, z)
            assert prod == pytest.approx(dense, rel=1e-10)

    def test_rejects_real_z(self, rng):
        m = random_hermitian(rng, 3)
        with pytest.raises(ValueError, match="non-real"):
            perturbation_determinant(m, m, 1.5)


class TestArgumentRoute:
    def test_equal_pair(self, rng):
        m = random_hermitian(rng, 4)
        assert ssf_via_argument(m, m, 10.0) == pytest.approx(0.0, abs=1e-9)

    def test_single_shift(self):
        assert ssf_via_argument([[1.0]], [[0.0]], 0.5) == pytest.approx(1.0, abs=1e-7)

    def test_regularity_floor(self):
        with pytest.raises(ValueError, match="floor"):
            ssf_via_argument([[1.0]], [[0.0]], 0.01)

    def test_matches_counting(self, rng):
        for _ in range(3):
            n = int(rng.integers(3, 7))
            a = random_hermitian(rng, n)
            h = HermitianOperator(
                a.matrix + 0.5 * (lambda w: w + w.conj().T)(random_complex(rng, n, n)),
                hermiticity_tol=1e-10,
            )
            xi = counting_ssf(h, a)
            spectra = np.concatenate([h.eigenvalues, a.eigenvalues])
            count = 0
            for lam in np.linspace(spectra.min() - 0.5, spectra.max() + 0.5, 41):
                if np.min(np.abs(spectra - lam)) < 0.06:
                    continue
                count += 1
                assert ssf_via_argument(h, a, lam) == pytest.approx(xi(lam), abs=1e-6)
                if count >= 20:
                    break

    def test_trace_invariants(self):
        value, trace = ssf_via_argument([[1.0]], [[0.0]], 0.5, return_trace=True)
        assert all(abs(v) > 0 for v in trace.values)
        steps = np.abs(np.diff(trace.unwound))
        assert np.all(steps < math.pi)

    def test_large_pair_needs_anchor(self, rng):
        # many shifted eigenvalues: the argument exceeds pi long before eps = 1
        n = 10
        a = HermitianOperator(np.diag(np.full(n, 2.0)))
        h = HermitianOperator(np.diag(np.full(n, -1.0)))
        xi = counting_ssf(h, a)
        val = ssf_via_argument(h, a, 0.5)
        assert val == pytest.approx(xi(0.5), abs=1e-6)
        assert xi(0.5) == -n


class TestStability:
    def test_similarity_preserves_counting(self, rng):
        for seed in range(5):
            gen = rng_for(88, seed)
            hyp = ("henorm", "hbpi", "hadl")[seed % 3]
            blk = block_instance(gen, hyp, 3, 3, 1.0)
            q = solve_angular(blk)
            a = blk.diagonal_part
            v = q.transformation()
            conjugated = np.linalg.solve(v, blk.h.matrix @ v)
            spectrum = real_spectrum_of_similar(conjugated)
            xi_sim = counting_from_spectra(a.eigenvalues, spectrum)
            xi = counting_ssf(blk.h, a)
            assert xi.equals(xi_sim, merge_tol=1e-8 * (1 + np.max(np.abs(spectrum))))

    def test_determinant_identity_for_conjugated_pair(self, rng):
        # ratio determinant of (V^-1 M V, M) equals one for every test z
        gen = rng_for(89, 0)
        blk = block_instance(gen, "henorm", 3, 3, 1.0)
        q = solve_angular(blk)
        v = q.transformation()
        m = blk.h.matrix
        conjugated = np.linalg.solve(v, m @ v)
        spectrum = real_spectrum_of_similar(conjugated)
        for z in (1j, 1.0 + 0.3j, -2.0 + 2j):
            num = np.prod(np.sort(spectrum) - z)
            den = np.prod(np.sort(blk.h.eigenvalues) - z)
            assert abs(num / den - 1.0) <= 1e-10


class TestSplitting:
    def test_zero_coupling_all_zero(self):
        blk = BlockOperatorMatrix(np.diag([0.0, 1.0]), np.diag([3.0, 4.0]), np.zeros((2, 2)))
        rep = splitting_check(blk, solve_angular(blk))
        assert rep.xi_full.is_zero() and rep.xi0.is_zero() and rep.xi1.is_zero()
        assert rep.equal

    def test_scalar_example(self):
        blk = BlockOperatorMatrix([[0.0]], [[1.0]], [[0.2]])
        rep = splitting_check(blk, solve_angular(blk))
        assert rep.equal
        low = (1 - math.sqrt(1.16)) / 2
        high = (1 + math.sqrt(1.16)) / 2
        # channel 0: eigenvalue moves down from 0 to the low root
        assert rep.xi0(low) == -1 and rep.xi0(-0.05) == 0 and rep.xi0(0.0) == 0
        assert np.allclose(rep.xi0.breakpoints, [low, 0.0], atol=1e-12)
        # channel 1: counting convention gives +1 between 1 and the high root
        assert rep.xi1(1.0) == 1 and rep.xi1(high) == 0
        total = rep.xi0.add(rep.xi1, merge_tol=1e-12)
        assert total.equals(rep.xi_full, merge_tol=1e-12)

    @pytest.mark.parametrize("hypothesis", ["henorm", "hbpi", "hadl"])
    def test_exact_splitting_random(self, hypothesis):
        for seed in range(6):
            gen = rng_for(90 + seed, 0)
            blk = block_instance(gen, hypothesis, int(gen.integers(2, 5)),
                                 int(gen.integers(2, 5)), float(gen.uniform(0.4, 2.0)))
            rep = splitting_check(blk, solve_angular(blk))
            assert rep.equal, f"seed {seed}: deviation {rep.max_deviation}"


class TestVanishing:
    def test_zero_coupling_no_violations(self):
        blk = BlockOperatorMatrix(np.diag([0.0, 1.0]), np.diag([3.0, 4.0]), np.zeros((2, 2)))
        assert vanishing_check(blk, solve_angular(blk)) == []

    def test_scalar_support_inside_half_gap(self):
        blk = BlockOperatorMatrix([[0.0]], [[1.0]], [[0.2]])
        q = solve_angular(blk)
        assert vanishing_check(blk, q, hypothesis="henorm") == []
        support = splitting_check(blk, q).xi0.support()
        assert support[0] >= -0.5 and support[1] <= 0.5

    @pytest.mark.parametrize("hypothesis", ["henorm", "hbpi", "hadl"])
    def test_random_instances_clean(self, hypothesis):
        for seed in (31, 32):
            gen = rng_for(seed, 0)
            blk = block_instance(gen, hypothesis, 4, 3, 1.0)
            q = solve_angular(blk)
            assert vanishing_check(blk, q, grid_points=2000) == []

    def test_common_gap_vanishing_along_homotopy(self):
        # an interval free of the spectrum for every coupling strength keeps
        # the shift function of (H_t, A) at zero
        gen = rng_for(33, 0)
        blk = block_instance(gen, "hadl", 3, 3, 1.2, coupling_scale=0.3)
        a = blk.diagonal_part
        lo, hi = None, None
        for t in np.linspace(0.0, 1.0, 8):
            ht = blk.scaled_coupling(t).h
            xi_t = counting_ssf(ht, a)
            from opshift.blockdiag import hypothesis_report

            g_lo, g_hi = hypothesis_report(blk).gap_interval
            margin = 0.25 * (g_hi - g_lo)
            for lam in np.linspace(g_lo + margin, g_hi - margin, 9):
                assert xi_t(lam) == 0
