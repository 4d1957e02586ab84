import numpy as np
import pytest

from opshift.core import (
    HermitianOperator,
    apply_function,
    ec_norm,
    eig_hermitian,
    norm_report,
    resolvent,
    schatten_norm,
    spec_distance,
    spectral_projector,
)
from opshift.errors import ResolventSingularityError

from conftest import random_complex, random_hermitian


class TestHermitianOperator:
    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError, match="not Hermitian"):
            HermitianOperator([[0.0, 1.0], [0.0, 0.0]])

    def test_accepts_scalar_and_real_symmetric(self):
        assert HermitianOperator(2.0).dim == 1
        m = HermitianOperator([[1.0, 2.0], [2.0, -1.0]])
        assert m.matrix.dtype == np.complex128

    def test_tolerance_is_absolute(self):
        almost = np.array([[0.0, 1.0 + 5e-13j], [1.0, 0.0]])
        HermitianOperator(almost)  # within 1e-12
        with pytest.raises(ValueError):
            HermitianOperator(np.array([[0.0, 1.0 + 5e-11j], [1.0, 0.0]]))

    def test_matrices_frozen(self, rng):
        m = random_hermitian(rng, 4)
        with pytest.raises(ValueError):
            m.matrix[0, 0] = 5.0


class TestEigDecomposition:
    def test_identity_single_cluster(self):
        dec = eig_hermitian(HermitianOperator(np.eye(3)))
        assert np.allclose(dec.eigenvalues, 1.0)
        assert len(dec.clusters) == 1

    def test_diagonal_sorted(self):
        dec = eig_hermitian(HermitianOperator(np.diag([2.0, -1.0])))
        assert np.allclose(dec.eigenvalues, [-1.0, 2.0])
        assert len(dec.clusters) == 2

    def test_reconstruction_random(self, rng):
        m = random_hermitian(rng, 8)
        dec = m.decomposition
        err = np.linalg.norm(dec.reconstruct() - m.matrix)
        assert err <= 1e-10 * (1.0 + np.linalg.norm(m.matrix))

    def test_projector_completeness(self, rng):
        dec = random_hermitian(rng, 6).decomposition
        total = sum(dec.projector(idx) for idx in dec.clusters)
        assert np.linalg.norm(total - np.eye(6)) <= 1e-10

    def test_cluster_projectors_orthogonal(self, rng):
        dec = random_hermitian(rng, 6).decomposition
        for i, ci in enumerate(dec.clusters):
            for j, cj in enumerate(dec.clusters):
                if i != j:
                    prod = dec.projector(ci) @ dec.projector(cj)
                    assert np.linalg.norm(prod) <= 1e-10

    def test_degenerate_spectrum_clusters(self):
        m = HermitianOperator(np.diag([1.0, 1.0, 2.0]))
        assert [len(c) for c in m.decomposition.clusters] == [2, 1]


class TestResolvent:
    def test_scalar(self):
        r = resolvent(HermitianOperator(0.0), 1j)
        assert np.allclose(r, 1.0 / (0.0 - 1j))

    def test_diagonal(self):
        r = resolvent(HermitianOperator(np.diag([1.0, 2.0])), 0.0)
        assert np.allclose(r, np.diag([1.0, 0.5]))

    def test_multiply_back(self, rng):
        m = random_hermitian(rng, 6)
        z = 3.0 + 4.0j
        r = resolvent(m, z)
        residual = np.linalg.norm((m.matrix - z * np.eye(6)) @ r - np.eye(6))
        assert residual <= 1e-10

    def test_singularity_names_eigenvalue(self, rng):
        m = HermitianOperator(np.diag([1.0, 2.0]))
        with pytest.raises(ResolventSingularityError, match="2.0"):
            resolvent(m, 2.0 + 1e-14j)


class TestSpectralProjector:
    def test_full_interval_is_identity(self, rng):
        dec = random_hermitian(rng, 5).decomposition
        p = spectral_projector(dec, (-100.0, 100.0))
        assert np.allclose(p, np.eye(5))

    def test_empty_interval_is_zero(self, rng):
        dec = random_hermitian(rng, 5).decomposition
        assert np.allclose(spectral_projector(dec, (50.0, 60.0)), 0.0)

    def test_half_open_membership(self):
        dec = HermitianOperator(np.diag([0.0, 1.0, 2.0])).decomposition
        p = spectral_projector(dec, (0.5, 1.5))
        assert np.allclose(p, np.diag([0.0, 1.0, 0.0]))
        # [a, b) includes a, excludes b
        p2 = spectral_projector(dec, (1.0, 2.0))
        assert np.allclose(p2, np.diag([0.0, 1.0, 0.0]))

    def test_projector_properties(self, rng):
        dec = random_hermitian(rng, 7).decomposition
        p = spectral_projector(dec, (-1.0, 1.0))
        assert np.linalg.norm(p @ p - p) <= 1e-10
        assert np.linalg.norm(p - p.conj().T) <= 1e-10
        rank = int(round(np.trace(p).real))
        assert rank == int(np.sum((dec.eigenvalues >= -1.0) & (dec.eigenvalues < 1.0)))

    def test_partition_of_line_sums_to_identity(self, rng):
        dec = random_hermitian(rng, 6).decomposition
        cuts = [-np.inf, -1.0, 0.3, 1.7, np.inf]
        total = sum(
            spectral_projector(dec, (a, b)) for a, b in zip(cuts, cuts[1:])
        )
        assert np.linalg.norm(total - np.eye(6)) <= 1e-10


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1 :]
        yield [[first]] + part


def _ec_norm_partition_oracle(y, dec):
    """Exhaustive supremum over all partitions of the distinct eigenvalues."""
    best = 0.0
    for part in _set_partitions(list(range(len(dec.clusters)))):
        total = 0.0
        for cell in part:
            idx = np.concatenate([dec.clusters[c] for c in cell])
            total += np.linalg.norm(dec.projector(idx) @ y, 2) ** 2
        best = max(best, total)
    return float(np.sqrt(best))


class TestEcNorm:
    def test_zero_operator(self, rng):
        dec = random_hermitian(rng, 3).decomposition
        assert ec_norm(np.zeros((3, 2)), dec) == 0.0

    def test_degenerate_single_cluster(self):
        dec = HermitianOperator(np.diag([1.0, 1.0])).decomposition
        assert ec_norm(np.eye(2), dec) == pytest.approx(1.0)

    def test_two_point_spectrum(self):
        dec = HermitianOperator(np.diag([0.0, 1.0])).decomposition
        assert ec_norm(np.eye(2), dec) == pytest.approx(np.sqrt(2.0))

    def test_dimension_mismatch(self, rng):
        dec = random_hermitian(rng, 3).decomposition
        with pytest.raises(ValueError, match="row dimension"):
            ec_norm(np.zeros((4, 3)), dec)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_finest_partition_attains_supremum(self, rng, n):
        for _ in range(10):
            dec = random_hermitian(rng, n).decomposition
            y = random_complex(rng, n, n)
            direct = ec_norm(y, dec)
            oracle = _ec_norm_partition_oracle(y, dec)
            assert direct == pytest.approx(oracle, abs=1e-12)

    def test_coarser_partitions_never_exceed(self, rng):
        dec = random_hermitian(rng, 4).decomposition
        y = random_complex(rng, 4, 4)
        finest = ec_norm(y, dec)
        for part in _set_partitions(list(range(len(dec.clusters)))):
            total = 0.0
            for cell in part:
                idx = np.concatenate([dec.clusters[c] for c in cell])
                total += np.linalg.norm(dec.projector(idx) @ y, 2) ** 2
            assert np.sqrt(total) <= finest + 1e-12

    def test_norm_chain(self, rng):
        # operator norm <= partition norm <= Hilbert-Schmidt norm
        for _ in range(200):
            n = int(rng.integers(2, 6))
            dec = random_hermitian(rng, n).decomposition
            y = random_complex(rng, n, int(rng.integers(1, 5)))
            op = schatten_norm(y, np.inf)
            ec = ec_norm(y, dec)
            hs = schatten_norm(y, 2)
            assert op <= ec + 1e-12
            assert ec <= hs + 1e-12


class TestSchattenNorm:
    def test_rank_one_all_p(self, rng):
        u = random_complex(rng, 4, 1)
        v = random_complex(rng, 3, 1)
        u /= np.linalg.norm(u)
        v /= np.linalg.norm(v)
        y = u @ v.conj().T
        for p in (1, 1.5, 2, 7, np.inf):
            assert schatten_norm(y, p) == pytest.approx(1.0)

    def test_identity_hs(self):
        assert schatten_norm(np.eye(5), 2) == pytest.approx(np.sqrt(5))

    def test_monotone_in_p(self, rng):
        y = random_complex(rng, 5, 3)
        assert schatten_norm(y, np.inf) <= schatten_norm(y, 2) <= schatten_norm(y, 1)

    def test_rejects_p_below_one(self, rng):
        with pytest.raises(ValueError):
            schatten_norm(np.eye(2), 0.5)


class TestApplyFunction:
    def test_identity_function(self, rng):
        m = random_hermitian(rng, 5)
        assert np.allclose(apply_function(m, lambda x: x), m.matrix)

    def test_exponential(self):
        m = HermitianOperator(np.diag([0.0, np.pi]))
        out = apply_function(m, lambda lam: np.exp(1j * lam))
        assert np.allclose(out, np.diag([1.0, -1.0]))

    def test_trace_equals_eigenvalue_sum(self, rng):
        m = random_hermitian(rng, 6)
        bump = lambda lam: np.exp(-lam**2)
        out = apply_function(m, bump)
        assert np.trace(out) == pytest.approx(sum(bump(l) for l in m.eigenvalues))

    def test_composition(self, rng):
        m = random_hermitian(rng, 5)
        f = lambda x: x**2 + 1.0
        g = lambda x: np.sin(x)
        direct = apply_function(m, lambda x: f(g(x)))
        pre_mapped = apply_function(m, g)
        # applying f to the pre-mapped eigenvalues matches the composition
        dec = m.decomposition
        composed = (dec.vectors * f(g(dec.eigenvalues))) @ dec.vectors.conj().T
        assert np.allclose(direct, composed, atol=1e-12)
        assert np.allclose(pre_mapped @ pre_mapped + np.eye(5), direct, atol=1e-10)

    def test_rejects_nonfinite(self):
        m = HermitianOperator(np.diag([0.0, 1.0]))
        with pytest.raises(ValueError, match="not finite"):
            apply_function(m, lambda lam: np.inf if lam == 0 else 1.0 / lam)


class TestSpecDistance:
    def test_simple(self):
        assert spec_distance(HermitianOperator(0.0), HermitianOperator(1.0)) == 1.0

    def test_identical_operators(self, rng):
        m = random_hermitian(rng, 4)
        assert spec_distance(m, m) == 0.0

    def test_pairwise_minimum(self):
        a = HermitianOperator(np.diag([0.0, 5.0]))
        c = HermitianOperator(2.5)
        assert spec_distance(a, c) == pytest.approx(2.5)


class TestNormReport:
    def test_chain_in_report(self, rng):
        n = 5
        dec = random_hermitian(rng, n).decomposition
        y = random_complex(rng, n, n)
        rep = norm_report(y, dec)
        assert rep.operator_norm <= rep.ec_norm <= rep.hilbert_schmidt <= rep.trace_norm + 1e-12

    def test_without_reference(self, rng):
        rep = norm_report(random_complex(rng, 3, 3))
        assert rep.ec_norm is None
