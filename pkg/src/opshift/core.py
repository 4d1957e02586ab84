"""Dense complex substrate for self-adjoint spectral computations.

Hermitian operators carry an eagerly computed eigendecomposition
(ascending eigenvalues, unitary eigenvector frame, degeneracy clusters);
spectral projectors, resolvents, matrix functions and every norm used by
the solvers are built on top of it.  All arithmetic is complex double
precision; real symmetric input is promoted at construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ResolventSingularityError

__all__ = [
    "HermitianOperator",
    "SpectralDecomposition",
    "NormReport",
    "eig_hermitian",
    "resolvent",
    "spectral_projector",
    "ec_norm",
    "schatten_norm",
    "apply_function",
    "spec_distance",
    "norm_report",
]

# Default absolute tolerance for the self-adjointness check at construction.
HERMITICITY_TOL = 1e-12

# Orthonormality / reconstruction guard for eigendecompositions.
DECOMPOSITION_TOL = 1e-10


def _as_complex_matrix(entries, square=True):
    m = np.array(entries, dtype=np.complex128, copy=True)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got array of ndim {m.ndim}")
    if square and m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m


def _freeze(a):
    a.flags.writeable = False
    return a


def default_cluster_tol(eigenvalues):
    """Degeneracy tolerance 1e-9 * (1 + spectral radius)."""
    radius = float(np.max(np.abs(eigenvalues))) if len(eigenvalues) else 0.0
    return 1e-9 * (1.0 + radius)


class SpectralDecomposition:
    """Ascending eigenvalues with a unitary eigenvector frame.

    ``clusters`` groups indices whose eigenvalues coincide within the
    degeneracy tolerance; ``cluster_values`` holds one representative
    (mean) per cluster.
    """

    def __init__(self, eigenvalues, vectors, cluster_tol=None):
        lam = np.array(eigenvalues, dtype=np.float64, copy=True)
        vec = np.array(vectors, dtype=np.complex128, copy=True)
        if lam.ndim != 1 or vec.shape != (lam.size, lam.size):
            raise ValueError("eigenvalue/eigenvector shape mismatch")
        if np.any(np.diff(lam) < 0):
            order = np.argsort(lam, kind="stable")
            lam, vec = lam[order], vec[:, order]
        ortho = np.linalg.norm(vec.conj().T @ vec - np.eye(lam.size))
        if ortho > DECOMPOSITION_TOL:
            raise ValueError(f"eigenvector frame not unitary: deviation {ortho:.3e}")
        self.eigenvalues = _freeze(lam)
        self.vectors = _freeze(vec)
        self.cluster_tol = float(cluster_tol) if cluster_tol is not None else default_cluster_tol(lam)
        self.clusters = self._group(lam, self.cluster_tol)
        self.cluster_values = _freeze(np.array([lam[idx].mean() for idx in self.clusters]))

    @staticmethod
    def _group(lam, tol):
        clusters = []
        start = 0
        for k in range(1, lam.size + 1):
            if k == lam.size or lam[k] - lam[k - 1] > tol:
                clusters.append(np.arange(start, k))
                start = k
        return tuple(clusters)

    @property
    def dim(self):
        return self.eigenvalues.size

    def projector(self, indices):
        """Orthogonal projector onto the span of the selected eigenvectors."""
        cols = self.vectors[:, indices]
        return cols @ cols.conj().T

    def interval_projector(self, a, b):
        """Spectral projector for the half-open interval [a, b)."""
        mask = (self.eigenvalues >= a) & (self.eigenvalues < b)
        return self.projector(np.flatnonzero(mask))

    def reconstruct(self):
        return (self.vectors * self.eigenvalues) @ self.vectors.conj().T


class HermitianOperator:
    """Dense self-adjoint matrix with a cached spectral decomposition."""

    def __init__(self, entries, hermiticity_tol=HERMITICITY_TOL, cluster_tol=None):
        m = _as_complex_matrix(entries)
        deviation = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
        if deviation > hermiticity_tol:
            raise ValueError(
                f"matrix is not Hermitian: max |M - M*| = {deviation:.3e} "
                f"exceeds tolerance {hermiticity_tol:.1e}"
            )
        m = 0.5 * (m + m.conj().T)
        self.matrix = _freeze(m)
        self.dim = m.shape[0]
        lam, vec = np.linalg.eigh(self.matrix)
        # Decomposition is computed eagerly so instances are immutable and
        # safe to share across threads.
        self.decomposition = SpectralDecomposition(lam, vec, cluster_tol=cluster_tol)

    @classmethod
    def from_spectrum(cls, eigenvalues, frame=None, cluster_tol=None):
        """Assemble ``frame @ diag(eigenvalues) @ frame*`` (identity frame by default)."""
        lam = np.asarray(eigenvalues, dtype=np.float64)
        if frame is None:
            m = np.diag(lam).astype(np.complex128)
        else:
            frame = np.asarray(frame, dtype=np.complex128)
            m = (frame * lam) @ frame.conj().T
        return cls(m, hermiticity_tol=max(HERMITICITY_TOL, 1e-13 * (1 + np.abs(lam).max(initial=0.0))),
                   cluster_tol=cluster_tol)

    @property
    def eigenvalues(self):
        return self.decomposition.eigenvalues

    @property
    def spectral_radius(self):
        return float(np.max(np.abs(self.eigenvalues))) if self.dim else 0.0

    def __repr__(self):
        return f"HermitianOperator(dim={self.dim})"


def as_hermitian(op, **kwargs) -> HermitianOperator:
    """Coerce a matrix-like object to HermitianOperator (no-op if already one)."""
    if isinstance(op, HermitianOperator):
        return op
    return HermitianOperator(op, **kwargs)


def eig_hermitian(m: HermitianOperator) -> SpectralDecomposition:
    """Spectral decomposition of a Hermitian operator (cached on the instance)."""
    return as_hermitian(m).decomposition


def resolvent(m: HermitianOperator, z: complex, singularity_tol=1e-12) -> np.ndarray:
    """Inverse of (M - z I); z must keep distance > singularity_tol from the spectrum."""
    m = as_hermitian(m)
    gaps = np.abs(m.eigenvalues - z)
    k = int(np.argmin(gaps))
    if gaps[k] <= singularity_tol:
        raise ResolventSingularityError(
            f"shift z = {z} lies within {gaps[k]:.3e} of eigenvalue {m.eigenvalues[k]!r}"
        )
    shifted = m.matrix - z * np.eye(m.dim)
    return np.linalg.solve(shifted, np.eye(m.dim, dtype=np.complex128))


def spectral_projector(decomposition: SpectralDecomposition, interval) -> np.ndarray:
    """Spectral projector for a half-open interval [a, b)."""
    a, b = interval
    return decomposition.interval_projector(a, b)


def ec_norm(y, decomposition: SpectralDecomposition) -> float:
    """Norm over the finest spectral partition of the reference operator.

    Equals sqrt(sum over degeneracy clusters c of ||P_c Y||^2) with P_c the
    cluster projectors of ``decomposition`` acting on the rows of Y.  Any
    coarser partition gives a smaller or equal sum, so the finest partition
    evaluates the supremum over all partitions in closed form.
    """
    y = _as_complex_matrix(y, square=False)
    if y.shape[0] != decomposition.dim:
        raise ValueError(
            f"row dimension {y.shape[0]} does not match decomposition dimension {decomposition.dim}"
        )
    total = 0.0
    for idx in decomposition.clusters:
        # ||P_c Y|| = ||V_c* Y|| because the eigenvector columns are orthonormal.
        block = decomposition.vectors[:, idx].conj().T @ y
        total += np.linalg.norm(block, 2) ** 2
    return float(np.sqrt(total))


def schatten_norm(y, p) -> float:
    """p-norm of the singular values; p = inf gives the operator norm."""
    if not (p == np.inf or p >= 1):
        raise ValueError(f"Schatten exponent must satisfy p >= 1, got {p}")
    y = _as_complex_matrix(y, square=False)
    s = np.linalg.svd(y, compute_uv=False)
    if p == np.inf:
        return float(s[0]) if s.size else 0.0
    return float(np.sum(s ** p) ** (1.0 / p))


def apply_function(m: HermitianOperator, f) -> np.ndarray:
    """Spectral function sum f(lambda_k) P_k for a scalar function f."""
    m = as_hermitian(m)
    dec = m.decomposition
    values = np.array([complex(f(lam)) for lam in dec.eigenvalues])
    if not np.all(np.isfinite(values)):
        bad = dec.eigenvalues[~np.isfinite(values)]
        raise ValueError(f"function not finite at eigenvalue(s) {bad}")
    return (dec.vectors * values) @ dec.vectors.conj().T


def spec_distance(a: HermitianOperator, c: HermitianOperator) -> float:
    """Minimum distance between the spectra of two Hermitian operators."""
    alpha = as_hermitian(a).eigenvalues
    gamma = as_hermitian(c).eigenvalues
    return float(np.min(np.abs(alpha[:, None] - gamma[None, :])))


@dataclass(frozen=True)
class NormReport:
    """Operator, Hilbert-Schmidt and trace norms, plus the spectral-partition
    norm when a reference decomposition was supplied."""

    operator_norm: float
    hilbert_schmidt: float
    trace_norm: float
    ec_norm: float | None = None


def norm_report(y, decomposition: SpectralDecomposition | None = None) -> NormReport:
    y = _as_complex_matrix(y, square=False)
    return NormReport(
        operator_norm=schatten_norm(y, np.inf),
        hilbert_schmidt=schatten_norm(y, 2),
        trace_norm=schatten_norm(y, 1),
        ec_norm=ec_norm(y, decomposition) if decomposition is not None else None,
    )
