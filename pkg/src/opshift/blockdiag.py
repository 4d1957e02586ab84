"""Angular operators and block diagonalization of 2x2 Hermitian block matrices.

Given H = [[A0, B01], [B10, A1]] with B10 = B01*, a skew block operator
Q = [[0, -Q10*], [Q10, 0]] whose graph subspaces reduce H is computed by
routing to the quadratic-equation solvers (or directly from spectral
subspaces when the diagonal spectra are linearly ordered).  I + Q then
block-diagonalizes H by similarity, and its polar factor does so unitarily.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .core import (
    HermitianOperator,
    as_hermitian,
    ec_norm,
    schatten_norm,
    spec_distance,
    _as_complex_matrix,
    _freeze,
)
from .errors import HypothesisError
from .riccati import (
    IterationOptions,
    RiccatiProblem,
    iterate_fourier,
    iterate_stieltjes,
    riccati_residual,
)
from . import matio

__all__ = [
    "BlockOperatorMatrix",
    "AngularOperator",
    "HypothesisReport",
    "DiagonalizationResult",
    "HomotopyReport",
    "hypothesis_report",
    "solve_angular",
    "similarity_diagonalize",
    "unitary_diagonalize",
    "adl_projections",
    "graph_projector",
    "homotopy_scan",
    "schatten_inheritance_check",
]


class BlockOperatorMatrix:
    """Hermitian 2x2 block matrix (A0, A1, B01) with B10 = B01*."""

    def __init__(self, a0, a1, b01):
        self.a0 = as_hermitian(a0)
        self.a1 = as_hermitian(a1)
        b01 = _as_complex_matrix(b01, square=False)
        if b01.shape != (self.a0.dim, self.a1.dim):
            raise ValueError(f"B01 must be {self.a0.dim}x{self.a1.dim}, got {b01.shape}")
        self.b01 = _freeze(b01)
        n0, n1 = self.a0.dim, self.a1.dim
        h = np.zeros((n0 + n1, n0 + n1), dtype=np.complex128)
        h[:n0, :n0] = self.a0.matrix
        h[n0:, n0:] = self.a1.matrix
        h[:n0, n0:] = b01
        h[n0:, :n0] = b01.conj().T
        self.h = HermitianOperator(h)

    @property
    def b10(self):
        return self.b01.conj().T

    @property
    def dims(self):
        return (self.a0.dim, self.a1.dim)

    @property
    def diagonal_part(self):
        n0, n1 = self.dims
        a = np.zeros((n0 + n1, n0 + n1), dtype=np.complex128)
        a[:n0, :n0] = self.a0.matrix
        a[n0:, n0:] = self.a1.matrix
        return HermitianOperator(a)

    def scaled_coupling(self, t):
        return BlockOperatorMatrix(self.a0, self.a1, t * self.b01)

    def save(self, directory, stem="block"):
        os.makedirs(directory, exist_ok=True)
        files = {}
        for role, mat, herm in (("A0", self.a0, True), ("A1", self.a1, True), ("B01", self.b01, False)):
            name = f"{stem}_{role}.mtx"
            matio.write_matrix(os.path.join(directory, name), mat, hermitian=herm)
            files[role] = name
        with open(os.path.join(directory, f"{stem}_manifest.json"), "w") as f:
            json.dump({"kind": "block", "files": files}, f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, directory, stem="block"):
        with open(os.path.join(directory, f"{stem}_manifest.json")) as f:
            files = json.load(f)["files"]
        a0 = matio.read_matrix(os.path.join(directory, files["A0"]))
        a1 = matio.read_matrix(os.path.join(directory, files["A1"]))
        b01 = matio.read_matrix(os.path.join(directory, files["B01"]))
        return cls(a0, a1, b01)


class AngularOperator:
    """Off-diagonal skew block Q with Q01 = -Q10*; I + Q is always invertible."""

    def __init__(self, q10):
        self.q10 = _freeze(_as_complex_matrix(q10, square=False))

    @property
    def q01(self):
        return -self.q10.conj().T

    @property
    def dims(self):
        n1, n0 = self.q10.shape
        return (n0, n1)

    def assembled(self):
        n0, n1 = self.dims
        q = np.zeros((n0 + n1, n0 + n1), dtype=np.complex128)
        q[:n0, n0:] = self.q01
        q[n0:, :n0] = self.q10
        return q

    def transformation(self):
        """V = I + Q."""
        return np.eye(sum(self.dims), dtype=np.complex128) + self.assembled()

    def residual(self, block: BlockOperatorMatrix) -> float:
        """Frobenius residual of Q10 A0 - A1 Q10 + Q10 B01 Q10 = B10."""
        q = self.q10
        r = q @ block.a0.matrix - block.a1.matrix @ q + q @ block.b01 @ q - block.b10
        return float(np.linalg.norm(r))


@dataclass(frozen=True)
class HypothesisReport:
    """Which solvability conditions the block data satisfies."""

    d: float
    henorm_holds: bool
    hbpi_holds: bool
    hadl_holds: bool
    gap_interval: tuple | None
    b_norm: float
    ec_norm_a0: float
    ec_norm_a1: float
    hadl_swapped: bool = False

    def any_holds(self):
        return self.henorm_holds or self.hbpi_holds or self.hadl_holds


def hypothesis_report(block: BlockOperatorMatrix) -> HypothesisReport:
    d = spec_distance(block.a0, block.a1)
    b_norm = schatten_norm(block.b01, np.inf)
    # spectral-partition norms of the coupling on either channel
    ec0 = ec_norm(block.b01, block.a0.decomposition)
    ec1 = ec_norm(block.b10, block.a1.decomposition)
    henorm = d > 0 and b_norm * min(ec0, ec1) < d * d / 4.0
    hbpi = d > 0 and b_norm < d / math.pi
    a0_max, a0_min = float(block.a0.eigenvalues.max()), float(block.a0.eigenvalues.min())
    a1_max, a1_min = float(block.a1.eigenvalues.max()), float(block.a1.eigenvalues.min())
    if a0_max < a1_min:
        hadl, interval, swapped = True, (a0_max, a1_min), False
    elif a1_max < a0_min:
        hadl, interval, swapped = True, (a1_max, a0_min), True
    else:
        hadl, interval, swapped = False, None, False
    return HypothesisReport(
        d=d, henorm_holds=henorm, hbpi_holds=hbpi, hadl_holds=hadl,
        gap_interval=interval, b_norm=b_norm, ec_norm_a0=ec0, ec_norm_a1=ec1,
        hadl_swapped=swapped,
    )


def _riccati_for_block(block):
    """Quadratic problem for Q10: A = A0, C = A1, B = B01, D = B10."""
    return RiccatiProblem(block.a0, block.a1, block.b01, block.b10)


def _riccati_for_block_dual(block):
    """Quadratic problem for Q01: A = A1, C = A0, B = B10, D = B01."""
    return RiccatiProblem(block.a1, block.a0, block.b10, block.b01)


def _newton_polish(q10, block, sweeps=3, tol_scale=1e-14):
    """Newton refinement of the quadratic-block equation via dense linearization.

    Each sweep solves D(A0 + B01 Q) - (A1 - Q B01) D = -R(Q) exactly; the
    iterate stays within O(residual) of its start, so certified-ball
    membership is preserved.
    """
    q = np.array(q10, dtype=np.complex128)
    n1, n0 = q.shape
    scale = 1.0 + float(np.linalg.norm(block.h.matrix))
    for _ in range(sweeps):
        r = q @ block.a0.matrix - block.a1.matrix @ q + q @ block.b01 @ q - block.b10
        if np.linalg.norm(r) <= tol_scale * scale:
            break
        m_right = block.a0.matrix + block.b01 @ q
        m_left = block.a1.matrix - q @ block.b01
        system = np.kron(np.eye(n1), m_right.T) - np.kron(m_left, np.eye(n0))
        delta = np.linalg.solve(system, -r.reshape(-1)).reshape(n1, n0)
        q = q + delta
    return q


def _spectral_angular(block, report):
    """Angular block read off the spectral subspace below the ordered gap."""
    lo, hi = report.gap_interval
    n0, n1 = block.dims
    low_dim = n1 if report.hadl_swapped else n0
    lam = block.h.eigenvalues
    # (lo, hi) is free of spec(H), so the midpoint splits the two clusters
    count = int(np.sum(lam <= 0.5 * (lo + hi)))
    if count != low_dim:
        raise HypothesisError(
            f"spectral subspace below the gap has dimension {count}, expected {low_dim}"
        )
    frame = block.h.decomposition.vectors[:, :count]
    if report.hadl_swapped:
        top, bottom = frame[:n0, :], frame[n0:, :]
        # low channel is H1: columns parameterize x1 + Q01 x1
        return AngularOperator((-(top @ np.linalg.inv(bottom))).conj().T)
    top, bottom = frame[:n0, :], frame[n0:, :]
    return AngularOperator(bottom @ np.linalg.inv(top))


def solve_angular(block: BlockOperatorMatrix, method: str = "auto",
                  opts: IterationOptions | None = None, override: bool = False,
                  polish: bool = True) -> AngularOperator:
    """Skew angular block whose graph subspaces reduce the assembled matrix.

    Routing under ``auto``: the spectral-partition condition picks the
    spectral-sum iteration on the channel with the smaller partition norm,
    the plain-norm condition picks the time-kernel iteration, and the
    ordered-spectra condition reads the answer off the spectral subspaces.
    A Newton sweep polishes the iterative fixed points to machine residual.
    """
    report = hypothesis_report(block)
    if method == "auto":
        if report.henorm_holds:
            method = "stieltjes"
        elif report.hbpi_holds:
            method = "fourier"
        elif report.hadl_holds:
            method = "spectral"
        elif override:
            method = "stieltjes"
        else:
            raise HypothesisError(
                "no solvability hypothesis holds for this block "
                f"(d={report.d:.4g}, |B01|={report.b_norm:.4g}, "
                f"partition norms {report.ec_norm_a0:.4g}/{report.ec_norm_a1:.4g}); "
                "pass override=True to iterate anyway"
            )

    if method == "spectral":
        if not report.hadl_holds:
            raise HypothesisError("spectral construction needs linearly ordered diagonal spectra")
        angular = _spectral_angular(block, report)
    elif method == "stieltjes":
        if report.ec_norm_a1 <= report.ec_norm_a0:
            problem = _riccati_for_block(block)
            q, _ = iterate_stieltjes(problem, opts=opts,
                                     override_radius=math.inf if override and not report.henorm_holds else None)
            angular = AngularOperator(q)
        else:
            problem = _riccati_for_block_dual(block)
            k, _ = iterate_stieltjes(problem, opts=opts,
                                     override_radius=math.inf if override and not report.henorm_holds else None)
            angular = AngularOperator(-k.conj().T)
    elif method == "fourier":
        problem = _riccati_for_block(block)
        q, _ = iterate_fourier(problem, opts=opts, override=override and not report.hbpi_holds)
        angular = AngularOperator(q)
    else:
        raise ValueError(f"unknown method {method!r}")

    if polish:
        angular = AngularOperator(_newton_polish(angular.q10, block))
    return angular


def graph_projector(q: AngularOperator) -> np.ndarray:
    """Orthogonal projector onto the graph subspace {x0 + Q10 x0}."""
    n0, _ = q.dims
    w = np.vstack([np.eye(n0, dtype=np.complex128), q.q10])
    return w @ np.linalg.solve(w.conj().T @ w, w.conj().T)


@dataclass
class DiagonalizationResult:
    """Similarity (and optionally unitary) block diagonalization of H."""

    v: np.ndarray
    similar0: np.ndarray              # A0 + B01 Q10
    similar1: np.ndarray              # A1 + B10 Q01
    spectrum0: np.ndarray
    spectrum1: np.ndarray
    off_diagonal_residual: float
    diagonal_block_residual: float
    u: np.ndarray | None = None
    h0: HermitianOperator | None = None
    h1: HermitianOperator | None = None
    unitarity_residual: float | None = None
    conjugation_residual: float | None = None
    structure_residual: float | None = None

    def to_record(self, block=None):
        """Flat structured record: residuals, spectra, hypothesis booleans."""
        record = {
            "spectrum0": self.spectrum0.tolist(),
            "spectrum1": self.spectrum1.tolist(),
            "off_diagonal_residual": self.off_diagonal_residual,
            "diagonal_block_residual": self.diagonal_block_residual,
            "unitarity_residual": self.unitarity_residual,
            "conjugation_residual": self.conjugation_residual,
            "structure_residual": self.structure_residual,
            "unitary_stage": self.u is not None,
        }
        if block is not None:
            rep = hypothesis_report(block)
            record["hypotheses"] = {
                "henorm": rep.henorm_holds,
                "hbpi": rep.hbpi_holds,
                "hadl": rep.hadl_holds,
                "gap": rep.d,
            }
        return record


def _real_spectrum(matrix):
    ev = np.linalg.eigvals(matrix)
    return np.sort(ev.real + 0.0)


def _check_angular(block, q, residual_tol):
    res = q.residual(block)
    scale = 1.0 + float(np.linalg.norm(block.b10))
    if res > residual_tol * scale:
        raise ValueError(
            f"angular block does not solve the quadratic equation: residual {res:.3e}"
        )


def similarity_diagonalize(block: BlockOperatorMatrix, q: AngularOperator,
                           residual_tol: float = 1e-8) -> DiagonalizationResult:
    """Conjugate H by V = I + Q; off-diagonal blocks vanish to solver accuracy."""
    _check_angular(block, q, residual_tol)
    n0, n1 = block.dims
    v = q.transformation()
    conj = np.linalg.solve(v, block.h.matrix @ v)
    similar0 = block.a0.matrix + block.b01 @ q.q10
    similar1 = block.a1.matrix + block.b10 @ q.q01
    off = math.hypot(np.linalg.norm(conj[:n0, n0:]), np.linalg.norm(conj[n0:, :n0]))
    diag_dev = math.hypot(
        np.linalg.norm(conj[:n0, :n0] - similar0), np.linalg.norm(conj[n0:, n0:] - similar1)
    )
    return DiagonalizationResult(
        v=v,
        similar0=similar0,
        similar1=similar1,
        spectrum0=_real_spectrum(similar0),
        spectrum1=_real_spectrum(similar1),
        off_diagonal_residual=off,
        diagonal_block_residual=diag_dev,
    )


def _hermitian_sqrt(matrix, power=0.5):
    lam, vec = np.linalg.eigh(matrix)
    return (vec * lam ** power) @ vec.conj().T


def unitary_diagonalize(block: BlockOperatorMatrix, q: AngularOperator,
                        residual_tol: float = 1e-8) -> DiagonalizationResult:
    """Conjugate H by the unitary polar factor U of V = I + Q.

    V is normal with V*V = diag(I + Q10* Q10, I + Q10 Q10*), so |V| is block
    diagonal and U = V |V|^{-1}; the diagonal blocks of U* H U are the
    Hermitian representatives S_i^{1/2} (A_i + B_ij Q_ji) S_i^{-1/2}.
    """
    result = similarity_diagonalize(block, q, residual_tol)
    n0, n1 = block.dims
    s0 = np.eye(n0) + q.q10.conj().T @ q.q10
    s1 = np.eye(n1) + q.q10 @ q.q10.conj().T
    v = result.v
    # block structure of V V*: deviation from diag(S0, S1) is pure rounding
    vvs = v @ v.conj().T
    structure = math.hypot(
        np.linalg.norm(vvs[:n0, :n0] - s0),
        np.linalg.norm(vvs[n0:, n0:] - s1),
    )
    structure = math.hypot(structure, np.linalg.norm(vvs[:n0, n0:]))
    s0_half, s0_inv_half = _hermitian_sqrt(s0), _hermitian_sqrt(s0, -0.5)
    s1_half, s1_inv_half = _hermitian_sqrt(s1), _hermitian_sqrt(s1, -0.5)
    inv_half = np.zeros_like(v)
    inv_half[:n0, :n0] = s0_inv_half
    inv_half[n0:, n0:] = s1_inv_half
    u = v @ inv_half
    unitarity = float(np.linalg.norm(u.conj().T @ u - np.eye(n0 + n1)))
    conj = u.conj().T @ block.h.matrix @ u
    h0_raw = s0_half @ result.similar0 @ s0_inv_half
    h1_raw = s1_half @ result.similar1 @ s1_inv_half
    conj_dev = math.hypot(
        np.linalg.norm(conj[:n0, :n0] - h0_raw), np.linalg.norm(conj[n0:, n0:] - h1_raw)
    )
    off = math.hypot(np.linalg.norm(conj[:n0, n0:]), np.linalg.norm(conj[n0:, :n0]))
    scale = 1.0 + float(np.linalg.norm(block.h.matrix))
    tol = 1e-10 * scale
    h0 = HermitianOperator(h0_raw, hermiticity_tol=tol)
    h1 = HermitianOperator(h1_raw, hermiticity_tol=tol)
    result.u = u
    result.h0 = h0
    result.h1 = h1
    result.unitarity_residual = unitarity
    result.conjugation_residual = conj_dev
    result.structure_residual = structure
    result.off_diagonal_residual = max(result.off_diagonal_residual, off)
    return result


def adl_projections(block: BlockOperatorMatrix, q: AngularOperator,
                    check_tol: float = 1e-10):
    """Spectral projectors of H onto (-inf, a0] and [a1, +inf) in closed form.

    Requires linearly ordered diagonal spectra.  The block formulas are
    verified to be orthogonal projectors summing to the identity and to
    agree with the graph-subspace projector built from Q.
    """
    report = hypothesis_report(block)
    if not report.hadl_holds:
        raise HypothesisError("projection formulas need linearly ordered diagonal spectra")
    if report.hadl_swapped:
        swapped = BlockOperatorMatrix(block.a1, block.a0, block.b10)
        p_low_s, p_high_s = adl_projections(swapped, AngularOperator(q.q01), check_tol)
        n0, n1 = block.dims
        perm = np.zeros((n0 + n1, n0 + n1))
        perm[:n1, n0:] = np.eye(n1)
        perm[n1:, :n0] = np.eye(n0)
        return perm.T @ p_low_s @ perm, perm.T @ p_high_s @ perm

    n0, n1 = block.dims
    qq = q.q01  # n0 x n1
    s_low = np.linalg.inv(np.eye(n0) + qq @ qq.conj().T)
    s_high = np.linalg.inv(np.eye(n1) + qq.conj().T @ qq)
    p_low = np.block([[s_low, -s_low @ qq], [-qq.conj().T @ s_low, qq.conj().T @ s_low @ qq]])
    p_high = np.block([[qq @ s_high @ qq.conj().T, qq @ s_high], [s_high @ qq.conj().T, s_high]])
    eye = np.eye(n0 + n1)
    for name, proj in (("low", p_low), ("high", p_high)):
        dev = max(
            float(np.linalg.norm(proj @ proj - proj)),
            float(np.linalg.norm(proj - proj.conj().T)),
        )
        if dev > check_tol:
            raise ValueError(f"{name} projection formula not an orthogonal projector: {dev:.3e}")
    if np.linalg.norm(p_low + p_high - eye) > check_tol:
        raise ValueError("projection formulas do not sum to the identity")
    if np.linalg.norm(p_low - graph_projector(q)) > check_tol:
        raise ValueError("projection disagrees with the graph-subspace parameterization")
    return p_low, p_high


@dataclass
class HomotopyReport:
    ts: np.ndarray
    q_norms: np.ndarray
    steps: np.ndarray
    max_step: float
    hypothesis: str
    margins: np.ndarray
    min_margin: float


def _vanishing_margin(block, q, hypothesis, report):
    """Distance by which the shifted spectra stay inside their allowed zones."""
    margins = []
    for a_i, similar in (
        (block.a0, block.a0.matrix + block.b01 @ q.q10),
        (block.a1, block.a1.matrix + block.b10 @ q.q01),
    ):
        ev = _real_spectrum(similar)
        dist = np.min(np.abs(ev[:, None] - a_i.eigenvalues[None, :]), axis=1)
        if hypothesis == "henorm":
            margins.append(report.d / 2.0 - float(dist.max()))
        elif hypothesis == "hbpi":
            margins.append(report.d / math.pi - float(dist.max()))
        else:
            lo, hi = report.gap_interval
            low_first = not report.hadl_swapped
            if (a_i is block.a0) == low_first:
                margins.append(lo - float(ev.max()))
            else:
                margins.append(float(ev.min()) - hi)
    return min(margins)


def homotopy_scan(block: BlockOperatorMatrix, t_count: int,
                  opts: IterationOptions | None = None) -> HomotopyReport:
    """Solve the angular block along H_t = A + t B on a uniform t grid.

    Records the norm path, the largest step between consecutive angular
    operators (shrinks linearly under grid refinement), and the smallest
    margin by which the shifted spectra stay clear of the vanishing zones.
    """
    if t_count < 2:
        raise ValueError("need at least two homotopy samples")
    base = hypothesis_report(block)
    if base.henorm_holds:
        hypothesis = "henorm"
    elif base.hbpi_holds:
        hypothesis = "hbpi"
    elif base.hadl_holds:
        hypothesis = "hadl"
    else:
        raise HypothesisError("no hypothesis holds at t = 1")
    ts = np.linspace(0.0, 1.0, t_count)
    n0, n1 = block.dims
    qs = []
    margins = []
    for t in ts:
        scaled = block.scaled_coupling(t)
        rep_t = hypothesis_report(scaled)
        if not getattr(rep_t, f"{hypothesis}_holds"):
            raise HypothesisError(f"hypothesis {hypothesis} fails at t = {t}")
        if t == 0.0:
            q_t = AngularOperator(np.zeros((n1, n0), dtype=np.complex128))
        else:
            q_t = solve_angular(scaled, method="auto", opts=opts)
        qs.append(q_t)
        margins.append(_vanishing_margin(scaled, q_t, hypothesis, base))
    norms = np.array([schatten_norm(q.q10, np.inf) for q in qs])
    steps = np.array(
        [schatten_norm(b.q10 - a.q10, np.inf) for a, b in zip(qs, qs[1:])]
    )
    return HomotopyReport(
        ts=ts, q_norms=norms, steps=steps,
        max_step=float(steps.max()) if steps.size else 0.0,
        hypothesis=hypothesis, margins=np.array(margins),
        min_margin=float(np.min(margins)),
    )


def schatten_inheritance_check(block: BlockOperatorMatrix, q: AngularOperator, p) -> float:
    """Margin of |Q_ji|_p <= (pi / 2d) |B_ji - Q_ji B_ij Q_ji|_p (both channels)."""
    d = spec_distance(block.a0, block.a1)
    if d <= 0:
        raise ValueError("diagonal spectra must be separated")
    factor = math.pi / (2.0 * d)
    rhs10 = block.b10 - q.q10 @ block.b01 @ q.q10
    rhs01 = block.b01 - q.q01 @ block.b10 @ q.q01
    margin10 = factor * schatten_norm(rhs10, p) - schatten_norm(q.q10, p)
    margin01 = factor * schatten_norm(rhs01, p) - schatten_norm(q.q01, p)
    return float(min(margin10, margin01))
