"""Five representations of the solution of X A - C X = Y, plus an oracle.

A (n x n) and C (m x m) are Hermitian with separated spectra, Y is m x n.
The Kronecker-vectorized direct solve is the ground-truth oracle; the
spectral-sum, double-sum, contour, semigroup and time-kernel routes are
independent representations of the same solution and are cross-checked
against it in the test suite.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import sici

from .core import as_hermitian, ec_norm, schatten_norm, spec_distance, _as_complex_matrix, _freeze
from .errors import ContourError, ConvergenceError, KernelError, OrderingError, SpectralGapError
from . import matio

__all__ = [
    "SylvesterProblem",
    "ContourSpec",
    "FourierKernel",
    "sylvester_residual",
    "solve_oracle",
    "solve_stieltjes",
    "solve_double_stieltjes",
    "solve_contour",
    "solve_exponential",
    "solve_fourier",
    "solver_report",
    "SOLVERS",
]

GAP_FLOOR = 1e-12


class SylvesterProblem:
    """Data (A, C, Y) with the cached spectral gap dist(spec A, spec C)."""

    def __init__(self, a, c, y):
        self.a = as_hermitian(a)
        self.c = as_hermitian(c)
        y = _as_complex_matrix(y, square=False)
        if y.shape != (self.c.dim, self.a.dim):
            raise ValueError(
                f"Y must be {self.c.dim}x{self.a.dim} (rows match C, columns match A), got {y.shape}"
            )
        self.y = _freeze(y)
        self.gap = spec_distance(self.a, self.c)

    def require_gap(self, floor=GAP_FLOOR):
        if self.gap <= floor:
            raise SpectralGapError(
                f"spectra of A and C are not separated: gap {self.gap:.3e} <= {floor:.1e}"
            )

    @property
    def shape(self):
        return (self.c.dim, self.a.dim)

    def max_frequency(self):
        """Largest |lambda - mu| over the two spectra."""
        diff = self.a.eigenvalues[None, :] - self.c.eigenvalues[:, None]
        return float(np.max(np.abs(diff)))

    def save(self, directory, stem="problem"):
        """Write A/C/Y matrix files plus a manifest naming the roles."""
        import os

        os.makedirs(directory, exist_ok=True)
        files = {}
        for role, mat, herm in (("A", self.a, True), ("C", self.c, True), ("Y", self.y, False)):
            name = f"{stem}_{role}.mtx"
            matio.write_matrix(os.path.join(directory, name), mat, hermitian=herm)
            files[role] = name
        manifest = {"kind": "sylvester", "files": files}
        with open(os.path.join(directory, f"{stem}_manifest.json"), "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True)

    @classmethod
    def load(cls, directory, stem="problem"):
        import os

        with open(os.path.join(directory, f"{stem}_manifest.json")) as f:
            manifest = json.load(f)
        files = manifest["files"]
        a = matio.read_matrix(os.path.join(directory, files["A"]))
        c = matio.read_matrix(os.path.join(directory, files["C"]))
        y = matio.read_matrix(os.path.join(directory, files["Y"]))
        return cls(a, c, y)


def sylvester_residual(x, p: SylvesterProblem) -> float:
    x = np.asarray(x)
    return float(np.linalg.norm(x @ p.a.matrix - p.c.matrix @ x - p.y))


def solve_oracle(p: SylvesterProblem) -> np.ndarray:
    """Direct dense solve of the mn x mn vectorized system (ground truth)."""
    m, n = p.shape
    system = np.kron(np.eye(m), p.a.matrix.T) - np.kron(p.c.matrix, np.eye(n))
    try:
        vec = np.linalg.solve(system, p.y.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise SpectralGapError(f"singular Sylvester system (resonant spectra): {exc}") from None
    x = vec.reshape(m, n)
    res = sylvester_residual(x, p)
    if res > 1e-8 * (1.0 + np.linalg.norm(p.y)):
        raise SpectralGapError(
            f"Sylvester system numerically singular: residual {res:.3e} after direct solve"
        )
    return x


def solve_stieltjes(p: SylvesterProblem, dual: bool = False) -> np.ndarray:
    """Spectral-measure sum over spec(C) with resolvents of A.

    Primal: X = sum_k P_k Y (A - mu_k)^{-1}.  Dual: Z = -sum_k
    (A - mu_k)^{-1} Y* P_k, which solves Z C - A Z = Y* and equals -X*.
    """
    p.require_gap()
    mu = p.c.eigenvalues
    uc = p.c.decomposition.vectors
    n = p.a.dim
    eye = np.eye(n)
    shifted = p.a.matrix[None, :, :] - mu[:, None, None] * eye[None, :, :]
    if not dual:
        y_rows = uc.conj().T @ p.y  # row k = <u_k, Y .>
        rows = np.linalg.solve(np.transpose(shifted, (0, 2, 1)), y_rows[:, :, None])[:, :, 0]
        return uc @ rows
    cols = np.linalg.solve(shifted, (uc.conj().T @ p.y).conj()[:, :, None])[:, :, 0]
    return -(cols.T @ uc.conj().T)


def solve_double_stieltjes(p: SylvesterProblem) -> np.ndarray:
    """Double spectral sum: X = sum_{k,l} P_k Y P_l / (lambda_l - mu_k)."""
    p.require_gap()
    lam = p.a.eigenvalues
    mu = p.c.eigenvalues
    ua = p.a.decomposition.vectors
    uc = p.c.decomposition.vectors
    weights = 1.0 / (lam[None, :] - mu[:, None])
    y_tilde = uc.conj().T @ p.y @ ua
    return uc @ (y_tilde * weights) @ ua.conj().T


@dataclass(frozen=True)
class ContourSpec:
    """Union of positively oriented circles enclosing spec(C), excluding spec(A)."""

    circles: tuple  # ((center, radius), ...)
    orientation: int = 1
    initial_nodes: int = 32

    @classmethod
    def for_problem(cls, p: SylvesterProblem, initial_nodes: int = 32) -> "ContourSpec":
        """One circle per connected cluster of spec(C); the radius extends half
        the distance to the nearest excluded eigenvalue beyond the cluster hull."""
        p.require_gap()
        mu = p.c.eigenvalues
        lam = p.a.eigenvalues
        groups = []
        start = 0
        for k in range(1, mu.size + 1):
            if k == mu.size or mu[k] - mu[k - 1] >= p.gap:
                groups.append((mu[start], mu[k - 1]))
                start = k
        circles = []
        for gi, (lo, hi) in enumerate(groups):
            excluded = list(lam)
            for gj, (lo2, hi2) in enumerate(groups):
                if gj != gi:
                    excluded.extend([lo2, hi2])
            dist = min(min(abs(e - lo), abs(e - hi)) for e in excluded)
            circles.append((0.5 * (lo + hi), 0.5 * (hi - lo) + 0.5 * dist))
        return cls(circles=tuple(circles), initial_nodes=initial_nodes)

    def nodes(self, count):
        """Quadrature nodes and d(zeta)/d(theta) factors, per circle."""
        theta = 2.0 * np.pi * np.arange(count) / count
        phases = np.exp(1j * self.orientation * theta)
        out = []
        for center, radius in self.circles:
            out.append((center + radius * phases, 1j * self.orientation * radius * phases))
        return out

    def winding_numbers(self, points, count=256):
        """Total winding of the discretized contour around each point."""
        points = np.atleast_1d(np.asarray(points, dtype=np.complex128))
        total = np.zeros(points.size)
        for zeta, _ in self.nodes(count):
            rel = zeta[:, None] - points[None, :]
            step = np.angle(np.roll(rel, -1, axis=0) / rel)
            total += step.sum(axis=0) / (2.0 * np.pi)
        return np.rint(total).astype(int)

    def validate(self, p: SylvesterProblem, count=256):
        wc = self.winding_numbers(p.c.eigenvalues, count)
        wa = self.winding_numbers(p.a.eigenvalues, count)
        if not np.all(wc == 1):
            raise ContourError(f"contour winds {wc.tolist()} around spec(C), expected all 1")
        if not np.all(wa == 0):
            raise ContourError(f"contour winds {wa.tolist()} around spec(A), expected all 0")


def _contour_sum(p, contour, count, chunk=4096):
    m, n = p.shape
    eye_m, eye_n = np.eye(m), np.eye(n)
    spectra = np.concatenate([p.a.eigenvalues, p.c.eigenvalues])
    acc = np.zeros((m, n), dtype=np.complex128)
    for zeta, dzeta in contour.nodes(count):
        rmin = np.min(np.abs(zeta[:, None] - spectra[None, :]), axis=1)
        radius = max(r for _, r in contour.circles)
        if np.min(rmin) < 1e-3 * radius:
            raise ContourError(
                f"quadrature node within {np.min(rmin):.3e} of a spectrum (< radius*1e-3)"
            )
        for s in range(0, count, chunk):
            z = zeta[s : s + chunk]
            w = dzeta[s : s + chunk]
            left = z[:, None, None] * eye_m[None] - p.c.matrix[None]
            mid = np.linalg.solve(left, np.broadcast_to(p.y, (z.size, m, n)))
            right = np.transpose(p.a.matrix[None] - z[:, None, None] * eye_n[None], (0, 2, 1))
            term = np.transpose(np.linalg.solve(right, np.transpose(mid, (0, 2, 1))), (0, 2, 1))
            acc += np.tensordot(w, term, axes=(0, 0)) * (2.0 * np.pi / count)
    return acc / (2.0j * np.pi)


def solve_contour(p: SylvesterProblem, contour: ContourSpec | None = None,
                  tol: float = 1e-10, max_nodes: int = 2 ** 16) -> np.ndarray:
    """Resolvent contour quadrature (1/2 pi i) oint (zeta-C)^-1 Y (A-zeta)^-1 dzeta.

    Periodic trapezoid nodes are doubled until two successive results agree
    to ``tol``; the contour winding numbers are verified first.
    """
    if contour is None:
        contour = ContourSpec.for_problem(p)
    contour.validate(p)
    count = contour.initial_nodes
    prev = _contour_sum(p, contour, count)
    while count < max_nodes:
        count *= 2
        cur = _contour_sum(p, contour, count)
        if np.linalg.norm(cur - prev) <= tol * (1.0 + np.linalg.norm(cur)):
            return cur
        prev = cur
    raise ConvergenceError(f"contour quadrature not converged with {max_nodes} nodes")


def solve_exponential(p: SylvesterProblem, tail: float = 1e-12) -> np.ndarray:
    """Semigroup integral over [0, T] of e^{Ct} Y e^{-At}.

    Requires max spec(C) + gap <= min spec(A); T is chosen so the neglected
    tail e^{-dT} ||Y|| / d stays below ``tail``.  The spectra are shifted
    symmetrically so both exponentials stay bounded by one.
    """
    c_max = float(p.c.eigenvalues.max())
    a_min = float(p.a.eigenvalues.min())
    d = a_min - c_max
    if d <= GAP_FLOOR:
        raise OrderingError(
            f"exponential representation needs max spec(C) < min spec(A); got overlap {d:.3e}"
        )
    ynorm = float(np.linalg.norm(p.y, 2))
    if ynorm == 0.0:
        return np.zeros(p.shape, dtype=np.complex128)
    horizon = math.log(max(ynorm / (d * tail), 2.0)) / d
    shift = 0.5 * (a_min + c_max)
    lam = p.a.eigenvalues - shift
    mu = p.c.eigenvalues - shift
    rate = max(float(np.max(np.abs(lam))), float(np.max(np.abs(mu))), d)
    panels = max(1, int(math.ceil(horizon * rate / 4.0)))
    q = 16
    xs, ws = np.polynomial.legendre.leggauss(q)
    width = horizon / panels
    starts = np.arange(panels) * width
    t = (starts[:, None] + 0.5 * width * (xs + 1.0)[None, :]).ravel()
    w = np.tile(0.5 * width * ws, panels)
    ec = np.exp(np.outer(t, mu))   # all exponents <= 0 after the shift
    ea = np.exp(-np.outer(t, lam))
    kernel = np.einsum("k,km,kn->mn", w, ec, ea)
    ua = p.a.decomposition.vectors
    uc = p.c.decomposition.vectors
    y_tilde = uc.conj().T @ p.y @ ua
    return uc @ (y_tilde * kernel) @ ua.conj().T


# --- time-domain kernel with transform 1/x outside [-d, d] -----------------

# Odd C^5 polynomial continuation of 1/x inside (-1, 1): p(x) = sum c_j x^(2j+1)
# with p^(k)(1) = (-1)^k k! for k = 0..5.
_EXT_DEGREE = 5


def _extension_coefficients():
    j = _EXT_DEGREE + 1
    a = np.zeros((j, j))
    b = np.zeros(j)
    for k in range(j):
        for col in range(j):
            mpow = 2 * col + 1
            if mpow >= k:
                ff = 1.0
                for i in range(k):
                    ff *= mpow - i
                a[k, col] = ff
        b[k] = (-1) ** k * math.factorial(k)
    return np.linalg.solve(a, b)


_EXT_COEFFS = _extension_coefficients()


def _kernel_values(s):
    """f(s)/i for s > 0, where f is the inverse transform of the continued 1/x.

    f(s) = (i/pi) [ int_0^1 p(x) sin(sx) dx + pi/2 - Si(s) ]; the inner
    integral is done with composite Gauss-Legendre panels, exact to machine
    precision for the polynomial-times-sine integrand.
    """
    s = np.asarray(s, dtype=np.float64)
    si, _ = sici(s)
    total = np.pi / 2.0 - si
    smax = float(s.max()) if s.size else 0.0
    panels = max(1, int(math.ceil(smax / 40.0)))
    xs, ws = np.polynomial.legendre.leggauss(40)
    poly_part = np.zeros_like(s)
    for ip in range(panels):
        lo, hi = ip / panels, (ip + 1) / panels
        xx = 0.5 * (hi - lo) * xs + 0.5 * (lo + hi)
        ww = 0.5 * (hi - lo) * ws
        px = np.zeros_like(xx)
        for j, cj in enumerate(_EXT_COEFFS):
            px += cj * xx ** (2 * j + 1)
        poly_part += (px * ww) @ np.sin(np.outer(xx, s))
    return (total + poly_part) / np.pi


class FourierKernel:
    """Sampled time-domain kernel f_d with transform 1/x for |x| >= d.

    Samples live on a symmetric Gauss-Legendre panel grid (uniform panel
    step, truncation horizon); the quadrature is self-validated against the
    transform property on |x| in [d, 10d] (and up to ``max_freq``) before use.
    """

    VALIDATION_TOL = 1e-6

    def __init__(self, d, nodes, weights, samples, panel_step, horizon, max_freq, validated_error):
        self.d = float(d)
        self.nodes = _freeze(np.asarray(nodes))
        self.weights = _freeze(np.asarray(weights))
        self.samples = _freeze(np.asarray(samples))
        self.panel_step = float(panel_step)
        self.horizon = float(horizon)
        self.max_freq = float(max_freq)
        self.validated_error = float(validated_error)

    @classmethod
    def build(cls, d, max_freq=None, tol=1e-9, panel_phase=48.0, panel_order=24):
        """Construct and self-validate a kernel for gap ``d``.

        ``max_freq`` is the largest |x| the quadrature must resolve
        (defaults to 10 d); ``tol`` steers the truncation horizon.
        """
        if d <= 0:
            raise KernelError(f"kernel gap must be positive, got {d}")
        if max_freq is None:
            max_freq = 10.0 * d
        max_freq = max(float(max_freq), 10.0 * d)
        umax = max_freq / d
        if tol >= 3e-8:
            horizon_s = 60.0
        elif tol >= 3e-10:
            horizon_s = 120.0
        else:
            horizon_s = 300.0
        width = panel_phase / umax
        panels = max(1, int(math.ceil(horizon_s / width)))
        width = horizon_s / panels
        xs, ws = np.polynomial.legendre.leggauss(panel_order)
        starts = np.arange(panels) * width
        s_pos = (starts[:, None] + 0.5 * width * (xs + 1.0)[None, :]).ravel()
        w_pos = np.tile(0.5 * width * ws, panels)
        f_pos = _kernel_values(s_pos)
        s_grid = np.concatenate([-s_pos[::-1], s_pos])
        w_grid = np.concatenate([w_pos[::-1], w_pos])
        f_grid = 1j * np.concatenate([-f_pos[::-1], f_pos])  # odd, purely imaginary
        # rescale to the gap: t = s/d keeps the transform equal to 1/x for |x| >= d
        kernel = cls(
            d=d,
            nodes=s_grid / d,
            weights=w_grid / d,
            samples=f_grid,
            panel_step=width / d,
            horizon=horizon_s / d,
            max_freq=max_freq,
            validated_error=np.inf,
        )
        err = kernel._transform_error()
        if err > cls.VALIDATION_TOL:
            raise KernelError(
                f"kernel transform self-check failed: max deviation {err:.3e} > {cls.VALIDATION_TOL:.1e}"
            )
        kernel.validated_error = err
        return kernel

    def _transform_error(self, extra_freqs=()):
        us = np.concatenate(
            [
                np.linspace(1.0, 10.0, 41),
                np.geomspace(10.0, max(self.max_freq / self.d, 10.0 + 1e-9), 31),
            ]
        )
        xs = np.concatenate([us * self.d, np.asarray(extra_freqs, dtype=float)])
        xs = xs[xs >= self.d * (1.0 - 1e-12)]
        vals = self.transform(np.concatenate([xs, -xs]))
        target = 1.0 / np.concatenate([xs, -xs])
        return float(np.max(np.abs(vals - target)))

    def transform(self, x):
        """Quadrature of int f_d(t) e^{-itx} dt at frequencies x."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        phases = np.exp(-1j * np.outer(self.nodes, x))
        return (self.weights * self.samples) @ phases

    def divided_difference_matrix(self, mu, lam):
        """Matrix W[k, l] approximating 1/(lam_l - mu_k) through the quadrature."""
        mu = np.asarray(mu, dtype=np.float64)
        lam = np.asarray(lam, dtype=np.float64)
        wf = self.weights * self.samples
        left = np.exp(1j * np.outer(self.nodes, mu))
        right = np.exp(-1j * np.outer(self.nodes, lam))
        return np.einsum("k,km,kn->mn", wf, left, right)


def solve_fourier(p: SylvesterProblem, kernel: FourierKernel | None = None,
                  tol: float = 1e-9) -> np.ndarray:
    """Time-domain quadrature of int e^{itC} Y e^{-itA} f_d(t) dt."""
    p.require_gap()
    freq = p.max_frequency()
    if kernel is None:
        kernel = FourierKernel.build(p.gap, max_freq=freq, tol=tol)
    if p.gap < kernel.d * (1.0 - 1e-12):
        raise SpectralGapError(
            f"problem gap {p.gap:.3e} below kernel gap {kernel.d:.3e}"
        )
    if freq > kernel.max_freq * (1.0 + 1e-9):
        raise KernelError(
            f"kernel resolves |x| <= {kernel.max_freq:.3e} but problem needs {freq:.3e}; rebuild with larger max_freq"
        )
    w = kernel.divided_difference_matrix(p.c.eigenvalues, p.a.eigenvalues)
    ua = p.a.decomposition.vectors
    uc = p.c.decomposition.vectors
    y_tilde = uc.conj().T @ p.y @ ua
    return uc @ (y_tilde * w) @ ua.conj().T


def bound_margins(x, p: SylvesterProblem) -> dict:
    """Slack of the gap-scaled norm bounds (nonnegative when the bound holds)."""
    d = p.gap
    return {
        "operator": (np.pi / (2.0 * d)) * schatten_norm(p.y, np.inf) - schatten_norm(x, np.inf),
        "hilbert_schmidt": schatten_norm(p.y, 2) / d - schatten_norm(x, 2),
        "ec": ec_norm(p.y, p.c.decomposition) / d - ec_norm(x, p.c.decomposition),
    }


SOLVERS = {
    "oracle": solve_oracle,
    "stieltjes": solve_stieltjes,
    "double_stieltjes": solve_double_stieltjes,
    "contour": solve_contour,
    "exponential": solve_exponential,
    "fourier": solve_fourier,
}


def solver_report(p: SylvesterProblem, method: str, oracle: np.ndarray | None = None, **kwargs) -> dict:
    """Run one representation and report residual, oracle deviation and margins."""
    if method not in SOLVERS:
        raise ValueError(f"unknown method {method!r}; pick from {sorted(SOLVERS)}")
    t0 = time.perf_counter()
    x = SOLVERS[method](p, **kwargs)
    elapsed = time.perf_counter() - t0
    if oracle is None:
        oracle = solve_oracle(p)
    denom = np.linalg.norm(oracle)
    deviation = np.linalg.norm(x - oracle) / (denom if denom > 0 else 1.0)
    return {
        "method": method,
        "residual": sylvester_residual(x, p),
        "oracle_deviation": float(deviation),
        "bound_margins": bound_margins(x, p),
        "timings": {"solve_seconds": elapsed},
    }
