"""Fixed-point solvers for the operator equation Q A - C Q + Q B Q = D.

Existence certificates, a-priori norm bounds and two contraction maps
(spectral-sum and time-kernel) for the quadratic operator equation, plus
the scalar-coupling multiplication model that is solvable in closed form
through the real root of a Herglotz function.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .core import as_hermitian, ec_norm, schatten_norm, spec_distance, _as_complex_matrix, _freeze
from .errors import ConvergenceError, HypothesisError, KernelError, SpectralGapError
from .sylvester import FourierKernel
from . import matio

__all__ = [
    "RiccatiProblem",
    "ExistenceCertificate",
    "IterationOptions",
    "IterationTrace",
    "existence_report",
    "riccati_residual",
    "dual_riccati_check",
    "iterate_stieltjes",
    "iterate_fourier",
    "FriedrichsModel",
    "FriedrichsRoot",
    "friedrichs_solve",
    "friedrichs_sharpness",
]


class RiccatiProblem:
    """Data (A, C, B, D) with the cached gap dist(spec A, spec C).

    A is n x n, C is m x m, the coupling B is n x m, the right-hand side D
    is m x n, and the unknown Q is m x n.
    """

    def __init__(self, a, c, b, d):
        self.a = as_hermitian(a)
        self.c = as_hermitian(c)
        b = _as_complex_matrix(b, square=False)
        d = _as_complex_matrix(d, square=False)
        n, m = self.a.dim, self.c.dim
        if b.shape != (n, m):
            raise ValueError(f"B must be {n}x{m}, got {b.shape}")
        if d.shape != (m, n):
            raise ValueError(f"D must be {m}x{n}, got {d.shape}")
        self.b = _freeze(b)
        self.d = _freeze(d)
        self.gap = spec_distance(self.a, self.c)

    @property
    def shape(self):
        return (self.c.dim, self.a.dim)

    def max_frequency(self):
        diff = self.a.eigenvalues[None, :] - self.c.eigenvalues[:, None]
        return float(np.max(np.abs(diff)))


@dataclass(frozen=True)
class ExistenceCertificate:
    """Solvability conditions and a-priori bounds computed from the data norms."""

    gap: float
    b_norm: float
    d_norm: float
    d_ec_norm: float
    weak_condition: bool           # sqrt(|B| |D|) < d / pi
    strong_condition: bool         # sqrt(|B| |D|_ec) < d / 2
    contraction_sum_weak: bool     # |B| + |D| < 2 d / pi
    contraction_sum_strong: bool   # |B| + |D|_ec < d
    predicted_norm_bound: float | None
    predicted_ec_bound: float | None
    ball_weak: tuple | None        # admissible radii for the weak contraction map
    ball_strong: tuple | None      # admissible radii for the strong contraction map
    sylvester_reduction: bool = False


def existence_report(p: RiccatiProblem) -> ExistenceCertificate:
    d = p.gap
    b_norm = schatten_norm(p.b, np.inf)
    d_norm = schatten_norm(p.d, np.inf)
    d_ec = ec_norm(p.d, p.c.decomposition)

    weak = math.sqrt(b_norm * d_norm) < d / math.pi
    strong = math.sqrt(b_norm * d_ec) < d / 2.0
    sum_weak = b_norm + d_norm < 2.0 * d / math.pi
    sum_strong = b_norm + d_ec < d

    if b_norm == 0.0:
        # Sylvester reduction: the quadratic term vanishes and the bounds
        # degenerate to the linear-equation estimates.
        return ExistenceCertificate(
            gap=d, b_norm=b_norm, d_norm=d_norm, d_ec_norm=d_ec,
            weak_condition=d > 0, strong_condition=d > 0,
            contraction_sum_weak=sum_weak, contraction_sum_strong=sum_strong,
            predicted_norm_bound=math.pi * d_norm / (2.0 * d) if d > 0 else None,
            predicted_ec_bound=d_ec / d if d > 0 else None,
            ball_weak=(math.pi * d_norm / (2.0 * d), math.inf) if d > 0 else None,
            ball_strong=(d_ec / d, math.inf) if d > 0 else None,
            sylvester_reduction=True,
        )

    disc_weak = (d / math.pi) ** 2 - b_norm * d_norm
    disc_strong = (d / 2.0) ** 2 - b_norm * d_ec
    norm_bound = (d / math.pi - math.sqrt(disc_weak)) / b_norm if disc_weak >= 0 else None
    ec_bound = (d / 2.0 - math.sqrt(disc_strong)) / b_norm if disc_strong >= 0 else None
    ball_weak = (norm_bound, d / (math.pi * b_norm)) if disc_weak >= 0 else None
    ball_strong = (
        (ec_bound, (d - math.sqrt(b_norm * d_ec)) / b_norm) if disc_strong >= 0 else None
    )
    return ExistenceCertificate(
        gap=d, b_norm=b_norm, d_norm=d_norm, d_ec_norm=d_ec,
        weak_condition=weak, strong_condition=strong,
        contraction_sum_weak=sum_weak, contraction_sum_strong=sum_strong,
        predicted_norm_bound=norm_bound, predicted_ec_bound=ec_bound,
        ball_weak=ball_weak, ball_strong=ball_strong,
    )


def riccati_residual(q, p: RiccatiProblem) -> float:
    q = np.asarray(q)
    return float(np.linalg.norm(q @ p.a.matrix - p.c.matrix @ q + q @ p.b @ q - p.d))


def dual_riccati_check(q, p: RiccatiProblem) -> float:
    """Residual of the adjoint equation K C - A K + K B* K = D* at K = -Q*.

    Matches ``riccati_residual(q, p)`` to rounding because the two residual
    matrices are conjugate transposes of each other.
    """
    k = -np.asarray(q).conj().T
    res = k @ p.c.matrix - p.a.matrix @ k + k @ p.b.conj().T @ k - p.d.conj().T
    return float(np.linalg.norm(res))


@dataclass(frozen=True)
class IterationOptions:
    residual_tol: float = 1e-10
    max_iter: int = 200
    gap_floor: float = 1e-9
    stagnation_window: int = 10
    stagnation_ratio: float = 0.999


@dataclass
class IterationTrace:
    """Per-iteration norms/residuals of a fixed-point run."""

    q_norms: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    step_norms: list = field(default_factory=list)
    converged: bool = False
    final_residual: float = math.nan
    observed_contraction: float = math.nan
    method: str = ""
    certificate_gate: str = ""

    @property
    def iterations(self):
        return len(self.residuals)

    def finish(self, converged):
        self.converged = converged
        self.final_residual = self.residuals[-1] if self.residuals else math.nan
        ratios = [
            s1 / s0 for s0, s1 in zip(self.step_norms, self.step_norms[1:]) if s0 > 0
        ]
        if ratios:
            self.observed_contraction = float(np.median(ratios))
        return self

    def to_csv(self, path):
        with open(path, "w") as f:
            f.write("iter,residual,q_norm,step_norm\n")
            for k, (res, qn, st) in enumerate(
                zip(self.residuals, self.q_norms, self.step_norms)
            ):
                f.write(f"{k},{res:.17e},{qn:.17e},{st:.17e}\n")


def _run_fixed_point(p, apply_map, q0, opts, trace):
    q = np.zeros(p.shape, dtype=np.complex128) if q0 is None else np.array(q0, dtype=np.complex128)
    stagnant = 0
    for _ in range(opts.max_iter):
        q_next = apply_map(q)
        step = float(np.linalg.norm(q_next - q))
        q = q_next
        res = riccati_residual(q, p)
        trace.q_norms.append(schatten_norm(q, np.inf))
        trace.residuals.append(res)
        trace.step_norms.append(step)
        if res <= opts.residual_tol:
            return q, trace.finish(True)
        if len(trace.residuals) >= 2:
            if trace.residuals[-1] > opts.stagnation_ratio * trace.residuals[-2]:
                stagnant += 1
            else:
                stagnant = 0
            if stagnant >= opts.stagnation_window:
                trace.finish(False)
                raise ConvergenceError(
                    f"iteration stagnated at residual {res:.3e} "
                    f"(ratio > {opts.stagnation_ratio} for {stagnant} steps)"
                )
    trace.finish(False)
    raise ConvergenceError(
        f"no convergence within {opts.max_iter} iterations (residual {trace.residuals[-1]:.3e})"
    )


def iterate_stieltjes(p: RiccatiProblem, q0=None, opts: IterationOptions | None = None,
                      override_radius: float | None = None):
    """Fixed point of F(Q) = sum_k P_k D (A + B Q - mu_k)^{-1}.

    Requires the strong certificate, or an explicit ``override_radius``
    acknowledging that the iterates stay in a ball on which the shifted
    spectra remain separated (the gap is monitored either way).
    """
    opts = opts or IterationOptions()
    cert = existence_report(p)
    if not cert.strong_condition and override_radius is None:
        raise HypothesisError(
            f"strong certificate fails (sqrt(|B| |D|_ec) = "
            f"{math.sqrt(cert.b_norm * cert.d_ec_norm):.4g} >= gap/2 = {cert.gap / 2:.4g}); "
            "pass override_radius to iterate anyway"
        )
    trace = IterationTrace(method="stieltjes",
                           certificate_gate="strong" if cert.strong_condition else "override")
    mu = p.c.eigenvalues
    uc = p.c.decomposition.vectors
    d_rows = uc.conj().T @ p.d
    eye = np.eye(p.a.dim)

    def apply_map(q):
        abq = p.a.matrix + p.b @ q
        gaps = np.abs(np.linalg.eigvals(abq)[:, None] - mu[None, :])
        if float(gaps.min()) < opts.gap_floor:
            raise SpectralGapError(
                f"spectral gap collapsed along the iteration: dist = {gaps.min():.3e}"
            )
        shifted = abq[None, :, :] - mu[:, None, None] * eye[None, :, :]
        rows = np.linalg.solve(np.transpose(shifted, (0, 2, 1)), d_rows[:, :, None])[:, :, 0]
        return uc @ rows

    return _run_fixed_point(p, apply_map, q0, opts, trace)


def iterate_fourier(p: RiccatiProblem, kernel: FourierKernel | None = None, q0=None,
                    opts: IterationOptions | None = None, override: bool = False):
    """Fixed point of F(Q) = int e^{itC} (D - Q B Q) e^{-itA} f_d(t) dt.

    Requires the weak certificate unless ``override`` is set.  The attainable
    residual is limited by the kernel's validated transform error.
    """
    opts = opts or IterationOptions()
    cert = existence_report(p)
    if not cert.weak_condition and not override:
        raise HypothesisError(
            f"weak certificate fails (sqrt(|B| |D|) = "
            f"{math.sqrt(cert.b_norm * cert.d_norm):.4g} >= gap/pi = {cert.gap / math.pi:.4g}); "
            "pass override=True to iterate anyway"
        )
    if kernel is None:
        kernel = FourierKernel.build(p.gap, max_freq=p.max_frequency(), tol=1e-9)
    if p.gap < kernel.d * (1.0 - 1e-12):
        raise SpectralGapError(f"problem gap {p.gap:.3e} below kernel gap {kernel.d:.3e}")
    if p.max_frequency() > kernel.max_freq * (1.0 + 1e-9):
        raise KernelError("kernel too coarse for the spectral diameter; rebuild with larger max_freq")
    trace = IterationTrace(method="fourier",
                           certificate_gate="weak" if cert.weak_condition else "override")
    ua = p.a.decomposition.vectors
    uc = p.c.decomposition.vectors
    w = kernel.divided_difference_matrix(p.c.eigenvalues, p.a.eigenvalues)
    floor = 20.0 * kernel.validated_error * (1.0 + float(np.linalg.norm(p.d)))
    eff = IterationOptions(
        residual_tol=max(opts.residual_tol, floor),
        max_iter=opts.max_iter,
        gap_floor=opts.gap_floor,
        stagnation_window=opts.stagnation_window,
        stagnation_ratio=opts.stagnation_ratio,
    )

    def apply_map(q):
        rhs = p.d - q @ p.b @ q
        return uc @ ((uc.conj().T @ rhs @ ua) * w) @ ua.conj().T

    return _run_fixed_point(p, apply_map, q0, eff, trace)


# --- rank-one coupling model ------------------------------------------------


@dataclass(frozen=True)
class FriedrichsRoot:
    w: float
    q: np.ndarray
    q_norm: float
    residual: float


class FriedrichsModel:
    """Multiplication operator on a union of intervals coupled to a single mode.

    ``support`` is the declared union of open intervals (ends may be
    infinite); quadrature nodes/weights discretize a truncated version of
    it, and ``coupling`` samples the coupling function at the nodes.
    Solvability reduces to a real root of w + sum h |b|^2 / (mu - w) inside
    the complement of the support.
    """

    def __init__(self, support, nodes, weights, coupling, meta=None):
        support = tuple((float(lo), float(hi)) for lo, hi in support)
        for lo, hi in support:
            if not lo < hi:
                raise ValueError(f"empty support interval ({lo}, {hi})")
        if any(a[1] > b[0] for a, b in zip(support, support[1:])):
            raise ValueError("support intervals must be disjoint and sorted")
        self.support = support
        self.nodes = _freeze(np.asarray(nodes, dtype=np.float64))
        self.weights = _freeze(np.asarray(weights, dtype=np.float64))
        self.coupling = _freeze(np.asarray(coupling, dtype=np.complex128))
        if not (self.nodes.shape == self.weights.shape == self.coupling.shape):
            raise ValueError("nodes, weights, coupling must share a shape")
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")
        self.meta = dict(meta or {})

    @classmethod
    def from_function(cls, support, func, nodes_per_component=10_000, truncation=50.0, meta=None):
        """Midpoint discretization; infinite ends are cut at |mu| = truncation.

        The mass discarded by the cut is estimated on a coarse grid out to
        10x the truncation and reported as meta['tail_bound'] (discarded
        mass over its distance to the nearest gap point).
        """
        nodes, weights = [], []
        tail_mass = 0.0
        for lo, hi in support:
            lo_t = max(lo, -truncation)
            hi_t = min(hi, truncation)
            if not lo_t < hi_t:
                raise ValueError(f"interval ({lo}, {hi}) empty after truncation at {truncation}")
            h = (hi_t - lo_t) / nodes_per_component
            mu = lo_t + h * (np.arange(nodes_per_component) + 0.5)
            nodes.append(mu)
            weights.append(np.full(nodes_per_component, h))
            for sign, cut in ((1.0, hi), (-1.0, lo)):
                if math.isinf(cut):
                    grid = sign * np.linspace(truncation, 10.0 * truncation, 200)
                    step = 9.0 * truncation / 200.0
                    tail_mass += step * float(
                        np.sum(np.abs([func(m) for m in grid]) ** 2)
                    )
        nodes = np.concatenate(nodes)
        weights = np.concatenate(weights)
        coupling = np.asarray([func(m) for m in nodes], dtype=np.complex128)
        meta = dict(meta or {})
        finite_edges = [abs(e) for lo, hi in support for e in (lo, hi) if math.isfinite(e)]
        dist = max(truncation - max(finite_edges, default=0.0), truncation / 2.0)
        meta["tail_bound"] = tail_mass / dist
        meta.setdefault("truncation", truncation)
        return cls(support, nodes, weights, coupling, meta=meta)

    @classmethod
    def sharpness_family(cls, d, c, eps, nodes_per_component=10_000, truncation=None):
        """Coupling concentrated near the inner edges with total mass sqrt(2) c d.

        Left branch arctan(d + mu) sqrt(w_eps(d - mu)), right branch
        sqrt(w_eps(mu - d)), with w_eps(t) = exp(-t/eps)/eps, normalized in
        the discrete norm and scaled to sqrt(2) c d.
        """
        if d <= 0 or eps <= 0:
            raise ValueError("d and eps must be positive")
        truncation = 50.0 * d if truncation is None else truncation
        support = ((-math.inf, -d), (d, math.inf))

        def omega(t):
            return math.exp(-t / eps) / eps

        def phi(mu):
            if mu <= -d:
                return math.atan(d + mu) * math.sqrt(omega(d - mu))
            return math.sqrt(omega(mu - d))

        model = cls.from_function(
            support, phi, nodes_per_component=nodes_per_component, truncation=truncation,
            meta={"family": "sharpness", "d": d, "c": c, "eps": eps,
                  "truncation": truncation, "nodes_per_component": nodes_per_component},
        )
        norm = math.sqrt(model.norm_sq())
        scale = math.sqrt(2.0) * c * d / norm
        meta = dict(model.meta)
        meta["tail_bound"] = meta.get("tail_bound", 0.0) * scale**2
        return cls(support, model.nodes, model.weights, scale * model.coupling, meta=meta)

    def norm_sq(self):
        return float(np.sum(self.weights * np.abs(self.coupling) ** 2))

    def herglotz(self, w):
        """w + sum h |b|^2 / (mu - w); strictly increasing off the nodes."""
        return float(w + np.sum(self.weights * np.abs(self.coupling) ** 2 / (self.nodes - w)))

    def gap_components(self):
        """Closed components of the complement of the declared support."""
        comps = []
        prev = -math.inf
        for lo, hi in self.support:
            if lo > prev:
                comps.append((prev, lo))
            prev = max(prev, hi)
        if prev < math.inf:
            comps.append((prev, math.inf))
        return comps

    def tail_bound(self):
        """Crude truncation-error bound: discarded mass over its distance to the gap."""
        return float(self.meta.get("tail_bound", 0.0))

    def to_manifest(self, directory, stem="friedrichs", style="file"):
        """Write a manifest; coupling either as a sample file or, when the
        model came from a named analytic family, by its parameters."""
        os.makedirs(directory, exist_ok=True)
        manifest = {
            "kind": "friedrichs",
            "intervals": [[lo, hi] for lo, hi in self.support],
            "node_count": int(self.nodes.size),
            "meta": self.meta,
        }
        if style == "family":
            if self.meta.get("family") != "sharpness":
                raise ValueError("family-style manifest needs a named analytic family")
            manifest["coupling"] = {
                "family": "sharpness",
                "d": self.meta["d"], "c": self.meta["c"], "eps": self.meta["eps"],
                "truncation": self.meta["truncation"],
                "nodes_per_component": self.meta["nodes_per_component"],
            }
        elif style == "file":
            coupling_file = f"{stem}_coupling.mtx"
            data = np.stack([self.nodes, self.weights]).T.astype(np.complex128)
            matio.write_matrix(os.path.join(directory, f"{stem}_grid.mtx"), data, hermitian=False)
            matio.write_matrix(
                os.path.join(directory, coupling_file), self.coupling.reshape(-1, 1),
                hermitian=False,
            )
            manifest["coupling"] = coupling_file
            manifest["grid"] = f"{stem}_grid.mtx"
        else:
            raise ValueError(f"unknown manifest style {style!r}")
        with open(os.path.join(directory, f"{stem}_manifest.json"), "w") as f:
            json.dump(manifest, f, indent=2, sort_keys=True, default=float)

    @classmethod
    def from_manifest(cls, directory, stem="friedrichs"):
        with open(os.path.join(directory, f"{stem}_manifest.json")) as f:
            manifest = json.load(f)
        coupling = manifest["coupling"]
        if isinstance(coupling, dict):
            if coupling.get("family") != "sharpness":
                raise ValueError(f"unknown coupling family {coupling.get('family')!r}")
            return cls.sharpness_family(
                coupling["d"], coupling["c"], coupling["eps"],
                nodes_per_component=int(coupling["nodes_per_component"]),
                truncation=coupling["truncation"],
            )
        grid = matio.read_matrix(os.path.join(directory, manifest["grid"]))
        samples = matio.read_matrix(os.path.join(directory, coupling))
        support = tuple((lo, hi) for lo, hi in manifest["intervals"])
        return cls(support, grid[:, 0].real, grid[:, 1].real, samples[:, 0],
                   meta=manifest.get("meta"))


def _bracket_root(model, lo, hi, subdivisions=512, tol=1e-13):
    """Root of the Herglotz function inside [lo, hi]; None without a sign change."""
    if math.isinf(lo):
        anchor = float(min(model.nodes.min(), hi if math.isfinite(hi) else 0.0))
        span = max(1.0, model.norm_sq())
        lo = anchor - 2.0 * span
        while model.herglotz(lo) >= 0:
            lo = anchor - 2.0 * (anchor - lo)
    if math.isinf(hi):
        anchor = float(max(model.nodes.max(), lo))
        span = max(1.0, model.norm_sq())
        hi = anchor + 2.0 * span
        while model.herglotz(hi) <= 0:
            hi = anchor + 2.0 * (hi - anchor)
    grid = np.linspace(lo, hi, subdivisions + 1)
    vals = np.array([model.herglotz(g) for g in grid])
    sign_change = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]
    if sign_change.size == 0:
        return None
    a, b = grid[sign_change[0]], grid[sign_change[0] + 1]
    fa = model.herglotz(a)
    if fa == 0.0:
        return float(a)
    while b - a > tol:
        mid = 0.5 * (a + b)
        fm = model.herglotz(mid)
        if fm == 0.0:
            return float(mid)
        if (fa < 0) == (fm < 0):
            a, fa = mid, fm
        else:
            b = mid
    return float(0.5 * (a + b))


def friedrichs_solve(model: FriedrichsModel, residual_tol=1e-9,
                     node_guard=1e-12) -> FriedrichsRoot | None:
    """Locate the Herglotz root in the complement of the support, if any.

    Returns the root w with the solution samples q = b / (w - mu), verified
    against the discretized quadratic equation; returns None when no
    component of the complement contains a sign change.
    """
    for lo, hi in model.gap_components():
        w = _bracket_root(model, lo, hi)
        if w is None:
            continue
        dist = float(np.min(np.abs(model.nodes - w)))
        if dist <= node_guard:
            raise ConvergenceError(
                f"root {w} within {dist:.3e} of a quadrature node (discretization breakdown)"
            )
        q = model.coupling / (w - model.nodes)
        inner = np.sum(model.weights * q * np.conj(model.coupling))
        res_vec = (inner - model.nodes) * q - model.coupling
        residual = float(np.sqrt(np.sum(model.weights * np.abs(res_vec) ** 2)))
        if residual > residual_tol:
            raise ConvergenceError(
                f"discrete quadratic residual {residual:.3e} exceeds {residual_tol:.1e}"
            )
        q_norm = float(np.sqrt(np.sum(model.weights * np.abs(q) ** 2)))
        return FriedrichsRoot(w=w, q=q, q_norm=q_norm, residual=residual)
    return None


def friedrichs_sharpness(d, c, eps_grid=None, nodes_per_component=10_000, truncation=None):
    """Scan the concentration family for solvable/unsolvable couplings.

    For each eps the coupling has fixed mass sqrt(2) c d; the report lists
    whether the Herglotz root exists.  For c > 1 the concentration limit
    must produce at least one unsolvable member; for c <= 1 every member is
    solvable.
    """
    if c <= 0:
        raise ValueError("coupling scale c must be positive")
    if eps_grid is None:
        eps_grid = np.geomspace(1e-4, 1.0, 13)
    rows = []
    for eps in eps_grid:
        model = FriedrichsModel.sharpness_family(
            d, c, float(eps), nodes_per_component=nodes_per_component, truncation=truncation
        )
        root = friedrichs_solve(model)
        rows.append(
            {
                "eps": float(eps),
                "coupling_norm": math.sqrt(model.norm_sq()),
                "solvable": root is not None,
                "root": None if root is None else root.w,
                "edge_mass_ratio": model.herglotz(-d) - (-d),  # sum h |b|^2/(mu+d)
            }
        )
    solvable_flags = [r["solvable"] for r in rows]
    all_solvable = all(solvable_flags)
    # for c > 1 the concentration limit must eventually lose the root; a grid
    # that never does has not resolved the margin (reported, not fatal)
    classified = (not all_solvable) if c > 1.0 else all_solvable
    return {
        "d": float(d),
        "c": float(c),
        "rows": rows,
        "all_solvable": all_solvable,
        "any_unsolvable": not all_solvable,
        "classified": classified,
    }
