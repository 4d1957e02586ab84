"""Config-driven experiment campaigns with machine-readable reports.

A campaign draws deterministic instances from (seed, trial), runs the
kind-specific pipeline, and emits a JSON report (full fidelity, stable
byte-for-byte under re-emission), a flat CSV with one row per trial, and
a segregated timing file.  Hypothesis-violating trials are skipped, not
failed; assertion failures inside certified trials fail the campaign.
"""

from __future__ import annotations

import json
import math
import os
import platform
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import generate
from .blockdiag import (
    BlockOperatorMatrix,
    homotopy_scan,
    hypothesis_report,
    solve_angular,
    unitary_diagonalize,
)
from .core import schatten_norm
from .errors import HypothesisError, OrderingError
from .riccati import (
    FriedrichsModel,
    RiccatiProblem,
    existence_report,
    friedrichs_sharpness,
    friedrichs_solve,
    iterate_fourier,
    iterate_stieltjes,
    riccati_residual,
)
from .ssf import splitting_check, vanishing_check
from .sylvester import SOLVERS, SylvesterProblem, solve_oracle, sylvester_residual

__all__ = [
    "ExperimentConfig",
    "CampaignReport",
    "generate_instance",
    "run_experiment",
    "emit_report",
    "load_report",
    "DEFAULT_TOLERANCES",
    "KINDS",
]

KINDS = (
    "sylvester-bench",
    "riccati-solve",
    "blockdiag",
    "ssf-split",
    "friedrichs",
    "sharpness",
    "homotopy",
)

DEFAULT_TOLERANCES = {
    "stieltjes_dev": 1e-10,
    "double_stieltjes_dev": 1e-10,
    "contour_dev": 1e-8,
    "exponential_dev": 1e-8,
    "fourier_dev": 1e-6,
    "bound_slack": 1e-9,
    "riccati_residual": 1e-10,
    "cross_method": 1e-6,
    "offdiag_scale": 1e-10,
    "unitarity": 1e-12,
    "spectra_match": 1e-9,
    "angular_residual": 1e-10,
    "separ_slack": 1e-9,
    "friedrichs_residual": 1e-9,
    "step_ratio_lo": 1.5,
    "step_ratio_hi": 2.5,
}


@dataclass
class ExperimentConfig:
    """Seeded description of a campaign; the seed determines every instance."""

    kind: str
    seed: int = 0
    trials: int = 10
    dims: list = field(default_factory=lambda: [2, 8])
    gap: list = field(default_factory=lambda: [0.5, 2.0])
    margin: float = 0.9
    width: float = 3.0
    coupling_scale: float = 1.5
    hypothesis: str = "all"
    layouts: list = field(default_factory=lambda: ["split", "straddle"])
    t_count: int = 11
    d: float = 1.0
    c_values: list = field(default_factory=lambda: [1.0, 1.2])
    coupling_factors: list = field(default_factory=lambda: [0.5, 0.9, 0.999])
    eps_grid: list | None = None
    nodes_per_component: int = 10_000
    tolerances: dict = field(default_factory=dict)
    out: str | None = None
    expect: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; choose from {KINDS}")
        if self.trials < 0:
            raise ValueError("trial count must be nonnegative")
        bad = set(self.tolerances) - set(DEFAULT_TOLERANCES)
        if bad:
            raise ValueError(f"unknown tolerance keys {sorted(bad)}")
        if any(v <= 0 for v in self.tolerances.values()):
            raise ValueError("tolerances must be positive")

    def tol(self, key):
        return self.tolerances.get(key, DEFAULT_TOLERANCES[key])

    @classmethod
    def from_dict(cls, data):
        known = set(cls.__dataclass_fields__)
        bad = set(data) - known
        if bad:
            raise ValueError(f"unknown config keys {sorted(bad)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self):
        return asdict(self)


def _mat_json(m):
    m = np.atleast_2d(np.asarray(m, dtype=np.complex128))
    return [[[float(v.real), float(v.imag)] for v in row] for row in m]


def _mat_load(data):
    arr = np.asarray(data, dtype=np.float64)
    return arr[..., 0] + 1j * arr[..., 1]


def _draw_dims(cfg, rng):
    lo, hi = int(cfg.dims[0]), int(cfg.dims[-1])
    return int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1))


def _draw_gap(cfg, rng):
    lo, hi = float(cfg.gap[0]), float(cfg.gap[-1])
    return lo if lo == hi else float(rng.uniform(lo, hi))


_HYPOTHESES = ("henorm", "hbpi", "hadl")


def generate_instance(cfg: ExperimentConfig, trial: int) -> dict:
    """Deterministic problem manifest for one trial (same seed, same bytes)."""
    rng = generate.rng_for(cfg.seed, trial)
    base = {"kind": cfg.kind, "seed": cfg.seed, "trial": trial}
    if cfg.kind == "sylvester-bench":
        na, nc = _draw_dims(cfg, rng)
        gap = _draw_gap(cfg, rng)
        layout = cfg.layouts[trial % len(cfg.layouts)]
        p = generate.sylvester_instance(rng, na, nc, gap, width=cfg.width, layout=layout)
        base.update(
            dim_a=na, dim_c=nc, gap=gap, layout=layout,
            matrices={"A": _mat_json(p.a.matrix), "C": _mat_json(p.c.matrix), "Y": _mat_json(p.y)},
        )
    elif cfg.kind == "riccati-solve":
        na, nc = _draw_dims(cfg, rng)
        gap = _draw_gap(cfg, rng)
        p = generate.riccati_instance(rng, na, nc, gap, margin=cfg.margin, width=cfg.width)
        base.update(
            dim_a=na, dim_c=nc, gap=gap, margin=cfg.margin,
            matrices={
                "A": _mat_json(p.a.matrix), "C": _mat_json(p.c.matrix),
                "B": _mat_json(p.b), "D": _mat_json(p.d),
            },
        )
    elif cfg.kind in ("blockdiag", "ssf-split", "homotopy"):
        n0, n1 = _draw_dims(cfg, rng)
        gap = _draw_gap(cfg, rng)
        if cfg.hypothesis == "all":
            hyp = _HYPOTHESES[trial % 3]
        else:
            hyp = cfg.hypothesis
        blk = generate.block_instance(
            rng, hyp, n0, n1, gap, margin=cfg.margin, width=cfg.width,
            coupling_scale=cfg.coupling_scale,
        )
        base.update(
            dim0=n0, dim1=n1, gap=gap, hypothesis=hyp,
            matrices={
                "A0": _mat_json(blk.a0.matrix), "A1": _mat_json(blk.a1.matrix),
                "B01": _mat_json(blk.b01),
            },
        )
        if cfg.kind == "homotopy":
            base["t_count"] = cfg.t_count
    elif cfg.kind == "friedrichs":
        factor = float(cfg.coupling_factors[trial % len(cfg.coupling_factors)])
        centers = rng.uniform(1.5 * cfg.d, 10.0 * cfg.d, size=3)
        widths = rng.uniform(0.5 * cfg.d, 3.0 * cfg.d, size=3)
        signs = rng.choice([-1.0, 1.0], size=3)
        base.update(
            d=cfg.d, factor=factor,
            centers=centers.tolist(), widths=widths.tolist(), signs=signs.tolist(),
            nodes_per_component=cfg.nodes_per_component,
        )
    elif cfg.kind == "sharpness":
        c = float(cfg.c_values[trial % len(cfg.c_values)])
        eps = cfg.eps_grid or np.geomspace(1e-4, 1.0, 13).tolist()
        base.update(d=cfg.d, c=c, eps_grid=[float(e) for e in eps],
                    nodes_per_component=cfg.nodes_per_component)
    else:
        raise ValueError(f"unhandled kind {cfg.kind!r}")
    return base


def _friedrichs_model(manifest):
    d = manifest["d"]
    centers = np.asarray(manifest["centers"])
    widths = np.asarray(manifest["widths"])
    signs = np.asarray(manifest["signs"])

    def coupling(mu):
        # smooth mixture, symmetric support, decaying into the bands
        t = abs(mu)
        val = sum(
            s * math.exp(-((t - c) ** 2) / (2.0 * w * w))
            for s, c, w in zip(signs, centers, widths)
        )
        return val * (1.0 if mu >= 0 else 0.7)

    model = FriedrichsModel.from_function(
        ((-math.inf, -d), (d, math.inf)), coupling,
        nodes_per_component=manifest["nodes_per_component"], truncation=50.0 * d,
    )
    target = manifest["factor"] * math.sqrt(2.0) * d
    scale = target / math.sqrt(model.norm_sq())
    return FriedrichsModel(model.support, model.nodes, model.weights,
                           scale * model.coupling, meta=model.meta)


def _check(checks, name, ok):
    checks[name] = bool(ok)
    return checks[name]


def _run_sylvester_trial(cfg, manifest):
    mats = manifest["matrices"]
    p = SylvesterProblem(_mat_load(mats["A"]), _mat_load(mats["C"]), _mat_load(mats["Y"]))
    x0 = solve_oracle(p)
    scale = float(np.linalg.norm(x0))
    checks, metrics = {}, {"gap": p.gap, "oracle_residual": sylvester_residual(x0, p)}
    d = p.gap
    for method in ("stieltjes", "double_stieltjes", "contour", "exponential", "fourier"):
        try:
            x = SOLVERS[method](p)
        except OrderingError:
            # one-sided ordering can legitimately fail; record, don't fail
            metrics[f"{method}_dev"] = float("nan")
            metrics[f"{method}_applicable"] = 0
            continue
        metrics[f"{method}_applicable"] = 1
        dev = float(np.linalg.norm(x - x0) / (scale if scale > 0 else 1.0))
        metrics[f"{method}_dev"] = dev
        _check(checks, f"{method}_dev", dev <= cfg.tol(f"{method}_dev"))
        slack = cfg.tol("bound_slack")
        op_margin = (math.pi / (2 * d)) * schatten_norm(p.y, np.inf) - schatten_norm(x, np.inf)
        hs_margin = schatten_norm(p.y, 2) / d - schatten_norm(x, 2)
        metrics[f"{method}_op_margin"] = op_margin
        metrics[f"{method}_hs_margin"] = hs_margin
        _check(checks, f"{method}_bounds", op_margin >= -slack and hs_margin >= -slack)
    return checks, metrics


def _run_riccati_trial(cfg, manifest):
    mats = manifest["matrices"]
    p = RiccatiProblem(
        _mat_load(mats["A"]), _mat_load(mats["C"]), _mat_load(mats["B"]), _mat_load(mats["D"])
    )
    cert = existence_report(p)
    checks, metrics = {}, {"gap": p.gap}
    if not cert.strong_condition:
        return None, {"reason": "strong certificate does not hold"}
    q, trace = iterate_stieltjes(p)
    slack = cfg.tol("bound_slack")
    metrics.update(
        iterations=trace.iterations,
        residual=trace.final_residual,
        q_norm=schatten_norm(q, np.inf),
        contraction=trace.observed_contraction,
    )
    _check(checks, "converged", trace.converged)
    _check(checks, "residual", trace.final_residual <= cfg.tol("riccati_residual"))
    from .core import ec_norm as _ec

    q_ec = _ec(q, p.c.decomposition)
    _check(checks, "ec_bound", q_ec <= cert.predicted_ec_bound + slack)
    _check(checks, "ball", schatten_norm(q, np.inf) < cert.ball_strong[1] + slack)
    if cert.weak_condition and cert.predicted_norm_bound is not None:
        _check(checks, "norm_bound", schatten_norm(q, np.inf) <= cert.predicted_norm_bound + slack)
    if cert.contraction_sum_strong:
        _check(checks, "strict_contraction", schatten_norm(q, np.inf) < 1.0)
    if cert.weak_condition:
        qf, _ = iterate_fourier(p)
        dev = float(np.linalg.norm(qf - q))
        metrics["cross_method_dev"] = dev
        _check(checks, "cross_method", dev <= cfg.tol("cross_method"))
    return checks, metrics


def _run_blockdiag_trial(cfg, manifest):
    mats = manifest["matrices"]
    blk = BlockOperatorMatrix(_mat_load(mats["A0"]), _mat_load(mats["A1"]), _mat_load(mats["B01"]))
    rep = hypothesis_report(blk)
    if not rep.any_holds():
        return None, {"reason": "no hypothesis holds"}
    q = solve_angular(blk)
    result = unitary_diagonalize(blk, q)
    h_scale = 1.0 + float(np.linalg.norm(blk.h.matrix))
    checks, metrics = {}, {
        "gap": rep.d,
        "hypothesis": manifest["hypothesis"],
        "angular_residual": q.residual(blk),
        "offdiag": result.off_diagonal_residual,
        "unitarity": result.unitarity_residual,
    }
    _check(checks, "angular_residual", q.residual(blk) <= cfg.tol("angular_residual"))
    _check(checks, "offdiag", result.off_diagonal_residual <= cfg.tol("offdiag_scale") * h_scale)
    _check(checks, "unitarity", result.unitarity_residual <= cfg.tol("unitarity"))
    full = np.sort(blk.h.eigenvalues)
    split = np.sort(np.concatenate([result.h0.eigenvalues, result.h1.eigenvalues]))
    metrics["spectra_match"] = float(np.max(np.abs(full - split)))
    _check(checks, "spectra_match", metrics["spectra_match"] <= cfg.tol("spectra_match"))
    if rep.hadl_holds and manifest["hypothesis"] == "hadl":
        lo, hi = rep.gap_interval
        slack = cfg.tol("separ_slack")
        low_first = not rep.hadl_swapped
        s0 = result.spectrum0
        s1 = result.spectrum1
        if low_first:
            ok = s0.max() <= lo + slack and s1.min() >= hi - slack
        else:
            ok = s1.max() <= lo + slack and s0.min() >= hi - slack
        _check(checks, "separ_inclusions", ok)
    return checks, metrics


def _run_ssf_split_trial(cfg, manifest):
    mats = manifest["matrices"]
    blk = BlockOperatorMatrix(_mat_load(mats["A0"]), _mat_load(mats["A1"]), _mat_load(mats["B01"]))
    rep = hypothesis_report(blk)
    if not rep.any_holds():
        return None, {"reason": "no hypothesis holds"}
    q = solve_angular(blk)
    split = splitting_check(blk, q)
    violations = vanishing_check(blk, q)
    checks, metrics = {}, {
        "hypothesis": manifest["hypothesis"],
        "max_deviation": split.max_deviation,
        "violations": len(violations),
    }
    _check(checks, "splitting_exact", split.equal)
    _check(checks, "vanishing", not violations)
    return checks, metrics


def _run_friedrichs_trial(cfg, manifest):
    model = _friedrichs_model(manifest)
    root = friedrichs_solve(model, residual_tol=cfg.tol("friedrichs_residual"))
    norm = math.sqrt(model.norm_sq())
    threshold = math.sqrt(2.0) * manifest["d"]
    checks, metrics = {}, {
        "coupling_norm": norm,
        "solvable": root is not None,
        "root": float("nan") if root is None else root.w,
        "residual": float("nan") if root is None else root.residual,
    }
    if norm <= threshold * (1.0 - 1e-6):
        _check(checks, "below_threshold_solvable", root is not None)
    if root is not None:
        _check(checks, "residual", root.residual <= cfg.tol("friedrichs_residual"))
    return checks, metrics


def _run_sharpness_trial(cfg, manifest):
    report = friedrichs_sharpness(
        manifest["d"], manifest["c"], eps_grid=manifest["eps_grid"],
        nodes_per_component=manifest["nodes_per_component"],
    )
    checks, metrics = {}, {
        "c": manifest["c"],
        "solvable_count": sum(r["solvable"] for r in report["rows"]),
        "eps_count": len(report["rows"]),
    }
    if manifest["c"] <= 1.0:
        _check(checks, "all_solvable", report["all_solvable"])
    else:
        _check(checks, "any_unsolvable", report["any_unsolvable"])
    return checks, metrics


def _run_homotopy_trial(cfg, manifest):
    mats = manifest["matrices"]
    blk = BlockOperatorMatrix(_mat_load(mats["A0"]), _mat_load(mats["A1"]), _mat_load(mats["B01"]))
    try:
        coarse = homotopy_scan(blk, manifest["t_count"])
        fine = homotopy_scan(blk, 2 * manifest["t_count"] - 1)
    except HypothesisError:
        return None, {"reason": "hypothesis fails along the homotopy"}
    ratio = coarse.max_step / fine.max_step if fine.max_step > 0 else float("nan")
    checks, metrics = {}, {
        "hypothesis": coarse.hypothesis,
        "max_step": coarse.max_step,
        "refined_max_step": fine.max_step,
        "step_ratio": ratio,
        "min_margin": min(coarse.min_margin, fine.min_margin),
    }
    # margin can be exactly zero at t = 0 under ordered spectra (closed inclusion)
    _check(checks, "margin_nonnegative", metrics["min_margin"] >= -cfg.tol("separ_slack"))
    if fine.max_step > 0:
        _check(
            checks, "linear_refinement",
            cfg.tol("step_ratio_lo") <= ratio <= cfg.tol("step_ratio_hi"),
        )
    return checks, metrics


_RUNNERS = {
    "sylvester-bench": _run_sylvester_trial,
    "riccati-solve": _run_riccati_trial,
    "blockdiag": _run_blockdiag_trial,
    "ssf-split": _run_ssf_split_trial,
    "friedrichs": _run_friedrichs_trial,
    "sharpness": _run_sharpness_trial,
    "homotopy": _run_homotopy_trial,
}


@dataclass
class CampaignReport:
    config: dict
    records: list
    aggregate: dict
    environment: dict
    timings: dict

    def deterministic_view(self):
        return {
            "config": self.config,
            "records": self.records,
            "aggregate": self.aggregate,
            "environment": self.environment,
        }


def _environment_stamp():
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "platform": platform.system(),
    }


def run_experiment(cfg: ExperimentConfig) -> CampaignReport:
    """Execute every trial of the campaign; write manifests/report if cfg.out set."""
    records = []
    timings = {}
    total_start = time.perf_counter()
    for trial in range(cfg.trials):
        manifest = generate_instance(cfg, trial)
        t0 = time.perf_counter()
        record = {"trial": trial, "instance": manifest, "error": None}
        try:
            checks, metrics = _RUNNERS[cfg.kind](cfg, manifest)
            if checks is None:
                record["status"] = "skip"
                record["checks"] = {}
                record["metrics"] = metrics
            else:
                record["status"] = "pass" if all(checks.values()) else "fail"
                record["checks"] = checks
                record["metrics"] = metrics
        except Exception as exc:  # per-trial errors are recorded, not fatal
            record["status"] = "fail"
            record["checks"] = {}
            record["metrics"] = {}
            record["error"] = f"{type(exc).__name__}: {exc}"
        timings[str(trial)] = time.perf_counter() - t0
        records.append(record)
    timings["total"] = time.perf_counter() - total_start

    statuses = [r["status"] for r in records]
    aggregate = {
        "trials": len(records),
        "passes": statuses.count("pass"),
        "failures": statuses.count("fail"),
        "skips": statuses.count("skip"),
    }
    failed_checks = sorted(
        {name for r in records for name, ok in r.get("checks", {}).items() if not ok}
    )
    aggregate["failed_checks"] = failed_checks
    expect_failures = []
    for key, wanted in (cfg.expect or {}).items():
        if key == "zero_failures":
            got = aggregate["failures"] == 0
        elif key == "all_pass":
            got = aggregate["passes"] == aggregate["trials"]
        elif key == "min_passes":
            got = aggregate["passes"] >= wanted
            wanted = True
        else:
            raise ValueError(f"unknown expectation {key!r}")
        if bool(got) != bool(wanted):
            expect_failures.append(key)
    aggregate["expect_failures"] = expect_failures
    aggregate["ok"] = aggregate["failures"] == 0 and not expect_failures

    report = CampaignReport(
        config=cfg.to_dict(),
        records=records,
        aggregate=aggregate,
        environment=_environment_stamp(),
        timings=timings,
    )
    if cfg.out:
        emit_report(report, cfg.out)
    return report


def emit_report(report: CampaignReport, out_dir, stem="report"):
    """Write report.json / report.csv / timings.json; re-emission is byte-identical."""
    os.makedirs(out_dir, exist_ok=True)
    json_path = os.path.join(out_dir, f"{stem}.json")
    with open(json_path, "w") as f:
        json.dump(report.deterministic_view(), f, indent=2, sort_keys=True)
        f.write("\n")
    csv_path = os.path.join(out_dir, f"{stem}.csv")
    metric_keys = sorted({k for r in report.records for k in r.get("metrics", {})})
    with open(csv_path, "w") as f:
        f.write(",".join(["trial", "status", "error"] + metric_keys) + "\n")
        for r in report.records:
            row = [str(r["trial"]), r["status"], (r["error"] or "").replace(",", ";")]
            for k in metric_keys:
                v = r["metrics"].get(k, "")
                row.append(repr(v) if isinstance(v, float) else str(v))
            f.write(",".join(row) + "\n")
    timing_path = os.path.join(out_dir, f"{stem}_timings.json")
    with open(timing_path, "w") as f:
        json.dump(report.timings, f, indent=2, sort_keys=True)
        f.write("\n")
    manifest_dir = os.path.join(out_dir, "instances")
    os.makedirs(manifest_dir, exist_ok=True)
    for r in report.records:
        with open(os.path.join(manifest_dir, f"trial_{r['trial']:04d}.json"), "w") as f:
            json.dump(r["instance"], f, indent=2, sort_keys=True)
            f.write("\n")
    return {"json": json_path, "csv": csv_path, "timings": timing_path}


def load_report(path) -> dict:
    """Parse an emitted JSON report back into its deterministic view."""
    with open(path) as f:
        return json.load(f)
