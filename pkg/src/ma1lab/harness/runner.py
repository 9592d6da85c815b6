"""Replicated experiments: simulate, estimate, compare with the zero sets."""

from __future__ import annotations

import csv
import json
import math
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..estimator import rm_decomposition, run, t_delta_bracket
from ..simulate import InnovationSpec, simulate
from ..spectral import loss
from ..zerosets import ZeroSet, find_minimizers, find_zero_set
from .config import ExperimentConfig

SUMMARY_COLUMNS = (
    "beta", "replication", "seed", "theta_T", "distance", "loss_T", "clip_count", "k_star",
    "theta_hat_T", "theta_hat_gap_T", "theta_hat_gap_T10", "gamma_tail_max",
    "t_delta_min", "t_delta_max", "t_delta_lo", "t_delta_hi", "t_delta_ok",
    "recon_residual", "phi_ratio_min",
)
DIAGNOSTIC_COLUMNS = ("t", "theta", "theta_hat", "abs_diff", "t_delta", "gamma", "phi2_avg")


class NumericFailure(RuntimeError):
    """A numeric error inside one replication, with its (beta, replication) attached."""

    def __init__(self, beta, rep, cause):
        super().__init__(f"beta={beta:g} replication={rep}: {type(cause).__name__}: {cause}")
        self.beta, self.rep, self.cause = beta, rep, cause


def fmt(x) -> str:
    """Locale-independent 17-significant-digit float text."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def stream_seed(base: int, beta_index: int, rep: int) -> int:
    """Seed for (beta index, replication), independent of how many betas exist."""
    ss = np.random.SeedSequence(base, spawn_key=(beta_index, rep))
    return int(ss.generate_state(1, np.uint64)[0])


def beta_tag(beta: float) -> str:
    return format(beta, "g")


@dataclass
class _Task:
    cfg: ExperimentConfig
    beta_index: int
    rep: int
    zero_thetas: tuple
    out: str | None


def _replicate(task: _Task) -> dict:
    cfg = task.cfg
    beta = cfg.betas[task.beta_index]
    seed = stream_seed(cfg.seed, task.beta_index, task.rep)
    try:
        return _replicate_inner(cfg, beta, task, seed)
    except (ArithmeticError, ValueError) as exc:
        raise NumericFailure(beta, task.rep, exc) from exc


def _replicate_inner(cfg: ExperimentConfig, beta: float, task: _Task, seed: int) -> dict:
    innov = InnovationSpec(cfg.innovation.law, seed)
    path = simulate(cfg.model, innov, cfg.T, cfg.burn_in)
    traj = run(path.y, beta, cfg.monitor_for(beta))
    k = traj.k_star
    dec = rm_decomposition(traj.theta, k, cfg.model, beta, cfg.quadrature)
    n = len(dec.theta_hat)
    gap = np.abs(traj.theta[:n] - dec.theta_hat)
    t_idx = np.arange(1, n + 1)
    t_delta = t_idx * dec.delta
    lo, hi = t_delta_bracket(cfg.model, dec.k_bound, cfg.quadrature)
    phi2_avg = np.cumsum(traj.phi ** 2) / np.arange(1, cfg.T + 1)
    half = cfg.T // 2
    tail = dec.gamma[int(0.9 * n):]
    zs = np.asarray(task.zero_thetas)
    theta_T = float(traj.theta[-1])
    i10 = max(0, cfg.T // 10 - 1)
    row = {
        "beta": beta,
        "replication": task.rep,
        "seed": seed,
        "theta_T": theta_T,
        "distance": float(np.min(np.abs(zs - theta_T))),
        "loss_T": float(loss(cfg.model, theta_T, cfg.quadrature)) if abs(theta_T) < 1 else math.inf,
        "clip_count": len(traj.clip_events),
        "k_star": k,
        "theta_hat_T": float(dec.theta_hat[-1]),
        "theta_hat_gap_T": float(gap[-1]),
        "theta_hat_gap_T10": float(gap[min(i10, n - 1)]),
        "gamma_tail_max": float(np.nanmax(np.abs(tail))) if np.isfinite(tail).any() else math.nan,
        "t_delta_min": float(t_delta.min()),
        "t_delta_max": float(t_delta.max()),
        "t_delta_lo": lo,
        "t_delta_hi": hi,
        "t_delta_ok": bool(t_delta.min() >= lo and t_delta.max() <= hi),
        "recon_residual": dec.residual,
        "phi_ratio_min": float(phi2_avg[half:].min() / path.model.sigma2),
    }
    if task.out is not None:
        out = Path(task.out)
        tag = f"{beta_tag(beta)}_{task.rep}"
        if cfg.write_trajectories:
            traj.to_csv(out / f"traj_{tag}.csv", cfg.trajectory_stride)
        _write_diagnostics(out / f"diagnostics_{tag}.csv", traj, dec, gap, t_delta, phi2_avg, cfg.diagnostics_stride)
    return row


def _write_diagnostics(path, traj, dec, gap, t_delta, phi2_avg, stride):
    n = len(gap)
    idx = np.arange(0, n, stride)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DIAGNOSTIC_COLUMNS)
        for i in idx:
            w.writerow([i + 1, fmt(traj.theta[i]), fmt(dec.theta_hat[i]), fmt(gap[i]), fmt(t_delta[i]),
                        fmt(dec.gamma[i]), fmt(phi2_avg[i])])


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail or fmt(self.value)} (threshold {fmt(self.threshold)})"


@dataclass
class ExperimentResult:
    rows: list
    zero_sets: dict
    aggregates: dict
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def rows_for(self, beta: float) -> list:
        return [r for r in self.rows if r["beta"] == beta]


def _aggregate(cfg: ExperimentConfig, rows: list, zero_sets: dict) -> dict:
    agg = {"per_beta": {}}
    for b in cfg.betas:
        rs = [r for r in rows if r["beta"] == b]
        d = np.array([r["distance"] for r in rs])
        agg["per_beta"][beta_tag(b)] = {
            "mean_distance": float(d.mean()),
            "max_distance": float(d.max()),
            "mean_loss": float(np.mean([r["loss_T"] for r in rs])),
            "median_theta_hat_gap_T": float(np.median([r["theta_hat_gap_T"] for r in rs])),
            "median_theta_hat_gap_T10": float(np.median([r["theta_hat_gap_T10"] for r in rs])),
            "max_gamma_tail": float(np.nanmax([r["gamma_tail_max"] for r in rs])),
            "min_phi_ratio": float(min(r["phi_ratio_min"] for r in rs)),
            "all_t_delta_ok": bool(all(r["t_delta_ok"] for r in rs)),
            "max_recon_residual": float(max(r["recon_residual"] for r in rs)),
            "zero_set": list(zero_sets[b].thetas),
        }
    if 0.0 in cfg.betas and 1.0 in cfg.betas:
        z0, z1 = zero_sets[0.0].thetas, zero_sets[1.0].thetas
        sep = float(np.min(np.abs(np.subtract.outer(z0, z1))))
        mins = find_minimizers(cfg.model, cfg.grid_points, cfg.root_tol, cfg.quadrature)
        l_min = float(np.min(loss(cfg.model, np.asarray(mins.thetas), cfg.quadrature)))
        l_plr = float(np.min(loss(cfg.model, np.asarray(z0), cfg.quadrature)))
        agg["cross_beta"] = {
            "zeroset_separation": sep,
            "oracle_loss_gap": l_plr - l_min,
            "minimizers": list(mins.thetas),
        }
    return agg


def evaluate_checks(cfg: ExperimentConfig, agg: dict) -> list:
    """Compare aggregates with the thresholds of the [check] section."""
    c = cfg.checks
    out = []
    per = agg["per_beta"]
    for tag, a in per.items():
        if "max_mean_distance" in c:
            v = c["max_mean_distance"]
            out.append(Check(f"mean distance beta={tag}", a["mean_distance"] < v, a["mean_distance"], v))
        if "max_theta_hat_gap" in c:
            v = c["max_theta_hat_gap"]
            g, g10 = a["median_theta_hat_gap_T"], a["median_theta_hat_gap_T10"]
            out.append(Check(f"median |theta_T - theta_hat_T| beta={tag}", g < v, g, v))
            out.append(Check(f"median gap decreasing T/10 -> T beta={tag}", g < g10, g, g10,
                             f"{fmt(g10)} -> {fmt(g)}"))
        if "max_gamma_tail" in c:
            v = c["max_gamma_tail"]
            out.append(Check(f"max |gamma_t| over last decile beta={tag}", a["max_gamma_tail"] < v, a["max_gamma_tail"], v))
        if "min_phi_ratio" in c:
            v = c["min_phi_ratio"]
            out.append(Check(f"min (1/t) sum phi^2 / sigma2 beta={tag}", a["min_phi_ratio"] >= v, a["min_phi_ratio"], v))
        if "t_delta_bracket" in c:
            out.append(Check(f"t delta_t within bracket beta={tag}", a["all_t_delta_ok"], float(a["all_t_delta_ok"]), 1.0))
        if "max_recon_residual" in c:
            v = c["max_recon_residual"]
            out.append(Check(f"theta_hat reconstruction beta={tag}", a["max_recon_residual"] < v, a["max_recon_residual"], v))
    cross = agg.get("cross_beta")
    if cross is not None:
        if "min_zeroset_separation" in c:
            v = c["min_zeroset_separation"]
            out.append(Check("zero-set separation beta 0 vs 1", cross["zeroset_separation"] >= v, cross["zeroset_separation"], v))
        if "loss_gap_fraction" in c:
            v = c["loss_gap_fraction"]
            margin = v * cross["oracle_loss_gap"]
            diff = per["0"]["mean_loss"] - per["1"]["mean_loss"]
            out.append(Check("mean loss beta=1 below beta=0 by margin", diff > margin, diff, margin))
    return out


def run_experiment(cfg: ExperimentConfig, out=None) -> ExperimentResult:
    """Run every (beta, replication) pair and write the outputs to ``out``."""
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
    zero_sets = {b: find_zero_set(cfg.model, b, cfg.grid_points, cfg.root_tol, cfg.quadrature) for b in cfg.betas}
    tasks = [
        _Task(cfg, bi, rep, zero_sets[b].thetas, None if out is None else str(out))
        for bi, b in enumerate(cfg.betas)
        for rep in range(cfg.replications)
    ]
    if cfg.threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as ex:
            rows = list(ex.map(_replicate, tasks))
    else:
        rows = [_replicate(t) for t in tasks]
    agg = _aggregate(cfg, rows, zero_sets)
    res = ExperimentResult(rows, zero_sets, agg, evaluate_checks(cfg, agg))
    if out is not None:
        _write_outputs(cfg, res, out)
    return res


def _write_outputs(cfg: ExperimentConfig, res: ExperimentResult, out: Path) -> None:
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in res.rows:
            w.writerow([fmt(r[c]) for c in SUMMARY_COLUMNS])
    for b, zs in res.zero_sets.items():
        zs.to_csv(out / f"zeroset_{beta_tag(b)}.csv")
    manifest = {
        "config_hash": cfg.config_hash,
        "config": json.loads(cfg.canonical()),
        "versions": {
            "ma1lab": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "seeds": {f"{beta_tag(b)}_{rep}": stream_seed(cfg.seed, bi, rep)
                  for bi, b in enumerate(cfg.betas) for rep in range(cfg.replications)},
        "aggregates": res.aggregates,
        "checks": [{"name": c.name, "passed": c.passed, "value": c.value, "threshold": c.threshold}
                   for c in res.checks],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# -- diagnose ----------------------------------------------------------------


class MissingArtifactError(FileNotFoundError):
    pass


@dataclass
class DiagnosticReport:
    series: dict  # (beta tag, rep) -> dict of arrays
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list:
        return [c.line() for c in self.checks]


def _read_csv(path: Path) -> dict:
    if not path.exists():
        raise MissingArtifactError(f"missing artifact {path}")
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        head = next(rd)
        data = np.array([[float(v) for v in row] for row in rd])
    return {h: data[:, i] for i, h in enumerate(head)}


def diagnose(run_dir, betas=None, reps=None, gap_tol: float = 0.02, phi_ratio: float = 0.9) -> DiagnosticReport:
    """Re-check the approximation diagnostics of a finished experiment.

    Reads ``manifest.json``, ``summary.csv`` and ``diagnostics_<beta>_<rep>.csv``
    and tests, per beta over the selected replications: the median final gap
    |theta_t - theta_hat_t| against ``gap_tol`` and its decrease from t = T/10,
    t delta_t against the bracket, and (1/t) sum phi^2 >= phi_ratio sigma2
    for t > T/2.
    """
    run_dir = Path(run_dir)
    mpath = run_dir / "manifest.json"
    if not mpath.exists():
        raise MissingArtifactError(f"missing artifact {mpath}")
    manifest = json.loads(mpath.read_text())
    summary = _read_csv(run_dir / "summary.csv")
    conf = manifest["config"]
    T = int(conf["T"])
    sigma2 = float(conf["model"].get("sigma2", 1.0))
    all_betas = [float(b) for b in conf["betas"]]
    betas = all_betas if betas is None else [float(b) for b in betas]
    reps = range(int(conf["replications"])) if reps is None else reps
    series, checks = {}, []
    for b in betas:
        tag = beta_tag(b)
        gT, g10, td_ok, phi_min = [], [], True, math.inf
        for r in reps:
            d = _read_csv(run_dir / f"diagnostics_{tag}_{r}.csv")
            series[(tag, r)] = d
            t = d["t"]
            gT.append(d["abs_diff"][-1])
            g10.append(d["abs_diff"][np.searchsorted(t, T // 10)])
            sel = (summary["beta"] == b) & (summary["replication"] == r)
            if not sel.any():
                raise MissingArtifactError(f"summary has no row for beta={tag} replication={r}")
            lo, hi = summary["t_delta_lo"][sel][0], summary["t_delta_hi"][sel][0]
            td = d["t_delta"]
            td_ok &= bool(td.min() >= lo and td.max() <= hi)
            phi_min = min(phi_min, float(d["phi2_avg"][t > T / 2].min()) / sigma2)
        mT, m10 = float(np.median(gT)), float(np.median(g10))
        checks.append(Check(f"median |theta_T - theta_hat_T| beta={tag}", mT < gap_tol, mT, gap_tol))
        checks.append(Check(f"median gap decreasing T/10 -> T beta={tag}", mT < m10, mT, m10, f"{fmt(m10)} -> {fmt(mT)}"))
        checks.append(Check(f"t delta_t within bracket beta={tag}", td_ok, float(td_ok), 1.0))
        checks.append(Check(f"(1/t) sum phi^2 / sigma2 for t > T/2 beta={tag}", phi_min >= phi_ratio, phi_min, phi_ratio))
    return DiagnosticReport(series, checks)


def write_report(report: DiagnosticReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["check", "passed", "value", "threshold"])
        for c in report.checks:
            w.writerow([c.name, int(c.passed), fmt(c.value), fmt(c.threshold)])


def versions() -> str:
    return f"ma1lab {__version__}, python {sys.version.split()[0]}, numpy {np.__version__}, scipy {scipy.__version__}"
