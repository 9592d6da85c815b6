"""Experiment configuration files.

Configs are INI files read with :mod:`configparser`::

    [model]
    kind = arma            ; arma | white_noise | bloomfield
    ar = 0.5               ; space- or comma-separated coefficients
    ma =
    sigma2 = 1.0

    [innovation]
    law = uniform          ; uniform | rademacher | truncated_gaussian
    ; either the law's own parameters (half_width / scale / sd + bound)
    ; or nothing, in which case the law is scaled to variance sigma2

    [run]
    T = 100000
    replications = 20
    betas = 0 1
    seed = 20240611
    burn_in = 500
    threads = 1
    write_trajectories = true
    trajectory_stride = 100
    diagnostics_stride = 100

    [monitor]
    enabled = auto         ; auto (on for beta > 0) | true | false
    k_star_cap = 0.99

    [quadrature]
    initial_nodes = 256
    rel_tol = 1e-10
    max_doublings = 12

    [zeroset]
    grid_points = 2001
    root_tol = 1e-10

    [check]                ; thresholds used by --check, all optional
    max_mean_distance = 0.03
    max_theta_hat_gap = 0.02
    max_gamma_tail = 0.05
    min_phi_ratio = 0.9
    loss_gap_fraction = 0.5
    min_zeroset_separation = 1e-3
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..estimator import MonitorConfig
from ..simulate import InnovationSpec, innovation_from_config
from ..spectral import ModelError, QuadratureSpec, SpectralModel, model_from_config


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


SECTIONS = ("model", "innovation", "run", "monitor", "quadrature", "zeroset", "check")


@dataclass(frozen=True)
class ExperimentConfig:
    model: SpectralModel
    innovation: InnovationSpec
    T: int
    replications: int
    betas: tuple
    monitor: str | MonitorConfig = "auto"
    k_star_cap: float = 0.99
    seed: int = 0
    burn_in: int = 500
    threads: int = 1
    quadrature: QuadratureSpec = QuadratureSpec(256, 1e-10, 12)
    grid_points: int = 2001
    root_tol: float = 1e-10
    write_trajectories: bool = True
    trajectory_stride: int = 1
    diagnostics_stride: int = 1
    checks: dict = field(default_factory=dict)
    source_text: str = field(default="", repr=False, compare=False)

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.T < 100:
            raise ConfigError("T must be >= 100")
        if not self.betas:
            raise ConfigError("betas must be nonempty")
        if any(not 0.0 <= b <= 1.0 for b in self.betas):
            raise ConfigError("betas must lie in [0, 1]")
        if len(set(self.betas)) != len(self.betas):
            raise ConfigError("betas must be distinct")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be >= 0")
        if self.trajectory_stride < 1 or self.diagnostics_stride < 1:
            raise ConfigError("strides must be >= 1")

    def monitor_for(self, beta: float) -> MonitorConfig:
        if isinstance(self.monitor, MonitorConfig):
            return self.monitor
        return MonitorConfig(beta > 0, self.k_star_cap)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def canonical(self) -> str:
        """Key-sorted JSON of the resolved settings (used for hashing)."""
        mon = {"enabled": self.monitor if isinstance(self.monitor, str) else self.monitor.enabled,
               "k_star_cap": self.k_star_cap}
        d = {
            "model": self.model.to_config(),
            "innovation": self.innovation.to_config(),
            "T": self.T, "replications": self.replications, "betas": list(self.betas),
            "monitor": mon, "seed": self.seed, "burn_in": self.burn_in,
            "quadrature": vars(self.quadrature), "grid_points": self.grid_points,
            "root_tol": self.root_tol, "write_trajectories": self.write_trajectories,
            "trajectory_stride": self.trajectory_stride,
            "diagnostics_stride": self.diagnostics_stride, "checks": self.checks,
        }
        return json.dumps(d, sort_keys=True, default=float)

    def with_overrides(self, seed=None, threads=None) -> "ExperimentConfig":
        kw = {}
        if seed is not None:
            kw["seed"] = int(seed)
        if threads is not None:
            kw["threads"] = int(threads)
        return replace(self, **kw) if kw else self


def _section(cp, name) -> dict:
    return dict(cp[name]) if cp.has_section(name) else {}


def _bool(v: str) -> bool:
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    unknown = set(cp.sections()) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    for req in ("model", "run"):
        if not cp.has_section(req):
            raise ConfigError(f"missing [{req}] section")
    try:
        model = model_from_config(_section(cp, "model"))
        inn = _section(cp, "innovation")
        run = _section(cp, "run")
        seed = int(run.get("seed", 0))
        law_params = {k: v for k, v in inn.items() if k != "law"}
        if law_params:
            innov = innovation_from_config({**inn, "seed": seed})
        else:
            innov = InnovationSpec.matching(model.sigma2, inn.get("law", "uniform").strip().lower(), seed)
        if abs(innov.variance - model.sigma2) > 1e-9 * model.sigma2:
            raise ConfigError(f"innovation variance {innov.variance:.12g} differs from model sigma2 {model.sigma2:.12g}")
        mon = _section(cp, "monitor")
        enabled = mon.get("enabled", "auto").strip().lower()
        cap = float(mon.get("k_star_cap", 0.99))
        monitor = "auto" if enabled == "auto" else MonitorConfig(_bool(enabled), cap)
        q = _section(cp, "quadrature")
        quad = QuadratureSpec(
            int(q.get("initial_nodes", 256)), float(q.get("rel_tol", 1e-10)), int(q.get("max_doublings", 12))
        )
        zs = _section(cp, "zeroset")
        betas = tuple(float(b) for b in run.get("betas", "0 1").replace(",", " ").split())
        checks = {k: float(v) for k, v in _section(cp, "check").items()}
        return ExperimentConfig(
            model=model,
            innovation=innov,
            T=int(run.get("t", 1000)),
            replications=int(run.get("replications", 1)),
            betas=betas,
            monitor=monitor,
            k_star_cap=cap,
            seed=seed,
            burn_in=int(run.get("burn_in", 500)),
            threads=int(run.get("threads", 1)),
            quadrature=quad,
            grid_points=int(zs.get("grid_points", 2001)),
            root_tol=float(zs.get("root_tol", 1e-10)),
            write_trajectories=_bool(run.get("write_trajectories", "true")),
            trajectory_stride=int(run.get("trajectory_stride", 1)),
            diagnostics_stride=int(run.get("diagnostics_stride", 1)),
            checks=checks,
            source_text=text,
        )
    except ConfigError:
        raise
    except (ValueError, ModelError, KeyError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)
