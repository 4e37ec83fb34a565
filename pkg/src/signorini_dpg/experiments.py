"""Configured experiment runs writing per-level CSV tables and a JSON summary."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import mesh as meshes
from .estimator import LevelResult, adaptive_loop
from .postproc import balanced_ratio, convergence_rates
from .problems import lshape_load, solution_for
from .spaces import VARIANTS, ProblemKind

log = logging.getLogger(__name__)

EXPERIMENTS = ("smooth", "lshape", "reaction-diffusion")
ALIASES = {"rd": "reaction-diffusion"}
DEFAULT_EPSILONS = (1e-2, 1e-4, 1e-6, 1e-8)


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    experiment: str = "smooth"
    variant: str = "s"
    refinement: str = "uniform"
    epsilons: tuple = DEFAULT_EPSILONS
    beta: float | None = None
    theta: float = 0.5
    max_elems: int = 30_000
    max_dofs: int | None = None
    out: str = "results"
    seed: int = 0
    # manufactured solution of the reaction-diffusion study
    solution: str = "boundary-layer"
    dump_meshes: bool = True

    def __post_init__(self):
        self.experiment = ALIASES.get(self.experiment, self.experiment)
        self.epsilons = tuple(float(e) for e in self.epsilons)

    @property
    def perturbed(self) -> bool:
        return self.experiment == "reaction-diffusion"

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
        if self.refinement not in ("uniform", "adaptive"):
            raise ConfigError("refinement must be 'uniform' or 'adaptive'")
        if not 0 < self.theta <= 1:
            raise ConfigError("theta must lie in (0, 1]")
        if self.max_elems < 1:
            raise ConfigError("max_elems must be positive")
        if self.perturbed:
            if self.variant != "s":
                raise ConfigError("the reaction-diffusion study uses the symmetric variant only")
            if not self.epsilons or any(not 0 < e <= 1 for e in self.epsilons):
                raise ConfigError("epsilons must lie in (0, 1]")
            if self.solution not in ("boundary-layer", "contact-layer"):
                raise ConfigError("solution must be 'boundary-layer' or 'contact-layer'")
        beta_min = 3.0 if self.perturbed else 2.0
        if self.beta is not None and self.beta < beta_min:
            raise ConfigError(f"beta must be at least {beta_min:g}")
        return self

    def kinds(self):
        if self.perturbed:
            return [ProblemKind.singularly_perturbed(e, self.beta or 3.0) for e in self.epsilons]
        return [ProblemKind.unperturbed(self.variant, self.beta or 2.0)]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**known)


def code_fingerprint() -> str:
    """sha256 over the package sources."""
    h = hashlib.sha256()
    for p in sorted(Path(__file__).parent.glob("*.py")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()


CSV_FIELDS = ["level", "N_T", "dofs", "err_u", "err_sigma", "err_rho", "err_uhat", "err_uhat_a",
              "err_uhat_b", "err_sighat", "err_sighat_a", "err_sighat_b", "err_total", "eta_T",
              "eta_SGamma", "eta", "ratio", "reliability", "pdas_iterations", "kkt_residual"]


def level_row(res: LevelResult) -> dict:
    r = res.report
    row = {"level": res.level, "N_T": res.n_elements, "dofs": res.n_dofs,
           "eta_T": r.eta_volume, "eta_SGamma": r.eta_boundary, "eta": r.eta,
           "pdas_iterations": res.state.iterations, "kkt_residual": res.state.kkt_residual}
    m = res.metrics
    if m is not None:
        row.update(m.as_dict())
        if r.eta_volume > 0:
            row["ratio"] = balanced_ratio(m, r)
        if r.eta > 0:
            row["reliability"] = m.err_total / r.eta
    return row


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path, rows, fields=None):
    fields = fields or [f for f in CSV_FIELDS if any(f in r for r in rows)]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r.get(f)) for f in fields])
    return fields


def fitted_rates(rows) -> dict:
    """Least-squares rates over the last half of the levels for every column."""
    out = {}
    N = [r["N_T"] for r in rows]
    for key in ("err_u", "err_sigma", "err_rho", "err_uhat", "err_uhat_a", "err_uhat_b",
                "err_sighat", "err_sighat_a", "err_sighat_b", "err_total", "eta_T",
                "eta_SGamma", "eta"):
        vals = [r.get(key) for r in rows]
        if len(rows) < 2 or any(v is None for v in vals):
            continue
        # longest positive suffix (boundary indicators may vanish on coarse meshes)
        start = len(vals)
        while start > 0 and vals[start - 1] > 0:
            start -= 1
        tail = range(start, len(vals))
        if len(tail) < 2:
            continue
        out[key] = convergence_rates([N[i] for i in tail], [vals[i] for i in tail])[1]
    return out


def _mesh_levels(n):
    return sorted({0, n // 2, n - 1})


def run_case(config: ExperimentConfig, kind: ProblemKind, on_level=None):
    """Run one adaptive or uniform sequence; return (rows, results)."""
    if config.experiment == "lshape":
        mesh, f, exact = meshes.make_lshape(), lshape_load, None
    elif config.experiment == "smooth":
        exact = solution_for("smooth")
        mesh, f = meshes.make_rectangle(), exact.f
    else:
        exact = solution_for(config.solution, kind.epsilon)
        mesh, f = meshes.make_rectangle(), exact.f
    results = adaptive_loop(kind, mesh, f, max_elems=config.max_elems, max_dofs=config.max_dofs,
                            theta=config.theta, uniform=config.refinement == "uniform",
                            exact=exact, on_level=on_level)
    return [level_row(r) for r in results], results


def case_name(config: ExperimentConfig, kind: ProblemKind) -> str:
    base = f"{config.experiment}_{config.refinement}"
    if config.perturbed:
        return f"{base}_{config.solution}_eps{kind.epsilon:.0e}"
    return f"{base}_{kind.star}"


def run_experiment(config: ExperimentConfig) -> dict:
    """Run every case of a configuration and write CSV, JSON and mesh dumps."""
    config.validate()
    np.random.seed(config.seed)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"config": asdict(config), "version": __version__,
               "fingerprint": code_fingerprint(), "python": platform.python_version(),
               "numpy": np.__version__, "cases": {}}
    for kind in config.kinds():
        name = case_name(config, kind)
        log.info("running %s", name)
        rows, results = run_case(config, kind)
        write_csv(out / f"{name}.csv", rows)
        case = {"levels": len(rows), "final_N_T": rows[-1]["N_T"],
                "fitted_rates": fitted_rates(rows)}
        if "ratio" in rows[-1]:
            case["final_ratios"] = [r["ratio"] for r in rows[-3:]]
        if "reliability" in rows[-1]:
            case["max_reliability_after_level_2"] = max(
                (r["reliability"] for r in rows[2:]), default=None)
        if config.dump_meshes and config.refinement == "adaptive":
            for k in _mesh_levels(len(results)):
                meshes.dump(results[k].mesh, out / f"{name}_mesh{k:02d}.txt")
        summary["cases"][name] = case
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary
