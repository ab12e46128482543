"""Batch experiment harness: config ingestion, runs, and result emission.

A single JSON document describes one experiment; the CLI passes its path plus
optional flag overrides.  Outputs per run: a per-trial CSV, trajectory CSVs
when sampling is enabled, a summary JSON embedding the full config echo, and
PNG figures next to the delimited files.  All floats in CSV/JSON are written
with 17 significant digits and trials are seeded from (master seed, trial
index), so identical configs reproduce identical bytes (the wall_ms column is
the one physically nondeterministic field).
"""

from __future__ import annotations

import dataclasses
import multiprocessing
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analysis import (
    certify_equilibrium,
    lagrange_residual,
    maximize_f,
    potential,
    solve_integer_program,
    solve_minlp,
    spectral_certificate,
    synchronization_bound,
)
from .dynamics import (
    FlowConfig,
    SwarmState,
    TerminationReason,
    embed_circle,
    integrate,
    max_edge_distance,
    random_swarm,
    twisted_orbit_distance,
    twisted_state,
)
from .errors import ConfigError
from .graph import Graph, from_spec, is_connected
from .seeding import derive_rng, derive_seed
from . import reporting

MODES = ("monte_carlo", "counterexample", "certify", "maximize_f", "integer_programs")

#: Certificate thresholds applied in certification runs.
MAX_F_TOL = 1e-8
GRAMIAN_TOL = 1e-4
LAGRANGE_TOL = 1e-6
EIGENVALUE_TOL = 1e-4

_CONFIG_KEYS = {
    "mode",
    "manifold",
    "graph",
    "trials",
    "seed",
    "step",
    "max_time",
    "grad_tol",
    "consensus_tol",
    "record_every",
    "method",
    "out_dir",
    "threads",
    "multistarts",
    "cycle_sizes",
    "perturbation",
    "minlp_grid",
}


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: manifold, topology, budget, seeding, and output paths."""

    mode: str
    manifold: tuple[int, int] | None = None
    graph: dict | None = None
    trials: int = 100
    seed: int = 0
    step: float | None = None
    max_time: float = 300.0
    grad_tol: float = 1e-8
    consensus_tol: float = 1e-6
    record_every: int = 0
    method: str = "euler"
    out_dir: str = "results"
    threads: int | None = None
    multistarts: int = 32
    cycle_sizes: tuple[int, ...] = (3, 4, 5, 6)
    perturbation: float = 1e-2
    minlp_grid: int = 101

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.manifold is not None:
            n, p = self.manifold
            if not 1 <= p < n:
                raise ConfigError(f"manifold needs 1 <= p < n, got (n, p) = ({n}, {p})")
        if self.mode in ("monte_carlo", "certify", "maximize_f", "integer_programs"):
            if self.manifold is None:
                raise ConfigError(f"mode {self.mode!r} requires a manifold {{n, p}}")
        if self.mode == "monte_carlo" and self.graph is None:
            raise ConfigError("mode 'monte_carlo' requires a graph spec")
        if not self.perturbation > 0:
            raise ConfigError("perturbation must be positive")
        if self.multistarts < 1:
            raise ConfigError("multistarts must be >= 1")
        if self.threads is not None and self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if any(n < 3 for n in self.cycle_sizes):
            raise ConfigError("cycle_sizes must all be >= 3")
        # Reuse FlowConfig validation for the integrator fields.
        self.flow_config()

    def flow_config(self) -> FlowConfig:
        return FlowConfig(
            step=self.step,
            max_time=self.max_time,
            grad_tol=self.grad_tol,
            consensus_tol=self.consensus_tol,
            record_every=self.record_every,
            method=self.method,
        )

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise ConfigError(f"config must be a JSON object, got {type(doc).__name__}")
        unknown = set(doc) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "mode" not in doc:
            raise ConfigError("config needs a 'mode'")
        manifold = doc.get("manifold")
        if manifold is not None:
            if not isinstance(manifold, dict) or set(manifold) != {"n", "p"}:
                raise ConfigError('manifold must be an object {"n": int, "p": int}')
            manifold = (int(manifold["n"]), int(manifold["p"]))
        kwargs = {
            "mode": doc["mode"],
            "manifold": manifold,
            "graph": doc.get("graph"),
        }
        for key, cast in (
            ("trials", int),
            ("seed", int),
            ("max_time", float),
            ("grad_tol", float),
            ("consensus_tol", float),
            ("record_every", int),
            ("method", str),
            ("out_dir", str),
            ("multistarts", int),
            ("perturbation", float),
            ("minlp_grid", int),
        ):
            if key in doc:
                kwargs[key] = cast(doc[key])
        if "step" in doc:
            kwargs["step"] = None if doc["step"] is None else float(doc["step"])
        if "threads" in doc:
            kwargs["threads"] = None if doc["threads"] is None else int(doc["threads"])
        if "cycle_sizes" in doc:
            kwargs["cycle_sizes"] = tuple(int(x) for x in doc["cycle_sizes"])
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        doc = {
            "mode": self.mode,
            "manifold": None
            if self.manifold is None
            else {"n": self.manifold[0], "p": self.manifold[1]},
            "graph": self.graph,
            "trials": self.trials,
            "seed": self.seed,
            "step": self.step,
            "max_time": self.max_time,
            "grad_tol": self.grad_tol,
            "consensus_tol": self.consensus_tol,
            "record_every": self.record_every,
            "method": self.method,
            "out_dir": self.out_dir,
            "threads": self.threads,
            "multistarts": self.multistarts,
            "cycle_sizes": list(self.cycle_sizes),
            "perturbation": self.perturbation,
            "minlp_grid": self.minlp_grid,
        }
        return doc


def load_config(path, **overrides) -> ExperimentConfig:
    """Read a config JSON file and apply CLI-style overrides."""
    import json

    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    config = ExperimentConfig.from_dict(doc)
    applied = {k: v for k, v in overrides.items() if v is not None}
    if applied:
        config = dataclasses.replace(config, **applied)
    return config


@dataclass(frozen=True)
class TrialResult:
    """Outcome of one Monte-Carlo trial."""

    trial: int
    seed: int
    reason: str
    final_potential: float
    final_consensus_distance: float
    iterations: int
    wall_ms: float


def _trial_worker(task):
    g, n, p, flow, master_seed, idx = task
    seed_val = derive_seed(master_seed, idx)
    rng = np.random.default_rng(seed_val)
    state0 = random_swarm(g.n_vertices, n, p, rng)
    t0 = time.perf_counter()
    traj, reason = integrate(state0, g, flow)
    retried = False
    if reason is TerminationReason.TIMEOUT:
        # Integration budget, not the claim under test: double once and re-run.
        retry_cfg = dataclasses.replace(flow, max_time=2.0 * flow.max_time)
        traj, reason = integrate(state0, g, retry_cfg)
        retried = True
    wall_ms = (time.perf_counter() - t0) * 1e3
    final = traj.final_state
    result = TrialResult(
        trial=idx,
        seed=seed_val,
        reason=reason.value,
        final_potential=potential(final, g),
        final_consensus_distance=max_edge_distance(final, g),
        iterations=traj.steps,
        wall_ms=wall_ms,
    )
    certificate = None
    if reason is TerminationReason.NON_CONSENSUS_EQUILIBRIUM:
        certificate = certify_equilibrium(final, g, tol=1e-6).to_dict()
    rows = None
    if flow.record_every > 0:
        rows = np.column_stack(
            [traj.times, traj.potentials, traj.grad_norms, traj.max_edge_distances]
        )
    return {
        "result": result,
        "retried": retried,
        "certificate": certificate,
        "traj_rows": rows,
    }


@dataclass
class MonteCarloRun:
    config: ExperimentConfig
    graph: Graph
    trials: list[TrialResult]
    retried: list[int]
    certificates: dict[int, dict]
    trajectories: dict[int, np.ndarray]

    @property
    def consensus_fraction(self) -> float:
        hits = sum(1 for t in self.trials if t.reason == TerminationReason.CONSENSUS.value)
        return hits / len(self.trials)

    def summary_dict(self) -> dict:
        counts: dict[str, int] = {}
        for t in self.trials:
            counts[t.reason] = counts.get(t.reason, 0) + 1
        non_consensus = [
            {
                "trial": t.trial,
                "seed": t.seed,
                "final_potential": t.final_potential,
                "final_consensus_distance": t.final_consensus_distance,
                "certificate": self.certificates.get(t.trial),
            }
            for t in self.trials
            if t.reason == TerminationReason.NON_CONSENSUS_EQUILIBRIUM.value
        ]
        timeouts = [
            t.trial for t in self.trials if t.reason == TerminationReason.TIMEOUT.value
        ]
        return {
            "trials": len(self.trials),
            "consensus_fraction": self.consensus_fraction,
            "reason_counts": counts,
            "timeout_retries": len(self.retried),
            "timeout_trials": timeouts,
            "non_consensus_trials": non_consensus,
        }


def run_monte_carlo(config: ExperimentConfig) -> MonteCarloRun:
    """Sample uniform initial swarms, integrate each, and tally terminations.

    Rejects disconnected graphs up front (the synchronization claim assumes
    connectivity).  Trials run on a bounded process pool; per-trial seeds are
    derived from (master seed, trial index), so the pool size never changes
    the results.
    """
    if config.mode != "monte_carlo":
        raise ConfigError(f"expected mode 'monte_carlo', got {config.mode!r}")
    g = from_spec(config.graph)
    if not is_connected(g):
        raise ConfigError(
            "graph is not connected; the synchronization hypothesis fails, refusing to run"
        )
    n, p = config.manifold
    flow = config.flow_config()
    tasks = [(g, n, p, flow, config.seed, i) for i in range(config.trials)]
    threads = config.threads if config.threads is not None else (os.cpu_count() or 1)
    if threads > 1 and config.trials > 1:
        try:
            ctx = multiprocessing.get_context("fork")
        except ValueError:
            ctx = None
        if ctx is not None:
            chunk = max(1, config.trials // (threads * 4))
            with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as pool:
                outs = list(pool.map(_trial_worker, tasks, chunksize=chunk))
        else:
            outs = [_trial_worker(t) for t in tasks]
    else:
        outs = [_trial_worker(t) for t in tasks]
    trials = [o["result"] for o in outs]
    retried = [o["result"].trial for o in outs if o["retried"]]
    certificates = {
        o["result"].trial: o["certificate"] for o in outs if o["certificate"] is not None
    }
    trajectories = {
        o["result"].trial: o["traj_rows"] for o in outs if o["traj_rows"] is not None
    }
    return MonteCarloRun(config, g, trials, retried, certificates, trajectories)


@dataclass
class CounterexampleRun:
    config: ExperimentConfig
    rows: list[dict]
    trajectories: dict[int, np.ndarray]

    def summary_dict(self) -> dict:
        return {
            "cases": self.rows,
            "consensus_cycle_sizes": [
                r["N"] for r in self.rows if r["reason"] == TerminationReason.CONSENSUS.value
            ],
            "twisted_cycle_sizes": [
                r["N"]
                for r in self.rows
                if r["reason"] != TerminationReason.CONSENSUS.value
                and r["final_distance_to_twisted"] < 1e-3
            ],
        }


def run_counterexample(config: ExperimentConfig) -> CounterexampleRun:
    """Perturb winding-1 twisted states on cycles in St(1, 2) and integrate.

    Small cycles (N <= 4) escape to consensus; N >= 5 returns to a rotated
    twisted state.  The perturbation is applied per angle, uniform in
    [-perturbation, perturbation], from the sub-stream (seed, N).
    """
    if config.mode != "counterexample":
        raise ConfigError(f"expected mode 'counterexample', got {config.mode!r}")
    from .graph import cycle as cycle_graph

    flow = config.flow_config()
    rows = []
    trajectories: dict[int, np.ndarray] = {}
    for n_agents in config.cycle_sizes:
        g = cycle_graph(n_agents)
        rng = derive_rng(config.seed, n_agents)
        angles = twisted_state(n_agents, 1) + config.perturbation * rng.uniform(
            -1.0, 1.0, n_agents
        )
        state0 = embed_circle(angles)
        traj, reason = integrate(state0, g, flow)
        final = traj.final_state
        rows.append(
            {
                "N": n_agents,
                "reason": reason.value,
                "final_distance_to_twisted": twisted_orbit_distance(final, 1),
                "final_consensus_distance": max_edge_distance(final, g),
                "iterations": traj.steps,
            }
        )
        if flow.record_every > 0:
            trajectories[n_agents] = np.column_stack(
                [traj.times, traj.potentials, traj.grad_norms, traj.max_edge_distances]
            )
    return CounterexampleRun(config, rows, trajectories)


@dataclass
class CertificationRun:
    config: ExperimentConfig
    report: dict

    def summary_dict(self) -> dict:
        return self.report


def run_certification(config: ExperimentConfig) -> CertificationRun:
    """Run the certificates for the configured (p, n) and combine the verdicts.

    Always evaluates the exact synchronization bound.  Mode 'certify' runs
    everything; 'integer_programs' the enumerations only; 'maximize_f' the
    nonlinear program with its stationarity and spectral checks.  When the
    bound fails, the nonlinear program still runs but the report is flagged
    exploratory and nothing can fail.
    """
    if config.mode not in ("certify", "maximize_f", "integer_programs"):
        raise ConfigError(f"mode {config.mode!r} is not a certification mode")
    n, p = config.manifold
    bound = synchronization_bound(p, n)
    report: dict = {
        "n": n,
        "p": p,
        "synchronization_bound": bound,
        "exploratory": not bound,
        "integer_program": None,
        "minlp": None,
        "minlp_applicable": 3 * (p + 1) == 2 * n,
        "nonlinear_program": None,
        "lagrange": None,
        "spectral": None,
    }
    checks: dict[str, bool] = {}
    if config.mode in ("certify", "integer_programs"):
        ip = solve_integer_program(n, p)
        report["integer_program"] = {
            "m_plus_opt": ip.m_plus_opt,
            "recurrence_ok": ip.recurrence_ok,
            "table": [list(row) for row in ip.table],
        }
        checks["integer_program_argmax"] = ip.m_plus_opt == p
        checks["integer_program_recurrence"] = ip.recurrence_ok
        if report["minlp_applicable"]:
            res = solve_minlp(n, p, config.minlp_grid)
            zero_set_ok = all(
                abs(obj) > 0.0 or (lam == 1.0 or m == 0) for lam, m, obj in res.table
            )
            report["minlp"] = {
                "lambda_opt": res.lambda_opt,
                "m_star_opt": res.m_star_opt,
                "objective": res.objective,
                "table": [list(row) for row in res.table],
            }
            checks["minlp_optimum_zero"] = res.objective == 0.0
            checks["minlp_zero_set"] = zero_set_ok
    if config.mode in ("certify", "maximize_f"):
        asc = maximize_f(n, p, multistarts=config.multistarts, seed=config.seed)
        z = asc.x.entries.T @ asc.y.entries
        z_defect = float(np.linalg.norm(z - np.eye(p)))
        lag = lagrange_residual(asc.x, asc.y)
        cert = spectral_certificate(asc.x, asc.y)
        report["nonlinear_program"] = {
            "value": asc.value,
            "iterations": asc.iterations,
            "grad_norm": asc.grad_norm,
            "starts_converged": asc.starts_converged,
            "z_identity_defect": z_defect,
        }
        report["lagrange"] = {
            "residual_x": lag.residual_x,
            "residual_y": lag.residual_y,
            "skew_defect": lag.skew_defect,
            "max_eigenvalue_distance": max(lag.eigenvalue_distances),
            "lambda_star": lag.lambda_star,
        }
        report["spectral"] = cert.to_dict()
        if bound:
            checks["max_f_nonpositive"] = asc.value <= MAX_F_TOL
            checks["gramian_identity"] = z_defect < GRAMIAN_TOL
        checks["lagrange_residuals"] = (
            max(lag.residual_x, lag.residual_y) < LAGRANGE_TOL
        )
        checks["eigenvalues_clustered"] = (
            max(lag.eigenvalue_distances) < EIGENVALUE_TOL
        )
    report["checks"] = checks
    report["passed"] = (not bound) or all(checks.values())
    return CertificationRun(config, report)


def run_experiment(config: ExperimentConfig):
    """Dispatch a config to its run function."""
    if config.mode == "monte_carlo":
        return run_monte_carlo(config)
    if config.mode == "counterexample":
        return run_counterexample(config)
    return run_certification(config)


# ---------------------------------------------------------------------------
# Deterministic serialization
# ---------------------------------------------------------------------------


def format_float(x: float) -> str:
    """Fixed float formatting: 17 significant digits (round-trip exact)."""
    x = float(x)
    if not np.isfinite(x):
        raise ValueError(f"refusing to serialize nonfinite value {x}")
    return format(x, ".17g")


def dumps_json(obj, indent: int = 2) -> str:
    """Deterministic JSON: sorted keys, floats with 17 significant digits."""
    import json as _json

    def emit(value, level):
        pad = " " * (indent * level)
        pad_in = " " * (indent * (level + 1))
        if value is None:
            return "null"
        if isinstance(value, bool):
            return "true" if value else "false"
        if isinstance(value, (int, np.integer)):
            return str(int(value))
        if isinstance(value, (float, np.floating)):
            return format_float(value)
        if isinstance(value, str):
            return _json.dumps(value)
        if isinstance(value, (list, tuple)):
            if not value:
                return "[]"
            items = [emit(v, level + 1) for v in value]
            return "[\n" + ",\n".join(pad_in + it for it in items) + "\n" + pad + "]"
        if isinstance(value, dict):
            if not value:
                return "{}"
            parts = []
            for key in sorted(value):
                if not isinstance(key, str):
                    raise TypeError(f"JSON object keys must be strings, got {key!r}")
                parts.append(
                    pad_in + _json.dumps(key) + ": " + emit(value[key], level + 1)
                )
            return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
        raise TypeError(f"cannot serialize {type(value).__name__}")

    return emit(obj, 0) + "\n"


TRIALS_HEADER = "trial,seed,reason,final_potential,final_consensus_distance,iterations,wall_ms"
TRAJECTORY_HEADER = "t,U,max_grad_norm,max_edge_distance"
COUNTEREXAMPLE_HEADER = (
    "N,reason,final_distance_to_twisted,final_consensus_distance,iterations"
)


def _write_text(path, text: str):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc


def _trials_csv(trials) -> str:
    lines = [TRIALS_HEADER]
    for t in trials:
        lines.append(
            ",".join(
                [
                    str(t.trial),
                    str(t.seed),
                    t.reason,
                    format_float(t.final_potential),
                    format_float(t.final_consensus_distance),
                    str(t.iterations),
                    format_float(t.wall_ms),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def _trajectory_csv(rows: np.ndarray) -> str:
    lines = [TRAJECTORY_HEADER]
    for row in rows:
        lines.append(",".join(format_float(v) for v in row))
    return "\n".join(lines) + "\n"


def emit_results(run, out_dir=None) -> dict:
    """Write CSVs, summary JSON, and figures for a completed run.

    Returns a dict naming every file written.  The per-trial CSV is always
    present (header-only when the mode has no trials).  Agent indices in all
    emitted arrays are 0-based positions in the state list.
    """
    config = run.config
    out = out_dir if out_dir is not None else config.out_dir
    os.makedirs(out, exist_ok=True)
    paths: dict[str, str] = {}

    trials = getattr(run, "trials", [])
    trials_path = os.path.join(out, "trials.csv")
    _write_text(trials_path, _trials_csv(trials))
    paths["trials_csv"] = trials_path

    summary = {
        "mode": config.mode,
        "config": config.to_dict(),
        "summary": run.summary_dict(),
    }
    summary_path = os.path.join(out, "summary.json")
    _write_text(summary_path, dumps_json(summary))
    paths["summary_json"] = summary_path

    if isinstance(run, MonteCarloRun):
        for idx, rows in sorted(run.trajectories.items()):
            csv_path = os.path.join(out, f"trajectory_trial{idx:04d}.csv")
            _write_text(csv_path, _trajectory_csv(rows))
            paths[f"trajectory_trial{idx:04d}_csv"] = csv_path
            fig_path = os.path.join(out, f"trajectory_trial{idx:04d}.png")
            reporting.save_trajectory_figure(rows, f"trial {idx}", fig_path)
            paths[f"trajectory_trial{idx:04d}_png"] = fig_path
        fig_path = os.path.join(out, "summary.png")
        reporting.save_monte_carlo_figure(run.trials, fig_path)
        paths["summary_png"] = fig_path
    elif isinstance(run, CounterexampleRun):
        lines = [COUNTEREXAMPLE_HEADER]
        for r in run.rows:
            lines.append(
                ",".join(
                    [
                        str(r["N"]),
                        r["reason"],
                        format_float(r["final_distance_to_twisted"]),
                        format_float(r["final_consensus_distance"]),
                        str(r["iterations"]),
                    ]
                )
            )
        ce_path = os.path.join(out, "counterexample.csv")
        _write_text(ce_path, "\n".join(lines) + "\n")
        paths["counterexample_csv"] = ce_path
        for n_agents, rows in sorted(run.trajectories.items()):
            csv_path = os.path.join(out, f"trajectory_cycle{n_agents}.csv")
            _write_text(csv_path, _trajectory_csv(rows))
            paths[f"trajectory_cycle{n_agents}_csv"] = csv_path
            fig_path = os.path.join(out, f"trajectory_cycle{n_agents}.png")
            reporting.save_trajectory_figure(rows, f"cycle N={n_agents}", fig_path)
            paths[f"trajectory_cycle{n_agents}_png"] = fig_path
        fig_path = os.path.join(out, "summary.png")
        reporting.save_counterexample_figure(run.rows, fig_path)
        paths["summary_png"] = fig_path
    elif isinstance(run, CertificationRun):
        fig_path = os.path.join(out, "summary.png")
        reporting.save_certification_figure(run.report, fig_path)
        paths["summary_png"] = fig_path
    return paths
