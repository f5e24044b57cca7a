"""Run orchestration: single runs with checkpoint/resume, analyses, plans, summary and verdicts.

Each run lives in its own directory ``<output_dir>/<label>/``::

    manifest.json          label, config hash, version, timestamps, artifacts, status
    config.json            normalized run document (what is hashed)
    diagnostics.csv        one DiagnosticsRecord per sample
    final.snap             final state (binary snapshot)
    lyapunov.json          LyapunovReport plus trace-estimate check
    lyapunov_running.csv   running exponents per reorthonormalization instant
    bounds.json/.csv       bound table over s
    summary_row.json       this run's row of summary.csv
    checkpoint.json        pointer to the latest ckpt-<step>/ directory

Runs share nothing, so a failing run cannot touch a sibling's directory.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import shutil
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import BoundInputs, DEFAULT_S_GRID, best_bound_over_s, grad_energy_majorant, scaling_transform
from .config import ConfigError, config_hash, grid_of, initial_field, normalize_run, sim_config
from .dynamics import BlowUpError, SimConfig, Stepper, WallClock, simulate
from .energy import (
    absorbing_entry_time,
    check_dissipative_estimate,
    check_strong_estimates,
    energy_balance_residual,
    strong_energy_balance_residual,
)
from .io import (
    load_snapshot,
    read_diagnostics_csv,
    save_snapshot,
    write_diagnostics_csv,
    write_json,
)
from .spectral import SpectralVectorField, fft_workers
from .variational import RankCollapseError, lyapunov_spectrum, trace_estimate_check

log = logging.getLogger(__name__)

ANALYSES = ("diagnostics", "lyapunov", "bounds", "inequalities")
NUMERICAL_ERRORS = (BlowUpError, RankCollapseError, FloatingPointError, ArithmeticError, np.linalg.LinAlgError)
SUMMARY_COLUMNS = [
    "label",
    "status",
    "nu",
    "alpha",
    "config_hash",
    "best_s",
    "best_bound",
    "periodic_bound",
    "rot_bound",
    "majorant_at_best_s",
    "kaplan_yorke",
    "ky_status",
    "avg_grad_sq_scaled",
    "trace_min_slack",
    "trace_avg_min_slack",
    "energy_residual",
    "strong_energy_residual",
    "dissipative_min_slack",
    "strong_dissipative_min_slack",
    "absorbing_status",
    "inequality_min_slack",
]


class Interrupted(RuntimeError):
    """Raised by a run asked to stop early (after writing a checkpoint)."""


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


# ----------------------------------------------------------------- checkpoints
def write_checkpoint(run_dir: Path, chash: str, step: int, state, stepper: Stepper, records):
    """Write ``ckpt-<step>/`` completely, then switch ``checkpoint.json`` to it atomically."""
    ck = run_dir / f"ckpt-{step:010d}"
    ck.mkdir(parents=True, exist_ok=True)
    save_snapshot(ck / "state.snap", state.u)
    hist = stepper.integrator.state()
    if hist is not None:
        save_snapshot(ck / "history.snap", SpectralVectorField(hist, state.u.grid))
    write_diagnostics_csv(ck / "records.csv", records)
    write_json(ck / "meta.json", {"config_hash": chash, "step": step, "t": state.t, "has_history": hist is not None})
    previous = read_checkpoint_pointer(run_dir)
    write_json(run_dir / "checkpoint.json", {"dir": ck.name, "step": step})
    if previous and previous != ck.name:
        shutil.rmtree(run_dir / previous, ignore_errors=True)


def read_checkpoint_pointer(run_dir: Path) -> str | None:
    p = Path(run_dir) / "checkpoint.json"
    if not p.exists():
        return None
    return json.loads(p.read_text())["dir"]


def load_checkpoint(path, chash: str, cfg: SimConfig):
    """Load a checkpoint given a run directory, ``checkpoint.json`` or a ``ckpt-*`` directory."""
    path = Path(path)
    if path.is_file():
        path = path.parent / json.loads(path.read_text())["dir"]
    elif (path / "checkpoint.json").exists():
        path = path / read_checkpoint_pointer(path)
    meta_path = path / "meta.json"
    if not meta_path.exists():
        raise ConfigError(f"no checkpoint found at {path}")
    meta = json.loads(meta_path.read_text())
    if meta["config_hash"] != chash:
        raise ConfigError(f"checkpoint {path} belongs to a different config (hash {meta['config_hash'][:12]})")
    u = load_snapshot(path / "state.snap")
    stepper = Stepper(cfg)
    if meta["has_history"]:
        stepper.integrator.load_state(load_snapshot(path / "history.snap").coefficients)
    return int(meta["step"]), u, stepper, read_diagnostics_csv(path / "records.csv")


def run_simulation(
    run: dict,
    run_dir,
    resume=None,
    stop_after_samples: int | None = None,
    base_dir: Path | None = None,
):
    """Integrate a normalized run document with periodic checkpoints.

    ``resume`` may be ``True`` (use the run directory's latest checkpoint if
    any) or a checkpoint path. ``stop_after_samples`` checkpoints and raises
    :class:`Interrupted` after that many new samples.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg = sim_config(run)
    chash = config_hash(run)
    ck_cfg = run["checkpoint"]
    clock = WallClock(ck_cfg["wall_seconds"])
    every = ck_cfg["every_samples"]

    start_step, prior, stepper = 0, None, Stepper(cfg)
    u0 = None
    if resume is True:
        ck_path = run_dir if read_checkpoint_pointer(run_dir) else None
    else:
        ck_path = resume or None
    if ck_path is not None:
        start_step, u0, stepper, prior = load_checkpoint(ck_path, chash, cfg)
        log.info("resuming %s at step %d", run_dir.name, start_step)
    if u0 is None:
        u0 = initial_field(run, base_dir)

    history: list = list(prior or [])
    counter = {"n": 0}

    def on_sample(state, record, step_index, st):
        if prior is not None and step_index == start_step:
            return
        history.append(record)
        counter["n"] += 1
        due = clock.due() or (every > 0 and counter["n"] % every == 0)
        stop = stop_after_samples is not None and counter["n"] >= stop_after_samples
        if (due or stop) and step_index < cfg.n_steps:
            write_checkpoint(run_dir, chash, step_index, state, st, history)
        if stop and step_index < cfg.n_steps:
            raise Interrupted(f"stopped after {counter['n']} samples at step {step_index}")

    traj = simulate(cfg, u0, on_sample=on_sample, stepper=stepper, start_step=start_step, prior_records=prior)
    return cfg, traj


# ------------------------------------------------------------------- analyses
def _finite(x):
    return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x


def analysis_diagnostics(run, run_dir: Path, resume=False, base_dir=None) -> dict:
    cfg, traj = run_simulation(run, run_dir, resume=resume, base_dir=base_dir)
    write_diagnostics_csv(run_dir / "diagnostics.csv", traj.records)
    save_snapshot(run_dir / "final.snap", traj.final.u)
    recs = traj.records
    row = {}
    if len(recs) >= 2:
        row["energy_residual"] = energy_balance_residual(recs, cfg)
        row["strong_energy_residual"] = strong_energy_balance_residual(recs, cfg)
    row["dissipative_min_slack"] = check_dissipative_estimate(recs, cfg).min_slack
    row["strong_dissipative_min_slack"] = check_strong_estimates(recs, cfg).min_slack
    row["absorbing_status"] = absorbing_entry_time(recs, cfg).status
    shutil.rmtree(run_dir / (read_checkpoint_pointer(run_dir) or "__none__"), ignore_errors=True)
    (run_dir / "checkpoint.json").unlink(missing_ok=True)
    return row


def scaled_config(run: dict) -> tuple[SimConfig, object]:
    """The run rewritten with ``nu = alpha = 1`` (time in units of ``1/alpha``)."""
    cfg = sim_config(run)
    sc = scaling_transform(cfg.nu, cfg.alpha, cfg.forcing)
    a = cfg.alpha
    scfg = SimConfig(
        nu=1.0,
        alpha=1.0,
        forcing=sc.forcing,
        grid=sc.grid,
        dt=cfg.dt * a,
        t_end=cfg.t_end * a,
        integrator=cfg.integrator,
        sample_interval=cfg.sample_interval * a,
        seed=cfg.seed,
    )
    return scfg, sc


def analysis_lyapunov(run, run_dir: Path, base_dir=None) -> dict:
    """Lyapunov spectrum computed in scaled variables; exponents reported in both units."""
    cfg = sim_config(run)
    scfg, sc = scaled_config(run)
    a = cfg.alpha
    ly = run["lyapunov"]
    u0 = sc.scale_velocity(initial_field(run, base_dir))
    u0 = SpectralVectorField(u0.coefficients, scfg.grid, True)
    burn = None if ly["burn_in"] is None else ly["burn_in"] * a
    interval = None if ly["reorthonormalization_interval"] is None else ly["reorthonormalization_interval"] * a
    res = lyapunov_spectrum(
        scfg,
        u0,
        ly["m"],
        ly["averaging_time"] * a,
        burn_in=burn,
        reorthonormalization_interval=interval,
        tangent_burn_in=ly["tangent_burn_in"] * a,
        seed=cfg.seed,
    )
    tr = trace_estimate_check(res)
    report = res.report.to_dict()
    report["exponents_unscaled"] = (res.report.exponents * a).tolist()
    report["time_unit"] = "1/alpha (scaled)"
    report["avg_grad_sq_scaled"] = res.avg_grad_energy
    report["trace"] = {
        "instant_min_slack": tr.instant_min_slack.tolist(),
        "averaged_lhs": tr.averaged_lhs.tolist(),
        "averaged_rhs": tr.averaged_rhs.tolist(),
        "averaged_holds": tr.averaged_holds,
    }
    write_json(run_dir / "lyapunov.json", report)
    with open(run_dir / "lyapunov_running.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"lambda_{j + 1}" for j in range(ly["m"])])
        for t, lam in zip(res.log.times, res.log.running_exponents):
            w.writerow([repr(t / a)] + [repr(float(x) * a) for x in lam])
    return {
        "kaplan_yorke": res.report.kaplan_yorke,
        "ky_status": res.report.ky_status,
        "avg_grad_sq_scaled": res.avg_grad_energy,
        "trace_min_slack": tr.min_instant_slack,
        "trace_avg_min_slack": float(np.min(tr.averaged_rhs - tr.averaged_lhs)),
    }


def bounds_report(run: dict):
    cfg = sim_config(run)
    s_grid = tuple(run["bounds"].get("s_grid", DEFAULT_S_GRID))
    try:
        inputs = BoundInputs(cfg.nu, cfg.alpha, cfg.forcing, s_grid)
    except ValueError as exc:
        raise ConfigError(f"bounds.s_grid: {exc}") from None
    return best_bound_over_s(inputs)


def analysis_bounds(run, run_dir: Path, out_json: Path | None = None) -> dict:
    rep = bounds_report(run)
    out_json = out_json or run_dir / "bounds.json"
    write_json(out_json, rep.to_dict())
    with open(out_json.with_suffix(".csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "norm", "bound"])
        for s, n, b in rep.per_s:
            w.writerow([repr(s), repr(n), repr(b)])
    scfg, _ = scaled_config(run)
    from .spectral import sobolev_norm

    norm_best = sobolev_norm(scfg.forcing, rep.best_s)
    return {
        "best_s": rep.best_s,
        "best_bound": rep.best_bound,
        "periodic_bound": rep.periodic_min_bound,
        "rot_bound": rep.rot_endpoint_bound,
        "majorant_at_best_s": grad_energy_majorant(rep.best_s, norm_best),
    }


def analysis_inequalities(run, run_dir: Path, trials: int = 20) -> dict:
    from .inequalities import verify_all

    n = min(grid_of(run).n, 32)
    res = verify_all(trials=trials, n=n, seed=run["seed"])
    write_json(run_dir / "inequalities.json", res)
    relevant = [res[k]["min_slack"] for k in ("pointwise", "lieb_thirring", "orthogonality", "interpolation")]
    return {"inequality_min_slack": float(min(relevant))}


# ------------------------------------------------------------------ one run
@dataclass
class RunManifest:
    label: str
    config_hash: str
    tool_version: str
    started: str
    finished: str | None = None
    artifacts: list[str] = field(default_factory=list)
    status: str = "running"
    error: str | None = None
    threads: int = 1
    analyses: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d) -> "RunManifest":
        return cls(**d)


def execute_run(label: str, run: dict, analyses, output_dir, resume: bool = False, base_dir=None) -> RunManifest:
    """Run all requested analyses for one run; failures are recorded, never raised."""
    run_dir = Path(output_dir) / label
    run_dir.mkdir(parents=True, exist_ok=True)
    chash = config_hash(run)
    mpath = run_dir / "manifest.json"
    if resume and mpath.exists():
        old = RunManifest.from_dict(json.loads(mpath.read_text()))
        if old.status == "ok" and old.config_hash == chash and (run_dir / "summary_row.json").exists():
            return old
    man = RunManifest(label, chash, __version__, _now(), threads=fft_workers(), analyses=list(analyses))
    write_json(run_dir / "config.json", run)
    write_json(mpath, man.to_dict())
    row = {c: None for c in SUMMARY_COLUMNS}
    row.update(label=label, nu=run["nu"], alpha=run["alpha"], config_hash=chash)
    try:
        if "bounds" in analyses:
            row.update(analysis_bounds(run, run_dir))
        if "diagnostics" in analyses:
            row.update(analysis_diagnostics(run, run_dir, resume=resume, base_dir=base_dir))
        if "lyapunov" in analyses:
            row.update(analysis_lyapunov(run, run_dir, base_dir=base_dir))
        if "inequalities" in analyses:
            row.update(analysis_inequalities(run, run_dir))
        man.status = "ok"
    except NUMERICAL_ERRORS as exc:
        man.status, man.error = "numerical_failure", f"{type(exc).__name__}: {exc}"
    except ConfigError as exc:
        man.status, man.error = "config_error", str(exc)
    except Interrupted:
        raise
    except Exception as exc:  # isolation: record and move on
        man.status, man.error = "failed", "".join(traceback.format_exception_only(type(exc), exc)).strip()
        log.debug("run %s failed:\n%s", label, traceback.format_exc())
    row["status"] = man.status
    write_json(run_dir / "summary_row.json", {k: _finite(v) for k, v in row.items()})
    man.finished = _now()
    man.artifacts = sorted(p.name for p in run_dir.iterdir() if p.is_file())
    if "manifest.json" not in man.artifacts:
        man.artifacts.append("manifest.json")
    write_json(mpath, man.to_dict())
    return man


def _execute_job(args):
    return execute_run(*args).to_dict()


# ------------------------------------------------------------------- plans
@dataclass
class RunSpec:
    label: str
    run: dict
    analyses: tuple[str, ...]


@dataclass
class ExperimentPlan:
    runs: list[RunSpec]
    output_dir: Path
    max_parallel: int = 1
    sweep_axes: dict = field(default_factory=dict)
    base_dir: Path | None = None

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        if self.max_parallel < 1:
            raise ConfigError("max_parallel must be a positive integer")
        labels = [r.label for r in self.runs]
        dup = sorted({x for x in labels if labels.count(x) > 1})
        if dup:
            raise ConfigError(f"duplicate run labels: {dup}")
        for r in self.runs:
            if not r.analyses:
                raise ConfigError(f"run '{r.label}': analysis set is empty")
            bad = set(r.analyses) - set(ANALYSES)
            if bad:
                raise ConfigError(f"run '{r.label}': unknown analyses {sorted(bad)}")
            if not r.label or "/" in r.label or r.label.startswith("."):
                raise ConfigError(f"invalid run label {r.label!r}")


def _merge(base: dict, over: dict) -> dict:
    out = json.loads(json.dumps(base))
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("forcing", "initial"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _fmt(x) -> str:
    return f"{x:g}"


def plan_from_document(doc: dict, output_dir=None, max_parallel=None, base_dir=None) -> ExperimentPlan:
    """Build a plan from ``{base, sweep, runs, output_dir, max_parallel}``.

    ``sweep`` takes lists ``nu``, ``alpha``, ``forcing`` (descriptors) and an
    ``analyses`` list; its runs are the Cartesian product over ``base``.
    ``runs`` is a list of explicit runs, each merged over ``base``.
    """
    allowed = {"base", "sweep", "runs", "output_dir", "max_parallel"}
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown plan key(s) {sorted(unknown)}")
    base = doc.get("base", {})
    specs = []
    axes = {}
    sweep = doc.get("sweep")
    if sweep:
        nus = sweep.get("nu", [base.get("nu")])
        alphas = sweep.get("alpha", [base.get("alpha")])
        forcings = sweep.get("forcing", [base.get("forcing")])
        analyses = tuple(sweep.get("analyses", ("diagnostics", "bounds")))
        axes = {"nu": nus, "alpha": alphas, "forcing": forcings}
        for fi, f in enumerate(forcings):
            for nu in nus:
                for a in alphas:
                    over = {"nu": nu, "alpha": a}
                    if f is not None:
                        over["forcing"] = f
                    label = f"nu{_fmt(nu)}_alpha{_fmt(a)}" + (f"_f{fi}" if len(forcings) > 1 else "")
                    specs.append(RunSpec(label, normalize_run(_merge(base, over)), analyses))
    for i, r in enumerate(doc.get("runs", [])):
        r = dict(r)
        label = r.pop("label", f"run{i}")
        analyses = tuple(r.pop("analyses", ("diagnostics",)))
        try:
            specs.append(RunSpec(str(label), normalize_run(_merge(base, r)), analyses))
        except ConfigError as exc:
            raise ConfigError(f"runs[{i}] ({label}): {exc}") from None
    out = output_dir or doc.get("output_dir") or "dampedns-out"
    mp = max_parallel or doc.get("max_parallel", 1)
    if isinstance(mp, bool) or not isinstance(mp, int):
        raise ConfigError(f"key 'max_parallel' must be a positive integer, got {mp!r}")
    return ExperimentPlan(specs, Path(out), mp, axes, base_dir)


def run_plan(plan: ExperimentPlan, resume: bool = False) -> list[RunManifest]:
    """Execute every run (at most ``max_parallel`` at once), then write ``summary.csv``."""
    if not plan.runs:
        return []
    plan.output_dir.mkdir(parents=True, exist_ok=True)
    jobs = [(r.label, r.run, r.analyses, plan.output_dir, resume, plan.base_dir) for r in plan.runs]
    if plan.max_parallel == 1 or len(jobs) == 1:
        manifests = [execute_run(*j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(plan.max_parallel, len(jobs))) as pool:
            manifests = [RunManifest.from_dict(d) for d in pool.map(_execute_job, jobs)]
    write_summary(plan.output_dir, [r.label for r in plan.runs])
    return manifests


# ------------------------------------------------------------ summary, verdicts
def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_summary(output_dir, labels) -> Path:
    output_dir = Path(output_dir)
    path = output_dir / "summary.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for label in labels:
            p = output_dir / label / "summary_row.json"
            row = json.loads(p.read_text()) if p.exists() else {"label": label, "status": "missing"}
            w.writerow([_cell(row.get(c)) for c in SUMMARY_COLUMNS])
    return path


def read_summary(path) -> list[dict]:
    path = Path(path)
    if path.is_dir():
        path = path / "summary.csv"
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return rows


def _num(row, key):
    v = row.get(key)
    if v in (None, ""):
        return None
    return float(v)


REQUIRED_REPORT_COLUMNS = ("label", "status", "kaplan_yorke", "best_bound")


def compare_report(summary: list[dict], energy_tol=1e-6, slack_tol=1e-9, trace_tol=1e-10) -> list[dict]:
    """Per-run PASS/FAIL (or INCONCLUSIVE) on each available inequality, with slacks.

    Checks: Kaplan-Yorke dimension below the best bound; scaled time-averaged
    ``||grad u||^2`` below its majorant; trace-estimate slacks; energy
    residuals; dissipative-estimate slacks; inequality-lab slacks.
    """
    verdicts = []
    for row in summary:
        missing = [c for c in REQUIRED_REPORT_COLUMNS if c not in row]
        if missing:
            raise ValueError(f"summary row is missing columns {missing}")
        label = row["label"]

        def add(check, ok, slack, note=""):
            verdict = "PASS" if ok is True else ("FAIL" if ok is False else "INCONCLUSIVE")
            verdicts.append({"label": label, "check": check, "verdict": verdict, "slack": slack, "note": note})

        if row["status"] != "ok":
            add("run_status", False, None, row["status"])
            continue
        ky, bound = _num(row, "kaplan_yorke"), _num(row, "best_bound")
        if ky is not None and bound is not None:
            slack = bound - ky
            if row.get("ky_status") == "increase_m":
                # ky is only a lower estimate of the true crossing here
                add("kaplan_yorke_le_bound", False if slack < 0 else None, slack, "increase_m")
            else:
                add("kaplan_yorke_le_bound", slack >= -1e-12 * max(1.0, abs(bound)), slack)
        g, maj = _num(row, "avg_grad_sq_scaled"), _num(row, "majorant_at_best_s")
        if g is not None and maj is not None:
            add("grad_sq_le_majorant", g <= maj * (1 + 1e-12), maj - g)
        for col, tol in (("trace_min_slack", trace_tol), ("trace_avg_min_slack", trace_tol)):
            v = _num(row, col)
            if v is not None:
                add(col, v >= -tol, v)
        for col in ("energy_residual", "strong_energy_residual"):
            v = _num(row, col)
            if v is not None:
                add(col, abs(v) <= energy_tol, energy_tol - abs(v))
        for col in ("dissipative_min_slack", "strong_dissipative_min_slack"):
            v = _num(row, col)
            if v is not None:
                add(col, v >= -slack_tol, v)
        v = _num(row, "inequality_min_slack")
        if v is not None:
            add("inequality_min_slack", v >= -1e-10, v)
    return verdicts


def write_verdicts(path, verdicts):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, ["label", "check", "verdict", "slack", "note"])
        w.writeheader()
        for v in verdicts:
            w.writerow({k: _cell(x) for k, x in v.items()})
