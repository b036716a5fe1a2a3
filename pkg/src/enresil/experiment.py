"""Experiment orchestration: analyses, disturbance sweeps, initial-state
heatmaps, Monte-Carlo validation, and CSV/report emission.

All CSV output uses comma separation, '.' decimals, a header row, LF line
endings, and 17 significant digits, so numbers round-trip losslessly and
identical configurations reproduce byte-identical files. Wall-clock timings
never enter CSV files (they go to the human-readable report only).
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, spec_hash
from .energetics import (
    ComposedBound,
    EnergyReport,
    TIGHTEN_ROWWISE,
    assemble_plan_rows,
    chained_component_reports,
    compose_bounds,
    energetic_resilience,
)
from .formula import evaluate
from .system import LtiSystem, simulate

WORKERS_ENV_VAR = "ENRESIL_WORKERS"

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_CONFIG_ERROR = 3
EXIT_SOLVER_LIMIT = 4

# the disturbance-sampling generator; PCG64 is seedable and stable across
# platforms, which the reproducibility contract relies on
RNG_ALGORITHM = "numpy PCG64"


class MissingSolutionError(Exception):
    """Validation was asked for but no optimal worst-case input exists."""


@dataclass
class ResilienceRecord:
    x0: np.ndarray
    wbar: float
    e_nom: float | None
    e_mal: float | None
    resilience: float | None
    status: str
    spec_hash: str
    wall_time: float


@dataclass
class RunOptions:
    tightening: str = TIGHTEN_ROWWISE
    strict_eventually: bool = False
    exact_joint: bool = True
    component_bounds: bool = True
    workers: int | None = None

    def resolved_workers(self) -> int:
        if self.workers is not None:
            return max(1, self.workers)
        env = os.environ.get(WORKERS_ENV_VAR)
        if env:
            return max(1, int(env))
        return os.cpu_count() or 1


@dataclass
class AnalysisResult:
    report: EnergyReport | None
    components: list = field(default_factory=list)
    composed: ComposedBound | None = None
    record: ResilienceRecord | None = None
    exit_code: int = EXIT_OK
    files: list = field(default_factory=list)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _hfmt(value) -> str:
    # report.txt formatting; CSV files keep the lossless 17-digit form
    if value is None:
        return "-"
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def _status_exit(status: str) -> int:
    if status == "ok":
        return EXIT_OK
    if status == "solver-limit":
        return EXIT_SOLVER_LIMIT
    return EXIT_INFEASIBLE


def _with_wbar(system: LtiSystem, wbar: float) -> LtiSystem:
    return LtiSystem(system.A, system.B_u, system.B_w, system.input_set, wbar)


def evaluate_point(config: ExperimentConfig, x0, wbar, options: RunOptions):
    """One (x0, wbar) evaluation; returns (EnergyReport, ResilienceRecord)."""
    t0 = time.perf_counter()
    system = _with_wbar(config.system, wbar)
    report = energetic_resilience(
        system, x0, config.spec, config.bindings, config.horizon,
        tightening=options.tightening,
        strict_eventually=options.strict_eventually,
    )
    record = ResilienceRecord(
        x0=np.asarray(x0, dtype=float),
        wbar=wbar,
        e_nom=report.e_nom,
        e_mal=report.e_mal,
        resilience=report.resilience,
        status=report.status,
        spec_hash=spec_hash(config.spec_text),
        wall_time=time.perf_counter() - t0,
    )
    return report, record


def run_experiment(config: ExperimentConfig, options: RunOptions | None = None,
                   out_dir=None) -> AnalysisResult:
    """Analyze the configured task at its initial state and write reports.

    Computes the exact joint analysis of the full formula and, when the
    configuration lists component tasks, the per-component bound of their
    composition (chained anchoring for sequential components). Writes
    report.txt and records.csv to the output directory.
    """
    options = options or RunOptions()
    if config.x0 is None:
        raise ValueError("run_experiment needs a single x0; use run_heatmap for grids")
    result = AnalysisResult(report=None)

    if options.exact_joint or not config.component_specs:
        report, record = evaluate_point(config, config.x0, config.system.wbar, options)
        result.report = report
        result.record = record

    if config.component_specs and options.component_bounds:
        comps = chained_component_reports(
            config.system, config.x0, config.component_specs, config.bindings,
            tightening=options.tightening,
            strict_eventually=options.strict_eventually,
        )
        result.components = comps
        result.composed = compose_bounds(
            [c.report for c in comps],
            config.compose_mode,
            horizons_overlap=not config.components_non_overlapping,
        )

    if result.report is not None:
        result.exit_code = _status_exit(result.report.status)
    elif result.composed is not None:
        statuses = [c.report.status for c in result.components]
        if any(s == "solver-limit" for s in statuses):
            result.exit_code = EXIT_SOLVER_LIMIT
        elif any(s != "ok" for s in statuses):
            result.exit_code = EXIT_INFEASIBLE

    target = _resolve_out_dir(config, out_dir)
    if target is not None:
        target.mkdir(parents=True, exist_ok=True)
        report_path = target / "report.txt"
        report_path.write_text(render_report(config, result, options), encoding="utf-8")
        records_path = target / "records.csv"
        write_records_csv(records_path, [result.record] if result.record else [])
        result.files = [str(report_path), str(records_path)]
    return result


def sweep_wbar(config: ExperimentConfig, wbar_list=None,
               options: RunOptions | None = None, out_dir=None):
    """Evaluate the task across a ladder of disturbance bounds; returns records.

    Writes sweep.csv with columns (wbar, e_nom, e_mal, resilience, status).
    """
    options = options or RunOptions()
    if config.x0 is None:
        raise ValueError("sweep needs a single x0, not a grid")
    wbars = list(wbar_list) if wbar_list is not None else list(config.sweep_wbars)
    if not wbars:
        raise ValueError("no disturbance bounds given: pass a list or add a [sweep] block")
    if any(w < 0 for w in wbars):
        raise ValueError("disturbance bounds must be nonnegative")
    if sorted(wbars) != wbars:
        raise ValueError("disturbance bounds must be sorted ascending")
    records = []
    for w in wbars:
        _, record = evaluate_point(config, config.x0, w, options)
        records.append(record)
    target = _resolve_out_dir(config, out_dir)
    files = []
    if target is not None:
        target.mkdir(parents=True, exist_ok=True)
        path = target / "sweep.csv"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("wbar,e_nom,e_mal,resilience,status\n")
            for r in records:
                fh.write(
                    f"{_fmt(r.wbar)},{_fmt(r.e_nom)},{_fmt(r.e_mal)},"
                    f"{_fmt(r.resilience)},{r.status}\n"
                )
        files.append(str(path))
    return records, files


# worker-side state for parallel grid evaluation (set once per process)
_GRID_CTX = None


def _grid_init(config, wbar, options):
    global _GRID_CTX
    _GRID_CTX = (config, wbar, options)


def _grid_eval(task):
    gx, gy, x0 = task
    config, wbar, options = _GRID_CTX
    _, record = evaluate_point(config, x0, wbar, options)
    return gx, gy, record.resilience, record.status


def run_heatmap(config: ExperimentConfig, options: RunOptions | None = None, out_dir=None):
    """Resilience over the configured grid of initial states.

    Grid points are independent, so they fan out to a worker pool; rows come
    back in row-major grid order regardless of scheduling. Writes
    heatmap.csv with columns (x, y, resilience, status).
    """
    options = options or RunOptions()
    if config.grid is None:
        raise ValueError("heatmap needs a [task.grid] block")
    tasks = config.grid.points(config.system.n)
    workers = options.resolved_workers()
    wbar = config.system.wbar
    if workers > 1 and len(tasks) > 1:
        chunk = max(1, len(tasks) // (workers * 4))
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_grid_init,
            initargs=(config, wbar, options),
        ) as pool:
            rows = list(pool.map(_grid_eval, tasks, chunksize=chunk))
    else:
        _grid_init(config, wbar, options)
        rows = [_grid_eval(t) for t in tasks]
    target = _resolve_out_dir(config, out_dir)
    files = []
    if target is not None:
        target.mkdir(parents=True, exist_ok=True)
        path = target / "heatmap.csv"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("x,y,resilience,status\n")
            for gx, gy, res, status in rows:
                fh.write(f"{_fmt(float(gx))},{_fmt(float(gy))},{_fmt(res)},{status}\n")
        files.append(str(path))
    return rows, files


@dataclass
class ValidationSummary:
    samples: int
    seed: int
    satisfied: int
    violations: int
    max_row_violation: float
    tightening_activeness_error: float
    rng: str = RNG_ALGORITHM

    @property
    def ok(self) -> bool:
        return self.violations == 0


def monte_carlo_validate(config: ExperimentConfig, samples=None, seed=None,
                         options: RunOptions | None = None, out_dir=None):
    """Stress the worst-case input against sampled admissible disturbances.

    Simulates i.i.d. uniform disturbances under the synthesized worst-case
    input, judges every trajectory with the formula evaluator, and tracks
    the largest violation of the winning plan's rows. Additionally drives
    each constraint row with its sign-pattern extremal disturbance and
    confirms the realized margin matches the tightened program's slack,
    which is exactness of the row-wise tightening.
    """
    options = options or RunOptions()
    if config.x0 is None:
        raise ValueError("validation needs a single x0, not a grid")
    samples = config.validation_samples if samples is None else samples
    seed = config.validation_seed if seed is None else seed
    if samples < 0:
        raise ValueError("sample count must be nonnegative")

    report, _ = evaluate_point(config, config.x0, config.system.wbar, options)
    if report.malfunctioning.status != "optimal":
        raise MissingSolutionError(
            "no optimal worst-case input to validate: "
            + (report.reason or report.status)
        )

    system = config.system
    N = config.horizon
    u = report.u_mal
    plan = report.plan_mal
    wbar = system.wbar
    rows = assemble_plan_rows(system, config.x0, plan, N, options.tightening)
    u_flat = u.reshape(-1)

    satisfied = 0
    max_row_violation = -np.inf if rows else 0.0
    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(samples):
        w = rng.uniform(-wbar, wbar, size=(N, system.p))
        traj = simulate(system, config.x0, u, w)
        if evaluate(config.spec, traj, config.bindings):
            satisfied += 1
        for r in rows:
            max_row_violation = max(
                max_row_violation, float(r.poly_row @ traj[r.t] - r.poly_rhs)
            )
    if not rows or samples == 0:
        max_row_violation = 0.0

    # per-row extremal disturbance: realized margin must equal the tightened
    # program's slack, confirming the support term is attained, not loose
    activeness_err = 0.0
    if samples > 0:
        for r in rows:
            w_star = (wbar * np.sign(r.w_coeffs)).reshape(N, system.p)
            traj = simulate(system, config.x0, u, w_star)
            realized_margin = r.poly_rhs - float(r.poly_row @ traj[r.t])
            tight_slack = (r.raw_rhs - r.support) - float(r.u_coeffs @ u_flat)
            activeness_err = max(activeness_err, abs(realized_margin - tight_slack))

    summary = ValidationSummary(
        samples=samples,
        seed=seed,
        satisfied=satisfied,
        violations=samples - satisfied,
        max_row_violation=float(max_row_violation),
        tightening_activeness_error=float(activeness_err),
    )
    target = _resolve_out_dir(config, out_dir)
    files = []
    if target is not None:
        target.mkdir(parents=True, exist_ok=True)
        path = target / "validation.json"
        payload = {
            "label": config.label,
            "spec": config.spec_text,
            "spec_hash": spec_hash(config.spec_text),
            "wbar": wbar,
            "samples": summary.samples,
            "seed": summary.seed,
            "rng": summary.rng,
            "satisfied": summary.satisfied,
            "violations": summary.violations,
            "max_row_violation": summary.max_row_violation,
            "tightening_activeness_error": summary.tightening_activeness_error,
        }
        path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        files.append(str(path))
    return summary, files


def write_records_csv(path, records):
    """Machine-readable per-evaluation records (no wall-clock columns)."""
    dim = records[0].x0.shape[0] if records else 0
    headers = [f"x0_{i}" for i in range(dim)]
    headers += ["wbar", "e_nom", "e_mal", "resilience", "status", "spec_hash"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(headers) + "\n")
        for r in records:
            cells = [_fmt(float(v)) for v in r.x0]
            cells += [
                _fmt(r.wbar), _fmt(r.e_nom), _fmt(r.e_mal),
                _fmt(r.resilience), r.status, r.spec_hash,
            ]
            fh.write(",".join(cells) + "\n")


def render_report(config: ExperimentConfig, result: AnalysisResult,
                  options: RunOptions) -> str:
    """Human-readable analysis report."""
    lines = []
    lines.append(f"=== {config.label} ===")
    lines.append(f"formula: {config.spec_text}")
    lines.append(
        f"horizon N={config.horizon}, wbar={_hfmt(config.system.wbar)}, "
        f"tightening: {options.tightening}"
    )
    if config.x0 is not None:
        lines.append(f"initial state x0: {np.array2string(config.x0, precision=6)}")
    if config.reference_resilience is not None:
        lines.append(
            f"reference resilience (published benchmark): {_hfmt(config.reference_resilience)}"
        )
    if config.controllability_warning:
        lines.append(f"WARNING: {config.controllability_warning}")
    lines.append("")

    rep = result.report
    if rep is not None:
        lines.append("[exact joint analysis]")
        lines.append(f"status: {rep.status}" + (f" ({rep.reason})" if rep.reason else ""))
        lines.append(f"nominal energy:        {_hfmt(rep.e_nom)}")
        lines.append(f"malfunctioning energy: {_hfmt(rep.e_mal)}")
        lines.append(f"energetic resilience:  {_hfmt(rep.resilience)}")
        if rep.plan_nom is not None:
            lines.append(f"winning plan (nominal):    {rep.plan_nom.describe()}")
        if rep.plan_mal is not None:
            lines.append(f"winning plan (worst-case): {rep.plan_mal.describe()}")
        nom_sol, mal_sol = rep.nominal.solution, rep.malfunctioning.solution
        if nom_sol is not None and mal_sol is not None:
            lines.append(
                f"solver iterations: nominal {nom_sol.iterations}, "
                f"worst-case {mal_sol.iterations}"
            )
        for w in rep.warnings:
            lines.append(f"WARNING: {w}")
        if result.record is not None:
            lines.append(f"wall time: {result.record.wall_time:.3f} s")
        lines.append("")

    if result.composed is not None:
        comp = result.composed
        lines.append(f"[component {comp.mode} bound over {comp.component_count} tasks]")
        if comp.horizons_overlap:
            lines.append(
                "NOTE: component horizons overlap; the summed bound is reported "
                "as a heuristic aggregate, not a certified upper bound"
            )
        for c in result.components:
            r = c.report
            lines.append(
                f"  {c.spec_text} (N={c.horizon}): e_nom={_hfmt(r.e_nom)} "
                f"e_mal={_hfmt(r.e_mal)} resilience={_hfmt(r.resilience)} [{r.status}]"
            )
            lines.append(
                f"    anchors: nominal {np.array2string(c.anchor_nom, precision=6)}, "
                f"worst-case {np.array2string(c.anchor_mal, precision=6)}"
            )
        lines.append(f"component energy sums: e_nom={_hfmt(comp.e_nom)} e_mal={_hfmt(comp.e_mal)}")
        lines.append(f"resilience bound: {_hfmt(comp.resilience_bound)}")
        if comp.mode == "disjunction":
            lines.append(f"resilience from energy minima: {_hfmt(comp.resilience)}")
            if comp.claimed_bound_violated:
                lines.append(
                    "NOTE: min-of-resiliences bound violated by the energy-minima "
                    "value (the minimizing branches differ)"
                )
        if rep is not None and rep.e_mal is not None and comp.e_mal != float("inf"):
            gap = comp.e_mal - rep.e_mal
            lines.append(
                f"exact joint e_mal {_hfmt(rep.e_mal)} vs component sum "
                f"{_hfmt(comp.e_mal)} (gap {_hfmt(gap)})"
            )
        lines.append("")
    return "\n".join(lines) + "\n"


def _resolve_out_dir(config: ExperimentConfig, out_dir):
    if out_dir is not None:
        return Path(out_dir)
    if config.output_dir is not None:
        return Path(config.output_dir)
    return None
