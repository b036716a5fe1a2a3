"""Nominal and worst-case minimum input energies and their gap.

For one conjunctive constraint plan the feasible inputs form a polyhedron in
the stacked input vector, so the minimum energy is a convex QP. The nominal
energy solves that QP with disturbance-free right-hand sides; the
malfunctioning energy first shrinks every state-constraint row by the
disturbance's worst-case effect (exact row-wise support by default), making
satisfaction robust to every admissible disturbance. The energetic
resilience of a formula is the difference of the two energies after
minimizing over the formula's plan family; the winning reach times need not
agree between the two cases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .formula import required_horizon, to_text
from .plans import ConstraintPlan, enumerate_plans, DEFAULT_PLAN_CAP
from .polytope import row_support
from .qp import MAX_ITERS, OPTIMAL, Qp, QpSolution, solve_qp
from .system import LtiSystem, simulate

TIGHTEN_ROWWISE = "row-wise"
TIGHTEN_UNIFORM = "matrix-norm"

# energies are compared up to this absolute slack when picking winners and
# when checking the e_mal >= e_nom invariant
ENERGY_TIE_TOL = 1e-9
RESILIENCE_NEG_TOL = 1e-7

STATUS_OK = "ok"
STATUS_NOM_INFEASIBLE = "nominal-infeasible"
STATUS_MAL_INFEASIBLE = "mal-infeasible"
STATUS_SOLVER_LIMIT = "solver-limit"


@dataclass(frozen=True, eq=False)
class PlanRow:
    """One scalar constraint row of a plan QP, with provenance.

    u_coeffs @ u_stacked <= raw_rhs holds in the nominal case; the
    worst-case variant subtracts `support`, the maximum of w_coeffs @ w over
    admissible stacked disturbances. poly_row and poly_rhs keep the original
    halfspace (poly_row @ x_t <= poly_rhs) so simulated trajectories can be
    checked against the row without going through the lifted matrices.
    """

    kind: str
    t: int
    set_name: str
    u_coeffs: np.ndarray
    w_coeffs: np.ndarray
    raw_rhs: float
    support: float
    label: str
    poly_row: np.ndarray = None
    poly_rhs: float = 0.0


def assemble_plan_rows(
    sys: LtiSystem,
    x0,
    plan: ConstraintPlan,
    N: int,
    tightening: str = TIGHTEN_ROWWISE,
) -> list:
    """State-constraint rows of a plan over horizon N, in plan order.

    Reach requirements contribute one block of rows at their exact time;
    safety windows contribute one block per covered time step. Duplicate
    (time, set) blocks are emitted once. Time 0 rows have zero input and
    disturbance coefficients (the initial state is data, not a decision).
    """
    if plan.horizon > N:
        raise ValueError(
            f"plan references time {plan.horizon}, beyond the lift horizon {N}"
        )
    if tightening not in (TIGHTEN_ROWWISE, TIGHTEN_UNIFORM):
        raise ValueError(f"unknown tightening mode {tightening!r}")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != sys.n:
        raise ValueError(f"x0 has dim {x0.shape[0]}, expected {sys.n}")
    lift = sys.lift(N)
    n, m, p = sys.n, sys.m, sys.p

    def block(t, poly):
        """(u-matrix, w-matrix, rhs vector) for requiring x_t in poly."""
        if t == 0:
            Mu = np.zeros((poly.num_rows, N * m))
            Mw = np.zeros((poly.num_rows, N * p))
            rhs = poly.h - poly.H @ x0
        else:
            rows = lift.state_block_rows(t, n)
            Mu = poly.H @ lift.Gu[rows]
            Mw = poly.H @ lift.Gw[rows]
            rhs = poly.h - poly.H @ (lift.free_response[rows] @ x0)
        return Mu, Mw, rhs

    out = []
    emitted = set()

    def emit(kind, t, poly, group_label):
        if (t, poly.name) in emitted:
            return []
        emitted.add((t, poly.name))
        Mu, Mw, rhs = block(t, poly)
        supports = row_support(Mw, sys.wbar)
        rows = []
        for i in range(poly.num_rows):
            rows.append(
                PlanRow(
                    kind=kind,
                    t=t,
                    set_name=poly.name,
                    u_coeffs=Mu[i],
                    w_coeffs=Mw[i],
                    raw_rhs=float(rhs[i]),
                    support=float(supports[i]),
                    label=f"{group_label} {poly.name} t={t} row={i}",
                    poly_row=poly.H[i],
                    poly_rhs=float(poly.h[i]),
                )
            )
        return rows

    groups = []
    for t, poly in plan.reach_rows:
        groups.append(emit("reach", t, poly, f"reach[{t}]"))
    for (a, b), poly in plan.safety_rows:
        window_rows = []
        for t in range(a, b + 1):
            window_rows.extend(emit("safety", t, poly, f"safety[{a},{b}]"))
        groups.append(window_rows)

    if tightening == TIGHTEN_UNIFORM:
        # uniform per-group value: the smallest constant that dominates every
        # row's exact support (max absolute row sum of the stacked w-map)
        flat = []
        for grp in groups:
            uniform = max((r.support for r in grp), default=0.0)
            for r in grp:
                flat.append(
                    PlanRow(r.kind, r.t, r.set_name, r.u_coeffs, r.w_coeffs,
                            r.raw_rhs, uniform, r.label, r.poly_row, r.poly_rhs)
                )
        return flat
    return [r for grp in groups for r in grp]


def build_plan_qp(
    sys: LtiSystem,
    x0,
    plan: ConstraintPlan,
    N: int,
    worst_case: bool,
    tightening: str = TIGHTEN_ROWWISE,
) -> Qp:
    """QP over the stacked input (dim N*m) whose minimum is the plan energy.

    Rows are the plan's state constraints (right-hand sides tightened by the
    disturbance support when worst_case) plus the input-set rows for every
    step. Input rows are never tightened: the input is chosen, the
    disturbance is not.
    """
    m = sys.m
    plan_rows = assemble_plan_rows(sys, x0, plan, N, tightening)
    mats = [r.u_coeffs for r in plan_rows]
    rhs = [r.raw_rhs - (r.support if worst_case else 0.0) for r in plan_rows]
    labels = [r.label for r in plan_rows]
    if sys.input_set is not None:
        U = sys.input_set
        for t in range(N):
            blockrow = np.zeros((U.num_rows, N * m))
            blockrow[:, t * m : (t + 1) * m] = U.H
            for i in range(U.num_rows):
                mats.append(blockrow[i])
                rhs.append(float(U.h[i]))
                labels.append(f"input t={t} row={i}")
    if mats:
        rows = np.vstack(mats)
        rhs_vec = np.array(rhs)
    else:
        rows = np.zeros((0, N * m))
        rhs_vec = np.zeros(0)
    return Qp(dim=N * m, rows=rows, rhs=rhs_vec, labels=tuple(labels))


@dataclass
class PlanOutcome:
    plan: ConstraintPlan
    status: str
    objective: float | None
    solution: QpSolution
    qp: Qp


@dataclass
class EnergySolve:
    """Best energy over a plan family, one side (nominal or worst-case).

    status is "optimal", "infeasible" (every plan certified infeasible), or
    "solver-limit" (no optimum found and at least one plan uncertified).
    """

    status: str
    energy: float | None
    plan: ConstraintPlan | None
    u: np.ndarray | None
    outcomes: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    solution: QpSolution | None = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _best_over_plans(sys, x0, plans, N, worst_case, tightening, settings):
    """Solve every plan QP and keep the minimum-energy optimal one.

    Plans are scanned in sorted (reach-time lexicographic) order, so ties up
    to ENERGY_TIE_TOL resolve to the earliest reach-time tuple, and a plan
    reaching zero energy ends the scan early (nothing can beat it).
    """
    outcomes = []
    warnings = []
    best = None
    for plan in sorted(plans, key=ConstraintPlan.sort_key):
        qp = build_plan_qp(sys, x0, plan, N, worst_case, tightening)
        sol = solve_qp(qp, settings)
        outcome = PlanOutcome(plan, sol.status,
                              float(sol.objective) if sol.status == OPTIMAL else None,
                              sol, qp)
        outcomes.append(outcome)
        if sol.status == MAX_ITERS:
            warnings.append(
                f"plan ({plan.describe()}) hit the iteration cap; treated as infeasible"
            )
        if sol.status == OPTIMAL:
            if best is None or outcome.objective < best.objective - ENERGY_TIE_TOL:
                best = outcome
            if best.objective <= ENERGY_TIE_TOL:
                break
    if best is not None:
        u = best.solution.primal.reshape(N, sys.m) if N * sys.m else np.zeros((N, sys.m))
        return EnergySolve("optimal", best.objective, best.plan, u,
                           outcomes, warnings, best.solution)
    status = (
        "solver-limit"
        if any(o.status == MAX_ITERS for o in outcomes)
        else "infeasible"
    )
    return EnergySolve(status, None, None, None, outcomes, warnings, None)


def nominal_energy(
    sys, x0, spec, bindings, N, *,
    strict_eventually=False, plan_cap=DEFAULT_PLAN_CAP, settings=None,
) -> EnergySolve:
    """Minimum input energy achieving `spec` under disturbance-free dynamics."""
    plans = enumerate_plans(spec, N, bindings, strict_eventually=strict_eventually, cap=plan_cap)
    return _best_over_plans(sys, x0, plans, N, False, TIGHTEN_ROWWISE, settings)


def malfunctioning_energy(
    sys, x0, spec, bindings, N, *,
    tightening=TIGHTEN_ROWWISE, strict_eventually=False,
    plan_cap=DEFAULT_PLAN_CAP, settings=None,
) -> EnergySolve:
    """Minimum input energy achieving `spec` under worst-case disturbances."""
    plans = enumerate_plans(spec, N, bindings, strict_eventually=strict_eventually, cap=plan_cap)
    return _best_over_plans(sys, x0, plans, N, True, tightening, settings)


@dataclass
class EnergyReport:
    """Energies, resilience, winning plans, and solver diagnostics."""

    e_nom: float | None
    e_mal: float | None
    resilience: float | None
    status: str
    reason: str | None
    u_nom: np.ndarray | None
    u_mal: np.ndarray | None
    plan_nom: ConstraintPlan | None
    plan_mal: ConstraintPlan | None
    tightening_mode: str
    nominal: EnergySolve
    malfunctioning: EnergySolve
    warnings: list
    wbar: float
    horizon: int
    spec_text: str


def energetic_resilience(
    sys, x0, spec, bindings, N, *,
    tightening=TIGHTEN_ROWWISE, strict_eventually=False,
    plan_cap=DEFAULT_PLAN_CAP, settings=None,
) -> EnergyReport:
    """Full report: nominal energy, malfunctioning energy, and their gap.

    The resilience is defined only when both energies are finite; otherwise
    the report states which side failed (an infeasible worst-case side means
    the task is not robustly satisfiable at this disturbance bound, which is
    a modeling outcome, not an error).
    """
    plans = enumerate_plans(spec, N, bindings, strict_eventually=strict_eventually, cap=plan_cap)
    nom = _best_over_plans(sys, x0, plans, N, False, TIGHTEN_ROWWISE, settings)
    mal = _best_over_plans(sys, x0, plans, N, True, tightening, settings)
    return _pair_report(sys, spec, N, tightening, nom, mal)


@dataclass
class ComposedBound:
    """Aggregate of component reports under conjunction or disjunction.

    Conjunction: resilience_bound is the sum of component resiliences (with
    component energy sums alongside); valid as an upper bound only for
    non-overlapping task horizons, so the overlap flag is recorded.
    Disjunction: energies are the minima of the component energies and the
    resilience follows from those minima; the min of component resiliences
    is reported separately as claimed_bound since the minimizing branches
    may differ, with a flag when the claim is violated.
    """

    mode: str
    e_nom: float
    e_mal: float
    resilience: float | None
    resilience_bound: float | None
    component_count: int
    horizons_overlap: bool | None = None
    claimed_bound: float | None = None
    claimed_bound_violated: bool | None = None


def compose_bounds(reports, mode, horizons_overlap=None) -> ComposedBound:
    """Combine component EnergyReports per the composition rules above.

    Infeasible component energies propagate as +inf through sums and minima.
    """
    if not reports:
        raise ValueError("compose_bounds needs at least one component report")
    if mode not in ("conjunction", "disjunction"):
        raise ValueError(f"unknown composition mode {mode!r}")
    e_noms = [r.e_nom if r.e_nom is not None else math.inf for r in reports]
    e_mals = [r.e_mal if r.e_mal is not None else math.inf for r in reports]
    resiliences = [r.resilience if r.resilience is not None else math.inf for r in reports]

    if mode == "conjunction":
        bound = sum(resiliences)
        return ComposedBound(
            mode=mode,
            e_nom=sum(e_noms),
            e_mal=sum(e_mals),
            resilience=None,
            resilience_bound=bound if math.isfinite(bound) else math.inf,
            component_count=len(reports),
            horizons_overlap=horizons_overlap,
        )

    e_nom = min(e_noms)
    e_mal = min(e_mals)
    resilience = e_mal - e_nom if math.isfinite(e_mal) and math.isfinite(e_nom) else None
    claimed = min(resiliences)
    violated = None
    if resilience is not None and math.isfinite(claimed):
        violated = resilience > claimed + ENERGY_TIE_TOL
    return ComposedBound(
        mode=mode,
        e_nom=e_nom,
        e_mal=e_mal,
        resilience=resilience,
        resilience_bound=claimed if math.isfinite(claimed) else math.inf,
        component_count=len(reports),
        claimed_bound=claimed if math.isfinite(claimed) else math.inf,
        claimed_bound_violated=violated,
    )


def set_extension(sys, x0_grid, spec, bindings, N, **kwargs):
    """Sampled supremum of the resilience over a finite set of initial states.

    Returns (sup over points with defined resilience or None, per-point
    reports). This is a sample-based aggregate: over a continuum region it
    estimates, not certifies, the supremum.
    """
    points = [np.asarray(p, dtype=float).reshape(-1) for p in x0_grid]
    if not points:
        raise ValueError("set_extension needs at least one grid point")
    reports = [energetic_resilience(sys, p, spec, bindings, N, **kwargs) for p in points]
    finite = [r.resilience for r in reports if r.resilience is not None]
    sup = max(finite) if finite else None
    return sup, reports


@dataclass
class ComponentResult:
    spec_text: str
    horizon: int
    anchor_nom: np.ndarray
    anchor_mal: np.ndarray
    report: EnergyReport


def chained_component_reports(
    sys, x0, component_specs, bindings, *,
    tightening=TIGHTEN_ROWWISE, strict_eventually=False,
    plan_cap=DEFAULT_PLAN_CAP, settings=None,
) -> list:
    """Per-component reports for sequential tasks, with chained anchoring.

    Each component runs over its own minimal horizon. Components with reach
    requirements advance the anchor to the synthesized trajectory's state at
    the winning plan's last reach time: the nominal input chains the nominal
    anchor and the worst-case input chains the worst-case anchor (both rolled
    out disturbance-free, since the synthesized plan is open loop). Pure
    safety components leave the anchors unchanged, so list them first.
    """
    anchor_nom = np.asarray(x0, dtype=float).reshape(-1)
    anchor_mal = anchor_nom.copy()
    results = []
    for spec in component_specs:
        N_i = max(1, required_horizon(spec))
        plans = enumerate_plans(
            spec, N_i, bindings, strict_eventually=strict_eventually, cap=plan_cap
        )
        nom = _best_over_plans(sys, anchor_nom, plans, N_i, False, TIGHTEN_ROWWISE, settings)
        mal = _best_over_plans(sys, anchor_mal, plans, N_i, True, tightening, settings)
        report = _pair_report(sys, spec, N_i, tightening, nom, mal)
        results.append(
            ComponentResult(to_text(spec), N_i, anchor_nom.copy(), anchor_mal.copy(), report)
        )
        anchor_nom = _advance(sys, anchor_nom, nom)
        anchor_mal = _advance(sys, anchor_mal, mal)
    return results


def _advance(sys, anchor, solve: EnergySolve):
    if not solve.optimal or solve.plan is None or not solve.plan.reach_times:
        return anchor
    t_last = max(solve.plan.reach_times)
    if t_last == 0:
        return anchor
    traj = simulate(sys, anchor, solve.u[:t_last])
    return traj[-1]


def _pair_report(sys, spec, N, tightening, nom, mal) -> EnergyReport:
    """EnergyReport from separately computed sides (used for chained anchors)."""
    warnings = list(nom.warnings) + list(mal.warnings)
    resilience = None
    reason = None
    if nom.optimal and mal.optimal:
        status = STATUS_OK
        resilience = mal.energy - nom.energy
        if resilience < -RESILIENCE_NEG_TOL:
            warnings.append(
                f"resilience {resilience:.3e} below -{RESILIENCE_NEG_TOL}; "
                "this indicates a solver accuracy problem"
            )
    elif STATUS_SOLVER_LIMIT in (nom.status, mal.status):
        status = STATUS_SOLVER_LIMIT
        reason = "solver hit the iteration cap before certifying an outcome"
    elif not nom.optimal:
        status = STATUS_NOM_INFEASIBLE
        reason = "specification unsatisfiable even without disturbance"
    else:
        status = STATUS_MAL_INFEASIBLE
        reason = f"not resiliently satisfiable at wbar={sys.wbar}"
    return EnergyReport(
        e_nom=nom.energy, e_mal=mal.energy, resilience=resilience,
        status=status, reason=reason,
        u_nom=nom.u, u_mal=mal.u, plan_nom=nom.plan, plan_mal=mal.plan,
        tightening_mode=tightening, nominal=nom, malfunctioning=mal,
        warnings=warnings, wbar=sys.wbar, horizon=N, spec_text=to_text(spec),
    )
