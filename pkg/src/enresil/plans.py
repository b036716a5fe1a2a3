"""Expansion of temporal formulas into families of convex constraint plans.

A constraint plan is one conjunctive disjunct of the expanded formula: a set
of exact-time reach requirements plus safety windows, each tied to a named
polytope. The disjunction of a formula's plans is equivalent to the formula
over trajectories of the experiment horizon, so minimum-energy synthesis
reduces to solving one convex program per plan and taking the best.
"""

from __future__ import annotations

from dataclasses import dataclass

from .formula import (
    And,
    Atom,
    Always,
    Eventually,
    FalseFormula,
    Formula,
    Next,
    Not,
    Or,
    SpecError,
    TrueFormula,
    Until,
    to_text,
)
from .polytope import Polytope

DEFAULT_PLAN_CAP = 100_000


class SynthesisUnsupportedError(SpecError):
    """Formula uses a construct with no convex expansion (e.g. negation)."""

    def __init__(self, node: Formula, why: str):
        self.node = node
        super().__init__(f"cannot synthesize {to_text(node)!r}: {why}")


class PlanCapExceededError(SpecError):
    def __init__(self, cap: int):
        self.cap = cap
        super().__init__(
            f"plan enumeration exceeded the cap of {cap} plans; "
            "the formula's disjunctive expansion is too large"
        )


class HorizonExceededError(SpecError):
    """A mandatory time index lies beyond the experiment horizon."""

    def __init__(self, node: Formula, t: int, N: int):
        self.node = node
        super().__init__(
            f"{to_text(node)!r} must inspect time {t}, beyond the horizon {N}"
        )


@dataclass(frozen=True)
class ConstraintPlan:
    """Purely conjunctive requirement set; its feasible input set is convex.

    reach_rows: ((t, Polytope), ...) requiring x_t in the set at exactly t,
    in formula order (outermost operator first) for deterministic tie-breaks.
    safety_rows: (((a, b), Polytope), ...) requiring x_k in the set for all
    k in [a, b]. horizon is the largest time index referenced.
    """

    reach_rows: tuple
    safety_rows: tuple
    horizon: int

    @property
    def reach_times(self) -> tuple:
        return tuple(t for t, _ in self.reach_rows)

    def sort_key(self):
        return (
            self.reach_times,
            tuple(p.name for _, p in self.reach_rows),
            tuple((a, b, p.name) for (a, b), p in self.safety_rows),
        )

    def structure_key(self):
        return (
            tuple(sorted((t, p.name) for t, p in self.reach_rows)),
            tuple(sorted((a, b, p.name) for (a, b), p in self.safety_rows)),
        )

    def pointwise(self) -> list:
        """Deduplicated (t, Polytope) membership requirements, sorted by time."""
        seen = {}
        for t, poly in self.reach_rows:
            seen.setdefault((t, poly.name), (t, poly))
        for (a, b), poly in self.safety_rows:
            for t in range(a, b + 1):
                seen.setdefault((t, poly.name), (t, poly))
        return [seen[k] for k in sorted(seen)]

    def describe(self) -> str:
        parts = [f"reach {p.name}@{t}" for t, p in self.reach_rows]
        parts += [f"safe {p.name}@[{a},{b}]" for (a, b), p in self.safety_rows]
        return ", ".join(parts) if parts else "no state requirements"


def _make_plan(reach, safety):
    times = [t for t, _ in reach] + [b for (_, b), _ in safety]
    return ConstraintPlan(tuple(reach), tuple(safety), max(times, default=0))


def _merge(left: ConstraintPlan, right: ConstraintPlan) -> ConstraintPlan:
    reach = list(left.reach_rows)
    seen = set((t, p.name) for t, p in reach)
    for t, p in right.reach_rows:
        if (t, p.name) not in seen:
            reach.append((t, p))
            seen.add((t, p.name))
    safety = list(left.safety_rows)
    sseen = set((a, b, p.name) for (a, b), p in safety)
    for (a, b), p in right.safety_rows:
        if (a, b, p.name) not in sseen:
            safety.append(((a, b), p))
            sseen.add((a, b, p.name))
    return _make_plan(reach, safety)


def _safety_atoms(node: Formula):
    """Atoms under an Always; only atoms and conjunctions of them qualify."""
    if isinstance(node, Atom):
        return [node]
    if isinstance(node, TrueFormula):
        return []
    if isinstance(node, And):
        out = []
        for c in node.children:
            out.extend(_safety_atoms(c))
        return out
    raise SynthesisUnsupportedError(
        node, "safety windows support only atoms and conjunctions of atoms"
    )


def enumerate_plans(
    spec: Formula,
    N: int,
    bindings: dict,
    *,
    strict_eventually: bool = False,
    cap: int = DEFAULT_PLAN_CAP,
) -> list:
    """Complete plan family equivalent to `spec` over length-(N+1) trajectories.

    Eventually witnesses include t = 0 (satisfaction by the initial state);
    strict_eventually restricts them to t >= 1. Witness times that would land
    beyond the horizon are dropped; mandatory indices (Next targets, Always
    windows) beyond the horizon raise HorizonExceededError. Plans are
    deduplicated and returned sorted by reach-time tuple.
    """
    if N < 0:
        raise ValueError(f"horizon must be nonnegative, got {N}")

    def atom_poly(node: Atom) -> Polytope:
        poly = bindings.get(node.name)
        if poly is None:
            raise SynthesisUnsupportedError(node, f"atom {node.name!r} is unbound")
        return poly

    def expand(node: Formula, t0: int) -> list:
        if t0 > N:
            raise HorizonExceededError(node, t0, N)
        if isinstance(node, TrueFormula):
            return [_make_plan([], [])]
        if isinstance(node, FalseFormula):
            return []
        if isinstance(node, Atom):
            return [_make_plan([(t0, atom_poly(node))], [])]
        if isinstance(node, Not):
            raise SynthesisUnsupportedError(
                node, "negation has no convex expansion (complements are non-convex)"
            )
        if isinstance(node, And):
            plans = [_make_plan([], [])]
            for child in node.children:
                child_plans = expand(child, t0)
                merged = []
                for a in plans:
                    for b in child_plans:
                        merged.append(_merge(a, b))
                        if len(merged) > cap:
                            raise PlanCapExceededError(cap)
                plans = merged
            return _dedup(plans)
        if isinstance(node, Or):
            plans = []
            for child in node.children:
                plans.extend(expand(child, t0))
                if len(plans) > cap:
                    raise PlanCapExceededError(cap)
            return _dedup(plans)
        if isinstance(node, Next):
            return expand(node.child, t0 + node.k)
        if isinstance(node, Eventually):
            start = 1 if strict_eventually and t0 == 0 else 0
            plans = []
            for d in range(start, node.k + 1):
                if t0 + d > N:
                    break  # witnesses beyond the horizon are unrealizable
                try:
                    plans.extend(expand(node.child, t0 + d))
                except HorizonExceededError:
                    continue  # this witness cannot be checked within N; drop it
                if len(plans) > cap:
                    raise PlanCapExceededError(cap)
            return _dedup(plans)
        if isinstance(node, Always):
            end = t0 + node.k
            if end > N:
                raise HorizonExceededError(node, end, N)
            atoms = _safety_atoms(node.child)
            safety = [((t0, end), atom_poly(a)) for a in atoms]
            return [_make_plan([], safety)]
        if isinstance(node, Until):
            if not isinstance(node.right, Atom):
                raise SynthesisUnsupportedError(
                    node, "until synthesis requires an atomic right operand"
                )
            left_atoms = _safety_atoms(node.left)
            target = atom_poly(node.right)
            plans = []
            for d in range(0, node.k + 1):
                if t0 + d > N:
                    break
                reach = [(t0 + d, target)]
                safety = (
                    [((t0, t0 + d - 1), atom_poly(a)) for a in left_atoms] if d > 0 else []
                )
                plans.append(_make_plan(reach, safety))
            return _dedup(plans)
        raise SynthesisUnsupportedError(node, "unknown node kind")

    plans = expand(spec, 0)
    plans.sort(key=ConstraintPlan.sort_key)
    return plans


def _dedup(plans: list) -> list:
    seen = set()
    out = []
    for p in plans:
        key = p.structure_key()
        if key not in seen:
            seen.add(key)
            out.append(p)
    return out
