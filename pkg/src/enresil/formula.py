"""Finite-trace temporal formulas over polytope atoms.

Formulas are trees of Boolean and horizon-bounded temporal operators whose
atoms name polytopes; a state satisfies an atom when it lies in the bound
polytope. Trajectories are finite state sequences (x_0, ..., x_N) and all
horizon superscripts count absolute steps forward from the evaluation index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SpecError(Exception):
    """Base class for specification-language errors."""


class TrajectoryTooShortError(SpecError):
    """Trajectory does not cover a time index the formula must inspect."""


class UnboundAtomError(SpecError):
    def __init__(self, name: str, pos=None):
        self.name = name
        self.pos = pos
        where = f" at line {pos[0]}, column {pos[1]}" if pos else ""
        super().__init__(f"atom {name!r}{where} is not bound to any set")


class Formula:
    """Base class; concrete nodes are frozen dataclasses below."""

    __slots__ = ()


def _posfield():
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class TrueFormula(Formula):
    pos: tuple | None = _posfield()


@dataclass(frozen=True)
class FalseFormula(Formula):
    pos: tuple | None = _posfield()


@dataclass(frozen=True)
class Atom(Formula):
    name: str
    pos: tuple | None = _posfield()


@dataclass(frozen=True)
class Not(Formula):
    child: Formula
    pos: tuple | None = _posfield()


@dataclass(frozen=True)
class And(Formula):
    children: tuple
    pos: tuple | None = _posfield()


@dataclass(frozen=True)
class Or(Formula):
    children: tuple
    pos: tuple | None = _posfield()


@dataclass(frozen=True)
class Next(Formula):
    k: int
    child: Formula
    pos: tuple | None = _posfield()


@dataclass(frozen=True)
class Eventually(Formula):
    k: int
    child: Formula
    pos: tuple | None = _posfield()


@dataclass(frozen=True)
class Always(Formula):
    k: int
    child: Formula
    pos: tuple | None = _posfield()


@dataclass(frozen=True)
class Until(Formula):
    k: int
    left: Formula
    right: Formula
    pos: tuple | None = _posfield()


def to_text(spec: Formula) -> str:
    """Canonical surface syntax; parse(to_text(spec)) reproduces the tree."""

    def wrap_unary(node):
        # operands of unary operators and conjuncts must be unary-level
        if isinstance(node, (And, Or)):
            return f"({to_text(node)})"
        return to_text(node)

    if isinstance(spec, TrueFormula):
        return "true"
    if isinstance(spec, FalseFormula):
        return "false"
    if isinstance(spec, Atom):
        return spec.name
    if isinstance(spec, Not):
        return f"!{wrap_unary(spec.child)}"
    if isinstance(spec, And):
        return " && ".join(wrap_unary(c) for c in spec.children)
    if isinstance(spec, Or):
        parts = []
        for c in spec.children:
            parts.append(f"({to_text(c)})" if isinstance(c, Or) else to_text(c))
        return " || ".join(parts)
    if isinstance(spec, Next):
        return f"X[{spec.k}] {wrap_unary(spec.child)}"
    if isinstance(spec, Eventually):
        return f"F[{spec.k}] {wrap_unary(spec.child)}"
    if isinstance(spec, Always):
        return f"G[{spec.k}] {wrap_unary(spec.child)}"
    if isinstance(spec, Until):
        return f"U[{spec.k}]({to_text(spec.left)}, {to_text(spec.right)})"
    raise TypeError(f"not a formula node: {spec!r}")


def atom_names(spec: Formula) -> set:
    """All atom names occurring in the formula."""
    if isinstance(spec, Atom):
        return {spec.name}
    if isinstance(spec, Not):
        return atom_names(spec.child)
    if isinstance(spec, (And, Or)):
        out = set()
        for c in spec.children:
            out |= atom_names(c)
        return out
    if isinstance(spec, (Next, Eventually, Always)):
        return atom_names(spec.child)
    if isinstance(spec, Until):
        return atom_names(spec.left) | atom_names(spec.right)
    return set()


def required_horizon(spec: Formula) -> int:
    """Largest time index the formula can inspect when evaluated at step 0.

    For existential operators this is the latest admissible witness, not a
    hard requirement on trajectory length (see evaluate).
    """
    if isinstance(spec, (TrueFormula, FalseFormula, Atom)):
        return 0
    if isinstance(spec, Not):
        return required_horizon(spec.child)
    if isinstance(spec, (And, Or)):
        return max(required_horizon(c) for c in spec.children)
    if isinstance(spec, (Next, Eventually, Always)):
        return spec.k + required_horizon(spec.child)
    if isinstance(spec, Until):
        return spec.k + max(required_horizon(spec.left), required_horizon(spec.right))
    raise TypeError(f"not a formula node: {spec!r}")


def mandatory_horizon(spec: Formula, at: int = 0) -> int:
    """Largest time index the formula must inspect no matter which witnesses
    are chosen; a trajectory (or experiment horizon) shorter than this makes
    evaluation and synthesis fail rather than come out false.

    Eventually and Until contribute only their evaluation point: witnesses
    whose requirements fall off the end of the trace are dropped, not
    required.
    """
    if isinstance(spec, (TrueFormula, FalseFormula, Atom)):
        return at
    if isinstance(spec, Not):
        return mandatory_horizon(spec.child, at)
    if isinstance(spec, (And, Or)):
        return max(mandatory_horizon(c, at) for c in spec.children)
    if isinstance(spec, Next):
        return mandatory_horizon(spec.child, at + spec.k)
    if isinstance(spec, Always):
        return max(
            at + spec.k,
            mandatory_horizon(spec.child, at + spec.k),
        )
    if isinstance(spec, (Eventually, Until)):
        return at
    raise TypeError(f"not a formula node: {spec!r}")


def evaluate(spec: Formula, trajectory, bindings: dict, at: int = 0) -> bool:
    """Satisfaction of `spec` by the finite trajectory, judged from step `at`.

    Atoms hold when the state lies in the bound polytope. Next and Always
    inspect fixed indices and raise TrajectoryTooShortError when those fall
    beyond the trajectory; Eventually and Until look for a witness and their
    search window is clipped at the end of the trajectory. A candidate
    witness whose own sub-requirements overflow the trace is skipped rather
    than raised: on a finite trace, a witness must be observable to count.
    """
    traj = np.atleast_2d(np.asarray(trajectory, dtype=float))
    return _eval(spec, traj, bindings, at)


def _eval(spec, traj, bindings, i):
    last = traj.shape[0] - 1
    if i > last:
        raise TrajectoryTooShortError(
            f"evaluation index {i} beyond final trajectory index {last}"
        )
    if isinstance(spec, TrueFormula):
        return True
    if isinstance(spec, FalseFormula):
        return False
    if isinstance(spec, Atom):
        poly = bindings.get(spec.name)
        if poly is None:
            raise UnboundAtomError(spec.name, spec.pos)
        return poly.contains(traj[i])
    if isinstance(spec, Not):
        return not _eval(spec.child, traj, bindings, i)
    if isinstance(spec, And):
        return all(_eval(c, traj, bindings, i) for c in spec.children)
    if isinstance(spec, Or):
        return any(_eval(c, traj, bindings, i) for c in spec.children)
    if isinstance(spec, Next):
        if i + spec.k > last:
            raise TrajectoryTooShortError(
                f"next-step index {i + spec.k} beyond final trajectory index {last}"
            )
        return _eval(spec.child, traj, bindings, i + spec.k)
    if isinstance(spec, Always):
        if i + spec.k > last:
            raise TrajectoryTooShortError(
                f"safety window [{i}, {i + spec.k}] beyond final trajectory index {last}"
            )
        return all(_eval(spec.child, traj, bindings, m) for m in range(i, i + spec.k + 1))
    if isinstance(spec, Eventually):
        end = min(i + spec.k, last)
        for m in range(i, end + 1):
            # a witness must be fully checkable inside the trace; one whose
            # own requirements overflow the trace cannot serve
            try:
                if _eval(spec.child, traj, bindings, m):
                    return True
            except TrajectoryTooShortError:
                continue
        return False
    if isinstance(spec, Until):
        end = min(i + spec.k, last)
        for m in range(i, end + 1):
            try:
                if _eval(spec.right, traj, bindings, m):
                    if all(_eval(spec.left, traj, bindings, j) for j in range(i, m)):
                        return True
            except TrajectoryTooShortError:
                continue
        return False
    raise TypeError(f"not a formula node: {spec!r}")


def check_bindings(spec: Formula, bindings: dict, state_dim: int | None = None):
    """Raise UnboundAtomError (or ValueError on dim mismatch) for bad atoms."""

    def visit(node):
        if isinstance(node, Atom):
            poly = bindings.get(node.name)
            if poly is None:
                raise UnboundAtomError(node.name, node.pos)
            if state_dim is not None and poly.dim != state_dim:
                raise ValueError(
                    f"set {node.name!r} lives in R^{poly.dim}, state dim is {state_dim}"
                )
        elif isinstance(node, Not):
            visit(node.child)
        elif isinstance(node, (And, Or)):
            for c in node.children:
                visit(c)
        elif isinstance(node, (Next, Eventually, Always)):
            visit(node.child)
        elif isinstance(node, Until):
            visit(node.left)
            visit(node.right)

    visit(spec)
