"""Experiment configuration: a single TOML document per case study.

Matrices are dense nested arrays (row-major); sets are named halfspace
blocks; the task formula is a string in the specification grammar. A task
names either a single initial state or a planar grid of initial states,
never both.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .formula import Formula, SpecError, mandatory_horizon
from .parser import parse_spec
from .polytope import Polytope
from .system import LtiSystem, check_controllable


class ConfigError(Exception):
    """Configuration problem, annotated with the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass
class GridSpec:
    x_range: tuple
    y_range: tuple
    nx: int
    ny: int
    dims: tuple = (0, 1)
    base: np.ndarray | None = None

    def points(self, state_dim: int):
        """Row-major grid of initial states (x varies fastest along a row)."""
        xs = np.linspace(self.x_range[0], self.x_range[1], self.nx)
        ys = np.linspace(self.y_range[0], self.y_range[1], self.ny)
        base = self.base if self.base is not None else np.zeros(state_dim)
        out = []
        for y in ys:
            for x in xs:
                pt = base.copy()
                pt[self.dims[0]] = x
                pt[self.dims[1]] = y
                out.append((x, y, pt))
        return out


@dataclass
class ExperimentConfig:
    label: str
    system: LtiSystem
    sets: dict
    spec_text: str
    spec: Formula
    horizon: int
    x0: np.ndarray | None
    grid: GridSpec | None
    component_texts: list = field(default_factory=list)
    component_specs: list = field(default_factory=list)
    compose_mode: str = "conjunction"
    components_non_overlapping: bool = False
    sweep_wbars: list = field(default_factory=list)
    validation_samples: int = 10_000
    validation_seed: int = 0
    reference_resilience: float | None = None
    output_dir: str | None = None
    controllability_warning: str | None = None

    @property
    def bindings(self) -> dict:
        return self.sets


def _get(table, path, key, kind, required=True, default=None):
    if key not in table:
        if required:
            raise ConfigError(f"{path}.{key}", "missing required field")
        return default
    value = table[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if kind is not None and not isinstance(value, kind):
        raise ConfigError(f"{path}.{key}", f"expected {kind.__name__}, got {type(value).__name__}")
    return value


def _matrix(table, path, key, required=True):
    raw = _get(table, path, key, list, required=required)
    if raw is None:
        return None
    try:
        M = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}.{key}", f"not a rectangular numeric array: {exc}") from None
    if M.ndim != 2:
        raise ConfigError(f"{path}.{key}", f"expected a nested (2-D) array, got {M.ndim}-D")
    return M


def _vector(table, path, key, required=True):
    raw = _get(table, path, key, list, required=required)
    if raw is None:
        return None
    try:
        v = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}.{key}", f"not a numeric array: {exc}") from None
    if v.ndim != 1:
        raise ConfigError(f"{path}.{key}", f"expected a flat array, got {v.ndim}-D")
    return v


def load_config(path) -> ExperimentConfig:
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(path), f"invalid TOML: {exc}") from None
    return parse_config(doc, label_default=str(path))


def parse_config(doc: dict, label_default: str = "experiment") -> ExperimentConfig:
    label = _get(doc, "", "label", str, required=False, default=label_default)

    sys_table = _get(doc, "", "system", dict)
    A = _matrix(sys_table, "system", "A")
    B_u = _matrix(sys_table, "system", "B_u")
    B_w = _matrix(sys_table, "system", "B_w")
    wbar = _get(sys_table, "system", "wbar", float)
    if wbar < 0:
        raise ConfigError("system.wbar", f"must be nonnegative, got {wbar}")
    input_set = None
    if "input_set" in sys_table:
        it = sys_table["input_set"]
        H = _matrix(it, "system.input_set", "H")
        h = _vector(it, "system.input_set", "h")
        try:
            input_set = Polytope("U", H, h)
        except ValueError as exc:
            raise ConfigError("system.input_set", str(exc)) from None
    try:
        system = LtiSystem(A, B_u, B_w, input_set=input_set, wbar=wbar)
    except ValueError as exc:
        raise ConfigError("system", str(exc)) from None

    ctrb_warning = None
    if not check_controllable(system):
        ctrb_warning = "the (A, B_u) pair fails the controllability rank test"

    sets = {}
    for name, table in _get(doc, "", "sets", dict, required=False, default={}).items():
        H = _matrix(table, f"sets.{name}", "H")
        h = _vector(table, f"sets.{name}", "h")
        try:
            poly = Polytope(name, H, h)
        except ValueError as exc:
            raise ConfigError(f"sets.{name}", str(exc)) from None
        if poly.dim != system.n:
            raise ConfigError(
                f"sets.{name}", f"lives in R^{poly.dim} but the state dim is {system.n}"
            )
        sets[name] = poly

    task = _get(doc, "", "task", dict)
    spec_text = _get(task, "task", "spec", str)
    horizon = _get(task, "task", "horizon", int)
    if horizon < 1:
        raise ConfigError("task.horizon", f"must be >= 1, got {horizon}")
    try:
        spec = parse_spec(spec_text, sets, state_dim=system.n)
    except (SpecError, ValueError) as exc:
        raise ConfigError("task.spec", str(exc)) from None
    must_reach = mandatory_horizon(spec)
    if must_reach > horizon:
        raise ConfigError(
            "task.horizon",
            f"the formula must inspect time {must_reach}, beyond the horizon {horizon}",
        )

    x0 = _vector(task, "task", "x0", required=False)
    grid = None
    if "grid" in task:
        if x0 is not None:
            raise ConfigError("task", "x0 and grid are mutually exclusive; give exactly one")
        grid = _parse_grid(task["grid"], system.n)
    elif x0 is None:
        raise ConfigError("task", "either x0 or a grid block is required")
    if x0 is not None and x0.shape[0] != system.n:
        raise ConfigError("task.x0", f"has dim {x0.shape[0]}, state dim is {system.n}")

    component_texts, component_specs = [], []
    compose_mode = "conjunction"
    non_overlapping = False
    if "components" in doc:
        comp = doc["components"]
        specs_raw = _get(comp, "components", "specs", list)
        compose_mode = _get(comp, "components", "mode", str, required=False, default="conjunction")
        if compose_mode not in ("conjunction", "disjunction"):
            raise ConfigError("components.mode", f"must be conjunction or disjunction, got {compose_mode!r}")
        non_overlapping = _get(
            comp, "components", "non_overlapping", bool, required=False, default=False
        )
        for i, text in enumerate(specs_raw):
            if not isinstance(text, str):
                raise ConfigError(f"components.specs[{i}]", "expected a formula string")
            try:
                node = parse_spec(text, sets, state_dim=system.n)
            except (SpecError, ValueError) as exc:
                raise ConfigError(f"components.specs[{i}]", str(exc)) from None
            component_texts.append(text)
            component_specs.append(node)

    sweep_wbars = []
    if "sweep" in doc:
        sweep_wbars = [float(w) for w in _get(doc["sweep"], "sweep", "wbar", list)]
        if any(w < 0 for w in sweep_wbars):
            raise ConfigError("sweep.wbar", "all disturbance bounds must be nonnegative")
        if sorted(sweep_wbars) != sweep_wbars:
            raise ConfigError("sweep.wbar", "list must be sorted ascending")

    val = doc.get("validation", {})
    samples = _get(val, "validation", "samples", int, required=False, default=10_000)
    seed = _get(val, "validation", "seed", int, required=False, default=0)
    if samples < 0:
        raise ConfigError("validation.samples", "must be nonnegative")

    rep = doc.get("report", {})
    reference = _get(rep, "report", "reference_resilience", float, required=False)

    out = doc.get("output", {})
    output_dir = _get(out, "output", "dir", str, required=False)

    return ExperimentConfig(
        label=label,
        system=system,
        sets=sets,
        spec_text=spec_text,
        spec=spec,
        horizon=horizon,
        x0=x0,
        grid=grid,
        component_texts=component_texts,
        component_specs=component_specs,
        compose_mode=compose_mode,
        components_non_overlapping=non_overlapping,
        sweep_wbars=sweep_wbars,
        validation_samples=samples,
        validation_seed=seed,
        reference_resilience=reference,
        output_dir=output_dir,
        controllability_warning=ctrb_warning,
    )


def _parse_grid(table, state_dim) -> GridSpec:
    x_range = _vector(table, "task.grid", "x_range")
    y_range = _vector(table, "task.grid", "y_range")
    for key, rng in (("x_range", x_range), ("y_range", y_range)):
        if rng.shape[0] != 2 or rng[0] > rng[1]:
            raise ConfigError(f"task.grid.{key}", "expected [lo, hi] with lo <= hi")
    nx = _get(table, "task.grid", "nx", int)
    ny = _get(table, "task.grid", "ny", int)
    if nx < 1 or ny < 1:
        raise ConfigError("task.grid", "nx and ny must be >= 1")
    dims = tuple(_get(table, "task.grid", "dims", list, required=False, default=[0, 1]))
    if len(dims) != 2 or not all(isinstance(d, int) and 0 <= d < state_dim for d in dims) or dims[0] == dims[1]:
        raise ConfigError("task.grid.dims", f"expected two distinct state indices below {state_dim}")
    base = _vector(table, "task.grid", "base", required=False)
    if state_dim != 2 and base is None:
        raise ConfigError(
            "task.grid",
            f"state dim is {state_dim}; a planar grid needs `base` (and usually `dims`) "
            "to pin the remaining coordinates",
        )
    if base is not None and base.shape[0] != state_dim:
        raise ConfigError("task.grid.base", f"has dim {base.shape[0]}, state dim is {state_dim}")
    return GridSpec(
        x_range=(float(x_range[0]), float(x_range[1])),
        y_range=(float(y_range[0]), float(y_range[1])),
        nx=nx,
        ny=ny,
        dims=dims,
        base=base,
    )


def spec_hash(spec_text: str) -> str:
    """Short stable identifier of a formula's surface text."""
    return hashlib.sha256(spec_text.strip().encode()).hexdigest()[:12]
