"""Dense convex QP solver for problems: minimize ||x||_2^2 s.t. A x <= b.

The solver is an operator-splitting (ADMM) iteration with Ruiz row/column
equilibration, over-relaxation, residual-based step adaptation, and an
active-set polishing step that solves the equality-constrained KKT system on
the rows with near-zero slack. A solution is reported Optimal only together
with KKT residuals, so every answer is certified rather than trusted.

The objective is fixed: the squared Euclidean norm of the decision vector.
It is strictly convex, so the minimizer is unique and dual infeasibility
cannot occur; the only alternative outcomes are primal infeasibility
(detected through the standard certificate on the iterate differences) and
the iteration cap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERS = "max_iters"


@dataclass(frozen=True, eq=False)
class Qp:
    """min ||x||^2 over x in R^dim subject to rows @ x <= rhs.

    labels, when given, carry one provenance string per constraint row
    (which specification row or input bound produced it).
    """

    dim: int
    rows: np.ndarray
    rhs: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float).reshape(-1, self.dim)
        rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        if rows.shape[0] != rhs.shape[0]:
            raise ValueError(
                f"constraint matrix has {rows.shape[0]} rows, rhs has {rhs.shape[0]}"
            )
        if self.labels and len(self.labels) != rows.shape[0]:
            raise ValueError("one label per constraint row required")
        rows.flags.writeable = False
        rhs.flags.writeable = False
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "rhs", rhs)

    @property
    def num_rows(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True, eq=False)
class QpSolution:
    status: str
    primal: np.ndarray
    dual: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    complementarity: float
    iterations: int
    polished: bool = False


@dataclass
class SolverSettings:
    eps_abs: float = 1e-8
    eps_rel: float = 1e-8
    eps_pinf: float = 1e-10
    max_iter: int = 200_000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    check_interval: int = 25
    adaptive_rho: bool = True
    scaling_iters: int = 10
    # attempt certifying polish once scaled residual ratios fall below this
    polish_gate: float = 1e-3
    polish_tol: float = 1e-9
    polish_slack_cuts: tuple = (1e-7, 1e-5, 1e-9)


def solve_qp(qp: Qp, settings: SolverSettings | None = None) -> QpSolution:
    """Solve the QP; returns a typed status, never raises on infeasibility.

    MaxIters is a status, not an error. NaN or Inf anywhere in the problem
    data is rejected up front. Identical inputs and settings produce
    bit-identical iterates and solutions.
    """
    st = settings or SolverSettings()
    A, b, n, r = qp.rows, qp.rhs, qp.dim, qp.num_rows
    if not (np.isfinite(A).all() and np.isfinite(b).all()):
        raise ValueError("QP data contains NaN or Inf")
    if r == 0:
        x = np.zeros(n)
        return QpSolution(OPTIMAL, x, np.zeros(0), 0.0, 0.0, 0.0, 0.0, 0, True)

    d, e, c, Pbar, Ab, bb = _ruiz_equilibrate(A, b, st.scaling_iters)
    rho = st.rho
    solve = _factorize(Pbar, Ab, st.sigma, rho)

    xb = np.zeros(n)
    zb = np.zeros(r)
    yb = np.zeros(r)
    dyb = np.zeros(r)
    b_scale = 1.0 + float(np.abs(b).max())

    for it in range(1, st.max_iter + 1):
        xt = solve(st.sigma * xb + Ab.T @ (rho * zb - yb))
        zt = Ab @ xt
        xb = st.alpha * xt + (1.0 - st.alpha) * xb
        v = st.alpha * zt + (1.0 - st.alpha) * zb + yb / rho
        zb = np.minimum(v, bb)
        y_new = rho * (v - zb)
        dyb = y_new - yb
        yb = y_new

        if it % st.check_interval and it != st.max_iter:
            continue

        x = d * xb
        z = zb / e
        y = e * yb / c
        Ax = A @ x
        Aty = A.T @ y
        r_prim = float(np.abs(Ax - z).max())
        r_dual = float(np.abs(2.0 * x + Aty).max())
        s_prim = max(float(np.abs(Ax).max()), float(np.abs(z).max()))
        s_dual = max(2.0 * float(np.abs(x).max()), float(np.abs(Aty).max()))
        eps_prim = st.eps_abs + st.eps_rel * s_prim
        eps_dual = st.eps_abs + st.eps_rel * s_dual

        converged = r_prim <= eps_prim and r_dual <= eps_dual
        near = r_prim <= st.polish_gate * (1.0 + s_prim) and r_dual <= st.polish_gate * (
            1.0 + s_dual
        )
        if converged or near:
            polished = _polish(A, b, x, y, b_scale, st, exhaustive=converged)
            if polished is not None:
                px, py, (stat, feas, comp) = polished
                return QpSolution(
                    OPTIMAL, px, py, float(px @ px), feas, stat, comp, it, True
                )
            if converged:
                comp = float(np.abs(y * (b - Ax)).max()) if r else 0.0
                return QpSolution(
                    OPTIMAL, x, np.maximum(y, 0.0), float(x @ x), r_prim, r_dual, comp, it, False
                )

        dy = e * dyb / c
        dy_norm = float(np.abs(dy).max())
        if dy_norm > 0.0:
            ok_sign = float(np.abs(np.minimum(dy, 0.0)).max()) <= st.eps_pinf * dy_norm
            ok_dir = float(np.abs(A.T @ dy).max()) <= st.eps_pinf * dy_norm
            ok_gap = float(b @ dy) <= -st.eps_pinf * dy_norm
            if ok_sign and ok_dir and ok_gap:
                comp = float(np.abs(y * (b - Ax)).max())
                return QpSolution(
                    INFEASIBLE, x, np.maximum(dy, 0.0) / dy_norm, float(x @ x),
                    r_prim, r_dual, comp, it, False,
                )

        if st.adaptive_rho and r_dual > 0.0 and s_prim > 0.0 and s_dual > 0.0:
            ratio = np.sqrt((r_prim / s_prim) / (r_dual / s_dual))
            if np.isfinite(ratio) and (ratio > 5.0 or ratio < 0.2):
                rho = float(np.clip(rho * ratio, 1e-6, 1e6))
                solve = _factorize(Pbar, Ab, st.sigma, rho)

    x = d * xb
    y = np.maximum(e * yb / c, 0.0)
    Ax = A @ x
    r_prim = float(np.abs(Ax - np.minimum(Ax, b)).max())
    r_dual = float(np.abs(2.0 * x + A.T @ y).max())
    comp = float(np.abs(y * (b - Ax)).max())
    return QpSolution(MAX_ITERS, x, y, float(x @ x), r_prim, r_dual, comp, st.max_iter, False)


def _factorize(Pbar, Ab, sigma, rho):
    n = Ab.shape[1]
    M = (rho * Ab.T) @ Ab
    M[np.diag_indices(n)] += Pbar + sigma
    chol = scipy.linalg.cho_factor(M, lower=True, check_finite=False)

    def solve(rhs):
        return scipy.linalg.cho_solve(chol, rhs, check_finite=False)

    return solve


def _ruiz_equilibrate(A, b, iters):
    """Ruiz-style equilibration of the stacked KKT data plus cost scaling.

    Returns (d, e, c, Pbar_diag, A_scaled, b_scaled) with x = d * x_scaled,
    y = e * y_scaled / c; the scaled objective Hessian stays diagonal.
    """
    r, n = A.shape
    d = np.ones(n)
    e = np.ones(r)
    c = 1.0
    Pbar = 2.0 * np.ones(n)
    Ab = A.copy()
    bb = b.copy()
    for _ in range(iters):
        col_x = np.maximum(Pbar, np.abs(Ab).max(axis=0) if r else 0.0)
        col_y = np.abs(Ab).max(axis=1)
        col_x[col_x == 0.0] = 1.0
        col_y[col_y == 0.0] = 1.0
        dx = 1.0 / np.sqrt(col_x)
        dy = 1.0 / np.sqrt(col_y)
        Ab = dy[:, None] * Ab * dx[None, :]
        bb = dy * bb
        Pbar = Pbar * dx * dx
        d *= dx
        e *= dy
        gamma = 1.0 / max(float(Pbar.mean()), 1e-12)
        Pbar = Pbar * gamma
        c *= gamma
    return d, e, c, Pbar, Ab, bb


def _polish(A, b, x_seed, y_seed, b_scale, st, exhaustive):
    """Certify an exact KKT point from the ADMM iterate's active set.

    Solves min ||x||^2 s.t. A_S x = b_S (least-norm solution) on the guessed
    active rows S, recovers duals from stationarity, then repairs S by
    dropping negative-dual rows and adding violated ones. Accepts only when
    all three KKT residuals fall below the polish tolerance.
    """
    y_scale = 1.0 + float(np.abs(y_seed).max())
    cuts = st.polish_slack_cuts if exhaustive else st.polish_slack_cuts[:1]
    slack = b - A @ x_seed
    for cut in cuts:
        active = (slack <= cut * b_scale) | (y_seed > cut * y_scale)
        result = _active_set_refine(A, b, active, b_scale, st.polish_tol)
        if result is not None:
            return result
    return None


def _active_set_refine(A, b, active, b_scale, tol, max_rounds=60):
    n = A.shape[1]
    active = active.copy()
    for _ in range(max_rounds):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            x = np.zeros(n)
            y_act = np.zeros(0)
        else:
            A_S = A[idx]
            x = np.linalg.lstsq(A_S, b[idx], rcond=None)[0]
            y_act = np.linalg.lstsq(A_S.T, -2.0 * x, rcond=None)[0]
        if idx.size and y_act.min() < -1e-9 * (1.0 + float(np.abs(y_act).max())):
            active[idx[np.argmin(y_act)]] = False
            continue
        viol = A @ x - b
        j = int(np.argmax(viol)) if viol.size else 0
        if viol.size and viol[j] > 1e-11 * b_scale:
            if active[j]:
                return None  # inconsistent active set; give up on this guess
            active[j] = True
            continue
        y = np.zeros(A.shape[0])
        if idx.size:
            y[idx] = np.maximum(y_act, 0.0)
        stat = float(np.abs(2.0 * x + A.T @ y).max())
        feas = max(0.0, float(viol.max())) if viol.size else 0.0
        comp = float(np.abs(y * (b - A @ x)).max()) if viol.size else 0.0
        if stat <= tol and feas <= tol and comp <= tol:
            return x, y, (stat, feas, comp)
        return None
    return None


def kkt_residuals(qp: Qp, sol: QpSolution):
    """(stationarity, feasibility, complementarity) of an Optimal solution.

    stationarity = ||2 x + A^T y||_inf, feasibility = max(0, max row
    violation), complementarity = max_i |y_i * slack_i|.
    """
    if sol.status != OPTIMAL:
        raise ValueError(f"KKT residuals are defined for optimal solutions, got {sol.status!r}")
    if qp.num_rows == 0:
        return 0.0, 0.0, 0.0
    x, y = sol.primal, sol.dual
    slack = qp.rhs - qp.rows @ x
    stat = float(np.abs(2.0 * x + qp.rows.T @ y).max())
    feas = max(0.0, float((-slack).max()))
    comp = float(np.abs(y * slack).max())
    return stat, feas, comp


def dump_qp(qp: Qp) -> str:
    """Plain-text matrix dump for external cross-checks: one constraint row
    per line, coefficients then rhs, 17 significant digits."""
    lines = []
    for i in range(qp.num_rows):
        entries = [format(v, ".17g") for v in qp.rows[i]]
        entries.append(format(qp.rhs[i], ".17g"))
        lines.append(" ".join(entries))
    return "\n".join(lines) + ("\n" if lines else "")
