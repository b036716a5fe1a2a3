"""Halfspace-representation polytopes and worst-case disturbance support.

A polytope is the set {y : H y <= h}. Sets may be unbounded (pure halfspace
targets are allowed); no boundedness check is performed.
"""

from __future__ import annotations

import numpy as np

# Absolute tolerance on each row residual for membership tests.
MEMBERSHIP_TOL = 1e-9


class Polytope:
    """Named polytope {y : H y <= h} with H of shape (q, n) and h of shape (q,).

    Instances are immutable: the underlying arrays are copied and marked
    read-only, so a Polytope can be shared freely between workers.
    """

    def __init__(self, name: str, H, h):
        H = np.atleast_2d(np.asarray(H, dtype=float))
        h = np.asarray(h, dtype=float).reshape(-1)
        if H.shape[0] != h.shape[0]:
            raise ValueError(
                f"polytope {name!r}: H has {H.shape[0]} rows but h has {h.shape[0]} entries"
            )
        if H.shape[0] < 1:
            raise ValueError(f"polytope {name!r}: needs at least one halfspace row")
        if not (np.isfinite(H).all() and np.isfinite(h).all()):
            raise ValueError(f"polytope {name!r}: H and h must be finite")
        row_norms = np.abs(H).sum(axis=1)
        if np.any(row_norms == 0.0):
            bad = int(np.flatnonzero(row_norms == 0.0)[0])
            raise ValueError(f"polytope {name!r}: row {bad} of H is all-zero")
        H = H.copy()
        h = h.copy()
        H.flags.writeable = False
        h.flags.writeable = False
        self.name = name
        self.H = H
        self.h = h

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    @property
    def num_rows(self) -> int:
        return self.H.shape[0]

    def contains(self, x, tol: float = MEMBERSHIP_TOL) -> bool:
        """True iff H x <= h holds row-wise within an absolute tolerance."""
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.dim:
            raise ValueError(
                f"polytope {self.name!r} lives in R^{self.dim}, got point of dim {x.shape[0]}"
            )
        return bool(np.all(self.H @ x <= self.h + tol))

    def __repr__(self):
        return f"Polytope({self.name!r}, rows={self.num_rows}, dim={self.dim})"


def contains(p: Polytope, x, tol: float = MEMBERSHIP_TOL) -> bool:
    return p.contains(x, tol=tol)


def lift_polytope(p: Polytope, N: int) -> Polytope:
    """Polytope in R^{N*n} whose membership means every time block lies in p.

    Constraint rows are grouped by time step, matching the stacked-state
    ordering [x_1; ...; x_N]: block k of the result constrains block k of
    the stacked vector.
    """
    if N < 1:
        raise ValueError(f"lift horizon must be >= 1, got {N}")
    H = np.kron(np.eye(N), np.asarray(p.H))
    h = np.tile(np.asarray(p.h), N)
    return Polytope(f"{p.name}*{N}", H, h)


def row_support(M, wbar: float) -> np.ndarray:
    """Row-wise worst case of M w over all w with ||w||_inf <= wbar.

    Returns t with t_i = wbar * sum_j |M_ij|, the exact maximum of (M w)_i;
    it is attained by w = wbar * sign(row i of M).
    """
    if wbar < 0:
        raise ValueError(f"disturbance bound must be nonnegative, got {wbar}")
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return wbar * np.abs(M).sum(axis=1)
