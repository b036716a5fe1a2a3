"""Discrete-time LTI dynamics x_{t+1} = A x_t + B_u u_t + B_w w_t.

Provides trajectory simulation and horizon-lifted prediction matrices: the
stacked free response [A; A^2; ...; A^N] and the lower block-triangular input
and disturbance maps G_u, G_w such that

    [x_1; ...; x_N] = free_response @ x0 + G_u @ u + G_w @ w

for stacked u = [u_0; ...; u_{N-1}] and w = [w_0; ...; w_{N-1}].
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .polytope import Polytope

# Relative singular-value threshold for the controllability rank test.
CTRB_RANK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class HorizonLift:
    """Prediction matrices over a fixed horizon N.

    free_response has shape (N*n, n); Gu is (N*n, N*m) and Gw is (N*n, N*p),
    both lower block-triangular with block row t-1 equal to
    [A^{t-1} B, ..., A B, B, 0, ..., 0].
    """

    N: int
    free_response: np.ndarray
    Gu: np.ndarray
    Gw: np.ndarray

    def state_block_rows(self, t: int, n: int):
        """Row slice of the stacked matrices corresponding to state x_t (t >= 1)."""
        if not 1 <= t <= self.N:
            raise ValueError(f"time index {t} outside lift horizon [1, {self.N}]")
        return slice((t - 1) * n, t * n)


class LtiSystem:
    """LTI system with input polytope and an inf-norm disturbance bound.

    A is (n, n), B_u is (n, m), B_w is (n, p). input_set constrains u_t
    (None means unconstrained input); wbar bounds ||w_t||_inf. Instances are
    immutable; horizon lifts are cached per N behind a lock.
    """

    def __init__(self, A, B_u, B_w, input_set: Polytope | None = None, wbar: float = 0.0):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B_u = np.atleast_2d(np.asarray(B_u, dtype=float))
        B_w = np.atleast_2d(np.asarray(B_w, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got shape {A.shape}")
        if B_u.shape[0] != n:
            raise ValueError(f"B_u must have {n} rows, got {B_u.shape[0]}")
        if B_w.shape[0] != n:
            raise ValueError(f"B_w must have {n} rows, got {B_w.shape[0]}")
        if input_set is not None and input_set.dim != B_u.shape[1]:
            raise ValueError(
                f"input set lives in R^{input_set.dim} but B_u has {B_u.shape[1]} columns"
            )
        if wbar < 0:
            raise ValueError(f"wbar must be nonnegative, got {wbar}")
        for M in (A, B_u, B_w):
            M.flags.writeable = False
        self.A = A
        self.B_u = B_u
        self.B_w = B_w
        self.input_set = input_set
        self.wbar = float(wbar)
        self._lift_cache: dict[int, HorizonLift] = {}
        self._lift_lock = threading.Lock()

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B_u.shape[1]

    @property
    def p(self) -> int:
        return self.B_w.shape[1]

    def lift(self, N: int) -> HorizonLift:
        """Cached horizon lift for this system (see build_lift)."""
        with self._lift_lock:
            hit = self._lift_cache.get(N)
            if hit is None:
                hit = build_lift(self, N)
                self._lift_cache[N] = hit
            return hit

    # the lift cache and its lock stay process-local
    def __getstate__(self):
        return (self.A, self.B_u, self.B_w, self.input_set, self.wbar)

    def __setstate__(self, state):
        self.__init__(*state)

    def __repr__(self):
        return f"LtiSystem(n={self.n}, m={self.m}, p={self.p}, wbar={self.wbar})"


def build_lift(sys: LtiSystem, N: int) -> HorizonLift:
    """Construct the horizon-N prediction matrices by iterated multiplication.

    Powers of A are accumulated directly (no eigendecomposition); horizons of
    interest are short, so exactness wins over asymptotics.
    """
    if N < 1:
        raise ValueError(f"horizon must be >= 1, got {N}")
    n, m, p = sys.n, sys.m, sys.p
    powers = [np.eye(n)]
    for _ in range(N):
        powers.append(sys.A @ powers[-1])
    free = np.vstack(powers[1:])
    Gu = np.zeros((N * n, N * m))
    Gw = np.zeros((N * n, N * p))
    for t in range(1, N + 1):
        rows = slice((t - 1) * n, t * n)
        for j in range(t):
            Gu[rows, j * m : (j + 1) * m] = powers[t - 1 - j] @ sys.B_u
            Gw[rows, j * p : (j + 1) * p] = powers[t - 1 - j] @ sys.B_w
    for M in (free, Gu, Gw):
        M.flags.writeable = False
    return HorizonLift(N=N, free_response=free, Gu=Gu, Gw=Gw)


def simulate(sys: LtiSystem, x0, u_seq, w_seq=None) -> np.ndarray:
    """Roll the dynamics forward; returns states stacked as rows (x_0 ... x_T).

    u_seq and w_seq are sequences of per-step vectors with equal length T;
    w_seq defaults to zeros (nominal dynamics).
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != sys.n:
        raise ValueError(f"x0 has dim {x0.shape[0]}, expected {sys.n}")
    u_seq = np.atleast_2d(np.asarray(u_seq, dtype=float)) if len(u_seq) else np.zeros((0, sys.m))
    T = u_seq.shape[0]
    if w_seq is None:
        w_seq = np.zeros((T, sys.p))
    else:
        w_seq = np.atleast_2d(np.asarray(w_seq, dtype=float)) if len(w_seq) else np.zeros((0, sys.p))
    if w_seq.shape[0] != T:
        raise ValueError(f"u_seq has {T} steps but w_seq has {w_seq.shape[0]}")
    if T and u_seq.shape[1] != sys.m:
        raise ValueError(f"inputs have dim {u_seq.shape[1]}, expected {sys.m}")
    if T and w_seq.shape[1] != sys.p:
        raise ValueError(f"disturbances have dim {w_seq.shape[1]}, expected {sys.p}")
    traj = np.empty((T + 1, sys.n))
    traj[0] = x0
    for t in range(T):
        traj[t + 1] = sys.A @ traj[t] + sys.B_u @ u_seq[t] + sys.B_w @ w_seq[t]
    return traj


def check_controllable(sys: LtiSystem) -> bool:
    """Rank test on [B_u, A B_u, ..., A^{n-1} B_u] with a relative SV threshold.

    Failure is a modeling warning, not an error: the downstream programs stay
    well-posed (possibly infeasible) without controllability.
    """
    blocks = [sys.B_u]
    for _ in range(sys.n - 1):
        blocks.append(sys.A @ blocks[-1])
    C = np.hstack(blocks)
    s = np.linalg.svd(C, compute_uv=False)  # exactly n values since C is n x (n*m)
    if s[0] == 0.0:
        return False
    return bool(s[sys.n - 1] > CTRB_RANK_TOL * s[0])
