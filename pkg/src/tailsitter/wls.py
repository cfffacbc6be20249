"""Bounded weighted least-squares control allocation.

Minimises::

    C(u) = ||W_u (u - u_p)||^2 + gamma ||W_v (G u - nu)||^2,  lower <= u <= upper

with a primal active-set method on the stacked least-squares form
``|| A u - b ||`` where ``A = [sqrt(gamma) W_v G; W_u]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

DEFAULT_GAMMA = 1.0e4
ATTITUDE_WV = (10.0, 10.0, 0.1, 1.0)


class IterationLimit(RuntimeError):
    """Active set did not converge; ``u`` holds the best feasible iterate."""

    def __init__(self, u, iterations):
        super().__init__(f"active-set allocation hit the iteration limit ({iterations})")
        self.u = u
        self.iterations = iterations


@dataclass
class AllocationProblem:
    G: np.ndarray
    nu: np.ndarray
    u0: np.ndarray
    u_pref: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    W_u: np.ndarray
    W_v: np.ndarray
    gamma: float = DEFAULT_GAMMA
    max_iter: int | None = None

    def __post_init__(self):
        self.G = np.atleast_2d(np.asarray(self.G, dtype=np.float64))
        n_v, n_u = self.G.shape
        for name, n in (("nu", n_v), ("W_v", n_v), ("u0", n_u), ("u_pref", n_u),
                        ("lower", n_u), ("upper", n_u), ("W_u", n_u)):
            arr = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if arr.shape != (n,):
                raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")
            setattr(self, name, arr)
        if np.any(self.W_u < 0) or np.any(self.W_v < 0):
            raise ValueError("weights must be non-negative")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")


@dataclass
class AllocationResult:
    u: np.ndarray
    iterations: int
    converged: bool
    cost: float = field(default=float("nan"))


def allocation_cost(problem: AllocationProblem, u) -> float:
    u = np.asarray(u, dtype=np.float64)
    r_u = problem.W_u * (u - problem.u_pref)
    r_v = problem.W_v * (problem.G @ u - problem.nu)
    return float(r_u @ r_u + problem.gamma * (r_v @ r_v))


@njit(cache=True)
def _householder_lstsq(A, d, cols, n_cols):
    """Least-squares solve of A[:, cols[:n_cols]] p = d by Householder QR."""
    m = A.shape[0]
    n = n_cols
    M = np.empty((m, n))
    for j in range(n):
        for i in range(m):
            M[i, j] = A[i, cols[j]]
    y = d.copy()
    for k in range(n):
        norm = 0.0
        for i in range(k, m):
            norm += M[i, k] * M[i, k]
        norm = math.sqrt(norm)
        if norm == 0.0:
            continue
        alpha = -norm if M[k, k] >= 0.0 else norm
        v0 = M[k, k] - alpha
        # reflector v = [v0, M[k+1:, k]]
        vnorm2 = v0 * v0
        for i in range(k + 1, m):
            vnorm2 += M[i, k] * M[i, k]
        if vnorm2 == 0.0:
            continue
        for j in range(k + 1, n):
            s = v0 * M[k, j]
            for i in range(k + 1, m):
                s += M[i, k] * M[i, j]
            s = 2.0 * s / vnorm2
            M[k, j] -= s * v0
            for i in range(k + 1, m):
                M[i, j] -= s * M[i, k]
        s = v0 * y[k]
        for i in range(k + 1, m):
            s += M[i, k] * y[i]
        s = 2.0 * s / vnorm2
        y[k] -= s * v0
        for i in range(k + 1, m):
            y[i] -= s * M[i, k]
        M[k, k] = alpha
    p = np.zeros(n)
    for k in range(n - 1, -1, -1):
        s = y[k]
        for j in range(k + 1, n):
            s -= M[k, j] * p[j]
        if M[k, k] != 0.0:
            p[k] = s / M[k, k]
    return p


@njit(cache=True)
def _active_set(A, b, lower, upper, u_init, max_iter, warm):
    n_u = A.shape[1]
    u = u_init.copy()
    # working set: 0 free, -1 at lower, +1 at upper
    W = np.zeros(n_u, dtype=np.int64)
    if warm:
        # start from the clipped unconstrained optimum
        allc = np.arange(n_u)
        u = u + _householder_lstsq(A, b - A @ u, allc, n_u)
        for i in range(n_u):
            if u[i] <= lower[i]:
                u[i] = lower[i]
                W[i] = -1
            elif u[i] >= upper[i]:
                u[i] = upper[i]
                W[i] = 1
    for i in range(n_u):
        if lower[i] == upper[i]:
            W[i] = -1
            u[i] = lower[i]
    cols = np.empty(n_u, dtype=np.int64)
    tol = 1e-12
    for it in range(1, max_iter + 1):
        n_free = 0
        for i in range(n_u):
            if W[i] == 0:
                cols[n_free] = i
                n_free += 1
        d = b - A @ u
        p = np.zeros(n_u)
        if n_free > 0:
            pf = _householder_lstsq(A, d, cols, n_free)
            for k in range(n_free):
                p[cols[k]] = pf[k]
        u_opt = u + p
        feasible = True
        for i in range(n_u):
            if u_opt[i] > upper[i] or u_opt[i] < lower[i]:
                feasible = False
                break
        if feasible:
            u = u_opt
            # multipliers of the active bounds; positive means the bound pushes inward
            grad = A.T @ (A @ u - b)
            worst = 0.0
            i_worst = -1
            for i in range(n_u):
                if W[i] != 0 and lower[i] != upper[i]:
                    lam = W[i] * (-grad[i])
                    if lam < worst - tol * (1.0 + abs(grad[i])):
                        worst = lam
                        i_worst = i
            if i_worst < 0:
                return u, it, True
            W[i_worst] = 0
        else:
            # step to the first blocking bound; ties go to the largest overshoot
            alpha = 1.0
            i_block = -1
            over_block = 0.0
            for i in range(n_u):
                if W[i] != 0 or p[i] == 0.0:
                    continue
                if p[i] > 0.0:
                    a = (upper[i] - u[i]) / p[i]
                    over = u_opt[i] - upper[i]
                else:
                    a = (lower[i] - u[i]) / p[i]
                    over = lower[i] - u_opt[i]
                if a < 0.0:
                    a = 0.0
                if a < alpha or (a == alpha and over > over_block):
                    alpha = a
                    i_block = i
                    over_block = over
            u = u + alpha * p
            if i_block >= 0:
                if p[i_block] > 0.0:
                    W[i_block] = 1
                    u[i_block] = upper[i_block]
                else:
                    W[i_block] = -1
                    u[i_block] = lower[i_block]
        for i in range(n_u):
            if u[i] < lower[i]:
                u[i] = lower[i]
            elif u[i] > upper[i]:
                u[i] = upper[i]
    return u, max_iter, False


def stacked_system(problem: AllocationProblem) -> tuple[np.ndarray, np.ndarray]:
    sg = math.sqrt(problem.gamma)
    A = np.vstack([sg * problem.W_v[:, None] * problem.G, np.diag(problem.W_u)])
    b = np.concatenate([sg * problem.W_v * problem.nu, problem.W_u * problem.u_pref])
    return A, b


def solve_wls(problem: AllocationProblem, strict: bool = False) -> AllocationResult:
    """Bounded WLS allocation. Output always lies inside the bounds.

    When the active set does not converge within ``max_iter`` iterations
    (default three times the actuator count) the last feasible iterate is returned
    with ``converged=False``; with ``strict=True`` :class:`IterationLimit` is
    raised instead.
    """
    A, b = stacked_system(problem)
    n_u = problem.G.shape[1]
    max_iter = problem.max_iter or 3 * n_u
    u_init = np.clip(problem.u_pref, problem.lower, problem.upper)
    u, iters, ok = solve_stacked(A, b, problem.lower, problem.upper, u_init, max_iter)
    if strict and not ok:
        raise IterationLimit(u, iters)
    return AllocationResult(u, iters, ok, allocation_cost(problem, u))


def solve_stacked(A, b, lower, upper, u_init, max_iter, warm=True):
    """Compiled entry point used by the control loops (no validation)."""
    return _active_set(A, b, lower, upper, u_init, int(max_iter), warm)
