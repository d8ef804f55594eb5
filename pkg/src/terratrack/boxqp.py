"""Convex QP solver for box bounds plus linear equality constraints.

    minimize   0.5 z'Hz + g'z
    subject to A z = b,   lb <= z <= ub

H must be symmetric positive definite and A full row rank (the multiple
shooting subproblems built by the tracker satisfy both). The method is a
primal-dual active set iteration: variables pinned at a bound are eliminated,
the remaining KKT system is solved directly, and the sets are updated from
primal violations and multiplier signs until they stabilize. A cycling guard
switches to single-index updates if a set signature repeats.
"""

from __future__ import annotations

import numpy as np
from dataclasses import dataclass

FREE, LOWER, UPPER = 0, 1, 2


@dataclass
class QpResult:
    z: np.ndarray
    lam: np.ndarray          # equality multipliers
    mu: np.ndarray           # bound multipliers (>=0 at active bounds)
    kkt_residual: float
    iterations: int
    converged: bool


def _kkt_residual(H, g, A, b, lb, ub, z, lam, mu_l, mu_u) -> float:
    stat = H @ z + g - mu_l + mu_u
    if A is not None and A.shape[0] > 0:
        stat = stat + A.T @ lam
        primal_eq = float(np.max(np.abs(A @ z - b)))
    else:
        primal_eq = 0.0
    bound_viol = float(max(np.max(np.maximum(lb - z, 0.0), initial=0.0),
                           np.max(np.maximum(z - ub, 0.0), initial=0.0)))
    fin_l = np.isfinite(lb)
    fin_u = np.isfinite(ub)
    comp = 0.0
    if np.any(fin_l):
        comp = float(np.max(np.abs(mu_l[fin_l] * (z[fin_l] - lb[fin_l]))))
    if np.any(fin_u):
        comp = max(comp, float(np.max(np.abs(mu_u[fin_u] * (ub[fin_u] - z[fin_u])))))
    return max(float(np.max(np.abs(stat))), primal_eq, bound_viol, comp)


def solve_box_qp(H: np.ndarray, g: np.ndarray, A: np.ndarray | None = None,
                 b: np.ndarray | None = None, lb: np.ndarray | None = None,
                 ub: np.ndarray | None = None, tol: float = 1e-8,
                 max_iter: int = 100) -> QpResult:
    n = len(g)
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    if A is None or A.size == 0:
        A = np.zeros((0, n))
        b = np.zeros(0)
    else:
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
    m = A.shape[0]
    lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
    if np.any(lb > ub):
        raise ValueError("infeasible box: lb > ub")

    status = np.full(n, FREE, dtype=np.int8)
    # equal bounds are permanently pinned
    pinned = lb == ub
    status[pinned] = LOWER

    seen: set[bytes] = set()
    single_update = False
    z = np.clip(np.zeros(n), lb, ub)
    lam = np.zeros(m)
    mu_l = np.zeros(n)
    mu_u = np.zeros(n)
    best = None

    for it in range(1, max_iter + 1):
        active = status != FREE
        zc = np.where(status == LOWER, lb, np.where(status == UPPER, ub, 0.0))
        free = ~active
        nf = int(np.sum(free))

        # KKT solve on the free block with actives substituted
        Hff = H[np.ix_(free, free)]
        Af = A[:, free]
        rhs_top = -g[free] - H[np.ix_(free, active)] @ zc[active]
        rhs_bot = b - A[:, active] @ zc[active]
        K = np.zeros((nf + m, nf + m))
        K[:nf, :nf] = Hff
        K[:nf, nf:] = Af.T
        K[nf:, :nf] = Af
        rhs = np.concatenate([rhs_top, rhs_bot])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            # regularize the dual block and retry once
            K[nf:, nf:] -= 1e-10 * np.eye(m)
            try:
                sol = np.linalg.solve(K, rhs)
            except np.linalg.LinAlgError:
                break
        z = zc.copy()
        z[free] = sol[:nf]
        lam = sol[nf:]

        # bound multipliers from stationarity on the active set
        resid = H @ z + g + (A.T @ lam if m else 0.0)
        mu_l = np.zeros(n)
        mu_u = np.zeros(n)
        at_l = status == LOWER
        at_u = status == UPPER
        mu_l[at_l] = resid[at_l]
        mu_u[at_u] = -resid[at_u]

        kkt = _kkt_residual(H, g, A, b, lb, ub, z, lam, mu_l, mu_u)
        if best is None or kkt < best.kkt_residual:
            best = QpResult(z.copy(), lam.copy(), (mu_l + mu_u).copy(), kkt, it, kkt <= tol)
        if kkt <= tol:
            return QpResult(z, lam, mu_l + mu_u, kkt, it, True)

        viol_l = free & (z < lb - 1e-12)
        viol_u = free & (z > ub + 1e-12)
        rel_l = at_l & ~pinned & (mu_l < -1e-12)
        rel_u = at_u & (mu_u < -1e-12)
        changes = viol_l | viol_u | rel_l | rel_u
        if not np.any(changes):
            # numerically stalled at this set; return the stationary point
            return QpResult(z, lam, mu_l + mu_u, kkt, it, kkt <= tol)

        if single_update:
            # most-violating single index only
            scores = np.zeros(n)
            scores[viol_l] = lb[viol_l] - z[viol_l]
            scores[viol_u] = z[viol_u] - ub[viol_u]
            scores[rel_l] = -mu_l[rel_l]
            scores[rel_u] = -mu_u[rel_u]
            i = int(np.argmax(scores))
            mask = np.zeros(n, dtype=bool)
            mask[i] = True
            viol_l &= mask
            viol_u &= mask
            rel_l &= mask
            rel_u &= mask

        status[viol_l] = LOWER
        status[viol_u] = UPPER
        status[rel_l] = FREE
        status[rel_u] = FREE

        sig = status.tobytes()
        if sig in seen:
            single_update = True
        seen.add(sig)

    return best if best is not None else QpResult(
        z, lam, mu_l + mu_u, np.inf, max_iter, False)
