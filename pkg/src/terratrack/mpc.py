"""Nonlinear tracking MPC for the kinematic bicycle.

Direct multiple shooting with a Gauss-Newton SQP outer loop. Each subproblem
is a convex QP with the linearized dynamics as equality constraints and box
bounds on throttle, steering rate, steering angle and speed (speed is kept
non-negative); the lateral-acceleration limit enters as a quadratic soft
penalty so the subproblems stay feasible. Full mode iterates with a
step-halving line search on the rolled-out objective; RTI mode performs
exactly one iteration from the shifted warm start.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import bicycle
from .boxqp import solve_box_qp

FD_STEP = 1e-6  # forward-difference step for the dynamics Jacobians


class SolveStatus(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    DEGENERATE = "degenerate"


@dataclass
class MpcConfig:
    stages_N: int = 10
    horizon_T: float = 5.0
    state_weight_Q: tuple = (1.0, 1.0, 1.0, 0.1, 10.0)
    input_weight_R: tuple = (100.0, 10.0)
    terminal_weight_P: tuple = (10.0, 10.0, 10.0, 1.0, 100.0)
    lateral_accel_bound: float = 1.5
    steering_bound: float = 0.57
    steer_rate_bound: float = 0.05
    accel_bound: float = 1.0
    lateral_penalty_weight: float = 1e3
    sqp_max_iters: int = 25
    sqp_tol: float = 1e-6
    rti_mode: bool = False

    def __post_init__(self):
        if self.stages_N < 1:
            raise ValueError("stages_N must be >= 1")
        if self.horizon_T <= 0:
            raise ValueError("horizon_T must be > 0")
        if len(self.state_weight_Q) != 5 or len(self.terminal_weight_P) != 5:
            raise ValueError("Q and P must have 5 entries")
        if len(self.input_weight_R) != 2:
            raise ValueError("R must have 2 entries")
        if any(r <= 0 for r in self.input_weight_R):
            raise ValueError("R entries must be > 0")
        if any(q < 0 for q in self.state_weight_Q) or any(p < 0 for p in self.terminal_weight_P):
            raise ValueError("Q and P entries must be >= 0")

    @property
    def dt(self) -> float:
        return self.horizon_T / self.stages_N


@dataclass
class MpcSolution:
    states: np.ndarray       # (N+1, 5)
    controls: np.ndarray     # (N, 2)
    objective: float
    iterations: int
    kkt_residual: float
    status: SolveStatus = SolveStatus.CONVERGED


def shift_warm_start(prev: MpcSolution) -> MpcSolution:
    """Advance a solution by one stage, duplicating the final stage."""
    states = np.vstack([prev.states[1:], prev.states[-1:]])
    controls = np.vstack([prev.controls[1:], prev.controls[-1:]])
    return MpcSolution(states, controls, prev.objective, prev.iterations,
                       prev.kkt_residual, prev.status)


class MpcTracker:
    """Stateless solver core; warm starting is the caller's concern."""

    def __init__(self, config: MpcConfig | None = None,
                 wheelbase: float = bicycle.WHEELBASE_L,
                 cg_to_rear: float = bicycle.CG_TO_REAR_LR,
                 accel_scale: float = bicycle.ACCEL_SCALE):
        self.config = config or MpcConfig()
        self.wheelbase = wheelbase
        self.cg_to_rear = cg_to_rear
        self.accel_scale = accel_scale

    # -- model -------------------------------------------------------------

    def integrate(self, x, u):
        return bicycle.rk4_step(x, u, self.config.dt, self.wheelbase,
                                self.cg_to_rear, self.accel_scale)

    def rollout(self, x0: np.ndarray, controls: np.ndarray) -> np.ndarray:
        states = np.empty((len(controls) + 1, bicycle.STATE_DIM))
        states[0] = x0
        for i, u in enumerate(controls):
            states[i + 1] = self.integrate(states[i], u)
        return states

    def _clip_controls(self, controls: np.ndarray) -> np.ndarray:
        c = self.config
        out = np.array(controls, dtype=float)
        out[:, 0] = np.clip(out[:, 0], -c.accel_bound, c.accel_bound)
        out[:, 1] = np.clip(out[:, 1], -c.steer_rate_bound, c.steer_rate_bound)
        return out

    def _jacobians(self, states: np.ndarray, controls: np.ndarray):
        """Per-stage forward-difference Jacobians of the one-step map."""
        N = len(controls)
        nx, nu = bicycle.STATE_DIM, bicycle.INPUT_DIM
        npert = nx + nu + 1
        xs = np.repeat(states[:N, None, :], npert, axis=1)
        us = np.repeat(controls[:, None, :], npert, axis=1)
        for j in range(nx):
            xs[:, j, j] += FD_STEP
        for j in range(nu):
            us[:, nx + j, j] += FD_STEP
        mapped = bicycle.rk4_step(xs.reshape(-1, nx), us.reshape(-1, nu),
                                  self.config.dt, self.wheelbase, self.cg_to_rear,
                                  self.accel_scale).reshape(N, npert, nx)
        base = mapped[:, -1, :]
        A = np.transpose((mapped[:, :nx, :] - base[:, None, :]) / FD_STEP, (0, 2, 1))
        B = np.transpose((mapped[:, nx:nx + nu, :] - base[:, None, :]) / FD_STEP, (0, 2, 1))
        return A, B, base

    # -- objective ---------------------------------------------------------

    def _lateral_excess(self, x) -> float:
        a_l = float(bicycle.lateral_accel(x, self.wheelbase))
        return max(0.0, abs(a_l) - self.config.lateral_accel_bound), a_l

    def objective(self, states: np.ndarray, controls: np.ndarray,
                  rho: np.ndarray, mu: np.ndarray) -> float:
        c = self.config
        Q = np.asarray(c.state_weight_Q)
        R = np.asarray(c.input_weight_R)
        P = np.asarray(c.terminal_weight_P)
        dx = states[:-1] - rho[:-1]
        du = controls - mu
        val = float(np.sum(dx * dx * Q) + np.sum(du * du * R))
        dN = states[-1] - rho[-1]
        val += float(np.sum(dN * dN * P))
        for i in range(1, len(states)):
            h, _ = self._lateral_excess(states[i])
            val += c.lateral_penalty_weight * h * h
        return val

    # -- QP assembly -------------------------------------------------------

    def _build_qp(self, states, controls, rho, mu):
        c = self.config
        N = c.stages_N
        nx, nu = bicycle.STATE_DIM, bicycle.INPUT_DIM
        nz = N * nx + N * nu
        H = np.zeros((nz, nz))
        g = np.zeros(nz)
        lb = np.full(nz, -np.inf)
        ub = np.full(nz, np.inf)

        Q = np.asarray(c.state_weight_Q)
        R = np.asarray(c.input_weight_R)
        P = np.asarray(c.terminal_weight_P)

        def xblk(i):  # state block for x_i, i in 1..N
            return slice((i - 1) * nx, i * nx)

        def ublk(i):  # control block for u_i, i in 0..N-1
            return slice(N * nx + i * nu, N * nx + (i + 1) * nu)

        for i in range(1, N + 1):
            w = P if i == N else Q
            s = xblk(i)
            H[s, s] += 2.0 * np.diag(w)
            g[s.start:s.stop] += 2.0 * w * (states[i] - rho[i])
            # soft lateral-acceleration penalty (Gauss-Newton)
            h, a_l = self._lateral_excess(states[i])
            if h > 0.0:
                grad = np.sign(a_l) * bicycle.lateral_accel_gradient(states[i], self.wheelbase)
                H[s, s] += 2.0 * c.lateral_penalty_weight * np.outer(grad, grad)
                g[s.start:s.stop] += 2.0 * c.lateral_penalty_weight * h * grad
            # state box bounds relative to the linearization point
            lb[s.start + 3] = -c.steering_bound - states[i, 3]
            ub[s.start + 3] = c.steering_bound - states[i, 3]
            lb[s.start + 4] = -states[i, 4]

        for i in range(N):
            s = ublk(i)
            H[s, s] += 2.0 * np.diag(R)
            g[s.start:s.stop] += 2.0 * R * (controls[i] - mu[i])
            lb[s.start] = -c.accel_bound - controls[i, 0]
            ub[s.start] = c.accel_bound - controls[i, 0]
            lb[s.start + 1] = -c.steer_rate_bound - controls[i, 1]
            ub[s.start + 1] = c.steer_rate_bound - controls[i, 1]

        A_j, B_j, mapped = self._jacobians(states, controls)
        Aeq = np.zeros((N * nx, nz))
        beq = np.zeros(N * nx)
        for i in range(N):
            rows = slice(i * nx, (i + 1) * nx)
            Aeq[rows, xblk(i + 1)] = np.eye(nx)
            if i > 0:
                Aeq[rows, xblk(i)] = -A_j[i]
            Aeq[rows, ublk(i)] = -B_j[i]
            beq[rows.start:rows.stop] = mapped[i] - states[i + 1]
        return H, g, Aeq, beq, lb, ub

    # -- solve -------------------------------------------------------------

    def solve(self, x0, refs, warm_start: MpcSolution | None = None) -> MpcSolution:
        """Minimize the tracking objective over the horizon from state x0.

        `refs` is the (rho, mu) pair from reference generation. Always
        returns a solution whose first control satisfies the box bounds.
        """
        c = self.config
        rho, mu = refs
        rho = np.asarray(rho, dtype=float)
        mu = np.asarray(mu, dtype=float)
        if rho.shape != (c.stages_N + 1, 5) or mu.shape != (c.stages_N, 2):
            raise ValueError("reference length does not match the horizon")
        x0 = np.asarray(x0, dtype=float)

        if warm_start is not None:
            u = self._clip_controls(warm_start.controls)
        else:
            u = np.zeros((c.stages_N, 2))
        x = self.rollout(x0, u)
        obj = self.objective(x, u, rho, mu)
        if not np.isfinite(obj):
            return MpcSolution(x, u, obj, 0, np.inf, SolveStatus.DEGENERATE)

        status = SolveStatus.MAX_ITERS
        kkt = np.inf
        iters = 0
        max_iters = 1 if c.rti_mode else c.sqp_max_iters
        for _ in range(max_iters):
            try:
                H, g, Aeq, beq, lb, ub = self._build_qp(x, u, rho, mu)
                qp = solve_box_qp(H, g, Aeq, beq, lb, ub)
            except (ValueError, np.linalg.LinAlgError):
                return MpcSolution(x, u, obj, iters, kkt, SolveStatus.DEGENERATE)
            if not np.all(np.isfinite(qp.z)):
                return MpcSolution(x, u, obj, iters, kkt, SolveStatus.DEGENERATE)
            kkt = qp.kkt_residual
            du = qp.z[c.stages_N * 5:].reshape(c.stages_N, 2)
            iters += 1

            if c.rti_mode:
                u = self._clip_controls(u + du)
                x = self.rollout(x0, u)
                obj = self.objective(x, u, rho, mu)
                if not np.isfinite(obj):
                    return MpcSolution(x, u, obj, iters, kkt, SolveStatus.DEGENERATE)
                status = SolveStatus.CONVERGED
                break

            alpha = 1.0
            accepted = False
            for _ in range(12):
                u_try = self._clip_controls(u + alpha * du)
                x_try = self.rollout(x0, u_try)
                obj_try = self.objective(x_try, u_try, rho, mu)
                if np.isfinite(obj_try) and obj_try <= obj + 1e-12:
                    accepted = True
                    break
                alpha *= 0.5
            if not accepted:
                status = SolveStatus.CONVERGED  # no descent left at this point
                break
            step = float(np.max(np.abs(u_try - u)))
            u, x, obj = u_try, x_try, obj_try
            if step < c.sqp_tol:
                status = SolveStatus.CONVERGED
                break
        return MpcSolution(x, u, obj, iters, kkt, status)

    # -- diagnostics ---------------------------------------------------------

    def condensed_gradient(self, x0, controls, rho, mu) -> np.ndarray:
        """Gradient of the rolled-out objective with respect to the flattened
        control sequence, assembled from the per-stage Jacobian chain."""
        c = self.config
        N = c.stages_N
        nx, nu = bicycle.STATE_DIM, bicycle.INPUT_DIM
        states = self.rollout(np.asarray(x0, dtype=float), controls)
        A_j, B_j, _ = self._jacobians(states, controls)
        Q = np.asarray(c.state_weight_Q)
        R = np.asarray(c.input_weight_R)
        P = np.asarray(c.terminal_weight_P)

        def dcost_dx(i):
            w = P if i == N else Q
            grad = 2.0 * w * (states[i] - rho[i])
            if i >= 1:
                h, a_l = self._lateral_excess(states[i])
                if h > 0.0:
                    grad = grad + (2.0 * c.lateral_penalty_weight * h * np.sign(a_l)
                                   * bicycle.lateral_accel_gradient(states[i], self.wheelbase))
            return grad

        grad_u = (2.0 * R * (controls - mu)).reshape(-1)
        S = np.zeros((nx, N * nu))  # sensitivity of x_i w.r.t. all controls
        for i in range(N):
            S = A_j[i] @ S
            S[:, i * nu:(i + 1) * nu] += B_j[i]
            grad_u += dcost_dx(i + 1) @ S
        return grad_u
