"""Additive compensation ensemble: MPC throttle plus a learned correction.

The MPC solves its tracking problem with no knowledge of the agent; the agent
observes speeds plus three ten-step histories (its own actions, the MPC's
throttle, the speed error) and emits a throttle correction. The saturated sum
drives the plant under a zero-order hold; MPC steering passes through
untouched. Also hosts the standalone-learned-controller loop, whose steering
comes from a proportional law on the path error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import terrain
from .mpc import MpcConfig, MpcSolution, MpcTracker, SolveStatus, shift_warm_start
from .path import ReferencePath, generate_references
from .ppo import ACTION_HISTORY, PpoConfig, build_observation_ac, reward_r1
from .terrain import ControlInput, Plant, VehicleState

OBS_DIM_AC2 = 32
CONTROL_SUBSTEPS = 33  # simulation steps per control period
EPISODE_STEPS = 300

COMP_W21 = 1.0
COMP_W22 = 0.05
COMP_W23 = 1.0
V_THRESHOLD = 1.0  # m/s, below which positive compensation is penalized


@dataclass
class CompensatorConfig:
    w21: float = COMP_W21
    w22: float = COMP_W22
    w23: float = COMP_W23
    v_threshold: float = V_THRESHOLD
    ppo: PpoConfig = field(default_factory=PpoConfig)
    mpc: MpcConfig = field(default_factory=lambda: MpcConfig(rti_mode=True))

    def __post_init__(self):
        if min(self.w21, self.w22, self.w23) < 0:
            raise ValueError("reward weights must be >= 0")
        if self.v_threshold < 0:
            raise ValueError("v_threshold must be >= 0")


def build_observation_ac2(v: float, v_ref: float, agent_history, mpc_history,
                          err_history) -> np.ndarray:
    """[v, v_ref, agent actions (10), MPC throttle (10), speed errors (10)]."""
    parts = []
    for name, h in (("agent", agent_history), ("mpc", mpc_history), ("err", err_history)):
        h = np.asarray(h, dtype=float)
        if h.shape != (ACTION_HISTORY,):
            raise ValueError(f"{name} history must hold {ACTION_HISTORY} entries")
        parts.append(h)
    return np.concatenate(([v, v_ref], *parts))


def reward_r2(v_err: float, agent_history, a_rl: float, v: float,
              w21: float = COMP_W21, w22: float = COMP_W22, w23: float = COMP_W23,
              v_threshold: float = V_THRESHOLD, sigma_normalizer: float = 1.0) -> float:
    """Tracking reward penalizing agent-action spread and low-speed compensation."""
    spread = float(np.std(np.asarray(agent_history, dtype=float)))
    r = w21 / (1.0 + abs(v_err)) - w22 * spread / sigma_normalizer
    if a_rl > 0.0 and v < v_threshold:
        r -= w23
    return r


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def steering_p_control(state: VehicleState, path: ReferencePath,
                       p_gain: float = 0.5, lookahead: float = 5.0) -> float:
    """Proportional steering-rate command from heading plus cross-track error."""
    _, cross, heading_ref = path.cross_track_error((state.s_x, state.s_y))
    err = _wrap_angle(state.heading_phi - heading_ref) + math.atan(cross / lookahead)
    return float(np.clip(-p_gain * err, -terrain.STEER_RATE_BOUND,
                         terrain.STEER_RATE_BOUND))


def ac_standalone_control(state: VehicleState, path: ReferencePath, policy,
                          action_history, p_gain: float = 0.5) -> ControlInput:
    """Throttle from the learned policy, steering from the proportional law."""
    s, _ = path.project((state.s_x, state.s_y))
    obs = build_observation_ac(state.speed_v, path.v_ref_at(s), action_history)
    throttle = policy.deterministic(obs)
    return ControlInput.saturated(throttle, steering_p_control(state, path, p_gain))


class Ensemble:
    """One closed-loop instance: plant, path, warm-started MPC, histories."""

    def __init__(self, plant: Plant, path: ReferencePath,
                 mpc_config: MpcConfig | None = None,
                 substeps: int = CONTROL_SUBSTEPS):
        self.plant = plant
        self.path = path
        self.config = mpc_config or MpcConfig(rti_mode=True)
        self.tracker = MpcTracker(self.config,
                                  wheelbase=plant.vehicle.wheelbase_L,
                                  cg_to_rear=plant.vehicle.cg_to_rear_Lr,
                                  accel_scale=plant.vehicle.max_accel_scale)
        self.substeps = substeps
        self.reset()

    def reset(self) -> None:
        self.agent_history = np.zeros(ACTION_HISTORY)
        self.mpc_history = np.zeros(ACTION_HISTORY)
        self.err_history = np.zeros(ACTION_HISTORY)
        self.warm: MpcSolution | None = None
        self.steps = 0

    def v_ref(self, state: VehicleState) -> float:
        s, _ = self.path.project((state.s_x, state.s_y))
        return self.path.v_ref_at(s)

    def observe(self, state: VehicleState) -> np.ndarray:
        return build_observation_ac2(state.speed_v, self.v_ref(state),
                                     self.agent_history, self.mpc_history,
                                     self.err_history)

    def solve_mpc(self, state: VehicleState) -> MpcSolution:
        """MPC solve for the current state; agent-blind by construction."""
        refs = generate_references(self.path, (state.s_x, state.s_y),
                                   self.config.stages_N, self.config.dt)
        warm = shift_warm_start(self.warm) if self.warm is not None else None
        x0 = np.array([state.s_x, state.s_y, state.heading_phi,
                       state.steering_theta, state.speed_v])
        sol = self.tracker.solve(x0, refs, warm)
        self.warm = sol
        return sol

    def step_with_action(self, state: VehicleState, u_rl: float):
        """Advance one control period with the given compensation throttle."""
        v_ref_pre = self.v_ref(state)
        sol = self.solve_mpc(state)
        degenerate = sol.status is SolveStatus.DEGENERATE
        if degenerate:
            u_mpc_a, omega = 0.0, 0.0
        else:
            u_mpc_a = float(sol.controls[0, 0])
            omega = float(sol.controls[0, 1])
        throttle = float(np.clip(u_mpc_a + u_rl, -1.0, 1.0))
        inp = ControlInput.saturated(throttle, omega)
        info = {
            "time": state.sim_time, "s_x": state.s_x, "s_y": state.s_y,
            "v": state.speed_v, "v_ref": v_ref_pre,
            "u_mpc": u_mpc_a, "u_rl": float(u_rl), "u_applied": inp.throttle_a,
            "omega": inp.steer_rate_omega, "degenerate": degenerate,
        }
        new_state = self.plant.run_zoh(state, inp, self.substeps)
        self.agent_history = np.concatenate(([u_rl], self.agent_history[:-1]))
        self.mpc_history = np.concatenate(([u_mpc_a], self.mpc_history[:-1]))
        self.err_history = np.concatenate(([state.speed_v - v_ref_pre],
                                           self.err_history[:-1]))
        self.steps += 1
        return new_state, info

    def step_policy(self, state: VehicleState, policy=None,
                    rng: np.random.Generator | None = None):
        """One ensemble control step; policy None means no compensation."""
        if policy is None:
            u_rl = 0.0
        elif rng is None:
            u_rl = policy.deterministic(self.observe(state))
        else:
            u_rl, _, _ = policy.sample(self.observe(state), rng)
        return self.step_with_action(state, u_rl)


class CompensatedTrackingEnv:
    """PPO environment around the ensemble: action is the compensation throttle."""

    def __init__(self, plant: Plant, path: ReferencePath,
                 config: CompensatorConfig | None = None,
                 episode_steps: int = EPISODE_STEPS,
                 substeps: int = CONTROL_SUBSTEPS):
        self.config = config or CompensatorConfig()
        self.ensemble = Ensemble(plant, path, self.config.mpc, substeps)
        self.episode_steps = episode_steps
        self.reset(0)

    def reset(self, seed: int = 0) -> np.ndarray:
        self.ensemble.reset()
        self.state = VehicleState()
        self.t = 0
        return self.ensemble.observe(self.state)

    def step(self, action: float):
        u_rl = float(np.clip(action, -1.0, 1.0))
        new_state, info = self.ensemble.step_with_action(self.state, u_rl)
        self.state = new_state
        self.t += 1
        c = self.config
        v_err = new_state.speed_v - self.ensemble.v_ref(new_state)
        reward = reward_r2(v_err, self.ensemble.agent_history, u_rl,
                           new_state.speed_v, c.w21, c.w22, c.w23, c.v_threshold)
        info["reward"] = reward
        obs = self.ensemble.observe(new_state)
        return obs, reward, self.t >= self.episode_steps, info


class DirectTrackingEnv:
    """PPO environment for the standalone learned controller on the plant."""

    def __init__(self, plant: Plant, path: ReferencePath, p_gain: float = 0.5,
                 episode_steps: int = EPISODE_STEPS,
                 substeps: int = CONTROL_SUBSTEPS):
        self.plant = plant
        self.path = path
        self.p_gain = p_gain
        self.episode_steps = episode_steps
        self.substeps = substeps
        self.reset(0)

    def _v_ref(self, state: VehicleState) -> float:
        s, _ = self.path.project((state.s_x, state.s_y))
        return self.path.v_ref_at(s)

    def reset(self, seed: int = 0) -> np.ndarray:
        self.state = VehicleState()
        self.history = np.zeros(ACTION_HISTORY)
        self.t = 0
        return build_observation_ac(self.state.speed_v, self._v_ref(self.state),
                                    self.history)

    def step(self, action: float):
        throttle = float(np.clip(action, -1.0, 1.0))
        omega = steering_p_control(self.state, self.path, self.p_gain)
        info = {
            "time": self.state.sim_time, "s_x": self.state.s_x, "s_y": self.state.s_y,
            "v": self.state.speed_v, "v_ref": self._v_ref(self.state),
            "u_mpc": 0.0, "u_rl": throttle, "u_applied": throttle, "omega": omega,
            "degenerate": False,
        }
        new_state = self.plant.run_zoh(self.state, ControlInput.saturated(throttle, omega),
                                       self.substeps)
        self.state = new_state
        self.t += 1
        self.history = np.concatenate(([throttle], self.history[:-1]))
        reward = reward_r1(new_state.speed_v - self._v_ref(new_state),
                           self.history, new_state.speed_v)
        info["reward"] = reward
        obs = build_observation_ac(new_state.speed_v, self._v_ref(new_state),
                                   self.history)
        return obs, reward, self.t >= self.episode_steps, {**info}
