"""Proximal policy optimization for one continuous action, from scratch.

Rollouts are collected at the control rate from gym-style environments
(reset/step), advantages come from generalized advantage estimation, and the
update maximizes the clipped surrogate with Adam over the actor, its log
standard deviation, and the critic jointly. Designed around short
fixed-length episodes (one episode per collection epoch by default).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, asdict

import numpy as np

from .checkpoint import PolicyCheckpoint
from .nets import HIDDEN_SIZES, Adam, GaussianPolicy, Mlp

ACTION_HISTORY = 10
OBS_DIM_AC = 12

REWARD_W1 = 1.0
REWARD_W2 = 0.1
REWARD_W3 = 1.0
SIGMA_NORMALIZER = 1.0  # largest possible std of actions bounded in [-1, 1]


@dataclass
class PpoConfig:
    learning_rate: float = 0.003
    clip_eps: float = 0.2
    batch_size: int = 50
    steps_per_epoch: int = 300
    discount_gamma: float = 0.99
    gae_lambda: float = 0.95
    update_epochs: int = 10
    kl_stop_threshold: float = 0.03
    value_coeff: float = 0.5
    entropy_coeff: float = 0.0
    max_grad_norm: float = 0.5
    log_std_init: float = -0.5
    initial_action_bias: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError("clip_eps must be in (0, 1)")
        if not 0.0 < self.discount_gamma <= 1.0:
            raise ValueError("discount_gamma must be in (0, 1]")
        if not 0.0 < self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must be in (0, 1]")
        if self.batch_size > self.steps_per_epoch:
            raise ValueError("batch_size must be <= steps_per_epoch")


def build_observation_ac(v: float, v_ref: float, action_history) -> np.ndarray:
    """[v, v_ref, most recent 10 actions], length 12."""
    hist = np.asarray(action_history, dtype=float)
    if hist.shape != (ACTION_HISTORY,):
        raise ValueError(f"action history must hold {ACTION_HISTORY} entries")
    return np.concatenate(([v, v_ref], hist))


def reward_r1(v_err: float, action_history, v: float,
              weights=(REWARD_W1, REWARD_W2, REWARD_W3),
              sigma_normalizer: float = SIGMA_NORMALIZER) -> float:
    """Tracking reward with an action-spread penalty and a reversing penalty."""
    w1, w2, w3 = weights
    spread = float(np.std(np.asarray(action_history, dtype=float)))
    r = w1 / (1.0 + abs(v_err)) - w2 * spread / sigma_normalizer
    if v < 0.0:
        r -= w3
    return r


class ActorCritic:
    """Gaussian policy plus value network sharing the paper-sized hidden stack."""

    def __init__(self, obs_dim: int, config: PpoConfig,
                 rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(config.seed)
        sizes = (obs_dim, *HIDDEN_SIZES, 1)
        self.policy = GaussianPolicy(Mlp(sizes, rng, out_scale=0.01),
                                     log_std=config.log_std_init)
        # optimistic starting action (pre-squash units) so early exploration
        # exercises the informative part of the action range
        self.policy.mean_net.biases[-1][:] = config.initial_action_bias
        self.critic = Mlp(sizes, rng)
        self.config = config

    @property
    def obs_dim(self) -> int:
        return self.policy.obs_dim

    def act(self, obs: np.ndarray, rng: np.random.Generator):
        """(applied action, pre-clip sample, log-prob, value estimate)."""
        applied, pre, logp = self.policy.sample(obs, rng)
        value = float(self.critic.forward(obs)[0, 0])
        return applied, pre, logp, value

    def get_flat(self) -> np.ndarray:
        return np.concatenate([self.policy.mean_net.get_flat(),
                               [self.policy.log_std],
                               self.critic.get_flat()])

    def set_flat(self, flat: np.ndarray) -> None:
        n_a = self.policy.mean_net.n_params
        self.policy.mean_net.set_flat(flat[:n_a])
        self.policy.log_std = float(flat[n_a])
        self.critic.set_flat(flat[n_a + 1:])

    def to_checkpoint(self, env_steps: int = 0) -> PolicyCheckpoint:
        return PolicyCheckpoint(
            actor_sizes=self.policy.mean_net.sizes,
            critic_sizes=self.critic.sizes,
            actor_weights=self.policy.mean_net.get_flat(),
            critic_weights=self.critic.get_flat(),
            log_std=self.policy.log_std,
            config=asdict(self.config),
            env_steps=env_steps,
        )

    @classmethod
    def from_checkpoint(cls, ck: PolicyCheckpoint) -> "ActorCritic":
        cfg_fields = {f: ck.config[f] for f in asdict(PpoConfig()) if f in ck.config}
        agent = cls(ck.actor_sizes[0], PpoConfig(**cfg_fields))
        agent.policy.mean_net = Mlp(ck.actor_sizes)
        agent.policy.mean_net.set_flat(ck.actor_weights)
        agent.policy.log_std = ck.log_std
        agent.critic = Mlp(ck.critic_sizes)
        agent.critic.set_flat(ck.critic_weights)
        return agent


@dataclass
class RolloutBuffer:
    obs: np.ndarray
    actions_pre: np.ndarray
    actions_applied: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    log_probs: np.ndarray
    dones: np.ndarray
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    ptr: int = 0

    @classmethod
    def empty(cls, capacity: int, obs_dim: int) -> "RolloutBuffer":
        return cls(np.zeros((capacity, obs_dim)), np.zeros(capacity),
                   np.zeros(capacity), np.zeros(capacity), np.zeros(capacity),
                   np.zeros(capacity), np.zeros(capacity, dtype=bool))

    def add(self, obs, pre, applied, reward, value, logp, done) -> None:
        i = self.ptr
        self.obs[i] = obs
        self.actions_pre[i] = pre
        self.actions_applied[i] = applied
        self.rewards[i] = reward
        self.values[i] = value
        self.log_probs[i] = logp
        self.dones[i] = done
        self.ptr += 1

    def __len__(self) -> int:
        return self.ptr

    def finish(self, gamma: float, lam: float) -> None:
        self.advantages, self.returns = gae_advantages(
            self.rewards[:self.ptr], self.values[:self.ptr],
            self.dones[:self.ptr], gamma, lam)

    @classmethod
    def concat(cls, buffers) -> "RolloutBuffer":
        out = cls(*[np.concatenate([getattr(b, f)[:b.ptr] for b in buffers])
                    for f in ("obs", "actions_pre", "actions_applied", "rewards",
                              "values", "log_probs", "dones")])
        out.ptr = len(out.rewards)
        return out


def gae_advantages(rewards, values, dones, gamma: float, lam: float,
                   last_value: float = 0.0):
    """Generalized advantage estimates and value targets."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    T = len(rewards)
    adv = np.zeros(T)
    running = 0.0
    for t in range(T - 1, -1, -1):
        nonterminal = 0.0 if dones[t] else 1.0
        next_value = last_value if t == T - 1 else values[t + 1]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        running = delta + gamma * lam * nonterminal * running
        adv[t] = running
    return adv, adv + values


def ppo_update(agent: ActorCritic, buffer: RolloutBuffer, config: PpoConfig,
               rng: np.random.Generator, adam: Adam | None = None) -> dict:
    """One PPO update over the buffer; early-stops on the KL estimate.

    On a non-finite loss the parameters are rolled back and the fault flag set.
    """
    if buffer.advantages is None:
        buffer.finish(config.discount_gamma, config.gae_lambda)
    T = len(buffer)
    obs = buffer.obs[:T]
    pre = buffer.actions_pre[:T]
    logp_old = buffer.log_probs[:T]
    returns = buffer.returns[:T]

    adv = buffer.advantages[:T].copy()
    std = adv.std()
    adv = (adv - adv.mean()) / (std if std > 0 else 1.0)

    adam = adam or Adam(agent.get_flat().size, config.learning_rate)
    snapshot = agent.get_flat()
    eps = config.clip_eps
    n_actor = agent.policy.mean_net.n_params

    diag = {"surrogate_loss": 0.0, "value_loss": 0.0, "approx_kl": 0.0,
            "clip_fraction": 0.0, "entropy": agent.policy.entropy(),
            "epochs_run": 0, "fault": False}

    stop = False
    for epoch in range(config.update_epochs):
        order = rng.permutation(T)
        for start in range(0, T, config.batch_size):
            idx = order[start:start + config.batch_size]
            B = len(idx)
            o, a_pre, lp_old, A, ret = obs[idx], pre[idx], logp_old[idx], adv[idx], returns[idx]

            raw_out, cache_a = agent.policy.mean_net.forward_cached(o)
            lim = agent.policy.MEAN_LIMIT
            m = lim * np.tanh(raw_out[:, 0] / lim)
            sigma = np.exp(agent.policy.log_std)
            z = (a_pre - m) / sigma
            logp = -0.5 * z * z - agent.policy.log_std - 0.5 * np.log(2.0 * np.pi)
            kl_batch = float(np.mean(lp_old - logp))
            if kl_batch > config.kl_stop_threshold:
                stop = True
                break
            ratio = np.exp(logp - lp_old)
            surr1 = ratio * A
            surr2 = np.clip(ratio, 1.0 - eps, 1.0 + eps) * A
            surrogate = np.minimum(surr1, surr2)

            v_out, cache_c = agent.critic.forward_cached(o)
            v = v_out[:, 0]
            v_err = v - ret
            value_loss = float(np.mean(v_err * v_err))
            entropy = agent.policy.entropy()
            loss = (-float(np.mean(surrogate)) + config.value_coeff * value_loss
                    - config.entropy_coeff * entropy)
            if not np.isfinite(loss):
                agent.set_flat(snapshot)
                diag["fault"] = True
                return diag

            # gradient of the loss through log-probabilities
            dloss_dlogp = -(A * ratio * (surr1 <= surr2)) / B
            dlogp_dm = z / sigma
            dm_draw = 1.0 - (m / lim) ** 2
            grad_raw = (dloss_dlogp * dlogp_dm * dm_draw)[:, None]
            g_actor = agent.policy.mean_net.backward(cache_a, grad_raw)
            g_log_std = float(np.sum(dloss_dlogp * (z * z - 1.0))) - config.entropy_coeff
            grad_v = (2.0 * config.value_coeff * v_err / B)[:, None]
            g_critic = agent.critic.backward(cache_c, grad_v)
            grad = np.concatenate([g_actor, [g_log_std], g_critic])
            if not np.all(np.isfinite(grad)):
                agent.set_flat(snapshot)
                diag["fault"] = True
                return diag
            norm = float(np.linalg.norm(grad))
            if config.max_grad_norm > 0 and norm > config.max_grad_norm:
                grad = grad * (config.max_grad_norm / norm)
            agent.set_flat(adam.step(agent.get_flat(), grad))

            diag["surrogate_loss"] = -float(np.mean(surrogate))
            diag["value_loss"] = value_loss
            diag["clip_fraction"] = float(np.mean(np.abs(ratio - 1.0) > eps))
            diag["entropy"] = entropy

        diag["epochs_run"] = epoch + 1
        logp_all = agent.policy.log_prob(obs, pre)
        kl = float(np.mean(logp_old - logp_all))
        diag["approx_kl"] = kl
        if not np.isfinite(kl):
            agent.set_flat(snapshot)
            diag["fault"] = True
            return diag
        if stop or kl > config.kl_stop_threshold:
            break
    return diag


def collect_rollout(env, agent: ActorCritic, steps: int,
                    rng: np.random.Generator, first_episode_seed: int = 0):
    """Run the policy for `steps` transitions; returns (buffer, episode returns)."""
    buffer = RolloutBuffer.empty(steps, agent.obs_dim)
    episode_returns = []
    ep_seed = first_episode_seed
    obs = env.reset(ep_seed)
    ep_ret = 0.0
    for _ in range(steps):
        applied, pre, logp, value = agent.act(obs, rng)
        obs2, reward, done, _ = env.step(applied)
        buffer.add(obs, pre, applied, reward, value, logp, done)
        ep_ret += reward
        if done:
            episode_returns.append(ep_ret)
            ep_ret = 0.0
            ep_seed += 1
            obs = env.reset(ep_seed)
        else:
            obs = obs2
    buffer.finish(agent.config.discount_gamma, agent.config.gae_lambda)
    return buffer, episode_returns


@dataclass
class TrainResult:
    final: PolicyCheckpoint
    curve: list = field(default_factory=list)          # (env_steps, mean episode return)
    checkpoints: dict = field(default_factory=dict)    # step label -> PolicyCheckpoint
    diagnostics: list = field(default_factory=list)


def train_ac(env, config: PpoConfig, budget_steps: int,
             checkpoint_at=(), obs_dim: int = OBS_DIM_AC,
             progress=None) -> TrainResult:
    """Train an agent on one environment until the step budget is exhausted."""
    from .seeding import child_rng

    agent = ActorCritic(obs_dim, config, child_rng(config.seed, "init"))
    adam = Adam(agent.get_flat().size, config.learning_rate)
    result = TrainResult(final=agent.to_checkpoint(0))
    pending = sorted(set(int(c) for c in checkpoint_at if 0 < c <= budget_steps))

    steps_done = 0
    epoch = 0
    while steps_done < budget_steps:
        rng = child_rng(config.seed, "episode", epoch)
        buffer, ep_returns = collect_rollout(
            env, agent, config.steps_per_epoch, rng,
            first_episode_seed=epoch * 1000)
        steps_done += len(buffer)
        diag = ppo_update(agent, buffer, config, child_rng(config.seed, "update", epoch), adam)
        mean_ret = float(np.mean(ep_returns)) if ep_returns else float(np.sum(buffer.rewards))
        result.curve.append((steps_done, mean_ret))
        result.diagnostics.append(diag)
        while pending and steps_done >= pending[0]:
            result.checkpoints[pending.pop(0)] = agent.to_checkpoint(steps_done)
        if progress is not None:
            progress(steps_done, mean_ret)
        epoch += 1
    result.final = agent.to_checkpoint(steps_done)
    return result


class ToySpeedEnv:
    """1-D double integrator tracking a constant speed; smoke-test plant.

    Speed responds to throttle through a fixed gain and is clamped
    non-negative, mirroring the vehicle environments.
    """

    def __init__(self, v_ref: float = 3.0, accel_scale: float = 2.0,
                 dt: float = 0.1, episode_steps: int = 300):
        self.v_ref = v_ref
        self.accel_scale = accel_scale
        self.dt = dt
        self.episode_steps = episode_steps
        self.reset(0)

    def reset(self, seed: int = 0) -> np.ndarray:
        self.v = 0.0
        self.pos = 0.0
        self.t = 0
        self.history = np.zeros(ACTION_HISTORY)
        return build_observation_ac(self.v, self.v_ref, self.history)

    def step(self, action: float):
        a = float(np.clip(action, -1.0, 1.0))
        self.pos += self.v * self.dt
        self.v = max(0.0, self.v + self.accel_scale * a * self.dt)
        self.t += 1
        self.history = np.concatenate(([a], self.history[:-1]))
        reward = reward_r1(self.v - self.v_ref, self.history, self.v)
        obs = build_observation_ac(self.v, self.v_ref, self.history)
        return obs, reward, self.t >= self.episode_steps, {}
