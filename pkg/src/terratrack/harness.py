"""Episode execution, metrics, training orchestration and comparison tables."""

from __future__ import annotations

import csv
import datetime
import json
import os
from dataclasses import dataclass

import numpy as np

from .checkpoint import CheckpointError, PolicyCheckpoint
from .compensator import (CompensatedTrackingEnv, CompensatorConfig,
                          DirectTrackingEnv)
from .ppo import (ActorCritic, Adam, PpoConfig, RolloutBuffer, collect_rollout,
                  ppo_update, TrainResult)
from .scenarios import (ScenarioSpec, ScenarioError, TERRAIN_1, builtin_scenario,
                        ConstantProfile, load_scenario)
from .seeding import child_rng, child_seed
from .svgplot import line_plot
from .terrain import Plant, PlantFault

METRIC_DT = 0.1  # s, control period used by the reported metrics

RECORD_COLUMNS = ("time", "s_x", "s_y", "v", "v_ref", "u_mpc", "u_rl",
                  "u_applied", "reward")

DEFAULT_CHECKPOINT_STEPS = (2000, 5000, 20000)
COMPENSATOR_LOG_STD_INIT = -1.5
AC_ACTION_BIAS = 0.4


class HarnessError(RuntimeError):
    pass


@dataclass
class MetricsReport:
    delta_v_rms: float   # m/s
    rms_jerk: float      # m/s^3


@dataclass
class EpisodeRecord:
    rows: np.ndarray               # (steps, 9) in RECORD_COLUMNS order
    fault: str | None = None

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, RECORD_COLUMNS.index(name)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(RECORD_COLUMNS)
            for row in self.rows:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path) -> "EpisodeRecord":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != RECORD_COLUMNS:
                raise HarnessError(f"{path}: unexpected columns {header}")
            rows = np.array([[float(v) for v in row] for row in reader])
        return cls(rows)


def compute_metrics(record: EpisodeRecord) -> MetricsReport:
    """RMS speed-tracking error and RMS jerk from twice-differenced speed."""
    v = record.column("v")
    v_ref = record.column("v_ref")
    if len(v) == 0:
        raise ValueError("record is empty")
    err = v - v_ref
    delta_v_rms = float(np.sqrt(np.mean(err * err)))
    if len(v) < 3:
        return MetricsReport(delta_v_rms, 0.0)
    accel = np.diff(v) / METRIC_DT
    jerk = np.diff(accel) / METRIC_DT
    return MetricsReport(delta_v_rms, float(np.sqrt(np.mean(jerk * jerk))))


def _policy_from_checkpoint(ck: PolicyCheckpoint, expected_obs: int, kind: str):
    if ck.obs_dim != expected_obs:
        raise CheckpointError(
            f"checkpoint observation size {ck.obs_dim} does not match "
            f"controller {kind!r} (expects {expected_obs})")
    return ActorCritic.from_checkpoint(ck).policy


def build_env(spec: ScenarioSpec, comp: CompensatorConfig | None = None):
    plant = Plant(spec.vehicle, spec.plant_mode())
    path = spec.reference_path()
    if spec.controller.kind == "ac":
        return DirectTrackingEnv(plant, path, episode_steps=spec.episode_steps)
    return CompensatedTrackingEnv(plant, path, comp,
                                  episode_steps=spec.episode_steps)


def run_episode(spec: ScenarioSpec, checkpoint: PolicyCheckpoint | None = None,
                deterministic_policy: bool = False) -> EpisodeRecord:
    """Execute one scenario episode with its configured controller.

    Learned controllers run their stochastic policy (the deployment matches
    the training-time closed loop), seeded from the scenario seed so records
    are reproducible. Plant faults truncate the episode; the partial record
    carries the fault.
    """
    kind = spec.controller.kind
    policy = None
    if kind in ("ac", "ac2mpc"):
        if checkpoint is None:
            if spec.controller.checkpoint is None:
                raise ScenarioError(f"controller.checkpoint: required for {kind}")
            checkpoint = PolicyCheckpoint.load(spec.controller.checkpoint)
        policy = _policy_from_checkpoint(checkpoint, 12 if kind == "ac" else 32, kind)

    env = build_env(spec)
    obs = env.reset(spec.seed)
    rng = child_rng(spec.seed, "eval-policy")
    rows = []
    fault = None
    for _ in range(spec.episode_steps):
        if policy is None:
            action = 0.0
        elif deterministic_policy:
            action = policy.deterministic(obs)
        else:
            action, _, _ = policy.sample(obs, rng)
        try:
            obs, reward, done, info = env.step(action)
        except PlantFault as exc:
            fault = str(exc)
            break
        rows.append([info[c] for c in RECORD_COLUMNS])
        if done:
            break
    return EpisodeRecord(np.array(rows).reshape(len(rows), len(RECORD_COLUMNS)),
                         fault)


# -- training orchestration ---------------------------------------------------

def _training_env_factory(spec: ScenarioSpec, controller_kind: str):
    def factory():
        controller = spec.controller
        env_spec = ScenarioSpec(
            id=spec.id, terrain=spec.terrain, vehicle=spec.vehicle,
            path_length=spec.path_length, profile=spec.profile,
            episode_steps=spec.episode_steps, seed=spec.seed,
            controller=controller)
        plant = Plant(env_spec.vehicle, env_spec.plant_mode())
        path = env_spec.reference_path()
        if controller_kind == "ac":
            return DirectTrackingEnv(plant, path, episode_steps=spec.episode_steps)
        return CompensatedTrackingEnv(plant, path, episode_steps=spec.episode_steps)
    return factory


def check_training_protocol(spec: ScenarioSpec) -> None:
    """The standard protocol trains on the first terrain, constant speed only."""
    if spec.terrain != TERRAIN_1 or not isinstance(spec.profile, ConstantProfile):
        raise ScenarioError(
            "training protocol expects scenario 1A (terrain 1, constant speed); "
            "pass allow_any_scenario=True / --force to override")


_WORKER_ENV = None


def _worker_init(spec_dict: dict, controller_kind: str):
    global _WORKER_ENV
    from .scenarios import scenario_from_dict
    _WORKER_ENV = _training_env_factory(scenario_from_dict(spec_dict), controller_kind)()


def _worker_collect(agent_state: dict, steps: int, episode_seed: int, rng_seed):
    agent = _agent_from_state(agent_state)
    rng = np.random.default_rng(rng_seed)
    buffer, ep_returns = collect_rollout(_WORKER_ENV, agent, steps, rng,
                                         first_episode_seed=episode_seed)
    return ({f: getattr(buffer, f) for f in ("obs", "actions_pre", "actions_applied",
                                             "rewards", "values", "log_probs", "dones")},
            ep_returns)


def _agent_state(agent: ActorCritic) -> dict:
    return {"obs_dim": agent.obs_dim, "flat": agent.get_flat(),
            "config": agent.config}


def _agent_from_state(state: dict) -> ActorCritic:
    agent = ActorCritic(state["obs_dim"], state["config"])
    agent.set_flat(state["flat"])
    return agent


def train_controller(controller_kind: str, spec: ScenarioSpec, budget_steps: int,
                     workers: int = 1, seed: int = 0,
                     checkpoint_steps=DEFAULT_CHECKPOINT_STEPS,
                     allow_any_scenario: bool = False,
                     ppo_config: PpoConfig | None = None,
                     progress=None) -> TrainResult:
    """Train 'ac' or 'ac2mpc' on a scenario with parallel rollout workers."""
    if controller_kind not in ("ac", "ac2mpc"):
        raise ScenarioError(f"controller: cannot train kind {controller_kind!r}")
    if not allow_any_scenario:
        check_training_protocol(spec)
    if ppo_config is None:
        if controller_kind == "ac2mpc":
            # compensation policies explore around a working controller:
            # small initial noise, no starting throttle offset
            ppo_config = PpoConfig(seed=seed, log_std_init=COMPENSATOR_LOG_STD_INIT)
        else:
            ppo_config = PpoConfig(seed=seed, initial_action_bias=AC_ACTION_BIAS)
    config = ppo_config
    obs_dim = 12 if controller_kind == "ac" else 32

    agent = ActorCritic(obs_dim, config, child_rng(config.seed, "init"))
    adam = Adam(agent.get_flat().size, config.learning_rate)
    result = TrainResult(final=agent.to_checkpoint(0))
    pending = sorted(set(int(c) for c in checkpoint_steps if 0 < c <= budget_steps))

    pool = None
    live_workers = max(1, int(workers))
    if live_workers > 1:
        import multiprocessing as mp
        from .scenarios import scenario_to_dict
        ctx = mp.get_context("fork")
        pool = ctx.Pool(live_workers, initializer=_worker_init,
                        initargs=(scenario_to_dict(spec), controller_kind))
    env = _training_env_factory(spec, controller_kind)() if pool is None else None

    try:
        steps_done = 0
        epoch = 0
        episode_counter = 0
        while steps_done < budget_steps:
            if pool is None:
                rng = child_rng(config.seed, "episode", episode_counter)
                buffer, ep_returns = collect_rollout(
                    env, agent, config.steps_per_epoch, rng,
                    first_episode_seed=episode_counter)
                episode_counter += 1
            else:
                state = _agent_state(agent)
                tasks = []
                for w in range(live_workers):
                    rng_seed = child_seed(config.seed, "episode", episode_counter + w)
                    tasks.append(pool.apply_async(
                        _worker_collect,
                        (state, config.steps_per_epoch, episode_counter + w, rng_seed)))
                episode_counter += live_workers
                buffers, ep_returns = [], []
                failures = 0
                for task in tasks:
                    try:
                        arrays, rets = task.get()
                    except Exception:
                        failures += 1
                        continue
                    b = RolloutBuffer(**arrays)
                    b.ptr = len(b.rewards)
                    buffers.append(b)
                    ep_returns.extend(rets)
                if not buffers:
                    raise HarnessError("all rollout workers failed")
                if failures:
                    live_workers = max(1, live_workers - failures)
                buffer = RolloutBuffer.concat(buffers)
                buffer.finish(config.discount_gamma, config.gae_lambda)

            steps_done += len(buffer)
            ppo_update(agent, buffer, config, child_rng(config.seed, "update", epoch), adam)
            mean_ret = float(np.mean(ep_returns)) if ep_returns else 0.0
            result.curve.append((steps_done, mean_ret))
            while pending and steps_done >= pending[0]:
                result.checkpoints[pending.pop(0)] = agent.to_checkpoint(steps_done)
            if progress is not None:
                progress(steps_done, mean_ret)
            epoch += 1
    finally:
        if pool is not None:
            pool.terminate()
            pool.join()
    result.final = agent.to_checkpoint(steps_done)
    return result


def save_train_outputs(result: TrainResult, controller_kind: str, out_dir) -> dict:
    """Write the reward curve CSV and all checkpoints; returns written paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    curve_path = os.path.join(out_dir, f"{controller_kind}_rewards.csv")
    with open(curve_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("env_steps", "mean_episode_reward"))
        for steps, ret in result.curve:
            writer.writerow((steps, repr(float(ret))))
    paths["curve"] = curve_path
    for label, ck in result.checkpoints.items():
        p = os.path.join(out_dir, f"{controller_kind}_ckpt_{label}.json")
        ck.save(p)
        paths[str(label)] = p
    final_path = os.path.join(out_dir, f"{controller_kind}_final.json")
    result.final.save(final_path)
    paths["final"] = final_path
    return paths


# -- comparison ---------------------------------------------------------------

def find_checkpoint(checkpoints_dir: str, kind: str) -> str | None:
    p = os.path.join(checkpoints_dir, f"{kind}_final.json")
    return p if os.path.exists(p) else None


def compare(scenario_ids, controllers, checkpoints_dir: str | None, out_dir: str,
            seed: int = 0, checkpoint_paths: dict | None = None) -> dict:
    """Run each scenario/controller pair with the shared seed and emit the
    metrics table, per-run time series and plots."""
    os.makedirs(out_dir, exist_ok=True)
    runs_dir = os.path.join(out_dir, "runs")
    plots_dir = os.path.join(out_dir, "plots")
    os.makedirs(runs_dir, exist_ok=True)
    os.makedirs(plots_dir, exist_ok=True)

    rows = []
    records = {}
    for sid in scenario_ids:
        for kind in controllers:
            ck_path = None
            if kind in ("ac", "ac2mpc"):
                if checkpoint_paths and kind in checkpoint_paths:
                    ck_path = checkpoint_paths[kind]
                elif checkpoints_dir:
                    ck_path = find_checkpoint(checkpoints_dir, kind)
                if ck_path is None:
                    rows.append({"scenario": sid, "controller": kind,
                                 "delta_v_rms": None, "rms_jerk": None,
                                 "skipped": "missing checkpoint"})
                    continue
            from .scenarios import ControllerChoice
            spec = builtin_scenario(sid, ControllerChoice(kind, ck_path), seed=seed)
            record = run_episode(spec)
            metrics = compute_metrics(record)
            csv_path = os.path.join(runs_dir, f"{sid}_{kind}.csv")
            record.to_csv(csv_path)
            records[(sid, kind)] = record
            rows.append({"scenario": sid, "controller": kind,
                         "delta_v_rms": metrics.delta_v_rms,
                         "rms_jerk": metrics.rms_jerk})

    # mark the best tracking per scenario
    for sid in scenario_ids:
        cells = [r for r in rows if r["scenario"] == sid and r["delta_v_rms"] is not None]
        if cells:
            best = min(cells, key=lambda r: r["delta_v_rms"])
            for r in cells:
                r["best"] = r is best

    for sid in scenario_ids:
        vel_series = []
        inp_series = []
        for kind in controllers:
            rec = records.get((sid, kind))
            if rec is None or len(rec.rows) == 0:
                continue
            t = rec.column("time")
            vel_series.append((t, rec.column("v"), kind))
            inp_series.append((t, rec.column("u_applied"), kind))
        if vel_series:
            ref_rec = next(records[(sid, k)] for k in controllers if (sid, k) in records)
            vel_series.append((ref_rec.column("time"), ref_rec.column("v_ref"), "reference"))
            line_plot(os.path.join(plots_dir, f"{sid}_velocity.svg"), vel_series,
                      title=f"Scenario {sid}: speed tracking",
                      xlabel="time [s]", ylabel="speed [m/s]")
            line_plot(os.path.join(plots_dir, f"{sid}_inputs.svg"), inp_series,
                      title=f"Scenario {sid}: applied throttle",
                      xlabel="time [s]", ylabel="throttle [-]")

    report = {
        "rows": rows,
        "seed": seed,
        "meta": {"generated_at": datetime.datetime.now(datetime.timezone.utc)
                 .isoformat(timespec="seconds")},
    }
    with open(os.path.join(out_dir, "metrics.json"), "w") as fh:
        json.dump(report, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return report


def plot_run_dir(run_dir: str) -> list:
    """Regenerate SVG plots from the CSV files found in a run directory."""
    written = []
    for name in sorted(os.listdir(run_dir)):
        full = os.path.join(run_dir, name)
        if name.endswith("_rewards.csv"):
            steps, rewards = [], []
            with open(full, newline="") as fh:
                reader = csv.reader(fh)
                next(reader)
                for row in reader:
                    steps.append(float(row[0]))
                    rewards.append(float(row[1]))
            out = full[:-4] + ".svg"
            line_plot(out, [(steps, rewards, name[:-len("_rewards.csv")])],
                      title="Training reward", xlabel="environment steps",
                      ylabel="mean episode reward")
            written.append(out)
        elif name.endswith(".csv"):
            try:
                rec = EpisodeRecord.from_csv(full)
            except (HarnessError, ValueError):
                continue
            t = rec.column("time")
            out = full[:-4] + ".svg"
            line_plot(out, [(t, rec.column("v"), "v"),
                            (t, rec.column("v_ref"), "reference"),
                            (t, rec.column("u_applied"), "throttle")],
                      title=name[:-4], xlabel="time [s]", ylabel="speed / input")
            written.append(out)
    return written
