"""Policy persistence: structured JSON checkpoints for actor-critic agents."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class PolicyCheckpoint:
    actor_sizes: tuple
    critic_sizes: tuple
    actor_weights: np.ndarray    # flat
    critic_weights: np.ndarray   # flat
    log_std: float
    config: dict = field(default_factory=dict)
    env_steps: int = 0
    format_version: int = FORMAT_VERSION

    @property
    def obs_dim(self) -> int:
        return int(self.actor_sizes[0])

    def save(self, path) -> None:
        payload = {
            "format_version": self.format_version,
            "layer_sizes": {"actor": list(self.actor_sizes),
                            "critic": list(self.critic_sizes)},
            "actor_weights": [float(v) for v in self.actor_weights],
            "critic_weights": [float(v) for v in self.critic_weights],
            "log_std": float(self.log_std),
            "config": self.config,
            "env_steps": int(self.env_steps),
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "PolicyCheckpoint":
        try:
            with open(path) as fh:
                payload = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
        if payload.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint format_version {payload.get('format_version')}")
        sizes = payload.get("layer_sizes", {})
        for key in ("actor", "critic"):
            if key not in sizes:
                raise CheckpointError(f"layer_sizes.{key} missing")
        ck = cls(
            actor_sizes=tuple(int(s) for s in sizes["actor"]),
            critic_sizes=tuple(int(s) for s in sizes["critic"]),
            actor_weights=np.asarray(payload["actor_weights"], dtype=float),
            critic_weights=np.asarray(payload["critic_weights"], dtype=float),
            log_std=float(payload["log_std"]),
            config=payload.get("config", {}),
            env_steps=int(payload.get("env_steps", 0)),
        )
        n_actor = _param_count(ck.actor_sizes)
        n_critic = _param_count(ck.critic_sizes)
        if ck.actor_weights.size != n_actor:
            raise CheckpointError(
                f"actor_weights has {ck.actor_weights.size} values, expected {n_actor}")
        if ck.critic_weights.size != n_critic:
            raise CheckpointError(
                f"critic_weights has {ck.critic_weights.size} values, expected {n_critic}")
        return ck


def _param_count(sizes) -> int:
    return sum(sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(len(sizes) - 1))
