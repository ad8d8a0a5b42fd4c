"""Training configuration, profiles, and config-file parsing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass

import yaml

from .errors import ValidationError


@dataclass
class TrainConfig:
    total_steps: int = 1_000_000        # N
    max_episode_steps: int = 1_000      # M
    eval_period: int = 5_000            # E
    target_update_period: int = 1_000   # delta
    gamma: float = 0.99
    learning_rate: float = 1e-4
    batch_size: int = 256
    buffer_capacity: int = 150_000
    epsilon_start: float = 1.0
    epsilon_decay: float = 1e-6
    reward_weight: float = 1.0          # k
    frame_stack: int = 3                # n
    n_actions: int = 2                  # m
    dt: float = 0.1
    seed: int = 0
    resolution: int = 48
    view_extent: float = 50.0
    hidden: int = 512
    update_every: int = 1               # optimizer steps happen every this many env steps
    checkpoint_every: int = 25_000
    scenario_shift: float = 1.0         # c in w = 1 / (G - min G + c)
    probability_floor_total: float = 0.2  # p_min = this / number of scenarios
    not_moving_speed: float = 0.1
    eval_stall_steps: int = 50          # greedy eval: break episodes frozen this long
    out_dir: str = "runs"
    profile: str = "parity"

    def __post_init__(self):
        for name in ("total_steps", "max_episode_steps", "eval_period",
                     "target_update_period", "batch_size", "buffer_capacity",
                     "frame_stack", "n_actions", "update_every"):
            if getattr(self, name) < 0 or (name != "total_steps" and getattr(self, name) == 0):
                raise ValidationError(f"{name} must be positive")
        if not 0.0 <= self.epsilon_start <= 1.0:
            raise ValidationError("epsilon_start must be in [0, 1]")

    def config_hash(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


# "parity" matches the published hyperparameters; "desk" is a CPU-tractable
# scaled-down profile (smaller frames and buffer, faster exploration decay).
PROFILES: dict[str, dict] = {
    "parity": {},
    "desk": {
        "total_steps": 150_000,
        "eval_period": 2_500,
        "buffer_capacity": 30_000,
        "resolution": 24,
        "batch_size": 32,
        "epsilon_decay": 1e-5,
        "update_every": 2,
        "checkpoint_every": 25_000,
        "profile": "desk",
    },
}


def make_config(profile: str = "parity", **overrides) -> TrainConfig:
    if profile not in PROFILES:
        raise ValidationError(f"unknown profile {profile!r}")
    fields = dict(PROFILES[profile], profile=profile)
    fields.update(overrides)
    known = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = set(fields) - known
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    return TrainConfig(**fields)


def load_config(path: str, profile: str = "parity", **overrides) -> TrainConfig:
    """YAML key-value file; keys are TrainConfig field names."""
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh) or {}
        except yaml.YAMLError as exc:
            raise ValidationError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: expected a mapping of config keys")
    data.update(overrides)
    profile = data.pop("profile", profile)
    return make_config(profile, **data)


def save_config(cfg: TrainConfig, path: str) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(dataclasses.asdict(cfg), fh, sort_keys=True)
