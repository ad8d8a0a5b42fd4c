"""Self-play training loop with prioritized scenario replay.

Each training episode drops four vehicles into the intersection, one per
approach, with intentions drawn from a bank of all 3^4 = 81 assignments.
Periodically training pauses, every scenario is evaluated greedily, and the
bank's sampling distribution is rebuilt so that low-return (hard) scenarios
are visited more often in the next training window.
"""

from __future__ import annotations

import csv
import itertools
import os
from dataclasses import dataclass, field

import numpy as np

from .agents import AgentSet, Transition, assign_agent
from .config import TrainConfig
from .geometry import Intention
from .metrics import MetricsRecord, MetricsTracker
from .nn import save_checkpoint, standard_architecture
from .observation import FrameStack, RenderConfig, Renderer
from .world import MAX_SPEED, ScenarioSpec, spawn_scenario


def compute_reward(delta_s: float, moving: bool, collided: bool,
                   completed: bool, k: float) -> float:
    """Per-vehicle per-step reward; exactly one branch fires."""
    if collided:
        return -10.0 * k
    if completed:
        return 10.0 * k
    if not moving:
        return -1.0 * k
    return delta_s


def action_command(action: int) -> float:
    """Discrete action index -> speed command: 0 -> stop, 1 -> 15 m/s."""
    return MAX_SPEED if action == 1 else 0.0


class ScenarioBank:
    """The 81 four-vehicle intention assignments and their sampling weights."""

    def __init__(self, floor_total: float = 0.2, shift: float = 1.0):
        self.scenarios = [
            ScenarioSpec.four_way(combo)
            for combo in itertools.product(Intention, repeat=4)
        ]
        n = len(self.scenarios)
        self.probabilities = np.full(n, 1.0 / n)
        self.floor = floor_total / n
        self.shift = shift

    def __len__(self) -> int:
        return len(self.scenarios)

    def sample(self, rng: np.random.Generator) -> tuple[int, ScenarioSpec]:
        idx = int(rng.choice(len(self.scenarios), p=self.probabilities))
        return idx, self.scenarios[idx]

    def update(self, returns: np.ndarray) -> None:
        self.probabilities = scenario_distribution(
            returns, self.shift, self.floor
        )


def scenario_distribution(returns: np.ndarray, shift: float,
                          floor: float) -> np.ndarray:
    """Inverse-return weights, shifted to stay positive, with a floor.

    w_i = 1 / (G_i - min_j G_j + shift); lower-return scenarios get higher
    probability.  Every entry is then guaranteed at least ``floor`` while the
    rest keep their relative proportions.
    """
    g = np.asarray(returns, dtype=np.float64)
    w = 1.0 / (g - g.min() + shift)
    p = w / w.sum()
    return apply_floor(p, floor)


def apply_floor(p: np.ndarray, floor: float) -> np.ndarray:
    """Raise sub-floor entries to the floor, rescaling the rest to sum to 1."""
    if floor * len(p) > 1.0 + 1e-12:
        raise ValueError("floor too large for distribution size")
    p = np.asarray(p, dtype=np.float64).copy()
    low = p < floor
    for _ in range(len(p)):
        free = ~low
        if not free.any():
            return np.full(len(p), 1.0 / len(p))
        scale = (1.0 - floor * low.sum()) / p[free].sum()
        q = np.where(low, floor, p * scale)
        newly_low = free & (q < floor - 1e-15)
        if not newly_low.any():
            return q
        low |= newly_low
    return q


@dataclass
class EvaluationRecord:
    scenario_index: int
    episode_return: float           # mean undiscounted return over the vehicles
    metrics: list[MetricsRecord]


@dataclass
class EpisodeResult:
    steps: int
    returns: dict[int, float]
    collided: set[int]
    completed: set[int]
    metrics: list[MetricsRecord] = field(default_factory=list)

    @property
    def mean_return(self) -> float:
        if not self.returns:
            return 0.0
        return sum(self.returns.values()) / len(self.returns)


class Trainer:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        root = np.random.SeedSequence(cfg.seed)
        seq_agents, seq_actions, seq_scenarios, seq_sampling = root.spawn(4)
        arch = standard_architecture(
            cfg.resolution, 3 * cfg.frame_stack, cfg.n_actions, cfg.hidden
        )
        self.agents = AgentSet(
            arch, cfg.buffer_capacity, cfg.learning_rate, cfg.gamma,
            cfg.epsilon_start, cfg.epsilon_decay, seq_agents,
        )
        self.rng_action = np.random.default_rng(seq_actions)
        self.rng_scenario = np.random.default_rng(seq_scenarios)
        self.rng_sample = [np.random.default_rng(s) for s in seq_sampling.spawn(3)]
        self.renderer = Renderer(RenderConfig(cfg.resolution, cfg.view_extent))
        self.bank = ScenarioBank(cfg.probability_floor_total, cfg.scenario_shift)
        self.global_step = 0
        self.last_losses = [float("nan")] * 3
        self.train_rows: list[dict] = []
        self.eval_rows: list[dict] = []
        self.eval_cycles = 0
        self._stop = False

    # -- episodes ---------------------------------------------------------

    def run_episode(self, spec: ScenarioSpec, training: bool) -> EpisodeResult:
        cfg = self.cfg
        world = spawn_scenario(spec, dt=cfg.dt)
        tracker = MetricsTracker(cfg.dt)
        stacks: dict[int, FrameStack] = {}
        obs: dict[int, np.ndarray] = {}
        returns: dict[int, float] = {}
        all_collided: set[int] = set()
        all_completed: set[int] = set()
        steps = 0
        stall = 0
        seen = 0

        while True:
            world.release_pending()
            for vid in range(seen, world.num_spawned):
                frame = self.renderer.render(world, vid)
                stacks[vid] = FrameStack(cfg.frame_stack, frame)
                obs[vid] = stacks[vid].as_tensor()
                returns[vid] = 0.0
                tracker.on_spawn(vid)
            seen = world.num_spawned

            ids = [int(v) for v in world.active_ids()]
            if not ids:
                break
            batch = np.stack([obs[vid] for vid in ids])
            intents = [assign_agent(world.route_of(vid)[1]) for vid in ids]
            epsilon = self.agents.epsilon if training else 0.0
            actions = self.agents.select_actions(
                intents, batch, epsilon, self.rng_action if training else None
            )
            commands = {vid: action_command(a) for vid, a in zip(ids, actions)}
            result = world.step(commands)
            steps += 1

            transitions = []
            moved = False
            for i, vid in enumerate(ids):
                speed = float(world.speed[vid])
                collided = vid in result.collided
                completed = vid in result.completed
                reward = compute_reward(
                    result.delta_s[vid], speed >= cfg.not_moving_speed,
                    collided, completed, cfg.reward_weight,
                )
                returns[vid] += reward
                tracker.on_step(vid, speed, result.delta_s[vid], collided, completed)
                moved = moved or result.delta_s[vid] > 1e-12
                if collided:
                    all_collided.add(vid)
                if completed:
                    all_completed.add(vid)
                terminal = collided or completed
                if world.done[vid]:
                    next_obs = obs[vid]  # never bootstrapped from: terminal
                else:
                    stacks[vid].push(self.renderer.render(world, vid))
                    next_obs = stacks[vid].as_tensor()
                    obs[vid] = next_obs
                if training:
                    transitions.append(
                        (intents[i], Transition(batch[i], int(actions[i]),
                                                reward, next_obs, terminal))
                    )

            episode_over = bool(result.collided) or world.num_active == 0 \
                or steps >= cfg.max_episode_steps

            if training:
                for agent_idx, transition in transitions:
                    self.agents[agent_idx].buffer.push(transition)
                self._after_env_step()
                if self._stop:
                    break
            else:
                stall = 0 if moved else stall + 1
                if stall >= cfg.eval_stall_steps:
                    break  # greedy policy is frozen; episode cannot evolve

            if episode_over:
                break

        return EpisodeResult(
            steps=steps, returns=returns, collided=all_collided,
            completed=all_completed, metrics=tracker.finish(),
        )

    def _after_env_step(self) -> None:
        """Algorithm bookkeeping run once per training environment step."""
        cfg = self.cfg
        self.global_step += 1
        if self.global_step % cfg.update_every == 0:
            for idx, agent in enumerate(self.agents.agents):
                sampled = agent.buffer.sample(cfg.batch_size, self.rng_sample[idx])
                if sampled is not None:
                    self.last_losses[idx] = agent.update(sampled, cfg.gamma)
        self.agents.anneal_epsilon()
        if self.global_step % cfg.target_update_period == 0:
            self.agents.sync_targets()
        if self.global_step % cfg.eval_period == 0:
            records = self.run_evaluation_cycle()
            self.bank.update(np.asarray([r.episode_return for r in records]))
        if cfg.checkpoint_every and self.global_step % cfg.checkpoint_every == 0:
            self.save_checkpoints()
        if self.global_step >= cfg.total_steps:
            self._stop = True

    # -- evaluation and prioritization ------------------------------------

    def run_evaluation_cycle(self) -> list[EvaluationRecord]:
        """Greedy episode for every scenario in the bank; training state untouched."""
        records = []
        for idx, spec in enumerate(self.bank.scenarios):
            result = self.run_episode(spec, training=False)
            record = EvaluationRecord(idx, result.mean_return, result.metrics)
            records.append(record)
            self.eval_rows.append({
                "step": self.global_step,
                "cycle": self.eval_cycles,
                "scenario": idx,
                "episode_return": f"{record.episode_return:.6f}",
                "collisions": len(result.collided),
                "completed": len(result.completed),
            })
        self.eval_cycles += 1
        return records

    # -- the outer loop ----------------------------------------------------

    def train(self) -> AgentSet:
        cfg = self.cfg
        os.makedirs(cfg.out_dir, exist_ok=True)
        episode = 0
        while self.global_step < cfg.total_steps:
            scenario_idx, spec = self.bank.sample(self.rng_scenario)
            result = self.run_episode(spec, training=True)
            episode += 1
            self.train_rows.append({
                "episode": episode,
                "end_step": self.global_step,
                "scenario": scenario_idx,
                "epsilon": f"{self.agents.epsilon:.6f}",
                "length": result.steps,
                "mean_return": f"{result.mean_return:.6f}",
                "collisions": len(result.collided),
                "completed": len(result.completed),
                "loss_left": f"{self.last_losses[0]:.6f}",
                "loss_straight": f"{self.last_losses[1]:.6f}",
                "loss_right": f"{self.last_losses[2]:.6f}",
            })
            if episode % 200 == 0:
                self.write_logs()
        self.save_checkpoints()
        self.write_logs()
        return self.agents

    def checkpoint_paths(self, step: int | None = None) -> list[str]:
        step = self.global_step if step is None else step
        return [
            os.path.join(self.cfg.out_dir,
                         f"seed{self.cfg.seed}_step{step}_{name}.ckpt")
            for name in ("left", "straight", "right")
        ]

    def save_checkpoints(self) -> list[str]:
        os.makedirs(self.cfg.out_dir, exist_ok=True)
        paths = self.checkpoint_paths()
        for agent, path in zip(self.agents.agents, paths):
            save_checkpoint(agent.online, path)
        return paths

    def write_logs(self) -> None:
        os.makedirs(self.cfg.out_dir, exist_ok=True)
        _write_csv(os.path.join(self.cfg.out_dir, f"seed{self.cfg.seed}_train_log.csv"),
                   self.train_rows)
        _write_csv(os.path.join(self.cfg.out_dir, f"seed{self.cfg.seed}_eval_log.csv"),
                   self.eval_rows)


def _write_csv(path: str, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        if not rows:
            fh.write("")
            return
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def train(cfg: TrainConfig) -> Trainer:
    trainer = Trainer(cfg)
    trainer.train()
    return trainer
