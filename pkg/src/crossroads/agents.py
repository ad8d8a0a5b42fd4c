"""Per-intention learning agents.

Three dueling double-DQN agents, one per turning intention (left, straight,
right).  All vehicles with the same intention share one agent: its network
parameters and its replay buffer.  Exploration uses a single linearly
annealed epsilon shared by the three agents.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError
from .geometry import Intention
from .nn import DuelingQNetwork, RMSprop

N_AGENTS = 3
AGENT_NAMES = ("left", "straight", "right")


def assign_agent(intention: Intention) -> int:
    """Left -> 0, Straight -> 1, Right -> 2; fixed for the vehicle's lifetime."""
    return int(intention)


@dataclass
class Transition:
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Ring buffer with FIFO overwrite; observations stored quantized to uint8.

    Frames are semantic masks with values in [0, 1]; the 1/255 quantization is
    lossless for the binary values the renderer produces.
    """

    def __init__(self, capacity: int, obs_shape: tuple[int, ...]):
        self.capacity = capacity
        self.size = 0
        self.cursor = 0
        self.obs = np.zeros((capacity, *obs_shape), dtype=np.uint8)
        self.next_obs = np.zeros((capacity, *obs_shape), dtype=np.uint8)
        self.action = np.zeros(capacity, dtype=np.uint8)
        self.reward = np.zeros(capacity, dtype=np.float32)
        self.terminal = np.zeros(capacity, dtype=bool)

    def push(self, t: Transition) -> None:
        if not np.isfinite(t.reward):
            raise ContractViolationError("non-finite reward")
        i = self.cursor
        np.multiply(t.obs, 255.0, out=self._scratch(t.obs))
        self.obs[i] = self._scratch(t.obs)
        np.multiply(t.next_obs, 255.0, out=self._scratch(t.next_obs))
        self.next_obs[i] = self._scratch(t.next_obs)
        self.action[i] = t.action
        self.reward[i] = t.reward
        self.terminal[i] = t.terminal
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _scratch(self, like: np.ndarray) -> np.ndarray:
        if not hasattr(self, "_scratch_buf") or self._scratch_buf.shape != like.shape:
            self._scratch_buf = np.empty(like.shape, dtype=np.float32)
        return self._scratch_buf

    def ready(self, batch_size: int) -> bool:
        return self.size >= batch_size

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Uniform with replacement; None when fewer than batch_size stored."""
        if not self.ready(batch_size):
            return None
        idx = rng.integers(0, self.size, size=batch_size)
        scale = np.float32(1.0 / 255.0)
        return {
            "obs": self.obs[idx].astype(np.float32) * scale,
            "action": self.action[idx].astype(np.int64),
            "reward": self.reward[idx].copy(),
            "next_obs": self.next_obs[idx].astype(np.float32) * scale,
            "terminal": self.terminal[idx].copy(),
        }


class Agent:
    """One intention's online/target networks, buffer, and optimizer."""

    def __init__(self, arch: dict, capacity: int, learning_rate: float,
                 rng: np.random.Generator, dtype=np.float32):
        self.online = DuelingQNetwork(arch, rng, dtype)
        self.target = self.online.clone()
        self.buffer = ReplayBuffer(capacity, tuple(arch["input_shape"]))
        self.optimizer = RMSprop(self.online.parameters(), learning_rate)

    def sync_target(self) -> None:
        self.target.load_parameters(self.online.parameters())

    def greedy_actions(self, obs_batch: np.ndarray) -> np.ndarray:
        q = self.online.q_values(obs_batch)
        return np.argmax(q, axis=1)  # argmax breaks ties towards index 0

    def compute_targets(self, batch: dict, gamma: float) -> np.ndarray:
        """Double-DQN targets: online net picks a', target net evaluates it."""
        q_online_next = self.online.q_values(batch["next_obs"])
        q_target_next = self.target.q_values(batch["next_obs"])
        best = np.argmax(q_online_next, axis=1)
        bootstrap = q_target_next[np.arange(len(best)), best]
        y = batch["reward"].astype(np.float64) + gamma * bootstrap * (~batch["terminal"])
        return y

    def update(self, batch: dict, gamma: float) -> float:
        targets = self.compute_targets(batch, gamma)
        q, _, _ = self.online.forward(batch["obs"])
        loss = self.online.backward_mse(batch["action"], targets, q)
        self.optimizer.step(self.online.parameters(), self.online.gradients())
        return loss


class AgentSet:
    """The three intention agents plus the shared exploration schedule."""

    def __init__(self, arch: dict, capacity: int, learning_rate: float,
                 gamma: float, epsilon: float, epsilon_decay: float,
                 seed_seq: np.random.SeedSequence, dtype=np.float32):
        children = seed_seq.spawn(N_AGENTS)
        self.agents = [
            Agent(arch, capacity, learning_rate, np.random.default_rng(s), dtype)
            for s in children
        ]
        self.arch = arch
        self.gamma = gamma
        self.epsilon = epsilon
        self.epsilon_decay = epsilon_decay

    def __getitem__(self, i: int) -> Agent:
        return self.agents[i]

    @property
    def n_actions(self) -> int:
        return self.arch["n_actions"]

    def select_actions(self, agent_idx: list[int], obs: np.ndarray,
                       epsilon: float, rng: np.random.Generator | None = None) -> np.ndarray:
        """Epsilon-greedy for a batch of vehicles (possibly mixed agents).

        The exploration draws happen in vehicle order so runs are reproducible;
        a purely greedy call (epsilon 0) consumes no random numbers.
        """
        n = len(agent_idx)
        actions = np.empty(n, dtype=np.int64)
        idx = np.asarray(agent_idx)
        for a in range(N_AGENTS):
            members = np.nonzero(idx == a)[0]
            if len(members):
                actions[members] = self.agents[a].greedy_actions(obs[members])
        if epsilon > 0.0:
            if rng is None:
                raise ContractViolationError("exploration requires an rng")
            for k in range(n):
                if rng.random() < epsilon:
                    actions[k] = rng.integers(self.n_actions)
        return actions

    def anneal_epsilon(self) -> float:
        self.epsilon = max(0.0, self.epsilon - self.epsilon_decay)
        return self.epsilon

    def sync_targets(self) -> None:
        for agent in self.agents:
            agent.sync_target()
