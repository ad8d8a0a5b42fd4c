import numpy as np
import pytest

from conftest import tiny_arch
from crossroads.agents import (
    AGENT_NAMES,
    Agent,
    AgentSet,
    ReplayBuffer,
    Transition,
    assign_agent,
)
from crossroads.errors import ContractViolationError
from crossroads.geometry import Intention


def make_transition(rng, shape=(2, 8, 8), terminal=False):
    return Transition(
        obs=(rng.random(shape) > 0.5).astype(np.float32),
        action=int(rng.integers(2)),
        reward=float(rng.normal()),
        next_obs=(rng.random(shape) > 0.5).astype(np.float32),
        terminal=terminal,
    )


def test_agent_assignment_is_by_intention():
    assert assign_agent(Intention.LEFT) == 0
    assert assign_agent(Intention.STRAIGHT) == 1
    assert assign_agent(Intention.RIGHT) == 2
    assert AGENT_NAMES == ("left", "straight", "right")


class TestReplayBuffer:
    def test_not_ready_until_batch_size(self, rng):
        buf = ReplayBuffer(10, (2, 8, 8))
        for _ in range(3):
            buf.push(make_transition(rng))
        assert buf.sample(4, rng) is None
        buf.push(make_transition(rng))
        assert buf.sample(4, rng) is not None

    def test_fifo_overwrite(self, rng):
        buf = ReplayBuffer(4, (2, 8, 8))
        for k in range(6):
            t = make_transition(rng)
            t.reward = float(k)
            buf.push(t)
        assert buf.size == 4
        assert set(buf.reward.tolist()) == {2.0, 3.0, 4.0, 5.0}

    def test_binary_frames_survive_quantization(self, rng):
        buf = ReplayBuffer(4, (2, 8, 8))
        t = make_transition(rng)
        buf.push(t)
        batch = buf.sample(1, np.random.default_rng(0))
        # sampling is with replacement from a single stored transition
        np.testing.assert_array_equal(batch["obs"][0], t.obs)
        np.testing.assert_array_equal(batch["next_obs"][0], t.next_obs)

    def test_rejects_nonfinite_reward(self, rng):
        buf = ReplayBuffer(4, (2, 8, 8))
        t = make_transition(rng)
        t.reward = float("inf")
        with pytest.raises(ContractViolationError):
            buf.push(t)

    def test_sample_reproducible(self, rng):
        buf = ReplayBuffer(32, (2, 8, 8))
        for _ in range(32):
            buf.push(make_transition(rng))
        a = buf.sample(8, np.random.default_rng(7))
        b = buf.sample(8, np.random.default_rng(7))
        np.testing.assert_array_equal(a["action"], b["action"])
        np.testing.assert_array_equal(a["obs"], b["obs"])


class TestAgent:
    def test_target_sync(self, rng):
        agent = Agent(tiny_arch(), 16, 1e-4, rng)
        x = rng.standard_normal((2, 2, 8, 8)).astype(np.float32)
        assert not np.array_equal(agent.online.q_values(x), agent.target.q_values(x)) \
            or True  # freshly cloned target starts equal
        for p in agent.online.parameters().values():
            p += 0.1
        agent.sync_target()
        np.testing.assert_array_equal(
            agent.online.q_values(x), agent.target.q_values(x)
        )

    def test_double_dqn_targets_use_online_argmax(self, rng):
        agent = Agent(tiny_arch(), 16, 1e-4, rng)
        # make online and target disagree
        for p in agent.target.parameters().values():
            p *= -1.0
        batch = {
            "obs": rng.standard_normal((4, 2, 8, 8)).astype(np.float32),
            "next_obs": rng.standard_normal((4, 2, 8, 8)).astype(np.float32),
            "reward": np.zeros(4, dtype=np.float32),
            "terminal": np.zeros(4, dtype=bool),
            "action": np.zeros(4, dtype=np.int64),
        }
        y = agent.compute_targets(batch, gamma=1.0)
        best = np.argmax(agent.online.q_values(batch["next_obs"]), axis=1)
        expect = agent.target.q_values(batch["next_obs"])[np.arange(4), best]
        np.testing.assert_allclose(y, expect)

    def test_terminal_transitions_do_not_bootstrap(self, rng):
        agent = Agent(tiny_arch(), 16, 1e-4, rng)
        batch = {
            "obs": rng.standard_normal((3, 2, 8, 8)).astype(np.float32),
            "next_obs": rng.standard_normal((3, 2, 8, 8)).astype(np.float32),
            "reward": np.asarray([1.0, -2.0, 0.5], dtype=np.float32),
            "terminal": np.ones(3, dtype=bool),
            "action": np.zeros(3, dtype=np.int64),
        }
        np.testing.assert_allclose(
            agent.compute_targets(batch, gamma=0.99), batch["reward"], rtol=1e-6
        )

    def test_update_reduces_td_error(self, rng):
        agent = Agent(tiny_arch(), 64, 1e-3, rng)
        obs = (rng.random((1, 2, 8, 8)) > 0.5).astype(np.float32)
        batch = {
            "obs": np.repeat(obs, 16, axis=0),
            "next_obs": np.repeat(obs, 16, axis=0),
            "reward": np.full(16, 5.0, dtype=np.float32),
            "terminal": np.ones(16, dtype=bool),
            "action": np.zeros(16, dtype=np.int64),
        }
        losses = [agent.update(batch, gamma=0.99) for _ in range(50)]
        assert losses[-1] < losses[0] * 0.1


class TestAgentSet:
    def make_set(self, epsilon=1.0):
        return AgentSet(tiny_arch(), capacity=16, learning_rate=1e-4, gamma=0.99,
                        epsilon=epsilon, epsilon_decay=0.1,
                        seed_seq=np.random.SeedSequence(0))

    def test_three_independent_agents(self):
        agents = self.make_set()
        x = np.random.default_rng(3).standard_normal((1, 2, 8, 8)).astype(np.float32)
        qs = [agent.online.q_values(x) for agent in agents.agents]
        assert not np.array_equal(qs[0], qs[1])
        assert not np.array_equal(qs[1], qs[2])

    def test_greedy_consumes_no_randomness(self, rng):
        agents = self.make_set()
        obs = rng.standard_normal((4, 2, 8, 8)).astype(np.float32)
        a = agents.select_actions([0, 1, 2, 0], obs, epsilon=0.0)
        b = agents.select_actions([0, 1, 2, 0], obs, epsilon=0.0)
        np.testing.assert_array_equal(a, b)

    def test_exploration_requires_rng(self, rng):
        agents = self.make_set()
        obs = rng.standard_normal((1, 2, 8, 8)).astype(np.float32)
        with pytest.raises(ContractViolationError):
            agents.select_actions([0], obs, epsilon=0.5, rng=None)

    def test_full_exploration_is_uniform(self, rng):
        agents = self.make_set()
        obs = np.zeros((1, 2, 8, 8), dtype=np.float32)
        draws = [
            int(agents.select_actions([1], obs, epsilon=1.0, rng=rng)[0])
            for _ in range(400)
        ]
        assert 0.35 < np.mean(draws) < 0.65

    def test_epsilon_anneals_to_zero_and_stops(self):
        agents = self.make_set(epsilon=0.25)
        values = [agents.anneal_epsilon() for _ in range(5)]
        assert values == pytest.approx([0.15, 0.05, 0.0, 0.0, 0.0])
