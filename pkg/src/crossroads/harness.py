"""Evaluation harness: arrival generation, episode runners, benchmarks.

A benchmark run for one method and one seed is the 81-scenario suite plus a
continuous-flow run (Poisson arrivals, default 600 veh/hour for 600 s).
Per-seed aggregates are averaged into an :class:`EvaluationReport`.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .agents import AgentSet, assign_agent
from .baselines import (
    MIN_GAP,
    PLANS,
    ActuatedController,
    CarFollowingController,
    detector_hits,
    fttl_state_at,
    random_policy,
)
from .config import TrainConfig
from .errors import ValidationError
from .geometry import Approach, Intention
from .metrics import (
    EvaluationReport,
    MetricsTracker,
    SeedAggregate,
    aggregate_seed,
    build_report,
)
from .nn import load_network
from .observation import FrameStack, RenderConfig, Renderer
from .world import (
    MAX_SPEED,
    VEHICLE_LENGTH,
    ScenarioSpec,
    TrajectoryRecorder,
    WorldState,
    spawn_scenario,
)

FLOW_RATE = 600.0        # vehicles/hour, total over the four approaches
FLOW_HORIZON = 600.0     # seconds
SPAWN_HEADWAY = VEHICLE_LENGTH + MIN_GAP + 3.0  # clear meters needed to spawn


@dataclass(frozen=True)
class Arrival:
    time: float
    approach: Approach
    intention: Intention


def generate_arrivals(flow_rate: float, horizon: float,
                      rng: np.random.Generator) -> list[Arrival]:
    """Poisson arrivals per approach, uniform over the three intentions."""
    if flow_rate < 0:
        raise ValidationError("flow rate must be nonnegative")
    per_approach = flow_rate / 4.0 / 3600.0  # veh/s
    arrivals = []
    for approach in Approach:
        t = 0.0
        while per_approach > 0:
            t += rng.exponential(1.0 / per_approach)
            if t >= horizon:
                break
            intention = Intention(rng.integers(3))
            arrivals.append(Arrival(t, approach, intention))
    arrivals.sort(key=lambda a: (a.time, a.approach))
    return arrivals


# -- policies --------------------------------------------------------------

class Policy:
    """Produces one speed command per active vehicle each tick."""

    deterministic = False  # a frozen world implies a frozen episode

    def reset(self, world: WorldState) -> None:
        pass

    def commands(self, world: WorldState) -> dict[int, float]:
        raise NotImplementedError


class RandomPolicy(Policy):
    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def commands(self, world: WorldState) -> dict[int, float]:
        return {int(v): random_policy(None, self.rng) for v in world.active_ids()}


class SignalPolicy(Policy):
    """Fixed-time or actuated signal plus the car-following rule.

    Not flagged deterministic for stall-break purposes: a world frozen under a
    signal plan is not a frozen episode, because the signal itself advances and
    will eventually release the queue.
    """

    def __init__(self, plan_name: str):
        if plan_name not in PLANS:
            raise ValidationError(
                f"unknown signal plan {plan_name!r} (choose from {sorted(PLANS)})"
            )
        self.plan = PLANS[plan_name]
        self.driver: CarFollowingController | None = None
        self.controller: ActuatedController | None = None

    def reset(self, world: WorldState) -> None:
        self.driver = CarFollowingController(world)
        self.controller = ActuatedController(self.plan) if self.plan.actuated else None

    def commands(self, world: WorldState) -> dict[int, float]:
        if self.controller is not None:
            signal = self.controller.step(detector_hits(world), world.dt)
        else:
            signal = fttl_state_at(self.plan, world.time)
        return self.driver.commands(signal)


class AgentPolicy(Policy):
    """Greedy trained agents; tracks per-decision inference latency."""

    deterministic = True

    def __init__(self, agents: AgentSet, cfg: TrainConfig):
        self.agents = agents
        self.frame_stack = cfg.frame_stack
        self.renderer = Renderer(RenderConfig(cfg.resolution, cfg.view_extent))
        self.stacks: dict[int, FrameStack] = {}
        self.decision_seconds = 0.0
        self.decisions = 0

    def reset(self, world: WorldState) -> None:
        self.stacks = {}

    def commands(self, world: WorldState) -> dict[int, float]:
        ids = [int(v) for v in world.active_ids()]
        for vid in ids:
            frame = self.renderer.render(world, vid)
            if vid in self.stacks:
                self.stacks[vid].push(frame)
            else:
                self.stacks[vid] = FrameStack(self.frame_stack, frame)
        if not ids:
            return {}
        obs = np.stack([self.stacks[vid].as_tensor() for vid in ids])
        intents = [assign_agent(world.route_of(vid)[1]) for vid in ids]
        t0 = time.perf_counter()
        actions = self.agents.select_actions(intents, obs, 0.0)
        self.decision_seconds += time.perf_counter() - t0
        self.decisions += len(ids)
        return {vid: MAX_SPEED if a == 1 else 0.0 for vid, a in zip(ids, actions)}

    @property
    def latency_ms(self) -> float:
        if not self.decisions:
            return 0.0
        return 1000.0 * self.decision_seconds / self.decisions


# -- runners ---------------------------------------------------------------

@dataclass
class RunResult:
    tracker: MetricsTracker
    steps: int

    @property
    def records(self):
        return self.tracker.records


def run_scenario_episode(policy: Policy, spec: ScenarioSpec, max_steps: int = 1000,
                         stall_steps: int = 50,
                         recorder: TrajectoryRecorder | None = None) -> RunResult:
    world = spawn_scenario(spec)
    policy.reset(world)
    tracker = MetricsTracker(world.dt)
    spawned = 0
    stall = 0
    steps = 0
    while steps < max_steps:
        world.release_pending()
        for vid in range(spawned, world.num_spawned):
            tracker.on_spawn(vid)
        spawned = world.num_spawned
        if world.num_active == 0:
            break
        result = world.step(policy.commands(world))
        steps += 1
        moved = False
        for vid in result.ids:
            moved = moved or result.delta_s[vid] > 1e-12
            tracker.on_step(vid, float(world.speed[vid]), result.delta_s[vid],
                            vid in result.collided, vid in result.completed)
        if recorder is not None:
            recorder.record(world)
        if policy.deterministic:
            stall = 0 if moved else stall + 1
            if stall >= stall_steps:
                break
    tracker.finish()
    return RunResult(tracker, steps)


def scenario_suite() -> list[ScenarioSpec]:
    """Every four-vehicle intention assignment, one vehicle per approach."""
    return [ScenarioSpec.four_way(combo)
            for combo in itertools.product(Intention, repeat=4)]


def run_flow(policy: Policy, arrivals: list[Arrival],
             horizon: float = FLOW_HORIZON,
             recorder: TrajectoryRecorder | None = None) -> RunResult:
    """Continuous-flow run; queued vehicles enter when their lane is clear."""
    world = WorldState()
    policy.reset(world)
    tracker = MetricsTracker(world.dt)
    queues: dict[Approach, list[Arrival]] = {a: [] for a in Approach}
    pending = sorted(arrivals, key=lambda a: (a.time, a.approach))
    steps = 0
    total_steps = int(round(horizon / world.dt))
    while steps < total_steps:
        now = world.time
        while pending and pending[0].time <= now + 1e-9:
            arrival = pending.pop(0)
            queues[arrival.approach].append(arrival)
        for approach, queue in queues.items():
            if queue and _lane_clear(world, approach):
                arrival = queue.pop(0)
                vid = world.spawn_vehicle(approach, arrival.intention)
                tracker.on_spawn(vid)
        if world.num_active == 0 and not pending and not any(queues.values()):
            break
        result = world.step(policy.commands(world))
        steps += 1
        for vid in result.ids:
            tracker.on_step(vid, float(world.speed[vid]), result.delta_s[vid],
                            vid in result.collided, vid in result.completed)
        if recorder is not None:
            recorder.record(world)
    tracker.finish()
    return RunResult(tracker, steps)


def _lane_clear(world: WorldState, approach: Approach) -> bool:
    for vid in world.active_ids():
        if world.route_of(int(vid))[0] is approach and world.s[vid] < SPAWN_HEADWAY:
            return False
    return True


# -- benchmark assembly ----------------------------------------------------

BASELINE_METHODS = ("random",) + tuple(sorted(PLANS))


def make_policy(method: str, seed: int,
                checkpoints: dict[str, str] | None = None,
                cfg: TrainConfig | None = None) -> Policy:
    """One policy instance for (method, seed); see BASELINE_METHODS and "agents"."""
    if method == "random":
        return RandomPolicy(np.random.default_rng(np.random.SeedSequence((seed, 91))))
    if method in PLANS:
        return SignalPolicy(method)
    if method == "agents":
        if not checkpoints or cfg is None:
            raise ValidationError("agent policy needs checkpoints and a config")
        return load_agent_policy(checkpoints, cfg)
    raise ValidationError(f"unknown method {method!r}")


def load_agent_policy(checkpoints: dict[str, str], cfg: TrainConfig) -> AgentPolicy:
    """checkpoints maps agent name (left/straight/right) to a checkpoint path."""
    missing = [n for n in ("left", "straight", "right") if n not in checkpoints]
    if missing:
        raise ValidationError(f"missing checkpoints for agents: {missing}")
    networks = {name: load_network(path) for name, path in checkpoints.items()}
    arch = networks["left"].arch
    agents = AgentSet(arch, capacity=1, learning_rate=cfg.learning_rate,
                      gamma=cfg.gamma, epsilon=0.0, epsilon_decay=0.0,
                      seed_seq=np.random.SeedSequence(0))
    for name, agent in zip(("left", "straight", "right"), agents.agents):
        agent.online.load_parameters(networks[name].parameters())
        agent.sync_target()
    return AgentPolicy(agents, cfg)


def run_seed(method: str, seed: int, flow_rate: float = FLOW_RATE,
             horizon: float = FLOW_HORIZON,
             checkpoints: dict[str, str] | None = None,
             cfg: TrainConfig | None = None,
             include_suite: bool = True) -> tuple[SeedAggregate, SeedAggregate | None, Policy]:
    """Continuous-flow run (headline metrics) plus the 81-scenario suite."""
    policy = make_policy(method, seed, checkpoints, cfg)
    suite_agg = None
    if include_suite:
        records = []
        for spec in scenario_suite():
            records.extend(run_scenario_episode(policy, spec).records)
        suite_agg = aggregate_seed(seed, records)
    arrivals = generate_arrivals(
        flow_rate, horizon, np.random.default_rng(np.random.SeedSequence((seed, 17)))
    )
    flow_agg = aggregate_seed(seed, run_flow(policy, arrivals, horizon).records)
    return flow_agg, suite_agg, policy


def run_benchmark(method: str, seeds: list[int], flow_rate: float = FLOW_RATE,
                  horizon: float = FLOW_HORIZON,
                  checkpoints_by_seed: dict[int, dict[str, str]] | None = None,
                  cfg: TrainConfig | None = None,
                  include_suite: bool = True) -> EvaluationReport:
    """Benchmark one method over several seeds.

    Headline metrics come from the continuous-flow runs; the scenario-suite
    aggregates are reported under ``extra["suite"]``.
    """
    if method == "agents":
        absent = [s for s in seeds
                  if not checkpoints_by_seed or s not in checkpoints_by_seed]
        if absent:
            raise ValidationError(f"no checkpoints for seeds: {absent}")
    per_seed = []
    suite_rows = []
    latencies = []
    for seed in seeds:
        ckpt = checkpoints_by_seed.get(seed) if checkpoints_by_seed else None
        flow_agg, suite_agg, policy = run_seed(
            method, seed, flow_rate, horizon, ckpt, cfg, include_suite
        )
        per_seed.append(flow_agg)
        if suite_agg is not None:
            suite_rows.append(vars(suite_agg))
        if isinstance(policy, AgentPolicy):
            latencies.append(policy.latency_ms)
    latency = float(np.mean(latencies)) if latencies else 0.0
    extra = {"flow_rate": flow_rate, "horizon": horizon}
    if suite_rows:
        extra["suite"] = suite_rows
    return build_report(method, per_seed, latency_ms=latency,
                        config_hash=cfg.config_hash() if cfg else "",
                        extra=extra)


# -- micro-benchmarks ------------------------------------------------------

def benchmark_world(n_vehicles: int = 8, n_steps: int = 5000) -> float:
    """World steps per second with ``n_vehicles`` kept active (no learning).

    Vehicles hold a modest speed so following waves never catch the wave
    ahead; finished vehicles are replaced on their approach to keep the
    population constant.
    """
    world = WorldState()
    routes = [(a, i) for a in Approach
              for i in (Intention.STRAIGHT, Intention.LEFT)][:n_vehicles]
    next_route = 0

    def top_up():
        nonlocal next_route
        while world.num_active < n_vehicles:
            approach, intention = routes[next_route % len(routes)]
            next_route += 1
            if not _lane_clear(world, approach):
                break
            world.spawn_vehicle(approach, intention)

    top_up()
    t0 = time.perf_counter()
    for step in range(n_steps):
        world.step({int(v): 10.0 for v in world.active_ids()})
        top_up()
    elapsed = time.perf_counter() - t0
    return n_steps / elapsed if elapsed > 0 else float("inf")


def measure_decision_latency(resolution: int = 48, frame_stack: int = 3,
                             batch: int = 1, repeats: int = 50) -> float:
    """Milliseconds per greedy forward pass at the given input size."""
    from .nn import DuelingQNetwork, standard_architecture

    arch = standard_architecture(resolution, 3 * frame_stack)
    net = DuelingQNetwork(arch, np.random.default_rng(0))
    x = np.zeros((batch, 3 * frame_stack, resolution, resolution), dtype=np.float32)
    net.q_values(x)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        net.q_values(x)
    return 1000.0 * (time.perf_counter() - t0) / repeats
