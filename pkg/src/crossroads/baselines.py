"""Reference controllers: traffic signals, random policy, and car following.

The signal baselines pair the approaches into two symmetric groups (N/S and
E/W) under a two-phase plan.  Vehicles under signal control follow a simple
rule set: drive at 15 m/s, keep a safe gap behind leaders, stop at the line
on red (or on yellow when braking in time is still possible), and yield
inside the intersection to conflicting traffic that entered first.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import InfeasibleDemandError, ValidationError
from .geometry import Approach, Route
from .world import ACCEL_LIMIT, DECEL_LIMIT, MAX_SPEED, VEHICLE_LENGTH, WorldState


class Phase(enum.Enum):
    GREEN = "green"
    YELLOW = "yellow"
    RED = "red"


class Group(enum.IntEnum):
    NS = 0
    EW = 1


GROUP_OF = {
    Approach.N: Group.NS, Approach.S: Group.NS,
    Approach.E: Group.EW, Approach.W: Group.EW,
}

GAP_THRESHOLD = 3.0       # seconds without a detection that ends a green
DETECTOR_DISTANCE = 30.0  # meters upstream of the stop line


@dataclass(frozen=True)
class SignalPlan:
    name: str
    green: float
    yellow: float
    min_duration: float | None = None
    max_duration: float | None = None

    @property
    def actuated(self) -> bool:
        return self.min_duration is not None

    @property
    def period(self) -> float:
        """Full cycle of the fixed-time schedule."""
        return 2.0 * (self.green + self.yellow)


PLANS: dict[str, SignalPlan] = {
    "fttl1": SignalPlan("fttl1", 25.0, 5.0),
    "fttl2": SignalPlan("fttl2", 32.0, 8.0),
    "fttlopt": SignalPlan("fttlopt", 15.0, 2.0),
    "atl1": SignalPlan("atl1", 25.0, 5.0, min_duration=10.0, max_duration=40.0),
    "atl2": SignalPlan("atl2", 32.0, 8.0, min_duration=15.0, max_duration=50.0),
}


@dataclass(frozen=True)
class SignalState:
    active_group: Group
    phase: Phase          # phase of the active group; the other group is red
    phase_elapsed: float

    def for_approach(self, approach: Approach) -> Phase:
        if GROUP_OF[approach] is self.active_group:
            return self.phase
        return Phase.RED


def fttl_state_at(plan: SignalPlan, t: float) -> SignalState:
    """Periodic fixed-time schedule; N/S goes first within each cycle."""
    if t < 0:
        raise ValidationError("signal time must be nonnegative")
    u = t % plan.period
    half = plan.green + plan.yellow
    group = Group.NS if u < half else Group.EW
    u -= half * group
    if u < plan.green:
        return SignalState(group, Phase.GREEN, u)
    return SignalState(group, Phase.YELLOW, u - plan.green)


class ActuatedController:
    """Gap-out actuated signal: green ends after ``min_duration`` once the
    active approaches have gone ``GAP_THRESHOLD`` seconds without a detection,
    or at ``max_duration`` regardless."""

    def __init__(self, plan: SignalPlan):
        if not plan.actuated:
            raise ValidationError(f"plan {plan.name!r} has no actuation bounds")
        self.plan = plan
        self.state = SignalState(Group.NS, Phase.GREEN, 0.0)
        self._since_detection = 0.0

    def step(self, detections: dict[Approach, bool], dt: float) -> SignalState:
        plan, state = self.plan, self.state
        active = any(
            detections.get(a, False)
            for a in Approach if GROUP_OF[a] is state.active_group
        )
        self._since_detection = 0.0 if active else self._since_detection + dt
        elapsed = state.phase_elapsed + dt

        if state.phase is Phase.GREEN:
            gap_out = elapsed >= plan.min_duration and \
                self._since_detection >= GAP_THRESHOLD
            if elapsed >= plan.max_duration - 1e-9 or gap_out:
                self.state = SignalState(state.active_group, Phase.YELLOW, 0.0)
            else:
                self.state = replace(state, phase_elapsed=elapsed)
        else:  # yellow
            if elapsed >= plan.yellow - 1e-9:
                other = Group.EW if state.active_group is Group.NS else Group.NS
                self.state = SignalState(other, Phase.GREEN, 0.0)
                self._since_detection = 0.0
            else:
                self.state = replace(state, phase_elapsed=elapsed)
        return self.state


def detector_hits(world: WorldState) -> dict[Approach, bool]:
    """Per-approach presence on the loop detector upstream of the stop line."""
    stop = world.geometry.stop_line_s
    hits = {a: False for a in Approach}
    for vid in world.active_ids():
        approach, _ = world.route_of(int(vid))
        s = float(world.s[vid])
        if stop - DETECTOR_DISTANCE <= s < stop:
            hits[approach] = True
    return hits


def webster_cycle(flows, lost_time: float) -> float:
    """Optimal cycle length C0 = (1.5 L + 5) / (1 - Y), Y = sum of flow ratios."""
    y = float(np.sum(flows))
    if y >= 1.0:
        raise InfeasibleDemandError(f"total flow ratio {y} >= 1")
    return (1.5 * lost_time + 5.0) / (1.0 - y)


def random_policy(obs, rng: np.random.Generator) -> float:
    """Uniform over the two speed commands; ignores the observation."""
    return MAX_SPEED if rng.integers(2) else 0.0


# -- car following under signal control -----------------------------------

MIN_GAP = 2.5            # meters, standstill distance to a leader
TIME_HEADWAY = 1.0       # seconds
STOP_LINE_SETBACK = 0.5  # meters, vehicle front stops this short of the line
BRAKE_MARGIN = 0.3       # meters of slack in the stop-or-go decision
ZONE_CLEARANCE = VEHICLE_LENGTH  # extra arc length before a conflict is "cleared"
MERGE_CLEARANCE = 15.0   # meters past a merge mouth before the lane is shareable


def braking_distance(speed: float, dt: float) -> float:
    """Worst-case distance covered before a full stop from ``speed``."""
    return speed * dt + speed * speed / (2.0 * DECEL_LIMIT)


def stop_or_go(s: float, speed: float, stop_target: float, dt: float) -> float:
    """Binary speed command that halts the vehicle center by ``stop_target``.

    Commands full speed only if braking would still stop the vehicle in time
    after one more tick of acceleration; this lookahead keeps the go/stop
    boundary from dithering the vehicle past the target.
    """
    v1 = min(speed + ACCEL_LIMIT * dt, MAX_SPEED)
    s1 = s + 0.5 * (speed + v1) * dt
    if stop_target - s1 <= braking_distance(v1, dt) + BRAKE_MARGIN:
        return 0.0
    return MAX_SPEED


class CarFollowingController:
    """Computes speed commands for every vehicle under a signal state.

    Vehicles are processed in spawn order each tick; a vehicle about to enter
    the intersection claims its crossing-conflict zones so that later (newer)
    vehicles yield, which is first-come-first-served at the stop line.
    """

    def __init__(self, world: WorldState):
        self.world = world
        self.geometry = world.geometry
        self.conflicts = self.geometry.conflicts
        self.stop_line = self.geometry.stop_line_s
        # ids approved to enter the box; approval is permanent so a vehicle is
        # never asked to stop after passing its point of no return
        self._approved: set[int] = set()

    def _entry_point(self) -> float:
        return self.stop_line - VEHICLE_LENGTH / 2.0 - STOP_LINE_SETBACK

    def commands(self, signal: SignalState) -> dict[int, float]:
        world = self.world
        ids = [int(v) for v in world.active_ids()]
        routes = {vid: world.route_of(vid) for vid in ids}
        entry = self._entry_point()
        self._approved &= {
            vid for vid in ids
            if self._in_conflict_span(routes[vid], float(world.s[vid]))
            or world.s[vid] <= entry
        }
        # claimants block conflicting entries: vehicles inside the box that
        # have not cleared their crossing zones, plus approved entrants
        claims: list[tuple[int, Route, float]] = [
            (vid, routes[vid], float(world.s[vid]))
            for vid in ids
            if (world.s[vid] > entry or vid in self._approved)
            and self._in_conflict_span(routes[vid], float(world.s[vid]))
        ]
        out: dict[int, float] = {}
        for vid in ids:
            route, s, speed = routes[vid], float(world.s[vid]), float(world.speed[vid])
            stop_target = self._leader_target(vid, route, s, speed, ids, routes)

            if s <= entry and vid not in self._approved:
                if self._hold_at_line(route, s, speed, signal, claims):
                    stop_target = min(stop_target, entry)
                elif s > entry - braking_distance(speed, self.world.dt) \
                        - BRAKE_MARGIN - 2.0:
                    # close enough to commit: claim the box now so vehicles
                    # processed later this tick (and afterwards) yield
                    self._approved.add(vid)
                    claims.append((vid, route, s))
            out[vid] = stop_or_go(s, speed, stop_target, world.dt)
        return out

    # -- pieces ------------------------------------------------------------

    def _leader_target(self, vid: int, route: Route, s: float, speed: float,
                       ids, routes) -> float:
        """Nearest arc-length at which a leading vehicle forces a stop."""
        target = float("inf")
        gap = VEHICLE_LENGTH + max(MIN_GAP, TIME_HEADWAY * speed)
        for other in ids:
            if other == vid:
                continue
            o_s = float(self.world.s[other])
            o_route = routes[other]
            if o_route == route:
                if o_s > s:
                    target = min(target, o_s - gap)
                continue
            for zone in self.conflicts[(route, o_route)]:
                if not zone.longitudinal:
                    continue
                projected = o_s + zone.offset
                if projected > s and zone.s_b0 - 5.0 <= o_s <= zone.s_b1 + 5.0 \
                        and s >= zone.s_a0 - 40.0:
                    target = min(target, projected - gap)
        return target

    def _hold_at_line(self, route: Route, s: float, speed: float,
                      signal: SignalState, claims) -> bool:
        phase = signal.for_approach(route[0])
        entry = self._entry_point()
        if phase is Phase.RED:
            return True
        if phase is Phase.YELLOW and \
                entry - s > braking_distance(speed, self.world.dt):
            return True  # yellow: stop unless braking in time is impossible
        # green (or unstoppable yellow): still yield to conflicting traffic
        # already inside, or already approved to enter, the intersection
        for _, o_route, o_s in claims:
            if o_route == route:
                continue
            for zone in self.conflicts[(route, o_route)]:
                lim_a, lim_b = _zone_limits(route, o_route, zone)
                if lim_a is not None and s < lim_a and o_s < lim_b:
                    return True
        return False

    def _in_conflict_span(self, route: Route, s: float) -> bool:
        """Whether the vehicle still claims any conflict zone on its route."""
        for (ra, rb), zones in self.conflicts.items():
            if ra != route:
                continue
            for zone in zones:
                lim_a, _ = _zone_limits(route, rb, zone)
                if lim_a is not None and s < lim_a:
                    return True
        return False


def _zone_limits(route: Route, other: Route, zone) -> tuple[float | None, float | None]:
    """Arc-length limits past which a conflict zone no longer binds.

    Crossing zones bind until both vehicles have passed the zone end.
    Shared-exit merges between different approaches bind until past the
    merge mouth; after that ordinary headway keeping suffices.  Shared
    approach segments (same entry road) never enter the claim logic.
    """
    if not zone.longitudinal:
        return zone.s_a1 + ZONE_CLEARANCE, zone.s_b1 + ZONE_CLEARANCE
    if route[0] is not other[0]:
        return zone.s_a0 + MERGE_CLEARANCE, zone.s_b0 + MERGE_CLEARANCE
    return None, None


class SignalRunner:
    """Advances a world under one of the named signal plans."""

    def __init__(self, plan_name: str, world: WorldState):
        try:
            self.plan = PLANS[plan_name]
        except KeyError:
            raise ValidationError(
                f"unknown signal plan {plan_name!r} (choose from {sorted(PLANS)})"
            ) from None
        self.world = world
        self.driver = CarFollowingController(world)
        self.actuated = ActuatedController(self.plan) if self.plan.actuated else None

    @property
    def signal(self) -> SignalState:
        if self.actuated is not None:
            return self.actuated.state
        return fttl_state_at(self.plan, self.world.time)

    def step(self):
        """One tick: signal update, car-following commands, world step."""
        if self.actuated is not None:
            self.actuated.step(detector_hits(self.world), self.world.dt)
        commands = self.driver.commands(self.signal)
        return self.world.step(commands)
