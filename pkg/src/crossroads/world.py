"""Discrete-time microscopic simulation of the 4-way intersection.

Vehicles are path-bound: their state is an arc-length position and a speed
along one of the 12 route polylines.  A symmetric rate limiter tracks the
commanded speed, positions advance by trapezoidal integration, and collisions
are detected each step with an oriented-bounding-box overlap test.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kernels
from .errors import ContractViolationError, ValidationError
from .geometry import ALL_ROUTES, Approach, Intention, IntersectionGeometry, Route

DT = 0.1                 # seconds per simulation step
MAX_SPEED = 15.0         # m/s, also the "go" command
ACCEL_LIMIT = 2.6        # m/s^2
DECEL_LIMIT = 4.5        # m/s^2
VEHICLE_LENGTH = 4.5     # meters
VEHICLE_WIDTH = 1.8

ROUTE_INDEX: dict[Route, int] = {r: i for i, r in enumerate(ALL_ROUTES)}


@dataclass(frozen=True)
class ScenarioSpec:
    """Spawn configuration: (approach, intention, spawn_time seconds)."""

    spawns: tuple[tuple[Approach, Intention, float], ...]

    def validate(self) -> None:
        seen = set()
        for approach, intention, t in self.spawns:
            if t < 0:
                raise ValidationError(f"negative spawn time {t}")
            key = (approach, t)
            if key in seen:
                raise ValidationError(
                    f"two spawns share approach {approach.name} at t={t}"
                )
            seen.add(key)

    @staticmethod
    def four_way(intentions: tuple[Intention, Intention, Intention, Intention]) -> "ScenarioSpec":
        """The training scenario shape: one vehicle per approach at t=0."""
        return ScenarioSpec(
            tuple((a, intentions[a], 0.0) for a in Approach)
        )


@dataclass
class VehicleState:
    id: int
    route: Route
    s: float
    speed: float
    commanded_speed: float
    length: float = VEHICLE_LENGTH
    width: float = VEHICLE_WIDTH
    done: bool = False
    collided: bool = False


def step_vehicle(v: VehicleState, command: float, dt: float,
                 path_length: float) -> VehicleState:
    """Single-vehicle kinematics step (scalar version of the world update)."""
    if dt <= 0:
        raise ContractViolationError("dt must be positive")
    s_new, v_new, done = kernels.advance(
        np.asarray([v.s]), np.asarray([v.speed]), np.asarray([command]),
        np.asarray([path_length]), dt, ACCEL_LIMIT, DECEL_LIMIT,
    )
    return VehicleState(
        id=v.id, route=v.route, s=float(s_new[0]), speed=float(v_new[0]),
        commanded_speed=command, length=v.length, width=v.width,
        done=bool(done[0]), collided=v.collided,
    )


class _RouteTable:
    """Concatenated per-route polyline arrays in the layout the kernels expect."""

    def __init__(self, geometry: IntersectionGeometry):
        cum, px, py, tx, ty, offsets = [], [], [], [], [], [0]
        lengths = []
        for route in ALL_ROUTES:
            path = geometry.route_path(*route)
            n = len(path.points)
            cum.append(path.cum_s)
            px.append(path.points[:, 0])
            py.append(path.points[:, 1])
            # pad tangents to one per point so index spaces line up
            tx.append(np.concatenate([path.tangents[:, 0], path.tangents[-1:, 0]]))
            ty.append(np.concatenate([path.tangents[:, 1], path.tangents[-1:, 1]]))
            offsets.append(offsets[-1] + n)
            lengths.append(path.length)
        self.cum_s = np.ascontiguousarray(np.concatenate(cum))
        self.px = np.ascontiguousarray(np.concatenate(px))
        self.py = np.ascontiguousarray(np.concatenate(py))
        self.tx = np.ascontiguousarray(np.concatenate(tx))
        self.ty = np.ascontiguousarray(np.concatenate(ty))
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.lengths = np.asarray(lengths, dtype=np.float64)


@dataclass
class StepResult:
    """Per-step outputs needed for reward computation and logging."""

    ids: list[int]
    delta_s: dict[int, float]
    completed: set[int] = field(default_factory=set)
    collided: set[int] = field(default_factory=set)


class WorldState:
    """All vehicles plus the simulation clock.

    Internally array-of-fields for speed; ``vehicles`` materializes
    :class:`VehicleState` views for inspection.
    """

    def __init__(self, geometry: IntersectionGeometry | None = None, dt: float = DT):
        self.geometry = geometry or _default_geometry()
        self.dt = dt
        self.time_step_index = 0
        self.table = _route_table(self.geometry)
        self.collision_events: list[tuple[int, int, int]] = []
        self._cap = 16
        self._n = 0
        self.route_idx = np.zeros(self._cap, dtype=np.int32)
        self.s = np.zeros(self._cap)
        self.speed = np.zeros(self._cap)
        self.cmd = np.zeros(self._cap)
        self.done = np.zeros(self._cap, dtype=bool)
        self.collided = np.zeros(self._cap, dtype=bool)
        self.spawn_step = np.zeros(self._cap, dtype=np.int64)
        self._pending: list[tuple[float, Approach, Intention]] = []

    @property
    def time(self) -> float:
        return self.time_step_index * self.dt

    # -- vehicle management ----------------------------------------------

    def _grow(self) -> None:
        self._cap *= 2
        for name in ("route_idx", "s", "speed", "cmd", "done", "collided", "spawn_step"):
            arr = getattr(self, name)
            new = np.zeros(self._cap, dtype=arr.dtype)
            new[: self._n] = arr[: self._n]
            setattr(self, name, new)

    def spawn_vehicle(self, approach: Approach, intention: Intention) -> int:
        if self._n == self._cap:
            self._grow()
        i = self._n
        self._n += 1
        self.route_idx[i] = ROUTE_INDEX[(approach, intention)]
        self.s[i] = 0.0
        self.speed[i] = 0.0
        self.cmd[i] = 0.0
        self.done[i] = False
        self.collided[i] = False
        self.spawn_step[i] = self.time_step_index
        return i

    def active_ids(self) -> np.ndarray:
        return np.nonzero(~self.done[: self._n])[0]

    @property
    def num_active(self) -> int:
        return int(np.count_nonzero(~self.done[: self._n]))

    @property
    def num_spawned(self) -> int:
        return self._n

    def route_of(self, vid: int) -> Route:
        return ALL_ROUTES[self.route_idx[vid]]

    def path_length(self, vid: int) -> float:
        return float(self.table.lengths[self.route_idx[vid]])

    def vehicles(self) -> list[VehicleState]:
        return [self.vehicle(i) for i in range(self._n)]

    def vehicle(self, vid: int) -> VehicleState:
        return VehicleState(
            id=vid, route=self.route_of(vid), s=float(self.s[vid]),
            speed=float(self.speed[vid]), commanded_speed=float(self.cmd[vid]),
            done=bool(self.done[vid]), collided=bool(self.collided[vid]),
        )

    def poses(self, ids: np.ndarray):
        """(x, y, tx, ty) arrays for the given vehicle ids."""
        return kernels.poses(
            np.ascontiguousarray(self.route_idx[ids]),
            np.ascontiguousarray(self.s[ids]),
            self.table.cum_s, self.table.px, self.table.py,
            self.table.tx, self.table.ty, self.table.offsets,
        )

    # -- stepping ---------------------------------------------------------

    def step(self, commands: dict[int, float]) -> StepResult:
        """Advance one tick.  ``commands`` must cover every active vehicle."""
        ids = self.active_ids()
        cmd = np.empty(len(ids))
        for k, vid in enumerate(ids):
            try:
                cmd[k] = commands[int(vid)]
            except KeyError:
                raise ContractViolationError(
                    f"no command for active vehicle {int(vid)}"
                ) from None
        self.cmd[ids] = cmd
        s_new, v_new, done = kernels.advance(
            np.ascontiguousarray(self.s[ids]), np.ascontiguousarray(self.speed[ids]),
            cmd, np.ascontiguousarray(self.table.lengths[self.route_idx[ids]]),
            self.dt, ACCEL_LIMIT, DECEL_LIMIT,
        )
        result = StepResult(
            ids=[int(v) for v in ids],
            delta_s={int(vid): float(d) for vid, d in zip(ids, s_new - self.s[ids])},
        )
        self.s[ids] = s_new
        self.speed[ids] = v_new
        completed = ids[done]
        self.done[completed] = True
        result.completed = {int(v) for v in completed}

        for a, b in detect_collisions(self):
            result.collided.update((a, b))
            self.collision_events.append((a, b, self.time_step_index))
        # collided vehicles leave the simulation (and never count as completed)
        for vid in result.collided:
            self.done[vid] = True
            result.completed.discard(vid)
        self.time_step_index += 1
        return result

    def release_pending(self) -> None:
        """Spawn any scheduled vehicles whose time has come.

        Callers drive this at the top of their control loop, before collecting
        observations, so new vehicles receive commands on their first step.
        """
        if not self._pending:
            return
        now = self.time
        due = [p for p in self._pending if p[0] <= now + 1e-9]
        if due:
            self._pending = [p for p in self._pending if p[0] > now + 1e-9]
            for _, approach, intention in due:
                self.spawn_vehicle(approach, intention)


def detect_collisions(world: WorldState) -> list[tuple[int, int]]:
    """Overlapping pairs among active vehicles; marks both as collided."""
    ids = world.active_ids()
    if len(ids) < 2:
        return []
    x, y, tx, ty = world.poses(ids)
    half_len = np.full(len(ids), VEHICLE_LENGTH / 2.0)
    half_wid = np.full(len(ids), VEHICLE_WIDTH / 2.0)
    ii, jj = kernels.collisions(x, y, tx, ty, half_len, half_wid)
    pairs = [(int(ids[i]), int(ids[j])) for i, j in zip(ii, jj)]
    for a, b in pairs:
        world.collided[a] = True
        world.collided[b] = True
    return pairs


def spawn_scenario(spec: ScenarioSpec,
                   geometry: IntersectionGeometry | None = None,
                   dt: float = DT) -> WorldState:
    """World at time zero with the spec's t=0 vehicles placed at route starts."""
    spec.validate()
    world = WorldState(geometry, dt)
    for approach, intention, t in spec.spawns:
        if t == 0.0:
            world.spawn_vehicle(approach, intention)
        else:
            world._pending.append((t, approach, intention))
    world._pending.sort(key=lambda p: p[0])
    return world


# A single geometry (and its route table) is shared by default: route paths
# are immutable and building the table is not free.
_GEOMETRY_CACHE: dict[int, _RouteTable] = {}
_DEFAULT_GEOMETRY: IntersectionGeometry | None = None


def _default_geometry() -> IntersectionGeometry:
    global _DEFAULT_GEOMETRY
    if _DEFAULT_GEOMETRY is None:
        _DEFAULT_GEOMETRY = IntersectionGeometry()
    return _DEFAULT_GEOMETRY


def _route_table(geometry: IntersectionGeometry) -> _RouteTable:
    key = id(geometry)
    if key not in _GEOMETRY_CACHE:
        _GEOMETRY_CACHE[key] = _RouteTable(geometry)
    return _GEOMETRY_CACHE[key]


# -- scenario files and trajectory dumps ---------------------------------

def load_scenario(path: str) -> ScenarioSpec:
    """Scenario text file: one spawn per line, "approach intention time"."""
    spawns = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValidationError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
            try:
                approach = Approach[parts[0].upper()]
                intention = Intention[parts[1].upper()]
                t = float(parts[2])
            except (KeyError, ValueError) as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            spawns.append((approach, intention, t))
    spec = ScenarioSpec(tuple(spawns))
    spec.validate()
    return spec


def save_scenario(spec: ScenarioSpec, path: str) -> None:
    with open(path, "w") as fh:
        for approach, intention, t in spec.spawns:
            fh.write(f"{approach.name} {intention.name.lower()} {t}\n")


TRAJECTORY_FIELDS = ["step", "vehicle_id", "approach", "intention", "s", "speed",
                     "collided", "done"]


class TrajectoryRecorder:
    """Collects per-step vehicle rows in the trajectory CSV schema."""

    def __init__(self):
        self.rows: list[dict] = []

    def record(self, world: WorldState) -> None:
        step = world.time_step_index
        for vid in range(world.num_spawned):
            route = world.route_of(vid)
            self.rows.append({
                "step": step,
                "vehicle_id": vid,
                "approach": route[0].name,
                "intention": route[1].name.lower(),
                "s": f"{world.s[vid]:.6f}",
                "speed": f"{world.speed[vid]:.6f}",
                "collided": int(world.collided[vid]),
                "done": int(world.done[vid]),
            })

    def write(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=TRAJECTORY_FIELDS)
            writer.writeheader()
            writer.writerows(self.rows)
