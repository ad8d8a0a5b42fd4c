"""Per-vehicle metrics, aggregation, and report export."""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import asdict, dataclass, field

from .errors import ValidationError

WAITING_SPEED = 0.1  # m/s; at or below this a vehicle counts as stopped


@dataclass
class MetricsRecord:
    vehicle_id: int
    travel_time: float        # seconds in the network
    waiting_time: float       # seconds at speed <= WAITING_SPEED
    average_speed: float      # distance traveled / travel time
    collided: bool
    censored: bool = False    # still in the network when the run ended


class MetricsTracker:
    """Accumulates per-vehicle statistics step by step during a run."""

    def __init__(self, dt: float):
        self.dt = dt
        self._steps: dict[int, int] = {}
        self._waiting: dict[int, int] = {}
        self._distance: dict[int, float] = {}
        self._collided: dict[int, bool] = {}
        self._open: set[int] = set()
        self.records: list[MetricsRecord] = []

    def on_spawn(self, vid: int) -> None:
        self._steps[vid] = 0
        self._waiting[vid] = 0
        self._distance[vid] = 0.0
        self._collided[vid] = False
        self._open.add(vid)

    def on_step(self, vid: int, speed: float, delta_s: float,
                collided: bool, finished: bool) -> None:
        self._steps[vid] += 1
        if speed <= WAITING_SPEED:
            self._waiting[vid] += 1
        self._distance[vid] += delta_s
        if collided:
            self._collided[vid] = True
        if collided or finished:
            self._close(vid, censored=False)

    def finish(self) -> list[MetricsRecord]:
        for vid in sorted(self._open):
            self._close(vid, censored=True)
        self._open.clear()
        return self.records

    def _close(self, vid: int, censored: bool) -> None:
        self._open.discard(vid)
        steps = self._steps[vid]
        travel = steps * self.dt
        self.records.append(MetricsRecord(
            vehicle_id=vid,
            travel_time=travel,
            waiting_time=self._waiting[vid] * self.dt,
            average_speed=self._distance[vid] / travel if travel > 0 else 0.0,
            collided=self._collided[vid],
            censored=censored,
        ))


def compute_metrics(rows, dt: float = 0.1) -> list[MetricsRecord]:
    """Records from trajectory-dump rows (see world.TRAJECTORY_FIELDS)."""
    by_vehicle: dict[int, list[dict]] = {}
    for lineno, row in enumerate(rows, start=2):  # header is line 1
        try:
            vid = int(row["vehicle_id"])
            by_vehicle.setdefault(vid, []).append({
                "step": int(row["step"]),
                "s": float(row["s"]),
                "speed": float(row["speed"]),
                "collided": bool(int(row["collided"])),
                "done": bool(int(row["done"])),
            })
        except (KeyError, ValueError, TypeError) as exc:
            raise ValidationError(f"trajectory line {lineno}: {exc}") from None
    records = []
    for vid in sorted(by_vehicle):
        seq = sorted(by_vehicle[vid], key=lambda r: r["step"])
        closed = [i for i, r in enumerate(seq) if r["done"]]
        end = closed[0] if closed else len(seq) - 1
        active = seq[: end + 1]
        travel = len(active) * dt
        waiting = sum(1 for r in active if r["speed"] <= WAITING_SPEED) * dt
        distance = active[-1]["s"]
        records.append(MetricsRecord(
            vehicle_id=vid,
            travel_time=travel,
            waiting_time=waiting,
            average_speed=distance / travel if travel > 0 else 0.0,
            collided=any(r["collided"] for r in active),
            censored=not closed,
        ))
    return records


def load_trajectory(path: str, dt: float = 0.1) -> list[MetricsRecord]:
    with open(path, newline="") as fh:
        return compute_metrics(csv.DictReader(fh), dt)


@dataclass
class SeedAggregate:
    seed: int
    vehicles: int
    completed: int
    mean_travel_time: float
    mean_waiting_time: float
    mean_average_speed: float
    collision_rate: float


@dataclass
class EvaluationReport:
    method: str
    seeds: list[int]
    per_seed: list[SeedAggregate]
    mean_travel_time: float = 0.0
    std_travel_time: float = 0.0
    mean_waiting_time: float = 0.0
    std_waiting_time: float = 0.0
    mean_average_speed: float = 0.0
    std_average_speed: float = 0.0
    collision_rate: float = 0.0
    mean_decision_latency_ms: float = 0.0
    config_hash: str = ""
    extra: dict = field(default_factory=dict)


def aggregate_seed(seed: int, records: list[MetricsRecord]) -> SeedAggregate:
    # censored vehicles are excluded from time metrics but remain in the
    # collision-rate denominator (they entered the network)
    usable = [r for r in records if not r.censored]
    n = len(records)
    return SeedAggregate(
        seed=seed,
        vehicles=n,
        completed=len(usable),
        mean_travel_time=_mean(r.travel_time for r in usable),
        mean_waiting_time=_mean(r.waiting_time for r in usable),
        mean_average_speed=_mean(r.average_speed for r in usable),
        collision_rate=(sum(r.collided for r in records) / n) if n else 0.0,
    )


def build_report(method: str, per_seed: list[SeedAggregate],
                 latency_ms: float = 0.0, config_hash: str = "",
                 extra: dict | None = None) -> EvaluationReport:
    def stats(values):
        vals = list(values)
        mean = _mean(vals)
        std = statistics.pstdev(vals) if len(vals) > 1 else 0.0
        return mean, std

    tt = stats(a.mean_travel_time for a in per_seed)
    wt = stats(a.mean_waiting_time for a in per_seed)
    sp = stats(a.mean_average_speed for a in per_seed)
    total_veh = sum(a.vehicles for a in per_seed)
    collisions = sum(a.collision_rate * a.vehicles for a in per_seed)
    return EvaluationReport(
        method=method,
        seeds=[a.seed for a in per_seed],
        per_seed=per_seed,
        mean_travel_time=tt[0], std_travel_time=tt[1],
        mean_waiting_time=wt[0], std_waiting_time=wt[1],
        mean_average_speed=sp[0], std_average_speed=sp[1],
        collision_rate=collisions / total_veh if total_veh else 0.0,
        mean_decision_latency_ms=latency_ms,
        config_hash=config_hash,
        extra=extra or {},
    )


def _mean(values) -> float:
    vals = list(values)
    return sum(vals) / len(vals) if vals else 0.0


REPORT_FIELDS = [
    "method", "seed", "vehicles", "completed", "mean_travel_time",
    "mean_waiting_time", "mean_average_speed", "collision_rate",
]


def export_report(report: EvaluationReport, path: str, fmt: str) -> None:
    """Stable field order, fixed float precision, config hash for provenance."""
    if fmt == "json":
        payload = asdict(report)
        payload["per_seed"] = [asdict(a) for a in report.per_seed]
        with open(path, "w") as fh:
            json.dump(_round_floats(payload), fh, indent=2, sort_keys=True)
            fh.write("\n")
    elif fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"# method={report.method}",
                             f"config_hash={report.config_hash}",
                             f"seeds={'|'.join(map(str, report.seeds))}",
                             f"latency_ms={report.mean_decision_latency_ms:.4f}"])
            writer.writerow(REPORT_FIELDS)
            for agg in report.per_seed:
                writer.writerow([
                    report.method, agg.seed, agg.vehicles, agg.completed,
                    f"{agg.mean_travel_time:.6f}", f"{agg.mean_waiting_time:.6f}",
                    f"{agg.mean_average_speed:.6f}", f"{agg.collision_rate:.6f}",
                ])
            writer.writerow([
                report.method, "overall", sum(a.vehicles for a in report.per_seed),
                sum(a.completed for a in report.per_seed),
                f"{report.mean_travel_time:.6f}", f"{report.mean_waiting_time:.6f}",
                f"{report.mean_average_speed:.6f}", f"{report.collision_rate:.6f}",
            ])
    else:
        raise ValidationError(f"unknown report format {fmt!r} (use csv or json)")


def load_report(path: str) -> EvaluationReport:
    """Inverse of the JSON export."""
    with open(path) as fh:
        payload = json.load(fh)
    payload["per_seed"] = [SeedAggregate(**a) for a in payload["per_seed"]]
    return EvaluationReport(**payload)


def _round_floats(obj, digits: int = 6):
    if isinstance(obj, float):
        return round(obj, digits)
    if isinstance(obj, dict):
        return {k: _round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_round_floats(v, digits) for v in obj]
    return obj
