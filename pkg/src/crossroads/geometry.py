"""Geometry of the 4-way single-lane intersection.

The layout is built once for the north approach and replicated to the other
three approaches by exact 90-degree rotations, so the 4-fold symmetry holds
bit-for-bit.  Coordinates: x east, y north, origin at the intersection
center.  Right-hand traffic, one inbound and one outbound lane per road.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property

import numpy as np


class Approach(IntEnum):
    # Ordered so that one clockwise 90-degree rotation maps each approach
    # onto the next one.
    N = 0
    E = 1
    S = 2
    W = 3


class Intention(IntEnum):
    LEFT = 0
    STRAIGHT = 1
    RIGHT = 2


Route = tuple[Approach, Intention]

ALL_ROUTES: tuple[Route, ...] = tuple(
    (a, i) for a in Approach for i in Intention
)


@dataclass(frozen=True)
class GeometryConfig:
    approach_length: float = 100.0  # spawn point to stop line, meters
    lane_width: float = 3.5
    box_half: float = 7.0           # intersection box is 14 m x 14 m
    sample_step: float = 0.25       # polyline sampling resolution
    conflict_distance: float = 3.0  # centerline distance that defines a conflict
    conflict_grid: float = 1.0      # sampling step for conflict search

    @property
    def lane_offset(self) -> float:
        return self.lane_width / 2.0

    @property
    def spawn_radius(self) -> float:
        return self.approach_length + self.box_half


def rot90cw(xy: np.ndarray) -> np.ndarray:
    """Exact clockwise quarter turn: (x, y) -> (y, -x)."""
    out = np.empty_like(xy)
    out[..., 0] = xy[..., 1]
    out[..., 1] = -xy[..., 0]
    return out


class Path:
    """Polyline with precomputed cumulative arc length and segment tangents."""

    def __init__(self, points: np.ndarray):
        points = np.asarray(points, dtype=np.float64)
        deltas = np.diff(points, axis=0)
        seg_len = np.hypot(deltas[:, 0], deltas[:, 1])
        keep = seg_len > 1e-12
        if not np.all(keep):
            points = np.concatenate([points[:1], points[1:][keep]])
            deltas = np.diff(points, axis=0)
            seg_len = np.hypot(deltas[:, 0], deltas[:, 1])
        self.points = points
        self.seg_len = seg_len
        self.cum_s = np.concatenate([[0.0], np.cumsum(seg_len)])
        self.tangents = deltas / seg_len[:, None]
        self.length = float(self.cum_s[-1])

    def pose_at(self, s: float) -> tuple[float, float, float, float]:
        x, y, tx, ty = self.pose_many(np.asarray([s], dtype=np.float64))
        return float(x[0]), float(y[0]), float(tx[0]), float(ty[0])

    def pose_many(self, s: np.ndarray):
        """Vectorized (x, y, tx, ty) lookup; s is clamped to [0, length]."""
        s = np.clip(s, 0.0, self.length)
        idx = np.searchsorted(self.cum_s, s, side="right") - 1
        idx = np.clip(idx, 0, len(self.seg_len) - 1)
        frac = (s - self.cum_s[idx]) / self.seg_len[idx]
        p = self.points[idx] + self.tangents[idx] * (frac * self.seg_len[idx])[:, None]
        t = self.tangents[idx]
        return p[:, 0], p[:, 1], t[:, 0], t[:, 1]

    def rotated_cw(self) -> "Path":
        return Path(rot90cw(self.points))


def _segment(p0, p1, step: float) -> np.ndarray:
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    n = max(1, int(math.ceil(np.hypot(*(p1 - p0)) / step)))
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    return p0 + (p1 - p0) * t


def _arc(center, radius: float, ang0: float, ang1: float, step: float) -> np.ndarray:
    n = max(2, int(math.ceil(abs(ang1 - ang0) * radius / step)))
    ang = np.linspace(ang0, ang1, n + 1)
    return np.stack(
        [center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang)], axis=1
    )


@dataclass(frozen=True)
class ConflictZone:
    """Arc-length window where two routes come closer than the conflict distance.

    ``longitudinal`` zones are shared road segments (common approach or common
    exit lane) where car-following applies; the rest are crossing conflicts.
    ``offset`` aligns the two arc-length coordinates for longitudinal zones:
    s_on_a ~ s_on_b + offset.
    """

    s_a0: float
    s_a1: float
    s_b0: float
    s_b1: float
    longitudinal: bool
    offset: float = 0.0


class IntersectionGeometry:
    """All 12 route paths plus derived conflict information."""

    def __init__(self, config: GeometryConfig | None = None):
        self.config = config or GeometryConfig()
        self._paths = self._build_paths()

    # -- construction -----------------------------------------------------

    def _north_templates(self) -> dict[Intention, np.ndarray]:
        cfg = self.config
        off = cfg.lane_offset
        b = cfg.box_half
        far = cfg.spawn_radius
        step = cfg.sample_step

        # Inbound lane of the north road: x = -off, driving towards -y.
        approach = _segment((-off, far), (-off, b), step)

        # Straight: continue onto the south road's outbound lane.
        straight = np.concatenate(
            [approach, _segment((-off, b), (-off, -far), step)[1:]]
        )

        # Left turn: quarter arc onto the east road's outbound lane (y = -off).
        r_left = b + off  # tangent to both lane centerlines at the box edge
        c_left = (-off + r_left, -off + r_left)
        left = np.concatenate(
            [
                approach,
                _arc(c_left, r_left, math.pi, 1.5 * math.pi, step)[1:],
                _segment((c_left[0], -off), (far, -off), step)[1:],
            ]
        )

        # Right turn: tighter arc onto the west road's outbound lane (y = +off).
        r_right = b - off
        c_right = (-off - r_right, off + r_right)
        right = np.concatenate(
            [
                approach,
                _arc(c_right, r_right, 0.0, -0.5 * math.pi, step)[1:],
                _segment((-b, off), (-far, off), step)[1:],
            ]
        )

        return {Intention.LEFT: left, Intention.STRAIGHT: straight, Intention.RIGHT: right}

    def _build_paths(self) -> dict[Route, Path]:
        paths: dict[Route, Path] = {}
        templates = self._north_templates()
        for intention, pts in templates.items():
            rotated = pts
            for approach in Approach:
                paths[(approach, intention)] = Path(rotated)
                rotated = rot90cw(rotated)
        return paths

    # -- queries ----------------------------------------------------------

    def route_path(self, approach: Approach, intention: Intention) -> Path:
        return self._paths[(approach, intention)]

    @property
    def stop_line_s(self) -> float:
        """Arc-length of the stop line, identical for all 12 routes."""
        return self.config.approach_length

    def drivable_mask(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Whether world points lie on the road network (strips plus box)."""
        cfg = self.config
        half_road = cfg.lane_width  # one lane each way
        extent = cfg.spawn_radius
        ns = (np.abs(x) <= half_road) & (np.abs(y) <= extent)
        ew = (np.abs(y) <= half_road) & (np.abs(x) <= extent)
        box = (np.abs(x) <= cfg.box_half) & (np.abs(y) <= cfg.box_half)
        return ns | ew | box

    @cached_property
    def conflicts(self) -> dict[tuple[Route, Route], list[ConflictZone]]:
        """Conflict zones for every ordered pair of distinct routes."""
        cfg = self.config
        grid = cfg.conflict_grid
        samples = {}
        for route, path in self._paths.items():
            s = np.arange(0.0, path.length + grid, grid)
            x, y, _, _ = path.pose_many(s)
            samples[route] = (np.clip(s, 0.0, path.length), np.stack([x, y], axis=1))

        out: dict[tuple[Route, Route], list[ConflictZone]] = {}
        for ra in ALL_ROUTES:
            for rb in ALL_ROUTES:
                if ra == rb:
                    continue
                out[(ra, rb)] = self._pair_zones(samples[ra], samples[rb])
        return out

    def _pair_zones(self, sample_a, sample_b) -> list[ConflictZone]:
        cfg = self.config
        s_a, pts_a = sample_a
        s_b, pts_b = sample_b
        d2 = (
            (pts_a[:, None, 0] - pts_b[None, :, 0]) ** 2
            + (pts_a[:, None, 1] - pts_b[None, :, 1]) ** 2
        )
        close = d2 < cfg.conflict_distance**2
        if not close.any():
            return []
        zones = []
        for ia, ib in _connected_regions(close):
            a0, a1 = float(s_a[ia.min()]), float(s_a[ia.max()])
            b0, b1 = float(s_b[ib.min()]), float(s_b[ib.max()])
            len_a, len_b = s_a[-1], s_b[-1]
            shared_start = a0 <= cfg.conflict_grid and b0 <= cfg.conflict_grid
            shared_end = (len_a - a1) <= cfg.conflict_grid and (len_b - b1) <= cfg.conflict_grid
            longitudinal = shared_start or shared_end
            if shared_end:
                offset = float(len_a - len_b)
            else:
                offset = a0 - b0
            zones.append(ConflictZone(a0, a1, b0, b1, longitudinal, offset))
        return zones


def _connected_regions(mask: np.ndarray):
    """8-connected components of a 2D boolean mask, as (row_idx, col_idx) arrays."""
    remaining = mask.copy()
    rows, cols = mask.shape
    while remaining.any():
        seed = np.unravel_index(np.argmax(remaining), remaining.shape)
        region = np.zeros_like(remaining)
        region[seed] = True
        remaining[seed] = False
        frontier = [seed]
        while frontier:
            r, c = frontier.pop()
            r0, r1 = max(r - 1, 0), min(r + 2, rows)
            c0, c1 = max(c - 1, 0), min(c + 2, cols)
            block = remaining[r0:r1, c0:c1]
            if block.any():
                for dr, dc in zip(*np.nonzero(block)):
                    rr, cc = r0 + dr, c0 + dc
                    region[rr, cc] = True
                    remaining[rr, cc] = False
                    frontier.append((rr, cc))
        yield np.nonzero(region)
