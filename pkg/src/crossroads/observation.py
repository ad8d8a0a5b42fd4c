"""Egocentric bird's-eye-view rasterization and frame stacking.

Each frame has three channels in [0, 1]:

  0. drivable area mask
  1. occupancy of the other vehicles
  2. the ego vehicle's own remaining route

The view is centered on the ego vehicle and rotated so its heading points up,
which is what makes observations invariant to the road the vehicle is on.
A pixel is set when its center lies inside the rasterized shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, ValidationError
from .world import VEHICLE_LENGTH, VEHICLE_WIDTH, WorldState

CHANNELS = 3
SUPPORTED_RESOLUTIONS = (16, 24, 32, 48)


@dataclass(frozen=True)
class RenderConfig:
    resolution: int = 48
    view_extent: float = 50.0  # meters covered by the full frame width

    def __post_init__(self):
        if self.resolution not in SUPPORTED_RESOLUTIONS:
            raise ValidationError(f"unsupported resolution {self.resolution}")

    @property
    def pixel_size(self) -> float:
        return self.view_extent / self.resolution

    @property
    def route_halfwidth(self) -> float:
        # wide enough that a diagonal polyline cannot skip pixel centers
        return max(VEHICLE_WIDTH / 2.0, 0.75 * self.pixel_size)


class Renderer:
    """Caches the pixel grid and per-route sample strides for one config."""

    def __init__(self, config: RenderConfig | None = None):
        self.config = config or RenderConfig()
        res = self.config.resolution
        px = self.config.pixel_size
        # ego-frame pixel centers: x to the right of heading, y along heading
        cols = (np.arange(res) + 0.5 - res / 2.0) * px
        rows = (res / 2.0 - np.arange(res) - 0.5) * px
        self._grid_x = np.broadcast_to(cols[None, :], (res, res))
        self._grid_y = np.broadcast_to(rows[:, None], (res, res))
        self._route_stride = max(1, int(round(self.config.route_halfwidth / 0.25)))

    def render(self, world: WorldState, ego: int) -> np.ndarray:
        if ego < 0 or ego >= world.num_spawned or world.done[ego]:
            raise ContractViolationError(f"ego vehicle {ego} is not active")
        cfg = self.config
        ids = world.active_ids()
        x, y, hx, hy = world.poses(ids)
        k = int(np.nonzero(ids == ego)[0][0])
        ex, ey = x[k], y[k]
        ehx, ehy = hx[k], hy[k]
        rx, ry = ehy, -ehx  # right-hand unit vector of the ego heading

        # world coordinates of every pixel center
        wx = ex + self._grid_x * rx + self._grid_y * ehx
        wy = ey + self._grid_x * ry + self._grid_y * ehy

        frame = np.zeros((CHANNELS, cfg.resolution, cfg.resolution), dtype=np.float32)
        frame[0] = world.geometry.drivable_mask(wx, wy)

        half_l, half_w = VEHICLE_LENGTH / 2.0, VEHICLE_WIDTH / 2.0
        for m in range(len(ids)):
            if ids[m] == ego:
                continue
            dx = wx - x[m]
            dy = wy - y[m]
            along = dx * hx[m] + dy * hy[m]
            across = dx * hy[m] - dy * hx[m]
            inside = (np.abs(along) <= half_l) & (np.abs(across) <= half_w)
            np.maximum(frame[1], inside.astype(np.float32), out=frame[1])

        frame[2] = self._route_channel(world, ego, wx, wy)
        return frame

    def _route_channel(self, world: WorldState, ego: int, wx, wy) -> np.ndarray:
        cfg = self.config
        path = world.geometry.route_path(*world.route_of(ego))
        s0 = float(world.s[ego])
        i0 = int(np.searchsorted(path.cum_s, s0))
        i1 = int(np.searchsorted(path.cum_s, s0 + cfg.view_extent))
        pts = path.points[max(i0 - 1, 0): i1 + 1: self._route_stride]
        if len(pts) == 0:
            return np.zeros_like(wx, dtype=np.float32)
        d2 = (wx[:, :, None] - pts[None, None, :, 0]) ** 2 \
            + (wy[:, :, None] - pts[None, None, :, 1]) ** 2
        return (d2.min(axis=2) <= cfg.route_halfwidth**2).astype(np.float32)


class FrameStack:
    """Fixed-length stack of the most recent frames, oldest first."""

    def __init__(self, depth: int, first_frame: np.ndarray):
        self.depth = depth
        self.frames = [first_frame] * depth

    def push(self, frame: np.ndarray) -> "FrameStack":
        if frame.shape != self.frames[-1].shape:
            raise ContractViolationError(
                f"frame shape {frame.shape} does not match stack {self.frames[-1].shape}"
            )
        self.frames = self.frames[1:] + [frame]
        return self

    def as_tensor(self) -> np.ndarray:
        """(depth * channels, H, W) tensor, oldest frame first."""
        return np.concatenate(self.frames, axis=0)


def push_frame(stack: FrameStack, frame: np.ndarray) -> FrameStack:
    return stack.push(frame)


# -- raw frame dump (golden-file format) ----------------------------------

def save_frame(frame: np.ndarray, path: str) -> None:
    """Header "C H W" newline, then row-major little-endian float32 values."""
    c, h, w = frame.shape
    with open(path, "wb") as fh:
        fh.write(f"{c} {h} {w}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(frame, dtype="<f4").tobytes())


def load_frame(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 3:
            raise ValidationError(f"{path}: malformed frame header")
        c, h, w = (int(v) for v in header)
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != c * h * w:
        raise ValidationError(f"{path}: expected {c * h * w} values, got {data.size}")
    return data.reshape(c, h, w)
