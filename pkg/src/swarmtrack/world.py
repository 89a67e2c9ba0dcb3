"""Ground truth: Levy-walk targets, the NCV motion model and the occlusion map."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class MotionModel:
    """Nearly-constant-velocity model on the state (x, y, vx, vy)."""

    dt: float
    F: np.ndarray
    Q: np.ndarray
    H: np.ndarray


def ncv_model(dt: float, q: float = 0.5) -> MotionModel:
    """Build the NCV model with continuous white-noise-acceleration process noise.

    Per axis the noise block is ``q * [[dt^3/3, dt^2/2], [dt^2/2, dt]]``.
    """
    F = np.eye(4)
    F[0, 2] = F[1, 3] = dt
    Q = np.zeros((4, 4))
    for pos, vel in ((0, 2), (1, 3)):
        Q[pos, pos] = dt**3 / 3.0
        Q[pos, vel] = Q[vel, pos] = dt**2 / 2.0
        Q[vel, vel] = dt
    H = np.zeros((2, 4))
    H[0, 0] = H[1, 1] = 1.0
    return MotionModel(dt=dt, F=F, Q=q * Q, H=H)


def propagate_model(state: np.ndarray, model: MotionModel, rng: np.random.Generator) -> np.ndarray:
    """Sample ``F x + w`` with ``w ~ N(0, Q)``."""
    nxt = model.F @ np.asarray(state, dtype=float)
    if not np.any(model.Q):
        return nxt
    # eigh tolerates semidefinite Q where cholesky does not
    evals, evecs = np.linalg.eigh(model.Q)
    root = evecs * np.sqrt(np.clip(evals, 0.0, None))
    return nxt + root @ rng.standard_normal(4)


@dataclass(frozen=True)
class Rect:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @classmethod
    def from_seq(cls, quad: Sequence[float]) -> "Rect":
        xmin, ymin, xmax, ymax = (float(v) for v in quad)
        if xmax < xmin or ymax < ymin:
            raise ValueError(f"degenerate rectangle {list(quad)}")
        return cls(xmin, ymin, xmax, ymax)

    def contains(self, point) -> bool:
        x, y = point[0], point[1]
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    def intersects(self, other: "Rect") -> bool:
        return not (
            other.xmax < self.xmin
            or other.xmin > self.xmax
            or other.ymax < self.ymin
            or other.ymin > self.ymax
        )

    def as_list(self) -> list[float]:
        return [self.xmin, self.ymin, self.xmax, self.ymax]


@dataclass(frozen=True)
class SemanticMap:
    bounds: Rect
    occlusions: tuple[Rect, ...] = ()

    def __post_init__(self):
        for occ in self.occlusions:
            if not self.bounds.intersects(occ):
                raise ValueError(f"occlusion {occ.as_list()} lies outside the map bounds")

    @classmethod
    def from_lists(cls, bounds: Sequence[float], occlusions: Sequence[Sequence[float]] = ()) -> "SemanticMap":
        return cls(Rect.from_seq(bounds), tuple(Rect.from_seq(o) for o in occlusions))

    def occluded(self, point) -> bool:
        return any(occ.contains(point) for occ in self.occlusions)

    def occluded_mask(self, points: np.ndarray) -> np.ndarray:
        """Vectorized occlusion test over ``points[..., :2]``."""
        x = points[..., 0]
        y = points[..., 1]
        mask = np.zeros(x.shape, dtype=bool)
        for occ in self.occlusions:
            mask |= (x >= occ.xmin) & (x <= occ.xmax) & (y >= occ.ymin) & (y <= occ.ymax)
        return mask


def semantic_filter(measurements: list, semantic_map: SemanticMap) -> list:
    """Drop measurements whose generating target sits inside an occlusion."""
    return [m for m in measurements if not semantic_map.occluded(m.source_pos)]


@dataclass(frozen=True)
class LevyParams:
    speed_min: float = 1.0
    speed_max: float = 3.0
    alpha: float = 1.5
    x_min: float = 2.0
    l_max: float = 40.0


@dataclass(frozen=True)
class TargetState:
    id: int
    pos: np.ndarray
    vel: np.ndarray
    # (heading, speed, remaining_distance); the head is the active segment
    walk_program: tuple[tuple[float, float, float], ...] = field(default=())

    @property
    def state(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel])


def draw_segment(params: LevyParams, rng: np.random.Generator) -> tuple[float, float, float]:
    """Draw (heading, speed, length); length is a Pareto law truncated to [x_min, l_max]."""
    heading = rng.uniform(0.0, 2.0 * np.pi)
    speed = rng.uniform(params.speed_min, params.speed_max)
    # inverse CDF of the truncated Pareto
    u = rng.uniform()
    tail = (params.x_min / params.l_max) ** params.alpha
    length = params.x_min * (1.0 - u * (1.0 - tail)) ** (-1.0 / params.alpha)
    return float(heading), float(speed), float(min(length, params.l_max))


def _reflect(pos: np.ndarray, heading: float, bounds: Rect) -> tuple[np.ndarray, float]:
    x, y = float(pos[0]), float(pos[1])
    cx, sy = np.cos(heading), np.sin(heading)
    width, height = bounds.xmax - bounds.xmin, bounds.ymax - bounds.ymin
    for _ in range(64):
        moved = False
        if x < bounds.xmin:
            x, cx, moved = 2 * bounds.xmin - x, -cx, True
        elif x > bounds.xmax:
            x, cx, moved = 2 * bounds.xmax - x, -cx, True
        if y < bounds.ymin:
            y, sy, moved = 2 * bounds.ymin - y, -sy, True
        elif y > bounds.ymax:
            y, sy, moved = 2 * bounds.ymax - y, -sy, True
        if not moved:
            break
    else:  # pathological overshoot, more than 32 map widths in one step
        x = float(np.clip(x, bounds.xmin, bounds.xmin + width))
        y = float(np.clip(y, bounds.ymin, bounds.ymin + height))
    return np.array([x, y]), float(np.arctan2(sy, cx) % (2 * np.pi))


def step_levy_target(
    target: TargetState,
    dt: float,
    rng: np.random.Generator,
    params: LevyParams = LevyParams(),
    bounds: Rect | None = None,
) -> TargetState:
    """Advance a target by ``dt`` seconds along its walk program.

    Segments that run out mid-step are finished and the leftover time is spent
    on freshly drawn segments. Boundary contact reflects the heading.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    program = list(target.walk_program)
    pos = np.array(target.pos, dtype=float)
    time_left = dt
    while time_left > 1e-12:
        if not program or program[0][2] <= 1e-12:
            if program:
                program.pop(0)
            if not program:
                program.append(draw_segment(params, rng))
            continue
        heading, speed, remaining = program[0]
        tau = min(time_left, remaining / speed)
        pos = pos + speed * tau * np.array([np.cos(heading), np.sin(heading)])
        if bounds is not None:
            pos, heading = _reflect(pos, heading, bounds)
        program[0] = (heading, speed, remaining - speed * tau)
        time_left -= tau
    heading, speed, _ = program[0]
    vel = speed * np.array([np.cos(heading), np.sin(heading)])
    return replace(target, pos=pos, vel=vel, walk_program=tuple(program))


def spawn_target(
    target_id: int,
    pos: Sequence[float],
    rng: np.random.Generator,
    params: LevyParams = LevyParams(),
) -> TargetState:
    seg = draw_segment(params, rng)
    vel = seg[1] * np.array([np.cos(seg[0]), np.sin(seg[0])])
    return TargetState(id=target_id, pos=np.asarray(pos, dtype=float), vel=vel, walk_program=(seg,))
