"""Agent kinematics, square field of view and the range-bearing noise model."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from swarmtrack.world import MotionModel, Rect, SemanticMap, TargetState, semantic_filter

# relative slack so a clamped control survives a second clamp unchanged
_NORM_SLACK = 1e-12


@dataclass(frozen=True)
class AgentState:
    id: int
    pos: np.ndarray
    heading: float = 0.0
    vel: np.ndarray = None
    fov_side: float = 20.0
    alpha: float = 0.1
    v_max: float = 5.0
    d0: float = float(20.0 * np.sqrt(2.0))
    comm_range: float = 150.0

    def __post_init__(self):
        object.__setattr__(self, "pos", np.asarray(self.pos, dtype=float))
        vel = np.zeros(2) if self.vel is None else np.asarray(self.vel, dtype=float)
        object.__setattr__(self, "vel", vel)
        if self.fov_side <= 0 or self.alpha < 0:
            raise ValueError("fov_side must be positive and alpha non-negative")


@dataclass(frozen=True)
class Measurement:
    value: np.ndarray
    source_pos: np.ndarray  # ground truth, for the harness only
    agent_id: int
    time: float = 0.0


def clamp_control(control, v_max: float) -> np.ndarray:
    u = np.asarray(control, dtype=float)
    norm = np.hypot(u[..., 0], u[..., 1])
    scale = np.where(norm > v_max * (1.0 + _NORM_SLACK), v_max / np.maximum(norm, 1e-300), 1.0)
    return u * scale[..., None]


def agent_transition(agent: AgentState, control, dt: float, bounds: Rect | None = None) -> AgentState:
    """Holonomic velocity-controlled step; the control is norm-clamped to ``v_max``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    u = clamp_control(control, agent.v_max)
    pos = agent.pos + u * dt
    if bounds is not None:
        pos = np.array([np.clip(pos[0], bounds.xmin, bounds.xmax), np.clip(pos[1], bounds.ymin, bounds.ymax)])
    heading = float(np.arctan2(u[1], u[0])) if np.any(u) else agent.heading
    return replace(agent, pos=pos, vel=u, heading=heading)


def fov_contains(agent: AgentState, point) -> bool:
    """Closed axis-aligned square of side ``fov_side`` centred on the agent."""
    half = 0.5 * agent.fov_side
    return bool(abs(point[0] - agent.pos[0]) <= half and abs(point[1] - agent.pos[1]) <= half)


def measurement_covariance(agent: AgentState, target_pos, r0: float = 1.0) -> np.ndarray:
    """Range-bearing covariance ``alpha G(rho) diag(0.1 r, 0.1 pi r) G(rho)^T``.

    ``r`` is floored at ``r0``.
    """
    if r0 <= 0:
        raise ValueError("r0 must be positive")
    dx = target_pos[0] - agent.pos[0]
    dy = target_pos[1] - agent.pos[1]
    r = max(float(np.hypot(dx, dy)), r0)
    rho = float(np.arctan2(dy, dx))
    c, s = np.cos(rho), np.sin(rho)
    G = np.array([[c, -s], [s, c]])
    R = agent.alpha * (G * np.array([0.1 * r, 0.1 * np.pi * r])) @ G.T
    return 0.5 * (R + R.T)


def covariance_sqrt(agent: AgentState, target_pos, r0: float = 1.0) -> np.ndarray:
    """A factor ``L`` with ``L L^T`` equal to :func:`measurement_covariance`."""
    dx = target_pos[0] - agent.pos[0]
    dy = target_pos[1] - agent.pos[1]
    r = max(float(np.hypot(dx, dy)), r0)
    rho = float(np.arctan2(dy, dx))
    c, s = np.cos(rho), np.sin(rho)
    G = np.array([[c, -s], [s, c]])
    return np.sqrt(agent.alpha) * G * np.sqrt([0.1 * r, 0.1 * np.pi * r])


def generate_observations(
    agent: AgentState,
    targets: list[TargetState],
    semantic_map: SemanticMap,
    model: MotionModel,
    r0: float,
    rng: np.random.Generator,
    time: float = 0.0,
) -> list[Measurement]:
    """One noisy position per target inside the FoV and outside occlusions.

    The perceiver is ideal: no false alarms, no misses inside the visible area.
    """
    out = []
    for tgt in targets:
        if not fov_contains(agent, tgt.pos):
            continue
        noise = covariance_sqrt(agent, tgt.pos, r0) @ rng.standard_normal(2)
        value = model.H @ tgt.state + noise
        out.append(Measurement(value=value, source_pos=np.array(tgt.pos, dtype=float), agent_id=agent.id, time=time))
    return semantic_filter(out, semantic_map)
