"""Belief-space lookahead, the proximal base policy and multiagent rollout.

The lookahead is vectorized over DE candidates and Monte Carlo samples: every
objective call evaluates a whole population against the same frozen set of
sampled target trajectories (common random numbers), which is what makes the
rollout improvement property hold exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from swarmtrack._kernels import lookahead_values
from swarmtrack.de import DEParams, optimize_de
from swarmtrack.sensing import AgentState, clamp_control
from swarmtrack.world import SemanticMap, ncv_model


class PolicyKind(str, Enum):
    BASE = "base"
    GREEDY = "greedy"
    ROLLOUT_JOINT = "rollout_joint"
    ROLLOUT_SEQUENTIAL = "rollout_sequential"

    @classmethod
    def parse(cls, name: str) -> "PolicyKind":
        aliases = {"rollout-joint": cls.ROLLOUT_JOINT, "rollout-seq": cls.ROLLOUT_SEQUENTIAL, "rollout_seq": cls.ROLLOUT_SEQUENTIAL}
        key = name.strip().lower()
        if key in aliases:
            return aliases[key]
        return cls(key.replace("-", "_"))


@dataclass(frozen=True)
class BeliefTrack:
    label: int
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class BeliefState:
    agents: tuple[AgentState, ...]
    fused_tracks: tuple[tuple[BeliefTrack, ...], ...]
    semantic_map: SemanticMap
    time: float = 0.0

    def __post_init__(self):
        if not self.agents:
            raise ValueError("belief needs at least one agent")
        if len(self.fused_tracks) != len(self.agents):
            raise ValueError("one fused track list per agent is required")


@dataclass(frozen=True)
class RolloutParams:
    horizon: int = 5
    mc_samples: int = 50
    control_dt: float = 1.0
    # lookahead fuses by exact averaging; kept for configuration symmetry
    consensus_L_plan: int = 1
    de: DEParams = field(default_factory=DEParams)
    agent_order: tuple[int, ...] | None = None
    v0: float = 5.0
    q: float = 0.5
    r0: float = 1.0

    def __post_init__(self):
        if self.horizon < 1 or self.mc_samples < 1:
            raise ValueError("horizon and mc_samples must be >= 1")


@dataclass(frozen=True)
class PlanResult:
    control: np.ndarray
    value: float | None = None
    base_value: float | None = None
    evaluations: int = 0
    # q-value after each agent's turn (sequential variants)
    agent_values: tuple[float, ...] = ()


def base_policy(agent: AgentState, agent_tracks: Sequence[BeliefTrack], v0: float = 5.0) -> np.ndarray:
    """Head at speed ``v0`` toward the least-informed track within ``d0``.

    Least informed means smallest information-matrix trace; ties go to the
    nearer track, then the lower label. No proximal track means hover.
    """
    best = None
    for trk in agent_tracks:
        offset = trk.mean[:2] - agent.pos
        dist = float(np.hypot(*offset))
        if dist > agent.d0:
            continue
        key = (float(np.trace(np.linalg.inv(trk.cov))), dist, trk.label)
        if best is None or key < best[0]:
            best = (key, offset, dist)
    if best is None or best[2] == 0.0:
        return np.zeros(2)
    return v0 * best[1] / best[2]


def base_joint_control(belief: BeliefState, v0: float = 5.0) -> np.ndarray:
    return np.array([base_policy(a, tr, v0) for a, tr in zip(belief.agents, belief.fused_tracks)])


def _sqrt_psd(mat: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh(mat)
    return evecs * np.sqrt(np.clip(evals, 0.0, None))[..., None, :]


class Lookahead:
    """Compiled belief for batched Q-value evaluation."""

    def __init__(self, belief: BeliefState, params: RolloutParams):
        self.params = params
        self.belief = belief
        self.model = ncv_model(params.control_dt, params.q)
        agents = belief.agents
        self.n = len(agents)
        labels = sorted({t.label for tracks in belief.fused_tracks for t in tracks})
        self.labels = labels
        T = len(labels)
        col = {lab: k for k, lab in enumerate(labels)}
        self.holders = np.zeros((self.n, T), dtype=bool)
        omega_sum = np.zeros((T, 4, 4))
        q_sum = np.zeros((T, 4))
        for i, tracks in enumerate(belief.fused_tracks):
            for trk in tracks:
                k = col[trk.label]
                omega = np.linalg.inv(trk.cov)
                omega_sum[k] += omega
                q_sum[k] += omega @ trk.mean
                self.holders[i, k] = True
        h = self.holders.sum(axis=0)
        self.n_holders = np.maximum(h, 1)
        if T:
            omega0 = omega_sum / self.n_holders[:, None, None]
            omega0 = 0.5 * (omega0 + np.swapaxes(omega0, -1, -2))
            self.cov0 = np.linalg.inv(omega0)
            self.mean0 = np.einsum("tij,tj->ti", self.cov0, q_sum / self.n_holders[:, None])
            self.trace0 = np.trace(omega0, axis1=-2, axis2=-1)
        else:
            self.cov0 = np.zeros((0, 4, 4))
            self.mean0 = np.zeros((0, 4))
            self.trace0 = np.zeros(0)
        F = self.model.F
        self.pred_means = [self.mean0]
        for _ in range(params.horizon):
            self.pred_means.append(self.pred_means[-1] @ F.T)
        self.pos0 = np.array([a.pos for a in agents], dtype=float)
        self.alpha = np.array([a.alpha for a in agents], dtype=float)
        self.half = 0.5 * np.array([a.fov_side for a in agents], dtype=float)
        self.v_max = np.array([a.v_max for a in agents], dtype=float)
        self.d0 = np.array([a.d0 for a in agents], dtype=float)
        b = belief.semantic_map.bounds
        self.lo = np.array([b.xmin, b.ymin])
        self.hi = np.array([b.xmax, b.ymax])

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """Target trajectories, shape ``(mc_samples, horizon, T, 4)``; entry k is stage k+1."""
        M, N, T = self.params.mc_samples, self.params.horizon, len(self.labels)
        out = np.zeros((M, N, T, 4))
        if T == 0:
            return out
        root0 = _sqrt_psd(self.cov0)
        x = self.mean0[None] + np.einsum("tij,mtj->mti", root0, rng.standard_normal((M, T, 4)))
        rootq = _sqrt_psd(self.model.Q)
        F = self.model.F
        for k in range(N):
            x = x @ F.T + rng.standard_normal((M, T, 4)) @ rootq.T
            out[:, k] = x
        return out

    def _base_controls(self, pos: np.ndarray, trace: np.ndarray, means: np.ndarray) -> np.ndarray:
        """Vectorized base policy. ``pos`` (..., n, 2), ``trace`` (..., T), ``means`` (T, 4)."""
        offset = means[:, :2] - pos[..., :, None, :]  # (..., n, T, 2)
        dist = np.hypot(offset[..., 0], offset[..., 1])
        valid = (dist <= self.d0[:, None]) & self.holders
        tr = np.where(valid, trace[..., None, :], np.inf)
        tmin = tr.min(axis=-1, keepdims=True)
        cand = valid & (tr == tmin)
        pick = np.argmin(np.where(cand, dist, np.inf), axis=-1)
        any_valid = valid.any(axis=-1)
        off = np.take_along_axis(offset, pick[..., None, None], axis=-2)[..., 0, :]
        d = np.take_along_axis(dist, pick[..., None], axis=-1)[..., 0]
        ok = any_valid & (d > 0)
        scale = np.where(ok, self.params.v0 / np.where(ok, d, 1.0), 0.0)
        return off * scale[..., None]

    def _information_rates(self, pos: np.ndarray, tgt: np.ndarray, occluded: np.ndarray):
        """Fused information gain ``(1/h) sum_i H^T R_i^-1 H`` as its three distinct entries.

        ``pos`` (..., n, 2), ``tgt`` (M, T, 2), ``occluded`` (M, T); results are (..., M, T).
        """
        rel = tgt[None, :, None, :, :] - pos[..., :, None, :]  # (B, M, n, T, 2)
        dx, dy = rel[..., 0], rel[..., 1]
        seen = (np.abs(dx) <= self.half[:, None]) & (np.abs(dy) <= self.half[:, None])
        seen &= ~occluded[:, None, :]
        seen &= self.holders
        dist = np.hypot(dx, dy)
        r = np.maximum(dist, self.params.r0)
        safe = np.where(dist > 0, dist, 1.0)
        c = np.where(dist > 0, dx / safe, 1.0)
        s = np.where(dist > 0, dy / safe, 0.0)
        a = 1.0 / (0.1 * r)
        b = 1.0 / (0.1 * np.pi * r)
        w = seen / (self.alpha[:, None] * self.n_holders)
        w11 = (w * (a * c * c + b * s * s)).sum(axis=-2)
        w12 = (w * ((a - b) * c * s)).sum(axis=-2)
        w22 = (w * (a * s * s + b * c * c)).sum(axis=-2)
        return w11, w12, w22

    def evaluate(self, controls: np.ndarray, samples: np.ndarray) -> np.ndarray:
        """Mean cumulative reward per candidate joint control ``controls`` (B, n, 2).

        Covariances are carried as 2x2 position/cross/velocity blocks so the
        NCV predict, the information update and the information trace are all
        closed-form scalar arithmetic.
        """
        controls = np.ascontiguousarray(controls, dtype=float).reshape(-1, self.n, 2)
        if not self.labels:
            return np.zeros(controls.shape[0])
        Q = self.model.Q
        return lookahead_values(
            controls,
            np.ascontiguousarray(samples),
            self.belief.semantic_map.occluded_mask(samples[..., :2]),
            self.pos0,
            self.alpha,
            self.half,
            self.v_max,
            self.d0,
            self.holders,
            self.n_holders.astype(float),
            self.cov0,
            self.trace0,
            np.ascontiguousarray(np.stack(self.pred_means)),
            float(self.params.control_dt),
            float(Q[0, 0]),
            float(Q[0, 2]),
            float(Q[2, 2]),
            float(self.params.r0),
            float(self.params.v0),
            self.lo,
            self.hi,
        )

    def evaluate_dense(self, controls: np.ndarray, samples: np.ndarray) -> np.ndarray:
        """Reference implementation of :meth:`evaluate` with full 4x4 inverses."""
        controls = np.asarray(controls, dtype=float).reshape(-1, self.n, 2)
        B = controls.shape[0]
        M, N = samples.shape[0], self.params.horizon
        T = len(self.labels)
        if T == 0:
            return np.zeros(B)
        F, Q = self.model.F, self.model.Q
        occluded = self.belief.semantic_map.occluded_mask(samples[..., :2])
        pos = np.broadcast_to(self.pos0, (B, M, self.n, 2))
        cov = np.broadcast_to(self.cov0, (B, M, T, 4, 4))
        trace = np.broadcast_to(self.trace0, (B, M, T))
        total = np.zeros((B, M))
        for k in range(N):
            if k == 0:
                u = clamp_control(controls, self.v_max)[:, None]
            else:
                u = clamp_control(self._base_controls(pos, trace, self.pred_means[k]), self.v_max)
            pos = np.clip(pos + u * self.params.control_dt, self.lo, self.hi)
            omega = np.linalg.inv(F @ cov @ F.T + Q)
            w11, w12, w22 = self._information_rates(pos, samples[:, k, :, :2], occluded[:, k])
            omega[..., 0, 0] += w11
            omega[..., 1, 1] += w22
            omega[..., 0, 1] += w12
            omega[..., 1, 0] += w12
            trace = np.trace(omega, axis1=-2, axis2=-1)
            total += trace.sum(axis=-1)
            cov = np.linalg.inv(omega)
        return total.mean(axis=1)


def q_value(
    belief: BeliefState,
    control,
    params: RolloutParams,
    rng: np.random.Generator | None = None,
    samples: np.ndarray | None = None,
) -> float:
    """Monte Carlo Q-value: ``control`` for the first stage, base policy after."""
    look = Lookahead(belief, params)
    if samples is None:
        samples = look.sample(np.random.default_rng() if rng is None else rng)
    return float(look.evaluate(np.asarray(control)[None], samples)[0])


def _agent_box(v_max: float) -> np.ndarray:
    return np.array([[-v_max, v_max], [-v_max, v_max]])


def rollout_joint(belief: BeliefState, params: RolloutParams, rng: np.random.Generator) -> PlanResult:
    """All agents at once: one DE over the 2n-dimensional joint control box."""
    look = Lookahead(belief, params)
    samples = look.sample(rng)
    n = look.n
    base = clamp_control(base_joint_control(belief, params.v0), look.v_max)
    bounds = np.concatenate([_agent_box(v) for v in look.v_max])
    res = optimize_de(
        lambda X: look.evaluate(X.reshape(-1, n, 2), samples),
        bounds,
        seeds=[base.ravel()],
        params=params.de,
        rng=rng,
        generations=params.de.generations_joint,
        project=lambda X: clamp_control(X.reshape(-1, n, 2), look.v_max).reshape(len(X), -1),
    )
    base_value = float(look.evaluate(base[None], samples)[0])
    control = res.x.reshape(n, 2)
    return PlanResult(control=control, value=res.value, base_value=base_value, evaluations=res.evaluations)


def rollout_sequential(belief: BeliefState, params: RolloutParams, rng: np.random.Generator) -> PlanResult:
    """Agent by agent: start from the base policy, then optimize one agent at a
    time with the others held at their latest values."""
    look = Lookahead(belief, params)
    samples = look.sample(rng)
    n = look.n
    order = params.agent_order
    if order is None:
        order = tuple(int(i) for i in np.argsort([a.id for a in belief.agents], kind="stable"))
    else:
        ids = [a.id for a in belief.agents]
        if sorted(order) != sorted(ids):
            raise ValueError(f"agent_order {order} is not a permutation of agent ids {ids}")
        order = tuple(ids.index(i) for i in order)
    u = clamp_control(base_joint_control(belief, params.v0), look.v_max)
    base_value = float(look.evaluate(u[None], samples)[0])
    evals = 0
    values = []
    value = base_value
    for i in order:

        def objective(X, i=i):
            cand = np.repeat(u[None], len(X), axis=0)
            cand[:, i] = X
            return look.evaluate(cand, samples)

        res = optimize_de(
            objective,
            _agent_box(look.v_max[i]),
            seeds=[u[i]],
            params=params.de,
            rng=rng,
            project=lambda X, v=look.v_max[i]: clamp_control(X, v),
        )
        evals += res.evaluations
        u = u.copy()
        u[i] = res.x
        value = res.value
        values.append(value)
    return PlanResult(control=u, value=value, base_value=base_value, evaluations=evals, agent_values=tuple(values))


def greedy_policy(belief: BeliefState, params: RolloutParams, rng: np.random.Generator) -> PlanResult:
    """One-step lookahead: sequential rollout with the horizon forced to 1."""
    return rollout_sequential(belief, replace(params, horizon=1), rng)


def plan(policy: PolicyKind, belief: BeliefState, params: RolloutParams, rng: np.random.Generator) -> PlanResult:
    if policy is PolicyKind.BASE:
        return PlanResult(control=base_joint_control(belief, params.v0))
    if policy is PolicyKind.GREEDY:
        return greedy_policy(belief, params, rng)
    if policy is PolicyKind.ROLLOUT_JOINT:
        return rollout_joint(belief, params, rng)
    if policy is PolicyKind.ROLLOUT_SEQUENTIAL:
        return rollout_sequential(belief, params, rng)
    raise ValueError(f"unknown policy {policy!r}")
