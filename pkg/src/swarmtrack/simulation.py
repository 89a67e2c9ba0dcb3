"""Two-rate closed loop: 5 Hz sensing/tracking, 1 Hz fusion and planning."""

from __future__ import annotations

import logging
import time as _time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from swarmtrack.config import ScenarioConfig
from swarmtrack.consensus import FusedTrackSet, build_graph, fuse_tracks, info_utility
from swarmtrack.metrics import ospa
from swarmtrack.planning import BeliefState, BeliefTrack, PolicyKind, plan
from swarmtrack.sensing import AgentState, agent_transition, generate_observations, measurement_covariance
from swarmtrack.tracking import Tracker
from swarmtrack.world import TargetState, ncv_model, spawn_target, step_levy_target

log = logging.getLogger(__name__)


@dataclass
class WorldState:
    time: float
    epoch: int
    targets: list[TargetState]
    agents: list[AgentState]
    trackers: list[Tracker]
    truth_rng: np.random.Generator
    sensing_rng: np.random.Generator
    planning_rng: np.random.Generator


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    time: float
    ospa: float
    phi: float
    n_estimates: int
    evaluations: int
    control: np.ndarray


@dataclass
class TrialResult:
    policy: str
    trial: int
    seed: int
    ospa: np.ndarray
    phi: np.ndarray
    evaluations: np.ndarray
    wall_time: float = 0.0
    diagnostics: dict = field(default_factory=dict)


def init_world(config: ScenarioConfig, seed: int) -> WorldState:
    """Fresh world for one trial. Ground truth uses its own random stream, so
    trials sharing a seed see the same target motion whatever the policy."""
    truth_ss, sensing_ss, planning_ss = np.random.SeedSequence(seed).spawn(3)
    truth_rng = np.random.default_rng(truth_ss)
    levy = config.levy_params()
    targets = [spawn_target(k, p, truth_rng, levy) for k, p in enumerate(config.targets.initial_positions)]
    model = ncv_model(config.obs_dt, config.tracking.q)
    params = config.tracking_params()
    agents = config.agent_states()
    return WorldState(
        time=0.0,
        epoch=0,
        targets=targets,
        agents=agents,
        trackers=[Tracker(model, params) for _ in agents],
        truth_rng=truth_rng,
        sensing_rng=np.random.default_rng(sensing_ss),
        planning_rng=np.random.default_rng(planning_ss),
    )


def _fused_beliefs(fused: FusedTrackSet, n: int) -> tuple[tuple[BeliefTrack, ...], ...]:
    out = []
    for i in range(n):
        tracks = []
        for label, info in fused.agent_tracks(i):
            cov = np.linalg.inv(info.omega)
            cov = 0.5 * (cov + cov.T)
            tracks.append(BeliefTrack(label=label, mean=cov @ info.q, cov=cov))
        out.append(tuple(tracks))
    return tuple(out)


def sense(state: WorldState, config: ScenarioConfig) -> None:
    """One observation tick: move targets, observe, run every agent's tracker."""
    semantic_map = config.semantic_map()
    dt = config.obs_dt
    r0 = config.tracking.r0
    levy = config.levy_params()
    state.time += dt
    state.targets = [
        step_levy_target(t, dt, state.truth_rng, levy, semantic_map.bounds) for t in state.targets
    ]
    for agent, tracker in zip(state.agents, state.trackers):
        meas = generate_observations(agent, state.targets, semantic_map, tracker.model, r0, state.sensing_rng, state.time)
        tracker.step(meas, lambda m, a=agent: measurement_covariance(a, m.value, r0), state.time)


def run_epoch(state: WorldState, config: ScenarioConfig, policy: PolicyKind) -> tuple[WorldState, EpochRecord]:
    """Sense at the observation rate, fuse, score, plan and move the agents."""
    for _ in range(config.substeps):
        sense(state, config)
    n = len(state.agents)
    graph = build_graph(state.agents)
    fused = fuse_tracks(
        graph,
        [tr.confirmed() for tr in state.trackers],
        gate=config.consensus.association_gate,
        L=config.consensus.L,
    )
    truths = [t.pos for t in state.targets]
    ospa_params = config.ospa_params()
    ids = [a.id for a in state.agents]
    if config.experiment.ospa_mode == "reporting_agent":
        reporters = [ids.index(config.experiment.reporting_agent)]
    else:
        reporters = list(range(n))
    scores, phis, counts = [], [], []
    for i in reporters:
        tracks = fused.agent_tracks(i)
        estimates = [info.mean[:2] for _, info in tracks]
        scores.append(ospa(estimates, truths, ospa_params))
        phis.append(info_utility(tracks))
        counts.append(len(estimates))

    belief = BeliefState(
        agents=tuple(state.agents),
        fused_tracks=_fused_beliefs(fused, n),
        semantic_map=config.semantic_map(),
        time=state.time,
    )
    result = plan(policy, belief, config.rollout_params(), state.planning_rng)
    state.agents = [
        agent_transition(a, u, config.control_dt, config.semantic_map().bounds)
        for a, u in zip(state.agents, result.control)
    ]
    record = EpochRecord(
        epoch=state.epoch,
        time=state.time,
        ospa=float(np.mean(scores)),
        phi=float(np.mean(phis)),
        n_estimates=int(round(np.mean(counts))),
        evaluations=result.evaluations,
        control=np.array(result.control),
    )
    state.epoch += 1
    return state, record


def run_trial(
    config: ScenarioConfig,
    policy: PolicyKind | str,
    seed: int,
    epochs: int | None = None,
    trial: int = 0,
) -> TrialResult:
    policy = PolicyKind.parse(policy) if isinstance(policy, str) else policy
    epochs = config.experiment.epochs if epochs is None else epochs
    start = _time.perf_counter()
    state = init_world(config, seed)
    records = []
    for _ in range(epochs):
        state, rec = run_epoch(state, config, policy)
        records.append(rec)
    diag: Counter = Counter()
    for tr in state.trackers:
        diag.update(tr.diagnostics.counts)
    return TrialResult(
        policy=policy.value,
        trial=trial,
        seed=seed,
        ospa=np.array([r.ospa for r in records]),
        phi=np.array([r.phi for r in records]),
        evaluations=np.array([r.evaluations for r in records]),
        wall_time=_time.perf_counter() - start,
        diagnostics=dict(sorted(diag.items())),
    )


def trial_seeds(base_seed: int, trials: int) -> list[int]:
    return [base_seed + t for t in range(trials)]


def run_experiment(
    config: ScenarioConfig,
    policies: list[PolicyKind | str] | None = None,
    trials: int | None = None,
    epochs: int | None = None,
    base_seed: int | None = None,
    workers: int = 1,
) -> dict[str, list[TrialResult]]:
    """Run every policy on the same per-trial seeds (``base_seed + t``).

    Results are keyed by policy name and ordered by trial index regardless of
    ``workers``.
    """
    policies = [config.policy()] if policies is None else policies
    policies = [PolicyKind.parse(p) if isinstance(p, str) else p for p in policies]
    trials = config.experiment.trials if trials is None else trials
    epochs = config.experiment.epochs if epochs is None else epochs
    base_seed = config.experiment.base_seed if base_seed is None else base_seed
    if trials < 1:
        raise ValueError("trials must be >= 1")
    jobs = [(p, t, s) for p in policies for t, s in enumerate(trial_seeds(base_seed, trials))]
    log.info("running %d trials x %d policies, %d epochs each", trials, len(policies), epochs)
    results = Parallel(n_jobs=workers)(delayed(run_trial)(config, p, s, epochs, t) for p, t, s in jobs)
    out: dict[str, list[TrialResult]] = {p.value: [] for p in policies}
    for res in results:
        out[res.policy].append(res)
    for lst in out.values():
        lst.sort(key=lambda r: r.trial)
    return out
