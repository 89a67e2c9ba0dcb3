from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmtrack.de import DEParams
from swarmtrack.planning import (
    BeliefState,
    BeliefTrack,
    Lookahead,
    PolicyKind,
    RolloutParams,
    base_joint_control,
    base_policy,
    greedy_policy,
    plan,
    q_value,
    rollout_joint,
    rollout_sequential,
)
from swarmtrack.sensing import measurement_covariance
from swarmtrack.world import SemanticMap, ncv_model

from conftest import make_agent, random_belief

SMAP = SemanticMap.from_lists([0, 0, 100, 100])
FAST = RolloutParams(horizon=3, mc_samples=10, de=DEParams(population=8, generations=6, generations_joint=6))


def belief_of(agents, tracks, smap=SMAP):
    agents = tuple(agents)
    return BeliefState(agents=agents, fused_tracks=tuple(tuple(tracks) for _ in agents), semantic_map=smap)


def track(label, mean, cov=None):
    return BeliefTrack(label=label, mean=np.asarray(mean, float), cov=np.eye(4) if cov is None else np.asarray(cov, float))


# base policy


def test_base_policy_heads_to_track():
    u = base_policy(make_agent((0, 0)), [track(0, (10, 0, 0, 0))], v0=5.0)
    np.testing.assert_allclose(u, [5.0, 0.0])


def test_base_policy_no_proximal_track():
    np.testing.assert_array_equal(base_policy(make_agent((0, 0), d0=20.0), [track(0, (50, 0, 0, 0))]), [0, 0])
    np.testing.assert_array_equal(base_policy(make_agent((0, 0)), []), [0, 0])


def test_base_policy_prefers_least_information():
    a = make_agent((0, 0))
    low = track(0, (0, 10, 0, 0), np.linalg.inv(np.diag([0.5, 0.5, 1.0, 1.0])))  # trace(omega) 3
    high = track(1, (10, 0, 0, 0), np.linalg.inv(np.diag([1.0, 2.0, 2.0, 2.0])))  # trace(omega) 7
    np.testing.assert_allclose(base_policy(a, [high, low]), [0.0, 5.0], atol=1e-12)


def test_base_policy_tie_breaks_nearest_then_label():
    a = make_agent((0, 0))
    far, near = track(0, (0, 12, 0, 0)), track(1, (8, 0, 0, 0))
    np.testing.assert_allclose(base_policy(a, [far, near]), [5.0, 0.0])
    left, right = track(3, (-8, 0, 0, 0)), track(2, (8, 0, 0, 0))
    np.testing.assert_allclose(base_policy(a, [left, right]), [5.0, 0.0])


def test_policy_names():
    assert PolicyKind.parse("rollout-seq") is PolicyKind.ROLLOUT_SEQUENTIAL
    assert PolicyKind.parse("rollout-joint") is PolicyKind.ROLLOUT_JOINT
    assert PolicyKind.parse("Greedy") is PolicyKind.GREEDY
    with pytest.raises(ValueError):
        PolicyKind.parse("random")


# lookahead value


def test_one_stage_value_matches_hand_oracle():
    agent = make_agent((50, 50), alpha=0.1, fov_side=20)
    cov = np.diag([1.0, 2.0, 0.5, 0.5])
    b = belief_of([agent], [track(0, (55, 50, 0, 0), cov)])
    params = RolloutParams(horizon=1, mc_samples=1)
    sample = np.array([55.5, 50.2, 0.0, 0.0])
    value = q_value(b, [[2.0, 0.0]], params, samples=sample.reshape(1, 1, 1, 4))
    model = ncv_model(1.0, params.q)
    moved = make_agent((52, 50), alpha=0.1)
    R = measurement_covariance(moved, sample[:2], 1.0)
    H = model.H
    omega = np.linalg.inv(model.F @ cov @ model.F.T + model.Q) + H.T @ np.linalg.inv(R) @ H
    assert value == pytest.approx(np.trace(omega), rel=1e-12)


def test_no_detection_reward_is_predict_only():
    agent = make_agent((10, 10))
    cov = np.diag([1.0, 2.0, 0.5, 0.5])
    b = belief_of([agent], [track(0, (80, 80, 0, 0), cov)])
    params = RolloutParams(horizon=2, mc_samples=1)
    samples = np.tile([80.0, 80.0, 0.0, 0.0], (1, 2, 1, 1))
    model = ncv_model(1.0, params.q)
    P1 = model.F @ cov @ model.F.T + model.Q
    P2 = model.F @ P1 @ model.F.T + model.Q
    expected = np.trace(np.linalg.inv(P1)) + np.trace(np.linalg.inv(P2))
    assert q_value(b, [[0.0, 0.0]], params, samples=samples) == pytest.approx(expected, rel=1e-12)


def test_equal_holders_average_to_single_agent():
    cov = np.diag([1.0, 1.0, 0.5, 0.5])
    t = [track(0, (55, 50, 0, 0), cov)]
    params = RolloutParams(horizon=2, mc_samples=5)
    samples = Lookahead(belief_of([make_agent((50, 50))], t), params).sample(np.random.default_rng(0))
    one = q_value(belief_of([make_agent((50, 50))], t), [[1.0, 0.0]], params, samples=samples)
    two = q_value(
        belief_of([make_agent((50, 50), 0), make_agent((50, 50), 1)], t), [[1.0, 0.0], [1.0, 0.0]], params, samples=samples
    )
    assert two == pytest.approx(one, rel=1e-12)


def test_occluded_sample_gives_no_information():
    cov = np.eye(4)
    smap = SemanticMap.from_lists([0, 0, 100, 100], [[54, 49, 56, 51]])
    params = RolloutParams(horizon=1, mc_samples=1)
    s = np.array([55.0, 50.0, 0, 0]).reshape(1, 1, 1, 4)
    blind = q_value(belief_of([make_agent((50, 50))], [track(0, (55, 50, 0, 0), cov)], smap), [[0, 0]], params, samples=s)
    far = q_value(belief_of([make_agent((10, 10))], [track(0, (55, 50, 0, 0), cov)]), [[0, 0]], params, samples=s)
    assert blind == pytest.approx(far, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.integers(0, 5), st.integers(1, 5))
def test_compiled_lookahead_matches_dense_reference(seed, n, T, horizon):
    rng = np.random.default_rng(seed)
    b = random_belief(rng, n, T)
    params = RolloutParams(horizon=horizon, mc_samples=7)
    look = Lookahead(b, params)
    samples = look.sample(rng)
    controls = rng.uniform(-7, 7, (6, n, 2))
    fast, ref = look.evaluate(controls, samples), look.evaluate_dense(controls, samples)
    np.testing.assert_allclose(fast, ref, rtol=1e-9, atol=1e-9)


def test_single_sample_noise_free_is_reproducible():
    b = belief_of([make_agent((50, 50))], [track(0, (55, 50, 1, 0), 1e-3 * np.eye(4))])
    params = RolloutParams(horizon=4, mc_samples=1, q=0.0)
    a = q_value(b, [[3.0, 1.0]], params, rng=np.random.default_rng(4))
    assert a == q_value(b, [[3.0, 1.0]], params, rng=np.random.default_rng(4))


def test_doubling_samples_halves_variance():
    b = random_belief(np.random.default_rng(3), 2, 3)
    u = base_joint_control(b)

    def spread(M):
        params = RolloutParams(horizon=3, mc_samples=M)
        return np.var([q_value(b, u, params, rng=np.random.default_rng(1000 * M + r)) for r in range(100)], ddof=1)

    ratio = spread(20) / spread(40)
    assert 1.2 < ratio < 3.3


# optimizers


def _check_controls(b, u):
    for a, ui in zip(b.agents, u):
        assert np.hypot(*ui) <= a.v_max * (1 + 1e-9)


@pytest.mark.parametrize("seed", range(4))
def test_rollouts_improve_on_base(seed):
    b = random_belief(np.random.default_rng(seed), 3, 4)
    for fn in (rollout_joint, rollout_sequential):
        res = fn(b, FAST, np.random.default_rng(seed))
        _check_controls(b, res.control)
        assert res.value >= res.base_value
    res = rollout_sequential(b, FAST, np.random.default_rng(seed))
    vals = (res.base_value,) + res.agent_values
    assert all(y >= x for x, y in zip(vals, vals[1:]))


def test_returned_value_is_value_of_returned_control():
    b = random_belief(np.random.default_rng(11), 3, 3)
    for fn in (rollout_joint, rollout_sequential):
        rng = np.random.default_rng(5)
        res = fn(b, FAST, rng)
        samples = Lookahead(b, FAST).sample(np.random.default_rng(5))
        assert q_value(b, res.control, FAST, samples=samples) == res.value


@pytest.mark.parametrize("order", [(0, 1, 2), (2, 0, 1), (1, 2, 0)])
def test_any_agent_order_keeps_improvement(order):
    b = random_belief(np.random.default_rng(21), 3, 4)
    res = rollout_sequential(b, replace(FAST, agent_order=order), np.random.default_rng(0))
    vals = (res.base_value,) + res.agent_values
    assert all(y >= x for x, y in zip(vals, vals[1:]))


def test_invalid_agent_order():
    b = random_belief(np.random.default_rng(0), 3, 2)
    with pytest.raises(ValueError):
        rollout_sequential(b, replace(FAST, agent_order=(0, 1, 1)), np.random.default_rng(0))


def test_single_agent_sequential_equals_joint_with_equal_budget():
    b = random_belief(np.random.default_rng(8), 1, 3)
    params = replace(FAST, de=DEParams(population=8, generations=6, generations_joint=6))
    s = rollout_sequential(b, params, np.random.default_rng(2))
    j = rollout_joint(b, params, np.random.default_rng(2))
    np.testing.assert_array_equal(s.control, j.control)
    assert s.value == j.value and s.evaluations == j.evaluations


def test_greedy_is_sequential_with_unit_horizon():
    b = random_belief(np.random.default_rng(4), 3, 3)
    g = greedy_policy(b, FAST, np.random.default_rng(1))
    s = rollout_sequential(b, replace(FAST, horizon=1), np.random.default_rng(1))
    np.testing.assert_array_equal(g.control, s.control)


def test_empty_belief_keeps_base_fallback():
    b = belief_of([make_agent((20, 20), 0), make_agent((60, 60), 1)], [])
    for fn in (greedy_policy, rollout_joint, rollout_sequential):
        res = fn(b, FAST, np.random.default_rng(0))
        np.testing.assert_array_equal(res.control, np.zeros((2, 2)))
        assert res.value == 0.0


@pytest.mark.parametrize("policy", [PolicyKind.GREEDY, PolicyKind.ROLLOUT_JOINT])
def test_moves_toward_lone_track(policy):
    # well-localized static track just outside the field of view to the east
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        b = belief_of([make_agent((50, 50), fov_side=20)], [track(0, (63, 50, 0, 0), 0.05 * np.eye(4))])
        u = plan(policy, b, FAST, rng).control[0]
        hits += u[0] > 0
    assert hits >= 19


def test_separable_agents_optimize_independently():
    # two agents 80 m apart, each with its own track; no cross-coupling is possible
    params = RolloutParams(horizon=3, mc_samples=1, q=0.0, de=DEParams(population=16, generations=30))
    left = (make_agent((15, 50), 0), track(0, (22, 53, 0, 0), 1e-6 * np.eye(4)))
    right = (make_agent((85, 50), 1), track(1, (80, 44, 0, 0), 1e-6 * np.eye(4)))
    joint_b = BeliefState(
        agents=(left[0], right[0]), fused_tracks=((left[1],), (right[1],)), semantic_map=SMAP
    )
    res = rollout_sequential(joint_b, params, np.random.default_rng(0))
    for i, (agent, trk) in enumerate((left, right)):
        single = belief_of([agent], [trk])
        thorough = replace(params, de=DEParams(population=40, generations=150))
        best = rollout_sequential(single, thorough, np.random.default_rng(1)).value
        floor = q_value(single, [[0.0, 0.0]], params, rng=np.random.default_rng(0))
        got = q_value(single, res.control[i : i + 1], params, rng=np.random.default_rng(0))
        assert got >= best - 0.01 * (best - floor)
