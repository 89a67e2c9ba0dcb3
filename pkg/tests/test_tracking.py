import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from swarmtrack.sensing import Measurement
from swarmtrack.tracking import (
    Diagnostics,
    FilterDivergenceError,
    InfoForm,
    Track,
    Tracker,
    TrackingParams,
    TrackStatus,
    from_info_form,
    jpda_gate,
    jpda_update,
    jpda_weights,
    kf_predict,
    kf_update,
    maintain_tracks,
    to_info_form,
)
from swarmtrack.world import MotionModel, ncv_model

from conftest import make_track, random_spd

H = np.hstack([np.eye(2), np.zeros((2, 2))])


def noiseless(dt=1.0):
    m = ncv_model(dt)
    return MotionModel(dt=dt, F=m.F, Q=np.zeros((4, 4)), H=m.H)


def meas(z):
    z = np.asarray(z, float)
    return Measurement(value=z, source_pos=z, agent_id=0)


def info_kalman(mean, cov, z, R):
    """Information-form posterior, independent of the gain-form code path."""
    omega = np.linalg.inv(cov) + H.T @ np.linalg.inv(R) @ H
    P = np.linalg.inv(omega)
    return P @ (np.linalg.inv(cov) @ mean + H.T @ np.linalg.inv(R) @ z), P


# prediction


def test_predict_constant_velocity():
    t = kf_predict(make_track((0, 0, 1, 0)), noiseless())
    np.testing.assert_array_equal(t.mean, [1, 0, 1, 0])
    F = noiseless().F
    np.testing.assert_allclose(t.cov, F @ F.T)


def test_predict_position_variance_expansion(rng):
    cov = random_spd(rng)
    dt = 0.7
    t = kf_predict(make_track((3, 4, 0, 0), cov), noiseless(dt))
    np.testing.assert_array_equal(t.mean, [3, 4, 0, 0])
    assert t.cov[0, 0] == pytest.approx(cov[0, 0] + 2 * dt * cov[0, 2] + dt**2 * cov[2, 2], rel=1e-12)


def test_two_predicts_equal_one_double_step(rng):
    trk = make_track(rng.normal(size=4), random_spd(rng))
    twice = kf_predict(kf_predict(trk, noiseless(0.3)), noiseless(0.3))
    once = kf_predict(trk, noiseless(0.6))
    np.testing.assert_allclose(twice.mean, once.mean, rtol=1e-12)
    np.testing.assert_allclose(twice.cov, once.cov, rtol=1e-12, atol=1e-12)


# information form


def test_info_form_examples():
    f = to_info_form(make_track((1, 2, 3, 4)))
    np.testing.assert_allclose(f.omega, np.eye(4))
    np.testing.assert_allclose(f.q, [1, 2, 3, 4])
    g = to_info_form(make_track((0, 0, 0, 0), 2 * np.eye(4)))
    np.testing.assert_allclose(g.omega, 0.5 * np.eye(4))
    np.testing.assert_allclose(g.q, 0)


@given(st.integers(0, 10_000))
def test_info_round_trip(seed):
    rng = np.random.default_rng(seed)
    trk = make_track(rng.normal(scale=20, size=4), random_spd(rng, floor=0.1))
    back = from_info_form(to_info_form(trk), trk)
    assert np.linalg.norm(back.cov - trk.cov) <= 1e-6 * np.linalg.norm(trk.cov)
    assert np.linalg.norm(back.mean - trk.mean) <= 1e-6 * max(np.linalg.norm(trk.mean), 1.0)


def test_info_form_rejects_singular():
    with pytest.raises(FilterDivergenceError):
        to_info_form(make_track((0, 0, 0, 0), np.diag([1, 1, 1, 0.0])))
    with pytest.raises(FilterDivergenceError):
        from_info_form(InfoForm(omega=-np.eye(4), q=np.zeros(4)), make_track((0, 0, 0, 0)))


# gating


def test_gate_examples():
    model = noiseless()
    trk = make_track((0, 0, 0, 0), np.diag([0.5, 0.5, 1, 1]))
    R = lambda m: 0.5 * np.eye(2)  # S = I
    g = jpda_gate([trk], [meas((0, 0)), meas((10, 0)), meas((3, 0))], model, R, 9.21)
    np.testing.assert_array_equal(g, [[True, False, True]])
    assert jpda_gate([trk], [], model, R).shape == (1, 0)


def test_gate_singular_innovation_reported():
    diag = Diagnostics()
    trk = make_track((0, 0, 0, 0), np.diag([0.0, 0.0, 1, 1]))
    g = jpda_gate([trk], [meas((0, 0))], noiseless(), lambda m: np.zeros((2, 2)), 9.21, diag)
    assert not g.any()
    assert diag.counts["singular_innovation"] == 1


# JPDA


def test_single_pair_equals_kalman(rng):
    cov = random_spd(rng)
    mean = rng.normal(size=4)
    z = mean[:2] + rng.normal(scale=0.3, size=2)
    R = random_spd(rng, 2)
    trk = make_track(mean, cov)
    params = TrackingParams(p_detect=1.0, clutter_density=0.0, gate=1e9)
    gate = np.ones((1, 1), bool)
    beta = jpda_weights([trk], [meas(z)], gate, noiseless(), lambda m: R, 1.0, 0.0)
    np.testing.assert_array_equal(beta, [[0.0, 1.0]])
    out = jpda_update([trk], [meas(z)], gate, noiseless(), lambda m: R, params)[0]
    m_ref, P_ref = info_kalman(mean, cov, z, R)
    assert np.linalg.norm(out.cov - P_ref) < 1e-10
    assert np.linalg.norm(out.mean - m_ref) < 1e-10
    assert np.trace(out.cov) <= np.trace(cov)


def test_miss_leaves_state_and_appends_false():
    trk = make_track((1, 2, 0, 0))
    out = jpda_update([trk], [], np.zeros((1, 0), bool), noiseless(), lambda m: np.eye(2))[0]
    np.testing.assert_array_equal(out.mean, trk.mean)
    np.testing.assert_array_equal(out.cov, trk.cov)
    assert out.hit_history == (False,)


def test_separated_tracks_update_independently(rng):
    tracks = [make_track((0, 0, 1, 0), track_id=0), make_track((100, 0, 0, 1), track_id=1)]
    zs = [meas((0.4, -0.2)), meas((99.5, 0.3))]
    R = lambda m: 0.3 * np.eye(2)
    model = noiseless()
    gate = jpda_gate(tracks, zs, model, R)
    np.testing.assert_array_equal(gate, np.eye(2, dtype=bool))
    out = jpda_update(tracks, zs, gate, model, R, TrackingParams(p_detect=0.95))
    for trk, z, got in zip(tracks, zs, out):
        m_ref, P_ref = kf_update(trk.mean, trk.cov, z.value, R(z), H)
        np.testing.assert_allclose(got.mean, m_ref, atol=1e-10)
        np.testing.assert_allclose(got.cov, P_ref, atol=1e-10)
        assert got.hit_history == (True,)


def brute_force_beta(tracks, zs, gate, Rs, pd, lam):
    """Enumerate all joint events directly and normalise."""
    T, M = gate.shape
    beta = np.zeros((T, M + 1))
    total = 0.0
    for event in itertools.product(*[[-1] + [j for j in range(M) if gate[t, j]] for t in range(T)]):
        used = [j for j in event if j >= 0]
        if len(used) != len(set(used)):
            continue
        w = 1.0
        for t, j in enumerate(event):
            if j < 0:
                w *= 1 - pd
            else:
                S = H @ tracks[t].cov @ H.T + Rs[j]
                w *= pd * multivariate_normal(H @ tracks[t].mean, S).pdf(zs[j].value)
        w *= lam ** (M - len(used))
        total += w
        for t, j in enumerate(event):
            beta[t, j + 1] += w
    return beta / total


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3), st.integers(0, 3), st.floats(0.5, 0.99), st.floats(1e-4, 0.05))
def test_jpda_weights_match_brute_force(seed, n_t, n_m, pd, lam):
    rng = np.random.default_rng(seed)
    tracks = [make_track(np.r_[rng.uniform(0, 6, 2), 0, 0], np.eye(4) * rng.uniform(0.5, 2), k) for k in range(n_t)]
    zs = [meas(rng.uniform(0, 6, 2)) for _ in range(n_m)]
    Rs = [random_spd(rng, 2, 0.2) for _ in range(n_m)]
    gate = rng.random((n_t, n_m)) < 0.8
    lookup = {id(z): R for z, R in zip(zs, Rs)}
    beta = jpda_weights(tracks, zs, gate, noiseless(), lambda m: lookup[id(m)], pd, lam)
    np.testing.assert_allclose(beta.sum(axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(beta, brute_force_beta(tracks, zs, gate, Rs, pd, lam), atol=1e-9)


def test_jpda_zero_clutter_limit():
    # with no clutter every measurement must come from a track: two tracks,
    # two shared measurements leave only the two full assignments
    tracks = [make_track((0, 0, 0, 0), track_id=0), make_track((1, 0, 0, 0), track_id=1)]
    zs = [meas((0.1, 0)), meas((0.9, 0))]
    R = lambda m: np.eye(2)
    beta = jpda_weights(tracks, zs, np.ones((2, 2), bool), noiseless(), R, 0.95, 0.0)
    assert beta[0, 0] == 0 and beta[1, 0] == 0
    S = 2 * np.eye(2)
    l = lambda t, z: multivariate_normal(t.mean[:2], S).pdf(z.value)
    w_a = l(tracks[0], zs[0]) * l(tracks[1], zs[1])
    w_b = l(tracks[0], zs[1]) * l(tracks[1], zs[0])
    assert beta[0, 1] == pytest.approx(w_a / (w_a + w_b), rel=1e-12)
    np.testing.assert_allclose(beta.sum(axis=1), 1.0)


def test_event_cap_falls_back_to_nearest_neighbour():
    tracks = [make_track((k, 0, 0, 0), track_id=k) for k in range(3)]
    zs = [meas((k + 0.1, 0)) for k in range(3)]
    diag = Diagnostics()
    beta = jpda_weights(tracks, zs, np.ones((3, 3), bool), noiseless(), lambda m: np.eye(2), event_cap=2, diagnostics=diag)
    np.testing.assert_array_equal(beta[:, 1:], np.eye(3))
    assert diag.counts["jpda_nn_fallback"] == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_updates_stay_spd(seed):
    rng = np.random.default_rng(seed)
    tracks = [make_track(np.r_[rng.uniform(0, 5, 2), rng.normal(size=2)], random_spd(rng, floor=0.2), k) for k in range(3)]
    zs = [meas(rng.uniform(0, 5, 2)) for _ in range(3)]
    R = lambda m: 0.2 * np.eye(2)
    model = ncv_model(0.2)
    tracks = [kf_predict(t, model) for t in tracks]
    gate = jpda_gate(tracks, zs, model, R, gate=50.0)
    for t in jpda_update(tracks, zs, gate, model, R):
        assert np.abs(t.cov - t.cov.T).max() <= 1e-9
        np.linalg.cholesky(t.cov)


# track management


def test_birth_from_unassociated():
    out = maintain_tracks([], [meas((5, 6))])
    assert len(out) == 1
    np.testing.assert_array_equal(out[0].mean, [5, 6, 0, 0])
    np.testing.assert_array_equal(out[0].cov, np.diag([4, 4, 9, 9]))
    assert out[0].status is TrackStatus.TENTATIVE


def test_confirmation_two_of_three():
    t = Track(0, np.zeros(4), np.eye(4), hit_history=(True, True))
    assert maintain_tracks([t], [])[0].status is TrackStatus.CONFIRMED
    t1 = Track(0, np.zeros(4), np.eye(4), hit_history=(True, False, False))
    assert maintain_tracks([t1], [])[0].status is TrackStatus.TENTATIVE


def test_deletion_five_of_six():
    t = Track(0, np.zeros(4), np.eye(4), TrackStatus.CONFIRMED, hit_history=(False,) * 5)
    assert maintain_tracks([t], []) == []
    t2 = Track(0, np.zeros(4), np.eye(4), TrackStatus.CONFIRMED, hit_history=(True, False, False, False, False, True))
    assert len(maintain_tracks([t2], [])) == 1


def test_tracker_confirms_static_target():
    tracker = Tracker(ncv_model(0.2), TrackingParams())
    R = lambda m: 0.05 * np.eye(2)
    tracker.step([meas((10, 10))], R, 0.2)
    assert len(tracker.tracks) == 1 and not tracker.confirmed()
    tracker.step([meas((10.05, 9.95))], R, 0.4)
    assert len(tracker.confirmed()) == 1
    for k in range(5):
        tracker.step([], R, 0.6 + 0.2 * k)
    assert tracker.tracks == []
    assert tracker.diagnostics.counts["deletions"] == 1


def test_hit_history_window_bounded():
    tracker = Tracker(ncv_model(0.2), TrackingParams())
    for k in range(20):
        tracker.step([meas((10, 10))], lambda m: 0.05 * np.eye(2), 0.2 * k)
    assert len(tracker.tracks) == 1
    assert len(tracker.tracks[0].hit_history) == 6
