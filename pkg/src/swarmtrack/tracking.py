"""Per-agent multi-target tracking: Kalman prediction, JPDA and M-of-N track logic."""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterator

import numpy as np
from scipy.special import logsumexp

from swarmtrack.world import MotionModel

MeasurementCovFn = Callable[[object], np.ndarray]


class FilterDivergenceError(ArithmeticError):
    """A covariance or information matrix stopped being positive definite."""


class TrackStatus(str, Enum):
    TENTATIVE = "tentative"
    CONFIRMED = "confirmed"


@dataclass(frozen=True)
class Track:
    track_id: int
    mean: np.ndarray
    cov: np.ndarray
    status: TrackStatus = TrackStatus.TENTATIVE
    hit_history: tuple[bool, ...] = ()
    last_update_time: float = 0.0

    @property
    def confirmed(self) -> bool:
        return self.status is TrackStatus.CONFIRMED

    @property
    def position(self) -> np.ndarray:
        return self.mean[:2]


@dataclass(frozen=True)
class InfoForm:
    omega: np.ndarray
    q: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return np.linalg.solve(self.omega, self.q)


@dataclass(frozen=True)
class TrackingParams:
    gate: float = 9.21
    p_detect: float = 0.95
    clutter_density: float = 0.0
    m_confirm: int = 2
    n_confirm: int = 3
    m_delete: int = 5
    n_delete: int = 6
    init_cov: tuple[float, float, float, float] = (4.0, 4.0, 9.0, 9.0)
    event_cap: int = 10_000

    @property
    def window(self) -> int:
        return max(self.n_confirm, self.n_delete)


def _spd_inverse(mat: np.ndarray) -> np.ndarray:
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise FilterDivergenceError("matrix is not positive definite") from exc
    inv_chol = np.linalg.inv(chol)
    out = inv_chol.T @ inv_chol
    return 0.5 * (out + out.T)


def _check_spd(mat: np.ndarray, what: str) -> None:
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise FilterDivergenceError(f"{what} lost positive definiteness") from exc


def to_info_form(track: Track) -> InfoForm:
    omega = _spd_inverse(track.cov)
    return InfoForm(omega=omega, q=omega @ track.mean)


def from_info_form(info: InfoForm, template: Track) -> Track:
    cov = _spd_inverse(info.omega)
    return replace(template, mean=cov @ info.q, cov=cov)


def kf_predict(track: Track, model: MotionModel) -> Track:
    cov = model.F @ track.cov @ model.F.T + model.Q
    return replace(track, mean=model.F @ track.mean, cov=0.5 * (cov + cov.T))


def kf_update(mean: np.ndarray, cov: np.ndarray, z: np.ndarray, R: np.ndarray, H: np.ndarray):
    """Joseph-form Kalman update; returns ``(mean, cov)``."""
    S = H @ cov @ H.T + R
    K = np.linalg.solve(S, H @ cov).T
    ikh = np.eye(len(mean)) - K @ H
    new_cov = ikh @ cov @ ikh.T + K @ R @ K.T
    return mean + K @ (z - H @ mean), 0.5 * (new_cov + new_cov.T)


@dataclass
class Diagnostics:
    counts: Counter = field(default_factory=Counter)

    def bump(self, key: str, n: int = 1) -> None:
        self.counts[key] += n


def jpda_gate(
    tracks: list[Track],
    measurements: list,
    model: MotionModel,
    measurement_cov_fn: MeasurementCovFn,
    gate: float = 9.21,
    diagnostics: Diagnostics | None = None,
) -> np.ndarray:
    """Boolean (tracks x measurements) matrix of squared-Mahalanobis gating."""
    out = np.zeros((len(tracks), len(measurements)), dtype=bool)
    H = model.H
    for j, meas in enumerate(measurements):
        R = measurement_cov_fn(meas)
        for t, trk in enumerate(tracks):
            S = H @ trk.cov @ H.T + R
            nu = meas.value - H @ trk.mean
            try:
                d2 = float(nu @ np.linalg.solve(S, nu))
            except np.linalg.LinAlgError:
                if diagnostics is not None:
                    diagnostics.bump("singular_innovation")
                continue
            out[t, j] = d2 <= gate
    return out


def _clusters(gate: np.ndarray) -> list[tuple[list[int], list[int]]]:
    """Connected components of the bipartite gate graph (tracks with >=1 gated measurement)."""
    n_t, n_m = gate.shape
    seen_t: set[int] = set()
    out = []
    for start in range(n_t):
        if start in seen_t or not gate[start].any():
            continue
        tracks, meas = {start}, set()
        frontier = [start]
        while frontier:
            t = frontier.pop()
            for j in np.flatnonzero(gate[t]):
                if j not in meas:
                    meas.add(int(j))
                    for t2 in np.flatnonzero(gate[:, j]):
                        if t2 not in tracks:
                            tracks.add(int(t2))
                            frontier.append(int(t2))
        seen_t |= tracks
        out.append((sorted(tracks), sorted(meas)))
    return out


def _enumerate_events(options: list[list[int]], cap: int) -> list[tuple[int, ...]] | None:
    """All assignments track -> measurement (or -1) with no shared measurement.

    Returns None once more than ``cap`` events exist.
    """
    events: list[tuple[int, ...]] = []
    current: list[int] = []
    used: set[int] = set()

    def recurse(k: int) -> bool:
        if k == len(options):
            events.append(tuple(current))
            return len(events) <= cap
        for j in [-1] + options[k]:
            if j >= 0 and j in used:
                continue
            current.append(j)
            if j >= 0:
                used.add(j)
            ok = recurse(k + 1)
            current.pop()
            used.discard(j)
            if not ok:
                return False
        return True

    return events if recurse(0) else None


def jpda_weights(
    tracks: list[Track],
    measurements: list,
    gate: np.ndarray,
    model: MotionModel,
    measurement_cov_fn: MeasurementCovFn,
    p_detect: float = 0.95,
    clutter_density: float = 0.0,
    event_cap: int = 10_000,
    diagnostics: Diagnostics | None = None,
) -> np.ndarray:
    """Marginal association weights, shape (tracks, 1 + measurements); column 0 is the miss.

    Events are weighted by ``P_D^det (1-P_D)^miss lambda^false prod N(z; Hx, S)``.
    When ``P_D == 1`` or ``lambda == 0`` the weight is the limit as the vanishing
    factor goes to zero, i.e. only events using the fewest such factors survive.
    """
    n_t, n_m = gate.shape
    beta = np.zeros((n_t, n_m + 1))
    beta[:, 0] = 1.0
    if n_t == 0 or n_m == 0:
        return beta
    H = model.H
    loglik = np.full((n_t, n_m), -np.inf)
    maha = np.full((n_t, n_m), np.inf)
    Rs = [measurement_cov_fn(m) for m in measurements]
    for t, j in zip(*np.nonzero(gate)):
        S = H @ tracks[t].cov @ H.T + Rs[j]
        nu = measurements[j].value - H @ tracks[t].mean
        d2 = float(nu @ np.linalg.solve(S, nu))
        maha[t, j] = d2
        loglik[t, j] = -0.5 * (d2 + np.log(np.linalg.det(S)) + 2 * np.log(2 * np.pi))

    log_pd = np.log(p_detect) if p_detect > 0 else -np.inf
    log_miss = np.log1p(-p_detect) if p_detect < 1 else None
    log_lam = np.log(clutter_density) if clutter_density > 0 else None

    for c_tracks, c_meas in _clusters(gate):
        options = [[j for j in c_meas if gate[t, j]] for t in c_tracks]
        events = _enumerate_events(options, event_cap)
        if events is None:
            if diagnostics is not None:
                diagnostics.bump("jpda_nn_fallback")
            for t in c_tracks:
                j = int(np.argmin(maha[t]))
                beta[t, :] = 0.0
                beta[t, j + 1] = 1.0
            continue
        zeros = np.empty(len(events))
        logw = np.empty(len(events))
        for e, event in enumerate(events):
            n_det = sum(1 for j in event if j >= 0)
            n_miss = len(event) - n_det
            n_false = len(c_meas) - n_det
            zero_count = 0
            lw = sum(loglik[t, j] for t, j in zip(c_tracks, event) if j >= 0) + n_det * log_pd
            if log_miss is None:
                zero_count += n_miss
            else:
                lw += n_miss * log_miss
            if log_lam is None:
                zero_count += n_false
            else:
                lw += n_false * log_lam
            zeros[e] = zero_count
            logw[e] = lw
        keep = (zeros == zeros.min()) & np.isfinite(logw)
        if not keep.any():
            keep = zeros == zeros.min()
            logw = np.where(keep, 0.0, -np.inf)
        weights = np.zeros(len(events))
        weights[keep] = np.exp(logw[keep] - logsumexp(logw[keep]))
        for t in c_tracks:
            beta[t, :] = 0.0
        for w, event in zip(weights, events):
            for t, j in zip(c_tracks, event):
                beta[t, j + 1] += w
    return beta


def jpda_update(
    tracks: list[Track],
    measurements: list,
    gate: np.ndarray,
    model: MotionModel,
    measurement_cov_fn: MeasurementCovFn,
    params: TrackingParams = TrackingParams(),
    diagnostics: Diagnostics | None = None,
    time: float | None = None,
) -> list[Track]:
    """Moment-matched JPDA mixture update of every track.

    Each gated measurement gets its own Kalman posterior (measurement noise is
    geometry dependent), and the mixture over the miss and the association
    hypotheses is collapsed to one Gaussian.
    """
    beta = jpda_weights(
        tracks,
        measurements,
        gate,
        model,
        measurement_cov_fn,
        p_detect=params.p_detect,
        clutter_density=params.clutter_density,
        event_cap=params.event_cap,
        diagnostics=diagnostics,
    )
    Rs = [measurement_cov_fn(m) for m in measurements]
    out = []
    for t, trk in enumerate(tracks):
        hit = float(beta[t, 1:].sum()) > 0.5
        history = (trk.hit_history + (hit,))[-params.window :]
        assoc = np.flatnonzero(beta[t, 1:] > 0)
        if assoc.size == 0:
            out.append(replace(trk, hit_history=history))
            continue
        comps = [(beta[t, 0], trk.mean, trk.cov)] if beta[t, 0] > 0 else []
        for j in assoc:
            m, P = kf_update(trk.mean, trk.cov, measurements[j].value, Rs[j], model.H)
            comps.append((beta[t, j + 1], m, P))
        mean = sum(w * m for w, m, _ in comps)
        cov = sum(w * (P + np.outer(m - mean, m - mean)) for w, m, P in comps)
        cov = 0.5 * (cov + cov.T)
        _check_spd(cov, f"track {trk.track_id} covariance")
        upd_time = trk.last_update_time if time is None else time
        out.append(replace(trk, mean=mean, cov=cov, hit_history=history, last_update_time=upd_time))
    return out


def maintain_tracks(
    tracks: list[Track],
    unassociated: list,
    params: TrackingParams = TrackingParams(),
    init_cov: np.ndarray | None = None,
    ids: Iterator[int] | None = None,
    diagnostics: Diagnostics | None = None,
    time: float = 0.0,
) -> list[Track]:
    """Apply M-of-N confirmation/deletion, then open tentative tracks on leftovers."""
    if init_cov is None:
        init_cov = np.diag(params.init_cov)
    if ids is None:
        ids = itertools.count(max((t.track_id for t in tracks), default=-1) + 1)
    kept = []
    for trk in tracks:
        last_del = trk.hit_history[-params.n_delete :]
        if sum(1 for h in last_del if not h) >= params.m_delete:
            if diagnostics is not None:
                diagnostics.bump("deletions")
            continue
        if not trk.confirmed and sum(trk.hit_history[-params.n_confirm :]) >= params.m_confirm:
            trk = replace(trk, status=TrackStatus.CONFIRMED)
            if diagnostics is not None:
                diagnostics.bump("confirmations")
        kept.append(trk)
    for meas in unassociated:
        mean = np.array([meas.value[0], meas.value[1], 0.0, 0.0])
        kept.append(
            Track(
                track_id=next(ids),
                mean=mean,
                cov=np.array(init_cov, dtype=float),
                hit_history=(True,),
                last_update_time=time,
            )
        )
        if diagnostics is not None:
            diagnostics.bump("births")
    return kept


class Tracker:
    """The JPDA tracker owned by one agent."""

    def __init__(self, model: MotionModel, params: TrackingParams = TrackingParams()):
        self.model = model
        self.params = params
        self.tracks: list[Track] = []
        self.diagnostics = Diagnostics()
        self._ids = itertools.count()

    def step(self, measurements: list, measurement_cov_fn: MeasurementCovFn, time: float = 0.0) -> list[Track]:
        self.tracks = [kf_predict(t, self.model) for t in self.tracks]
        gate = jpda_gate(self.tracks, measurements, self.model, measurement_cov_fn, self.params.gate, self.diagnostics)
        self.tracks = jpda_update(
            self.tracks, measurements, gate, self.model, measurement_cov_fn, self.params, self.diagnostics, time
        )
        unassociated = [m for j, m in enumerate(measurements) if not gate[:, j].any()]
        self.tracks = maintain_tracks(
            self.tracks, unassociated, self.params, ids=self._ids, diagnostics=self.diagnostics, time=time
        )
        return self.tracks

    def confirmed(self) -> list[Track]:
        return [t for t in self.tracks if t.confirmed]
