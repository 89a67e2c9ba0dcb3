import numpy as np
import pytest

from swarmtrack.sensing import AgentState
from swarmtrack.tracking import Track, TrackStatus


def random_spd(rng: np.random.Generator, n: int = 4, floor: float = 0.5) -> np.ndarray:
    A = rng.normal(size=(n, n))
    return A @ A.T + floor * np.eye(n)


def make_track(mean, cov=None, track_id=0, confirmed=True) -> Track:
    mean = np.asarray(mean, dtype=float)
    cov = np.eye(4) if cov is None else np.asarray(cov, dtype=float)
    status = TrackStatus.CONFIRMED if confirmed else TrackStatus.TENTATIVE
    return Track(track_id=track_id, mean=mean, cov=cov, status=status)


def make_agent(pos, agent_id=0, **kw) -> AgentState:
    return AgentState(id=agent_id, pos=np.asarray(pos, dtype=float), **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_belief(rng: np.random.Generator, n_agents: int = 3, n_tracks: int = 4, occluded: bool = True):
    """A plausible post-consensus belief on a 100 m map: every agent holds every track."""
    from swarmtrack.planning import BeliefState, BeliefTrack
    from swarmtrack.world import SemanticMap

    occ = [[30, 12, 52, 24], [45, 72, 67, 84]] if occluded else []
    smap = SemanticMap.from_lists([0, 0, 100, 100], occ)
    agents = tuple(
        AgentState(
            id=i,
            pos=rng.uniform(15, 85, 2),
            fov_side=float(rng.uniform(18, 26)),
            alpha=float(rng.uniform(0.08, 0.16)),
        )
        for i in range(n_agents)
    )
    tracks = []
    for t in range(n_tracks):
        anchor = agents[t % n_agents].pos
        mean = np.r_[np.clip(anchor + rng.normal(scale=8, size=2), 0, 100), rng.normal(scale=1.5, size=2)]
        tracks.append(BeliefTrack(label=t, mean=mean, cov=random_spd(rng, 4, 0.3) * 0.5))
    return BeliefState(agents=agents, fused_tracks=tuple(tuple(tracks) for _ in agents), semantic_map=smap)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(capsys):
    """Call ``criterion(n, ok, detail)`` to log a PASS/FAIL line, then assert."""

    def report(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n{line}")
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
