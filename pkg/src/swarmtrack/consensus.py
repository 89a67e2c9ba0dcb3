"""Proximity graph, cross-agent track correspondence and consensus of information."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from swarmtrack.sensing import AgentState
from swarmtrack.tracking import InfoForm, Track, to_info_form

VACUOUS_EPS = 1e-6


@dataclass(frozen=True)
class ProximityGraph:
    adjacency: np.ndarray

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def neighbors(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[i])

    def components(self) -> list[list[int]]:
        label = -np.ones(self.n, dtype=int)
        comps = []
        for start in range(self.n):
            if label[start] >= 0:
                continue
            stack, members = [start], []
            label[start] = len(comps)
            while stack:
                i = stack.pop()
                members.append(i)
                for j in self.neighbors(i):
                    if label[j] < 0:
                        label[j] = len(comps)
                        stack.append(int(j))
            comps.append(sorted(members))
        return comps

    def averaging_matrix(self) -> np.ndarray:
        """Row i holds weight ``1/(1+d(i))`` on i and each neighbour."""
        W = self.adjacency.astype(float) + np.eye(self.n)
        return W / W.sum(axis=1, keepdims=True)


def build_graph(agents: list[AgentState], d_c: float | None = None) -> ProximityGraph:
    """Edge iff the agents are within ``d_c`` (closed). Without ``d_c`` the
    smaller of the two agents' ``comm_range`` is used per pair."""
    n = len(agents)
    adj = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            limit = d_c if d_c is not None else min(agents[i].comm_range, agents[j].comm_range)
            dist = float(np.hypot(*(agents[i].pos - agents[j].pos)))
            adj[i, j] = adj[j, i] = dist <= limit
    return ProximityGraph(adj)


def associate_tracks(all_agent_tracks: list[list[Track]], gate: float = 5.0) -> dict[tuple[int, int], int]:
    """Greedy centroid clustering of track positions across agents.

    Agents are visited in order. Each agent's tracks claim the nearest open
    cluster within ``gate`` (shortest pairs first, one track per cluster per
    agent); leftovers seed new clusters. Returns ``(agent, track_id) -> label``.
    """
    centroids: list[np.ndarray] = []
    members: list[list[np.ndarray]] = []
    mapping: dict[tuple[int, int], int] = {}
    for a, tracks in enumerate(all_agent_tracks):
        pairs = []
        for k, trk in enumerate(tracks):
            for c, cen in enumerate(centroids):
                d = float(np.hypot(*(trk.position - cen)))
                if d <= gate:
                    pairs.append((d, k, c))
        pairs.sort()
        taken_tracks: set[int] = set()
        taken_clusters: set[int] = set()
        joins = []
        for d, k, c in pairs:
            if k in taken_tracks or c in taken_clusters:
                continue
            taken_tracks.add(k)
            taken_clusters.add(c)
            joins.append((k, c))
        for k, c in joins:
            mapping[(a, tracks[k].track_id)] = c
            members[c].append(tracks[k].position)
            centroids[c] = np.mean(members[c], axis=0)
        for k, trk in enumerate(tracks):
            if k not in taken_tracks:
                mapping[(a, trk.track_id)] = len(centroids)
                centroids.append(np.array(trk.position, dtype=float))
                members.append([trk.position])
    return mapping


def consensus_step(graph: ProximityGraph, per_agent_info: list[InfoForm]) -> list[InfoForm]:
    """One synchronous round: every agent averages itself and its neighbours."""
    W = graph.averaging_matrix()
    omegas = np.stack([f.omega for f in per_agent_info])
    qs = np.stack([f.q for f in per_agent_info])
    new_omega = np.einsum("ij,jkl->ikl", W, omegas)
    new_q = W @ qs
    return [InfoForm(omega=0.5 * (o + o.T), q=q) for o, q in zip(new_omega, new_q)]


@dataclass
class FusedTrackSet:
    """Per label, each agent's (Omega, q) and whether the agent can see that label."""

    info: dict[int, list[InfoForm]] = field(default_factory=dict)
    holders: dict[int, list[int]] = field(default_factory=dict)
    reachable: dict[int, list[int]] = field(default_factory=dict)
    correspondence: dict[tuple[int, int], int] = field(default_factory=dict)

    def agent_tracks(self, agent: int) -> list[tuple[int, InfoForm]]:
        """The fused tracks agent ``agent`` ends up with (labels reaching its component)."""
        return [(lab, forms[agent]) for lab, forms in sorted(self.info.items()) if agent in self.reachable[lab]]


def fuse_tracks(
    graph: ProximityGraph,
    confirmed: list[list[Track]],
    gate: float = 5.0,
    L: int = 10,
) -> FusedTrackSet:
    """Associate confirmed tracks across agents and run ``L`` consensus rounds per label.

    Agents without a given track join with a vacuous prior ``eps I, 0``.
    """
    mapping = associate_tracks(confirmed, gate)
    n = graph.n
    per_label: dict[int, dict[int, InfoForm]] = {}
    for a, tracks in enumerate(confirmed):
        for trk in tracks:
            per_label.setdefault(mapping[(a, trk.track_id)], {})[a] = to_info_form(trk)
    fused = FusedTrackSet(correspondence=mapping)
    comps = graph.components()
    vacuous = InfoForm(omega=VACUOUS_EPS * np.eye(4), q=np.zeros(4))
    for lab in sorted(per_label):
        have = per_label[lab]
        fused.info[lab] = [have.get(a, vacuous) for a in range(n)]
        fused.holders[lab] = sorted(have)
        fused.reachable[lab] = sorted(a for comp in comps if set(comp) & set(have) for a in comp)
    return run_consensus(graph, fused, L)


def run_consensus(graph: ProximityGraph, fused: FusedTrackSet, L: int) -> FusedTrackSet:
    if L < 1:
        raise ValueError("L must be at least 1")
    out = FusedTrackSet(holders=fused.holders, reachable=fused.reachable, correspondence=fused.correspondence)
    for lab, forms in fused.info.items():
        for _ in range(L):
            forms = consensus_step(graph, forms)
        out.info[lab] = forms
    return out


def info_utility(agent_fused: list[tuple[int, InfoForm]]) -> float:
    """Sum of information-matrix traces over an agent's fused tracks."""
    return float(sum(np.trace(f.omega) for _, f in agent_fused))
