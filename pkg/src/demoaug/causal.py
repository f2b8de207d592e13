"""Per-phase causal graphs over entities and their independent partitions.

A graph's boolean adjacency has A[i][j] = True iff node j's next state
depends on node i's current state; the diagonal is always True. Partitions
are connected components of the symmetrized adjacency: entities in
different partitions never interact during the phase, so their states can
be resampled independently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, InvariantViolation


@dataclass(frozen=True, eq=False)
class CausalGraph:
    nodes: tuple[str, ...]
    adjacency: np.ndarray

    def __post_init__(self):
        nodes = tuple(self.nodes)
        adj = np.asarray(self.adjacency, dtype=bool).copy()
        n = len(nodes)
        if len(set(nodes)) != n:
            raise InvariantViolation("duplicate node ids in causal graph")
        if adj.shape != (n, n):
            raise InvariantViolation(f"adjacency shape {adj.shape} does not match {n} nodes")
        if not np.all(np.diag(adj)):
            raise InvariantViolation("adjacency diagonal must be all True")
        adj.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "adjacency", adj)

    @classmethod
    def from_edges(cls, nodes, edges) -> "CausalGraph":
        """Build from (src, dst) pairs; the diagonal is injected."""
        nodes = tuple(nodes)
        index = {n: i for i, n in enumerate(nodes)}
        adj = np.eye(len(nodes), dtype=bool)
        for src, dst in edges:
            if src not in index or dst not in index:
                raise InvariantViolation(f"edge ({src!r}, {dst!r}) references unknown node")
            adj[index[src], index[dst]] = True
        return cls(nodes, adj)

    def __eq__(self, other):
        if not isinstance(other, CausalGraph):
            return NotImplemented
        return self.nodes == other.nodes and np.array_equal(self.adjacency, other.adjacency)


@dataclass(frozen=True)
class Partition:
    members: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(self.members))
        if not self.members:
            raise InvariantViolation("empty partition")

    def sorted_members(self) -> tuple[str, ...]:
        return tuple(sorted(self.members))

    def __contains__(self, entity_id):
        return entity_id in self.members


def join_adjacency(a1: CausalGraph, a2: CausalGraph) -> CausalGraph:
    """Joint multi-agent adjacency: OR the graphs, then OR with the transpose."""
    if a1.nodes != a2.nodes:
        raise DimensionMismatch(f"node sets differ: {a1.nodes} vs {a2.nodes}")
    merged = a1.adjacency | a2.adjacency
    return CausalGraph(a1.nodes, merged | merged.T)


def partitions(g: CausalGraph) -> list[Partition]:
    """Connected components of the symmetrized adjacency, sorted by smallest member."""
    sym = g.adjacency | g.adjacency.T
    n = len(g.nodes)
    seen = np.zeros(n, dtype=bool)
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        stack = [start]
        seen[start] = True
        members = []
        while stack:
            i = stack.pop()
            members.append(g.nodes[i])
            for j in np.flatnonzero(sym[i]):
                if not seen[j]:
                    seen[j] = True
                    stack.append(int(j))
        comps.append(Partition(frozenset(members)))
    comps.sort(key=lambda p: min(p.members))
    return comps


@dataclass(frozen=True)
class PhaseSpec:
    """One causal phase: per-agent graphs plus SE(3) retargeting metadata."""

    phase_index: int
    graphs: dict[str, CausalGraph]
    target_entity: str
    grasp_closes: bool

    def __post_init__(self):
        object.__setattr__(self, "graphs", dict(self.graphs))
        if self.phase_index < 0:
            raise InvariantViolation("phase_index must be >= 0")
        if not self.graphs:
            raise InvariantViolation("phase needs at least one agent graph")
        node_sets = {g.nodes for g in self.graphs.values()}
        if len(node_sets) != 1:
            raise InvariantViolation("per-agent graphs must share one node ordering")
        nodes = next(iter(node_sets))
        if self.target_entity not in nodes:
            raise InvariantViolation(f"target {self.target_entity!r} not among nodes {nodes}")

    @property
    def nodes(self) -> tuple[str, ...]:
        return next(iter(self.graphs.values())).nodes

    def joint_graph(self) -> CausalGraph:
        graphs = list(self.graphs.values())
        joint = join_adjacency(graphs[0], graphs[0])
        for g in graphs[1:]:
            joint = join_adjacency(joint, g)
        return joint


@dataclass(frozen=True)
class TaskCausalSpec:
    task_id: str
    phases: tuple[PhaseSpec, ...]
    segment_merge_map: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))
        object.__setattr__(self, "segment_merge_map", tuple(int(x) for x in self.segment_merge_map))
        indices = [p.phase_index for p in self.phases]
        if indices != list(range(len(self.phases))):
            raise InvariantViolation(f"phase indices {indices} not contiguous from 0")
        m = self.segment_merge_map
        if list(m) != sorted(m):
            raise InvariantViolation("segment_merge_map must be monotone non-decreasing")
        if sorted(set(m)) != list(range(len(self.phases))):
            raise InvariantViolation("segment_merge_map must be surjective onto phase indices")

    @property
    def num_phases(self) -> int:
        return len(self.phases)

    def phase(self, index: int) -> PhaseSpec:
        return self.phases[index]


def count_partitions(spec: TaskCausalSpec) -> int:
    """Total causally independent state partitions across all phases."""
    return sum(len(partitions(p.joint_graph())) for p in spec.phases)


def resampleable_partitions(phase: PhaseSpec, agent: str) -> list[Partition]:
    """Partitions of the agent's graph free of both the agent and the phase target.

    Replacing any of these leaves the expert action unchanged: the policy
    is a function of the causally relevant subset only.
    """
    if agent not in phase.graphs:
        raise InvariantViolation(f"agent {agent!r} has no graph in phase {phase.phase_index}")
    out = []
    for part in partitions(phase.graphs[agent]):
        if agent in part or phase.target_entity in part:
            continue
        out.append(part)
    return out


def swap_candidates(phase: PhaseSpec) -> list[Partition]:
    """Joint-graph partitions containing no agent node and no target entity.

    For single-agent phases this equals resampleable_partitions for that
    agent; with several agents a partition must be irrelevant to all of them.
    """
    agents = set(phase.graphs.keys())
    out = []
    for part in partitions(phase.joint_graph()):
        if part.members & agents or phase.target_entity in part:
            continue
        out.append(part)
    return out


# ---------------------------------------------------------------------------
# config I/O


def causal_spec_from_dict(obj: dict) -> TaskCausalSpec:
    """Parse the JSON causal-spec layout; edge lists omit the diagonal."""
    try:
        phases = []
        for p in obj["phases"]:
            graphs = {
                agent: CausalGraph.from_edges(tuple(g["nodes"]), [tuple(e) for e in g.get("edges", [])])
                for agent, g in p["agents"].items()
            }
            phases.append(
                PhaseSpec(
                    phase_index=int(p["phase_index"]),
                    graphs=graphs,
                    target_entity=p["target_entity"],
                    grasp_closes=bool(p["grasp_closes"]),
                )
            )
        phases.sort(key=lambda p: p.phase_index)
        return TaskCausalSpec(
            task_id=obj["task_id"],
            phases=tuple(phases),
            segment_merge_map=tuple(obj["segment_merge_map"]),
        )
    except (KeyError, TypeError) as exc:
        raise InvariantViolation(f"malformed causal spec ({exc})") from exc


def causal_spec_to_dict(spec: TaskCausalSpec) -> dict:
    return {
        "task_id": spec.task_id,
        "phases": [
            {
                "phase_index": p.phase_index,
                "target_entity": p.target_entity,
                "grasp_closes": p.grasp_closes,
                "agents": {
                    agent: {
                        "nodes": list(g.nodes),
                        "edges": [
                            [g.nodes[i], g.nodes[j]]
                            for i in range(len(g.nodes))
                            for j in range(len(g.nodes))
                            if i != j and g.adjacency[i, j]
                        ],
                    }
                    for agent, g in p.graphs.items()
                },
            }
            for p in spec.phases
        ],
        "segment_merge_map": list(spec.segment_merge_map),
    }


def load_causal_spec(path) -> TaskCausalSpec:
    return causal_spec_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
