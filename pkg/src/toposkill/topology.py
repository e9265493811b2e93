"""Growing network over embedded states.

Clusters carry a reference vector, bookkeeping counters, an extrinsic value
estimate, and the two replay buffers of :mod:`toposkill.store`. Per input
sample the update pipeline is fixed: bump the originating node's error
counter, reset the winner's, run deletions (and stop there if anything was
deleted), then creation, moving, and edge maintenance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidStateError
from .store import RingBuffer

Array = np.ndarray


@dataclass
class OegnConfig:
    delta_new: float = 0.6          # creation radius / cover-ball radius
    delta_success: float = float("inf")  # goal-proximity gate on create/move
    delta_age: int = 600            # edges older than this are pruned
    delta_error: int = 600          # error count beyond which a node dies
    delta_prox: float | None = None  # pair-merge radius; defaults to 0.4*delta_new
    delta_count: int = 5            # selections required before a node may spawn
    n_del: int = 10                 # selections required before a node may be deleted
    alpha: float = 0.001            # winner learning rate
    alpha_neighbors: float = 1e-6   # neighbor learning rate
    updates_per_batch: int = 32     # samples consumed per learning batch
    init_scale: float = 1.0         # spread of the two initial random nodes

    def __post_init__(self):
        if self.delta_prox is None:
            self.delta_prox = 0.4 * self.delta_new
        if self.delta_new <= 0 or self.delta_prox <= 0:
            raise ValueError("radii must be positive")
        if self.delta_prox >= self.delta_new:
            raise ValueError("delta_prox must be below delta_new")
        if min(self.delta_age, self.delta_error, self.delta_count, self.n_del) < 0:
            raise ValueError("thresholds must be non-negative")


class ClusterNode:
    __slots__ = ("id", "w", "error_count", "selection_count", "ext_value",
                 "buffer_S", "buffer_G")

    def __init__(self, node_id: int, w: Array, capacity: int):
        self.id = node_id
        self.w = np.asarray(w, dtype=np.float64).copy()
        self.error_count = 0
        self.selection_count = 0
        self.ext_value = 0.0
        self.buffer_S = RingBuffer(capacity)
        self.buffer_G = RingBuffer(capacity)

    def count(self) -> int:
        """Occupancy of the state buffer; the density proxy for this cluster."""
        return len(self.buffer_S)


@dataclass
class StepReport:
    created: list[int] = field(default_factory=list)
    deleted: list[int] = field(default_factory=list)
    moved: list[int] = field(default_factory=list)
    edges_added: list[tuple[int, int]] = field(default_factory=list)
    edges_removed: list[tuple[int, int]] = field(default_factory=list)
    stopped_after_delete: bool = False


def _edge_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


class TopologyGraph:
    """Mutable cluster graph. Single writer; readers take snapshots."""

    def __init__(self, cfg: OegnConfig, d: int, buffer_budget: int,
                 rng: np.random.Generator):
        self.cfg = cfg
        self.d = d
        self.buffer_budget = max(2, buffer_budget)
        self.nodes: dict[int, ClusterNode] = {}
        self.edges: dict[tuple[int, int], int] = {}
        self._adjacency: dict[int, set[int]] = {}
        self._next_id = 0
        self.creations = 0
        self.deletions = 0
        self.evictions = 0
        self._version = 0        # bumped on any node-set or position change
        self._cache_version = -1
        self._ids_cache: list[int] = []
        self._mat_cache: Array | None = None
        cap = self._per_node_capacity(2)
        for _ in range(2):
            w = rng.normal(0.0, cfg.init_scale, size=d)
            self._add_node(w, cap)
        first, second = sorted(self.nodes)
        self._set_edge(first, second, 0)

    # ------------------------------------------------------------- queries

    def _reference_matrix(self) -> tuple[list[int], Array]:
        if self._cache_version != self._version:
            ids = sorted(self.nodes)
            self._ids_cache = ids
            self._mat_cache = np.stack([self.nodes[i].w for i in ids])
            self._cache_version = self._version
        return self._ids_cache, self._mat_cache

    def nearest(self, e: Array) -> tuple[int, float]:
        """Winner node for an embedding: smallest L2 distance, ties to lowest id."""
        if not self.nodes:
            raise InvalidStateError("graph has no nodes")
        ids, mat = self._reference_matrix()
        diff = mat - np.asarray(e, dtype=np.float64)
        dist2 = (diff * diff).sum(axis=1)
        idx = int(np.argmin(dist2))  # argmin returns the first (lowest-id) tie
        return ids[idx], float(np.sqrt(dist2[idx]))

    def neighbors(self, node_id: int) -> list[int]:
        return sorted(self._adjacency.get(node_id, ()))

    def edges_of(self, node_id: int) -> list[tuple[int, int]]:
        return sorted(_edge_key(node_id, other)
                      for other in self._adjacency.get(node_id, ()))

    # ------------------------------------------------------------ plumbing

    def _set_edge(self, a: int, b: int, age: int) -> None:
        self.edges[_edge_key(a, b)] = age
        self._adjacency.setdefault(a, set()).add(b)
        self._adjacency.setdefault(b, set()).add(a)

    def _drop_edge(self, key: tuple[int, int]) -> None:
        del self.edges[key]
        a, b = key
        self._adjacency[a].discard(b)
        self._adjacency[b].discard(a)

    def _per_node_capacity(self, n_nodes: int | None = None) -> int:
        n = n_nodes if n_nodes is not None else max(1, len(self.nodes))
        return max(1, self.buffer_budget // n)

    def set_edge(self, a: int, b: int, age: int = 0) -> None:
        """Public edge insertion/refresh (no self edges, endpoints must exist)."""
        if a == b:
            raise ValueError("self edges are not allowed")
        if a not in self.nodes or b not in self.nodes:
            raise ValueError("both endpoints must exist")
        self._set_edge(a, b, age)

    def _add_node(self, w: Array, capacity: int | None = None) -> ClusterNode:
        node = ClusterNode(self._next_id,
                           np.asarray(w, dtype=np.float64),
                           capacity or self._per_node_capacity())
        self.nodes[node.id] = node
        self._adjacency[node.id] = set()
        self._next_id += 1
        self._version += 1
        return node

    def _rebalance_capacities(self) -> None:
        cap = self._per_node_capacity()
        for node in self.nodes.values():
            for buf in (node.buffer_S, node.buffer_G):
                if buf.capacity != cap:
                    self.evictions += len(buf.set_capacity(cap))

    def _remove_node(self, node_id: int) -> None:
        node = self.nodes.pop(node_id)
        self._version += 1
        for key in self.edges_of(node_id):
            self._drop_edge(key)
        self._adjacency.pop(node_id, None)
        self.deletions += 1
        if self.nodes:
            for rec in node.buffer_S:
                sid, _ = self.nearest(rec.emb_s)
                if self.nodes[sid].buffer_S.append(rec) is not None:
                    self.evictions += 1
            for rec in node.buffer_G:
                gid, _ = self.nearest(rec.emb_g)
                rec.goal_node_id = gid
                if self.nodes[gid].buffer_G.append(rec) is not None:
                    self.evictions += 1
        self._rebalance_capacities()

    # ------------------------------------------------------------ operators

    def apply_delete_operator(self) -> list[int]:
        """Three pruning rules, in order: stale error counters, too-close edge
        pairs (the emptier endpoint goes), then edgeless nodes. The first two
        rules only touch nodes selected at least ``n_del`` times; the graph
        never shrinks below one node."""
        cfg = self.cfg
        deleted: list[int] = []

        for nid in sorted(self.nodes):
            if len(self.nodes) <= 1:
                break
            node = self.nodes.get(nid)
            if node is None:
                continue
            if node.error_count > cfg.delta_error and node.selection_count >= cfg.n_del:
                self._remove_node(nid)
                deleted.append(nid)

        if self.edges:
            keys = sorted(self.edges)
            ends = np.array(keys)
            w_a = np.stack([self.nodes[a].w for a, _ in keys])
            w_b = np.stack([self.nodes[b].w for _, b in keys])
            gaps = np.linalg.norm(w_a - w_b, axis=1)
            for idx in np.flatnonzero(gaps < cfg.delta_prox):
                if len(self.nodes) <= 1:
                    break
                a, b = int(ends[idx, 0]), int(ends[idx, 1])
                if a not in self.nodes or b not in self.nodes:
                    continue
                na, nb = self.nodes[a], self.nodes[b]
                # emptier endpoint is the merge victim; ties keep the older node
                victim = na if (na.count(), -na.id) < (nb.count(), -nb.id) else nb
                if victim.selection_count >= cfg.n_del:
                    self._remove_node(victim.id)
                    deleted.append(victim.id)

        for nid in sorted(self.nodes):
            if len(self.nodes) <= 1:
                break
            if not self._adjacency.get(nid):
                self._remove_node(nid)
                deleted.append(nid)
        return deleted

    def apply_moving_operator(self, e: Array, closest_id: int) -> list[int]:
        """Pull the winner toward the sample, neighbors far more gently."""
        e = np.asarray(e, dtype=np.float64)
        closest = self.nodes[closest_id]
        closest.w += self.cfg.alpha * (e - closest.w)
        moved = [closest_id]
        for nid in self.neighbors(closest_id):
            node = self.nodes[nid]
            node.w += self.cfg.alpha_neighbors * (e - node.w)
            moved.append(nid)
        self._version += 1
        return moved

    def apply_edge_operator(self, e: Array, e_prev: Array, report: StepReport) -> None:
        """Refresh the edge between the winners of a consecutive pair, age the
        current winner's other edges, prune the too-old ones."""
        winner, _ = self.nearest(e)
        winner_prev, _ = self.nearest(e_prev)
        fresh_key = None
        if winner != winner_prev:
            fresh_key = _edge_key(winner, winner_prev)
            if fresh_key not in self.edges:
                report.edges_added.append(fresh_key)
            self._set_edge(winner, winner_prev, 0)
        for key in self.edges_of(winner):
            if key == fresh_key:
                continue
            self.edges[key] += 1
            if self.edges[key] > self.cfg.delta_age:
                self._drop_edge(key)
                report.edges_removed.append(key)

    def step(self, e: Array, e_prev: Array, goal: Array | None,
             origin_id: int | None) -> StepReport:
        """One full update from a sample (reached embedding, previous
        embedding, goal embedding, originating node). Deletions short-circuit
        the rest of the pipeline for this sample."""
        e = np.asarray(e, dtype=np.float64)
        e_prev = np.asarray(e_prev, dtype=np.float64)
        if e.shape != (self.d,) or e_prev.shape != (self.d,):
            raise ValueError(f"expected embeddings of dimension {self.d}")
        report = StepReport()

        closest_id, dist = self.nearest(e)
        if origin_id is not None and origin_id in self.nodes:
            self.nodes[origin_id].error_count += 1
        self.nodes[closest_id].error_count = 0

        report.deleted = self.apply_delete_operator()
        if report.deleted:
            report.stopped_after_delete = True
            return report

        goal_ok = (goal is None
                   or np.isinf(self.cfg.delta_success)
                   or float(np.linalg.norm(np.asarray(goal) - e)) <= self.cfg.delta_success)

        closest = self.nodes[closest_id]
        created = False
        if (dist > self.cfg.delta_new
                and closest.selection_count >= self.cfg.delta_count
                and goal_ok):
            node = self._add_node(e)
            self._set_edge(node.id, closest_id, 0)
            self.creations += 1
            created = True
            report.created.append(node.id)
            report.edges_added.append(_edge_key(node.id, closest_id))
            self._rebalance_capacities()

        if not created and goal_ok:
            report.moved = self.apply_moving_operator(e, closest_id)

        self.apply_edge_operator(e, e_prev, report)
        return report

    # -------------------------------------------------------- verification

    def check_invariants(self) -> list[str]:
        problems = []
        if not self.nodes:
            problems.append("graph is empty")
        for (a, b), age in self.edges.items():
            if a == b:
                problems.append(f"self edge on {a}")
            if a > b:
                problems.append(f"edge key ({a},{b}) not ordered")
            if a not in self.nodes or b not in self.nodes:
                problems.append(f"dangling edge ({a},{b})")
            if age < 0:
                problems.append(f"negative age on ({a},{b})")
        for node in self.nodes.values():
            if node.error_count < 0 or node.selection_count < 0:
                problems.append(f"negative counter on {node.id}")
            if node.w.shape != (self.d,) or not np.all(np.isfinite(node.w)):
                problems.append(f"bad reference vector on {node.id}")
        mirrored = {_edge_key(a, b) for a, nbrs in self._adjacency.items()
                    for b in nbrs}
        if mirrored != set(self.edges):
            problems.append("adjacency index out of sync with edges")
        return problems

    # ------------------------------------------------------- serialization

    def serialize(self) -> str:
        """Line-oriented text form: one node record per line, then edges."""
        lines = [f"topology d={self.d} nodes={len(self.nodes)} edges={len(self.edges)}"]
        for nid in sorted(self.nodes):
            n = self.nodes[nid]
            coords = " ".join(repr(float(x)) for x in n.w)
            lines.append(
                f"node {nid} {n.error_count} {n.selection_count} "
                f"{repr(float(n.ext_value))} {len(n.buffer_S)} {len(n.buffer_G)} {coords}"
            )
        for (a, b) in sorted(self.edges):
            lines.append(f"edge {a} {b} {self.edges[(a, b)]}")
        return "\n".join(lines) + "\n"


def parse_topology_text(text: str) -> dict:
    """Parse the serialized graph back into plain data (used by exports and
    round-trip checks; buffers are recorded as occupancy counts only)."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = lines[0].split()
    if header[0] != "topology":
        raise ValueError("not a topology file")
    meta = dict(kv.split("=") for kv in header[1:])
    out = {"d": int(meta["d"]), "nodes": {}, "edges": {}}
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "node":
            nid = int(parts[1])
            out["nodes"][nid] = {
                "error_count": int(parts[2]),
                "selection_count": int(parts[3]),
                "ext_value": float(parts[4]),
                "count_s": int(parts[5]),
                "count_g": int(parts[6]),
                "w": np.array([float(x) for x in parts[7:]], dtype=np.float64),
            }
        elif parts[0] == "edge":
            out["edges"][(int(parts[1]), int(parts[2]))] = int(parts[3])
        elif parts[0] in ("cell", "adj"):
            continue  # gridworld export extension records
        else:
            raise ValueError(f"unknown record {parts[0]!r}")
    return out


def serialize_parsed(parsed: dict) -> str:
    """Re-serialize parsed graph data; byte-identical for round trips."""
    lines = [
        f"topology d={parsed['d']} nodes={len(parsed['nodes'])} edges={len(parsed['edges'])}"
    ]
    for nid in sorted(parsed["nodes"]):
        n = parsed["nodes"][nid]
        coords = " ".join(repr(float(x)) for x in n["w"])
        lines.append(
            f"node {nid} {n['error_count']} {n['selection_count']} "
            f"{repr(float(n['ext_value']))} {n['count_s']} {n['count_g']} {coords}"
        )
    for (a, b) in sorted(parsed["edges"]):
        lines.append(f"edge {a} {b} {parsed['edges'][(a, b)]}")
    return "\n".join(lines) + "\n"
