"""Per-cluster replay storage, skewed cluster sampling, and goal relabeling.

Every cluster owns two bounded FIFO buffers: one keyed by where a transition
ended up (state buffer) and one keyed by what it was aiming for (goal
buffer). A single shared record backs both routes, and each record caches the
embeddings used at routing time so deletions can re-route without touching
the encoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from .errors import InvalidStateError, NotReadyError

if TYPE_CHECKING:  # avoid a circular import; topology imports the buffers
    from .topology import TopologyGraph

Array = np.ndarray
EmbedFn = Callable[[Array], Array]


@dataclass
class Transition:
    """One environment step plus the goal it was collected under."""

    state: Array
    action: object
    next_state: Array
    goal_state: Array | None
    ext_reward: float
    done: bool
    episode_id: int
    step_index: int


@dataclass
class StoredTransition:
    """Buffer record shared between a state route and a goal route."""

    transition: Transition
    emb_s: Array                 # target embedding of next_state at routing time
    emb_g: Array | None = None   # target embedding of goal_state at routing time
    goal_node_id: int | None = None


class RingBuffer:
    """Bounded FIFO with O(1) append, random access, and oldest-first eviction."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self._capacity = capacity
        self._items: list = []
        self._start = 0  # index of the oldest element

    @property
    def capacity(self) -> int:
        return self._capacity

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, i: int):
        n = len(self._items)
        if not 0 <= i < n:
            raise IndexError(i)
        return self._items[(self._start + i) % n]

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def append(self, item) -> object | None:
        """Add newest item; returns the evicted oldest item when full."""
        if len(self._items) < self._capacity:
            self._items.append(item)
            return None
        evicted = self._items[self._start]
        self._items[self._start] = item
        self._start = (self._start + 1) % self._capacity
        return evicted

    def set_capacity(self, capacity: int) -> list:
        """Resize, dropping oldest items if needed; returns what was dropped."""
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        ordered = list(self)
        dropped = ordered[: max(0, len(ordered) - capacity)]
        self._items = ordered[max(0, len(ordered) - capacity):]
        self._start = 0
        self._capacity = capacity
        return dropped


@dataclass
class SampledItem:
    """One learning-batch slot: the record plus where it came from."""

    record: StoredTransition
    node_id: int
    from_goal_buffer: bool


def route_transition(graph: "TopologyGraph", embed_target: EmbedFn,
                     t: Transition) -> tuple[int, int | None]:
    """Store a transition in the buffers of its nearest clusters.

    The reached state routes into the winner's state buffer; the goal (when
    present) routes into its winner's goal buffer. Returns both node ids
    (goal id is None for goal-free transitions).
    """
    emb_s = np.asarray(embed_target(t.next_state), dtype=np.float64)
    record = StoredTransition(t, emb_s)
    sid, _ = graph.nearest(emb_s)
    if graph.nodes[sid].buffer_S.append(record) is not None:
        graph.evictions += 1
    gid: int | None = None
    if t.goal_state is not None:
        emb_g = np.asarray(embed_target(t.goal_state), dtype=np.float64)
        gid, _ = graph.nearest(emb_g)
        record.emb_g = emb_g
        record.goal_node_id = gid
        if graph.nodes[gid].buffer_G.append(record) is not None:
            graph.evictions += 1
    return sid, gid


def total_stored(graph: "TopologyGraph") -> int:
    return sum(len(node.buffer_S) for node in graph.nodes.values())


def skewed_cluster_distribution(graph: "TopologyGraph",
                                alpha_exponent: float) -> tuple[list[int], Array]:
    """Probabilities proportional to (state-buffer occupancy)**alpha_exponent.

    Empty clusters are excluded from the support for every exponent. Returns
    (sorted node ids, probabilities over them).
    """
    ids = [nid for nid in sorted(graph.nodes) if len(graph.nodes[nid].buffer_S) > 0]
    if not ids:
        raise InvalidStateError("no cluster holds any state yet")
    counts = np.array([len(graph.nodes[nid].buffer_S) for nid in ids], dtype=np.float64)
    weights = counts ** alpha_exponent
    return ids, weights / weights.sum()


def draw_cluster(graph: "TopologyGraph", alpha_exponent: float,
                 rng: np.random.Generator,
                 override: tuple[list[int], Array] | None = None) -> int:
    ids, probs = override if override is not None else skewed_cluster_distribution(
        graph, alpha_exponent)
    # inverse-CDF draw; cheaper than rng.choice(p=...) in tight loops
    idx = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    return int(ids[min(idx, len(ids) - 1)])


@dataclass
class LearningMixConfig:
    alpha_skew_plus1: float = 0.0   # exponent of the density-skewed draw
    high_ratio: float = 0.0         # fraction of slots drawn via the high-level policy
    max_retries: int = 16


def sample_learning_batch(graph: "TopologyGraph", batch_size: int,
                          mix: LearningMixConfig, rng: np.random.Generator,
                          high_dist: tuple[list[int], Array] | None = None,
                          ) -> list[SampledItem]:
    """Draw a learning batch: cluster by skewed density (or the high-level
    policy), then a transition from that cluster's goal or state buffer with
    equal probability. Empty picks are redrawn a bounded number of times and
    then fall back to the first non-empty buffer in id order.
    """
    if total_stored(graph) < batch_size:
        raise NotReadyError(
            f"need {batch_size} stored transitions, have {total_stored(graph)}"
        )
    skew_ids, skew_probs = skewed_cluster_distribution(graph, mix.alpha_skew_plus1)
    skew_cum = np.cumsum(skew_probs)
    high_cum = None
    if high_dist is not None:
        high_cum = (high_dist[0], np.cumsum(high_dist[1]))
    out: list[SampledItem] = []
    for _ in range(batch_size):
        item = None
        for _attempt in range(mix.max_retries):
            use_high = high_cum is not None and rng.random() < mix.high_ratio
            ids, cum = high_cum if use_high else (skew_ids, skew_cum)
            idx = int(np.searchsorted(cum, rng.random(), side="right"))
            cid = int(ids[min(idx, len(ids) - 1)])
            node = graph.nodes[cid]
            from_goal = bool(rng.random() < 0.5)
            buf = node.buffer_G if from_goal else node.buffer_S
            if len(buf) > 0:
                item = SampledItem(buf[int(rng.integers(len(buf)))], cid, from_goal)
                break
        if item is None:
            item = _fallback_item(graph, rng)
        out.append(item)
    return out


def _fallback_item(graph: "TopologyGraph", rng: np.random.Generator) -> SampledItem:
    """Deterministic buffer choice (lowest id, goal buffer first), uniform item."""
    for nid in sorted(graph.nodes):
        node = graph.nodes[nid]
        for from_goal, buf in ((True, node.buffer_G), (False, node.buffer_S)):
            if len(buf) > 0:
                return SampledItem(buf[int(rng.integers(len(buf)))], nid, from_goal)
    raise InvalidStateError("all buffers empty")


def candidate_state(record: StoredTransition, from_goal_buffer: bool) -> tuple[Array, Array]:
    """The (ground state, cached embedding) a buffered record contributes as a
    goal candidate: the reached state on the state route, the stored goal on
    the goal route."""
    if from_goal_buffer:
        return record.transition.goal_state, record.emb_g
    return record.transition.next_state, record.emb_s


def goal_candidates(node) -> list[tuple[Array, Array]]:
    """All goal candidates a cluster currently stores."""
    cands = [(rec.transition.next_state, rec.emb_s) for rec in node.buffer_S]
    cands += [(rec.transition.goal_state, rec.emb_g) for rec in node.buffer_G]
    return cands


RELABEL_STRATEGIES = ("uniform", "high_level", "topological")


@dataclass
class RelabelStats:
    relabeled: int = 0
    isolated_fallbacks: int = 0
    empty_fallbacks: int = 0


def relabel(batch: Sequence[SampledItem], strategy: str, graph: "TopologyGraph",
            mix: LearningMixConfig, rng: np.random.Generator,
            fraction: float = 0.5,
            high_dist: tuple[list[int], Array] | None = None,
            ) -> tuple[list[Transition], RelabelStats]:
    """Return transition copies with goals replaced per the chosen strategy.

    Strategies:

    * ``uniform`` - state-buffer samples get a goal drawn by skewed cluster
      choice then uniformly within that cluster's state buffer.
    * ``high_level`` - state-buffer samples get a goal from a cluster drawn
      by the high-level policy distribution.
    * ``topological`` - samples from both buffers get a goal from a uniformly
      chosen neighboring cluster (own cluster when isolated, counted).

    Only ``fraction`` of the eligible samples are relabeled, except that a
    transition stored without any goal always receives one. Downstream
    rewards must be recomputed: only ``goal_state`` changes here.
    """
    if strategy not in RELABEL_STRATEGIES:
        raise ValueError(f"unknown relabel strategy {strategy!r}")
    stats = RelabelStats()
    out: list[Transition] = []
    skew = skewed_cluster_distribution(graph, mix.alpha_skew_plus1)
    for item in batch:
        eligible = not item.from_goal_buffer or strategy == "topological"
        forced = item.record.transition.goal_state is None
        if forced or (eligible and rng.random() < fraction):
            goal = _draw_goal(item, strategy, graph, rng, skew, high_dist, stats)
            out.append(replace(item.record.transition, goal_state=goal))
            stats.relabeled += 1
        else:
            out.append(item.record.transition)
    return out, stats


def _uniform_candidate(node, rng: np.random.Generator,
                       state_buffer_only: bool = False) -> Array | None:
    """Uniform goal candidate from a cluster's buffers without materializing
    them: reached states on the state route, stored goals on the goal route."""
    n_s = len(node.buffer_S)
    n_g = 0 if state_buffer_only else len(node.buffer_G)
    total = n_s + n_g
    if total == 0:
        return None
    j = int(rng.integers(total))
    if j < n_s:
        return node.buffer_S[j].transition.next_state
    return node.buffer_G[j - n_s].transition.goal_state


def _draw_goal(item: SampledItem, strategy: str, graph: "TopologyGraph",
               rng: np.random.Generator, skew, high_dist, stats: RelabelStats) -> Array:
    if strategy == "topological":
        neighbors = graph.neighbors(item.node_id)
        if neighbors:
            cid = int(neighbors[int(rng.integers(len(neighbors)))])
        else:
            cid = item.node_id
            stats.isolated_fallbacks += 1
        goal = _uniform_candidate(graph.nodes[cid], rng)
        if goal is None:
            goal = _uniform_candidate(graph.nodes[item.node_id], rng)
    elif strategy == "high_level":
        dist = high_dist if high_dist is not None else skew
        cid = draw_cluster(graph, 0.0, rng, override=dist)
        goal = _uniform_candidate(graph.nodes[cid], rng)
    else:  # uniform
        cid = draw_cluster(graph, 0.0, rng, override=skew)
        goal = _uniform_candidate(graph.nodes[cid], rng, state_buffer_only=True)
    if goal is None:
        stats.empty_fallbacks += 1
        return item.record.transition.next_state
    return goal
