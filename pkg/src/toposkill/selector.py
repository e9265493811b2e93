"""State-independent high-level policy over clusters.

Chooses where to practice next by mixing each cluster's tracked extrinsic
value with a novelty bonus (log of its occupancy, weighted by a skew
exponent), then picks a concrete goal state from inside the chosen cluster
by rejection-sampling a point in the cluster's cover ball.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidStateError
from .store import EmbedFn, goal_candidates
from .topology import TopologyGraph

Array = np.ndarray


@dataclass
class SelectorConfig:
    t_ext: float = 0.0                   # extrinsic-value temperature
    alpha_skew_prime_plus1: float = -1.0  # novelty exponent on log occupancy
    alpha_c: float = 0.05                # cluster-value learning rate
    neighbor_rate: float = 0.0           # fraction of alpha_c applied to neighbors
    max_goal_tries: int = 16
    inherit_value_on_create: bool = True

    def __post_init__(self):
        if not 0.0 < self.alpha_c <= 1.0:
            raise ValueError("alpha_c must lie in (0, 1]")
        if self.neighbor_rate < 0:
            raise ValueError("neighbor_rate must be non-negative")


def update_cluster_value(graph: TopologyGraph, node_id: int,
                         episode_mean_reward: float, cfg: SelectorConfig) -> None:
    """Move the node's extrinsic value toward the episode's mean reward, and
    its direct neighbors by a slower rate toward the same value."""
    if not np.isfinite(episode_mean_reward):
        raise ValueError("episode reward must be finite")
    node = graph.nodes[node_id]
    node.ext_value = (1.0 - cfg.alpha_c) * node.ext_value + cfg.alpha_c * episode_mean_reward
    rate = cfg.neighbor_rate * cfg.alpha_c
    if rate > 0.0:
        for nid in graph.neighbors(node_id):
            nb = graph.nodes[nid]
            nb.ext_value = (1.0 - rate) * nb.ext_value + rate * episode_mean_reward


def high_level_distribution(graph: TopologyGraph,
                            cfg: SelectorConfig) -> tuple[list[int], Array]:
    """Softmax over ``t_ext * value + exponent * log(occupancy)`` for every
    non-empty cluster. Returns (sorted node ids, probabilities)."""
    ids = [nid for nid in sorted(graph.nodes) if graph.nodes[nid].count() > 0]
    if not ids:
        raise InvalidStateError("every cluster is empty")
    values = np.array([graph.nodes[nid].ext_value for nid in ids])
    counts = np.array([graph.nodes[nid].count() for nid in ids], dtype=np.float64)
    logits = cfg.t_ext * values + cfg.alpha_skew_prime_plus1 * np.log(counts)
    logits -= logits.max()
    probs = np.exp(logits)
    probs /= probs.sum()
    return ids, probs


def _uniform_ball_point(center: Array, radius: float,
                        rng: np.random.Generator) -> Array:
    d = center.shape[0]
    direction = rng.standard_normal(d)
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        return center.copy()
    r = radius * rng.random() ** (1.0 / d)
    return center + (r / norm) * direction


def sample_goal_state(graph: TopologyGraph, node_id: int, embed_target: EmbedFn,
                      cfg: SelectorConfig, rng: np.random.Generator,
                      ball_radius: float | None = None,
                      ) -> tuple[Array, Array] | None:
    """Pick a stored state of the cluster as the next goal.

    Draws uniform points in the ball of the cluster's cover radius around its
    reference vector, rejecting points whose winner is a different cluster;
    the accepted point selects the stored state with the closest cached
    embedding. When every try is rejected, falls back to a uniform stored
    state. Returns ``(goal_state, fresh target embedding)`` and increments
    the node's selection count; returns None when the cluster stores nothing
    (caller should redraw another cluster).
    """
    node = graph.nodes[node_id]
    cands = goal_candidates(node)
    if not cands:
        return None
    radius = graph.cfg.delta_new if ball_radius is None else ball_radius
    chosen = None
    for _ in range(cfg.max_goal_tries):
        point = _uniform_ball_point(node.w, radius, rng)
        if graph.nearest(point)[0] == node_id:
            chosen = point
            break
    if chosen is None:
        idx = int(rng.integers(len(cands)))
    else:
        embs = np.stack([emb for _, emb in cands])
        idx = int(np.argmin(np.linalg.norm(embs - chosen, axis=1)))
    goal_state = cands[idx][0]
    g = np.asarray(embed_target(goal_state), dtype=np.float64)
    node.selection_count += 1
    return goal_state, g


def draw_goal(graph: TopologyGraph, embed_target: EmbedFn, cfg: SelectorConfig,
              rng: np.random.Generator, max_cluster_redraws: int = 16,
              ) -> tuple[int, Array, Array, tuple[list[int], Array]] | None:
    """Full goal selection: sample a cluster from the high-level distribution,
    then a goal state within it, redrawing on empty clusters. Returns
    ``(node_id, goal_state, goal_embedding, distribution)`` or None if no
    cluster can currently provide a goal."""
    ids, probs = high_level_distribution(graph, cfg)
    for _ in range(max_cluster_redraws):
        node_id = int(ids[rng.choice(len(ids), p=probs)])
        picked = sample_goal_state(graph, node_id, embed_target, cfg, rng)
        if picked is not None:
            return node_id, picked[0], picked[1], (ids, probs)
    for node_id in ids:  # deterministic sweep before giving up
        picked = sample_goal_state(graph, node_id, embed_target, cfg, rng)
        if picked is not None:
            return node_id, picked[0], picked[1], (ids, probs)
    return None
