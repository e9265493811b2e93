import numpy as np
import pytest

from toposkill.encoder import ContrastiveConfig, EncoderParams
from toposkill.store import RingBuffer, StoredTransition, Transition
from toposkill.topology import OegnConfig, TopologyGraph


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_cfg():
    return ContrastiveConfig(k=1.5, k_c=3.0, delta=0.2, beta=0.5, n_neg=3,
                             n_neurons=12, hidden_layers=2, learning_rate=1e-3)


@pytest.fixture
def small_params(small_cfg, rng):
    params = EncoderParams(5, 4, small_cfg, rng)
    # desync target weights so the consistency term carries gradient
    for p in params.target.params:
        p += 0.05 * rng.normal(size=p.shape)
    return params


def make_graph(d=3, delta_new=1.0, budget=200, seed=7, **overrides) -> TopologyGraph:
    cfg = OegnConfig(delta_new=delta_new, **overrides)
    return TopologyGraph(cfg, d, budget, np.random.default_rng(seed))


def place_nodes(graph: TopologyGraph, positions) -> list[int]:
    """Pin the graph to exact node positions (keeps the initial two ids)."""
    ids = sorted(graph.nodes)
    for nid in ids[len(positions):]:
        graph._remove_node(nid)
    while len(graph.nodes) < len(positions):
        graph._add_node(np.zeros(graph.d))
    ids = sorted(graph.nodes)
    for nid, pos in zip(ids, positions):
        graph.nodes[nid].w = np.asarray(pos, dtype=np.float64)
    graph._version += 1
    for key in list(graph.edges):
        graph._drop_edge(key)
    return ids


def stored(next_state, emb_s, goal_state=None, emb_g=None, goal_node=None,
           state=None, action=0, reward=0.0, episode=0, step=0):
    tr = Transition(
        state if state is not None else np.asarray(next_state, dtype=float),
        action, np.asarray(next_state, dtype=float),
        None if goal_state is None else np.asarray(goal_state, dtype=float),
        reward, False, episode, step)
    return StoredTransition(tr, np.asarray(emb_s, dtype=float),
                            None if emb_g is None else np.asarray(emb_g, dtype=float),
                            goal_node)


def fill_buffer(buf: RingBuffer, records):
    for rec in records:
        buf.append(rec)
