import numpy as np
import pytest

from conftest import make_graph, place_nodes, stored
from toposkill import selector as sel
from toposkill.errors import InvalidStateError
from toposkill.selector import SelectorConfig
from toposkill.store import skewed_cluster_distribution


def _graph(counts, values=None, positions=None, rng=None, budget=100_000):
    g = make_graph(d=2, budget=budget)
    if positions is None:
        positions = [[10.0 * i, 0.0] for i in range(len(counts))]
    ids = place_nodes(g, positions)
    rng = rng or np.random.default_rng(0)
    for j, (nid, n) in enumerate(zip(ids, counts)):
        g.nodes[nid].ext_value = 0.0 if values is None else values[j]
        for i in range(n):
            pos = [positions[j][0] + rng.normal() * 0.2, rng.normal() * 0.2]
            g.nodes[nid].buffer_S.append(stored(pos, pos))
    return g, ids


# ------------------------------------------------------------ value updates


def test_value_update_moves_by_learning_rate():
    g, ids = _graph([1])
    cfg = SelectorConfig(alpha_c=0.05)
    sel.update_cluster_value(g, ids[0], 1.0, cfg)
    assert g.nodes[ids[0]].ext_value == pytest.approx(0.05)


def test_value_update_fixed_point():
    g, ids = _graph([1])
    g.nodes[ids[0]].ext_value = -0.75
    sel.update_cluster_value(g, ids[0], -0.75, SelectorConfig())
    assert g.nodes[ids[0]].ext_value == pytest.approx(-0.75)


def test_value_update_neighbor_rate_zero_leaves_neighbors():
    g, ids = _graph([1, 1])
    g.set_edge(ids[0], ids[1], 0)
    sel.update_cluster_value(g, ids[0], 5.0, SelectorConfig(neighbor_rate=0.0))
    assert g.nodes[ids[1]].ext_value == 0.0


def test_value_update_neighbor_propagation():
    g, ids = _graph([1, 1, 1])
    g.set_edge(ids[0], ids[1], 0)
    cfg = SelectorConfig(alpha_c=0.1, neighbor_rate=0.2)
    sel.update_cluster_value(g, ids[0], 1.0, cfg)
    assert g.nodes[ids[0]].ext_value == pytest.approx(0.1)
    assert g.nodes[ids[1]].ext_value == pytest.approx(0.02)   # 0.2 * alpha_c
    assert g.nodes[ids[2]].ext_value == 0.0                   # not a neighbor


def test_value_update_rejects_non_finite():
    g, ids = _graph([1])
    with pytest.raises(ValueError):
        sel.update_cluster_value(g, ids[0], float("nan"), SelectorConfig())


# ----------------------------------------------------- softmax distribution


def test_distribution_reduces_to_skew_when_temperature_zero():
    g, _ = _graph([10, 40, 50], values=[5.0, -3.0, 0.5])
    for expo in (-1.0, -0.5, 0.0, 1.0):
        cfg = SelectorConfig(t_ext=0.0, alpha_skew_prime_plus1=expo)
        ids_a, probs_a = sel.high_level_distribution(g, cfg)
        ids_b, probs_b = skewed_cluster_distribution(g, expo)
        assert ids_a == ids_b
        assert np.max(np.abs(probs_a - probs_b)) < 1e-12


def test_distribution_shift_invariance():
    g, ids = _graph([10, 40, 50], values=[0.3, -1.2, 0.9])
    cfg = SelectorConfig(t_ext=7.0, alpha_skew_prime_plus1=-0.5)
    _, before = sel.high_level_distribution(g, cfg)
    for nid in ids:
        g.nodes[nid].ext_value += 123.456
    _, after = sel.high_level_distribution(g, cfg)
    assert np.max(np.abs(before - after)) < 1e-12


def test_distribution_prefers_high_value_at_high_temperature():
    g, ids = _graph([20, 20], values=[0.0, 1.0])
    cfg = SelectorConfig(t_ext=100.0, alpha_skew_prime_plus1=0.0)
    got_ids, probs = sel.high_level_distribution(g, cfg)
    assert probs[got_ids.index(ids[1])] > 1.0 - 1e-9


def test_distribution_uniform_under_symmetry():
    g, _ = _graph([25, 25, 25], values=[0.4, 0.4, 0.4])
    cfg = SelectorConfig(t_ext=3.0, alpha_skew_prime_plus1=-1.0)
    _, probs = sel.high_level_distribution(g, cfg)
    assert np.allclose(probs, 1 / 3, atol=1e-12)
    assert probs.sum() == pytest.approx(1.0, abs=1e-9)


def test_distribution_excludes_empty_and_raises_when_all_empty():
    g, ids = _graph([5, 0])
    got_ids, _ = sel.high_level_distribution(g, SelectorConfig())
    assert got_ids == [ids[0]]
    g2, _ = _graph([0, 0])
    with pytest.raises(InvalidStateError):
        sel.high_level_distribution(g2, SelectorConfig())


# ------------------------------------------------------------- goal sampling


def identity_embed(state):
    return np.asarray(state, dtype=np.float64)[:2]


def test_goal_sampling_single_stored_state(rng):
    g, ids = _graph([0])
    g.nodes[ids[0]].buffer_S.append(stored([0.1, 0.0], [0.1, 0.0]))
    out = sel.sample_goal_state(g, ids[0], identity_embed, SelectorConfig(), rng)
    assert out is not None
    goal_state, emb = out
    assert np.allclose(goal_state, [0.1, 0.0])
    assert np.allclose(emb, [0.1, 0.0])
    assert g.nodes[ids[0]].selection_count == 1


def test_goal_sampling_empty_cluster_signals_redraw(rng):
    g, ids = _graph([0])
    assert sel.sample_goal_state(g, ids[0], identity_embed,
                                 SelectorConfig(), rng) is None
    assert g.nodes[ids[0]].selection_count == 0


def test_goal_sampling_returns_state_of_requested_cluster(rng):
    g, ids = _graph([40, 40], rng=rng)
    mat = np.stack([g.nodes[i].w for i in ids])
    for _ in range(50):
        out = sel.sample_goal_state(g, ids[1], identity_embed,
                                    SelectorConfig(), rng)
        goal_state, emb = out
        nearest = ids[int(np.argmin(np.linalg.norm(mat - emb, axis=1)))]
        assert nearest == ids[1]


def test_goal_sampling_rejection_fallback_under_adversarial_geometry(rng):
    # the requested node is completely shadowed by a second node at the same
    # position, which wins every tie (lower id); the ball sampler must give
    # up and fall back to a stored state
    g = make_graph(d=2, budget=1000)
    ids = place_nodes(g, [[0.0, 0.0], [0.0, 0.0]])
    shadowed = ids[1]
    g.nodes[shadowed].buffer_S.append(stored([0.05, 0.0], [0.05, 0.0]))
    out = sel.sample_goal_state(g, shadowed, identity_embed,
                                SelectorConfig(max_goal_tries=16), rng)
    assert out is not None
    assert np.allclose(out[0], [0.05, 0.0])


def test_goal_embedding_uses_target_weights(rng):
    # embed function stands in for the target network: goal embeddings follow
    # it, not any later online change
    calls = []

    def tracked(state):
        calls.append(True)
        return np.asarray(state, dtype=np.float64)[:2] * 2.0

    g, ids = _graph([3], rng=rng)
    out = sel.sample_goal_state(g, ids[0], tracked, SelectorConfig(), rng)
    assert calls, "goal embedding must be recomputed through the target encoder"
    assert np.allclose(out[1], np.asarray(out[0])[:2] * 2.0)


def test_selection_count_increments_once_per_sample(rng):
    g, ids = _graph([10], rng=rng)
    for expected in (1, 2, 3):
        sel.sample_goal_state(g, ids[0], identity_embed, SelectorConfig(), rng)
        assert g.nodes[ids[0]].selection_count == expected


def test_draw_goal_redraws_past_empty_clusters(rng):
    g, ids = _graph([0, 10], rng=rng)
    cfg = SelectorConfig(t_ext=0.0, alpha_skew_prime_plus1=0.0)
    out = sel.draw_goal(g, identity_embed, cfg, rng)
    assert out is not None
    node_id, goal_state, emb, _ = out
    assert node_id == ids[1]
