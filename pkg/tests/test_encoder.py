import math

import numpy as np
import pytest

from toposkill import encoder as enc
from toposkill.encoder import ContrastiveConfig, EncoderParams
from toposkill.nets import finite_difference_grads, max_relative_grad_error


def identity_params(dim=3, **cfg_overrides) -> EncoderParams:
    """Linear encoder pinned to the identity map; embeddings equal inputs."""
    cfg = ContrastiveConfig(n_neg=1, hidden_layers=0, **cfg_overrides)
    params = EncoderParams(dim, dim, cfg, np.random.default_rng(0))
    params.online.params[0][:] = np.eye(dim)
    params.online.params[1][:] = 0.0
    params.target = params.online.copy()
    return params


# ---------------------------------------------------------------- similarity


def test_similarity_identical_embeddings_is_one():
    e = np.array([0.3, -1.2, 4.0])
    assert enc.similarity(e, e, k=2.0) == 1.0


def test_similarity_unit_distance():
    e1 = np.array([0.0, 0.0])
    e2 = np.array([1.0, 0.0])
    assert enc.similarity(e1, e2, k=1.0) == pytest.approx(math.exp(-1.0), abs=1e-12)


def test_similarity_half_distance_high_temperature():
    # distance 0.5 at temperature 3 -> exp(-1.5)
    e1 = np.zeros(3)
    e2 = np.array([0.5, 0.0, 0.0])
    assert enc.similarity(e1, e2, k=3.0) == pytest.approx(math.exp(-1.5), abs=1e-12)


def test_similarity_bounds_on_random_inputs(rng):
    for _ in range(200):
        e1 = rng.normal(size=4) * rng.uniform(0.1, 50)
        e2 = rng.normal(size=4) * rng.uniform(0.1, 50)
        s = enc.similarity(e1, e2, k=rng.uniform(0.1, 10))
        assert 0.0 < s <= 1.0
        assert (s == 1.0) == bool(np.array_equal(e1, e2))


def test_similarity_rejects_bad_temperature():
    with pytest.raises(ValueError):
        enc.similarity(np.zeros(2), np.ones(2), k=0.0)


# ------------------------------------------------------------------ encoding


def test_encode_zero_output_layer_gives_zero_vector(small_params, rng):
    small_params.online.params[-2][:] = 0.0
    small_params.online.params[-1][:] = 0.0
    out = enc.encode(small_params, rng.normal(size=5))
    assert np.array_equal(out, np.zeros(4))


def test_encode_deterministic(small_params, rng):
    state = rng.normal(size=5)
    a = enc.encode(small_params, state)
    b = enc.encode(small_params, state)
    assert np.array_equal(a, b)


def test_encode_rejects_wrong_dimension(small_params):
    with pytest.raises(ValueError):
        enc.encode(small_params, np.zeros(7))


def test_target_unchanged_by_zero_rate_update(small_params, rng):
    probe = rng.normal(size=5)
    before = enc.encode(small_params, probe, use_target=True)
    enc.update_target(small_params, alpha_slow=0.0)
    after = enc.encode(small_params, probe, use_target=True)
    assert np.array_equal(before, after)


# ------------------------------------------------------------- smooth update


def test_smooth_update_rate_one_copies_online(small_params):
    enc.update_target(small_params, alpha_slow=1.0)
    for t, o in zip(small_params.target.params, small_params.online.params):
        assert np.array_equal(t, o)


def test_smooth_update_rate_zero_is_identity(small_params):
    snapshot = [p.copy() for p in small_params.target.params]
    enc.update_target(small_params, alpha_slow=0.0)
    for t, s in zip(small_params.target.params, snapshot):
        assert np.array_equal(t, s)


def test_smooth_update_scalar_probe():
    params = identity_params(2)
    params.target.params[0][:] = 0.0
    params.online.params[0][:] = 1.0
    enc.update_target(params, alpha_slow=0.001)
    assert np.allclose(params.target.params[0], 0.001, atol=1e-15)


def test_target_isolated_from_gradient_steps(small_params, small_cfg, rng):
    snapshot = [p.copy() for p in small_params.target.params]
    for _ in range(5):
        states = rng.normal(size=(6, 5))
        nexts = states + 0.2 * rng.normal(size=(6, 5))
        negs = enc.sample_negative_indices(6, small_cfg.n_neg, rng)
        _, grads = enc.contrastive_loss(small_params, small_cfg, states, nexts, negs)
        enc.gradient_step(small_params, grads)
    for t, s in zip(small_params.target.params, snapshot):
        assert np.array_equal(t, s)


# ---------------------------------------------------------- negative sampling


def test_negative_indices_exclude_self_and_are_distinct(rng):
    for _ in range(50):
        idx = enc.sample_negative_indices(12, 5, rng)
        assert idx.shape == (12, 5)
        for i in range(12):
            row = idx[i]
            assert i not in row
            assert len(set(row.tolist())) == 5
            assert row.min() >= 0 and row.max() < 12


def test_negative_indices_need_enough_pairs(rng):
    with pytest.raises(ValueError):
        enc.sample_negative_indices(3, 3, rng)


# ----------------------------------------------------------------- main loss


def test_loss_rejects_empty_batch(small_params, small_cfg):
    with pytest.raises(ValueError):
        enc.contrastive_loss(small_params, small_cfg, np.zeros((0, 5)),
                             np.zeros((0, 5)), np.zeros((0, 3), dtype=int))


def test_loss_rejects_self_negative(small_params, small_cfg, rng):
    states = rng.normal(size=(4, 5))
    negs = np.array([[0, 1, 2]] * 4)  # row 0 contains its own index
    with pytest.raises(ValueError):
        enc.contrastive_loss(small_params, small_cfg, states, states, negs)


def test_attraction_inactive_below_threshold():
    # pair distance 0.1 < delta 0.5: the hinge contributes exactly nothing,
    # so the loss cannot depend on k_c
    params = identity_params(2, delta=0.5)
    states = np.array([[0.0, 0.0], [5.0, 0.0]])
    nexts = np.array([[0.1, 0.0], [5.1, 0.0]])
    negs = np.array([[1], [0]])
    losses = []
    for k_c in (1.0, 100.0):
        cfg = ContrastiveConfig(k_c=k_c, delta=0.5, beta=0.3, n_neg=1,
                                hidden_layers=0)
        losses.append(enc.contrastive_loss(params, cfg, states, nexts, negs,
                                           compute_grads=False)[0])
    assert losses[0] == losses[1]


def test_attraction_active_above_threshold():
    params = identity_params(2, delta=0.05)
    states = np.array([[0.0, 0.0], [5.0, 0.0]])
    nexts = np.array([[0.1, 0.0], [5.1, 0.0]])
    negs = np.array([[1], [0]])
    losses = []
    for k_c in (1.0, 100.0):
        cfg = ContrastiveConfig(k_c=k_c, delta=0.05, beta=0.3, n_neg=1,
                                hidden_layers=0)
        losses.append(enc.contrastive_loss(params, cfg, states, nexts, negs,
                                           compute_grads=False)[0])
    assert losses[1] > losses[0]


def test_repulsion_term_value_single_negative():
    # one pair at distance 0 and one negative at distance 1 with k=1:
    # loss reduces to log(1 + e^-1)
    params = identity_params(2, k=1.0, delta=0.5)
    states = np.array([[0.0, 0.0], [10.0, 10.0]])
    nexts = states.copy()
    negs = np.array([[1], [0]])
    cfg = ContrastiveConfig(k=1.0, k_c=2.0, delta=0.5, beta=0.7, n_neg=1,
                            hidden_layers=0)
    # move the second pair so pair 0's negative sits at distance exactly 1
    states[1] = nexts[1] = np.array([1.0, 0.0])
    loss, _ = enc.contrastive_loss(params, cfg, states, nexts, negs)
    assert loss == pytest.approx(math.log(1 + math.exp(-1.0)), abs=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    cfg = ContrastiveConfig(k=1.5, k_c=3.0, delta=0.2, beta=0.5, n_neg=3,
                            n_neurons=10, hidden_layers=2)
    params = EncoderParams(4, 3, cfg, rng)
    for p in params.target.params:
        p += 0.05 * rng.normal(size=p.shape)
    states = rng.normal(size=(5, 4))
    nexts = states + 0.3 * rng.normal(size=(5, 4))
    negs = enc.sample_negative_indices(5, 3, rng)
    _, grads = enc.contrastive_loss(params, cfg, states, nexts, negs)
    numeric = finite_difference_grads(
        lambda: enc.contrastive_loss(params, cfg, states, nexts, negs,
                                     compute_grads=False)[0],
        params.online.params)
    assert max_relative_grad_error(grads, numeric) < 1e-4


# --------------------------------------------------------------- bound check


def test_bound_never_exceeds_exact_value(small_params, small_cfg, rng):
    for _ in range(100):
        states = rng.normal(size=(8, 5))
        nexts = states + 0.2 * rng.normal(size=(8, 5))
        negs = enc.sample_negative_indices(8, 3, rng)
        exact, bound = enc.info_nce_bound(small_params, small_cfg.k,
                                          states, nexts, negs)
        assert bound <= exact + 1e-12


def test_bound_tight_when_positive_similarity_is_one():
    params = identity_params(2)
    # consecutive states identical -> positive similarity exactly 1
    states = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]])
    negs = np.array([[1], [2], [0]])
    exact, bound = enc.info_nce_bound(params, 1.0, states, states, negs)
    assert exact == pytest.approx(bound, abs=1e-14)
