"""Contrastive state representation with a slow-moving target copy.

The encoder maps ground states to a low-dimensional embedding. Training pulls
consecutive states together (hinged on a distortion threshold), pushes
randomly sampled states apart through a log-sum repulsion, and penalizes
drift away from the target network's output. The target weights follow the
online weights through a slow exponential moving average and are the only
weights ever used for goal embeddings and rewards.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nets import Adam, Array, Mlp, smooth_update


@dataclass
class ContrastiveConfig:
    k: float = 1.0            # repulsion temperature
    k_c: float = 20.0         # attraction coefficient on the hinge term
    delta: float = 0.1        # distortion threshold: no attraction below it
    beta: float = 2.0         # consistency penalty toward the target output
    n_neg: int = 10           # negatives drawn per positive pair
    alpha_slow: float = 0.001  # target smooth-update rate
    learning_rate: float = 1e-4
    n_neurons: int = 256
    hidden_layers: int = 2
    learns_on_bg: bool = True  # include goal-buffer samples in training pairs

    def __post_init__(self):
        if self.k <= 0 or self.k_c < 0 or self.delta < 0 or self.beta < 0:
            raise ValueError("coefficients must be non-negative and k positive")
        if self.n_neg < 1:
            raise ValueError("need at least one negative sample per pair")
        if not 0.0 <= self.alpha_slow <= 1.0:
            raise ValueError("alpha_slow must lie in [0, 1]")


class EncoderParams:
    """Online and target weight sets for the state encoder.

    Target weights change only through :func:`update_target`; gradient steps
    never touch them.
    """

    def __init__(self, in_dim: int, d: int, cfg: ContrastiveConfig,
                 rng: np.random.Generator):
        sizes = [in_dim] + [cfg.n_neurons] * cfg.hidden_layers + [d]
        self.online = Mlp(sizes, rng)
        self.target = self.online.copy()
        self.d = d
        self.cfg = cfg
        self.optimizer = Adam(self.online.params, lr=cfg.learning_rate)
        self.target_version = 0  # bumped by update_target; lets callers cache

    @property
    def in_dim(self) -> int:
        return self.online.in_dim


def encode(params: EncoderParams, states: Array, use_target: bool = False) -> Array:
    """Embed one state (1-d input) or a batch (2-d input) of ground states."""
    x = np.asarray(states, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != params.in_dim:
        raise ValueError(
            f"state dimension {x.shape[1]} does not match encoder input {params.in_dim}"
        )
    net = params.target if use_target else params.online
    out = net.forward(x)
    return out[0] if single else out


_TINY = float(np.nextafter(0.0, 1.0))


def similarity(e1: Array, e2: Array, k: float) -> float:
    """exp(-k * ||e1 - e2||_2); in (0, 1], equal to 1 iff e1 == e2.

    Floored at the smallest positive float so the open lower bound survives
    exponent underflow for very distant inputs.
    """
    if k <= 0:
        raise ValueError("temperature k must be positive")
    e1 = np.asarray(e1, dtype=np.float64)
    e2 = np.asarray(e2, dtype=np.float64)
    if e1.shape != e2.shape:
        raise ValueError("embeddings must share a shape")
    return max(float(np.exp(-k * np.linalg.norm(e1 - e2))), _TINY)


def sample_negative_indices(n_pairs: int, n_neg: int,
                            rng: np.random.Generator) -> Array:
    """For each pair i, draw ``n_neg`` distinct indices from {0..n-1} \\ {i}.

    The indices address the batch's next-states; a pair never sees its own
    positive among its negatives.
    """
    if n_neg > n_pairs - 1:
        raise ValueError(
            f"n_neg={n_neg} needs at least {n_neg + 1} pairs, got {n_pairs}"
        )
    # rank random keys per row: first n_neg positions of a random permutation
    keys = rng.random((n_pairs, n_pairs - 1))
    out = np.argpartition(keys, n_neg - 1, axis=1)[:, :n_neg].astype(np.intp)
    out += out >= np.arange(n_pairs)[:, None]  # skip own index
    return out


def _pairwise_terms(emb_next: Array, negatives: Array, k: float):
    """Distances and similarities between each next-state and its negatives."""
    diff = emb_next[negatives] - emb_next[:, None, :]      # (n, n_neg, d)
    dist = np.sqrt(np.maximum((diff * diff).sum(axis=2), 0.0))
    sim = np.exp(-k * dist)
    return diff, dist, sim


def contrastive_loss(params: EncoderParams, cfg: ContrastiveConfig,
                     states: Array, next_states: Array, negatives: Array,
                     compute_grads: bool = True):
    """Mean penalized objective over consecutive pairs, plus exact gradients.

    The minimized loss per pair is::

        k_c * relu(||phi(s) - phi(s')|| - delta)        (attraction hinge)
        + log(1 + sum_neg exp(-k ||phi(neg) - phi(s')||))  (repulsion)
        + beta * ||phi(s') - phi_target(s')||^2            (consistency)

    ``negatives`` holds, for each pair, indices into the batch's next-states;
    each row must exclude the pair's own index. Target weights receive no
    gradient. Returns ``(loss, grads)`` with grads in online-parameter order
    (or ``(loss, None)`` when ``compute_grads`` is false).
    """
    states = np.asarray(states, dtype=np.float64)
    next_states = np.asarray(next_states, dtype=np.float64)
    n = states.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    negatives = np.asarray(negatives, dtype=np.intp)
    if negatives.shape != (n, cfg.n_neg):
        raise ValueError(
            f"negatives must have shape ({n}, {cfg.n_neg}), got {negatives.shape}"
        )
    if np.any(negatives == np.arange(n)[:, None]):
        raise ValueError("a pair's own positive appeared among its negatives")

    stacked = np.concatenate([states, next_states], axis=0)
    cache: list[Array] = []
    emb = params.online.forward(stacked, cache)
    emb_s, emb_next = emb[:n], emb[n:]
    emb_target = params.target.forward(next_states)

    # attraction hinge on consecutive pairs
    pair_diff = emb_s - emb_next
    pair_dist = np.sqrt(np.maximum((pair_diff * pair_diff).sum(axis=1), 0.0))
    hinge = np.maximum(pair_dist - cfg.delta, 0.0)
    attraction = cfg.k_c * hinge

    # repulsion against sampled negatives
    neg_diff, neg_dist, neg_sim = _pairwise_terms(emb_next, negatives, cfg.k)
    sim_sum = neg_sim.sum(axis=1)
    repulsion = np.log1p(sim_sum)

    # consistency toward the target embedding
    drift = emb_next - emb_target
    consistency = cfg.beta * (drift * drift).sum(axis=1)

    loss = float(np.mean(attraction + repulsion + consistency))
    if not compute_grads:
        return loss, None

    inv_n = 1.0 / n
    d_s = np.zeros_like(emb_s)
    d_next = np.zeros_like(emb_next)

    active = pair_dist > cfg.delta
    if np.any(active):
        safe = np.where(pair_dist > 0.0, pair_dist, 1.0)
        unit = pair_diff / safe[:, None]
        coef = (cfg.k_c * inv_n) * active.astype(np.float64)
        d_s += coef[:, None] * unit
        d_next -= coef[:, None] * unit

    safe_nd = np.where(neg_dist > 0.0, neg_dist, 1.0)
    # d repulsion / d dist_ij = -k * sim_ij / (1 + sum_i)
    d_dist = (-cfg.k * inv_n) * neg_sim / (1.0 + sim_sum)[:, None]
    d_dist = np.where(neg_dist > 0.0, d_dist, 0.0)
    unit_neg = neg_diff / safe_nd[:, :, None]
    per_neg = d_dist[:, :, None] * unit_neg       # d loss / d emb[neg_ij]
    np.add.at(d_next, negatives, per_neg)
    d_next -= per_neg.sum(axis=1)

    d_next += (2.0 * cfg.beta * inv_n) * drift

    grad_out = np.concatenate([d_s, d_next], axis=0)
    grads, _ = params.online.backward(cache, grad_out)
    return loss, grads


def info_nce_bound(params: EncoderParams, k: float, states: Array,
                   next_states: Array, negatives: Array):
    """Exact contrastive objective and its closed-form lower bound.

    For each pair the exact term is ``-k*d_pos - log(f_pos + sum_neg f)``
    and the bound replaces ``f_pos`` by its upper bound 1. Returns the two
    batch means ``(exact, bound)`` with ``bound <= exact`` guaranteed.
    Only used for verification.
    """
    states = np.asarray(states, dtype=np.float64)
    next_states = np.asarray(next_states, dtype=np.float64)
    n = states.shape[0]
    negatives = np.asarray(negatives, dtype=np.intp)

    emb_s = params.online.forward(states)
    emb_next = params.online.forward(next_states)
    pair_dist = np.linalg.norm(emb_s - emb_next, axis=1)
    f_pos = np.exp(-k * pair_dist)
    _, _, neg_sim = _pairwise_terms(emb_next, negatives, k)
    sim_sum = neg_sim.sum(axis=1)

    exact = np.mean(-k * pair_dist - np.log(f_pos + sim_sum))
    bound = np.mean(-k * pair_dist - np.log1p(sim_sum))
    return float(exact), float(bound)


def gradient_step(params: EncoderParams, grads: list[Array]) -> None:
    """Apply one optimizer step to the online weights only."""
    params.optimizer.step(params.online.params, grads)


def update_target(params: EncoderParams, alpha_slow: float | None = None) -> None:
    """Move target weights toward online weights by the smooth-update rate."""
    rate = params.cfg.alpha_slow if alpha_slow is None else alpha_slow
    smooth_update(params.target.params, params.online.params, rate)
    params.target_version += 1
