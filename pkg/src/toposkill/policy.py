"""Goal-conditioned entropy-regularized actor-critic, trained off-policy.

Two actor variants share the twin-critic machinery: a squashed-Gaussian
actor for bounded continuous actions and a categorical actor for discrete
actions (soft values computed as exact expectations over the categorical
probabilities). Rewards come from the embedding metric: the negative L2
distance between the target-embedded reached state and the goal embedding.
All gradients are computed analytically in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import EncoderParams, encode
from .errors import NumericalAbort
from .nets import Adam, Array, Mlp, smooth_update

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
SQUASH_EPS = 1e-6


@dataclass
class AgentConfig:
    entropy_scale: float = 0.2
    gamma: float = 0.99
    learning_rate: float = 5e-4
    smooth_update: float = 0.005   # target-critic EMA rate
    n_neurons: int = 128
    hidden_layers: int = 2
    batch_size: int = 128

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if not 0.0 < self.smooth_update <= 1.0:
            raise ValueError("smooth_update must lie in (0, 1]")
        if self.entropy_scale < 0:
            raise ValueError("entropy_scale must be non-negative")


def intrinsic_reward(params: EncoderParams, next_state: Array, g: Array) -> float:
    """Negative distance between the target-embedded state and the goal;
    zero exactly when the embedding hits the goal."""
    emb = encode(params, next_state, use_target=True)
    return -float(np.linalg.norm(emb - np.asarray(g, dtype=np.float64)))


def intrinsic_rewards(embedded_next: Array, goals: Array) -> Array:
    """Batch form on already-embedded states: -||emb - g|| per row."""
    diff = np.asarray(embedded_next) - np.asarray(goals)
    return -np.linalg.norm(diff, axis=1)


def critic_loss_and_grads(critic: Mlp, inputs: Array, targets: Array,
                          action_indices: Array | None = None):
    """Mean squared regression of the critic onto fixed targets.

    For vector-output critics (discrete actions) ``action_indices`` selects
    which column regresses per sample. Returns (loss, param grads).
    """
    cache: list[Array] = []
    q = critic.forward(inputs, cache)
    n = inputs.shape[0]
    if action_indices is None:
        pred = q[:, 0]
        diff = pred - targets
        grad_out = np.zeros_like(q)
        grad_out[:, 0] = 2.0 * diff / n
    else:
        rows = np.arange(n)
        pred = q[rows, action_indices]
        diff = pred - targets
        grad_out = np.zeros_like(q)
        grad_out[rows, action_indices] = 2.0 * diff / n
    loss = float(np.mean(diff * diff))
    grads, _ = critic.backward(cache, grad_out)
    return loss, grads


def _softmax(logits: Array) -> tuple[Array, Array]:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    probs = exp / total
    log_probs = shifted - np.log(total)
    return probs, log_probs


def _check_finite(name: str, *values: float) -> None:
    for v in values:
        if not np.isfinite(v):
            raise NumericalAbort(f"non-finite {name}", {"value": v, "loss": name})


class GaussianPolicyAgent:
    """Squashed-Gaussian actor with twin critics for bounded continuous actions."""

    discrete = False

    def __init__(self, obs_dim: int, goal_dim: int, action_low, action_high,
                 cfg: AgentConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.goal_dim = goal_dim
        self.low = np.asarray(action_low, dtype=np.float64)
        self.high = np.asarray(action_high, dtype=np.float64)
        self.m = self.low.shape[0]
        self.scale = (self.high - self.low) / 2.0
        self.center = (self.high + self.low) / 2.0
        in_dim = obs_dim + goal_dim
        hidden = [cfg.n_neurons] * cfg.hidden_layers
        self.actor = Mlp([in_dim, *hidden, 2 * self.m], rng)
        self.critic1 = Mlp([in_dim + self.m, *hidden, 1], rng)
        self.critic2 = Mlp([in_dim + self.m, *hidden, 1], rng)
        self.target1 = self.critic1.copy()
        self.target2 = self.critic2.copy()
        self.opt_actor = Adam(self.actor.params, lr=cfg.learning_rate)
        self.opt_c1 = Adam(self.critic1.params, lr=cfg.learning_rate)
        self.opt_c2 = Adam(self.critic2.params, lr=cfg.learning_rate)

    # ------------------------------------------------------------- acting

    def _policy_terms(self, x: Array, cache=None):
        out = self.actor.forward(x, cache)
        mu, raw = out[:, : self.m], out[:, self.m:]
        tanh_raw = np.tanh(raw)
        log_std = LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (tanh_raw + 1.0)
        return mu, raw, tanh_raw, log_std, np.exp(log_std)

    def act(self, state: Array, g: Array, greedy: bool,
            rng: np.random.Generator | None = None) -> Array:
        x = np.concatenate([np.asarray(state, dtype=np.float64),
                            np.asarray(g, dtype=np.float64)])[None, :]
        mu, _, _, _, std = self._policy_terms(x)
        if greedy:
            u = mu
        else:
            u = mu + std * rng.standard_normal(std.shape)
        return self.center + self.scale * np.tanh(u[0])

    def _sample_with_logprob(self, x: Array, rng: np.random.Generator):
        mu, _, _, log_std, std = self._policy_terms(x)
        eps = rng.standard_normal(std.shape)
        u = mu + std * eps
        t = np.tanh(u)
        a = self.center + self.scale * t
        squash = np.log(self.scale * (1.0 - t * t) + SQUASH_EPS)
        logp = (-0.5 * np.log(2.0 * np.pi) - log_std - 0.5 * eps * eps - squash)
        return a, logp.sum(axis=1)

    # ------------------------------------------------------------ learning

    def update(self, states: Array, actions: Array, next_states: Array,
               goals: Array, rewards: Array, terminals: Array,
               rng: np.random.Generator) -> dict:
        cfg = self.cfg
        n = states.shape[0]
        x = np.concatenate([states, goals], axis=1)
        xn = np.concatenate([next_states, goals], axis=1)

        # soft Bellman target from the target critics and a fresh next action
        a_next, logp_next = self._sample_with_logprob(xn, rng)
        xa_next = np.concatenate([xn, a_next], axis=1)
        q1n = self.target1.forward(xa_next)[:, 0]
        q2n = self.target2.forward(xa_next)[:, 0]
        soft_v = np.minimum(q1n, q2n) - cfg.entropy_scale * logp_next
        y = rewards + cfg.gamma * (1.0 - terminals) * soft_v

        xa = np.concatenate([x, actions], axis=1)
        c1_loss, g1 = critic_loss_and_grads(self.critic1, xa, y)
        c2_loss, g2 = critic_loss_and_grads(self.critic2, xa, y)
        _check_finite("critic loss", c1_loss, c2_loss)
        self.opt_c1.step(self.critic1.params, g1)
        self.opt_c2.step(self.critic2.params, g2)

        actor_loss = self._actor_step(x, rng)
        _check_finite("actor loss", actor_loss)

        smooth_update(self.target1.params, self.critic1.params, cfg.smooth_update)
        smooth_update(self.target2.params, self.critic2.params, cfg.smooth_update)
        return {"critic1_loss": c1_loss, "critic2_loss": c2_loss,
                "actor_loss": actor_loss, "mean_target": float(np.mean(y))}

    def _actor_step(self, x: Array, rng: np.random.Generator) -> float:
        cfg = self.cfg
        n = x.shape[0]
        cache: list[Array] = []
        mu, raw, tanh_raw, log_std, std = self._policy_terms(x, cache)
        eps = rng.standard_normal(std.shape)
        u = mu + std * eps
        t = np.tanh(u)
        a = self.center + self.scale * t
        denom = self.scale * (1.0 - t * t) + SQUASH_EPS
        logp = (-0.5 * np.log(2.0 * np.pi) - log_std - 0.5 * eps * eps
                - np.log(denom)).sum(axis=1)

        xa = np.concatenate([x, a], axis=1)
        cache1: list[Array] = []
        cache2: list[Array] = []
        q1 = self.critic1.forward(xa, cache1)[:, 0]
        q2 = self.critic2.forward(xa, cache2)[:, 0]
        use1 = q1 <= q2
        qmin = np.where(use1, q1, q2)
        loss = float(np.mean(cfg.entropy_scale * logp - qmin))

        # dLoss/da through whichever critic realizes the minimum per sample
        pick1 = np.zeros((n, 1))
        pick1[use1, 0] = -1.0 / n
        pick2 = np.zeros((n, 1))
        pick2[~use1, 0] = -1.0 / n
        _, dxa1 = self.critic1.backward(cache1, pick1)
        _, dxa2 = self.critic2.backward(cache2, pick2)
        d_a = (dxa1 + dxa2)[:, -self.m:]

        coeff = cfg.entropy_scale / n
        d_t = d_a * self.scale + coeff * (2.0 * self.scale * t) / denom
        d_u = d_t * (1.0 - t * t)
        d_mu = d_u
        d_log_std = d_u * eps * std - coeff
        d_raw = d_log_std * 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - tanh_raw * tanh_raw)
        grad_out = np.concatenate([d_mu, d_raw], axis=1)
        grads, _ = self.actor.backward(cache, grad_out)
        self.opt_actor.step(self.actor.params, grads)
        return loss

    def param_groups(self) -> dict[str, list[Array]]:
        return {"actor": self.actor.params, "critic1": self.critic1.params,
                "critic2": self.critic2.params, "target1": self.target1.params,
                "target2": self.target2.params}


class CategoricalPolicyAgent:
    """Categorical actor with twin per-action critics for discrete actions."""

    discrete = True

    def __init__(self, obs_dim: int, goal_dim: int, n_actions: int,
                 cfg: AgentConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.obs_dim = obs_dim
        self.goal_dim = goal_dim
        self.n_actions = n_actions
        in_dim = obs_dim + goal_dim
        hidden = [cfg.n_neurons] * cfg.hidden_layers
        self.actor = Mlp([in_dim, *hidden, n_actions], rng)
        self.critic1 = Mlp([in_dim, *hidden, n_actions], rng)
        self.critic2 = Mlp([in_dim, *hidden, n_actions], rng)
        self.target1 = self.critic1.copy()
        self.target2 = self.critic2.copy()
        self.opt_actor = Adam(self.actor.params, lr=cfg.learning_rate)
        self.opt_c1 = Adam(self.critic1.params, lr=cfg.learning_rate)
        self.opt_c2 = Adam(self.critic2.params, lr=cfg.learning_rate)

    def action_probs(self, state: Array, g: Array) -> Array:
        x = np.concatenate([np.asarray(state, dtype=np.float64),
                            np.asarray(g, dtype=np.float64)])[None, :]
        probs, _ = _softmax(self.actor.forward(x))
        return probs[0]

    def act(self, state: Array, g: Array, greedy: bool,
            rng: np.random.Generator | None = None) -> int:
        probs = self.action_probs(state, g)
        if greedy:
            return int(np.argmax(probs))
        return int(rng.choice(self.n_actions, p=probs))

    def update(self, states: Array, actions: Array, next_states: Array,
               goals: Array, rewards: Array, terminals: Array,
               rng: np.random.Generator) -> dict:
        cfg = self.cfg
        n = states.shape[0]
        x = np.concatenate([states, goals], axis=1)
        xn = np.concatenate([next_states, goals], axis=1)
        actions = np.asarray(actions, dtype=np.intp)

        # exact soft state value of the next state under the current actor
        probs_n, logp_n = _softmax(self.actor.forward(xn))
        q1n = self.target1.forward(xn)
        q2n = self.target2.forward(xn)
        qmin_n = np.minimum(q1n, q2n)
        soft_v = (probs_n * (qmin_n - cfg.entropy_scale * logp_n)).sum(axis=1)
        y = rewards + cfg.gamma * (1.0 - terminals) * soft_v

        c1_loss, g1 = critic_loss_and_grads(self.critic1, x, y, actions)
        c2_loss, g2 = critic_loss_and_grads(self.critic2, x, y, actions)
        _check_finite("critic loss", c1_loss, c2_loss)
        self.opt_c1.step(self.critic1.params, g1)
        self.opt_c2.step(self.critic2.params, g2)

        # actor: exact expectation of (entropy-regularized) advantage
        cache: list[Array] = []
        logits = self.actor.forward(x, cache)
        probs, logp = _softmax(logits)
        qmin = np.minimum(self.critic1.forward(x), self.critic2.forward(x))
        inner = cfg.entropy_scale * logp - qmin
        per_state = (probs * inner).sum(axis=1)
        actor_loss = float(np.mean(per_state))
        _check_finite("actor loss", actor_loss)
        d_logits = probs * (inner - per_state[:, None]) / n
        grads, _ = self.actor.backward(cache, d_logits)
        self.opt_actor.step(self.actor.params, grads)

        smooth_update(self.target1.params, self.critic1.params, cfg.smooth_update)
        smooth_update(self.target2.params, self.critic2.params, cfg.smooth_update)
        return {"critic1_loss": c1_loss, "critic2_loss": c2_loss,
                "actor_loss": actor_loss, "mean_target": float(np.mean(y))}

    def param_groups(self) -> dict[str, list[Array]]:
        return {"actor": self.actor.params, "critic1": self.critic1.params,
                "critic2": self.critic2.params, "target1": self.target1.params,
                "target2": self.target2.params}
