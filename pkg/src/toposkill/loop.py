"""Training loop: per-episode goal selection, per-step acting and storage,
and interleaved learning of the encoder, the cluster graph, and the agent
over one shared mini-batch.

The learning pipeline inside a step is fixed and observable in the loss
report: encoder gradient step, graph updates, reward recomputation, agent
update, then target smoothing. Logical tick counters (not wall clock) stamp
the phases so metrics stay byte-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import encoder as enc
from . import selector as sel
from . import store
from .envs import random_action
from .errors import NotReadyError
from .policy import (AgentConfig, CategoricalPolicyAgent, GaussianPolicyAgent,
                     intrinsic_rewards)
from .store import LearningMixConfig, Transition
from .topology import OegnConfig, TopologyGraph

Array = np.ndarray


@dataclass
class LoopConfig:
    batch_size: int = 128
    updates_per_step: float = 0.25
    warmup_episodes: int = 10
    relabel_strategy: str = "uniform"
    relabel_fraction: float = 0.5
    repr_before_topology: bool = True
    visit_window: int = 10_000

    def __post_init__(self):
        if self.relabel_strategy not in store.RELABEL_STRATEGIES:
            raise ValueError(f"unknown relabel strategy {self.relabel_strategy!r}")


@dataclass
class LossReport:
    step: int
    phases: list[tuple[str, int]]
    repr_loss: float
    critic1_loss: float
    critic2_loss: float
    actor_loss: float
    mean_intrinsic: float
    relabeled: int
    node_count: int


@dataclass
class EpisodeReport:
    episode: int
    steps: int
    ext_return: float
    goal_node: int | None
    warmup: bool


class TargetEmbeddingCache:
    """Per-target-version memo of embeddings, worthwhile when the environment
    re-visits identical states (discrete observations)."""

    def __init__(self, params: enc.EncoderParams, enabled: bool):
        self.params = params
        self.enabled = enabled
        self._version = -1
        self._memo: dict[bytes, Array] = {}

    def __call__(self, state: Array) -> Array:
        state = np.asarray(state, dtype=np.float64)
        if not self.enabled:
            return enc.encode(self.params, state, use_target=True)
        if self._version != self.params.target_version:
            self._memo.clear()
            self._version = self.params.target_version
        key = state.tobytes()
        hit = self._memo.get(key)
        if hit is None:
            hit = enc.encode(self.params, state, use_target=True)
            self._memo[key] = hit
        return hit

    def warm(self, states: list[Array]) -> None:
        """Embed all cache misses in one batched forward pass."""
        if not self.enabled:
            return
        if self._version != self.params.target_version:
            self._memo.clear()
            self._version = self.params.target_version
        missing: dict[bytes, Array] = {}
        for s in states:
            s = np.asarray(s, dtype=np.float64)
            key = s.tobytes()
            if key not in self._memo and key not in missing:
                missing[key] = s
        if missing:
            embs = enc.encode(self.params, np.stack(list(missing.values())),
                              use_target=True)
            for key, emb in zip(missing, embs):
                self._memo[key] = emb

    def batch(self, states: list[Array]) -> Array:
        if self.enabled:
            self.warm(states)
            return np.stack([self(s) for s in states])
        return enc.encode(self.params, np.stack(states), use_target=True)


class Trainer:
    """Owns all mutable system state for one training run."""

    def __init__(self, env, repr_cfg: enc.ContrastiveConfig, oegn_cfg: OegnConfig,
                 mix_cfg: LearningMixConfig, sel_cfg: sel.SelectorConfig,
                 agent_cfg: AgentConfig, loop_cfg: LoopConfig,
                 buffer_budget: int, d: int, seed: int):
        self.env = env
        self.eval_env = env.clone() if hasattr(env, "clone") else None
        self.repr_cfg = repr_cfg
        self.mix_cfg = mix_cfg
        self.sel_cfg = sel_cfg
        self.loop_cfg = loop_cfg

        streams = np.random.SeedSequence(seed).spawn(7)
        (self.rng_init, self.rng_graph, self.rng_agent, self.rng_actions,
         self.rng_sampling, self.rng_selector, self.rng_negatives) = [
            np.random.default_rng(s) for s in streams]

        self.params = enc.EncoderParams(env.obs_dim, d, repr_cfg, self.rng_init)
        self.graph = TopologyGraph(oegn_cfg, d, buffer_budget, self.rng_graph)
        self.embed_target = TargetEmbeddingCache(
            self.params, enabled=getattr(env, "discrete_states", False))
        if getattr(env, "n_actions", None) is not None:
            self.agent = CategoricalPolicyAgent(
                env.obs_dim, d, env.n_actions, agent_cfg, self.rng_agent)
        else:
            self.agent = GaussianPolicyAgent(
                env.obs_dim, d, env.action_low, env.action_high, agent_cfg,
                self.rng_agent)

        self.env_steps = 0
        self.episodes = 0
        self.learning_steps = 0
        self.generated = 0
        self.routed = 0
        self._pending_updates = 0.0
        self._tick = 0
        self.loss_reports: list[LossReport] = []
        self.selector_log: list[dict] = []
        self.recent_cells: list = []
        self._episode_in_progress = False

    # ------------------------------------------------------------ plumbing

    def _next_tick(self) -> int:
        self._tick += 1
        return self._tick

    def _track_visit(self) -> None:
        cell = getattr(self.env, "agent_cell", None)
        if cell is None:
            return
        self.recent_cells.append(cell)
        if len(self.recent_cells) > self.loop_cfg.visit_window:
            del self.recent_cells[: len(self.recent_cells) - self.loop_cfg.visit_window]

    # ------------------------------------------------------------ episodes

    def run_episode(self, on_learning_step=None) -> EpisodeReport:
        """One episode with a fixed goal embedding (target-weight snapshot at
        episode start). Warmup episodes act randomly with no goal."""
        env = self.env
        warmup = self.episodes < self.loop_cfg.warmup_episodes
        obs = env.reset()
        goal_state = None
        goal_emb = None
        goal_node = None
        if not warmup:
            drawn = sel.draw_goal(self.graph, self.embed_target, self.sel_cfg,
                                  self.rng_selector)
            if drawn is None:
                warmup = True
            else:
                goal_node, goal_state, goal_emb, (ids, probs) = drawn
                node = self.graph.nodes[goal_node]
                self.selector_log.append({
                    "episode": self.episodes, "node": goal_node,
                    "prob": float(probs[ids.index(goal_node)]),
                    "ext_value": float(node.ext_value),
                    "count": node.count(),
                })
        rewards = []
        done = False
        step_index = 0
        while not done:
            if warmup:
                action = random_action(env, self.rng_actions)
            else:
                action = self.agent.act(obs, goal_emb, greedy=False,
                                        rng=self.rng_actions)
            next_obs, reward, done = env.step(action)
            tr = Transition(obs, action, next_obs, goal_state, float(reward),
                            bool(done), self.episodes, step_index)
            self.generated += 1
            store.route_transition(self.graph, self.embed_target, tr)
            self.routed += 1
            self._track_visit()
            self.env_steps += 1
            step_index += 1
            obs = next_obs
            rewards.append(float(reward))
            self._pending_updates += self.loop_cfg.updates_per_step
            while self._pending_updates >= 1.0:
                self._pending_updates -= 1.0
                report = self.learning_step()
                if report is not None and on_learning_step is not None:
                    on_learning_step(report)
        if goal_node is not None and goal_node in self.graph.nodes:
            sel.update_cluster_value(self.graph, goal_node,
                                     float(np.mean(rewards)), self.sel_cfg)
        self.episodes += 1
        return EpisodeReport(self.episodes - 1, step_index,
                             float(np.sum(rewards)), goal_node, warmup)

    # ------------------------------------------------------------ learning

    def learning_step(self) -> LossReport | None:
        cfg = self.loop_cfg
        try:
            batch = store.sample_learning_batch(
                self.graph, cfg.batch_size, self.mix_cfg, self.rng_sampling,
                high_dist=self._high_dist_if_needed())
        except NotReadyError:
            return None
        phases: list[tuple[str, int]] = []

        relabeled, stats = store.relabel(
            batch, cfg.relabel_strategy, self.graph, self.mix_cfg,
            self.rng_sampling, cfg.relabel_fraction,
            high_dist=self._high_dist_if_needed())

        # one batched pass covers the topology and reward phases' lookups
        warm_states: list[Array] = []
        for item in batch:
            tr = item.record.transition
            warm_states.append(tr.state)
            warm_states.append(tr.next_state)
            if tr.goal_state is not None:
                warm_states.append(tr.goal_state)
        warm_states.extend(tr.goal_state for tr in relabeled)
        self.embed_target.warm(warm_states)

        repr_loss = self._repr_phase(batch)
        phases.append(("repr", self._next_tick()))

        self._topology_phase(batch)
        phases.append(("topology", self._next_tick()))

        next_states = [item.record.transition.next_state for item in batch]
        goals = [tr.goal_state for tr in relabeled]
        emb_next = self.embed_target.batch(next_states)
        emb_goals = self.embed_target.batch(goals)
        r_int = intrinsic_rewards(emb_next, emb_goals)
        phases.append(("reward", self._next_tick()))

        states = np.stack([item.record.transition.state for item in batch])
        nexts = np.stack(next_states)
        if self.agent.discrete:
            actions = np.array([tr.action for tr in relabeled], dtype=np.intp)
        else:
            actions = np.stack([np.asarray(tr.action, dtype=np.float64)
                                for tr in relabeled])
        terminals = np.zeros(len(batch))  # horizon timeouts are not terminal
        losses = self.agent.update(states, actions, nexts, emb_goals, r_int,
                                   terminals, self.rng_agent)
        phases.append(("agent", self._next_tick()))

        enc.update_target(self.params)
        phases.append(("targets", self._next_tick()))

        self.learning_steps += 1
        report = LossReport(
            step=self.learning_steps, phases=phases, repr_loss=repr_loss,
            critic1_loss=losses["critic1_loss"], critic2_loss=losses["critic2_loss"],
            actor_loss=losses["actor_loss"], mean_intrinsic=float(np.mean(r_int)),
            relabeled=stats.relabeled, node_count=len(self.graph.nodes))
        self.loss_reports.append(report)
        if len(self.loss_reports) > 256:
            del self.loss_reports[:128]
        return report

    def _high_dist_if_needed(self):
        if self.mix_cfg.high_ratio <= 0.0:
            return None
        return sel.high_level_distribution(self.graph, self.sel_cfg)

    def _repr_phase(self, batch: list[store.SampledItem]) -> float:
        items = batch
        if not self.repr_cfg.learns_on_bg:
            filtered = [it for it in batch if not it.from_goal_buffer]
            if len(filtered) > self.repr_cfg.n_neg:
                items = filtered
        states = np.stack([it.record.transition.state for it in items])
        nexts = np.stack([it.record.transition.next_state for it in items])
        negatives = enc.sample_negative_indices(
            len(items), self.repr_cfg.n_neg, self.rng_negatives)
        loss, grads = enc.contrastive_loss(self.params, self.repr_cfg,
                                           states, nexts, negatives)
        enc.gradient_step(self.params, grads)
        return loss

    def _topology_phase(self, batch: list[store.SampledItem]) -> None:
        n_updates = min(self.graph.cfg.updates_per_batch, len(batch))
        if n_updates == len(batch):
            chosen = list(range(len(batch)))
        else:
            chosen = [int(i) for i in self.rng_sampling.choice(
                len(batch), size=n_updates, replace=False)]
        items = [batch[i] for i in chosen]
        trs = [it.record.transition for it in items]
        emb_e = self.embed_target.batch([tr.next_state for tr in trs])
        emb_prev = self.embed_target.batch([tr.state for tr in trs])
        goal_rows = [i for i, tr in enumerate(trs) if tr.goal_state is not None]
        emb_goal = {}
        if goal_rows:
            stacked = self.embed_target.batch([trs[i].goal_state for i in goal_rows])
            emb_goal = dict(zip(goal_rows, stacked))
        for i, item in enumerate(items):
            origin = item.record.goal_node_id
            report = self.graph.step(emb_e[i], emb_prev[i],
                                     emb_goal.get(i), origin)
            if report.created and self.sel_cfg.inherit_value_on_create:
                # a fresh node starts from its parent's value estimate (the
                # node it was connected to), not from optimistic zero
                for nid in report.created:
                    parents = self.graph.neighbors(nid)
                    if parents:
                        self.graph.nodes[nid].ext_value = \
                            self.graph.nodes[parents[0]].ext_value

    # ---------------------------------------------------------- evaluation

    def evaluate(self, n_episodes: int = 1) -> dict | None:
        """Greedy goal-reaching toward the environment's extrinsic target."""
        if self.eval_env is None:
            return None
        goal_obs = getattr(self.eval_env, "goal_observation", lambda: None)()
        if goal_obs is None:
            return None
        g = self.embed_target(goal_obs)
        finals, minima, successes = [], [], []
        for _ in range(n_episodes):
            obs = self.eval_env.reset()
            done = False
            best = self.eval_env.distance_to_goal()
            dist = best
            while not done:
                action = self.agent.act(obs, g, greedy=True)
                obs, _, done = self.eval_env.step(action)
                dist = self.eval_env.distance_to_goal()
                best = min(best, dist)
            finals.append(dist)
            minima.append(best)
            threshold = getattr(self.eval_env, "goal_radius", 0.5)
            successes.append(1.0 if best < threshold else 0.0)
        return {"final_distance": float(np.mean(finals)),
                "min_distance": float(np.mean(minima)),
                "success": float(np.mean(successes))}

    def visitation_entropy(self) -> float:
        from .metrics import entropy_of_counts
        if not self.recent_cells:
            return 0.0
        counts: dict = {}
        for cell in self.recent_cells:
            counts[cell] = counts.get(cell, 0) + 1
        return entropy_of_counts(np.array(list(counts.values()), dtype=np.float64))


class FlatAgentTrainer:
    """Baseline: the same entropy-regularized agent on raw extrinsic reward,
    with no representation, topology, or goal machinery."""

    def __init__(self, env, agent_cfg: AgentConfig, loop_cfg: LoopConfig,
                 buffer_size: int, seed: int):
        self.env = env
        self.eval_env = env.clone()
        streams = np.random.SeedSequence(seed).spawn(3)
        self.rng_agent, self.rng_actions, self.rng_sampling = [
            np.random.default_rng(s) for s in streams]
        if getattr(env, "n_actions", None) is not None:
            self.agent = CategoricalPolicyAgent(env.obs_dim, 0, env.n_actions,
                                                agent_cfg, self.rng_agent)
        else:
            self.agent = GaussianPolicyAgent(env.obs_dim, 0, env.action_low,
                                             env.action_high, agent_cfg,
                                             self.rng_agent)
        self.loop_cfg = loop_cfg
        self.buffer = store.RingBuffer(buffer_size)
        self.env_steps = 0
        self.episodes = 0
        self._pending = 0.0
        self._g0 = np.zeros(0)

    def run_episode(self) -> float:
        obs = self.env.reset()
        done = False
        total = 0.0
        warmup = self.episodes < self.loop_cfg.warmup_episodes
        while not done:
            if warmup:
                action = random_action(self.env, self.rng_actions)
            else:
                action = self.agent.act(obs, self._g0, greedy=False,
                                        rng=self.rng_actions)
            next_obs, reward, done = self.env.step(action)
            self.buffer.append((obs, action, next_obs, float(reward)))
            obs = next_obs
            total += reward
            self.env_steps += 1
            self._pending += self.loop_cfg.updates_per_step
            while self._pending >= 1.0:
                self._pending -= 1.0
                self._maybe_update()
        self.episodes += 1
        return total

    def _maybe_update(self) -> None:
        n = self.loop_cfg.batch_size
        if len(self.buffer) < n:
            return
        idx = self.rng_sampling.integers(len(self.buffer), size=n)
        rows = [self.buffer[int(i)] for i in idx]
        states = np.stack([r[0] for r in rows])
        nexts = np.stack([r[2] for r in rows])
        rewards = np.array([r[3] for r in rows])
        if self.agent.discrete:
            actions = np.array([r[1] for r in rows], dtype=np.intp)
        else:
            actions = np.stack([np.asarray(r[1], dtype=np.float64) for r in rows])
        goals = np.zeros((n, 0))
        self.agent.update(states, actions, nexts, goals, rewards,
                          np.zeros(n), self.rng_agent)

    def evaluate(self) -> dict:
        obs = self.eval_env.reset()
        done = False
        best = self.eval_env.distance_to_goal()
        dist = best
        while not done:
            action = self.agent.act(obs, self._g0, greedy=True)
            obs, _, done = self.eval_env.step(action)
            dist = self.eval_env.distance_to_goal()
            best = min(best, dist)
        threshold = getattr(self.eval_env, "goal_radius", 0.5)
        return {"final_distance": dist, "min_distance": best,
                "success": 1.0 if best < threshold else 0.0}
