"""Experiment recipes: representation study, entropy study, sparse maze, and
quick numerical self-checks. Each writes metrics, checkpoints, and exports
under a run directory and returns a summary dict.
"""

from __future__ import annotations

import os

import numpy as np

from . import checkpoint
from . import encoder as enc
from . import metrics as met
from .config import dump_config
from .envs import (GridWorld, SparsePointMaze, U_MAZE_LAYOUT, four_rooms,
                   load_grid_map, open_room, random_action)
from .errors import ConfigError, NumericalAbort
from .loop import FlatAgentTrainer, LoopConfig, Trainer
from .policy import AgentConfig
from .selector import SelectorConfig
from .store import LearningMixConfig
from .topology import OegnConfig, TopologyGraph

Array = np.ndarray


# --------------------------------------------------------------- assembling


def build_env(cfg: dict):
    env_cfg = cfg["env"]
    if env_cfg["type"] == "gridworld":
        if env_cfg["layout"] == "four_rooms":
            layout = four_rooms(env_cfg["size"])
        elif env_cfg["layout"] == "open":
            layout = open_room(env_cfg["size"], env_cfg["size"])
        elif env_cfg["layout"] == "file":
            layout = load_grid_map(env_cfg["map_path"])
        else:
            raise ConfigError(f"env.layout: {env_cfg['layout']!r} is not a gridworld layout")
        return GridWorld(layout, obs_mode=env_cfg["obs_mode"],
                         horizon=env_cfg["horizon"],
                         random_start=env_cfg["random_start"],
                         seed=cfg["run"]["seed"])
    if env_cfg["layout"] == "file":
        layout = load_grid_map(env_cfg["map_path"])
    else:
        layout = U_MAZE_LAYOUT
    return SparsePointMaze(layout, horizon=env_cfg["horizon"],
                           speed=env_cfg["speed"],
                           goal_radius=env_cfg["goal_radius"],
                           seed=cfg["run"]["seed"])


def module_configs(cfg: dict):
    r = cfg["repr"]
    repr_cfg = enc.ContrastiveConfig(
        k=r["k"], k_c=r["k_c"], delta=r["delta"], beta=r["beta"],
        n_neg=r["n_neg"], alpha_slow=r["alpha_slow"],
        learning_rate=r["learning_rate"], n_neurons=r["n_neurons"],
        hidden_layers=r["hidden_layers"], learns_on_bg=r["learns_on_bg"])
    o = cfg["oegn"]
    oegn_cfg = OegnConfig(
        delta_new=o["delta_new"], delta_success=o["delta_success"],
        delta_age=o["delta_age"], delta_error=o["delta_error"],
        delta_prox=o["delta_prox"], delta_count=o["delta_count"],
        n_del=o["n_del"], alpha=o["alpha"],
        alpha_neighbors=o["alpha_neighbors"],
        updates_per_batch=o["updates_per_batch"], init_scale=o["init_scale"])
    mix_cfg = LearningMixConfig(alpha_skew_plus1=cfg["store"]["alpha_skew_plus1"],
                                high_ratio=cfg["store"]["high_ratio"])
    s = cfg["selector"]
    sel_cfg = SelectorConfig(
        t_ext=s["t_ext"], alpha_skew_prime_plus1=s["alpha_skew_prime_plus1"],
        alpha_c=s["alpha_c"], neighbor_rate=s["neighbor_rate"],
        max_goal_tries=s["max_goal_tries"],
        inherit_value_on_create=s["inherit_value_on_create"])
    a = cfg["agent"]
    agent_cfg = AgentConfig(
        entropy_scale=a["entropy_scale"], gamma=a["gamma"],
        learning_rate=a["learning_rate"], smooth_update=a["smooth_update"],
        n_neurons=a["n_neurons"], hidden_layers=a["hidden_layers"],
        batch_size=a["batch_size"])
    lp = cfg["loop"]
    loop_cfg = LoopConfig(batch_size=a["batch_size"],
                          updates_per_step=lp["updates_per_step"],
                          warmup_episodes=lp["warmup_episodes"],
                          relabel_strategy=lp["relabel_strategy"],
                          relabel_fraction=lp["relabel_fraction"],
                          visit_window=lp["visit_window"])
    return repr_cfg, oegn_cfg, mix_cfg, sel_cfg, agent_cfg, loop_cfg


def build_trainer(cfg: dict, env=None) -> Trainer:
    env = env if env is not None else build_env(cfg)
    repr_cfg, oegn_cfg, mix_cfg, sel_cfg, agent_cfg, loop_cfg = module_configs(cfg)
    return Trainer(env, repr_cfg, oegn_cfg, mix_cfg, sel_cfg, agent_cfg,
                   loop_cfg, buffer_budget=cfg["store"]["buffer_size"],
                   d=cfg["repr"]["d"], seed=cfg["run"]["seed"])


# ----------------------------------------------------- shared encoder tools


def collect_random_walk_pairs(env: GridWorld, n_transitions: int, seed: int):
    """Random-walk dataset over a gridworld, stored as cell-index pairs so a
    one-hot corpus stays small; returns (pairs, materialize) where
    materialize(rows) builds the (states, next_states) float batches."""
    rng = np.random.default_rng(seed)
    pairs = np.empty((n_transitions, 2), dtype=np.int64)
    env.reset(seed=seed)
    done = True
    for i in range(n_transitions):
        if done:
            env.reset()
            done = False
        before = env.cell_index(env.agent_cell)
        _, _, done = env.step(random_action(env, rng))
        pairs[i, 0] = before
        pairs[i, 1] = env.cell_index(env.agent_cell)

    if env.obs_mode == "one_hot_binary":
        def materialize(rows: Array):
            states = np.zeros((len(rows), env.n_cells))
            nexts = np.zeros((len(rows), env.n_cells))
            states[np.arange(len(rows)), pairs[rows, 0]] = 1.0
            nexts[np.arange(len(rows)), pairs[rows, 1]] = 1.0
            return states, nexts
    else:
        coords = np.stack([env.observation_for((i // env.width, i % env.width))
                           for i in range(env.n_cells)])

        def materialize(rows: Array):
            return coords[pairs[rows, 0]], coords[pairs[rows, 1]]

    return pairs, materialize


def train_encoder_on_pairs(params: enc.EncoderParams, cfg: enc.ContrastiveConfig,
                           n_pairs: int, materialize, steps: int,
                           batch_pairs: int, seed: int,
                           progress_cb=None) -> list[float]:
    rng = np.random.default_rng(seed)
    losses = []
    for step in range(steps):
        rows = rng.integers(n_pairs, size=batch_pairs)
        states, nexts = materialize(rows)
        negatives = enc.sample_negative_indices(batch_pairs, cfg.n_neg, rng)
        loss, grads = enc.contrastive_loss(params, cfg, states, nexts, negatives)
        enc.gradient_step(params, grads)
        enc.update_target(params)
        losses.append(loss)
        if progress_cb is not None and (step + 1) % 1000 == 0:
            progress_cb(step + 1, loss)
    return losses


def free_cell_embeddings(params: enc.EncoderParams, env: GridWorld,
                         use_target: bool = True) -> Array:
    obs = np.stack([env.observation_for(cell) for cell in env.free_cells])
    return enc.encode(params, obs, use_target=use_target)


def fit_topology_stream(graph: TopologyGraph, embeddings: Array,
                        check_each_step: bool = False) -> list[str]:
    """Drive the graph with a stream of consecutive embeddings. The winner of
    each sample counts as selected (standing in for the goal picker) and the
    previous sample's winner acts as the originating node."""
    violations: list[str] = []
    prev = embeddings[0]
    prev_winner, _ = graph.nearest(prev)
    for e in embeddings[1:]:
        winner, _ = graph.nearest(e)
        graph.nodes[winner].selection_count += 1
        graph.step(e, prev, goal=None, origin_id=prev_winner)
        if check_each_step:
            violations.extend(graph.check_invariants())
        prev = e
        prev_winner, _ = graph.nearest(e)
    return violations


def export_topology_snapshot(graph: TopologyGraph, params: enc.EncoderParams | None,
                             env, path: str) -> None:
    """Write the graph text plus, for gridworlds, one embedding record per
    free cell and the one-step adjacency between free cells."""
    text = graph.serialize()
    if isinstance(env, GridWorld) and params is not None:
        embs = free_cell_embeddings(params, env)
        lines = []
        for cell, emb in zip(env.free_cells, embs):
            coords = " ".join(repr(float(x)) for x in emb)
            lines.append(f"cell {cell[0]} {cell[1]} {coords}")
        for (a, b) in env.adjacent_free_pairs():
            lines.append(f"adj {a[0]} {a[1]} {b[0]} {b[1]}")
        text += "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# ------------------------------------------------------------------ recipes


def run_repr_study(cfg: dict, out_dir: str) -> dict:
    env = build_env(cfg)
    if not isinstance(env, GridWorld):
        raise ConfigError("env.type: repr-study needs a gridworld")
    repr_cfg, oegn_cfg, *_ = module_configs(cfg)
    run = cfg["run"]
    rng = np.random.default_rng(run["seed"])
    params = enc.EncoderParams(env.obs_dim, cfg["repr"]["d"], repr_cfg, rng)
    pairs, materialize = collect_random_walk_pairs(
        env, run["repr_dataset_transitions"], run["seed"])

    with met.MetricsWriter(os.path.join(out_dir, "metrics.ndjson")) as writer:
        def progress(step, loss):
            writer.write({"kind": "repr", "step": step, "loss": loss})

        train_encoder_on_pairs(params, repr_cfg, len(pairs), materialize,
                               run["repr_train_steps"], run["repr_batch_pairs"],
                               run["seed"], progress_cb=progress)

        embs = free_cell_embeddings(params, env)
        scores = met.embedding_topology_scores(embs, env.bfs_distances())

        graph = TopologyGraph(oegn_cfg, cfg["repr"]["d"], cfg["store"]["buffer_size"],
                              np.random.default_rng(run["seed"] + 1))
        sample_rows = np.random.default_rng(run["seed"] + 2).integers(
            len(pairs), size=min(20_000, len(pairs)))
        stream = enc.encode(params, materialize(sample_rows)[1], use_target=True)
        fit_topology_stream(graph, stream)
        export_topology_snapshot(graph, params, env,
                                 os.path.join(out_dir, "topology.txt"))
        checkpoint.save_encoder(os.path.join(out_dir, "encoder.bin"), params)
        writer.write({"kind": "summary", **scores,
                      "free_cells": len(env.free_cells),
                      "nodes": len(graph.nodes)})
    return scores


def random_walk_window_entropy(env, total_steps: int, window: int,
                               seed: int) -> float:
    """Entropy of the last ``window`` cells visited by a uniform random walk."""
    rng = np.random.default_rng(seed)
    env.reset(seed=seed)
    done = True
    recent: list = []
    for _ in range(total_steps):
        if done:
            env.reset()
            done = False
        _, _, done = env.step(random_action(env, rng))
        recent.append(env.agent_cell)
        if len(recent) > window:
            del recent[: len(recent) - window]
    counts: dict = {}
    for cell in recent:
        counts[cell] = counts.get(cell, 0) + 1
    return met.entropy_of_counts(np.array(list(counts.values()), dtype=np.float64))


def _drain_logs(trainer: Trainer, writer: met.MetricsWriter, loss_every: int,
                reported: list[int]) -> None:
    for entry in trainer.selector_log:
        writer.write({"kind": "selector", **entry})
    trainer.selector_log.clear()
    if loss_every > 0:
        for report in trainer.loss_reports:
            if report.step > reported[0] and report.step % loss_every == 0:
                writer.write({
                    "kind": "loss", "step": report.step,
                    "phases": report.phases, "repr_loss": report.repr_loss,
                    "critic1_loss": report.critic1_loss,
                    "critic2_loss": report.critic2_loss,
                    "actor_loss": report.actor_loss,
                    "mean_intrinsic": report.mean_intrinsic,
                    "relabeled": report.relabeled,
                    "node_count": report.node_count})
                reported[0] = report.step


def run_training(cfg: dict, out_dir: str) -> dict:
    """Shared driver for the entropy-study and sparse-maze recipes."""
    run = cfg["run"]
    env = build_env(cfg)
    flat = run["agent_variant"] == "flat"
    repr_cfg, oegn_cfg, mix_cfg, sel_cfg, agent_cfg, loop_cfg = module_configs(cfg)
    if flat:
        trainer = FlatAgentTrainer(env, agent_cfg, loop_cfg,
                                   cfg["store"]["buffer_size"], run["seed"])
    else:
        trainer = build_trainer(cfg, env)

    successes: list[float] = []
    summary: dict = {"recipe": run["recipe"], "seed": run["seed"], "flat": flat}
    reported = [0]
    next_metrics = run["metrics_every"] or 0
    next_eval = run["eval_every"] or 0
    with met.MetricsWriter(os.path.join(out_dir, "metrics.ndjson")) as writer:
        try:
            while trainer.env_steps < run["total_env_steps"]:
                if flat:
                    ep_return = trainer.run_episode()
                    ep_record = {"kind": "episode", "episode": trainer.episodes - 1,
                                 "ext_return": ep_return}
                else:
                    report = trainer.run_episode()
                    ep_record = {"kind": "episode", "episode": report.episode,
                                 "steps": report.steps,
                                 "ext_return": report.ext_return,
                                 "goal_node": report.goal_node,
                                 "warmup": report.warmup}
                writer.write(ep_record)
                if not flat:
                    _drain_logs(trainer, writer, run["loss_report_every"], reported)
                if run["metrics_every"] and trainer.env_steps >= next_metrics:
                    next_metrics += run["metrics_every"]
                    record = {"kind": "interval", "env_steps": trainer.env_steps,
                              "episodes": trainer.episodes}
                    if not flat:
                        record.update(
                            entropy_window=trainer.visitation_entropy(),
                            nodes=len(trainer.graph.nodes),
                            creations=trainer.graph.creations,
                            deletions=trainer.graph.deletions,
                            evictions=trainer.graph.evictions,
                            learning_steps=trainer.learning_steps)
                    writer.write(record)
                if run["eval_every"] and trainer.env_steps >= next_eval:
                    next_eval += run["eval_every"]
                    evaluation = (trainer.evaluate()
                                  if flat else trainer.evaluate(run["n_eval_episodes"]))
                    if evaluation:
                        successes.append(evaluation["success"])
                        writer.write({"kind": "eval", "env_steps": trainer.env_steps,
                                      **evaluation})
                        window = successes[-run["success_window"]:]
                        rate = float(np.mean(window))
                        if (run["stop_on_success"]
                                and len(window) >= run["success_window"]
                                and rate >= run["success_stop_threshold"]):
                            summary["stopped_early"] = True
                            break
                if run["max_report_steps"] and not flat and \
                        trainer.learning_steps >= run["max_report_steps"]:
                    break
        except NumericalAbort as abort:
            _dump_state(trainer, out_dir, flat)
            writer.write({"kind": "abort", "reason": str(abort)})
            raise

        summary["env_steps"] = trainer.env_steps
        summary["episodes"] = trainer.episodes
        if successes:
            window = successes[-run["success_window"]:]
            summary["success_rate"] = float(np.mean(window))
            summary["best_success"] = float(np.max(successes))
        if not flat:
            summary["entropy_window"] = trainer.visitation_entropy()
            summary["nodes"] = len(trainer.graph.nodes)
            summary["learning_steps"] = trainer.learning_steps
            if run["recipe"] == "entropy-study":
                baseline = random_walk_window_entropy(
                    env.clone(), run["total_env_steps"],
                    cfg["loop"]["visit_window"], run["seed"])
                summary["baseline_entropy"] = baseline
                if baseline > 0:
                    summary["entropy_ratio"] = summary["entropy_window"] / baseline
        writer.write({"kind": "summary", **summary})
        _dump_state(trainer, out_dir, flat)
    return summary


def _dump_state(trainer, out_dir: str, flat: bool) -> None:
    checkpoint.save_agent(os.path.join(out_dir, "agent.bin"), trainer.agent)
    if not flat:
        checkpoint.save_encoder(os.path.join(out_dir, "encoder.bin"),
                                trainer.params)
        with open(os.path.join(out_dir, "topology.txt"), "w", encoding="utf-8") as fh:
            fh.write(trainer.graph.serialize())


def run_unit_oracles(cfg: dict, out_dir: str) -> dict:
    """Fast self-checks of the core math; mirrors the oracle test suite."""
    from .nets import finite_difference_grads, max_relative_grad_error
    seed = cfg["run"]["seed"]
    rng = np.random.default_rng(seed)
    small = enc.ContrastiveConfig(k=1.5, k_c=3.0, delta=0.2, beta=0.5, n_neg=3,
                                  n_neurons=12, hidden_layers=2, learning_rate=1e-3)
    params = enc.EncoderParams(5, 4, small, rng)
    states = rng.normal(size=(6, 5))
    nexts = states + 0.1 * rng.normal(size=(6, 5))
    negatives = enc.sample_negative_indices(6, 3, rng)
    _, grads = enc.contrastive_loss(params, small, states, nexts, negatives)
    numeric = finite_difference_grads(
        lambda: enc.contrastive_loss(params, small, states, nexts, negatives,
                                     compute_grads=False)[0],
        params.online.params)
    grad_err = max_relative_grad_error(grads, numeric)

    bound_ok = True
    for _ in range(50):
        s = rng.normal(size=(8, 5))
        ns = s + 0.2 * rng.normal(size=(8, 5))
        neg = enc.sample_negative_indices(8, 3, rng)
        exact, bound = enc.info_nce_bound(params, small.k, s, ns, neg)
        bound_ok = bound_ok and bound <= exact + 1e-12

    report = {"gradient_max_rel_error": grad_err,
              "gradient_ok": grad_err < 1e-4,
              "bound_ok": bound_ok}
    with met.MetricsWriter(os.path.join(out_dir, "metrics.ndjson")) as writer:
        writer.write({"kind": "summary", **report})
    return report


def run_recipe(cfg: dict, out_dir: str) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "resolved_config.json"), "w",
              encoding="utf-8") as fh:
        fh.write(dump_config(cfg) + "\n")
    recipe = cfg["run"]["recipe"]
    if recipe == "repr-study":
        return run_repr_study(cfg, out_dir)
    if recipe in ("entropy-study", "sparse-maze"):
        return run_training(cfg, out_dir)
    if recipe == "unit-oracles":
        return run_unit_oracles(cfg, out_dir)
    raise ConfigError(f"run.recipe: unknown recipe {recipe!r}")
