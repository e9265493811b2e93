"""Configuration schema, per-recipe default profiles, and override handling.

A config is one nested JSON document whose sections mirror the module
configs. Every tunable of the learning system is settable here and echoed
verbatim into the run directory's resolved-config file. Infinity round-trips
as the string ``"inf"``.
"""

from __future__ import annotations

import copy
import json
import math

from .errors import ConfigError

RECIPES = ("repr-study", "entropy-study", "sparse-maze", "unit-oracles")

_F = float
_I = int
_B = bool
_S = str

# section -> key -> (type, default). Bool checked before int (bool is an int).
SCHEMA: dict[str, dict[str, tuple]] = {
    "run": {
        "recipe": (_S, None),
        "seed": (_I, 0),
        "total_env_steps": (_I, 50_000),
        "eval_every": (_I, 5_000),
        "n_eval_episodes": (_I, 1),
        "metrics_every": (_I, 1_000),
        "repr_train_steps": (_I, 12_000),
        "repr_dataset_transitions": (_I, 100_000),
        "repr_batch_pairs": (_I, 64),
        "max_report_steps": (_I, 0),   # stop after N learning steps (0 = off)
        "success_window": (_I, 5),     # evals averaged for the success metric
        "stop_on_success": (_B, False),
        "success_stop_threshold": (_F, 0.8),
        "loss_report_every": (_I, 0),  # write every Nth learning-step record
        "agent_variant": (_S, "full"),  # full | flat (no goal machinery)
    },
    "env": {
        "type": (_S, "gridworld"),          # gridworld | point_maze
        "layout": (_S, "four_rooms"),       # four_rooms | open | u_maze | file
        "map_path": (_S, ""),
        "size": (_I, 15),
        "obs_mode": (_S, "one_hot_binary"),
        "horizon": (_I, 50),
        "random_start": (_B, True),
        "speed": (_F, 0.5),
        "goal_radius": (_F, 1.5),
    },
    "repr": {
        "k": (_F, 1.0),
        "k_c": (_F, 20.0),
        "delta": (_F, 0.1),
        "beta": (_F, 2.0),
        "alpha_slow": (_F, 0.001),
        "d": (_I, 3),
        "n_neg": (_I, 10),
        "learning_rate": (_F, 1e-4),
        "n_neurons": (_I, 256),
        "hidden_layers": (_I, 2),
        "learns_on_bg": (_B, True),
    },
    "oegn": {
        "delta_new": (_F, 0.6),
        "delta_success": (_F, float("inf")),
        "delta_age": (_I, 600),
        "delta_error": (_I, 600),
        "delta_prox": (_F, None),  # None -> 0.4 * delta_new
        "delta_count": (_I, 5),
        "n_del": (_I, 10),
        "alpha": (_F, 0.001),
        "alpha_neighbors": (_F, 1e-6),
        "updates_per_batch": (_I, 32),
        "init_scale": (_F, 1.0),
    },
    "store": {
        "buffer_size": (_I, 15_000),
        "alpha_skew_plus1": (_F, 0.0),
        "high_ratio": (_F, 0.0),
    },
    "selector": {
        "t_ext": (_F, 0.0),
        "alpha_skew_prime_plus1": (_F, -1.0),
        "alpha_c": (_F, 0.05),
        "neighbor_rate": (_F, 0.0),
        "max_goal_tries": (_I, 16),
        "inherit_value_on_create": (_B, True),
    },
    "agent": {
        "entropy_scale": (_F, 0.2),
        "gamma": (_F, 0.99),
        "learning_rate": (_F, 5e-4),
        "smooth_update": (_F, 0.005),
        "n_neurons": (_I, 128),
        "hidden_layers": (_I, 2),
        "batch_size": (_I, 128),
    },
    "loop": {
        "updates_per_step": (_F, 0.25),
        "warmup_episodes": (_I, 10),
        "relabel_strategy": (_S, "uniform"),
        "relabel_fraction": (_F, 0.5),
        "visit_window": (_I, 10_000),
    },
}

# Dotted config paths for every externally fixed hyperparameter of the
# method, used by the config-fidelity check and kept stable.
PAPER_SYMBOL_PATHS: dict[str, str] = {
    # policy optimizer block
    "entropy_scale": "agent.entropy_scale",
    "sac_hidden_layers": "agent.hidden_layers",
    "sac_n_neurons": "agent.n_neurons",
    "sac_learning_rate": "agent.learning_rate",
    "batch_size": "agent.batch_size",
    "sac_smooth_update": "agent.smooth_update",
    "gamma": "agent.gamma",
    # representation block
    "learns_on_bg": "repr.learns_on_bg",
    "repr_learning_rate": "repr.learning_rate",
    "repr_n_neurons": "repr.n_neurons",
    "repr_hidden_layers": "repr.hidden_layers",
    "delta": "repr.delta",
    "k_c": "repr.k_c",
    "beta": "repr.beta",
    "alpha_slow": "repr.alpha_slow",
    "k": "repr.k",
    "d": "repr.d",
    "n_neg": "repr.n_neg",
    # cluster network and sampling block
    "delta_new": "oegn.delta_new",
    "delta_success": "oegn.delta_success",
    "buffer_size": "store.buffer_size",
    "alpha_skew_plus1": "store.alpha_skew_plus1",
    "updates_per_step": "loop.updates_per_step",
    "delta_age": "oegn.delta_age",
    "delta_error": "oegn.delta_error",
    "delta_prox": "oegn.delta_prox",
    "delta_count": "oegn.delta_count",
    "n_del": "oegn.n_del",
    "alpha": "oegn.alpha",
    "alpha_neighbors": "oegn.alpha_neighbors",
    "oegn_updates_per_batch": "oegn.updates_per_batch",
    # high-level policy block
    "alpha_c": "selector.alpha_c",
    "neighbor_rate": "selector.neighbor_rate",
    "alpha_skew_prime_plus1": "selector.alpha_skew_prime_plus1",
    "t_ext": "selector.t_ext",
}


def default_config() -> dict:
    out: dict = {}
    for section, keys in SCHEMA.items():
        out[section] = {key: copy.deepcopy(default) for key, (_, default) in keys.items()}
    return out


def profile_config(recipe: str) -> dict:
    """Defaults specialized per experiment recipe."""
    if recipe not in RECIPES:
        raise ConfigError(f"run.recipe: must be one of {RECIPES}, got {recipe!r}")
    cfg = default_config()
    cfg["run"]["recipe"] = recipe
    if recipe == "repr-study":
        cfg["env"].update(type="gridworld", layout="four_rooms", size=30,
                          obs_mode="one_hot_binary", horizon=50, random_start=True)
        cfg["repr"].update(k=1.0, delta=0.1, k_c=20.0, beta=2.0, d=3,
                           learning_rate=1e-3, n_neurons=128)
        cfg["run"].update(repr_train_steps=12_000, repr_dataset_transitions=100_000,
                          repr_batch_pairs=64)
    elif recipe == "entropy-study":
        cfg["env"].update(type="gridworld", layout="four_rooms", size=15,
                          obs_mode="xy_coords", horizon=50, random_start=False)
        cfg["repr"].update(k=1.0, delta=0.1, k_c=20.0, beta=2.0, d=3,
                           learning_rate=1e-3, n_neurons=128)
        cfg["oegn"].update(delta_new=0.6)
        cfg["store"].update(buffer_size=15_000, alpha_skew_plus1=0.0)
        cfg["selector"].update(t_ext=0.0, alpha_skew_prime_plus1=-1.0,
                               alpha_c=0.05, neighbor_rate=0.0)
        cfg["agent"].update(entropy_scale=0.2, gamma=0.99, learning_rate=1e-3,
                            n_neurons=64, batch_size=64)
        cfg["loop"].update(updates_per_step=0.25, relabel_strategy="uniform")
        cfg["run"].update(total_env_steps=60_000, metrics_every=2_000,
                          eval_every=0)
    elif recipe == "sparse-maze":
        cfg["env"].update(type="point_maze", layout="u_maze", horizon=200,
                          speed=0.5, goal_radius=1.5)
        cfg["repr"].update(k=3.0, delta=0.01, k_c=20.0, beta=2.0, d=3,
                           learning_rate=1e-4, n_neurons=64)
        cfg["oegn"].update(delta_new=0.6)
        cfg["store"].update(buffer_size=15_000, alpha_skew_plus1=0.0)
        cfg["selector"].update(t_ext=100.0, alpha_skew_prime_plus1=-1.0,
                               alpha_c=0.05, neighbor_rate=0.0)
        cfg["agent"].update(entropy_scale=0.2, gamma=0.996, learning_rate=5e-4,
                            smooth_update=0.005, n_neurons=64, batch_size=64)
        cfg["loop"].update(updates_per_step=0.25, relabel_strategy="uniform")
        cfg["run"].update(total_env_steps=300_000, eval_every=5_000,
                          metrics_every=5_000, stop_on_success=False)
    return cfg


def _decode_value(value, expected_type, path: str):
    if value is None:
        return None
    if expected_type is float:
        if isinstance(value, str):
            if value in ("inf", "Infinity"):
                return float("inf")
            if value in ("-inf", "-Infinity"):
                return float("-inf")
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if expected_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if expected_type is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if expected_type is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    raise AssertionError(f"unhandled schema type for {path}")


def validate_config(raw: dict) -> dict:
    """Merge a user document over the recipe profile and type-check every key.

    Unknown sections or keys are errors that name the offending field.
    """
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected an object of sections")
    recipe = raw.get("run", {}).get("recipe")
    if recipe is None:
        raise ConfigError("run.recipe: required field is missing")
    resolved = profile_config(_decode_value(recipe, str, "run.recipe"))
    for section, body in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"{section}: unknown section")
        if not isinstance(body, dict):
            raise ConfigError(f"{section}: expected an object")
        for key, value in body.items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}: unknown key")
            expected_type, _ = SCHEMA[section][key]
            resolved[section][key] = _decode_value(value, expected_type,
                                                   f"{section}.{key}")
    _cross_validate(resolved)
    return resolved


def _cross_validate(cfg: dict) -> None:
    if cfg["run"]["recipe"] not in RECIPES:
        raise ConfigError(f"run.recipe: must be one of {RECIPES}")
    if cfg["env"]["type"] not in ("gridworld", "point_maze"):
        raise ConfigError("env.type: must be 'gridworld' or 'point_maze'")
    if cfg["env"]["obs_mode"] not in ("one_hot_binary", "xy_coords"):
        raise ConfigError("env.obs_mode: must be 'one_hot_binary' or 'xy_coords'")
    if cfg["loop"]["relabel_strategy"] not in ("uniform", "high_level", "topological"):
        raise ConfigError("loop.relabel_strategy: unknown strategy")
    if cfg["run"]["agent_variant"] not in ("full", "flat"):
        raise ConfigError("run.agent_variant: must be 'full' or 'flat'")
    if cfg["repr"]["n_neg"] + 1 > cfg["agent"]["batch_size"]:
        raise ConfigError("repr.n_neg: must be below agent.batch_size")
    if cfg["repr"]["k"] <= 0:
        raise ConfigError("repr.k: must be positive")
    if not 0 < cfg["agent"]["gamma"] < 1:
        raise ConfigError("agent.gamma: must lie in (0, 1)")
    if not 0 < cfg["agent"]["smooth_update"] <= 1:
        raise ConfigError("agent.smooth_update: must lie in (0, 1]")
    if not 0 < cfg["selector"]["alpha_c"] <= 1:
        raise ConfigError("selector.alpha_c: must lie in (0, 1]")
    if cfg["oegn"]["delta_new"] <= 0:
        raise ConfigError("oegn.delta_new: must be positive")
    prox = cfg["oegn"]["delta_prox"]
    if prox is not None and not 0 < prox < cfg["oegn"]["delta_new"]:
        raise ConfigError("oegn.delta_prox: must lie in (0, delta_new)")


def apply_overrides(cfg: dict, overrides: list[str]) -> dict:
    """Apply ``section.key=value`` strings; values parse as JSON first,
    falling back to raw strings."""
    out = copy.deepcopy(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected section.key=value")
        path, _, text = item.partition("=")
        parts = path.strip().split(".")
        if len(parts) != 2:
            raise ConfigError(f"override {item!r}: path must be section.key")
        section, key = parts
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"override {path}: unknown config key")
        try:
            value = json.loads(text)
        except json.JSONDecodeError:
            value = text
        expected_type, _ = SCHEMA[section][key]
        out[section][key] = _decode_value(value, expected_type, path)
    _cross_validate(out)
    return out


def get_path(cfg: dict, dotted: str):
    section, key = dotted.split(".")
    return cfg[section][key]


def _encode_inf(value):
    if isinstance(value, float) and math.isinf(value):
        return "inf" if value > 0 else "-inf"
    if isinstance(value, dict):
        return {k: _encode_inf(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_encode_inf(v) for v in value]
    return value


def dump_config(cfg: dict) -> str:
    return json.dumps(_encode_inf(cfg), indent=2, sort_keys=True, allow_nan=False)


def load_config_file(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}")
    return validate_config(raw)
