"""Flat binary weight container with a JSON header.

Layout: magic, 8-byte little-endian header length, UTF-8 JSON header, then
the raw float64 little-endian array payloads in header order. The header
records every array's shape plus arbitrary metadata (embedding size,
config), so files are self-describing.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"TSKW0001"


def save_params(path: str, groups: dict[str, list[np.ndarray]],
                meta: dict | None = None) -> None:
    header = {"meta": meta or {}, "groups": {}}
    payload = bytearray()
    for name, arrays in groups.items():
        shapes = []
        for arr in arrays:
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            shapes.append(list(arr.shape))
            payload += arr.tobytes()
        header["groups"][name] = shapes
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        fh.write(bytes(payload))


def load_params(path: str) -> tuple[dict[str, list[np.ndarray]], dict]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path} is not a weight container")
        (blob_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(blob_len).decode("utf-8"))
        groups: dict[str, list[np.ndarray]] = {}
        for name, shapes in header["groups"].items():
            arrays = []
            for shape in shapes:
                count = int(np.prod(shape)) if shape else 1
                data = np.frombuffer(fh.read(count * 8), dtype="<f8")
                arrays.append(data.reshape(shape).copy())
            groups[name] = arrays
    return groups, header["meta"]


def save_encoder(path: str, params, extra_meta: dict | None = None) -> None:
    cfg = params.cfg
    meta = {"d": params.d,
            "layer_sizes": params.online.layer_sizes,
            "config": {"k": cfg.k, "k_c": cfg.k_c, "delta": cfg.delta,
                       "beta": cfg.beta, "alpha_slow": cfg.alpha_slow,
                       "n_neg": cfg.n_neg, "optimizer": "adam",
                       "learning_rate": cfg.learning_rate}}
    meta.update(extra_meta or {})
    save_params(path, {"online": params.online.params,
                       "target": params.target.params}, meta)


def restore_encoder(path: str, params) -> dict:
    groups, meta = load_params(path)
    params.online.set_params(groups["online"])
    params.target.set_params(groups["target"])
    return meta


def save_agent(path: str, agent, extra_meta: dict | None = None) -> None:
    meta = {"kind": "categorical" if agent.discrete else "gaussian"}
    meta.update(extra_meta or {})
    save_params(path, agent.param_groups(), meta)
