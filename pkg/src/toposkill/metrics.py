"""Run metrics: visitation entropy, rank-correlation summaries, and a
newline-delimited record stream with stable field names.

Records never contain wall-clock values, so identical seeded runs produce
byte-identical files.
"""

from __future__ import annotations

import json
import math

import numpy as np
from scipy import stats

Array = np.ndarray


def entropy_of_counts(counts: Array) -> float:
    """Shannon entropy (natural log) of an empirical count vector."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts[counts > 0] / total
    return float(-(p * np.log(p)).sum())


def visitation_entropy(histogram: Array) -> float:
    return entropy_of_counts(np.asarray(histogram, dtype=np.float64).ravel())


def embedding_topology_scores(embeddings: Array, bfs: Array,
                              far_threshold: int = 10) -> dict:
    """How well embedding distances track shortest-path distances.

    Returns the rank correlation over all cell pairs, plus the mean embedding
    distance of one-step pairs and of far pairs (shortest path at least
    ``far_threshold``)."""
    n = embeddings.shape[0]
    iu = np.triu_indices(n, k=1)
    diff = embeddings[:, None, :] - embeddings[None, :, :]
    emb_dist = np.sqrt((diff * diff).sum(axis=2))[iu]
    bfs_dist = np.asarray(bfs, dtype=np.float64)[iu]
    reachable = bfs_dist >= 0
    rho = stats.spearmanr(emb_dist[reachable], bfs_dist[reachable]).statistic
    adjacent = reachable & (bfs_dist == 1)
    far = reachable & (bfs_dist >= far_threshold)
    mean_adj = float(emb_dist[adjacent].mean()) if adjacent.any() else float("nan")
    mean_far = float(emb_dist[far].mean()) if far.any() else float("nan")
    return {"spearman": float(rho), "mean_adjacent": mean_adj,
            "mean_far": mean_far,
            "separation": mean_far / mean_adj if mean_adj > 0 else float("inf")}


def _jsonable(value):
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    return value


def encode_record(record: dict) -> str:
    return json.dumps(_jsonable(record), sort_keys=True, allow_nan=False)


class MetricsWriter:
    """Appends one JSON object per line; flushed per record."""

    def __init__(self, path: str):
        self.path = path
        self._fh = open(path, "w", encoding="utf-8")

    def write(self, record: dict) -> None:
        self._fh.write(encode_record(record) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_metrics(path: str) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]
