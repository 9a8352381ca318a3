"""Empirical privacy auditing via a challenger/attacker membership game.

Each trial trains the full pipeline on a challenger-sampled training graph,
flips a membership bit, and asks a black-box attacker to score the
challenge item.  Scores over all trials are summarized by rank-based AUC
(0.5 = chance).  Two attacks are provided: an edge-influence probe (does
nudging node v's features move node u's prediction?) and a node-confidence
probe (is the model unusually confident on this node?).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Literal

import numpy as np
from scipy.stats import rankdata

from .graphs import Graph, LabeledDataset, build_graph, degree_stats
from .layers import project_rows
from .model import TrainConfig, predict_proba, train_head
from .pipeline import PipelineConfig, run_pipeline
from .prng import stream

AttackName = Literal["edge_influence", "node_confidence"]

#: query callable: (node, optional (row, additive nudge)) -> probability vector
ModelQuery = Callable[..., np.ndarray]

_TRIAL_STREAM = 0xA0D1
_QUERY_LIMIT = 1 << 20


@dataclass(frozen=True)
class AuditConfig:
    attack: AttackName = "edge_influence"
    trials: int = 20
    seed: int = 0
    perturb_scale: float = 1e-3
    edge_keep_fraction: float = 0.7
    node_keep_fraction: float = 0.7

    def __post_init__(self) -> None:
        if self.attack not in ("edge_influence", "node_confidence"):
            raise ValueError(f"unknown attack {self.attack!r}")
        if self.trials < 10:
            raise ValueError("at least 10 trials are required")
        if self.perturb_scale <= 0:
            raise ValueError("perturb_scale must be positive")
        for frac in (self.edge_keep_fraction, self.node_keep_fraction):
            if not 0.0 < frac < 1.0:
                raise ValueError("keep fractions must be in (0, 1)")


@dataclass(frozen=True)
class AuditReport:
    scores: list[float]
    membership_bits: list[int]
    auc: float
    discarded_trials: int = 0

    def to_jsonl(self) -> str:
        lines = [
            json.dumps({"trial": i, "score": s, "member": b})
            for i, (s, b) in enumerate(zip(self.scores, self.membership_bits))
        ]
        lines.append(
            json.dumps(
                {
                    "summary": True,
                    "auc": self.auc,
                    "trials": len(self.scores),
                    "discarded_trials": self.discarded_trials,
                }
            )
        )
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_jsonl())


def auc(scores, bits) -> float:
    """Rank-based AUC with ties counted one half.

    Equals the probability that a random member outscores a random
    non-member, with ties contributing 0.5.
    """
    scores = np.asarray(scores, dtype=float)
    bits = np.asarray(bits, dtype=int)
    if scores.shape != bits.shape or scores.ndim != 1:
        raise ValueError("scores and bits must be equal-length vectors")
    n_pos = int(bits.sum())
    n_neg = int(bits.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both membership classes must be present")
    ranks = rankdata(scores)
    u = ranks[bits == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def empirical_epsilon_lower_bound(scores, bits, threshold: float) -> float:
    """Diagnostic only: log(max(TPR/FPR, FNR/TNR)) at one threshold,
    clamped at zero.

    Not a certified bound; finite-sample rates are used as-is, so a
    perfectly separating threshold reports infinity.
    """
    scores = np.asarray(scores, dtype=float)
    bits = np.asarray(bits, dtype=int)
    positive = scores >= threshold
    tpr = positive[bits == 1].mean() if np.any(bits == 1) else 0.0
    fpr = positive[bits == 0].mean() if np.any(bits == 0) else 0.0
    fnr, tnr = 1.0 - tpr, 1.0 - fpr
    ratios = []
    for num, den in ((tpr, fpr), (fnr, tnr)):
        if den > 0:
            ratios.append(num / den)
        elif num > 0:
            ratios.append(math.inf)
    if not ratios:
        return 0.0
    best = max(ratios)
    return max(0.0, math.log(best)) if best > 0 else 0.0


def edge_influence_score(
    model_query: ModelQuery, u: int, v: int, perturb_scale: float
) -> float:
    """Influence of node v's features on node u's prediction.

    Queries the model twice (plain, and with row v nudged by
    ``perturb_scale`` in every coordinate) and returns the L1 change in
    u's probability vector per unit nudge.  Higher values suggest the
    edge {u, v} was present in the training graph.
    """
    base = np.asarray(model_query(u))
    nudged = np.asarray(model_query(u, (v, perturb_scale)))
    return float(np.abs(nudged - base).sum() / perturb_scale)


def node_confidence_score(model_query: ModelQuery, node: int) -> float:
    """Maximum class probability of the node; members tend to score higher."""
    return float(np.asarray(model_query(node)).max())


def _sample_edge_subset(g: Graph, keep_fraction: float, rng, require_min_degree: bool,
                        max_tries: int = 200) -> Graph:
    edges = sorted(g.edges)
    keep = max(1, round(keep_fraction * len(edges)))
    for _ in range(max_tries):
        chosen = rng.choice(len(edges), size=keep, replace=False)
        sub = Graph(num_nodes=g.num_nodes, edges=frozenset(edges[i] for i in chosen))
        if not require_min_degree or degree_stats(sub).d_min >= 1:
            return sub
    raise RuntimeError(
        "could not sample a training edge subset with minimum degree >= 1; "
        "use a denser graph or a larger keep fraction"
    )


def _induced_subgraph(g: Graph, nodes: np.ndarray) -> tuple[Graph, np.ndarray]:
    """Induced subgraph on ``nodes`` (sorted); returns it with the id map."""
    nodes = np.sort(np.asarray(nodes, dtype=np.int64))
    position = {int(orig): new for new, orig in enumerate(nodes)}
    kept = [
        (position[u], position[v])
        for u, v in g.edges
        if u in position and v in position
    ]
    return build_graph(len(nodes), kept), nodes


class _PipelineModel:
    """Trained pipeline + head exposed as a black-box query interface.

    Every query reruns inference end to end with a fresh counter-derived
    noise stream, so a private pipeline answers queries noisily while a
    non-private one is deterministic.
    """

    def __init__(
        self,
        dataset: LabeledDataset,
        pipeline_cfg: PipelineConfig,
        train_cfg: TrainConfig,
        query_seed: int,
    ):
        self._dataset = dataset
        self._cfg = pipeline_cfg
        self._query_seed = query_seed
        self._queries = 0
        artifacts = run_pipeline(dataset, pipeline_cfg)
        self.head = train_head(
            dataset.features,
            artifacts.x_k_final,
            dataset.labels,
            dataset.train_mask,
            train_cfg,
            seed=pipeline_cfg.seed,
        )

    def query(self, node: int, nudge: tuple[int, float] | None = None) -> np.ndarray:
        self._queries += 1
        if self._queries > _QUERY_LIMIT:
            raise RuntimeError("query budget exhausted")
        features = _nudged_features(self._dataset.features, nudge)
        probe = replace(self._dataset, features=features)
        cfg = replace(self._cfg, seed=stream_seed(self._query_seed, self._queries))
        artifacts = run_pipeline(probe, cfg)
        return predict_proba(self.head, features[node], artifacts.x_k_final[node])


def _nudged_features(features: np.ndarray, nudge: tuple[int, float] | None) -> np.ndarray:
    """Apply an additive row nudge; the serving pipeline re-normalizes, so
    the probed row is projected back onto the unit ball."""
    if nudge is None:
        return features
    row, scale = nudge
    out = features.copy()
    out[row] = project_rows(out[row] + scale)
    return out


def stream_seed(seed: int, index: int) -> int:
    """Derive a 63-bit child seed from (seed, index) via a keyed stream."""
    return int(stream(seed, 0x5EED, index % (1 << 32)).integers(0, 1 << 63))


def _absent_pairs(g: Graph) -> list[tuple[int, int]]:
    pairs = []
    for u in range(g.num_nodes):
        for v in range(u + 1, g.num_nodes):
            if not g.has_edge(u, v):
                pairs.append((u, v))
    return pairs


def _edge_trial(
    dataset: LabeledDataset,
    pipeline_cfg: PipelineConfig,
    train_cfg: TrainConfig,
    audit_cfg: AuditConfig,
    rng: np.random.Generator,
    trial: int,
    score_fn: Callable[[ModelQuery, object], float] | None = None,
) -> tuple[float, int]:
    training_graph = _sample_edge_subset(
        dataset.graph,
        audit_cfg.edge_keep_fraction,
        rng,
        require_min_degree=pipeline_cfg.spec.level != "none",
    )
    train_set = replace(dataset, graph=training_graph)
    model = _PipelineModel(
        train_set,
        replace(pipeline_cfg, seed=stream_seed(audit_cfg.seed, 2 * trial)),
        train_cfg,
        query_seed=stream_seed(audit_cfg.seed, 2 * trial + 1),
    )
    bit = int(rng.integers(0, 2))
    if bit == 1:
        members = sorted(training_graph.edges)
        u, v = members[int(rng.integers(0, len(members)))]
    else:
        absent = _absent_pairs(training_graph)
        if not absent:
            return math.nan, 0
        u, v = absent[int(rng.integers(0, len(absent)))]
    if score_fn is not None:
        return float(score_fn(model.query, (u, v))), bit
    score = edge_influence_score(model.query, u, v, audit_cfg.perturb_scale)
    return score, bit


def _node_trial(
    dataset: LabeledDataset,
    pipeline_cfg: PipelineConfig,
    train_cfg: TrainConfig,
    audit_cfg: AuditConfig,
    rng: np.random.Generator,
    trial: int,
    score_fn: Callable[[ModelQuery, object], float] | None = None,
) -> tuple[float, int]:
    n = dataset.graph.num_nodes
    keep = max(2, round(audit_cfg.node_keep_fraction * n))
    need_degree = pipeline_cfg.spec.level != "none"
    for _ in range(200):
        member_nodes = np.sort(rng.choice(n, size=keep, replace=False))
        sub_graph, id_map = _induced_subgraph(dataset.graph, member_nodes)
        if not need_degree or degree_stats(sub_graph).d_min >= 1:
            break
    else:
        raise RuntimeError(
            "could not sample a training subgraph with minimum degree >= 1"
        )
    sub_set = LabeledDataset(
        graph=sub_graph,
        features=dataset.features[id_map],
        labels=dataset.labels[id_map],
        train_mask=np.arange(len(id_map)),
        test_mask=np.array([], dtype=np.int64),
    )
    model = _PipelineModel(
        sub_set,
        replace(pipeline_cfg, seed=stream_seed(audit_cfg.seed, 2 * trial)),
        train_cfg,
        query_seed=stream_seed(audit_cfg.seed, 2 * trial + 1),
    )
    # train on subgraph, test on full graph: queries run on the full topology
    full_model = _QueryOnFullGraph(model.head, dataset, pipeline_cfg,
                                   stream_seed(audit_cfg.seed, 2 * trial + 1))
    bit = int(rng.integers(0, 2))
    member_set = set(int(i) for i in member_nodes)
    if bit == 1:
        node = int(member_nodes[int(rng.integers(0, len(member_nodes)))])
    else:
        outside = [i for i in range(n) if i not in member_set]
        if not outside:
            return math.nan, 0
        node = outside[int(rng.integers(0, len(outside)))]
    if score_fn is not None:
        return float(score_fn(full_model.query, node)), bit
    return node_confidence_score(full_model.query, node), bit


class _QueryOnFullGraph:
    """Query interface that runs inference on the full graph with a head
    trained elsewhere."""

    def __init__(self, head, dataset: LabeledDataset, pipeline_cfg: PipelineConfig,
                 query_seed: int):
        self.head = head
        self._dataset = dataset
        self._cfg = pipeline_cfg
        self._query_seed = query_seed
        self._queries = 0

    def query(self, node: int, nudge: tuple[int, float] | None = None) -> np.ndarray:
        self._queries += 1
        features = _nudged_features(self._dataset.features, nudge)
        probe = replace(self._dataset, features=features)
        cfg = replace(self._cfg, seed=stream_seed(self._query_seed, self._queries))
        artifacts = run_pipeline(probe, cfg)
        return predict_proba(self.head, features[node], artifacts.x_k_final[node])


def run_mia_game(
    dataset: LabeledDataset,
    pipeline_cfg: PipelineConfig,
    train_cfg: TrainConfig,
    audit_cfg: AuditConfig,
    score_fn: Callable[[ModelQuery, object], float] | None = None,
) -> AuditReport:
    """Play the challenger/attacker game for ``audit_cfg.trials`` rounds.

    Edge attack: the challenger keeps a random edge subset as the training
    graph; members are present edges, non-members uniformly drawn absent
    pairs.  Node attack: the challenger trains on a random induced
    subgraph and the attacker queries the full graph.  Non-finite attacker
    scores discard the trial (counted in the report).

    ``score_fn(query, challenge)`` replaces the built-in attacker when
    given; the challenge is an (u, v) pair for the edge game and a node id
    for the node game.
    """
    scores: list[float] = []
    bits: list[int] = []
    discarded = 0
    for trial in range(audit_cfg.trials):
        rng = stream(audit_cfg.seed, _TRIAL_STREAM, trial)
        if audit_cfg.attack == "edge_influence":
            score, bit = _edge_trial(
                dataset, pipeline_cfg, train_cfg, audit_cfg, rng, trial, score_fn
            )
        else:
            score, bit = _node_trial(
                dataset, pipeline_cfg, train_cfg, audit_cfg, rng, trial, score_fn
            )
        if not math.isfinite(score):
            discarded += 1
            continue
        scores.append(score)
        bits.append(bit)
    return AuditReport(
        scores=scores,
        membership_bits=bits,
        auc=auc(scores, bits),
        discarded_trials=discarded,
    )
