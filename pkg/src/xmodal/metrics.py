"""Retrieval evaluation: graded relevance, nDCG, mAP.

Queries are held-out target captions; the gallery is ranked by ascending
cosine distance in the action embedding space (distance ties broken by item
index, so results are storage-order deterministic). Graded relevance is the
average of the verb-match and noun-match indicators, giving 0, 0.5 or 1;
mAP binarizes it at strictly greater than 0.5, i.e. both parts must match.
nDCG runs over the full ranking with DCG_i = rel_i / log2(i + 1).

Evaluation never mutates the model or the galleries; per-query work is
independent and aggregation order is fixed.
"""

from __future__ import annotations

import datetime
import json
from dataclasses import dataclass, field

import numpy as np

from .corpus import EvalQueries, Gallery
from .errors import GalleryError
from .model import MultiViewModel
from .nn import pairwise_cosine


def graded_relevance(query_verb, query_noun, item_verb, item_noun):
    """(1[same verb] + 1[same noun]) / 2; vectorized over items."""
    return (np.equal(query_verb, item_verb).astype(np.float64)
            + np.equal(query_noun, item_noun)) / 2.0


def dcg(relevances: np.ndarray) -> float:
    """Discounted cumulative gain of relevances already in rank order (rank 1 first)."""
    relevances = np.asarray(relevances, dtype=np.float64)
    ranks = np.arange(1, relevances.size + 1)
    return float((relevances / np.log2(ranks + 1)).sum())


def ndcg_single(relevances: np.ndarray):
    """nDCG of one ranked list, or None when no item is relevant."""
    relevances = np.asarray(relevances, dtype=np.float64)
    ideal = np.sort(relevances)[::-1]
    idcg = dcg(ideal)
    if idcg <= 0.0:
        return None
    return dcg(relevances) / idcg


def average_precision(binary: np.ndarray):
    """AP of one ranked binary list, or None when no item is relevant."""
    binary = np.asarray(binary, dtype=bool)
    if not binary.any():
        return None
    cum = np.cumsum(binary)
    ranks = np.flatnonzero(binary) + 1
    return float((cum[binary] / ranks).mean())


def rank_by_distance(distances: np.ndarray) -> np.ndarray:
    """Gallery permutation by ascending distance; ties keep index order."""
    return np.argsort(distances, kind="stable")


def ranking_metrics(dist_matrix, graded):
    """Mean nDCG and mAP over query rows.

    `graded` holds per (query, item) graded relevance in storage order; items
    with graded > 0.5 count as relevant for mAP. Queries without any relevant
    item are skipped per metric.
    """
    ndcgs, aps = [], []
    for qi in range(dist_matrix.shape[0]):
        order = rank_by_distance(dist_matrix[qi])
        ranked = graded[qi][order]
        nd = ndcg_single(ranked)
        if nd is not None:
            ndcgs.append(nd)
        ap = average_precision(ranked > 0.5)
        if ap is not None:
            aps.append(ap)
    mean_ndcg = float(np.mean(ndcgs)) if ndcgs else 0.0
    mean_ap = float(np.mean(aps)) if aps else 0.0
    return mean_ndcg, mean_ap, len(ndcgs), len(aps)


@dataclass
class EvalReport:
    ndcg: float
    map: float
    per_view: dict
    num_queries: int
    num_gallery: int
    config_hash: str = ""
    seed: int = 0
    diagnostics: dict = field(default_factory=dict)
    created_at: str = ""

    def to_dict(self) -> dict:
        return {
            "ndcg": self.ndcg,
            "map": self.map,
            "per_view": self.per_view,
            "num_queries": self.num_queries,
            "num_gallery": self.num_gallery,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "diagnostics": self.diagnostics,
            "created_at": self.created_at,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def evaluate_retrieval(model: MultiViewModel, video_features: np.ndarray,
                       item_verb: np.ndarray, item_noun: np.ndarray,
                       query_text: np.ndarray, query_verb: np.ndarray,
                       query_noun: np.ndarray) -> dict:
    """Text-to-video retrieval metrics on an arbitrary labelled gallery.

    Returns the action-space nDCG / mAP plus per-view numbers (verb and noun
    views score against single-part binary relevance).
    """
    if len(query_text) == 0:
        raise GalleryError("evaluation needs at least one query")
    if len(video_features) == 0:
        raise GalleryError("evaluation needs a nonempty gallery")
    out = {}
    for view in ("verb", "noun", "action"):
        q_emb = model.embed_batch(query_text, view, "text")
        g_emb = model.embed_batch(video_features, view, "video")
        dist = pairwise_cosine(q_emb, g_emb)
        if view == "verb":
            graded = np.equal(query_verb[:, None], item_verb[None, :]).astype(np.float64)
        elif view == "noun":
            graded = np.equal(query_noun[:, None], item_noun[None, :]).astype(np.float64)
        else:
            graded = graded_relevance(query_verb[:, None], query_noun[:, None],
                                      item_verb[None, :], item_noun[None, :])
        nd, ap, n_nd, n_ap = ranking_metrics(dist, graded)
        out[view] = {"ndcg": nd, "map": ap, "queries_ndcg": n_nd, "queries_map": n_ap}
    return out


def evaluate_model(model: MultiViewModel, target_gallery: Gallery, queries: EvalQueries,
                   config_hash: str = "", seed: int = 0,
                   diagnostics: dict | None = None) -> EvalReport:
    """Evaluate retrieval of target videos from held-out target text queries.

    `target_gallery.video` must already carry the run's domain transform.
    """
    if target_gallery.captioned:
        raise GalleryError("evaluation gallery must be the uncaptioned target gallery")
    if len(queries) != len(target_gallery):
        raise GalleryError(
            f"query records ({len(queries)}) must align with target items "
            f"({len(target_gallery)})"
        )
    per_view = evaluate_retrieval(
        model, target_gallery.video, queries.verb, queries.noun,
        queries.text, queries.verb, queries.noun,
    )
    action = per_view["action"]
    return EvalReport(
        ndcg=action["ndcg"],
        map=action["map"],
        per_view=per_view,
        num_queries=len(queries),
        num_gallery=len(target_gallery),
        config_hash=config_hash,
        seed=seed,
        diagnostics=diagnostics or {},
        created_at=datetime.datetime.now(datetime.timezone.utc).isoformat(),
    )
