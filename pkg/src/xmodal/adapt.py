"""Pseudo-labelling of target videos with prototype confidence and sampling.

Each epoch, with the model frozen, every view is refreshed atomically:

1. source videos are embedded and one prototype (the mean embedding) is
   computed per relevance group;
2. each target video inherits the relevance group of its nearest source
   video (or of the nearest prototype, under the ablation variant);
3. a confidence exp(-d) is attached, measured to the inherited group's
   prototype (or to the nearest source video, under the ablation variant);
4. the top x% most confident targets are selected per prototype, which keeps
   every assigned group represented, or globally under the uniform variant.

Training steps then read one stable table for the whole epoch. Nearest
neighbours are exact brute force — desk-scale galleries make that affordable
and keep approximation out of the tests. Nearest-neighbour ties resolve to
the lowest source index.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .corpus import Gallery, RelevanceView, VIEWS, item_labels
from .errors import GalleryError
from .model import MultiViewModel
from .nn import pairwise_cosine

log = logging.getLogger(__name__)

LABELLING_VARIANTS = ("nearest_source", "nearest_prototype")
CONFIDENCE_VARIANTS = ("prototype", "neighbour")
SAMPLING_VARIANTS = ("per_prototype", "uniform")

PROTO_NORM_EPS = 1e-12


@dataclass(frozen=True)
class AdaptConfig:
    sample_percent: float = 60.0
    labelling: str = "nearest_source"
    confidence: str = "prototype"
    sampling: str = "per_prototype"

    def __post_init__(self):
        if not 0.0 < self.sample_percent <= 100.0:
            raise ValueError(f"sample_percent must be in (0, 100], got {self.sample_percent}")
        if self.labelling not in LABELLING_VARIANTS:
            raise ValueError(f"labelling must be one of {LABELLING_VARIANTS}")
        if self.confidence not in CONFIDENCE_VARIANTS:
            raise ValueError(f"confidence must be one of {CONFIDENCE_VARIANTS}")
        if self.sampling not in SAMPLING_VARIANTS:
            raise ValueError(f"sampling must be one of {SAMPLING_VARIANTS}")


@dataclass(frozen=True)
class Prototypes:
    view: str
    centroids: np.ndarray       # (P, dim) mean embedding per relevance group
    member_counts: np.ndarray   # (P,)
    degenerate: np.ndarray      # (P,) True when the centroid norm collapses

    @property
    def num_groups(self) -> int:
        return len(self.member_counts)


def compute_prototypes(embedded_source: np.ndarray, relevance: RelevanceView,
                       view: str | None = None) -> Prototypes:
    """One prototype per relevance group: the arithmetic mean of its embeddings."""
    view = view or relevance.view
    dim = embedded_source.shape[1]
    p = relevance.num_groups
    centroids = np.zeros((p, dim))
    counts = np.zeros(p, dtype=np.int64)
    degenerate = np.zeros(p, dtype=bool)
    for gid, members in enumerate(relevance.groups):
        if members.size == 0:
            degenerate[gid] = True
            log.warning("prototype %d in view %s has no members; skipped", gid, view)
            continue
        centroids[gid] = embedded_source[members].mean(axis=0)
        counts[gid] = members.size
        if np.linalg.norm(centroids[gid]) < PROTO_NORM_EPS:
            degenerate[gid] = True
            log.warning("prototype %d in view %s is degenerate (zero centroid)", gid, view)
    return Prototypes(view=view, centroids=centroids, member_counts=counts,
                      degenerate=degenerate)


@dataclass
class PseudoLabelTable:
    view: str
    nearest_source: np.ndarray   # (T,) index of the closest source video
    group_id: np.ndarray         # (T,) inherited relevance group
    confidence: np.ndarray       # (T,) in [0, 1]
    selected: np.ndarray         # (T,) bool
    distance_evals: int
    config: AdaptConfig

    def __len__(self) -> int:
        return len(self.group_id)

    def inherited_relevant_sources(self, relevance: RelevanceView, target: int) -> np.ndarray:
        """V^s_+ of a target: its inherited group's members (nearest source included)."""
        return relevance.groups[self.group_id[target]]


def pseudo_label(embedded_target: np.ndarray, embedded_source: np.ndarray,
                 prototypes: Prototypes, relevance: RelevanceView,
                 labelling: str = "nearest_source"):
    """Assign each target a source relevance group.

    Returns (nearest_source, group_id, nearest_distance, distance_evals).
    The nearest source video is always recorded; under nearest_prototype
    labelling the group comes from the closest non-degenerate centroid.
    """
    if embedded_source.shape[0] == 0:
        raise GalleryError("pseudo-labelling needs a nonempty source gallery")
    t = embedded_target.shape[0]
    dist_ts = pairwise_cosine(embedded_target, embedded_source)
    evals = dist_ts.size
    nearest = dist_ts.argmin(axis=1)          # ties: lowest source index
    nearest_dist = dist_ts[np.arange(t), nearest]
    if labelling == "nearest_source":
        group_id = relevance.group_ids[nearest]
    elif labelling == "nearest_prototype":
        valid = np.flatnonzero(~prototypes.degenerate)
        if valid.size == 0:
            raise GalleryError("all prototypes degenerate; cannot pseudo-label")
        dist_tp = pairwise_cosine(embedded_target, prototypes.centroids[valid])
        evals += dist_tp.size
        group_id = valid[dist_tp.argmin(axis=1)]
    else:
        raise ValueError(f"unknown labelling variant {labelling!r}")
    return nearest, group_id.astype(np.int64), nearest_dist, evals


def confidence_scores(embedded_target: np.ndarray, prototypes: Prototypes,
                      group_id: np.ndarray, nearest_dist: np.ndarray,
                      variant: str = "prototype"):
    """exp(-distance) per target; returns (confidence, distance_evals).

    prototype: distance to the inherited group's centroid (robust to outliers);
    neighbour: distance to the nearest source video (already known, 0 evals).
    Degenerate prototypes yield confidence 0.
    """
    if variant == "neighbour":
        return np.exp(-nearest_dist), 0
    if variant != "prototype":
        raise ValueError(f"unknown confidence variant {variant!r}")
    t = embedded_target.shape[0]
    conf = np.zeros(t)
    evals = 0
    for gid in np.unique(group_id):
        mask = group_id == gid
        if prototypes.degenerate[gid]:
            log.warning("confidence 0 for %d targets: prototype %d degenerate in view %s",
                        int(mask.sum()), gid, prototypes.view)
            continue
        d = pairwise_cosine(embedded_target[mask],
                            prototypes.centroids[gid][None, :])[:, 0]
        conf[mask] = np.exp(-d)
        evals += int(mask.sum())
    return conf, evals


def per_prototype_quota(assigned: int, x_percent: float) -> int:
    """Top-x% count with every nonempty assignment keeping at least one pick."""
    return max(1, math.floor(x_percent * assigned / 100.0))


def select_targets(group_id: np.ndarray, confidence: np.ndarray, x_percent: float,
                   variant: str = "per_prototype", num_groups: int | None = None) -> np.ndarray:
    """Selection flags for the top x% most confident targets.

    per_prototype ranks within each prototype's assigned targets, keeping the
    pseudo-label distribution; uniform ranks globally. Confidence ties break
    on the lower target index.
    """
    t = len(group_id)
    selected = np.zeros(t, dtype=bool)
    if variant == "per_prototype":
        groups = range(int(num_groups) if num_groups is not None else int(group_id.max()) + 1)
        for gid in groups:
            idx = np.flatnonzero(group_id == gid)
            if idx.size == 0:
                continue
            take = per_prototype_quota(idx.size, x_percent)
            order = idx[np.lexsort((idx, -confidence[idx]))]
            selected[order[:take]] = True
    elif variant == "uniform":
        take = per_prototype_quota(t, x_percent)
        order = np.lexsort((np.arange(t), -confidence))
        selected[order[:take]] = True
    else:
        raise ValueError(f"unknown sampling variant {variant!r}")
    return selected


def refresh_view(model: MultiViewModel, source_gallery: Gallery, target_gallery: Gallery,
                 relevance: RelevanceView, view: str, config: AdaptConfig):
    """Recompute prototypes, labels, confidences and selection for one view."""
    emb_s = model.embed_batch(source_gallery.video, view, "video")
    emb_t = model.embed_batch(target_gallery.video, view, "video")
    prototypes = compute_prototypes(emb_s, relevance, view)
    nearest, group_id, nearest_dist, evals = pseudo_label(
        emb_t, emb_s, prototypes, relevance, config.labelling)
    conf, conf_evals = confidence_scores(emb_t, prototypes, group_id,
                                         nearest_dist, config.confidence)
    selected = select_targets(group_id, conf, config.sample_percent,
                              config.sampling, prototypes.num_groups)
    table = PseudoLabelTable(
        view=view, nearest_source=nearest, group_id=group_id, confidence=conf,
        selected=selected, distance_evals=evals + conf_evals, config=config,
    )
    return prototypes, table


def epoch_refresh(model: MultiViewModel, source_gallery: Gallery, target_gallery: Gallery,
                  relevance: dict, config: AdaptConfig) -> dict:
    """Refresh every view with the model frozen; swap in as one unit.

    Returns {view: (Prototypes, PseudoLabelTable)}.
    """
    return {
        view: refresh_view(model, source_gallery, target_gallery,
                           relevance[view], view, config)
        for view in VIEWS
    }


def label_accuracy(table: PseudoLabelTable, relevance: RelevanceView,
                   truth_verb: np.ndarray, truth_noun: np.ndarray,
                   selected_only: bool = False) -> float:
    """Fraction of targets whose inherited group label matches the held-out truth."""
    if truth_verb is None or truth_noun is None:
        raise GalleryError("label accuracy needs held-out target captions")
    truth = item_labels(truth_verb, truth_noun, table.view)
    inherited = [relevance.labels[gid] for gid in table.group_id]
    match = np.asarray([a == b for a, b in zip(inherited, truth)], dtype=np.float64)
    if selected_only:
        if not table.selected.any():
            return 0.0
        return float(match[table.selected].mean())
    return float(match.mean())


def label_diversity(table: PseudoLabelTable, num_prototypes: int) -> float:
    """Share of prototypes that received at least one selected target."""
    if num_prototypes == 0:
        return 0.0
    covered = np.unique(table.group_id[table.selected])
    return len(covered) / num_prototypes


def diagnostics_row(view: str, epoch: int, table: PseudoLabelTable, prototypes: Prototypes,
                    relevance: RelevanceView, truth_verb=None, truth_noun=None) -> dict:
    """One adaptation diagnostics record (the per-epoch CSV row)."""
    row = {
        "view": view,
        "epoch": epoch,
        "label_accuracy_all": "",
        "label_accuracy_selected": "",
        "label_diversity": label_diversity(table, prototypes.num_groups),
        "mean_confidence": float(table.confidence.mean()) if len(table) else 0.0,
        "selected_count": int(table.selected.sum()),
    }
    if truth_verb is not None and truth_noun is not None:
        row["label_accuracy_all"] = label_accuracy(table, relevance, truth_verb, truth_noun)
        row["label_accuracy_selected"] = label_accuracy(
            table, relevance, truth_verb, truth_noun, selected_only=True)
    return row

DIAGNOSTICS_FIELDS = ("view", "epoch", "label_accuracy_all", "label_accuracy_selected",
                      "label_diversity", "mean_confidence", "selected_count")
