"""Triplet construction for the ranking losses.

Source-domain terms draw anchors uniformly, one positive from the anchor's
relevance group and one negative mined from the groups whose action
prototypes are nearest to the anchor's own action prototype (the anchor's
prototype itself is excluded, and candidates sharing the anchor's view label
are filtered out, so a positive and a negative can never share a group).
Cross-domain terms pair source anchors with selected pseudo-labelled targets
and vice versa; no prototype restriction there.

Sampled anchors whose positive or negative pool is empty are skipped and
counted, so degenerate batches stay visible in logs. All draws come from a
caller-provided Generator: same seed, same triplets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .adapt import PseudoLabelTable, Prototypes
from .corpus import RelevanceView
from .nn import pairwise_cosine


@dataclass
class TripletIndices:
    anchor: np.ndarray
    pos: np.ndarray
    neg: np.ndarray
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.anchor)

    @classmethod
    def empty(cls, skipped: int = 0) -> "TripletIndices":
        z = np.empty(0, dtype=np.int64)
        return cls(z, z.copy(), z.copy(), skipped)


def hard_negative_group_count(num_prototypes: int, fraction: float) -> int:
    return max(1, math.floor(fraction * num_prototypes))


def nearest_prototype_groups(prototypes: Prototypes, fraction: float) -> list:
    """Per action group: the nearest-k other groups by prototype cosine distance.

    k = max(1, floor(fraction * P)). Degenerate prototypes sort last; ties
    break on the lower group index.
    """
    p = prototypes.num_groups
    k = hard_negative_group_count(p, fraction)
    big = 3.0  # beyond the cosine range, used for degenerate centroids
    dist = np.full((p, p), big)
    valid = np.flatnonzero(~prototypes.degenerate)
    if valid.size:
        sub = pairwise_cosine(prototypes.centroids[valid], prototypes.centroids[valid])
        dist[np.ix_(valid, valid)] = sub
    out = []
    for g in range(p):
        order = np.lexsort((np.arange(p), dist[g]))
        others = order[order != g]
        out.append(others[:k].astype(np.int64))
    return out


def build_source_negative_pools(view_rel: RelevanceView, action_rel: RelevanceView,
                                action_prototypes: Prototypes, fraction: float) -> list:
    """Per action group: the allowed negative items for anchors of that group.

    Union of the nearest action groups' members, minus any group sharing the
    anchor group's label in this view.
    """
    nearest = nearest_prototype_groups(action_prototypes, fraction)

    def view_label(action_gid: int):
        verb, noun = action_rel.labels[action_gid]
        if view_rel.view == "verb":
            return verb
        if view_rel.view == "noun":
            return noun
        return (verb, noun)

    pools = []
    for g in range(action_rel.num_groups):
        own = view_label(g)
        member_groups = [h for h in nearest[g] if view_label(h) != own]
        if member_groups:
            pools.append(np.concatenate([action_rel.groups[h] for h in member_groups]))
        else:
            pools.append(np.empty(0, dtype=np.int64))
    return pools


def sample_source_triplets(rng: np.random.Generator, view_rel: RelevanceView,
                           action_group_ids: np.ndarray, neg_pools: list,
                           batch: int) -> TripletIndices:
    """B anchors uniform over captioned items, one (positive, negative) each."""
    n = len(view_rel.group_ids)
    if n == 0:
        return TripletIndices.empty(skipped=batch)
    anchors = rng.integers(0, n, size=batch)
    a_out, p_out, n_out = [], [], []
    skipped = 0
    for a in anchors:
        pos_pool = view_rel.relevant(int(a))
        neg_pool = neg_pools[action_group_ids[a]]
        if pos_pool.size == 0 or neg_pool.size == 0:
            skipped += 1
            continue
        a_out.append(int(a))
        p_out.append(int(pos_pool[rng.integers(pos_pool.size)]))
        n_out.append(int(neg_pool[rng.integers(neg_pool.size)]))
    return TripletIndices(np.asarray(a_out, dtype=np.int64),
                          np.asarray(p_out, dtype=np.int64),
                          np.asarray(n_out, dtype=np.int64), skipped)


def enumerate_source_triplets(view_rel: RelevanceView, action_group_ids: np.ndarray,
                              neg_pools: list) -> TripletIndices:
    """Every valid (anchor, positive, negative) triplet; brute-force scale only."""
    a_out, p_out, n_out = [], [], []
    for a in range(len(view_rel.group_ids)):
        for p in view_rel.relevant(a):
            for ng in neg_pools[action_group_ids[a]]:
                a_out.append(a)
                p_out.append(int(p))
                n_out.append(int(ng))
    return TripletIndices(np.asarray(a_out, dtype=np.int64),
                          np.asarray(p_out, dtype=np.int64),
                          np.asarray(n_out, dtype=np.int64), 0)


@dataclass
class CrossDomainPools:
    """Per-view pools pairing selected pseudo-labelled targets with sources."""

    selected_targets: np.ndarray       # indices into the target gallery
    targets_by_group: list             # selected targets per source group
    target_negs_by_group: list         # selected targets outside each group
    source_groups: tuple               # source members per group
    source_negs_by_group: list         # source items outside each group


def build_cross_domain_pools(table: PseudoLabelTable, view_rel: RelevanceView) -> CrossDomainPools:
    selected = np.flatnonzero(table.selected)
    p = view_rel.num_groups
    by_group = [selected[table.group_id[selected] == g] for g in range(p)]
    neg_by_group = [selected[table.group_id[selected] != g] for g in range(p)]
    n_source = len(view_rel.group_ids)
    all_source = np.arange(n_source, dtype=np.int64)
    source_negs = [all_source[view_rel.group_ids != g] for g in range(p)]
    return CrossDomainPools(
        selected_targets=selected,
        targets_by_group=by_group,
        target_negs_by_group=neg_by_group,
        source_groups=view_rel.groups,
        source_negs_by_group=source_negs,
    )


def sample_cross_domain_triplets(rng: np.random.Generator, pools: CrossDomainPools,
                                 view_rel: RelevanceView, table: PseudoLabelTable,
                                 direction: str, batch: int) -> TripletIndices:
    """Triplets for one cross-domain direction, video modality throughout.

    src_to_tgt: source anchor, positives/negatives among selected targets.
    tgt_to_src: selected-target anchor, positives/negatives among sources.
    """
    a_out, p_out, n_out = [], [], []
    skipped = 0
    if direction == "src_to_tgt":
        n_source = len(view_rel.group_ids)
        anchors = rng.integers(0, n_source, size=batch)
        for a in anchors:
            g = view_rel.group_ids[a]
            pos_pool = pools.targets_by_group[g]
            neg_pool = pools.target_negs_by_group[g]
            if pos_pool.size == 0 or neg_pool.size == 0:
                skipped += 1
                continue
            a_out.append(int(a))
            p_out.append(int(pos_pool[rng.integers(pos_pool.size)]))
            n_out.append(int(neg_pool[rng.integers(neg_pool.size)]))
    elif direction == "tgt_to_src":
        cand = pools.selected_targets
        if cand.size == 0:
            return TripletIndices.empty(skipped=batch)
        anchors = cand[rng.integers(0, cand.size, size=batch)]
        for t in anchors:
            g = table.group_id[t]
            pos_pool = pools.source_groups[g]     # inherited relevant set, nearest included
            neg_pool = pools.source_negs_by_group[g]
            if pos_pool.size == 0 or neg_pool.size == 0:
                skipped += 1
                continue
            a_out.append(int(t))
            p_out.append(int(pos_pool[rng.integers(pos_pool.size)]))
            n_out.append(int(neg_pool[rng.integers(neg_pool.size)]))
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return TripletIndices(np.asarray(a_out, dtype=np.int64),
                          np.asarray(p_out, dtype=np.int64),
                          np.asarray(n_out, dtype=np.int64), skipped)


def enumerate_cross_domain_triplets(pools: CrossDomainPools, view_rel: RelevanceView,
                                    table: PseudoLabelTable, direction: str) -> TripletIndices:
    """Exhaustive cross-domain triplets for oracle comparisons."""
    a_out, p_out, n_out = [], [], []
    if direction == "src_to_tgt":
        for a in range(len(view_rel.group_ids)):
            g = view_rel.group_ids[a]
            for p in pools.targets_by_group[g]:
                for ng in pools.target_negs_by_group[g]:
                    a_out.append(a)
                    p_out.append(int(p))
                    n_out.append(int(ng))
    elif direction == "tgt_to_src":
        for t in pools.selected_targets:
            g = table.group_id[t]
            for p in pools.source_groups[g]:
                for ng in pools.source_negs_by_group[g]:
                    a_out.append(int(t))
                    p_out.append(int(p))
                    n_out.append(int(ng))
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return TripletIndices(np.asarray(a_out, dtype=np.int64),
                          np.asarray(p_out, dtype=np.int64),
                          np.asarray(n_out, dtype=np.int64), 0)
