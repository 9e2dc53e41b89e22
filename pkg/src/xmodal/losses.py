"""Ranking objectives over the multi-view embedding spaces.

Per view, the source objective combines four hinge-triplet families: video
anchors against caption positives/negatives (cross-modal), video anchors
against video positives/negatives (within-modal), and the two text-anchored
mirrors. Cross-domain objectives pair source and selected pseudo-labelled
target videos in both directions, video modality only, and are weighted into
the total:

    L = L_source + lambda_st * L_source_to_target + lambda_ts * L_target_to_source

applied per view (verb, noun, action) and summed with per-view weights.

Term sums follow the definitions exactly (sum of hinge values over evaluated
triplets); `reduction="mean"` divides each term by its triplet count so the
step size does not scale with the batch. Each term draws its triplets from
an rng derived from (step_seed, view, term), so a term's sample never depends
on which other terms are enabled — turning the lambdas on or off, or calling
a term in isolation, reproduces identical triplets.

Embeddings are unit-norm, so the cosine distance inside every hinge is
1 - dot(a, b); gradients flow through the embedding nets' normalization.
Gradient accumulation uses a fixed order (term by term, scatter-add by batch
position), which keeps results reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .corpus import Gallery, RelevanceView, VIEWS
from .model import ModalityForward, MultiViewModel
from .sampling import (
    CrossDomainPools,
    TripletIndices,
    enumerate_cross_domain_triplets,
    enumerate_source_triplets,
    sample_cross_domain_triplets,
    sample_source_triplets,
)

SOURCE_TERMS = ("video_text", "video_video", "text_video", "text_text")
CROSS_TERMS = ("src_to_tgt", "tgt_to_src")
_TERM_INDEX = {kind: i for i, kind in enumerate(SOURCE_TERMS + CROSS_TERMS)}
_VIEW_INDEX = {view: i for i, view in enumerate(VIEWS)}


def triplet_hinge(d_pos: float, d_neg: float, gamma: float) -> float:
    """max(gamma + d_pos - d_neg, 0)."""
    return max(gamma + d_pos - d_neg, 0.0)


@dataclass(frozen=True)
class LossWeights:
    gamma: float = 0.1
    lambda_src_to_tgt: float = 0.1
    lambda_tgt_to_src: float = 0.1
    view_weights: dict = field(default_factory=lambda: {"verb": 1.0, "noun": 1.0, "action": 1.0})

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("margin gamma must be positive")
        if self.lambda_src_to_tgt < 0 or self.lambda_tgt_to_src < 0:
            raise ValueError("cross-domain weights must be nonnegative")


@dataclass
class TermResult:
    view: str
    kind: str
    total: float     # sum of hinge values over evaluated triplets
    count: int       # evaluated triplets
    skipped: int     # sampled anchors dropped for empty pools


@dataclass
class LossResult:
    terms: list
    reduction: str
    source_value: float
    src_to_tgt_value: float
    tgt_to_src_value: float
    lambda_src_to_tgt: float
    lambda_tgt_to_src: float

    @property
    def objective(self) -> float:
        return (self.source_value
                + self.lambda_src_to_tgt * self.src_to_tgt_value
                + self.lambda_tgt_to_src * self.tgt_to_src_value)

    def skipped_by_term(self) -> dict:
        return {f"{t.view}.{t.kind}": t.skipped for t in self.terms}


def term_rng(step_seed: int, view: str, kind: str) -> np.random.Generator:
    seq = np.random.SeedSequence((int(step_seed), _VIEW_INDEX[view], _TERM_INDEX[kind]))
    return np.random.Generator(np.random.PCG64(seq))


def _row_dots(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", a, b)


def _hinge_term(ws_anchor: ModalityForward, ws_pos: ModalityForward,
                ws_neg: ModalityForward, view: str, trip: TripletIndices,
                gamma: float, grad_weight: float):
    """Evaluate hinge sum for one term and scatter embedding-space gradients."""
    if len(trip) == 0:
        return 0.0, 0
    ya = ws_anchor.out(view)[trip.anchor]
    yp = ws_pos.out(view)[trip.pos]
    yn = ws_neg.out(view)[trip.neg]
    d_pos = 1.0 - _row_dots(ya, yp)
    d_neg = 1.0 - _row_dots(ya, yn)
    losses, active = K.hinge_forward(np.ascontiguousarray(d_pos),
                                     np.ascontiguousarray(d_neg), gamma)
    total = float(losses.sum())
    if grad_weight != 0.0 and active.any():
        # d/da (1 - a.p) = -p; active hinge contributes (n - p) to the anchor
        ws_anchor.add_grad(view, trip.anchor[active], grad_weight * (yn[active] - yp[active]))
        ws_pos.add_grad(view, trip.pos[active], -grad_weight * ya[active])
        ws_neg.add_grad(view, trip.neg[active], grad_weight * ya[active])
    return total, len(trip)


def _source_term_triplets(kind: str, view: str, view_rel: RelevanceView,
                          action_group_ids: np.ndarray, neg_pools: list,
                          step_seed: int, batch: int, exhaustive: bool) -> TripletIndices:
    if exhaustive:
        return enumerate_source_triplets(view_rel, action_group_ids, neg_pools)
    rng = term_rng(step_seed, view, kind)
    return sample_source_triplets(rng, view_rel, action_group_ids, neg_pools, batch)


def _term_endpoints(kind: str, ws_src_video, ws_src_text, ws_tgt_video):
    return {
        "video_text": (ws_src_video, ws_src_text, ws_src_text),
        "video_video": (ws_src_video, ws_src_video, ws_src_video),
        "text_video": (ws_src_text, ws_src_video, ws_src_video),
        "text_text": (ws_src_text, ws_src_text, ws_src_text),
        "src_to_tgt": (ws_src_video, ws_tgt_video, ws_tgt_video),
        "tgt_to_src": (ws_tgt_video, ws_src_video, ws_src_video),
    }[kind]


def _reduced(total: float, count: int, reduction: str) -> float:
    if reduction == "sum" or count == 0:
        return total if count else 0.0
    return total / count


def _grad_weight(base: float, count: int, reduction: str) -> float:
    if count == 0:
        return 0.0
    return base if reduction == "sum" else base / count


def total_loss(model: MultiViewModel, src_gallery: Gallery, relevance: dict,
               weights: LossWeights, step_seed: int, batch: int,
               neg_pools: dict, tgt_gallery: Gallery | None = None,
               tables: dict | None = None, cross_pools: dict | None = None,
               reduction: str = "sum", exhaustive: bool = False,
               views=VIEWS):
    """Weighted objective over all views and loss kinds, with gradients.

    neg_pools: per view, the hard-negative-mined item pools by action group.
    tables / cross_pools: current-epoch pseudo-label state; cross-domain terms
    run only when both are present and the matching lambda is positive.
    Returns (LossResult, grads) where grads maps net name -> [(gW, gb), ...].
    """
    if reduction not in ("sum", "mean"):
        raise ValueError(f"reduction must be 'sum' or 'mean', got {reduction!r}")
    action_group_ids = relevance["action"].group_ids
    ws_src_video = ModalityForward(model, src_gallery.video, "video")
    ws_src_text = ModalityForward(model, src_gallery.text, "text")
    run_cross = (tables is not None and cross_pools is not None
                 and tgt_gallery is not None
                 and (weights.lambda_src_to_tgt > 0 or weights.lambda_tgt_to_src > 0))
    ws_tgt_video = ModalityForward(model, tgt_gallery.video, "video") if run_cross else None

    terms = []
    source_value = 0.0
    st_value = 0.0
    ts_value = 0.0
    for view in views:
        view_rel = relevance[view]
        vw = weights.view_weights.get(view, 1.0)
        for kind in SOURCE_TERMS:
            trip = _source_term_triplets(kind, view, view_rel, action_group_ids,
                                         neg_pools[view], step_seed, batch, exhaustive)
            ws_a, ws_p, ws_n = _term_endpoints(kind, ws_src_video, ws_src_text, ws_tgt_video)
            gw = _grad_weight(vw, len(trip), reduction)
            total, count = _hinge_term(ws_a, ws_p, ws_n, view, trip, weights.gamma, gw)
            terms.append(TermResult(view, kind, total, count, trip.skipped))
            source_value += vw * _reduced(total, count, reduction)
        if not run_cross:
            continue
        table = tables[view]
        pools = cross_pools[view]
        for kind, lam in (("src_to_tgt", weights.lambda_src_to_tgt),
                          ("tgt_to_src", weights.lambda_tgt_to_src)):
            if lam == 0.0:
                continue
            if exhaustive:
                trip = enumerate_cross_domain_triplets(pools, view_rel, table, kind)
            else:
                trip = sample_cross_domain_triplets(term_rng(step_seed, view, kind),
                                                    pools, view_rel, table, kind, batch)
            ws_a, ws_p, ws_n = _term_endpoints(kind, ws_src_video, ws_src_text, ws_tgt_video)
            gw = _grad_weight(vw * lam, len(trip), reduction)
            total, count = _hinge_term(ws_a, ws_p, ws_n, view, trip, weights.gamma, gw)
            terms.append(TermResult(view, kind, total, count, trip.skipped))
            reduced = vw * _reduced(total, count, reduction)
            if kind == "src_to_tgt":
                st_value += reduced
            else:
                ts_value += reduced

    grads = model.zero_grads()
    for ws in (ws_src_video, ws_src_text, ws_tgt_video):
        if ws is not None and ws.touched():
            ws.backward(grads)
    result = LossResult(terms=terms, reduction=reduction, source_value=source_value,
                        src_to_tgt_value=st_value, tgt_to_src_value=ts_value,
                        lambda_src_to_tgt=weights.lambda_src_to_tgt,
                        lambda_tgt_to_src=weights.lambda_tgt_to_src)
    return result, grads


def source_loss(model: MultiViewModel, src_gallery: Gallery, relevance: dict,
                view: str, weights: LossWeights, step_seed: int, batch: int,
                neg_pools: list, reduction: str = "sum", exhaustive: bool = False):
    """The four source-domain terms for one view (standalone form of the
    corresponding slice of total_loss; identical triplets for a given seed)."""
    pools = {v: neg_pools if v == view else None for v in VIEWS}
    zero_cross = LossWeights(gamma=weights.gamma, lambda_src_to_tgt=0.0,
                             lambda_tgt_to_src=0.0, view_weights=weights.view_weights)
    return total_loss(model, src_gallery, relevance, zero_cross, step_seed, batch,
                      pools, reduction=reduction, exhaustive=exhaustive, views=(view,))


def cross_domain_loss(model: MultiViewModel, src_gallery: Gallery, tgt_gallery: Gallery,
                      relevance: dict, view: str, table, pools: CrossDomainPools,
                      direction: str, weights: LossWeights, step_seed: int, batch: int,
                      reduction: str = "sum", exhaustive: bool = False):
    """One cross-domain direction for one view, with gradients.

    Both endpoints are video-modality embeddings; text nets get zero gradient.
    """
    if direction not in CROSS_TERMS:
        raise ValueError(f"direction must be one of {CROSS_TERMS}")
    view_rel = relevance[view]
    ws_src_video = ModalityForward(model, src_gallery.video, "video")
    ws_tgt_video = ModalityForward(model, tgt_gallery.video, "video")
    if exhaustive:
        trip = enumerate_cross_domain_triplets(pools, view_rel, table, direction)
    else:
        trip = sample_cross_domain_triplets(term_rng(step_seed, view, direction),
                                            pools, view_rel, table, direction, batch)
    ws_a, ws_p, ws_n = _term_endpoints(direction, ws_src_video, None, ws_tgt_video)
    vw = weights.view_weights.get(view, 1.0)
    gw = _grad_weight(vw, len(trip), reduction)
    total, count = _hinge_term(ws_a, ws_p, ws_n, view, trip, weights.gamma, gw)
    grads = model.zero_grads()
    for ws in (ws_src_video, ws_tgt_video):
        if ws.touched():
            ws.backward(grads)
    value = vw * _reduced(total, count, reduction)
    result = LossResult(terms=[TermResult(view, direction, total, count, trip.skipped)],
                        reduction=reduction, source_value=0.0,
                        src_to_tgt_value=value if direction == "src_to_tgt" else 0.0,
                        tgt_to_src_value=value if direction == "tgt_to_src" else 0.0,
                        lambda_src_to_tgt=1.0, lambda_tgt_to_src=1.0)
    return result, grads
