"""The two-stage training protocol: source pre-training, then adaptation.

Pre-training optimizes the source ranking objectives only (cross-domain
weights are forced to zero, with a warning if the config sets them). The
adaptation stage initializes from a pre-training checkpoint and alternates,
per epoch: a full pseudo-label refresh with the model frozen, then minibatch
steps on the combined objective.

Reproducibility: the model init and every (epoch, step) draw its own rng
from the run seed, and checkpoints carry the global epoch counter plus the
optimizer velocity, so resuming from a checkpoint continues the exact
trajectory, and an adaptation run with both lambdas at zero reproduces what
plain pre-training would have done over the same epochs.

Held-out target captions never enter this module's training path: gradients
only see Gallery objects, and the gallery loader rejects captioned targets.
The truth file, when configured, is read through the evaluation-only loader
and feeds the per-epoch diagnostics CSV alone.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .adapt import (
    DIAGNOSTICS_FIELDS,
    compute_prototypes,
    diagnostics_row,
    epoch_refresh,
)
from .align import DomainTransform, fit_domain_transform
from .config import RunConfig
from .corpus import Gallery, VIEWS, build_all_relevance, load_eval_queries, load_gallery
from .errors import ConfigError
from .losses import total_loss
from .metrics import EvalReport, evaluate_model, evaluate_retrieval
from .model import MultiViewModel, galleries_dims_check, load_model, save_model
from .nn import SgdState
from .sampling import build_cross_domain_pools, build_source_negative_pools

log = logging.getLogger(__name__)

_MODEL_INIT_TAG = 0
_STEP_TAG = 1


def _seed_int(*parts) -> int:
    return int(np.random.SeedSequence(tuple(int(p) for p in parts)).generate_state(1)[0])


def load_source_gallery(config: RunConfig) -> Gallery:
    if not (config.source_features and config.source_meta and config.source_text):
        raise ConfigError("config needs source_features, source_meta and source_text")
    return load_gallery(config.source_features, config.source_meta, config.source_text)


def load_target_gallery(config: RunConfig) -> Gallery | None:
    if not (config.target_features and config.target_meta):
        return None
    return load_gallery(config.target_features, config.target_meta)


def load_truth(config: RunConfig):
    if not (config.truth_meta and config.truth_text):
        return None
    return load_eval_queries(config.truth_meta, config.truth_text)


@dataclass
class StageResult:
    model: MultiViewModel
    transform: DomainTransform
    optimizer: SgdState
    epoch: int                      # global epochs completed
    history: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    best_epoch: int | None = None


def _init_model(config: RunConfig, d_video: int, d_text: int) -> MultiViewModel:
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence((config.seed, _MODEL_INIT_TAG))))
    return MultiViewModel.create(
        d_video=d_video, d_text=d_text, video_hidden=config.video_hidden,
        text_hidden=config.text_hidden, embed_dim=config.embed_dim,
        learned_action_head=config.learned_action_head, rng=rng,
    )


def _steps_per_epoch(config: RunConfig, n_source: int) -> int:
    if config.steps_per_epoch > 0:
        return config.steps_per_epoch
    return max(1, math.ceil(n_source / config.batch))


def _neg_pools(relevance, action_prototypes, fraction):
    return {view: build_source_negative_pools(relevance[view], relevance["action"],
                                              action_prototypes, fraction)
            for view in VIEWS}


def _run_epoch(config, model, optimizer, source, relevance, weights, epoch,
               neg_pools, target=None, tables=None, cross_pools=None) -> dict:
    steps = _steps_per_epoch(config, len(source))
    objective = source_value = st_value = ts_value = 0.0
    skipped = 0
    for step in range(steps):
        step_seed = _seed_int(config.seed, _STEP_TAG, epoch, step)
        result, grads = total_loss(
            model, source, relevance, weights, step_seed, config.batch, neg_pools,
            tgt_gallery=target, tables=tables, cross_pools=cross_pools,
            reduction="mean",
        )
        optimizer.step(model.named_parameters(), model.flatten_grads(grads))
        objective += result.objective
        source_value += result.source_value
        st_value += result.src_to_tgt_value
        ts_value += result.tgt_to_src_value
        skipped += sum(t.skipped for t in result.terms)
    return {
        "epoch": epoch,
        "objective": objective / steps,
        "source_value": source_value / steps,
        "src_to_tgt_value": st_value / steps,
        "tgt_to_src_value": ts_value / steps,
        "skipped_anchors": skipped,
        "steps": steps,
    }


class _ValTracker:
    """Best-epoch bookkeeping on an optional validation gallery (by nDCG)."""

    def __init__(self, config: RunConfig, transform: DomainTransform):
        self.active = bool(config.val_target_features and config.val_target_meta
                           and config.val_truth_meta and config.val_truth_text)
        self.best = (-1.0, None, None)  # ndcg, epoch, snapshot
        if not self.active:
            return
        gallery = load_gallery(config.val_target_features, config.val_target_meta)
        self.gallery = transform.apply_gallery(gallery)
        self.queries = load_eval_queries(config.val_truth_meta, config.val_truth_text)

    def observe(self, model: MultiViewModel, optimizer: SgdState, epoch: int):
        if not self.active:
            return
        report = evaluate_model(model, self.gallery, self.queries)
        if report.ndcg > self.best[0]:
            snapshot = ({name: [(w.copy(), b.copy()) for w, b in
                                zip(net.weights, net.biases)]
                         for name, net in model.nets.items()},
                        {k: v.copy() for k, v in optimizer.velocity.items()})
            self.best = (report.ndcg, epoch, snapshot)
        log.info("validation nDCG %.4f at epoch %d (best %.4f)",
                 report.ndcg, epoch, self.best[0])

    def restore_best(self, model: MultiViewModel, optimizer: SgdState):
        if not self.active or self.best[2] is None:
            return None
        nets_state, velocity = self.best[2]
        for name, layers in nets_state.items():
            net = model.nets[name]
            for i, (w, b) in enumerate(layers):
                net.weights[i][...] = w
                net.biases[i][...] = b
        optimizer.velocity = {k: v.copy() for k, v in velocity.items()}
        return self.best[1]


def _velocity_arrays(optimizer: SgdState) -> dict:
    return {f"sgd.{key}": val for key, val in optimizer.velocity.items()}


def _restore_velocity(extra: dict) -> dict:
    return {key[len("sgd."):]: np.ascontiguousarray(val)
            for key, val in extra.items() if key.startswith("sgd.")}


def save_stage_checkpoint(path, config: RunConfig, result: StageResult, stage: str,
                          extra_meta: dict | None = None) -> None:
    arrays = dict(result.transform.to_arrays())
    arrays.update(_velocity_arrays(result.optimizer))
    meta = {
        "stage": stage,
        "epoch": result.epoch,
        "baseline": result.transform.mode,
        "config_hash": config.config_hash(),
        "seed": config.seed,
    }
    if result.best_epoch is not None:
        meta["best_epoch"] = result.best_epoch
    if extra_meta:
        meta.update(extra_meta)
    save_model(path, result.model, arrays, meta)


def load_stage_checkpoint(path, config: RunConfig):
    """Rebuild (model, transform, optimizer, meta) from a stage checkpoint."""
    model, extra, meta = load_model(path)
    transform = DomainTransform.from_arrays(meta.get("baseline", "none"), extra)
    optimizer = SgdState(config.learning_rate, config.momentum,
                         velocity=_restore_velocity(extra))
    return model, transform, optimizer, meta


def pretrain(config: RunConfig, init_checkpoint=None) -> StageResult:
    """Train on source ranking losses only; lambdas in the config are ignored."""
    source_raw = load_source_gallery(config)
    target_raw = load_target_gallery(config)
    if config.lambda_src_to_tgt or config.lambda_tgt_to_src:
        log.warning("pretrain ignores cross-domain lambdas (%.3g, %.3g)",
                    config.lambda_src_to_tgt, config.lambda_tgt_to_src)

    if init_checkpoint is not None:
        model, transform, optimizer, meta = load_stage_checkpoint(init_checkpoint, config)
        start_epoch = int(meta["epoch"])
    else:
        if config.baseline != "none":
            if target_raw is None:
                raise ConfigError(
                    f"baseline {config.baseline!r} needs the target gallery to fit "
                    "per-domain statistics; set target_features/target_meta"
                )
            transform = fit_domain_transform(config.baseline, source_raw.video,
                                             target_raw.video)
        else:
            transform = DomainTransform()
        model = _init_model(config, source_raw.video.shape[1],
                            source_raw.text.shape[1])
        optimizer = SgdState(config.learning_rate, config.momentum)
        start_epoch = 0

    galleries_dims_check(model, source_raw)
    source = transform.apply_gallery(source_raw)
    relevance = build_all_relevance(source)
    weights = config.loss_weights()
    weights = type(weights)(gamma=weights.gamma, lambda_src_to_tgt=0.0,
                            lambda_tgt_to_src=0.0, view_weights=weights.view_weights)
    tracker = _ValTracker(config, transform)
    result = StageResult(model, transform, optimizer, epoch=start_epoch)

    for epoch in range(start_epoch, config.epochs_pretrain):
        action_emb = model.embed_batch(source.video, "action", "video")
        protos = compute_prototypes(action_emb, relevance["action"])
        pools = _neg_pools(relevance, protos, config.hard_neg_fraction)
        row = _run_epoch(config, model, optimizer, source, relevance, weights,
                         epoch, pools)
        result.history.append({"stage": "pretrain", **row})
        log.info("pretrain epoch %d objective %.5f", epoch, row["objective"])
        tracker.observe(model, optimizer, epoch)
        result.epoch = epoch + 1
    result.best_epoch = tracker.restore_best(model, optimizer)
    return result


def adapt(config: RunConfig, init_checkpoint) -> StageResult:
    """Adaptation: per epoch, refresh pseudo-labels, then combined-loss steps."""
    model, transform, optimizer, meta = load_stage_checkpoint(init_checkpoint, config)
    source_raw = load_source_gallery(config)
    target_raw = load_target_gallery(config)
    if target_raw is None:
        raise ConfigError("adaptation needs target_features/target_meta")
    galleries_dims_check(model, source_raw)
    galleries_dims_check(model, target_raw)
    source = transform.apply_gallery(source_raw)
    target = transform.apply_gallery(target_raw)
    truth = load_truth(config)  # diagnostics only; never reaches the loss path
    relevance = build_all_relevance(source)
    weights = config.loss_weights()
    adapt_cfg = config.adapt_config()
    tracker = _ValTracker(config, transform)

    start_epoch = int(meta["epoch"])
    result = StageResult(model, transform, optimizer, epoch=start_epoch)
    for adapt_epoch, epoch in enumerate(range(start_epoch, start_epoch + config.epochs_adapt),
                                        start=1):
        refreshed = epoch_refresh(model, source, target, relevance, adapt_cfg)
        action_protos = refreshed["action"][0]
        pools = _neg_pools(relevance, action_protos, config.hard_neg_fraction)
        tables = {view: refreshed[view][1] for view in VIEWS}
        cross_pools = {view: build_cross_domain_pools(tables[view], relevance[view])
                       for view in VIEWS}
        for view in VIEWS:
            row = diagnostics_row(view, adapt_epoch, tables[view], refreshed[view][0],
                                  relevance[view],
                                  truth_verb=truth.verb if truth else None,
                                  truth_noun=truth.noun if truth else None)
            result.diagnostics.append(row)
        row = _run_epoch(config, model, optimizer, source, relevance, weights, epoch,
                         pools, target=target, tables=tables, cross_pools=cross_pools)
        result.history.append({"stage": "adapt", **row})
        log.info("adapt epoch %d (global %d) objective %.5f",
                 adapt_epoch, epoch, row["objective"])
        tracker.observe(model, optimizer, epoch)
        result.epoch = epoch + 1
    result.best_epoch = tracker.restore_best(model, optimizer)
    return result


def evaluate(config: RunConfig, checkpoint_path) -> EvalReport:
    """Rank the target gallery for every held-out text query; never writes."""
    model, transform, _, meta = load_stage_checkpoint(checkpoint_path, config)
    target_raw = load_target_gallery(config)
    if target_raw is None:
        raise ConfigError("evaluation needs target_features/target_meta")
    truth = load_truth(config)
    if truth is None:
        raise ConfigError("evaluation needs truth_meta/truth_text")
    galleries_dims_check(model, target_raw)
    target = transform.apply_gallery(target_raw)
    return evaluate_model(model, target, truth,
                          config_hash=config.config_hash(), seed=config.seed,
                          diagnostics=meta.get("adapt_diagnostics", {}))


def source_retrieval_metrics(model: MultiViewModel, source: Gallery) -> dict:
    """Retrieval quality on the captioned source gallery itself (sanity check)."""
    return evaluate_retrieval(model, source.video, source.verb, source.noun,
                              source.text, source.verb, source.noun)


def write_history_csv(path, history: list) -> None:
    if not history:
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(history[0].keys()))
        writer.writeheader()
        writer.writerows(history)


def write_diagnostics_csv(path, rows: list) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(DIAGNOSTICS_FIELDS))
        writer.writeheader()
        writer.writerows(rows)


def final_adapt_diagnostics(rows: list) -> dict:
    """Last epoch's diagnostics per view, for embedding into reports."""
    out = {}
    for row in rows:
        out[row["view"]] = {k: row[k] for k in DIAGNOSTICS_FIELDS if k != "view"}
    return out
