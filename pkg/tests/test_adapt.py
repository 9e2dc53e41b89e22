"""Pseudo-labelling machinery: prototypes, labels, confidence, selection, refresh."""

import math

import numpy as np
import pytest

from xmodal.adapt import (
    AdaptConfig,
    PseudoLabelTable,
    compute_prototypes,
    confidence_scores,
    diagnostics_row,
    epoch_refresh,
    label_accuracy,
    label_diversity,
    per_prototype_quota,
    pseudo_label,
    select_targets,
)
from xmodal.corpus import Gallery, build_all_relevance, build_relevance
from xmodal.model import MultiViewModel
from xmodal.nn import cosine_distance


def gallery_from_labels(verbs, nouns, d=6, seed=0, domain="source"):
    rng = np.random.default_rng(seed)
    n = len(verbs)
    return Gallery(domain, rng.standard_normal((n, d)),
                   verb=np.asarray(verbs, dtype=np.int64),
                   noun=np.asarray(nouns, dtype=np.int64),
                   text=rng.standard_normal((n, 4)))


def unit_rows(x):
    x = np.asarray(x, dtype=np.float64)
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def test_prototype_singleton_group_equals_embedding():
    g = gallery_from_labels([0, 1], [0, 0])
    rel = build_relevance(g, "verb")
    emb = unit_rows(np.random.default_rng(0).standard_normal((2, 5)))
    protos = compute_prototypes(emb, rel)
    assert np.array_equal(protos.centroids[0], emb[0])
    assert protos.member_counts.tolist() == [1, 1]
    assert not protos.degenerate.any()


def test_prototype_antipodal_members_flagged_degenerate():
    g = gallery_from_labels([0, 0], [0, 1])
    rel = build_relevance(g, "verb")
    emb = np.array([[1.0, 0.0], [-1.0, 0.0]])
    protos = compute_prototypes(emb, rel)
    assert np.allclose(protos.centroids[0], 0.0)
    assert protos.degenerate[0]


def test_prototype_is_exact_mean_of_members():
    rng = np.random.default_rng(1)
    g = gallery_from_labels([0] * 5 + [1] * 3, [0] * 8)
    rel = build_relevance(g, "verb")
    emb = unit_rows(rng.standard_normal((8, 7)))
    protos = compute_prototypes(emb, rel)
    assert np.abs(protos.centroids[0] - emb[:5].mean(axis=0)).max() < 1e-12
    assert np.abs(protos.centroids[1] - emb[5:].mean(axis=0)).max() < 1e-12


def test_pseudo_label_single_group_inherits_it():
    g = gallery_from_labels([4, 4, 4], [1, 1, 1])
    rel = build_relevance(g, "verb")
    emb_s = unit_rows(np.random.default_rng(2).standard_normal((3, 4)))
    emb_t = unit_rows(np.random.default_rng(3).standard_normal((6, 4)))
    protos = compute_prototypes(emb_s, rel)
    _, group_id, _, _ = pseudo_label(emb_t, emb_s, protos, rel)
    assert (group_id == 0).all()


def test_pseudo_label_coincident_target_has_zero_distance():
    g = gallery_from_labels([0, 1, 2], [0, 0, 0])
    rel = build_relevance(g, "verb")
    emb_s = unit_rows(np.random.default_rng(4).standard_normal((3, 5)))
    emb_t = np.vstack([emb_s[1], unit_rows(np.random.default_rng(5).standard_normal((1, 5)))])
    protos = compute_prototypes(emb_s, rel)
    nearest, group_id, nearest_dist, _ = pseudo_label(emb_t, emb_s, protos, rel)
    assert nearest[0] == 1 and group_id[0] == rel.group_ids[1]
    assert nearest_dist[0] == pytest.approx(0.0, abs=1e-12)


def test_pseudo_label_matches_exhaustive_nn_oracle():
    rng = np.random.default_rng(6)
    n_s, n_t = 40, 60
    g = gallery_from_labels(rng.integers(0, 5, n_s), rng.integers(0, 4, n_s))
    rel = build_relevance(g, "verb")
    emb_s = unit_rows(rng.standard_normal((n_s, 6)))
    emb_t = unit_rows(rng.standard_normal((n_t, 6)))
    protos = compute_prototypes(emb_s, rel)
    nearest, group_id, _, _ = pseudo_label(emb_t, emb_s, protos, rel)
    for ti in range(n_t):
        dists = [cosine_distance(emb_t[ti], emb_s[si]) for si in range(n_s)]
        best = min(range(n_s), key=lambda si: (dists[si], si))
        assert nearest[ti] == best
        assert group_id[ti] == rel.group_ids[best]


def test_pseudo_label_planted_two_cluster_geometry():
    rng = np.random.default_rng(7)
    a_dir = np.array([1.0, 0.0, 0.0])
    b_dir = np.array([0.0, 1.0, 0.0])
    emb_s = unit_rows(np.vstack([
        a_dir + 0.05 * rng.standard_normal((10, 3)),
        b_dir + 0.05 * rng.standard_normal((10, 3)),
    ]))
    g = gallery_from_labels([0] * 10 + [1] * 10, [0] * 20)
    rel = build_relevance(g, "verb")
    emb_t = unit_rows(a_dir + 0.05 * rng.standard_normal((15, 3)))
    protos = compute_prototypes(emb_s, rel)
    for labelling in ("nearest_source", "nearest_prototype"):
        _, group_id, _, _ = pseudo_label(emb_t, emb_s, protos, rel, labelling)
        assert (group_id == 0).all(), labelling


def test_confidence_exp_of_distance():
    g = gallery_from_labels([0, 1], [0, 0])
    rel = build_relevance(g, "verb")
    emb_s = np.array([[1.0, 0.0], [0.0, 1.0]])
    protos = compute_prototypes(emb_s, rel)
    # one target exactly on prototype 0, one at distance ln 2 in cosine terms
    t0 = np.array([1.0, 0.0])
    # cos distance d = 1 - cos(theta); pick theta so d = ln 2
    d_target = math.log(2.0)
    theta = math.acos(1.0 - d_target)
    t1 = np.array([math.cos(theta), math.sin(theta)])
    emb_t = np.vstack([t0, t1])
    group_id = np.array([0, 0])
    conf, _ = confidence_scores(emb_t, protos, group_id, np.zeros(2), "prototype")
    assert conf[0] == pytest.approx(1.0, abs=1e-12)
    assert conf[1] == pytest.approx(0.5, abs=1e-9)


def test_confidence_monotone_in_distance():
    rng = np.random.default_rng(8)
    d = np.sort(rng.uniform(0, 2, 20))
    conf = np.exp(-d)
    assert (np.diff(conf) < 0).all()


def test_confidence_neighbour_variant_uses_nearest_distance():
    g = gallery_from_labels([0, 1], [0, 0])
    rel = build_relevance(g, "verb")
    protos = compute_prototypes(np.eye(2), rel)
    nearest_dist = np.array([0.0, 0.3])
    conf, evals = confidence_scores(np.eye(2), protos, np.array([0, 1]),
                                    nearest_dist, "neighbour")
    assert np.allclose(conf, np.exp(-nearest_dist))
    assert evals == 0


def test_confidence_degenerate_prototype_yields_zero():
    g = gallery_from_labels([0, 0], [0, 1])
    rel = build_relevance(g, "verb")
    emb_s = np.array([[1.0, 0.0], [-1.0, 0.0]])
    protos = compute_prototypes(emb_s, rel)
    conf, _ = confidence_scores(np.array([[0.0, 1.0]]), protos,
                                np.array([0]), np.array([0.5]), "prototype")
    assert conf[0] == 0.0


def test_select_top_x_percent_per_prototype():
    group_id = np.zeros(10, dtype=np.int64)
    conf = np.linspace(0.1, 1.0, 10)
    sel = select_targets(group_id, conf, 60.0, "per_prototype", 1)
    assert sel.sum() == 6
    assert sel[np.argsort(-conf)[:6]].all()


def test_select_x100_keeps_everything():
    group_id = np.array([0, 0, 1, 1, 1], dtype=np.int64)
    conf = np.random.default_rng(9).random(5)
    sel = select_targets(group_id, conf, 100.0, "per_prototype", 2)
    assert sel.all()


def test_select_singleton_assignment_keeps_one():
    group_id = np.array([0], dtype=np.int64)
    sel = select_targets(group_id, np.array([0.4]), 60.0, "per_prototype", 1)
    assert sel.tolist() == [True]
    assert per_prototype_quota(1, 60.0) == 1
    assert per_prototype_quota(10, 60.0) == 6


def test_selection_counts_follow_quota_rule():
    rng = np.random.default_rng(10)
    group_id = rng.integers(0, 4, 37)
    conf = rng.random(37)
    x = 45.0
    sel = select_targets(group_id, conf, x, "per_prototype", 4)
    for gid in range(4):
        mask = group_id == gid
        if mask.sum():
            assert sel[mask].sum() == max(1, math.floor(x * mask.sum() / 100.0))
    # selected is a subset of assigned by construction
    assert not sel[~np.isin(group_id, np.arange(4))].any()


def test_selection_invariant_under_distance_scaling():
    rng = np.random.default_rng(11)
    group_id = rng.integers(0, 3, 30)
    d = rng.uniform(0, 2, 30)
    for variant in ("per_prototype", "uniform"):
        sel1 = select_targets(group_id, np.exp(-d), 60.0, variant, 3)
        sel2 = select_targets(group_id, np.exp(-3.0 * d), 60.0, variant, 3)
        assert np.array_equal(sel1, sel2), variant


def test_uniform_selection_ignores_prototypes():
    group_id = np.array([0] * 9 + [1], dtype=np.int64)
    conf = np.array([0.9] * 9 + [0.1])
    sel = select_targets(group_id, conf, 60.0, "uniform", 2)
    assert sel.sum() == 6
    assert not sel[9]  # the lone low-confidence prototype-1 target missed out


def test_diversity_bounds_and_variant_ordering():
    rng = np.random.default_rng(12)
    cfg = AdaptConfig()
    for trial in range(25):
        t = int(rng.integers(4, 40))
        p = int(rng.integers(1, 6))
        group_id = rng.integers(0, p, t)
        conf = rng.random(t)
        x = float(rng.integers(10, 101))
        tables = {}
        for variant in ("per_prototype", "uniform"):
            sel = select_targets(group_id, conf, x, variant, p)
            tables[variant] = PseudoLabelTable(
                view="verb", nearest_source=np.zeros(t, dtype=np.int64),
                group_id=group_id, confidence=conf, selected=sel,
                distance_evals=0, config=cfg)
        div_pp = label_diversity(tables["per_prototype"], p)
        div_u = label_diversity(tables["uniform"], p)
        assert 0.0 <= div_u <= div_pp <= 1.0


def test_diversity_hand_values():
    cfg = AdaptConfig()
    table = PseudoLabelTable("verb", np.zeros(4, dtype=np.int64),
                             np.array([0, 1, 2, 3]), np.ones(4),
                             np.ones(4, dtype=bool), 0, cfg)
    assert label_diversity(table, 4) == 1.0
    table_one = PseudoLabelTable("verb", np.zeros(4, dtype=np.int64),
                                 np.zeros(4, dtype=np.int64), np.ones(4),
                                 np.ones(4, dtype=bool), 0, cfg)
    assert label_diversity(table_one, 4) == 0.25


def test_label_accuracy_all_correct_and_random_chance():
    g = gallery_from_labels([0, 1, 2, 3], [0, 0, 0, 0])
    rel = build_relevance(g, "verb")
    cfg = AdaptConfig()
    table = PseudoLabelTable("verb", np.zeros(4, dtype=np.int64),
                             np.array([0, 1, 2, 3]), np.ones(4),
                             np.ones(4, dtype=bool), 0, cfg)
    assert label_accuracy(table, rel, np.array([0, 1, 2, 3]), np.zeros(4, dtype=int)) == 1.0

    # random labels over k balanced classes land near 1/k (Monte Carlo over seeds)
    k = 4
    accs = []
    for seed in range(200):
        rng = np.random.default_rng(seed)
        group_id = rng.integers(0, k, 50)
        truth = rng.integers(0, k, 50)
        tbl = PseudoLabelTable("verb", np.zeros(50, dtype=np.int64), group_id,
                               np.ones(50), np.ones(50, dtype=bool), 0, cfg)
        accs.append(label_accuracy(tbl, rel, truth, np.zeros(50, dtype=int)))
    assert abs(np.mean(accs) - 1.0 / k) < 0.02


def make_refresh_setup(seed=0, n_s=20, n_t=15):
    rng = np.random.default_rng(seed)
    src = gallery_from_labels(rng.integers(0, 3, n_s), rng.integers(0, 3, n_s),
                              d=5, seed=seed)
    tgt = Gallery("target", rng.standard_normal((n_t, 5)))
    model = MultiViewModel.create(d_video=5, d_text=4, video_hidden=(16,),
                                  text_hidden=(16,), embed_dim=6,
                                  rng=np.random.default_rng(seed + 1))
    rel = build_all_relevance(src)
    return model, src, tgt, rel


def test_epoch_refresh_is_deterministic():
    model, src, tgt, rel = make_refresh_setup()
    cfg = AdaptConfig()
    r1 = epoch_refresh(model, src, tgt, rel, cfg)
    r2 = epoch_refresh(model, src, tgt, rel, cfg)
    for view in ("verb", "noun", "action"):
        t1, t2 = r1[view][1], r2[view][1]
        assert np.array_equal(t1.group_id, t2.group_id)
        assert np.array_equal(t1.confidence, t2.confidence)
        assert np.array_equal(t1.selected, t2.selected)
        assert np.array_equal(r1[view][0].centroids, r2[view][0].centroids)


def test_epoch_refresh_distance_budget():
    model, src, tgt, rel = make_refresh_setup()
    result = epoch_refresh(model, src, tgt, rel, AdaptConfig())
    for view in ("verb", "noun", "action"):
        table = result[view][1]
        # nearest-source labelling: T*S; prototype confidence: one per target
        assert table.distance_evals == len(tgt) * len(src) + len(tgt)


def test_label_changes_when_target_moves_toward_another_cluster():
    # labels are not sticky: the refresh recomputes assignments from the
    # current embeddings, so a target that drifted to another cluster flips
    model, src, tgt, rel = make_refresh_setup(seed=8, n_s=30, n_t=25)
    cfg = AdaptConfig()
    before = epoch_refresh(model, src, tgt, rel, cfg)["verb"][1]
    old_group = before.group_id[0]
    donor = next(i for i in range(len(src))
                 if rel["verb"].group_ids[i] != old_group)
    moved_video = tgt.video.copy()
    moved_video[0] = src.video[donor]
    moved = Gallery("target", moved_video)
    after = epoch_refresh(model, src, moved, rel, cfg)["verb"][1]
    assert after.group_id[0] == rel["verb"].group_ids[donor]
    assert after.group_id[0] != old_group


def test_epoch_refresh_covers_all_views_and_selection_subset():
    model, src, tgt, rel = make_refresh_setup(seed=3)
    result = epoch_refresh(model, src, tgt, rel, AdaptConfig(sample_percent=40.0))
    assert set(result) == {"verb", "noun", "action"}
    for view, (protos, table) in result.items():
        assert len(table) == len(tgt)
        assert table.selected.sum() >= 1
        # every selected target is assigned to a real group
        assert (table.group_id[table.selected] < protos.num_groups).all()


def test_diagnostics_row_fields():
    model, src, tgt, rel = make_refresh_setup(seed=5)
    protos, table = epoch_refresh(model, src, tgt, rel, AdaptConfig())["verb"]
    rng = np.random.default_rng(0)
    row = diagnostics_row("verb", 3, table, protos, rel["verb"],
                          truth_verb=rng.integers(0, 3, len(tgt)),
                          truth_noun=rng.integers(0, 3, len(tgt)))
    assert row["view"] == "verb" and row["epoch"] == 3
    assert 0.0 <= row["label_diversity"] <= 1.0
    assert 0.0 <= row["mean_confidence"] <= 1.0
    assert isinstance(row["label_accuracy_all"], float)
    assert row["selected_count"] == int(table.selected.sum())


def test_adapt_config_validation():
    with pytest.raises(ValueError):
        AdaptConfig(sample_percent=0.0)
    with pytest.raises(ValueError):
        AdaptConfig(labelling="nope")
    cfg = AdaptConfig()
    assert cfg.sample_percent == 60.0
    assert cfg.labelling == "nearest_source"
    assert cfg.confidence == "prototype"
    assert cfg.sampling == "per_prototype"
