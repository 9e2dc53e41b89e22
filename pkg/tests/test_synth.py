"""Synthetic benchmark generator: formats, determinism, structure, shift."""

from pathlib import Path

import numpy as np
import pytest

from xmodal.corpus import build_all_relevance, load_eval_queries, load_gallery, read_features
from xmodal.errors import ConfigError
from xmodal.synth import SynthSpec, generate


def test_header_counts_five_by_five_by_twenty(tmp_path):
    spec = SynthSpec(num_verbs=5, num_nouns=5, items_per_action=20)
    paths = generate(spec, tmp_path)
    assert read_features(paths["source_features"]).shape[0] == 500
    assert read_features(paths["target_features"]).shape[0] == 500


def test_same_seed_byte_identical_outputs(tmp_path):
    p1 = generate(SynthSpec(num_verbs=3, num_nouns=3, items_per_action=4), tmp_path / "a")
    p2 = generate(SynthSpec(num_verbs=3, num_nouns=3, items_per_action=4), tmp_path / "b")
    for key in p1:
        assert Path(p1[key]).read_bytes() == Path(p2[key]).read_bytes(), key


def test_different_seed_changes_outputs(tmp_path):
    p1 = generate(SynthSpec(num_verbs=3, num_nouns=3, items_per_action=4, seed=1), tmp_path / "a")
    p2 = generate(SynthSpec(num_verbs=3, num_nouns=3, items_per_action=4, seed=2), tmp_path / "b")
    assert Path(p1["source_features"]).read_bytes() != Path(p2["source_features"]).read_bytes()


def test_galleries_load_and_align(tmp_path):
    spec = SynthSpec(num_verbs=3, num_nouns=4, items_per_action=5, feature_dim=16, text_dim=10)
    paths = generate(spec, tmp_path)
    src = load_gallery(paths["source_features"], paths["source_meta"], paths["source_text"])
    tgt = load_gallery(paths["target_features"], paths["target_meta"])
    truth = load_eval_queries(paths["truth_meta"], paths["truth_text"])
    assert src.captioned and not tgt.captioned
    assert src.video.shape == (60, 16) and src.text.shape == (60, 10)
    assert len(truth) == len(tgt) == 60
    assert set(src.verb.tolist()) == {0, 1, 2}
    assert set(truth.noun.tolist()) == {0, 1, 2, 3}


def test_target_captions_exist_only_in_truth_file(tmp_path):
    paths = generate(SynthSpec(num_verbs=2, num_nouns=2, items_per_action=3), tmp_path)
    meta = Path(paths["target_meta"]).read_text()
    assert '"verb": null' in meta and '"text_feature_row": null' in meta
    truth = Path(paths["truth_meta"]).read_text()
    assert '"verb": null' not in truth


def test_relevance_structure_verb_is_union_of_actions(tmp_path):
    paths = generate(SynthSpec(num_verbs=3, num_nouns=3, items_per_action=4), tmp_path)
    src = load_gallery(paths["source_features"], paths["source_meta"], paths["source_text"])
    rel = build_all_relevance(src)
    for verb_gid, verb_label in enumerate(rel["verb"].labels):
        members = set(rel["verb"].groups[verb_gid].tolist())
        union = set()
        for action_gid, (v, _) in enumerate(rel["action"].labels):
            if v == verb_label:
                union |= set(rel["action"].groups[action_gid].tolist())
        assert members == union


def test_shift_applies_to_video_features_only(tmp_path):
    base = dict(num_verbs=3, num_nouns=3, items_per_action=6, seed=11)
    shifted = generate(SynthSpec(**base), tmp_path / "s")
    plain = generate(SynthSpec(**base, shift_rotation=0.0, shift_translation=0.0,
                               shift_scale=1.0), tmp_path / "p")
    # text banks are identical; video banks differ by the shift
    assert Path(shifted["source_text"]).read_bytes() == Path(plain["source_text"]).read_bytes()
    assert Path(shifted["truth_text"]).read_bytes() == Path(plain["truth_text"]).read_bytes()
    assert Path(shifted["source_features"]).read_bytes() == \
        Path(plain["source_features"]).read_bytes()
    assert Path(shifted["target_features"]).read_bytes() != \
        Path(plain["target_features"]).read_bytes()


def test_shift_is_invertible_affine(tmp_path):
    base = dict(num_verbs=2, num_nouns=2, items_per_action=8, feature_dim=12,
                text_dim=8, seed=3)
    shifted = generate(SynthSpec(**base), tmp_path / "s")
    plain = generate(SynthSpec(**base, shift_rotation=0.0, shift_translation=0.0,
                               shift_scale=1.0), tmp_path / "p")
    x = read_features(plain["target_features"])
    y = read_features(shifted["target_features"])
    # recover the affine map from the data; residual must vanish
    x1 = np.column_stack([x, np.ones(len(x))])
    coef, *_ = np.linalg.lstsq(x1, y, rcond=None)
    assert np.abs(x1 @ coef - y).max() < 1e-8
    assert abs(np.linalg.det(coef[:-1])) > 1e-12


def test_class_imbalance_skews_counts(tmp_path):
    paths = generate(SynthSpec(num_verbs=3, num_nouns=3, items_per_action=12,
                               class_imbalance=1.0), tmp_path)
    src = load_gallery(paths["source_features"], paths["source_meta"], paths["source_text"])
    rel = build_all_relevance(src)
    counts = sorted(len(g) for g in rel["action"].groups)
    assert counts[0] >= 2
    assert counts[0] < counts[-1]
    assert counts[-1] == 12


def test_invalid_specs_rejected():
    with pytest.raises(ConfigError):
        SynthSpec(num_verbs=0)
    with pytest.raises(ConfigError):
        SynthSpec(cluster_std=0.0)
    with pytest.raises(ConfigError):
        SynthSpec(shift_scale=0.5)
    with pytest.raises(ConfigError):
        SynthSpec(class_imbalance=-1.0)


def test_spec_json_round_trip(tmp_path):
    spec = SynthSpec(num_verbs=4, seed=99)
    paths = generate(spec, tmp_path)
    import json
    data = json.loads(Path(paths["spec"]).read_text())
    assert SynthSpec.from_dict(data) == spec
