"""CLI surface: subcommands, resolved configs, error JSON, pipeline determinism."""

import json
from pathlib import Path

import pytest

from xmodal.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def bench_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_bench")
    code = main(["gen", "--out", str(out), "--num-verbs", "3", "--num-nouns", "3",
                 "--items-per-action", "6", "--feature-dim", "14", "--text-dim", "8",
                 "--cluster-std", "0.2", "--shift-rotation", "0.5",
                 "--shift-translation", "3.0", "--seed", "5"])
    assert code == 0
    return out


def write_config(path, bench, out_dir, **overrides):
    config = {
        "source_features": str(bench / "source.xmfe"),
        "source_meta": str(bench / "source.jsonl"),
        "source_text": str(bench / "source_text.xmfe"),
        "target_features": str(bench / "target.xmfe"),
        "target_meta": str(bench / "target.jsonl"),
        "truth_meta": str(bench / "target_truth.jsonl"),
        "truth_text": str(bench / "target_truth_text.xmfe"),
        "out_dir": str(out_dir),
        "video_hidden": [24], "text_hidden": [24], "embed_dim": 12,
        "epochs_pretrain": 3, "epochs_adapt": 2, "batch": 64, "seed": 0,
    }
    config.update(overrides)
    path.write_text(json.dumps(config))
    return path


def test_gen_emits_expected_files(bench_dir):
    for name in ("source.xmfe", "source.jsonl", "source_text.xmfe", "target.xmfe",
                 "target.jsonl", "target_truth.jsonl", "target_truth_text.xmfe",
                 "spec.json"):
        assert (bench_dir / name).exists(), name


def test_full_pipeline_and_reports(bench_dir, tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", bench_dir, tmp_path / "run")
    code, out, _ = run_cli(capsys, "pretrain", "--config", str(cfg))
    assert code == 0
    ckpt = json.loads(out.strip().splitlines()[-1])["checkpoint"]
    assert Path(ckpt).exists()
    assert (tmp_path / "run" / "pretrain.config.json").exists()
    assert (tmp_path / "run" / "pretrain_loss.csv").exists()

    code, out, _ = run_cli(capsys, "adapt", "--config", str(cfg), "--init", ckpt)
    assert code == 0
    adapted = json.loads(out.strip().splitlines()[-1])["checkpoint"]
    diag = (tmp_path / "run" / "adapt_diagnostics.csv").read_text().splitlines()
    assert diag[0].startswith("view,epoch,")
    assert len(diag) == 1 + 3 * 2  # header + views x adapt epochs

    code, out, _ = run_cli(capsys, "eval", "--config", str(cfg), "--checkpoint", adapted)
    assert code == 0
    report = json.loads(out)
    assert 0.0 <= report["ndcg"] <= 1.0 and 0.0 <= report["map"] <= 1.0
    assert report["config_hash"]
    assert report["diagnostics"]  # final-epoch adaptation diagnostics embedded

    code, out, _ = run_cli(capsys, "export", "--config", str(cfg), "--checkpoint", adapted)
    assert code == 0
    info = json.loads(out.strip().splitlines()[-1])
    n_source = n_target = 3 * 3 * 6
    assert info["rows"] == (n_source + n_target) * 3
    lines = Path(info["csv"]).read_text().splitlines()
    assert len(lines) == 1 + info["rows"]
    assert lines[1].startswith("0,source,verb,")


def test_pipeline_determinism_identical_reports(bench_dir, tmp_path, capsys):
    reports = []
    for tag in ("one", "two"):
        cfg = write_config(tmp_path / f"{tag}.json", bench_dir, tmp_path / tag)
        code, out, _ = run_cli(capsys, "pretrain", "--config", str(cfg))
        assert code == 0
        ckpt = json.loads(out.strip().splitlines()[-1])["checkpoint"]
        code, out, _ = run_cli(capsys, "adapt", "--config", str(cfg), "--init", ckpt)
        assert code == 0
        adapted = json.loads(out.strip().splitlines()[-1])["checkpoint"]
        code, out, _ = run_cli(capsys, "eval", "--config", str(cfg), "--checkpoint", adapted)
        assert code == 0
        reports.append(json.loads(out))
    for r in reports:
        r.pop("created_at")
        r.pop("config_hash")  # configs differ only in out_dir
    assert reports[0] == reports[1]


def test_eval_never_writes_checkpoints(bench_dir, tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", bench_dir, tmp_path / "run")
    code, out, _ = run_cli(capsys, "pretrain", "--config", str(cfg))
    ckpt = json.loads(out.strip().splitlines()[-1])["checkpoint"]
    before = {p.name for p in (tmp_path / "run").iterdir()}
    code, _, _ = run_cli(capsys, "eval", "--config", str(cfg), "--checkpoint", ckpt)
    assert code == 0
    after = {p.name for p in (tmp_path / "run").iterdir()}
    assert not [n for n in after - before if n.endswith(".xmck")]


def test_truth_file_as_training_input_is_rejected(bench_dir, tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", bench_dir, tmp_path / "run")
    code, out, _ = run_cli(capsys, "pretrain", "--config", str(cfg))
    ckpt = json.loads(out.strip().splitlines()[-1])["checkpoint"]
    code, _, err = run_cli(capsys, "adapt", "--config", str(cfg), "--init", ckpt,
                           "--set", f"target_meta={bench_dir / 'target_truth.jsonl'}")
    assert code == 1
    error = json.loads(err.strip().splitlines()[-1])
    assert error["error"] == "GalleryError"
    assert "load_eval_queries" in error["message"]


def test_missing_file_yields_error_json(tmp_path, capsys):
    code, _, err = run_cli(capsys, "eval", "--checkpoint", str(tmp_path / "nope.xmck"),
                           "--set", "truth_meta=x", "--set", "truth_text=y",
                           "--set", "target_features=z", "--set", "target_meta=w")
    assert code == 1
    error = json.loads(err.strip().splitlines()[-1])
    assert "error" in error and "message" in error


def test_unknown_config_key_rejected(bench_dir, tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", bench_dir, tmp_path / "run")
    code, _, err = run_cli(capsys, "pretrain", "--config", str(cfg),
                           "--set", "not_a_key=1")
    assert code == 1
    assert json.loads(err.strip().splitlines()[-1])["error"] == "ConfigError"


def test_gen_from_spec_file_with_flag_override(tmp_path, capsys):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps({
        "num_verbs": 2, "num_nouns": 2, "items_per_action": 3, "feature_dim": 8,
        "text_dim": 6, "cluster_std": 0.2, "shift_rotation": 0.0,
        "shift_translation": 0.0, "shift_scale": 1.0, "class_imbalance": 0.0,
        "seed": 1,
    }))
    code, out, _ = run_cli(capsys, "gen", "--out", str(tmp_path / "g"),
                           "--spec", str(spec_path), "--seed", "9")
    assert code == 0
    written = json.loads((tmp_path / "g" / "spec.json").read_text())
    assert written["seed"] == 9 and written["num_verbs"] == 2
