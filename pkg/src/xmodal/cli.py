"""Command-line entry point.

Subcommands: gen, pretrain, adapt, eval, export. Configuration comes from a
JSON file plus repeatable ``--set key=value`` overrides; every run writes its
resolved config beside its outputs. Failures exit nonzero with a one-line
machine-readable JSON error on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig
from .corpus import load_gallery
from .errors import XmodalError
from .model import export_embeddings
from .synth import SynthSpec, generate
from .train import (
    adapt,
    evaluate,
    final_adapt_diagnostics,
    load_stage_checkpoint,
    pretrain,
    save_stage_checkpoint,
    write_diagnostics_csv,
    write_history_csv,
)


def _parse_overrides(pairs) -> dict:
    out = {}
    for pair in pairs or []:
        if "=" not in pair:
            raise XmodalError(f"--set expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        out[key] = value
    return out


def _load_config(args) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    return config.with_overrides(_parse_overrides(getattr(args, "set", None)))


def _prepare_out_dir(config: RunConfig, command: str) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{command}.config.json").write_text(config.to_json() + "\n", encoding="utf-8")
    return out


def cmd_gen(args) -> int:
    if args.spec:
        with open(args.spec, "r", encoding="utf-8") as fh:
            spec = SynthSpec.from_dict(json.load(fh))
    else:
        spec = SynthSpec()
    fields = {}
    for name in ("num_verbs", "num_nouns", "items_per_action", "feature_dim", "text_dim",
                 "cluster_std", "shift_rotation", "shift_translation", "class_imbalance",
                 "seed"):
        value = getattr(args, name)
        if value is not None:
            fields[name] = value
    if fields:
        spec = SynthSpec(**{**spec.__dict__, **fields})
    paths = generate(spec, args.out)
    print(json.dumps(paths, indent=2, sort_keys=True))
    return 0


def cmd_pretrain(args) -> int:
    config = _load_config(args)
    out = _prepare_out_dir(config, "pretrain")
    result = pretrain(config, init_checkpoint=args.init)
    ckpt = Path(args.checkpoint_out) if args.checkpoint_out else out / "pretrain.xmck"
    save_stage_checkpoint(ckpt, config, result, stage="pretrain")
    write_history_csv(out / "pretrain_loss.csv", result.history)
    print(json.dumps({"checkpoint": str(ckpt), "epochs": result.epoch,
                      "best_epoch": result.best_epoch}))
    return 0


def cmd_adapt(args) -> int:
    config = _load_config(args)
    out = _prepare_out_dir(config, "adapt")
    result = adapt(config, init_checkpoint=args.init)
    ckpt = Path(args.checkpoint_out) if args.checkpoint_out else out / "adapt.xmck"
    save_stage_checkpoint(ckpt, config, result, stage="adapt",
                          extra_meta={"adapt_diagnostics":
                                      final_adapt_diagnostics(result.diagnostics)})
    write_history_csv(out / "adapt_loss.csv", result.history)
    write_diagnostics_csv(out / "adapt_diagnostics.csv", result.diagnostics)
    print(json.dumps({"checkpoint": str(ckpt), "epochs": result.epoch,
                      "best_epoch": result.best_epoch}))
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args)
    out = _prepare_out_dir(config, "eval")
    report = evaluate(config, args.checkpoint)
    report_path = Path(args.out) if args.out else out / "report.json"
    report_path.write_text(report.to_json() + "\n", encoding="utf-8")
    print(report.to_json())
    return 0


def cmd_export(args) -> int:
    config = _load_config(args)
    out = _prepare_out_dir(config, "export")
    model, transform, _, _ = load_stage_checkpoint(args.checkpoint, config)
    galleries = {}
    if config.source_features and config.source_meta and config.source_text:
        gallery = load_gallery(config.source_features, config.source_meta,
                               config.source_text)
        galleries["source"] = transform.apply_gallery(gallery)
    if config.target_features and config.target_meta:
        gallery = load_gallery(config.target_features, config.target_meta)
        galleries["target"] = transform.apply_gallery(gallery)
    if not galleries:
        raise XmodalError("export needs source and/or target gallery paths in the config")
    csv_path = Path(args.out) if args.out else out / "embeddings.csv"
    rows = export_embeddings(csv_path, model, galleries)
    print(json.dumps({"csv": str(csv_path), "rows": rows}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xmodal",
        description="Cross-modal retrieval with unsupervised domain adaptation "
                    "on pre-extracted features",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic benchmark")
    gen.add_argument("--out", required=True, help="output directory")
    gen.add_argument("--spec", help="SynthSpec JSON file")
    gen.add_argument("--num-verbs", dest="num_verbs", type=int)
    gen.add_argument("--num-nouns", dest="num_nouns", type=int)
    gen.add_argument("--items-per-action", dest="items_per_action", type=int)
    gen.add_argument("--feature-dim", dest="feature_dim", type=int)
    gen.add_argument("--text-dim", dest="text_dim", type=int)
    gen.add_argument("--cluster-std", dest="cluster_std", type=float)
    gen.add_argument("--shift-rotation", dest="shift_rotation", type=float)
    gen.add_argument("--shift-translation", dest="shift_translation", type=float)
    gen.add_argument("--class-imbalance", dest="class_imbalance", type=float)
    gen.add_argument("--seed", type=int)
    gen.set_defaults(func=cmd_gen)

    for name, func, needs_init in (("pretrain", cmd_pretrain, False),
                                   ("adapt", cmd_adapt, True)):
        p = sub.add_parser(name, help=f"{name} stage")
        p.add_argument("--config", help="RunConfig JSON file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config field")
        p.add_argument("--init", required=needs_init,
                       help="checkpoint to initialize from")
        p.add_argument("--checkpoint-out", help="checkpoint output path")
        p.set_defaults(func=func)

    ev = sub.add_parser("eval", help="evaluate a checkpoint on the target gallery")
    ev.add_argument("--config", help="RunConfig JSON file")
    ev.add_argument("--set", action="append", metavar="KEY=VALUE")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--out", help="report JSON path")
    ev.set_defaults(func=cmd_eval)

    ex = sub.add_parser("export", help="dump per-view embeddings to CSV")
    ex.add_argument("--config", help="RunConfig JSON file")
    ex.add_argument("--set", action="append", metavar="KEY=VALUE")
    ex.add_argument("--checkpoint", required=True)
    ex.add_argument("--out", help="CSV output path")
    ex.set_defaults(func=cmd_export)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (XmodalError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
