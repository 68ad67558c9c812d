"""Command line interface.

Subcommands: synth, train, evaluate, predict, grad-check, bias-report.
Report-style commands print a deterministic table to stdout and, when --out
is given, write the same numbers as CSV plus a rendered PNG next to it.

Exit codes: 0 on success, 1 on a runtime failure (one machine-parsable JSON
line on stderr), 2 on usage errors (argparse).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

from . import figures, storage, verify
from .config import (
    PRESETS,
    TrainConfig,
    apply_overrides,
    format_config,
    load_config,
    preset_config,
)
from .data import spec_from_config, synth_dataset
from .errors import SsrnError
from .model import GroundingNetwork
from .sampling import bias_report_varying
from .training import build_dataset, evaluate, train


def _build_config(args) -> TrainConfig:
    cfg = preset_config(args.preset) if getattr(args, "preset", None) else TrainConfig()
    if getattr(args, "config", None):
        cfg = load_config(args.config, base=cfg)
    if getattr(args, "set", None):
        cfg = apply_overrides(cfg, args.set)
    return cfg.validate()


def _ensure_out(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _print_table(rows) -> None:
    for name, value in rows:
        print(f"{name:<24} {value:>12.4f}")


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_synth(args) -> int:
    cfg = _build_config(args)
    out = _ensure_out(args.out)
    raws = synth_dataset(spec_from_config(cfg))
    records = []
    for raw in raws:
        storage.write_features(storage.feature_path(out, raw.sample_id), raw.features)
        records.append(
            storage.AnnotationRecord(
                record_id=raw.sample_id,
                num_frames=raw.t,
                start=raw.start,
                end=raw.end,
                tokens=raw.tokens,
            )
        )
    storage.save_annotations(os.path.join(out, "annotations.jsonl"), records)
    with open(os.path.join(out, "generator.cfg"), "w", encoding="utf-8") as fh:
        fh.write(format_config(cfg))
    print(f"wrote {len(raws)} samples to {out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _build_config(args)
    out = _ensure_out(args.out)
    log = print if args.verbose else None
    result = train(cfg, log=log)
    ckpt_path = os.path.join(out, "checkpoint.ckpt")
    storage.save_checkpoint(ckpt_path, result.params, cfg, adam=None)
    _write_csv(
        os.path.join(out, "loss_log.csv"),
        ["step", "span", "offset", "total"],
        result.loss_rows,
    )
    figures.save_loss_curve(result.loss_rows, os.path.join(out, "loss_curve.png"))
    report = result.final_report
    print(f"trained {result.steps_run} steps on {report.count} samples"
          f" (early stop: {'yes' if result.stopped_early else 'no'})")
    _print_table(report.table_rows())
    print(f"checkpoint: {ckpt_path}")
    return 0


def _load_net(args) -> tuple[GroundingNetwork, TrainConfig]:
    ckpt = storage.load_checkpoint(args.checkpoint)
    cfg = ckpt.config
    if args.features or args.annotations:
        if not (args.features and args.annotations):
            raise SsrnError("--features and --annotations must be given together")
        cfg = dataclasses.replace(
            cfg, features_dir=args.features, annotations=args.annotations
        )
    net = GroundingNetwork(cfg, params=ckpt.params)
    return net, cfg


def _cmd_evaluate(args) -> int:
    net, cfg = _load_net(args)
    samples = build_dataset(cfg)
    report, _ = evaluate(net, samples, top_n=args.top_n, decode=args.decode)
    print(f"evaluated {report.count} samples ({report.decode} decode)")
    _print_table(report.table_rows())
    if args.out:
        out = _ensure_out(args.out)
        _write_csv(
            os.path.join(out, "metrics.csv"),
            ["metric", "value"],
            [(name, f"{value:.6f}") for name, value in report.table_rows()],
        )
        figures.save_metrics_chart(report, os.path.join(out, "metrics.png"))
    return 0


def _cmd_predict(args) -> int:
    net, cfg = _load_net(args)
    samples = build_dataset(cfg)
    lines = []
    for sample in samples:
        for rank, pred in enumerate(net.predict(sample, top_n=args.top_n), start=1):
            lines.append(
                json.dumps(
                    {
                        "id": sample.sample_id,
                        "rank": rank,
                        "score": pred.score,
                        "hard": [pred.hard_start, pred.hard_end],
                        "refined": [pred.refined_start, pred.refined_end],
                        "time": [pred.time_start, pred.time_end],
                        "degenerate": pred.degenerate,
                    }
                )
            )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"wrote {len(lines)} predictions to {args.out}")
    else:
        for line in lines:
            print(line)
    return 0


def _cmd_grad_check(args) -> int:
    report = verify.pipeline_grad_check(
        seed=args.seed, eps=args.eps, tolerance=args.tolerance, k=args.k
    )
    for line in report.summary_lines():
        print(line)
    return 0 if report.passed else 1


def _cmd_bias_report(args) -> int:
    records = storage.load_annotations(args.annotations)
    entries = [(rec.num_frames, rec.start, rec.end) for rec in records]
    report = bias_report_varying(entries, args.m)
    print(f"annotations              {report.count:>12d}")
    _print_table(
        [
            ("mean IoU", report.mean_iou),
            ("min IoU", report.min_iou),
            ("max drift (frames)", report.max_drift),
            ("mean drift (frames)", report.mean_drift),
            ("max drift / stride", report.max_drift_over_stride),
        ]
    )
    hist = " ".join(str(int(c)) for c in report.histogram)
    print(f"IoU histogram [0..1]     {hist}")
    if args.out:
        out = _ensure_out(args.out)
        _write_csv(
            os.path.join(out, "bias_report.csv"),
            ["id", "num_frames", "iou", "start_drift", "end_drift"],
            [
                (
                    rec.record_id,
                    rec.num_frames,
                    f"{report.ious[i]:.6f}",
                    f"{report.start_drift[i]:.6f}",
                    f"{report.end_drift[i]:.6f}",
                )
                for i, rec in enumerate(records)
            ],
        )
        figures.save_bias_histogram(report, os.path.join(out, "bias_hist.png"))
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_config_options(sub, with_preset: bool = True) -> None:
    if with_preset:
        sub.add_argument(
            "--preset", choices=sorted(PRESETS), help="start from a named preset"
        )
    sub.add_argument("--config", help="key = value config file")
    sub.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        help="override any config field (repeatable)",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ssrn",
        description="Train and audit a siamese-sampling temporal grounding model.",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("synth", help="generate a synthetic dataset on disk")
    _add_config_options(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=_cmd_synth)

    p = subs.add_parser("train", help="train a model")
    _add_config_options(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--verbose", action="store_true", help="log every step")
    p.set_defaults(handler=_cmd_train)

    p = subs.add_parser("evaluate", help="score a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", help="directory of .feat files")
    p.add_argument("--annotations", help="annotation JSON lines")
    p.add_argument("--decode", choices=["refined", "hard"], default=None)
    p.add_argument("--top-n", type=int, default=5)
    p.add_argument("--out", help="write metrics.csv and metrics.png here")
    p.set_defaults(handler=_cmd_evaluate)

    p = subs.add_parser("predict", help="decode ranked segments")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", help="directory of .feat files")
    p.add_argument("--annotations", help="annotation JSON lines")
    p.add_argument("--top-n", type=int, default=5)
    p.add_argument("--out", help="write JSON lines here instead of stdout")
    p.set_defaults(handler=_cmd_predict)

    p = subs.add_parser(
        "grad-check", help="finite-difference audit of the composed gradients"
    )
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--tolerance", type=float, default=1e-3)
    p.add_argument("--k", type=int, default=2, help="siamese streams in the probe net")
    p.set_defaults(handler=_cmd_grad_check)

    p = subs.add_parser(
        "bias-report", help="quantisation loss of a sampling configuration"
    )
    p.add_argument("--annotations", required=True)
    p.add_argument("--m", type=int, required=True, help="sampled frame count")
    p.add_argument("--out", help="write bias_report.csv and bias_hist.png here")
    p.set_defaults(handler=_cmd_bias_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except SsrnError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1
    except OSError as exc:
        print(json.dumps({"error": "OSError", "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
