"""Command line for the puff pipeline: preprocess | train | detect | localize | evaluate | synth | loso.

Logs go to stderr, results to files under ``--out``. Exit status is 0 on
success, 2 for bad input files and 3 for bad configuration.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import evaluation as ev
from . import io
from .config import ConfigError, PipelineConfig
from .detect import ProbabilityTrace
from .net import ModelFormatError, load_model, save_model
from .pipeline import detect, load_dataset, load_recording, localize, preprocess, run_loso, train_model
from .synthgen import generate_dataset
from .windows import label_windows

log = logging.getLogger("puffline")


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.run.seed = args.seed
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_preprocess(args, cfg: PipelineConfig) -> None:
    out = _out(args)
    for path in io.list_recordings(args.input):
        meta = io.load_json(io.sidecar_path(path))
        if meta.get("preprocessed"):
            raise io.InputError(f"{path} is already preprocessed")
        rec = io.read_recording(path, cfg.signal.fs)
        if rec.wrist.value == "right":
            log.info("%s: right wrist, mirroring skipped", path.name)
        else:
            log.info("%s: left wrist, mirrored", path.name)
        pre = preprocess(rec, cfg)
        io.write_recording(pre, out / path.name, preprocessed=True, source_wrist=rec.wrist.value,
                           accel_unit=cfg.signal.accel_unit, config_hash=cfg.config_hash())
        ann = io.annotation_path(path)
        if ann.exists():
            io.write_annotations(io.read_annotations(ann), io.annotation_path(out / path.name))


def cmd_train(args, cfg: PipelineConfig) -> None:
    out = _out(args)
    items = load_dataset(args.data, cfg)
    if not items:
        raise io.InputError(f"no recordings found in {args.data}")
    model, ws = train_model(items, cfg)
    n_pos = int(np.sum(ws.labels > 0))
    save_model(model, out / "model.puff")
    io.write_history(model.history, out / "history.csv")
    io.dump_json({"config_hash": cfg.config_hash(), "manifest": model.manifest,
                  "train_windows": len(ws), "train_positives": n_pos,
                  "recordings": [it.name for it in items]}, out / "model.json")


def cmd_detect(args, cfg: PipelineConfig) -> None:
    out = _out(args)
    model = load_model(args.model)
    item = load_recording(args.recording, cfg)
    trace, puffs = detect(model, item.recording, cfg)
    stem = Path(args.recording).stem
    io.write_puffs(puffs, out / f"{stem}.puffs.json", config_hash=cfg.config_hash())
    if args.trace:
        io.write_trace(trace, out / f"{stem}.trace.csv")


def cmd_localize(args, cfg: PipelineConfig) -> None:
    out = _out(args)
    puffs = io.read_puffs(args.puffs)
    stem = Path(args.puffs).name.removesuffix(".json").removesuffix(".puffs")
    io.write_sessions(localize(puffs, cfg), out / f"{stem}.sessions.json",
                      config_hash=cfg.config_hash())


def _read_trace(path) -> ProbabilityTrace:
    try:
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise io.InputError(f"{path}: cannot read trace ({exc})") from exc
    return ProbabilityTrace(table[:, 1], table[:, 0])


def cmd_evaluate(args, cfg: PipelineConfig) -> None:
    out = _out(args)
    if len(args.pred) != len(args.gt):
        raise io.InputError("--pred and --gt need the same number of files")
    total = ev.Confusion(tn=0) if args.mode == "windows" else ev.Confusion()
    inter = union = 0.0
    for pred_path, gt_path in zip(args.pred, args.gt):
        ann = io.read_annotations(gt_path)
        if args.mode == "puffs":
            total = total + ev.evaluate_puffs(io.read_puffs(pred_path), ann.puff_intervals)
        elif args.mode == "sessions":
            pred = io.read_sessions(pred_path)
            total = total + ev.evaluate_sessions(pred, ann.sessions)
            i, u = ev.interval_measures(pred, ann.sessions)
            inter, union = inter + i, union + u
        else:
            trace = _read_trace(pred_path)
            total = total + ev.window_confusion(
                np.where(trace.probs >= cfg.eval.window_threshold, 1, -1),
                label_windows(trace.end_epochs, ann.puffs, cfg.windows.epsilon_s))
    extra = {"config_hash": cfg.config_hash(), "mode": args.mode}
    weight = None
    if args.mode == "sessions":
        extra["jaccard"] = inter / union if union > 0 else 1.0
    if args.mode == "windows":
        weight = cfg.eval.puff_weight
    metrics = ev.metrics_dict(total, weight, **extra)
    io.dump_json(metrics, out / f"metrics_{args.mode}.json")
    io.write_metrics_csv([{"scope": "all", "level": args.mode, **metrics}],
                         out / f"metrics_{args.mode}.csv")


def cmd_synth(args, cfg: PipelineConfig) -> None:
    out = _out(args)
    for subject in generate_dataset(cfg.synth_config()):
        path = out / f"{subject.subject_id}.csv"
        io.write_recording(subject.recording, path, synthetic=True, config_hash=cfg.config_hash())
        io.write_annotations(subject.annotations, io.annotation_path(path))


def cmd_loso(args, cfg: PipelineConfig) -> None:
    items = load_dataset(args.data, cfg)
    report = run_loso(items, cfg, _out(args))
    pooled = report.pooled
    log.info("pooled puff F1 %.3f, session F1 %.3f, JI %.3f", pooled["puffs"]["f1"],
             pooled["sessions"]["f1"], pooled["sessions"]["jaccard"])


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file (defaults if omitted)")
    common.add_argument("--seed", type=int, help="override the master seed")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="puffline", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", parents=[common], help="resample, mirror and high-pass")
    p.add_argument("input", help="directory of raw recordings")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", parents=[common], help="train a puff model")
    p.add_argument("data", help="directory of recordings with annotations")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", parents=[common], help="detect puffs in one recording")
    p.add_argument("model")
    p.add_argument("recording", help="recording CSV (sidecar JSON alongside)")
    p.add_argument("--trace", action="store_true", help="also write the probability trace")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("localize", parents=[common], help="cluster puffs into sessions")
    p.add_argument("puffs", help="puff JSON from 'detect'")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("evaluate", parents=[common], help="score predictions against annotations")
    p.add_argument("mode", choices=("puffs", "windows", "sessions"))
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--gt", nargs="+", required=True, help="annotation JSON files")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic dataset")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("loso", parents=[common], help="leave-one-subject-out experiment")
    p.add_argument("data", help="dataset directory")
    p.set_defaults(func=cmd_loso)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _config(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return 3
    try:
        args.func(args, cfg)
    except ConfigError as exc:
        log.error("%s", exc)
        return 3
    except (io.InputError, ModelFormatError) as exc:
        log.error("%s", exc)
        return 2
    except ValueError as exc:
        log.error("%s", exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
