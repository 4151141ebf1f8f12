"""End-to-end composition: preprocess, train, detect, localize, score, and LOSO runs."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import evaluation as ev
from . import io
from .config import PipelineConfig
from .detect import ProbabilityTrace, PuffSet, detect_puffs, predict_recording
from .net import PuffModel, save_model, train
from .sessions import SessionSet, localize_sessions
from .signal import Recording, design_highpass
from .signal import preprocess as _preprocess
from .windows import Annotations, WindowSet, build_training_set, label_windows

log = logging.getLogger(__name__)


@dataclass
class LabeledRecording:
    recording: Recording
    annotations: Annotations
    name: str = ""

    @property
    def subject_id(self) -> str:
        return self.recording.subject_id


def preprocess(rec: Recording, cfg: PipelineConfig) -> Recording:
    filt = design_highpass(cfg.signal.cutoff_hz, cfg.signal.taps, rec.sample_rate_hz)
    return _preprocess(rec, filt)


def training_segments(items: Sequence[LabeledRecording], cfg: PipelineConfig):
    """(recording, puffs) pairs used for training: whole recordings, or each
    annotated session with ``train_session_margin_s`` of context."""
    margin = cfg.windows.train_session_margin_s
    out = []
    for item in items:
        rec, ann = item.recording, item.annotations
        if margin is None or not ann.sessions:
            out.append((rec, ann.puffs))
        else:
            out.extend((rec.crop(s - margin, e + margin), ann.puffs) for s, e in ann.sessions)
    return out


def training_windows(items: Sequence[LabeledRecording], cfg: PipelineConfig,
                     seed: int | None = None) -> WindowSet:
    w = cfg.windows
    return build_training_set(
        training_segments(items, cfg), w.augment_factor, win_len_s=w.win_len_s,
        step_s=w.step_s, epsilon_s=w.epsilon_s, negative_ratio=w.negative_ratio,
        sigma_deg=w.rotation_sigma_deg, seed=cfg.run.seed if seed is None else seed,
    )


def train_model(items: Sequence[LabeledRecording], cfg: PipelineConfig,
                seed: int | None = None) -> tuple[PuffModel, WindowSet]:
    """Train on preprocessed recordings. The returned model is rounded to the
    precision it is stored with, so in-memory and reloaded models agree."""
    seed = cfg.run.seed if seed is None else seed
    ws = training_windows(items, cfg, seed)
    n_pos = int(np.sum(ws.labels > 0))
    log.info("training on %d windows (%d positive, %d negative)", len(ws), n_pos, len(ws) - n_pos)
    model = train(ws, None, cfg.train_config(seed), cfg.architecture())
    return model.to_float32_precision(), ws


def puff_times(trace: ProbabilityTrace, cfg: PipelineConfig) -> PuffSet:
    d = cfg.detect
    puffs = detect_puffs(trace, d.lambda_p, d.min_distance, d.threshold_first)
    if d.time_anchor == "center":
        puffs = PuffSet(puffs.timestamps - cfg.windows.win_len_s / 2)
    return puffs


def detect(model: PuffModel, rec: Recording, cfg: PipelineConfig) -> tuple[ProbabilityTrace, PuffSet]:
    trace = predict_recording(model, rec, cfg.windows.win_len_s, cfg.windows.step_s)
    return trace, puff_times(trace, cfg)


def localize(puffs: PuffSet, cfg: PipelineConfig) -> SessionSet:
    return localize_sessions(puffs, cfg.sessions.eps_s, cfg.sessions.min_pts)


def slice_trace(trace: ProbabilityTrace, start: float, end: float, win_len_s: float) -> ProbabilityTrace:
    """Windows lying entirely inside ``[start, end]``."""
    keep = (trace.end_epochs - win_len_s >= start - 1e-9) & (trace.end_epochs <= end + 1e-9)
    return ProbabilityTrace(trace.probs[keep], trace.end_epochs[keep], trace.step_s)


@dataclass
class RecordingResult:
    name: str
    subject_id: str
    duration_s: float
    puffs: ev.Confusion
    puff_windows: ev.Confusion
    sessions: ev.Confusion
    session_windows: ev.Confusion
    jaccard: float
    intersection_s: float
    union_s: float
    detected_puffs: PuffSet = field(repr=False, default=None)
    detected_sessions: SessionSet = field(repr=False, default=None)
    trace: ProbabilityTrace = field(repr=False, default=None)


def evaluate_recording(model: PuffModel, item: LabeledRecording, cfg: PipelineConfig) -> RecordingResult:
    """Detect puffs and sessions on one preprocessed recording and score them."""
    rec, ann = item.recording, item.annotations
    trace, puffs = detect(model, rec, cfg)
    sessions = localize(puffs, cfg)
    win = cfg.windows.win_len_s
    thr = cfg.eval.window_threshold

    if cfg.eval.puff_scope == "sessions" and ann.sessions:
        m = cfg.eval.puff_scope_margin_s
        puff_conf, win_conf = ev.Confusion(), ev.Confusion(tn=0)
        for s, e in ann.sessions:
            seg = slice_trace(trace, s - m, e + m, win)
            if len(seg) == 0:
                continue
            seg_puffs = puff_times(seg, cfg)
            gt = [iv for iv in ann.puff_intervals if iv[1] >= s - m and iv[0] <= e + m]
            puff_conf = puff_conf + ev.evaluate_puffs(seg_puffs, gt)
            win_conf = win_conf + ev.window_confusion(
                np.where(seg.probs >= thr, 1, -1),
                label_windows(seg.end_epochs, ann.puffs, cfg.windows.epsilon_s))
    else:
        puff_conf = ev.evaluate_puffs(puffs, ann.puff_intervals)
        win_conf = ev.window_confusion(
            np.where(trace.probs >= thr, 1, -1),
            label_windows(trace.end_epochs, ann.puffs, cfg.windows.epsilon_s))

    session_conf = ev.evaluate_sessions(sessions, ann.sessions)
    session_win = ev.window_confusion(ev.interval_labels(trace.end_epochs, sessions),
                                      ev.interval_labels(trace.end_epochs, ann.sessions))
    inter, union = ev.interval_measures(sessions, ann.sessions)
    return RecordingResult(
        name=item.name, subject_id=item.subject_id, duration_s=rec.duration_s,
        puffs=puff_conf, puff_windows=win_conf, sessions=session_conf,
        session_windows=session_win, jaccard=ev.jaccard(sessions, ann.sessions),
        intersection_s=inter, union_s=union, detected_puffs=puffs,
        detected_sessions=sessions, trace=trace,
    )


def summarize(results: Sequence[RecordingResult], cfg: PipelineConfig) -> dict:
    """Summed-count metrics over recordings, plus both Jaccard variants."""
    puffs = ev.sum_confusions([r.puffs for r in results])
    pwin = ev.sum_confusions([r.puff_windows for r in results])
    sess = ev.sum_confusions([r.sessions for r in results])
    swin = ev.sum_confusions([r.session_windows for r in results])
    inter = sum(r.intersection_s for r in results)
    union = sum(r.union_s for r in results)
    total_dur = sum(r.duration_s for r in results)
    ji_concat = inter / union if union > 0 else 1.0
    ji_mean = (sum(r.jaccard * r.duration_s for r in results) / total_dur) if total_dur else 1.0
    return {
        "puffs": ev.metrics_dict(puffs),
        "puff_windows": ev.metrics_dict(pwin, cfg.eval.puff_weight),
        "sessions": ev.metrics_dict(sess, jaccard=ji_concat, jaccard_mean=ji_mean),
        "session_windows": ev.metrics_dict(swin, cfg.eval.session_weight),
    }


@dataclass
class LosoReport:
    config_hash: str
    folds: list[dict]
    pooled: dict

    def as_dict(self) -> dict:
        return {"config_hash": self.config_hash, "folds": self.folds, "pooled": self.pooled}

    def csv_rows(self) -> list[dict]:
        rows = []
        for scope, block in [(f["subject"], f["metrics"]) for f in self.folds] + [("pooled", self.pooled)]:
            for level in ("puffs", "puff_windows", "sessions", "session_windows"):
                rows.append({"scope": scope, "level": level, **block[level]})
        return rows

    def save(self, out_dir) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        io.dump_json(self.as_dict(), out_dir / "report.json")
        io.write_metrics_csv(self.csv_rows(), out_dir / "report.csv")


def group_by_subject(items: Sequence[LabeledRecording]) -> dict[str, list[LabeledRecording]]:
    groups: dict[str, list[LabeledRecording]] = {}
    for item in items:
        groups.setdefault(item.subject_id, []).append(item)
    return dict(sorted(groups.items()))


def run_loso(items: Sequence[LabeledRecording], cfg: PipelineConfig, out_dir=None) -> LosoReport:
    """Leave-one-subject-out: train on every other subject, score the held-out one.

    ``items`` must already be preprocessed. Per-fold confusions are summed
    for the pooled metrics. With ``out_dir`` each fold's model and training
    history are written to ``fold_<subject>/`` and the report to
    ``report.json`` / ``report.csv``.
    """
    groups = group_by_subject(items)
    if len(groups) < 2:
        raise ValueError("leave-one-subject-out needs at least two subjects")
    chash = cfg.config_hash()
    folds, all_results = [], []
    for k, (subject, test_items) in enumerate(groups.items()):
        train_items = [it for s, its in groups.items() if s != subject for it in its]
        log.info("fold %d/%d: holding out %s", k + 1, len(groups), subject)
        model, ws = train_model(train_items, cfg, seed=cfg.run.seed + k)
        results = [evaluate_recording(model, it, cfg) for it in test_items]
        all_results.extend(results)
        fold = {
            "subject": subject,
            "train_subjects": sorted({it.subject_id for it in train_items}),
            "train_windows": len(ws),
            "train_positives": int(np.sum(ws.labels > 0)),
            "loss_history": [float(x) for x in model.history],
            "metrics": summarize(results, cfg),
        }
        folds.append(fold)
        if out_dir is not None:
            fold_dir = Path(out_dir) / f"fold_{subject}"
            fold_dir.mkdir(parents=True, exist_ok=True)
            save_model(model, fold_dir / "model.puff")
            io.write_history(model.history, fold_dir / "history.csv")
            io.dump_json({"config_hash": chash, "subject": subject}, fold_dir / "provenance.json")
    report = LosoReport(chash, folds, summarize(all_results, cfg))
    if out_dir is not None:
        report.save(out_dir)
    return report


def load_recording(csv_path, cfg: PipelineConfig) -> LabeledRecording:
    """Read one recording (+ annotations if present), preprocessing it unless
    its sidecar marks it as already preprocessed."""
    meta = io.load_json(io.sidecar_path(csv_path))
    rec = io.read_recording(csv_path, cfg.signal.fs)
    if not meta.get("preprocessed"):
        rec = preprocess(rec, cfg)
    ann_path = io.annotation_path(csv_path)
    ann = io.read_annotations(ann_path) if ann_path.exists() else Annotations()
    return LabeledRecording(rec, ann, Path(csv_path).stem)


def load_dataset(directory, cfg: PipelineConfig) -> list[LabeledRecording]:
    """Every recording in a dataset directory, ready for training or scoring."""
    return [load_recording(path, cfg) for path in io.list_recordings(directory)]
