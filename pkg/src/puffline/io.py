"""On-disk formats: recording CSV + sidecar JSON, annotation/puff/session JSON, reports.

A dataset directory holds, per recording ``<name>``::

    <name>.csv                # header t,ax,ay,az,gx,gy,gz; t in epoch seconds
    <name>.json               # {"subject": ..., "wrist": "left"|"right", "fs": 50, ...}
    <name>.annotations.json   # {"puffs": [{"start", "end"}], "sessions": [{"start", "end"}]}
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .detect import ProbabilityTrace, PuffSet
from .sessions import SessionSet
from .signal import Recording, Wrist, resample_uniform
from .windows import Annotations, PuffAnnotation

CSV_HEADER = "t,ax,ay,az,gx,gy,gz"
ANNOTATION_SUFFIX = ".annotations.json"


class InputError(ValueError):
    """Malformed or missing input file."""


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise InputError(f"missing file {path}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from exc


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".json")


def annotation_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ANNOTATION_SUFFIX)


def write_recording(rec: Recording, csv_path, **meta) -> None:
    """Write samples and the sidecar. Extra keyword arguments land in the sidecar."""
    csv_path = Path(csv_path)
    table = np.column_stack([rec.timestamps, rec.samples])
    np.savetxt(csv_path, table, delimiter=",", header=CSV_HEADER, comments="",
               fmt=["%.3f"] + ["%.6f"] * 6)
    sidecar = {"subject": rec.subject_id, "wrist": rec.wrist.value, "fs": rec.sample_rate_hz}
    sidecar.update(meta)
    dump_json(sidecar, sidecar_path(csv_path))


def read_recording(csv_path, target_fs: float | None = None) -> Recording:
    """Load a CSV + sidecar pair and interpolate it onto a uniform grid."""
    csv_path = Path(csv_path)
    meta = load_json(sidecar_path(csv_path))
    try:
        wrist = Wrist(str(meta["wrist"]).lower())
        subject = str(meta["subject"])
        fs = float(target_fs or meta.get("fs", 50.0))
    except (KeyError, ValueError) as exc:
        raise InputError(f"{sidecar_path(csv_path)}: bad sidecar ({exc})") from exc
    try:
        with open(csv_path) as fh:
            header = fh.readline().strip().replace(" ", "")
        if header != CSV_HEADER:
            raise InputError(f"{csv_path}: expected header {CSV_HEADER!r}, got {header!r}")
        table = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    except FileNotFoundError as exc:
        raise InputError(f"missing file {csv_path}") from exc
    except ValueError as exc:
        raise InputError(f"{csv_path}: malformed CSV ({exc})") from exc
    if table.shape[1] != 7:
        raise InputError(f"{csv_path}: expected 7 columns, found {table.shape[1]}")
    try:
        return resample_uniform(table[:, 0], table[:, 1:], fs, wrist=wrist, subject_id=subject)
    except ValueError as exc:
        raise InputError(f"{csv_path}: {exc}") from exc


def write_annotations(ann: Annotations, path) -> None:
    dump_json({
        "puffs": [{"start": p.start_epoch_s, "end": p.end_epoch_s} for p in ann.puffs],
        "sessions": [{"start": s, "end": e} for s, e in ann.sessions],
    }, path)


def read_annotations(path) -> Annotations:
    doc = load_json(path)
    try:
        puffs = [PuffAnnotation(float(p["start"]), float(p["end"])) for p in doc.get("puffs", [])]
        sessions = [(float(s["start"]), float(s["end"])) for s in doc.get("sessions", [])]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: bad annotation entry ({exc})") from exc
    puffs.sort(key=lambda p: p.end_epoch_s)
    sessions.sort()
    return Annotations(puffs, sessions)


def write_puffs(puffs: PuffSet, path, **meta) -> None:
    dump_json({"puffs": [float(t) for t in puffs.timestamps], **meta}, path)


def read_puffs(path) -> PuffSet:
    doc = load_json(path)
    try:
        return PuffSet(np.sort(np.asarray(doc["puffs"], dtype=np.float64)))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: bad puff list ({exc})") from exc


def write_sessions(sessions: SessionSet, path, **meta) -> None:
    dump_json({"sessions": [{"start": s, "end": e} for s, e in sessions.intervals], **meta}, path)


def read_sessions(path) -> SessionSet:
    doc = load_json(path)
    try:
        return SessionSet(sorted((float(s["start"]), float(s["end"])) for s in doc["sessions"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: bad session list ({exc})") from exc


def write_trace(trace: ProbabilityTrace, path) -> None:
    np.savetxt(path, np.column_stack([trace.end_epochs, trace.probs]), delimiter=",",
               header="t,p", comments="", fmt=["%.3f", "%.9f"])


def write_history(history, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "mean_loss"])
        for i, loss in enumerate(history, start=1):
            w.writerow([i, repr(float(loss))])


def write_metrics_csv(rows: list[dict], path) -> None:
    keys = ["scope", "level", "tp", "fp", "fn", "tn", "precision", "recall", "f1",
            "weighted_accuracy", "jaccard"]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, keys, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in keys})


def list_recordings(directory) -> list[Path]:
    """CSV recordings in a dataset directory, sorted by name."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"{directory} is not a directory")
    return sorted(p for p in directory.glob("*.csv") if sidecar_path(p).exists())
