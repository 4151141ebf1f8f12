import json
import logging

import numpy as np
import pytest

from puffline import io
from puffline.cli import main
from puffline.config import PipelineConfig
from puffline.detect import ProbabilityTrace, PuffSet
from puffline.net import load_model
from puffline.pipeline import detect, load_recording
from puffline.sessions import SessionSet
from puffline.windows import extract_windows

SMALL_INI = """
[windows]
negative_ratio = 2
[net]
epochs = 2
[synth]
n_subjects = 2
sessions_per_subject = 1
puffs_min = 5
puffs_max = 6
day_duration_s = 2400
left_wrist_fraction = 0.5
[run]
seed = 3
"""


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "small.ini"
    cfg.write_text(SMALL_INI)
    assert main(["synth", "--config", str(cfg), "--out", str(root / "raw")]) == 0
    assert main(["preprocess", str(root / "raw"), "--config", str(cfg), "--out", str(root / "pre")]) == 0
    assert main(["train", str(root / "pre"), "--config", str(cfg), "--out", str(root / "model")]) == 0
    return root, cfg


def test_synth_writes_pairs(work):
    root, _ = work
    names = sorted(p.name for p in (root / "raw").iterdir())
    assert names == ["S01.annotations.json", "S01.csv", "S01.json",
                     "S02.annotations.json", "S02.csv", "S02.json"]


def test_preprocess_preserves_rows_and_flags(work):
    root, cfg = work
    h = PipelineConfig.load(cfg).config_hash()
    for name in ("S01", "S02"):
        raw = (root / "raw" / f"{name}.csv").read_text().count("\n")
        pre = (root / "pre" / f"{name}.csv").read_text().count("\n")
        assert raw == pre
        meta = io.load_json(root / "pre" / f"{name}.json")
        assert meta["preprocessed"] is True and meta["config_hash"] == h
        assert meta["source_wrist"] == io.load_json(root / "raw" / f"{name}.json")["wrist"]


def test_preprocess_is_byte_identical_on_rerun(work, tmp_path):
    root, cfg = work
    assert main(["preprocess", str(root / "raw"), "--config", str(cfg), "--out", str(tmp_path)]) == 0
    for p in (root / "pre").iterdir():
        assert (tmp_path / p.name).read_bytes() == p.read_bytes()


def test_preprocess_logs_mirroring(work, tmp_path, caplog):
    root, cfg = work
    with caplog.at_level(logging.INFO, logger="puffline"):
        main(["preprocess", str(root / "raw"), "--config", str(cfg), "--out", str(tmp_path)])
    text = caplog.text
    wrists = {n: io.load_json(root / "raw" / f"{n}.json")["wrist"] for n in ("S01", "S02")}
    for name, wrist in wrists.items():
        expect = "mirroring skipped" if wrist == "right" else "mirrored"
        assert f"{name}.csv: {wrist} wrist, {expect}" in text


def test_preprocess_refuses_preprocessed_input(work, tmp_path):
    root, cfg = work
    assert main(["preprocess", str(root / "pre"), "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_train_outputs(work):
    root, cfg = work
    lines = (root / "model" / "history.csv").read_text().splitlines()
    assert len(lines) == 1 + 2
    meta = io.load_json(root / "model" / "model.json")
    assert meta["config_hash"] == PipelineConfig.load(cfg).config_hash()
    assert meta["train_windows"] == 3 * meta["train_positives"]
    load_model(root / "model" / "model.puff")


def test_detect_matches_library(work, tmp_path):
    root, cfg_path = work
    rec = root / "pre" / "S01.csv"
    args = ["detect", str(root / "model" / "model.puff"), str(rec), "--trace",
            "--config", str(cfg_path), "--out", str(tmp_path)]
    assert main(args) == 0
    cfg = PipelineConfig.load(cfg_path)
    item = load_recording(rec, cfg)
    trace, puffs = detect(load_model(root / "model" / "model.puff"), item.recording, cfg)
    doc = io.load_json(tmp_path / "S01.puffs.json")
    assert doc["config_hash"] == cfg.config_hash()
    np.testing.assert_allclose(doc["puffs"], puffs.timestamps)
    table = np.loadtxt(tmp_path / "S01.trace.csv", delimiter=",", skiprows=1)
    assert len(table) == len(extract_windows(item.recording)) == len(trace)


def test_high_threshold_gives_no_puffs(work, tmp_path):
    root, _ = work
    cfg = tmp_path / "strict.ini"
    cfg.write_text(SMALL_INI + "[detect]\nlambda_p = 1.01\n")
    assert main(["detect", str(root / "model" / "model.puff"), str(root / "pre" / "S02.csv"),
                 "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert io.load_json(tmp_path / "S02.puffs.json")["puffs"] == []


def test_localize(tmp_path):
    io.write_puffs(PuffSet(np.array([10.0, 70, 130, 190, 5000])), tmp_path / "a.puffs.json")
    assert main(["localize", str(tmp_path / "a.puffs.json"), "--out", str(tmp_path)]) == 0
    doc = io.load_json(tmp_path / "a.sessions.json")
    assert doc["sessions"] == [{"start": 10.0, "end": 190.0}]
    io.write_puffs(PuffSet(np.array([10.0, 20, 30])), tmp_path / "b.puffs.json")
    assert main(["localize", str(tmp_path / "b.puffs.json"), "--out", str(tmp_path)]) == 0
    assert io.load_json(tmp_path / "b.sessions.json")["sessions"] == []


def test_evaluate_puffs_and_sessions(tmp_path):
    gt = tmp_path / "gt.annotations.json"
    gt.write_text(json.dumps({"puffs": [{"start": 0, "end": 5}, {"start": 10, "end": 15}],
                              "sessions": [{"start": 0, "end": 100}]}))
    io.write_puffs(PuffSet(np.array([2.0, 3.0, 20.0])), tmp_path / "p.json")
    assert main(["evaluate", "puffs", "--pred", str(tmp_path / "p.json"), "--gt", str(gt),
                 "--out", str(tmp_path)]) == 0
    m = io.load_json(tmp_path / "metrics_puffs.json")
    assert (m["tp"], m["fp"], m["fn"]) == (1, 2, 1)
    assert m["precision"] == pytest.approx(1 / 3) and m["recall"] == pytest.approx(0.5)
    io.write_sessions(SessionSet([(50.0, 150.0)]), tmp_path / "s.json")
    assert main(["evaluate", "sessions", "--pred", str(tmp_path / "s.json"), "--gt", str(gt),
                 "--out", str(tmp_path)]) == 0
    m = io.load_json(tmp_path / "metrics_sessions.json")
    assert (m["tp"], m["fp"], m["fn"]) == (1, 0, 0)
    assert m["jaccard"] == pytest.approx(50 / 150)
    assert (tmp_path / "metrics_sessions.csv").exists()


def test_evaluate_windows(tmp_path):
    gt = tmp_path / "gt.annotations.json"
    gt.write_text(json.dumps({"puffs": [{"start": 10, "end": 14}], "sessions": []}))
    t = 4.5 + 0.5 * np.arange(40)
    probs = np.where(np.abs(t - 14.0) <= 1.5, 0.9, 0.1)
    io.write_trace(ProbabilityTrace(probs, t), tmp_path / "x.trace.csv")
    assert main(["evaluate", "windows", "--pred", str(tmp_path / "x.trace.csv"), "--gt", str(gt),
                 "--out", str(tmp_path)]) == 0
    m = io.load_json(tmp_path / "metrics_windows.json")
    assert m["fp"] == 0 and m["fn"] == 0 and m["tp"] == 7 and m["tn"] == 33
    assert m["weighted_accuracy"] == 1.0


def test_exit_codes(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[detect]\nlambda_p = high\n")
    assert main(["synth", "--config", str(bad), "--out", str(tmp_path)]) == 3
    assert main(["train", str(tmp_path / "missing"), "--out", str(tmp_path)]) == 2
    (tmp_path / "junk.puff").write_bytes(b"not a model")
    (tmp_path / "r.csv").write_text(io.CSV_HEADER + "\n")
    assert main(["detect", str(tmp_path / "junk.puff"), str(tmp_path / "r.csv"), "--out", str(tmp_path)]) == 2
    assert main(["evaluate", "puffs", "--pred", "a", "b", "--gt", "c", "--out", str(tmp_path)]) == 2
    with pytest.raises(SystemExit):
        main(["frobnicate"])
