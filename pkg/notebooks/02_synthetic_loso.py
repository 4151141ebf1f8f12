"""
Leave-one-subject-out on synthetic data
=======================================

A scaled-down version of the acceptance experiment: three synthetic subjects,
two sessions each, three training epochs. The full run uses
``configs/acceptance.ini`` through ``puffline loso``.
"""

# %%
import tempfile
from pathlib import Path

import numpy as np

from puffline.config import PipelineConfig
from puffline.pipeline import LabeledRecording, preprocess, run_loso
from puffline.synthgen import generate_dataset

cfg = PipelineConfig.load(Path(__file__).resolve().parents[1] / "configs" / "acceptance.ini")
cfg.synth.n_subjects = 3
cfg.synth.sessions_per_subject = 2
cfg.synth.day_duration_s = 2400.0
cfg.net.epochs = 3
print("config hash", cfg.config_hash())

# %%
items = [LabeledRecording(preprocess(s.recording, cfg), s.annotations, s.subject_id)
         for s in generate_dataset(cfg.synth_config())]
for it in items:
    print(it.subject_id, it.recording.wrist.value, "wrist,", len(it.annotations.puffs), "puffs")

# %% [markdown]
# Each fold trains on the other subjects with seed ``run.seed + fold``.

# %%
out = Path(tempfile.mkdtemp(prefix="loso_"))
report = run_loso(items, cfg, out)
for fold in report.folds:
    m = fold["metrics"]
    print(f"{fold['subject']}: puff F1 {m['puffs']['f1']:.3f}  session F1 {m['sessions']['f1']:.3f}"
          f"  JI {m['sessions']['jaccard']:.3f}  final loss {fold['loss_history'][-1]:.4f}")

# %%
pooled = report.pooled
for level in ("puffs", "puff_windows", "sessions", "session_windows"):
    b = pooled[level]
    extra = f"  weighted acc {b['weighted_accuracy']:.3f}" if b["weighted_accuracy"] is not None else ""
    print(f"{level:16s} P {b['precision']:.3f}  R {b['recall']:.3f}  F1 {b['f1']:.3f}{extra}")
print("session Jaccard: concatenated", round(pooled["sessions"]["jaccard"], 3),
      " duration-weighted mean", round(pooled["sessions"]["jaccard_mean"], 3))

# %%
print(sorted(p.name for p in out.iterdir()))
print((out / "report.csv").read_text().splitlines()[0])
print("window counts per fold", np.array([f["train_windows"] for f in report.folds]))
