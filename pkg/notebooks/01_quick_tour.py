"""
A quick tour of the puff pipeline
=================================

Walks one synthetic subject through every stage: filtering, windowing,
a (briefly trained) detector, peak picking, session clustering and scoring.
Runs in well under a minute on one core.
"""

# %%
import numpy as np

import puffline as pl
from puffline.config import PipelineConfig
from puffline.pipeline import LabeledRecording, detect, localize, preprocess, train_model
from puffline.windows import label_windows

cfg = PipelineConfig()
cfg.net.epochs = 3
cfg.windows.negative_ratio = 2.0

# %% [markdown]
# The high-pass filter: 512 symmetric taps, 1 Hz cutoff at 50 Hz.

# %%
filt = pl.design_highpass(cfg.signal.cutoff_hz, cfg.signal.taps, cfg.signal.fs)
freqs = np.array([0.0, 0.5, 1.0, 2.0, 10.0, 25.0])
for f, g in zip(freqs, np.abs(filt.response(freqs, cfg.signal.fs))):
    print(f"|H({f:4.1f} Hz)| = {g:.4f}")
print("group delay", filt.group_delay_samples, "samples, shift applied", filt.alignment_shift)

# %% [markdown]
# Two synthetic subjects: train on one, look at the other.

# %%
synth = pl.SynthConfig(n_subjects=2, sessions_per_subject=2, day_duration_s=2400.0,
                       left_wrist_fraction=0.5, seed=11)
subjects = [LabeledRecording(preprocess(s.recording, cfg), s.annotations)
            for s in pl.generate_dataset(synth)]
train, test = subjects
print(test.subject_id, len(test.recording), "samples,", len(test.annotations.puffs), "puffs,",
      len(test.annotations.sessions), "sessions")

# %%
ws = pl.extract_windows(test.recording)
labels = label_windows(ws.end_epochs, test.annotations.puffs)
print(ws.data.shape, "windows;", int(np.sum(labels > 0)), "positive")

# %%
model, train_ws = train_model([train], cfg)
print("training windows", len(train_ws), "loss per epoch", np.round(model.history, 4))

# %%
trace, puffs = detect(model, test.recording, cfg)
print("detected", len(puffs.timestamps), "puffs")
sessions = localize(puffs, cfg)
t0 = test.recording.start_epoch_s
print("predicted sessions (s from start):", [(round(s - t0), round(e - t0)) for s, e in sessions.intervals])
print("annotated sessions (s from start):", [(round(s - t0), round(e - t0)) for s, e in test.annotations.sessions])

# %%
puff_counts = pl.evaluate_puffs(puffs, test.annotations.puff_intervals)
sess_counts = pl.evaluate_sessions(sessions, test.annotations.sessions)
print("puffs   ", pl.prf(puff_counts))
print("sessions", pl.prf(sess_counts))
print("Jaccard index", round(pl.jaccard(sessions.intervals, test.annotations.sessions), 3))
