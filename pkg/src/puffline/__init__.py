"""Smoking puff and session detection from wrist IMU data.

The pipeline runs hand mirroring and a 1 Hz high-pass on 50 Hz
accelerometer/gyroscope streams, scores sliding 4.5 s windows with a
CNN-LSTM, picks puffs from peaks of the probability trace and groups them
into sessions with DBSCAN.
"""

from .signal import Recording, Wrist, design_highpass, mirror_hand, preprocess
from .windows import Annotations, PuffAnnotation, WindowSet, build_training_set, extract_windows
from .net import Architecture, PuffModel, TrainConfig, load_model, save_model, train
from .detect import ProbabilityTrace, PuffSet, detect_puffs, find_puff_peaks
from .sessions import SessionSet, dbscan_1d, localize_sessions
from .evaluation import Confusion, evaluate_puffs, evaluate_sessions, jaccard, prf, weighted_accuracy
from .synthgen import SynthConfig, generate_dataset
from .config import PipelineConfig

__version__ = "0.1.0"
