"""Pipeline configuration: typed INI sections whose defaults reproduce the published setup."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .net import Architecture, TrainConfig
from .synthgen import SynthConfig


class ConfigError(ValueError):
    pass


@dataclass
class SignalSection:
    fs: float = 50.0
    cutoff_hz: float = 1.0
    taps: int = 512
    accel_unit: str = "m/s2"


@dataclass
class WindowSection:
    win_len_s: float = 4.5
    step_s: float = 0.5
    epsilon_s: float = 1.5
    augment_factor: int = 1
    rotation_sigma_deg: float = 10.0
    negative_ratio: typing.Optional[float] = None
    # seconds of context kept around each annotated session for training; None = whole recording
    train_session_margin_s: typing.Optional[float] = None


@dataclass
class NetSection:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 10
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-8
    dropout_rate: float = 0.5
    lstm_inner_activation: str = "tanh"


@dataclass
class DetectSection:
    lambda_p: float = 0.8
    min_distance: int = 10
    threshold_first: bool = False
    # "center" reports the middle of the peak window, "end" its right edge
    time_anchor: str = "center"


@dataclass
class SessionSection:
    eps_s: float = 250.0
    min_pts: int = 4


@dataclass
class EvalSection:
    puff_weight: float = 7.27
    session_weight: float = 13.76
    window_threshold: float = 0.5
    # "sessions": score puffs inside annotated sessions (plus margin); "full": whole recording
    puff_scope: str = "sessions"
    puff_scope_margin_s: float = 60.0


@dataclass
class SynthSection:
    n_subjects: int = 5
    sessions_per_subject: int = 3
    puffs_min: int = 8
    puffs_max: int = 14
    day_duration_s: float = 3600.0
    noise_amplitude: float = 1.0
    gesture_amplitude: float = 1.0
    left_wrist_fraction: float = 0.4


@dataclass
class RunSection:
    seed: int = 0


@dataclass
class PipelineConfig:
    signal: SignalSection = field(default_factory=SignalSection)
    windows: WindowSection = field(default_factory=WindowSection)
    net: NetSection = field(default_factory=NetSection)
    detect: DetectSection = field(default_factory=DetectSection)
    sessions: SessionSection = field(default_factory=SessionSection)
    eval: EvalSection = field(default_factory=EvalSection)
    synth: SynthSection = field(default_factory=SynthSection)
    run: RunSection = field(default_factory=RunSection)

    def __post_init__(self):
        if self.detect.time_anchor not in ("center", "end"):
            raise ConfigError("detect.time_anchor must be 'center' or 'end'")
        if self.eval.puff_scope not in ("sessions", "full"):
            raise ConfigError("eval.puff_scope must be 'sessions' or 'full'")
        try:
            self.architecture()
            self.train_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def architecture(self) -> Architecture:
        return Architecture(dropout_rate=self.net.dropout_rate,
                            lstm_inner_activation=self.net.lstm_inner_activation)

    def train_config(self, seed: int | None = None) -> TrainConfig:
        n = self.net
        return TrainConfig(n.learning_rate, n.batch_size, n.epochs, n.rmsprop_decay,
                           n.rmsprop_epsilon, self.run.seed if seed is None else seed)

    def synth_config(self) -> SynthConfig:
        s = self.synth
        return SynthConfig(
            n_subjects=s.n_subjects, sessions_per_subject=s.sessions_per_subject,
            puffs_per_session=(s.puffs_min, s.puffs_max), day_duration_s=s.day_duration_s,
            noise_amplitude=s.noise_amplitude, gesture_amplitude=s.gesture_amplitude,
            left_wrist_fraction=s.left_wrist_fraction, fs=self.signal.fs, seed=self.run.seed,
        )

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.as_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        for sec in dataclasses.fields(self):
            values = getattr(self, sec.name)
            parser[sec.name] = {
                f.name: _format(getattr(values, f.name)) for f in dataclasses.fields(values)
            }
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_text(self.to_ini())

    @classmethod
    def from_ini(cls, text: str) -> "PipelineConfig":
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
        sections = {f.name: f for f in dataclasses.fields(cls)}
        kwargs = {}
        for name in parser.sections():
            if name not in sections:
                raise ConfigError(f"unknown config section [{name}]")
            sec_cls = sections[name].default_factory
            hints = typing.get_type_hints(sec_cls)
            known = {f.name for f in dataclasses.fields(sec_cls)}
            values = {}
            for key, raw in parser[name].items():
                if key not in known:
                    raise ConfigError(f"unknown key {key!r} in [{name}]")
                values[key] = _parse(raw, hints[key], f"{name}.{key}")
            try:
                kwargs[name] = sec_cls(**values)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[{name}]: {exc}") from exc
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_ini(text)


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _parse(raw: str, hint, key: str):
    raw = raw.strip()
    optional = typing.get_origin(hint) is typing.Union and type(None) in typing.get_args(hint)
    if optional:
        if raw.lower() in ("", "none", "off"):
            return None
        hint = next(a for a in typing.get_args(hint) if a is not type(None))
    try:
        if hint is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if hint is int:
            return int(raw)
        if hint is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot read {raw!r} as {getattr(hint, '__name__', hint)}") from exc
