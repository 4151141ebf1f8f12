"""Conv-Pool-Conv-Pool-Conv-LSTM-FC puff classifier written directly in numpy.

Everything is computed in float64. Models are serialized in float32.

Tensor layouts
--------------
conv{k}.w   (filters, kernel, in_channels)
conv{k}.b   (filters,)
lstm.w      (input_dim, 4 * units)   gate order: input, forget, candidate, output
lstm.u      (units, 4 * units)
lstm.b      (4 * units,)
fc.w        (units,)
fc.b        (1,)
"""

from __future__ import annotations

import logging
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

log = logging.getLogger(__name__)

PROB_CLIP = 1e-7
MAGIC = b"PUFF"
FORMAT_VERSION = 1
_ACTIVATIONS = ("tanh", "sigmoid")


@dataclass(frozen=True)
class Architecture:
    in_channels: int = 6
    conv_filters: tuple[int, int, int] = (32, 64, 128)
    kernel_sizes: tuple[int, int, int] = (5, 3, 3)
    pool: int = 2
    lstm_units: int = 128
    dropout_rate: float = 0.5
    lstm_inner_activation: str = "tanh"

    def __post_init__(self):
        if len(self.conv_filters) != 3 or len(self.kernel_sizes) != 3:
            raise ValueError("the layer sequence has exactly three convolutions")
        if self.lstm_inner_activation not in _ACTIVATIONS:
            raise ValueError(f"lstm_inner_activation must be one of {_ACTIVATIONS}")
        if not 0 <= self.dropout_rate < 1:
            raise ValueError("dropout_rate must lie in [0, 1)")

    @property
    def manifest(self) -> str:
        (f1, f2, f3), (k1, k2, k3), p = self.conv_filters, self.kernel_sizes, self.pool
        return (f"Conv({f1}×{k1})-Pool({p})-Conv({f2}×{k2})-Pool({p})-Conv({f3}×{k3})"
                f"-LSTM({self.lstm_units})-FC(1)")

    @classmethod
    def from_manifest(cls, manifest: str, **kwargs) -> "Architecture":
        m = re.fullmatch(
            r"Conv\((\d+)×(\d+)\)-Pool\((\d+)\)-Conv\((\d+)×(\d+)\)-Pool\((\d+)\)"
            r"-Conv\((\d+)×(\d+)\)-LSTM\((\d+)\)-FC\(1\)",
            manifest,
        )
        if m is None or m.group(3) != m.group(6):
            raise ValueError(f"unrecognized architecture manifest {manifest!r}")
        g = [int(x) for x in m.groups()]
        return cls(conv_filters=(g[0], g[3], g[6]), kernel_sizes=(g[1], g[4], g[7]),
                   pool=g[2], lstm_units=g[8], **kwargs)

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        c = self.in_channels
        for i, (f, k) in enumerate(zip(self.conv_filters, self.kernel_sizes), start=1):
            shapes[f"conv{i}.w"] = (f, k, c)
            shapes[f"conv{i}.b"] = (f,)
            c = f
        h = self.lstm_units
        shapes["lstm.w"] = (c, 4 * h)
        shapes["lstm.u"] = (h, 4 * h)
        shapes["lstm.b"] = (4 * h,)
        shapes["fc.w"] = (h,)
        shapes["fc.b"] = (1,)
        return shapes

    def length_trace(self, input_length: int) -> list[int]:
        """Time length after each conv/pool stage: valid convs, floor pooling."""
        lengths = [input_length]
        n = input_length
        for i, k in enumerate(self.kernel_sizes):
            n = n - k + 1
            lengths.append(n)
            if i < 2:
                n = n // self.pool
                lengths.append(n)
        if n < 1:
            raise ValueError(f"input length {input_length} is too short for this architecture")
        return lengths


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 10
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not (self.learning_rate > 0 and self.batch_size > 0 and self.epochs >= 1
                and 0 < self.rmsprop_decay < 1 and self.rmsprop_epsilon > 0):
            raise ValueError(f"invalid training configuration {self}")


@dataclass
class PuffModel:
    arch: Architecture
    params: dict[str, np.ndarray]
    history: list[float] = field(default_factory=list)

    def __post_init__(self):
        shapes = self.arch.param_shapes()
        if set(shapes) != set(self.params):
            raise ValueError("parameter names do not match the architecture")
        for name, shape in shapes.items():
            if self.params[name].shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {self.params[name].shape}")

    @property
    def manifest(self) -> str:
        return self.arch.manifest

    def copy(self) -> "PuffModel":
        return PuffModel(self.arch, {k: v.copy() for k, v in self.params.items()},
                         list(self.history))

    def to_float32_precision(self) -> "PuffModel":
        """Round every parameter through float32, matching a save/load round trip."""
        params = {k: v.astype(np.float32).astype(np.float64) for k, v in self.params.items()}
        return PuffModel(self.arch, params, list(self.history))

    def predict(self, data, batch_size: int = 256) -> np.ndarray:
        """Inference-mode probabilities for an ``(N, L, C)`` array, in chunks."""
        data = np.asarray(data)
        out = np.empty(data.shape[0])
        for i in range(0, data.shape[0], batch_size):
            out[i:i + batch_size] = forward(self, data[i:i + batch_size], training=False)
        return out


def zero_model(arch: Architecture | None = None) -> PuffModel:
    arch = arch or Architecture()
    return PuffModel(arch, {k: np.zeros(s) for k, s in arch.param_shapes().items()})


def init_model(arch: Architecture | None = None, rng: np.random.Generator | None = None) -> PuffModel:
    """Glorot-uniform weights, zero biases, forget-gate bias of one."""
    arch = arch or Architecture()
    rng = rng if rng is not None else np.random.default_rng(0)
    params = {}
    for name, shape in arch.param_shapes().items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
            continue
        if name.startswith("conv"):
            f, k, c = shape
            fan_in, fan_out = k * c, k * f
        elif name == "fc.w":
            fan_in, fan_out = shape[0], 1
        else:
            fan_in, fan_out = shape
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[name] = rng.uniform(-limit, limit, size=shape)
    h = arch.lstm_units
    params["lstm.b"][h:2 * h] = 1.0
    return PuffModel(arch, params)


# ---------------------------------------------------------------- forward

def _act(name: str, x, out=None):
    return np.tanh(x, out=out) if name == "tanh" else expit(x, out=out)


def _act_grad(name: str, y):
    """Derivative expressed through the activation's output ``y``."""
    return 1.0 - y * y if name == "tanh" else y * (1.0 - y)


def _conv_forward(x, w, b):
    f, k, c = w.shape
    view = sliding_window_view(x, k, axis=1).transpose(0, 1, 3, 2)  # (B, Lo, k, C)
    bsz, lo = view.shape[:2]
    cols = view.reshape(bsz * lo, k * c)
    z = (cols @ w.reshape(f, k * c).T + b).reshape(bsz, lo, f)
    return z, cols


def _conv_backward(dz, cols, w, in_length):
    f, k, c = w.shape
    bsz, lo, _ = dz.shape
    dz2 = dz.reshape(-1, f)
    dw = (dz2.T @ cols).reshape(f, k, c)
    db = dz2.sum(axis=0)
    dcols = (dz2 @ w.reshape(f, k * c)).reshape(bsz, lo, k, c)
    dx = np.zeros((bsz, in_length, c))
    for j in range(k):
        dx[:, j:j + lo, :] += dcols[:, :, j, :]
    return dx, dw, db


def _pool_forward(x, p):
    bsz, n, c = x.shape
    lo = n // p
    blocks = x[:, :lo * p, :].reshape(bsz, lo, p, c)
    arg = blocks.argmax(axis=2)
    return np.take_along_axis(blocks, arg[:, :, None, :], axis=2)[:, :, 0, :], arg


def _pool_backward(dy, arg, p, in_length):
    bsz, lo, c = dy.shape
    blocks = np.zeros((bsz, lo, p, c))
    np.put_along_axis(blocks, arg[:, :, None, :], dy[:, :, None, :], axis=2)
    dx = np.zeros((bsz, in_length, c))
    dx[:, :lo * p, :] = blocks.reshape(bsz, lo * p, c)
    return dx


def dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    """Inverted-dropout mask: kept units are scaled by ``1 / (1 - rate)``."""
    if rate == 0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def forward_cached(model: PuffModel, batch, mask: np.ndarray | None = None):
    """Forward pass keeping every intermediate needed by :func:`backward`.

    ``mask`` multiplies the final LSTM state before the dense layer; pass
    ``None`` for inference.
    """
    arch, prm = model.arch, model.params
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != arch.in_channels:
        raise ValueError(f"expected batch of shape (B, L, {arch.in_channels}), got {x.shape}")
    arch.length_trace(x.shape[1])

    cache = {"input_length": x.shape[1], "convs": []}
    for i in range(3):
        w, b = prm[f"conv{i + 1}.w"], prm[f"conv{i + 1}.b"]
        in_len = x.shape[1]
        z, cols = _conv_forward(x, w, b)
        a = np.maximum(z, 0.0)
        entry = {"cols": cols, "z": z, "in_length": in_len}
        if i < 2:
            pre_pool_len = a.shape[1]
            a, arg = _pool_forward(a, arch.pool)
            entry.update(arg=arg, pre_pool_len=pre_pool_len)
        cache["convs"].append(entry)
        x = a

    seq = np.ascontiguousarray(x.transpose(1, 0, 2))  # time-major (T, B, D)
    steps, bsz, _ = seq.shape
    hdim = arch.lstm_units
    inner = arch.lstm_inner_activation
    u = prm["lstm.u"]
    xw = seq @ prm["lstm.w"] + prm["lstm.b"]
    gates = np.empty((steps, bsz, 4 * hdim))
    cells = np.zeros((steps + 1, bsz, hdim))
    hiddens = np.zeros((steps + 1, bsz, hdim))
    cell_act = np.empty((steps, bsz, hdim))
    for t in range(steps):
        g = gates[t]
        np.matmul(hiddens[t], u, out=g)
        g += xw[t]
        expit(g[:, :2 * hdim], out=g[:, :2 * hdim])
        _act(inner, g[:, 2 * hdim:3 * hdim], out=g[:, 2 * hdim:3 * hdim])
        expit(g[:, 3 * hdim:], out=g[:, 3 * hdim:])
        c = cells[t + 1]
        np.multiply(g[:, hdim:2 * hdim], cells[t], out=c)
        c += g[:, :hdim] * g[:, 2 * hdim:3 * hdim]
        _act(inner, c, out=cell_act[t])
        np.multiply(g[:, 3 * hdim:], cell_act[t], out=hiddens[t + 1])

    h_last = hiddens[-1]
    hd = h_last if mask is None else h_last * mask
    logit = hd @ prm["fc.w"] + prm["fc.b"][0]
    prob = expit(logit)
    cache.update(seq=seq, gates=gates, cells=cells, hiddens=hiddens, cell_act=cell_act,
                 mask=mask, hd=hd, prob=prob)
    return prob, cache


def forward(model: PuffModel, batch, training: bool = False,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Puff probabilities for a ``(B, L, C)`` batch.

    Dropout is active only when ``training`` is set, in which case ``rng``
    supplies the mask.
    """
    mask = None
    if training and model.arch.dropout_rate > 0:
        if rng is None:
            raise ValueError("training-mode forward needs a random generator for dropout")
        mask = dropout_mask(rng, (np.shape(batch)[0], model.arch.lstm_units), model.arch.dropout_rate)
    prob, _ = forward_cached(model, batch, mask)
    return prob


def to_binary(labels) -> np.ndarray:
    """Map +1/-1 labels to 1/0 targets."""
    return (np.asarray(labels) > 0).astype(np.float64)


def loss_bce(prob, label):
    """Binary cross-entropy of a probability against a +1/-1 label."""
    p = np.clip(prob, PROB_CLIP, 1.0 - PROB_CLIP)
    y = to_binary(label)
    out = -(y * np.log(p) + (1.0 - y) * np.log1p(-p))
    return float(out) if np.ndim(out) == 0 else out


def backward(model: PuffModel, cache: dict, labels) -> dict[str, np.ndarray]:
    """Gradients of the batch-mean BCE with respect to every parameter."""
    arch, prm = model.arch, model.params
    hdim = arch.lstm_units
    inner = arch.lstm_inner_activation
    y = to_binary(labels)
    prob = cache["prob"]
    bsz = prob.shape[0]
    grads: dict[str, np.ndarray] = {}

    dlogit = (prob - y) / bsz
    grads["fc.w"] = cache["hd"].T @ dlogit
    grads["fc.b"] = np.array([dlogit.sum()])
    dh = np.outer(dlogit, prm["fc.w"])
    if cache["mask"] is not None:
        dh = dh * cache["mask"]

    gates, cells, hiddens, cell_act = cache["gates"], cache["cells"], cache["hiddens"], cache["cell_act"]
    steps = gates.shape[0]
    u_t = prm["lstm.u"].T
    # local derivatives of every gate w.r.t. its pre-activation, for all steps at once
    slope = gates * (1.0 - gates)
    slope[:, :, 2 * hdim:3 * hdim] = _act_grad(inner, gates[:, :, 2 * hdim:3 * hdim])
    # pair each gate slope with the factor it multiplies in the cell update
    slope[:, :, :hdim] *= gates[:, :, 2 * hdim:3 * hdim]
    slope[:, :, hdim:2 * hdim] *= cells[:-1]
    slope[:, :, 2 * hdim:3 * hdim] *= gates[:, :, :hdim]
    slope[:, :, 3 * hdim:] *= cell_act
    out_slope = gates[:, :, 3 * hdim:] * _act_grad(inner, cell_act)
    dz = np.empty_like(gates)
    dc = np.zeros((bsz, hdim))
    for t in reversed(range(steps)):
        dc += dh * out_slope[t]
        d = dz[t]
        np.multiply(slope[t, :, :3 * hdim], np.tile(dc, 3), out=d[:, :3 * hdim])
        np.multiply(slope[t, :, 3 * hdim:], dh, out=d[:, 3 * hdim:])
        dc *= gates[t, :, hdim:2 * hdim]
        dh = d @ u_t

    seq = cache["seq"]
    dz2 = dz.reshape(-1, 4 * hdim)
    grads["lstm.u"] = hiddens[:-1].reshape(-1, hdim).T @ dz2
    grads["lstm.w"] = seq.reshape(-1, seq.shape[2]).T @ dz2
    grads["lstm.b"] = dz2.sum(axis=0)
    dx = (dz @ prm["lstm.w"].T).transpose(1, 0, 2)

    for i in reversed(range(3)):
        entry = cache["convs"][i]
        if i < 2:
            dx = _pool_backward(dx, entry["arg"], arch.pool, entry["pre_pool_len"])
        dzc = dx * (entry["z"] > 0)
        dx, dw, db = _conv_backward(dzc, entry["cols"], prm[f"conv{i + 1}.w"], entry["in_length"])
        grads[f"conv{i + 1}.w"] = dw
        grads[f"conv{i + 1}.b"] = db
    return grads


# ---------------------------------------------------------------- training

def rmsprop_step(params: dict, grads: dict, state: dict, config: TrainConfig) -> None:
    """In-place RMSProp: s <- rho*s + (1-rho)*g^2; p <- p - lr*g / (sqrt(s) + eps)."""
    rho, lr, eps = config.rmsprop_decay, config.learning_rate, config.rmsprop_epsilon
    for name, g in grads.items():
        s = state.setdefault(name, np.zeros_like(g))
        s *= rho
        s += (1.0 - rho) * g * g
        params[name] -= lr * g / (np.sqrt(s) + eps)


def train(data, labels, config: TrainConfig | None = None, arch: Architecture | None = None,
          model: PuffModel | None = None) -> PuffModel:
    """Fit the classifier with RMSProp on mean BCE.

    ``data`` is ``(N, L, C)`` (or a WindowSet, in which case ``labels`` may be
    ``None``). Shuffling, dropout masks and initialization all derive from
    ``config.seed``. The per-epoch mean training loss is kept in
    ``model.history``.
    """
    config = config or TrainConfig()
    if labels is None:
        data, labels = data.data, data.labels
    data = np.asarray(data)
    labels = np.asarray(labels)
    if data.shape[0] != labels.shape[0]:
        raise ValueError("data and labels differ in length")
    if not (np.any(labels > 0) and np.any(labels <= 0)):
        raise ValueError("training set needs at least one positive and one negative window")

    if model is None:
        model = init_model(arch, np.random.default_rng([config.seed, 1]))
    else:
        model = model.copy()
    rng = np.random.default_rng([config.seed, 2])
    state: dict[str, np.ndarray] = {}
    n = data.shape[0]
    rate = model.arch.dropout_rate
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb = data[idx].astype(np.float64)
            mask = dropout_mask(rng, (idx.size, model.arch.lstm_units), rate) if rate > 0 else None
            prob, cache = forward_cached(model, xb, mask)
            total += float(np.sum(loss_bce(prob, labels[idx])))
            rmsprop_step(model.params, backward(model, cache, labels[idx]), state, config)
        model.history.append(total / n)
        log.info("epoch %d/%d mean loss %.5f", epoch + 1, config.epochs, model.history[-1])
    for name, value in model.params.items():
        if not np.all(np.isfinite(value)):
            raise FloatingPointError(f"training diverged: {name} is not finite")
    return model


# ---------------------------------------------------------------- serialization

def save_model(model: PuffModel, path) -> None:
    """Write the binary model file.

    Layout (little endian): magic ``PUFF``, u16 version, u16 manifest length,
    UTF-8 manifest, u8 inner activation (0 tanh, 1 sigmoid), u8 input
    channels, f32 dropout rate, u16 tensor count, then per tensor: u16 name
    length, name, u8 rank, u32 dims, f32 values in C order.
    """
    arch = model.arch
    manifest = arch.manifest.encode("utf-8")
    out = bytearray(MAGIC)
    out += struct.pack("<HH", FORMAT_VERSION, len(manifest)) + manifest
    out += struct.pack("<BBf", _ACTIVATIONS.index(arch.lstm_inner_activation),
                       arch.in_channels, arch.dropout_rate)
    out += struct.pack("<H", len(model.params))
    for name in arch.param_shapes():
        value = model.params[name]
        key = name.encode("ascii")
        out += struct.pack("<H", len(key)) + key
        out += struct.pack(f"<B{value.ndim}I", value.ndim, *value.shape)
        out += np.ascontiguousarray(value, dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(out))


class ModelFormatError(ValueError):
    pass


def load_model(path) -> PuffModel:
    buf = Path(path).read_bytes()
    pos = 0

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise ModelFormatError("truncated model file")
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    def take_bytes(n):
        nonlocal pos
        if pos + n > len(buf):
            raise ModelFormatError("truncated model file")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    if take_bytes(4) != MAGIC:
        raise ModelFormatError("not a puff model file (bad magic)")
    version, mlen = take("<HH")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")
    manifest = take_bytes(mlen).decode("utf-8")
    act, channels, rate = take("<BBf")
    if act >= len(_ACTIVATIONS):
        raise ModelFormatError("bad activation code")
    try:
        arch = Architecture.from_manifest(manifest, in_channels=channels, dropout_rate=float(rate),
                                          lstm_inner_activation=_ACTIVATIONS[act])
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from exc
    expected = arch.param_shapes()
    (count,) = take("<H")
    if count != len(expected):
        raise ModelFormatError(f"expected {len(expected)} tensors, found {count}")
    params = {}
    for _ in range(count):
        (nlen,) = take("<H")
        name = take_bytes(nlen).decode("ascii")
        (rank,) = take("<B")
        dims = take(f"<{rank}I")
        if name not in expected or tuple(dims) != expected[name]:
            raise ModelFormatError(f"tensor {name} with shape {dims} disagrees with the manifest")
        size = int(np.prod(dims)) * 4
        params[name] = np.frombuffer(take_bytes(size), dtype="<f4").astype(np.float64).reshape(dims)
    if pos != len(buf):
        raise ModelFormatError("trailing bytes after the last tensor")
    if set(params) != set(expected):
        raise ModelFormatError("missing tensors")
    return PuffModel(arch, params)
