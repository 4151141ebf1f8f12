"""Finite-difference verification of the hand-written backward pass.

Central differences are exact up to O(h^2) only where the loss is smooth.
ReLU and max-pooling make it piecewise smooth, so a probe of size ``h`` that
straddles a kink (a ReLU input near zero, or two pooled values within ``h``
of each other) gives a meaningless reference. :func:`kink_distance` measures
how close a draw is to such a kink; :func:`smooth_cases` redraws inputs until
every kink is comfortably farther away than the perturbation can reach.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .net import (Architecture, PuffModel, backward, dropout_mask, forward_cached, init_model,
                  loss_bce)

MINI_ARCH = Architecture(conv_filters=(2, 4, 8), lstm_units=8)


class GradCheckResult(NamedTuple):
    max_rel_error: float
    per_param: dict
    n_checked: int


def mean_loss(model: PuffModel, batch, labels, mask=None) -> float:
    prob, _ = forward_cached(model, batch, mask)
    return float(np.mean(loss_bce(prob, labels)))


def kink_distance(model: PuffModel, batch) -> float:
    """Smallest |ReLU input| or pooled-pair gap over the whole forward pass."""
    _, cache = forward_cached(model, batch)
    gaps = []
    for i, entry in enumerate(cache["convs"]):
        z = entry["z"]
        gaps.append(np.min(np.abs(z)))
        if "arg" in entry:
            p = model.arch.pool
            a = np.maximum(z, 0.0)
            lo = a.shape[1] // p
            blocks = np.sort(a[:, :lo * p, :].reshape(a.shape[0], lo, p, a.shape[2]), axis=2)
            top, second = blocks[:, :, -1, :], blocks[:, :, -2, :]
            # a tie only matters where the winner is active
            live = top > 0
            if np.any(live):
                gaps.append(np.min((top - second)[live]))
    return float(min(gaps))


def relative_error(analytic, numeric, floor: float = 1e-6) -> np.ndarray:
    """Elementwise |a - n| / max(|a|, |n|, floor)."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def check_gradients(model: PuffModel, batch, labels, h: float = 1e-4, mask=None,
                    floor: float = 1e-6) -> GradCheckResult:
    """Compare :func:`backward` against central differences on every parameter entry."""
    _, cache = forward_cached(model, batch, mask)
    analytic = backward(model, cache, labels)
    per_param = {}
    count = 0
    for name, value in model.params.items():
        numeric = np.zeros_like(value)
        for idx in np.ndindex(value.shape):
            orig = value[idx]
            value[idx] = orig + h
            up = mean_loss(model, batch, labels, mask)
            value[idx] = orig - h
            down = mean_loss(model, batch, labels, mask)
            value[idx] = orig
            numeric[idx] = (up - down) / (2 * h)
        per_param[name] = float(np.max(relative_error(analytic[name], numeric, floor)))
        count += value.size
    return GradCheckResult(max(per_param.values()), per_param, count)


def _perturbed_model(arch: Architecture, rng: np.random.Generator) -> PuffModel:
    # Glorot draws plus noise so biases and the forget gate are not at their
    # initial values
    model = init_model(arch, rng)
    for v in model.params.values():
        v += rng.normal(0.0, 0.3, v.shape)
    return model


def smooth_cases(seed: int, n_models: int = 3, n_inputs: int = 3, batch_size: int = 3,
                 length: int = 20, arch: Architecture = MINI_ARCH, margin: float = 2e-3,
                 max_tries: int = 500):
    """Yield ``n_models * n_inputs`` (model, batch, labels, mask) cases.

    Each input batch is redrawn until every ReLU input and pooled-pair gap is
    at least ``margin`` from a kink and every probability lies in
    [0.02, 0.98]. A model for which no such input turns up is replaced.
    """
    rng = np.random.default_rng(seed)
    made = 0
    while made < n_models:
        model = _perturbed_model(arch, rng)
        cases = []
        for _ in range(max_tries):
            batch = rng.normal(size=(batch_size, length, arch.in_channels))
            prob, _ = forward_cached(model, batch)
            if np.any(prob < 0.02) or np.any(prob > 0.98) or kink_distance(model, batch) < margin:
                continue
            labels = np.where(rng.random(batch_size) < 0.5, 1, -1)
            mask = dropout_mask(rng, (batch_size, arch.lstm_units), arch.dropout_rate)
            cases.append((batch, labels, mask))
            if len(cases) == n_inputs:
                break
        if len(cases) < n_inputs:
            continue
        made += 1
        for batch, labels, mask in cases:
            yield model, batch, labels, mask
