"""Gumbel-noise reparameterization for differentiable Bernoulli sampling.

A Bernoulli with success log-odds ``l`` is sampled as
``sigmoid((l + e1 - e2) / temperature)`` with ``e1, e2 ~ Gumbel(0, 1)``,
which coincides with the first coordinate of a two-class Gumbel-Softmax
on ``[log p, log(1 - p)]`` under the same noise pair. The soft sample is
differentiable in the log-odds; the hard sample thresholds at 0.5; the
straight-through estimator forwards the hard value and backpropagates the
soft one. Because ``e1 - e2`` is Logistic(0, 1), the hard sample is 1 with
probability exactly ``sigmoid(l)`` at any temperature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tz
from .rng import Rng
from .tensor import Tensor

__all__ = [
    "GumbelSample",
    "sample_gumbel",
    "gumbel_sigmoid",
    "gumbel_sigmoid_with_noise",
    "gumbel_softmax",
    "gumbel_softmax_with_noise",
    "straight_through",
]

# Pre-activations beyond +-36 round sigmoid to exactly 0 or 1 in float64;
# clamping there keeps soft samples strictly inside (0, 1).
_SATURATION_BOUND = 36.0


@dataclass
class GumbelSample:
    """Paired soft/hard sample of a matrix of independent Bernoullis."""

    soft: Tensor  # strictly inside (0, 1); differentiable in the logits
    hard: Tensor  # {0, 1}; 1 exactly where soft > 0.5 (ties resolve to 0)
    temperature: float


def sample_gumbel(rows: int, cols: int, rng: Rng) -> Tensor:
    """I.i.d. Gumbel(0, 1) draws via -log(-log(u)), u clamped off {0, 1}."""
    u = np.clip(rng.uniform(rows, cols), 1e-12, 1.0 - 1e-12)
    return Tensor(-np.log(-np.log(u)), _copy=False)


def _check_temperature(temperature: float) -> float:
    temperature = float(temperature)
    if not temperature > 0.0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    return temperature


def gumbel_sigmoid_with_noise(logits: Tensor, noise1: Tensor, noise2: Tensor,
                              temperature: float = 1.0) -> GumbelSample:
    """Gumbel-Sigmoid with caller-supplied noise (shared-noise tests, replay)."""
    temperature = _check_temperature(temperature)
    shifted = tz.add(logits, tz.sub(noise1, noise2))
    pre = tz.clip(tz.scale(shifted, 1.0 / temperature),
                  -_SATURATION_BOUND, _SATURATION_BOUND)
    soft = tz.sigmoid(pre)
    hard = Tensor((soft.data > 0.5).astype(np.float64), _copy=False)
    return GumbelSample(soft=soft, hard=hard, temperature=temperature)


def gumbel_sigmoid(logits: Tensor, temperature: float, rng: Rng) -> GumbelSample:
    """Sample every entry's Bernoulli given log-odds ``logits``.

    P(hard = 1) equals sigmoid(logits) exactly; the gradient of ``soft``
    with respect to ``logits`` flows on the active tape.
    """
    e1 = sample_gumbel(logits.rows, logits.cols, rng)
    e2 = sample_gumbel(logits.rows, logits.cols, rng)
    return gumbel_sigmoid_with_noise(logits, e1, e2, temperature)


def gumbel_softmax_with_noise(logits: Tensor, noise: Tensor,
                              temperature: float = 1.0) -> Tensor:
    temperature = _check_temperature(temperature)
    return tz.softmax_rows(tz.scale(tz.add(logits, noise), 1.0 / temperature))


def gumbel_softmax(logits: Tensor, temperature: float, rng: Rng) -> Tensor:
    """Row-wise relaxed categorical sample; the k >= 2 equivalence oracle."""
    if logits.cols < 2:
        raise ValueError(f"gumbel_softmax needs k >= 2 classes, got {logits.cols}")
    noise = sample_gumbel(logits.rows, logits.cols, rng)
    return gumbel_softmax_with_noise(logits, noise, temperature)


def straight_through(sample: GumbelSample) -> Tensor:
    """Hard values forward, soft gradient backward."""
    return tz.straight_through(sample.soft, sample.hard)
