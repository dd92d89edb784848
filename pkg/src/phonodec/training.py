"""Standalone training-recipe components, each individually verifiable.

None of these drive an actual training loop here; they are the building
blocks (optimizer step, schedule, target smoothing, clipping, masking) with
exact contracts so they can be checked against scalar hand traces.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError


@dataclass
class AdamWState:
    """First/second moment accumulators plus the completed step count."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, theta) -> "AdamWState":
        theta = np.asarray(theta, dtype=np.float64)
        return cls(m=np.zeros_like(theta), v=np.zeros_like(theta), step=0)


def adamw_step(theta, grad, state: AdamWState, lr: float,
               beta1: float = 0.9, beta2: float = 0.98,
               eps: float = 1e-8, weight_decay: float = 0.01):
    """One decoupled-weight-decay Adam update; returns (theta', state').

    Bias correction is applied to both moments; the decay term multiplies the
    parameter directly (not the gradient), so a zero gradient still shrinks
    the weights when weight_decay > 0.
    """
    theta = np.asarray(theta, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if theta.shape != grad.shape or theta.shape != state.m.shape:
        raise ParameterError("theta, grad, and optimizer state shapes must agree")
    step = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** step)
    v_hat = v / (1.0 - beta2 ** step)
    update = m_hat / (np.sqrt(v_hat) + eps) + weight_decay * theta
    return theta - lr * update, AdamWState(m=m, v=v, step=step)


@dataclass
class SchedulerConfig:
    eta_max: float = 3e-4
    eta_min: float = 0.0
    warmup_epochs: float = 10.0
    total_epochs: float = 100.0

    def __post_init__(self):
        if not 0 <= self.warmup_epochs < self.total_epochs:
            raise ParameterError("need 0 <= warmup < total epochs")
        if self.eta_min > self.eta_max:
            raise ParameterError("eta_min must not exceed eta_max")


def cosine_lr(t: float, cfg: SchedulerConfig) -> float:
    """Linear warmup to eta_max, then cosine decay to eta_min at total_epochs.

    ``t`` is an epoch index and may be fractional; past total_epochs the rate
    stays at eta_min.
    """
    if t < 0:
        raise ParameterError("schedule step must be non-negative")
    if t < cfg.warmup_epochs:
        return cfg.eta_max * t / cfg.warmup_epochs
    if t >= cfg.total_epochs:
        return cfg.eta_min
    progress = (t - cfg.warmup_epochs) / (cfg.total_epochs - cfg.warmup_epochs)
    return cfg.eta_min + 0.5 * (cfg.eta_max - cfg.eta_min) * (1.0 + np.cos(np.pi * progress))


def label_smooth(target_id: int, vocab_size: int, eps: float = 0.1) -> np.ndarray:
    """Smoothed one-hot: 1-eps on the target, eps/(V-1) on every other class."""
    if not 0 <= target_id < vocab_size:
        raise ParameterError(f"target id {target_id} outside 0..{vocab_size - 1}")
    if not 0 <= eps < 1:
        raise ParameterError("smoothing eps must lie in [0, 1)")
    out = np.full(vocab_size, eps / (vocab_size - 1), dtype=np.float64)
    out[target_id] = 1.0 - eps
    return out


def clip_grad_norm(grads, max_norm: float = 1.0):
    """Scale all arrays by max_norm/norm when the global L2 norm exceeds it.

    Returns (clipped gradients, pre-clip total norm).
    """
    if max_norm <= 0:
        raise ParameterError("max_norm must be positive")
    arrays = [np.asarray(g, dtype=np.float64) for g in grads]
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in arrays)))
    if total > max_norm and total > 0:
        scale = max_norm / total
        arrays = [g * scale for g in arrays]
    return arrays, total


@dataclass
class AugmentPolicy:
    """SpecAugment-style masking policy for time x channel features."""

    n_time_masks: int = 3
    max_time_width: int = 100
    n_channel_masks: int = 2
    max_channel_width: int = 25
    seed: int = 0

    def __post_init__(self):
        if min(self.n_time_masks, self.max_time_width,
               self.n_channel_masks, self.max_channel_width) < 0:
            raise ParameterError("mask counts and widths must be non-negative")


def specaugment(features, policy: AugmentPolicy) -> np.ndarray:
    """Zero out random contiguous time spans and channel groups.

    Widths are drawn uniformly from {0..max} (a mask may be empty) and starts
    uniformly over the valid range, from a generator seeded by the policy, so
    identical policies give identical masks.
    """
    x = np.array(features, dtype=np.float64, copy=True)
    frames, channels = x.shape
    if policy.max_time_width > frames or policy.max_channel_width > channels:
        raise ParameterError("mask widths exceed the feature dimensions")
    rng = np.random.default_rng(policy.seed)
    for _ in range(policy.n_time_masks):
        width = int(rng.integers(0, policy.max_time_width + 1))
        if width:
            start = int(rng.integers(0, frames - width + 1))
            x[start:start + width, :] = 0.0
    for _ in range(policy.n_channel_masks):
        width = int(rng.integers(0, policy.max_channel_width + 1))
        if width:
            start = int(rng.integers(0, channels - width + 1))
            x[:, start:start + width] = 0.0
    return x
