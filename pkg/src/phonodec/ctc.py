"""CTC loss, gradient, and greedy decoding over per-frame log-probabilities.

Conventions used throughout:

* class 0 is the blank; targets are blank-free id sequences,
* the extended target interleaves blanks: ``[b, y1, b, ..., yU, b]``
  (length ``2U + 1``),
* ``alpha[t, s]`` is the log-mass of prefixes ending in extended state ``s``
  at frame ``t`` including the emission at ``t``; ``beta[t, s]`` is the
  log-mass of completions after frame ``t`` excluding that emission, so
  ``sum_s exp(alpha[t, s] + beta[t, s])`` equals the sequence probability at
  every ``t``.

Everything is computed in the log domain with stable log-sum-exp; no
probability-domain rescaling is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, logsumexp

from .errors import DataError

BLANK = 0


def collapse(path) -> list[int]:
    """Apply the CTC collapse operator: merge repeats, then drop blanks."""
    out = []
    prev = None
    for p in path:
        if p != prev:
            if p != BLANK:
                out.append(int(p))
            prev = p
    return out


def min_frames(target) -> int:
    """Minimum number of frames that can emit ``target``.

    Adjacent repeats need a separating blank, so the minimum is the target
    length plus the number of adjacent equal pairs.
    """
    target = list(target)
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats


def _check_target(target, vocab_size: int) -> list[int]:
    ids = [int(t) for t in target]
    for t in ids:
        if t == BLANK:
            raise DataError("CTC target must not contain the blank id 0")
        if not 0 <= t < vocab_size:
            raise DataError(f"target id {t} outside vocabulary of size {vocab_size}")
    return ids


def _extended(target) -> np.ndarray:
    ext = np.full(2 * len(target) + 1, BLANK, dtype=np.int64)
    ext[1::2] = target
    return ext


@dataclass
class CtcLattice:
    """Forward/backward variables over the extended-target lattice."""

    alpha: np.ndarray           # [frames, 2U+1]
    beta: np.ndarray            # [frames, 2U+1]
    extended_target: np.ndarray
    loss: float

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.loss)


def _skip_allowed(ext: np.ndarray) -> np.ndarray:
    """Mask of states reachable from s-2: non-blank and different label."""
    allowed = np.zeros(len(ext), dtype=bool)
    if len(ext) >= 3:
        allowed[2:] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])
    return allowed


def ctc_lattice(logp, target) -> CtcLattice:
    """Run the full forward-backward recursion for ``target`` under ``logp``."""
    logp = np.asarray(logp, dtype=np.float64)
    frames, vocab_size = logp.shape
    ids = _check_target(target, vocab_size)
    ext = _extended(ids)
    n_states = len(ext)
    neg_inf = -np.inf

    alpha = np.full((frames, n_states), neg_inf)
    beta = np.full((frames, n_states), neg_inf)
    if min_frames(ids) > frames:
        return CtcLattice(alpha=alpha, beta=beta, extended_target=ext, loss=math.inf)

    skip = _skip_allowed(ext)
    emit = logp[:, ext]  # [frames, n_states]

    alpha[0, 0] = emit[0, 0]
    if n_states > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, frames):
        stay = alpha[t - 1]
        prev = np.full(n_states, neg_inf)
        prev[1:] = alpha[t - 1, :-1]
        jump = np.full(n_states, neg_inf)
        jump[2:] = np.where(skip[2:], alpha[t - 1, :-2], neg_inf)
        alpha[t] = logsumexp(np.stack([stay, prev, jump]), axis=0) + emit[t]

    tail = alpha[frames - 1, n_states - 1]
    if n_states > 1:
        tail = np.logaddexp(tail, alpha[frames - 1, n_states - 2])
    loss = -float(tail)

    beta[frames - 1, n_states - 1] = 0.0
    if n_states > 1:
        beta[frames - 1, n_states - 2] = 0.0
    for t in range(frames - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        stay = nxt
        succ = np.full(n_states, neg_inf)
        succ[:-1] = nxt[1:]
        jump = np.full(n_states, neg_inf)
        if n_states >= 3:
            jump[:-2] = np.where(skip[2:], nxt[2:], neg_inf)
        beta[t] = logsumexp(np.stack([stay, succ, jump]), axis=0)

    return CtcLattice(alpha=alpha, beta=beta, extended_target=ext, loss=loss)


def ctc_loss(logp, target) -> float:
    """Negative log probability that frames collapse to ``target``.

    Returns ``+inf`` for infeasible targets (more symbols, counting required
    separating blanks, than frames).
    """
    return ctc_lattice(logp, target).loss


def ctc_posteriors(logp, target) -> np.ndarray:
    """Per-frame occupancy posterior q[t, k] = P(path emits k at t | target)."""
    logp = np.asarray(logp, dtype=np.float64)
    lattice = ctc_lattice(logp, target)
    if not lattice.feasible:
        raise DataError("target is infeasible for the given frame count")
    gamma = np.exp(lattice.alpha + lattice.beta + lattice.loss)  # [T, S]
    q = np.zeros_like(logp)
    np.add.at(q, (slice(None), lattice.extended_target), gamma)
    return q


def ctc_grad(logp, target) -> np.ndarray:
    """Gradient of the CTC loss w.r.t. unnormalized per-frame log scores.

    The log-softmax normalization is folded in, giving the classic
    ``softmax(scores) - occupancy`` form; for row-normalized input the rows of
    the gradient therefore sum to zero.  Matches central finite differences of
    ``ctc_loss(log_softmax(scores), target)``.
    """
    logp = np.asarray(logp, dtype=np.float64)
    normalized = log_softmax(logp, axis=1)
    q = ctc_posteriors(normalized, target)
    return np.exp(normalized) - q


def greedy_decode(logp) -> list[int]:
    """Frame-wise argmax (ties to the lowest id) followed by collapse."""
    logp = np.asarray(logp, dtype=np.float64)
    return collapse(np.argmax(logp, axis=1))


def greedy_path(logp) -> np.ndarray:
    """The raw per-frame argmax path before collapsing."""
    return np.argmax(np.asarray(logp, dtype=np.float64), axis=1)


def lattice_stats(frames: int, target_len: int) -> int:
    """Exact DP cell count ``frames * (2 * target_len + 1)``.

    Note this exceeds the naive ``frames * target_len`` estimate because the
    lattice interleaves a blank state around every target symbol.
    """
    if frames < 0 or target_len < 0:
        raise DataError("frame and target counts must be non-negative")
    return frames * (2 * target_len + 1)
