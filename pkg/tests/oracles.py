"""Independent reference implementations used to derive expected test values.

Everything here is deliberately naive (enumeration, finite differences,
two-pass statistics, quadrature projection) and shares no code path with the
library internals it checks.
"""

import itertools
import math

import numpy as np


def collapse_path(path):
    """Reference collapse: merge adjacent repeats, drop blanks (id 0)."""
    out = []
    prev = None
    for p in path:
        if p != prev and p != 0:
            out.append(p)
        prev = p
    return tuple(out)


def brute_force_ctc_loss(logp, target):
    """-log sum over all alignment paths that collapse to target."""
    logp = np.asarray(logp, dtype=np.float64)
    frames, vocab_size = logp.shape
    target = tuple(int(t) for t in target)
    masses = []
    for path in itertools.product(range(vocab_size), repeat=frames):
        if collapse_path(path) == target:
            masses.append(sum(logp[t, c] for t, c in enumerate(path)))
    if not masses:
        return math.inf
    return -float(logsumexp_list(masses))


def brute_force_prefix_masses(logp):
    """Total log-mass per collapsed sequence over all alignment paths."""
    logp = np.asarray(logp, dtype=np.float64)
    frames, vocab_size = logp.shape
    masses = {}
    for path in itertools.product(range(vocab_size), repeat=frames):
        seq = collapse_path(path)
        mass = sum(logp[t, c] for t, c in enumerate(path))
        if seq in masses:
            masses[seq] = logaddexp2_scalar(masses[seq], mass)
        else:
            masses[seq] = mass
    return masses


def logaddexp2_scalar(a, b):
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    hi, lo = (a, b) if a >= b else (b, a)
    return hi + math.log1p(math.exp(lo - hi))


def logsumexp_list(values):
    total = -math.inf
    for v in values:
        total = logaddexp2_scalar(total, v)
    return total


def fd_grad(fn, x, h=1e-6):
    """Central finite differences of a scalar function of an array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        plus = x.copy()
        plus[idx] += h
        minus = x.copy()
        minus[idx] -= h
        grad[idx] = (fn(plus) - fn(minus)) / (2.0 * h)
        it.iternext()
    return grad


def brute_force_edit_distance(ref, hyp):
    """Plain recursion over the edit-distance definition."""
    ref = tuple(ref)
    hyp = tuple(hyp)
    if not ref:
        return len(hyp)
    if not hyp:
        return len(ref)
    same = 0 if ref[-1] == hyp[-1] else 1
    return min(brute_force_edit_distance(ref[:-1], hyp[:-1]) + same,
               brute_force_edit_distance(ref[:-1], hyp) + 1,
               brute_force_edit_distance(ref, hyp[:-1]) + 1)


def two_pass_stats(arrays):
    """Independent pooled mean / population std."""
    flat = np.concatenate([np.asarray(a, dtype=np.float64) for a in arrays], axis=0)
    n = flat.shape[0]
    mean = flat.sum(axis=0) / n
    var = ((flat - mean) ** 2).sum(axis=0) / n
    return mean, np.sqrt(var)


def sinusoid_gain(apply_fn, freq_hz, sample_rate_hz, duration_s, settle_s):
    """Steady-state gain of a filter measured by quadrature projection.

    Feeds a unit sinusoid (a constant for freq 0), discards the settling
    transient, and projects the tail onto the quadrature pair at the probe
    frequency; for DC the tail mean is the amplitude.
    """
    n = int(duration_s * sample_rate_hz)
    t = np.arange(n) / sample_rate_hz
    if freq_hz == 0.0:
        x = np.ones(n)
    else:
        x = np.sin(2.0 * np.pi * freq_hz * t)
    y = apply_fn(x)
    keep = slice(int(settle_s * sample_rate_hz), n)
    if freq_hz == 0.0:
        return float(np.abs(y[keep].mean()))
    s = np.sin(2.0 * np.pi * freq_hz * t[keep])
    c = np.cos(2.0 * np.pi * freq_hz * t[keep])
    span = len(t[keep])
    a = 2.0 * float(np.dot(y[keep], s)) / span
    b = 2.0 * float(np.dot(y[keep], c)) / span
    return math.hypot(a, b)


def adamw_reference(theta, grads, lr, beta1=0.9, beta2=0.98, eps=1e-8,
                    weight_decay=0.01):
    """Scalar AdamW trace following the decoupled-decay formulas verbatim."""
    m = 0.0
    v = 0.0
    history = []
    for step, g in enumerate(grads, start=1):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** step)
        v_hat = v / (1.0 - beta2 ** step)
        theta = theta - lr * (m_hat / (math.sqrt(v_hat) + eps) + weight_decay * theta)
        history.append(theta)
    return history


def bigram_kn_reference(corpus, discount):
    """Independent interpolated-KN bigram estimator (no padding, fixed D).

    Returns a dict (context_token, token) -> probability using the direct
    formula: discounted relative frequency plus backoff-weighted continuation
    unigram.
    """
    from collections import Counter

    bigrams = Counter()
    for seq in corpus:
        for u, w in zip(seq, seq[1:]):
            bigrams[(u, w)] += 1
    continuation = Counter(w for (_, w) in bigrams)
    total_types = len(bigrams)
    context_total = Counter()
    context_types = Counter()
    for (u, w), c in bigrams.items():
        context_total[u] += c
        context_types[u] += 1

    probs = {}
    for (u, w), c in bigrams.items():
        gamma = discount * context_types[u] / context_total[u]
        p_cont = continuation[w] / total_types
        probs[(u, w)] = max(c - discount, 0.0) / context_total[u] + gamma * p_cont
    return probs


def enumerate_blank_free_sequences(vocab_size, max_len):
    """All sequences over non-blank ids with length 0..max_len."""
    out = [()]
    for length in range(1, max_len + 1):
        out.extend(itertools.product(range(1, vocab_size), repeat=length))
    return out
