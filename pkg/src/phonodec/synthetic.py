"""Synthetic mini-datasets for demos and end-to-end checks.

Raw trials are built from planted per-class channel templates plus noise so
the whole preprocess -> forward -> decode -> eval chain can run at desk
scale.  Emission matrices sampled around a known sequence ("softened
one-hots") let decoder comparisons use a controlled error process whose true
prior is an n-gram model.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError
from .lm import EOS_ID, NGramModel, context_distribution
from .preprocessing import RawRecording


def make_template_bank(vocab_size: int, channels: int, rng) -> np.ndarray:
    """One random channel pattern per class id (row 0, the blank, is rest)."""
    bank = rng.normal(0.0, 1.0, size=(vocab_size, channels))
    bank[0] = 0.0
    return bank


def make_raw_trial(seq, templates, rng, sample_rate_hz: float = 1000.0,
                   samples_per_token: int = 120, noise_std: float = 0.5,
                   session: str = "synth", trial_id: str = "trial") -> RawRecording:
    """Raw channel x time samples: token templates held over spans + noise."""
    channels = templates.shape[1]
    spans = [0] + list(seq) + [0]  # rest padding around the utterance
    total = samples_per_token * len(spans)
    samples = rng.normal(0.0, noise_std, size=(channels, total))
    for i, token in enumerate(spans):
        lo = i * samples_per_token
        samples[:, lo:lo + samples_per_token] += templates[token][:, None]
    return RawRecording(samples=samples, sample_rate_hz=sample_rate_hz,
                        session=session, trial_id=trial_id)


def make_synthetic_dataset(n_trials: int, vocab_size: int, seed: int = 0,
                           channels: int = 16, min_len: int = 3,
                           max_len: int = 8, **trial_kwargs):
    """Random reference sequences and their planted-template raw trials."""
    rng = np.random.default_rng(seed)
    templates = make_template_bank(vocab_size, channels, rng)
    trials, refs = [], []
    for i in range(n_trials):
        length = int(rng.integers(min_len, max_len + 1))
        seq = [int(rng.integers(1, vocab_size)) for _ in range(length)]
        trials.append(make_raw_trial(seq, templates, rng,
                                     trial_id=f"trial_{i:04d}", **trial_kwargs))
        refs.append(seq)
    return trials, refs


def sample_from_lm(model: NGramModel, rng, max_len: int = 20) -> list:
    """Draw one sequence from the model's own distribution (EOS-terminated)."""
    history = max(model.order - 1, 0)
    context: tuple = ()
    if model.sentence_bounds:
        from .lm import BOS_ID
        context = (BOS_ID,)
    seq: list = []
    while len(seq) < max_len:
        dist = context_distribution(model, context)
        tokens = sorted(dist)
        probs = np.array([dist[t] for t in tokens], dtype=np.float64)
        total = probs.sum()
        if total <= 0:
            break
        choice = tokens[int(rng.choice(len(tokens), p=probs / total))]
        if choice == EOS_ID:
            break
        if choice == 0:
            continue  # the blank never appears in phoneme text
        seq.append(int(choice))
        context = (context + (choice,))[-history:] if history else ()
    return seq


def soft_emissions(seq, vocab_size: int, rng, flip_prob: float = 0.3,
                   correct_mass: float = 0.75, flipped_mass: float = 0.5,
                   blank_mass: float = 0.85) -> np.ndarray:
    """Softened one-hot log-probabilities for a known sequence.

    Each token gets one emission frame followed by one blank-dominant frame.
    With probability ``flip_prob`` a frame's mass peak moves to a random
    wrong class, so frame-local decoding makes errors that a sequence prior
    can correct.
    """
    if vocab_size < 3:
        raise ParameterError("soft emissions need at least two non-blank classes")
    rows = []

    def frame(peaks: dict) -> np.ndarray:
        rest = 1.0 - sum(peaks.values())
        others = vocab_size - len(peaks)
        p = np.full(vocab_size, rest / others, dtype=np.float64)
        for cls, mass in peaks.items():
            p[cls] = mass
        return np.log(p)

    for token in seq:
        if rng.random() < flip_prob:
            wrong = int(rng.integers(1, vocab_size))
            while wrong == token:
                wrong = int(rng.integers(1, vocab_size))
            rows.append(frame({wrong: flipped_mass, token: flipped_mass * 0.7}))
        else:
            rows.append(frame({token: correct_mass}))
        rows.append(frame({0: blank_mass}))
    return np.asarray(rows)
