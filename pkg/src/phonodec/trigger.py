"""Trigger-phoneme selection analytics.

A good trigger phoneme is detected reliably (high precision and recall) but
rare in natural speech (few false activations), captured by the composite
score P * R / (frequency + eps).  The Fitts'-law helper estimates gaze
pointing time for interface layout comparisons.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError


@dataclass
class FrequencyTable:
    """Relative frequency of each non-blank class (ids 1..V-1)."""

    freq: np.ndarray  # index 0 holds class id 1
    token_total: int

    def __post_init__(self):
        self.freq = np.asarray(self.freq, dtype=np.float64)
        if np.any(self.freq < 0):
            raise DataError("frequencies must be non-negative")
        if self.token_total > 0 and abs(self.freq.sum() - 1.0) > 1e-9:
            raise DataError("frequencies must sum to 1")


def phoneme_frequencies(corpus, num_classes: int) -> FrequencyTable:
    """Relative counts of non-blank ids over a corpus of id sequences."""
    counts = np.zeros(num_classes - 1, dtype=np.int64)
    total = 0
    for seq in corpus:
        for token in seq:
            token = int(token)
            if not 1 <= token < num_classes:
                raise DataError(f"token id {token} outside 1..{num_classes - 1}")
            counts[token - 1] += 1
            total += 1
    if total == 0:
        raise DataError("cannot compute frequencies of an empty corpus")
    return FrequencyTable(freq=counts / total, token_total=total)


def trigger_score(precision: float, recall: float, frequency: float,
                  eps: float = 0.001) -> float:
    """precision * recall / (frequency + eps)."""
    for name, value in (("precision", precision), ("recall", recall),
                        ("frequency", frequency)):
        if not 0.0 <= value <= 1.0:
            raise ParameterError(f"{name} must lie in [0, 1], got {value}")
    return precision * recall / (frequency + eps)


def rank_triggers(precision, recall, freq: FrequencyTable,
                  eps: float = 0.001) -> list:
    """Classes sorted by trigger score descending, ties by class id.

    Returns rows of (class_id, precision, recall, frequency, score) where
    class ids start at 1 (the blank has no score).
    """
    precision = np.asarray(precision, dtype=np.float64)
    recall = np.asarray(recall, dtype=np.float64)
    if not precision.shape == recall.shape == freq.freq.shape:
        raise ParameterError("precision, recall, and frequency sizes must agree")
    rows = []
    for idx in range(len(precision)):
        score = trigger_score(float(precision[idx]), float(recall[idx]),
                              float(freq.freq[idx]), eps)
        rows.append((idx + 1, float(precision[idx]), float(recall[idx]),
                     float(freq.freq[idx]), score))
    rows.sort(key=lambda r: (-r[4], r[0]))
    return rows


def fitts_pointing_time(a: float, b: float, distance: float, width: float) -> float:
    """Pointing time a + b * log2(distance / width + 1)."""
    if width <= 0:
        raise ParameterError("target width must be positive")
    if distance < 0:
        raise ParameterError("distance must be non-negative")
    return a + b * math.log2(distance / width + 1.0)


# ---------------------------------------------------------------------------
# CSV interfaces

def read_frequency_csv(path, vocab) -> FrequencyTable:
    """`symbol,freq` rows; missing symbols get frequency 0."""
    freq = np.zeros(vocab.size - 1, dtype=np.float64)
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].strip().lower() == "symbol":
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected `symbol,freq`")
            freq[vocab.id_of(row[0].strip()) - 1] = float(row[1])
    total = freq.sum()
    if total <= 0:
        raise DataError(f"{path}: frequencies sum to zero")
    return FrequencyTable(freq=freq / total, token_total=0)


def write_ranking_csv(path, vocab, rows) -> None:
    """`rank,symbol,precision,recall,frequency,score` in rank order."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "symbol", "precision", "recall",
                         "frequency", "score"])
        for rank, (class_id, p, r, f, score) in enumerate(rows, start=1):
            writer.writerow([rank, vocab.symbol_of(class_id), f"{p:.6f}",
                             f"{r:.6f}", f"{f:.6f}", f"{score:.6f}"])
