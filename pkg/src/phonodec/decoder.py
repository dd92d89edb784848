"""Beam-search decoding over a lazily expanded LM context graph.

The search is frame-synchronous CTC prefix beam search: hypotheses are
collapsed prefixes carrying separate blank/non-blank probability masses, and
prefixes that collapse identically are merged by log-sum-exp.  States of the
graph are phoneme histories (up to order-1 tokens); edge weights are n-gram
log-probabilities, added exactly when a prefix grows.  Ranking uses the
combined, length-normalized score

    (am + lm_weight * lm) / len^length_alpha

with deterministic tie-breaking: higher score, then shorter sequence, then
lexicographically smaller ids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .ctc import BLANK, ctc_loss, greedy_decode, greedy_path
from .errors import ParameterError
from .lm import KneserNeyLM, NGramModel, lm_logprob, rescore_interpolate
from .ndjson import read_ndjson, require_fields, write_ndjson

NEG_INF = -math.inf


@dataclass
class BeamConfig:
    beam_width: int = 128
    lm_weight: float = 1.0
    length_alpha: float = 0.9
    nbest: int = 10

    def __post_init__(self):
        if self.beam_width < 1:
            raise ParameterError("beam width must be >= 1")
        if not 0.0 < self.length_alpha <= 2.0:
            raise ParameterError("length_alpha must lie in (0, 2]")
        if self.lm_weight < 0.0:
            raise ParameterError("lm_weight must be non-negative")
        if self.nbest < 1:
            raise ParameterError("nbest must be >= 1")


class ContextGraph:
    """Lazy WFST view of an n-gram model.

    States are token histories truncated to order-1; every state is
    accepting and the initial/final weights are zero, so a path's weight is
    just the sum of its edge log-probabilities.  States materialize only as
    the search visits them; nothing is precompiled.
    """

    def __init__(self, model: NGramModel):
        self.model = model
        self.history = max(model.order - 1, 0)

    def start_state(self) -> tuple:
        return ()

    def edge_weight(self, state: tuple, token: int) -> float:
        return lm_logprob(self.model, token, state)

    def step(self, state: tuple, token: int):
        weight = self.edge_weight(state, token)
        next_state = (state + (int(token),))[-self.history:] if self.history else ()
        return next_state, weight

    def path_weight(self, seq) -> float:
        """Sum of stepwise edge weights; the empty path weighs 0."""
        total = 0.0
        state = self.start_state()
        for token in seq:
            state, weight = self.step(state, token)
            total += weight
        return total


def length_normalize(raw_score: float, n: int, alpha: float) -> float:
    """raw / n**alpha; by convention the empty hypothesis is returned raw."""
    if n < 0:
        raise ParameterError("sequence length must be non-negative")
    if n == 0:
        return raw_score
    return raw_score / float(n) ** alpha


def score_sequence(graph: ContextGraph | None, logp, seq, cfg: BeamConfig) -> float:
    """Length-normalized combined score of a complete collapsed sequence.

    The acoustic term is the CTC log-probability of the sequence (sum over
    all alignments); infeasible sequences score -inf.
    """
    seq = [int(t) for t in seq]
    loss = ctc_loss(logp, seq)
    if math.isinf(loss):
        return NEG_INF
    am = -loss
    lm = graph.path_weight(seq) if graph is not None else 0.0
    return length_normalize(am + cfg.lm_weight * lm, len(seq), cfg.length_alpha)


@dataclass
class Hypothesis:
    """A collapsed prefix with its split probability mass and LM state."""

    prefix: tuple
    logp_blank: float = NEG_INF
    logp_nonblank: float = NEG_INF
    lm_score: float = 0.0

    @property
    def am_score(self) -> float:
        return float(np.logaddexp(self.logp_blank, self.logp_nonblank))

    def lm_state(self, history: int) -> tuple:
        return self.prefix[-history:] if history else ()


@dataclass
class BeamStats:
    """Instrumentation filled in by beam_search when requested."""

    frames: int = 0
    candidates_scored: int = 0
    max_live_prefixes: int = 0
    merges: int = 0


def _ranking_score(hyp: Hypothesis, cfg: BeamConfig) -> float:
    raw = hyp.am_score + cfg.lm_weight * hyp.lm_score
    return length_normalize(raw, len(hyp.prefix), cfg.length_alpha)


def _sort_key(item):
    score, hyp = item
    return (-score, len(hyp.prefix), hyp.prefix)


def beam_search(logp, graph: ContextGraph | None,
                cfg: BeamConfig | None = None,
                stats: BeamStats | None = None):
    """Width-K prefix beam search; returns the ranked n-best list.

    Each retained hypothesis is extended by the blank and by every non-blank
    token at every frame; identical prefixes merge by log-sum-exp of their
    masses.  Returns up to ``cfg.nbest`` pairs ``(ids, score)`` ranked by the
    final length-normalized combined score.
    """
    cfg = cfg or BeamConfig()
    logp = np.asarray(logp, dtype=np.float64)
    frames, vocab_size = logp.shape

    root = Hypothesis(prefix=(), logp_blank=0.0, logp_nonblank=NEG_INF, lm_score=0.0)
    beams = {(): root}

    for t in range(frames):
        lp = logp[t]
        next_beams: dict[tuple, Hypothesis] = {}

        def successor(prefix, parent):
            hyp = next_beams.get(prefix)
            if hyp is None:
                if prefix == parent.prefix:
                    lm = parent.lm_score
                else:
                    edge = graph.edge_weight(parent.lm_state(graph.history),
                                             prefix[-1]) if graph is not None else 0.0
                    lm = parent.lm_score + edge
                hyp = Hypothesis(prefix=prefix, lm_score=lm)
                next_beams[prefix] = hyp
            elif stats is not None:
                stats.merges += 1
            return hyp

        for prefix in sorted(beams):  # fixed iteration order for determinism
            hyp = beams[prefix]
            total = hyp.am_score
            last = prefix[-1] if prefix else None

            stay = successor(prefix, hyp)
            stay.logp_blank = np.logaddexp(stay.logp_blank, total + lp[BLANK])
            if stats is not None:
                stats.candidates_scored += 1

            for token in range(1, vocab_size):
                if stats is not None:
                    stats.candidates_scored += 1
                if token == last:
                    # repeat without a separating blank merges into the prefix
                    stay.logp_nonblank = np.logaddexp(
                        stay.logp_nonblank, hyp.logp_nonblank + lp[token])
                    grown = successor(prefix + (token,), hyp)
                    grown.logp_nonblank = np.logaddexp(
                        grown.logp_nonblank, hyp.logp_blank + lp[token])
                else:
                    grown = successor(prefix + (token,), hyp)
                    grown.logp_nonblank = np.logaddexp(
                        grown.logp_nonblank, total + lp[token])

        scored = [(_ranking_score(h, cfg), h) for h in next_beams.values()
                  if h.am_score > NEG_INF]
        scored.sort(key=_sort_key)
        if stats is not None:
            stats.frames += 1
            stats.max_live_prefixes = max(stats.max_live_prefixes, len(scored))
        beams = {h.prefix: h for _, h in scored[:cfg.beam_width]}

    final = [(_ranking_score(h, cfg), h) for h in beams.values()
             if h.am_score > NEG_INF]
    final.sort(key=_sort_key)
    return [(list(h.prefix), float(score)) for score, h in final[:cfg.nbest]]


def rescore_greedy(logp, model: NGramModel, beta: float = 0.8):
    """Stage-2 decoding: greedy sequence with token-level LM interpolation.

    The sequence itself is the greedy output; its score is the sum over
    emitted tokens of ``(1-beta) * am + beta * lm`` where the acoustic term is
    the peak frame log-probability of each emitted run.
    """
    logp = np.asarray(logp, dtype=np.float64)
    path = greedy_path(logp)
    tokens = []
    am_scores = []
    prev = BLANK
    for t, cls in enumerate(path):
        cls = int(cls)
        if cls != BLANK:
            if cls == prev:
                am_scores[-1] = max(am_scores[-1], float(logp[t, cls]))
            else:
                tokens.append(cls)
                am_scores.append(float(logp[t, cls]))
        prev = cls
    score = 0.0
    context: tuple = ()
    history = max(model.order - 1, 0)
    for token, am in zip(tokens, am_scores):
        lm = lm_logprob(model, token, context)
        score += rescore_interpolate(am, lm, beta)
        context = (context + (token,))[-history:] if history else ()
    return tokens, score


def rescore_nbest(nbest, graph: ContextGraph, beta: float = 0.8):
    """Re-rank an n-best list by sequence-level log-linear interpolation."""
    rescored = []
    for ids, am_score in nbest:
        lm = graph.path_weight(ids)
        rescored.append((list(ids), rescore_interpolate(am_score, lm, beta)))
    rescored.sort(key=lambda item: (-item[1], len(item[0]), tuple(item[0])))
    return rescored


class GreedyCTCDecoder(BaseEstimator):
    """Per-frame argmax + collapse, wrapped as a predict-style estimator."""

    def fit(self, X=None, y=None):
        self.fitted_ = True
        return self

    def predict(self, X):
        return [greedy_decode(logp) for logp in X]


class BeamSearchDecoder(BaseEstimator):
    """LM-fused prefix beam search with scikit-learn estimator plumbing.

    ``lm`` is an :class:`NGramModel` (or a fitted :class:`KneserNeyLM`);
    leave it None for a pure-acoustic beam.
    """

    def __init__(self, lm=None, beam_width=128, lm_weight=1.0,
                 length_alpha=0.9, nbest=10):
        self.lm = lm
        self.beam_width = beam_width
        self.lm_weight = lm_weight
        self.length_alpha = length_alpha
        self.nbest = nbest

    def _model(self):
        if isinstance(self.lm, KneserNeyLM):
            check_is_fitted(self.lm, "model_")
            return self.lm.model_
        return self.lm

    def fit(self, X=None, y=None):
        model = self._model()
        self.graph_ = ContextGraph(model) if model is not None else None
        self.config_ = BeamConfig(beam_width=self.beam_width,
                                  lm_weight=self.lm_weight,
                                  length_alpha=self.length_alpha,
                                  nbest=self.nbest)
        return self

    def decode(self, logp, stats: BeamStats | None = None):
        check_is_fitted(self, "graph_")
        return beam_search(logp, self.graph_, self.config_, stats=stats)

    def predict(self, X):
        check_is_fitted(self, "graph_")
        out = []
        for logp in X:
            nbest = beam_search(logp, self.graph_, self.config_)
            out.append(nbest[0][0] if nbest else [])
        return out


# ---------------------------------------------------------------------------
# decode-result file format

def write_decode_results(path, rows) -> None:
    """Decode NDJSON: one object per trial with best/nbest hypotheses."""
    write_ndjson(path, rows)


def read_decode_results(path) -> list:
    rows = read_ndjson(path)
    for i, row in enumerate(rows):
        require_fields(row, ("trial_id", "best", "score", "stage"),
                       f"{path} record {i}")
    return rows
