"""Interpolated Kneser-Ney n-gram language model over phoneme ids.

Counting, estimation, recursive-backoff queries, perplexity, and ARPA
persistence.  The model works on integer token ids; sentence boundaries use
two synthetic ids (BOS as context-only padding, EOS as a predicted token)
that map to ``<s>``/``</s>`` in ARPA files.

Estimation follows the interpolated formulation: at every order the
discounted relative frequency is mixed with the next-lower-order
distribution, whose counts are continuation ("how many distinct predecessors")
rather than raw counts.  Two discount modes exist:

* ``fixed``: a single absolute discount (default 0.75) at orders >= 2 with an
  undiscounted continuation unigram.  Toy models are exactly hand-checkable.
* ``modified``: per-order discounts D1/D2/D3+ estimated from counts-of-counts
  (falling back to 0.75 when degenerate), with the unigram itself discounted
  and interpolated with the uniform distribution so every alphabet token
  keeps non-zero probability.

Stored probabilities are natural logs internally; ARPA I/O converts to the
conventional log10.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .errors import DataError, ParameterError

BOS_ID = -1
EOS_ID = -2
BOS_SYMBOL = "<s>"
EOS_SYMBOL = "</s>"

_LN10 = math.log(10.0)
# ARPA convention for entries that exist only to carry a backoff weight
_DUMMY_LOG10 = -99.0


@dataclass
class CorpusStats:
    """Raw and continuation count tables for orders 1..order."""

    order: int
    vocab_size: int
    sentence_bounds: bool
    raw: list              # raw[k-1]: dict k-gram tuple -> count
    adjusted: list         # same layout; counts used for estimation
    counts_of_counts: list  # per order: {1: n1, 2: n2, 3: n3, 4: n4}
    total_tokens: int


def count_ngrams(corpus, order: int = 6, vocab_size: int | None = None,
                 sentence_bounds: bool = True) -> CorpusStats:
    """Count n-grams of all orders 1..order over an id-sequence corpus.

    With ``sentence_bounds`` each sequence is padded with one BOS context
    token and terminated by a counted EOS token.  Continuation (adjusted)
    counts at order k are the number of distinct left extensions of each
    (k)-gram among the (k+1)-grams, except that grams starting with BOS keep
    their raw counts (they cannot be left-extended).
    """
    if order < 1:
        raise ParameterError(f"order must be >= 1, got {order}")
    sequences = [tuple(int(t) for t in seq) for seq in corpus]
    if not sequences:
        raise DataError("cannot count n-grams of an empty corpus")

    max_id = max((max(seq) for seq in sequences if seq), default=0)
    if vocab_size is None:
        vocab_size = max_id + 1
    elif max_id >= vocab_size:
        raise DataError(f"token id {max_id} outside vocabulary of size {vocab_size}")
    for seq in sequences:
        if any(t < 0 for t in seq):
            raise DataError("token ids must be non-negative")

    raw = [Counter() for _ in range(order)]
    total_tokens = 0
    for seq in sequences:
        padded = ((BOS_ID,) + seq + (EOS_ID,)) if sentence_bounds else seq
        total_tokens += len(seq) + (1 if sentence_bounds else 0)
        for k in range(1, order + 1):
            for i in range(len(padded) - k + 1):
                gram = padded[i:i + k]
                if gram[-1] == BOS_ID:
                    continue  # BOS is context only, never predicted
                raw[k - 1][gram] += 1

    adjusted = [Counter() for _ in range(order)]
    adjusted[order - 1] = Counter(raw[order - 1])
    for k in range(order - 1, 0, -1):
        for gram in raw[k]:  # distinct (k+1)-grams
            adjusted[k - 1][gram[1:]] += 1
        for gram, count in raw[k - 1].items():
            if gram[0] == BOS_ID:
                adjusted[k - 1][gram] = count

    counts_of_counts = []
    for k in range(order):
        hist = Counter()
        for count in adjusted[k].values():
            if 1 <= count <= 4:
                hist[count] += 1
        counts_of_counts.append({c: hist.get(c, 0) for c in (1, 2, 3, 4)})

    return CorpusStats(order=order, vocab_size=vocab_size,
                       sentence_bounds=sentence_bounds,
                       raw=[dict(c) for c in raw],
                       adjusted=[dict(c) for c in adjusted],
                       counts_of_counts=counts_of_counts,
                       total_tokens=total_tokens)


@dataclass
class NGramModel:
    """Estimated probability and backoff tables, queried via lm_logprob."""

    order: int
    vocab_size: int
    sentence_bounds: bool
    logprob: list = field(default_factory=list)  # [k-1]: k-gram -> ln P
    backoff: list = field(default_factory=list)  # [j]: context of len j+1 -> ln gamma

    @property
    def alphabet(self) -> list:
        """Every id the model can predict (vocabulary plus EOS if trained)."""
        ids = list(range(self.vocab_size))
        if self.sentence_bounds:
            ids.append(EOS_ID)
        return ids

    @property
    def is_empty(self) -> bool:
        return not any(self.logprob)

    def table_sizes(self) -> list:
        return [len(t) for t in self.logprob]


def empty_model(vocab_size: int) -> NGramModel:
    """A model with no data: every query answers the uniform log(1/V)."""
    return NGramModel(order=1, vocab_size=vocab_size, sentence_bounds=False,
                      logprob=[{}], backoff=[])


def _estimate_discounts(coc: dict) -> tuple | None:
    """Modified-KN discounts (D1, D2, D3+) or None when degenerate."""
    n1, n2, n3, n4 = coc[1], coc[2], coc[3], coc[4]
    if min(n1, n2, n3, n4) == 0:
        return None
    y = n1 / (n1 + 2.0 * n2)
    d1 = 1.0 - 2.0 * y * n2 / n1
    d2 = 2.0 - 3.0 * y * n3 / n2
    d3 = 3.0 - 4.0 * y * n4 / n3
    if not (0.0 < d1 <= 1.0 and 0.0 < d2 <= 2.0 and 0.0 < d3 <= 3.0):
        return None
    return d1, d2, d3


def _discount_for(count: int, discounts: tuple) -> float:
    d1, d2, d3 = discounts
    if count == 1:
        return d1
    if count == 2:
        return d2
    return d3


def train_kneser_ney(stats: CorpusStats, discount_mode: str = "modified",
                     discount: float = 0.75) -> NGramModel:
    """Estimate an interpolated Kneser-Ney model from count tables."""
    if discount_mode not in ("fixed", "modified"):
        raise ParameterError(f"unknown discount mode {discount_mode!r}")
    if not 0.0 < discount < 1.0:
        raise ParameterError("fixed discount must lie in (0, 1)")

    model = NGramModel(order=stats.order, vocab_size=stats.vocab_size,
                       sentence_bounds=stats.sentence_bounds,
                       logprob=[{} for _ in range(stats.order)],
                       backoff=[{} for _ in range(max(stats.order - 1, 0))])
    alphabet = model.alphabet
    alphabet_size = len(alphabet)

    # unigram base case
    uni = {g[0]: c for g, c in stats.adjusted[0].items()}
    total = float(sum(uni.values()))
    if total > 0:
        if discount_mode == "fixed":
            # pure continuation distribution: exact and hand-checkable
            for w, c in uni.items():
                model.logprob[0][(w,)] = math.log(c / total)
        else:
            discounts = _estimate_discounts(stats.counts_of_counts[0]) \
                or (discount, discount, discount)
            removed = sum(_discount_for(c, discounts) for c in uni.values())
            gamma1 = removed / total
            uniform = gamma1 / alphabet_size
            for w in alphabet:
                c = uni.get(w, 0)
                p = uniform
                if c > 0:
                    p += max(c - _discount_for(c, discounts), 0.0) / total
                if p > 0.0:
                    model.logprob[0][(w,)] = math.log(p)

    # higher orders, bottom-up so lower-order queries see finished tables
    for k in range(2, stats.order + 1):
        if discount_mode == "fixed":
            discounts = (discount, discount, discount)
        else:
            discounts = _estimate_discounts(stats.counts_of_counts[k - 1]) \
                or (discount, discount, discount)
        by_context = defaultdict(dict)
        for gram, count in stats.adjusted[k - 1].items():
            by_context[gram[:-1]][gram[-1]] = count
        for ctx, followers in by_context.items():
            denom = float(sum(followers.values()))
            removed = sum(_discount_for(c, discounts) for c in followers.values())
            gamma = removed / denom
            model.backoff[len(ctx) - 1][ctx] = math.log(gamma) if gamma > 0 else -math.inf
            for w, c in followers.items():
                head = max(c - _discount_for(c, discounts), 0.0) / denom
                lower = math.exp(lm_logprob(model, w, ctx[1:]))
                p = head + gamma * lower
                if p > 0.0:
                    model.logprob[k - 1][ctx + (w,)] = math.log(p)
    return model


def lm_logprob(model: NGramModel, token: int, context=()) -> float:
    """Natural-log P(token | context) with recursive ARPA-style backoff.

    The context is truncated to the model order; unseen contexts back off
    (missing backoff weights count as 1).  Only a completely empty model
    answers the flat uniform log(1/V).
    """
    if model.is_empty:
        return -math.log(model.vocab_size)
    ctx = tuple(int(t) for t in context)
    if model.order > 1:
        ctx = ctx[-(model.order - 1):]
    else:
        ctx = ()
    token = int(token)
    accumulated = 0.0
    while True:
        stored = model.logprob[len(ctx)].get(ctx + (token,))
        if stored is not None:
            return accumulated + stored
        if not ctx:
            return -math.inf  # zero continuation mass for this token
        accumulated += model.backoff[len(ctx) - 1].get(ctx, 0.0)
        ctx = ctx[1:]


def context_distribution(model: NGramModel, context=()) -> dict:
    """P(token | context) for every token the model can predict."""
    return {w: math.exp(lm_logprob(model, w, context)) for w in model.alphabet}


def sequence_logprob(model: NGramModel, seq) -> float:
    """Joint log-probability of one sequence under the model's conventions."""
    total = 0.0
    ctx = (BOS_ID,) if model.sentence_bounds else ()
    tokens = list(seq) + ([EOS_ID] if model.sentence_bounds else [])
    for w in tokens:
        total += lm_logprob(model, w, ctx)
        ctx = ctx + (int(w),)
        if model.order > 1:
            ctx = ctx[-(model.order - 1):]
    return total


def perplexity(model: NGramModel, corpus) -> float:
    """exp of the mean negative log-probability per token (EOS included)."""
    total_logp = 0.0
    total_tokens = 0
    for seq in corpus:
        total_logp += sequence_logprob(model, seq)
        total_tokens += len(list(seq)) + (1 if model.sentence_bounds else 0)
    if total_tokens == 0:
        raise DataError("cannot compute perplexity of an empty corpus")
    return math.exp(-total_logp / total_tokens)


def rescore_interpolate(am_logp: float, lm_logp: float, beta: float = 0.8) -> float:
    """Log-linear interpolation (1-beta) * AM + beta * LM."""
    return (1.0 - beta) * am_logp + beta * lm_logp


# ---------------------------------------------------------------------------
# ARPA persistence

def _id_to_string(token: int, symbols) -> str:
    if token == BOS_ID:
        return BOS_SYMBOL
    if token == EOS_ID:
        return EOS_SYMBOL
    if symbols is not None:
        return symbols[token]
    return str(token)


def _string_to_id(text: str, symbol_ids) -> int:
    if text == BOS_SYMBOL:
        return BOS_ID
    if text == EOS_SYMBOL:
        return EOS_ID
    if symbol_ids is not None:
        if text not in symbol_ids:
            raise DataError(f"ARPA token {text!r} not in the supplied vocabulary")
        return symbol_ids[text]
    try:
        return int(text)
    except ValueError:
        raise DataError(f"ARPA token {text!r} is not an id; pass a vocabulary") from None


def write_arpa(model: NGramModel, path, symbols=None) -> None:
    """Write the model in the standard ARPA text layout (log10 values).

    ``symbols`` optionally maps ids to human-readable strings; by default ids
    are written as decimal strings.  Entries that exist only to carry a
    backoff weight get the conventional -99 dummy probability.
    """
    entries = []
    for k in range(1, model.order + 1):
        grams = dict(model.logprob[k - 1])
        if k - 1 < len(model.backoff):
            for ctx in model.backoff[k - 1]:
                grams.setdefault(ctx, None)
        entries.append(grams)

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\\data\\\n")
        for k, grams in enumerate(entries, start=1):
            fh.write(f"ngram {k}={len(grams)}\n")
        fh.write("\n")
        for k, grams in enumerate(entries, start=1):
            fh.write(f"\\{k}-grams:\n")
            for gram in sorted(grams):
                ln_p = grams[gram]
                log10_p = _DUMMY_LOG10 if ln_p is None else ln_p / _LN10
                text = " ".join(_id_to_string(t, symbols) for t in gram)
                line = f"{log10_p:.7f}\t{text}"
                if k - 1 < len(model.backoff) and gram in model.backoff[k - 1]:
                    bow = model.backoff[k - 1][gram]
                    if bow != 0.0:
                        line += f"\t{bow / _LN10:.7f}"
                fh.write(line + "\n")
            fh.write("\n")
        fh.write("\\end\\\n")


def read_arpa(path, symbols=None, vocab_size: int | None = None) -> NGramModel:
    """Parse an ARPA file back into a queryable model.

    ``symbols`` optionally maps symbol string -> id for files written with a
    vocabulary; numeric tokens are parsed directly otherwise.
    """
    declared = {}
    sections = {}
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    i = 0
    while i < len(lines) and lines[i].strip() != "\\data\\":
        if lines[i].strip():
            raise DataError(f"{path}:{i + 1}: expected \\data\\ header")
        i += 1
    if i == len(lines):
        raise DataError(f"{path}: missing \\data\\ header")
    i += 1
    while i < len(lines):
        line = lines[i].strip()
        if not line:
            i += 1
            continue
        if line.startswith("\\"):
            break
        if not line.startswith("ngram "):
            raise DataError(f"{path}:{i + 1}: malformed count line {line!r}")
        try:
            k_text, n_text = line[len("ngram "):].split("=")
            declared[int(k_text)] = int(n_text)
        except ValueError:
            raise DataError(f"{path}:{i + 1}: malformed count line {line!r}") from None
        i += 1
    if not declared:
        raise DataError(f"{path}: \\data\\ section declares no orders")

    order = max(declared)
    current = None
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        if line == "\\end\\":
            current = None
            break
        if line.startswith("\\") and line.endswith("-grams:"):
            try:
                current = int(line[1:-len("-grams:")])
            except ValueError:
                raise DataError(f"{path}:{i}: malformed section header {line!r}") from None
            if current not in declared:
                raise DataError(f"{path}:{i}: section {line!r} not declared in \\data\\")
            sections[current] = []
            continue
        if current is None:
            raise DataError(f"{path}:{i}: entry outside any n-gram section")
        fields = line.split()
        if len(fields) == current + 1:
            backoff_text = None
        elif len(fields) == current + 2:
            backoff_text = fields[-1]
        else:
            raise DataError(f"{path}:{i}: expected {current}-gram entry, got {line!r}")
        sections[current].append((fields[0], fields[1:current + 1], backoff_text, i))

    logprob = [{} for _ in range(order)]
    backoff = [{} for _ in range(order - 1)]
    max_seen = -1
    seen_bounds = False
    for k, rows in sections.items():
        if len(rows) != declared[k]:
            raise DataError(
                f"{path}: \\data\\ declares {declared[k]} {k}-grams, found {len(rows)}")
        for prob_text, token_texts, backoff_text, lineno in rows:
            try:
                log10_p = float(prob_text)
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad probability {prob_text!r}") from None
            gram = tuple(_string_to_id(t, symbols) for t in token_texts)
            seen_bounds = seen_bounds or any(t in (BOS_ID, EOS_ID) for t in gram)
            max_seen = max(max_seen, max((t for t in gram if t >= 0), default=-1))
            logprob[k - 1][gram] = log10_p * _LN10
            if backoff_text is not None:
                if k >= order:
                    raise DataError(f"{path}:{lineno}: backoff weight on a top-order gram")
                backoff[k - 1][gram] = float(backoff_text) * _LN10
    return NGramModel(order=order,
                      vocab_size=vocab_size if vocab_size is not None else max_seen + 1,
                      sentence_bounds=seen_bounds, logprob=logprob, backoff=backoff)


class KneserNeyLM(BaseEstimator):
    """scikit-learn style wrapper: fit on id sequences, query log-probs.

    Parameters mirror :func:`count_ngrams` / :func:`train_kneser_ney`; the
    fitted model lives in ``model_``.
    """

    def __init__(self, order=6, discount_mode="modified", discount=0.75,
                 sentence_bounds=True, vocab_size=None):
        self.order = order
        self.discount_mode = discount_mode
        self.discount = discount
        self.sentence_bounds = sentence_bounds
        self.vocab_size = vocab_size

    def fit(self, X, y=None):
        stats = count_ngrams(X, order=self.order, vocab_size=self.vocab_size,
                             sentence_bounds=self.sentence_bounds)
        self.model_ = train_kneser_ney(stats, discount_mode=self.discount_mode,
                                       discount=self.discount)
        self.stats_ = stats
        return self

    def logprob(self, token, context=()):
        check_is_fitted(self, "model_")
        return lm_logprob(self.model_, token, context)

    def perplexity(self, X):
        check_is_fitted(self, "model_")
        return perplexity(self.model_, X)

    def score(self, X, y=None):
        """Mean log-likelihood per token (higher is better)."""
        check_is_fitted(self, "model_")
        return -math.log(perplexity(self.model_, X))
