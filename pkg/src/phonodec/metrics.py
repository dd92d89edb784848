"""Edit-distance alignment and error-rate reporting.

Alignment is the classic unit-cost Levenshtein DP with a deterministic
backtrace preferring MATCH > SUB > DEL > INS on cost ties.  Error rates are
corpus-level: sums of substitutions/deletions/insertions over the summed
reference length, so with insertions the rate can exceed 1.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError

MATCH = "match"
SUB = "sub"
DEL = "del"
INS = "ins"


@dataclass
class Alignment:
    """Edit operations between one reference and one hypothesis."""

    ops: list  # (op, ref_token | None, hyp_token | None)
    substitutions: int
    deletions: int
    insertions: int
    matches: int
    ref_len: int

    @property
    def cost(self) -> int:
        return self.substitutions + self.deletions + self.insertions


def align(ref, hyp) -> Alignment:
    """Minimal-cost alignment with MATCH > SUB > DEL > INS tie-breaking."""
    ref = list(ref)
    hyp = list(hyp)
    n, m = len(ref), len(hyp)
    dist = np.zeros((n + 1, m + 1), dtype=np.int64)
    dist[:, 0] = np.arange(n + 1)
    dist[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            same = ref[i - 1] == hyp[j - 1]
            dist[i, j] = min(dist[i - 1, j - 1] + (0 if same else 1),
                             dist[i - 1, j] + 1,
                             dist[i, j - 1] + 1)

    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] \
                and dist[i, j] == dist[i - 1, j - 1]:
            ops.append((MATCH, ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and dist[i, j] == dist[i - 1, j - 1] + 1:
            ops.append((SUB, ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and dist[i, j] == dist[i - 1, j] + 1:
            ops.append((DEL, ref[i - 1], None))
            i -= 1
        else:
            ops.append((INS, None, hyp[j - 1]))
            j -= 1
    ops.reverse()

    subs = sum(1 for op, _, _ in ops if op == SUB)
    dels = sum(1 for op, _, _ in ops if op == DEL)
    inss = sum(1 for op, _, _ in ops if op == INS)
    matches = sum(1 for op, _, _ in ops if op == MATCH)
    return Alignment(ops=ops, substitutions=subs, deletions=dels,
                     insertions=inss, matches=matches, ref_len=n)


def error_rate(alignments) -> dict:
    """Corpus-level PER with its substitution/deletion/insertion breakdown."""
    total_ref = sum(a.ref_len for a in alignments)
    if total_ref == 0:
        raise DataError("error rate needs at least one reference token")
    subs = sum(a.substitutions for a in alignments)
    dels = sum(a.deletions for a in alignments)
    inss = sum(a.insertions for a in alignments)
    per = (subs + dels + inss) / total_ref
    return {"per": per,
            "sub_rate": subs / total_ref,
            "del_rate": dels / total_ref,
            "ins_rate": inss / total_ref,
            "accuracy": 1.0 - per,
            "n_ref": total_ref}


def wer(ref_words, hyp_words) -> float:
    """Word error rate over parallel lists of word-token sequences."""
    if len(ref_words) != len(hyp_words):
        raise DataError("reference and hypothesis corpora differ in length")
    alignments = [align(r, h) for r, h in zip(ref_words, hyp_words)]
    return error_rate(alignments)["per"]


def words_from_ids(ids, vocab):
    """Word tokens for WER when only phoneme ids exist: SIL-split groups."""
    from .vocab import split_on_sil
    return [tuple(group) for group in split_on_sil(ids, vocab)]


def confusion(alignments, num_classes: int) -> np.ndarray:
    """(V-1) x (V-1) counts over non-blank classes; rows are references.

    MATCH ops increment the diagonal, SUB ops the (ref, hyp) cell; deletions
    and insertions have no confusion cell (one side has no class).
    """
    matrix = np.zeros((num_classes - 1, num_classes - 1), dtype=np.int64)
    for alignment in alignments:
        for op, ref_id, hyp_id in alignment.ops:
            if op == MATCH:
                matrix[ref_id - 1, ref_id - 1] += 1
            elif op == SUB:
                matrix[ref_id - 1, hyp_id - 1] += 1
    return matrix


def precision_recall(matrix) -> dict:
    """Per-class precision/recall; classes with empty column/row report 0
    and are flagged as undefined."""
    matrix = np.asarray(matrix, dtype=np.float64)
    diag = np.diag(matrix)
    col = matrix.sum(axis=0)
    row = matrix.sum(axis=1)
    precision = np.divide(diag, col, out=np.zeros_like(diag), where=col > 0)
    recall = np.divide(diag, row, out=np.zeros_like(diag), where=row > 0)
    return {"precision": precision, "recall": recall,
            "precision_defined": col > 0, "recall_defined": row > 0}


def expected_word_accuracy(per: float, mean_len: float) -> float:
    """Independent-error compounding estimate (1 - per)**mean_len."""
    if not 0.0 <= per <= 1.0:
        raise DataError("per must lie in [0, 1]")
    return (1.0 - per) ** mean_len


# ---------------------------------------------------------------------------
# report files

def write_metrics_json(path, summary: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_per_class_csv(path, vocab, pr: dict) -> None:
    """CSV of per-class precision/recall, one row per non-blank symbol."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["symbol", "precision", "recall"])
        for idx, symbol in enumerate(vocab.symbols):
            writer.writerow([symbol,
                             f"{pr['precision'][idx]:.6f}",
                             f"{pr['recall'][idx]:.6f}"])


def write_confusion_csv(path, vocab, matrix) -> None:
    """Square CSV with symbol header row/column; rows are references."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["ref\\hyp", *vocab.symbols])
        for idx, symbol in enumerate(vocab.symbols):
            writer.writerow([symbol, *matrix[idx].tolist()])


def read_confusion_csv(path, vocab=None):
    """Inverse of write_confusion_csv; returns (symbols, matrix)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or len(rows) < 2:
        raise DataError(f"{path}: empty confusion matrix")
    symbols = rows[0][1:]
    matrix = np.zeros((len(symbols), len(symbols)), dtype=np.int64)
    for i, row in enumerate(rows[1:]):
        if len(row) != len(symbols) + 1:
            raise DataError(f"{path}: row {i + 2} has {len(row)} columns, "
                            f"expected {len(symbols) + 1}")
        matrix[i] = [int(v) for v in row[1:]]
    if vocab is not None and list(symbols) != list(vocab.symbols):
        raise DataError(f"{path}: confusion symbols do not match the vocabulary")
    return symbols, matrix
