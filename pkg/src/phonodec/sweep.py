"""Deterministic grid/random search over decoder hyperparameters.

Each configuration decodes the whole evaluation set with the beam-search
decoder and reports accuracy (1 - PER).  Random mode draws distinct
configurations from the cartesian candidate set with a seeded generator;
results are sorted by accuracy with a fixed tie-break so a given spec, seed,
and input always produce byte-identical CSV output (latency measurement can
be disabled for golden-file comparisons).
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import time
from dataclasses import dataclass, field

from .decoder import BeamConfig, beam_search
from .errors import DataError, ParameterError
from .metrics import align, error_rate

DEFAULT_BEAM_RANGE = (32, 256)
DEFAULT_LM_RANGE = (0.5, 1.5)
DEFAULT_ALPHA_RANGE = (0.7, 1.2)


@dataclass
class SweepSpec:
    beam_values: list
    lm_weights: list
    length_alphas: list
    mode: str = "grid"
    n_random: int = 0
    seed: int = 0

    def __post_init__(self):
        if not (self.beam_values and self.lm_weights and self.length_alphas):
            raise ParameterError("sweep value lists must be non-empty")
        if self.mode not in ("grid", "random"):
            raise ParameterError(f"unknown sweep mode {self.mode!r}")
        if self.mode == "random" and self.n_random < 1:
            raise ParameterError("random mode needs n_random >= 1")

    @classmethod
    def from_json(cls, path) -> "SweepSpec":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        known = {"beam_values", "lm_weights", "length_alphas",
                 "mode", "n_random", "seed"}
        unknown = set(raw) - known
        if unknown:
            raise DataError(f"{path}: unknown sweep spec keys {sorted(unknown)}")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise DataError(f"{path}: incomplete sweep spec: {exc}") from None

    def configurations(self) -> list:
        """The (beam, lm_weight, alpha) tuples to evaluate, in draw order."""
        grid = list(itertools.product(self.beam_values, self.lm_weights,
                                      self.length_alphas))
        if self.mode == "grid":
            return grid
        if self.n_random >= len(grid):
            return grid
        # seeded draws; duplicates are re-drawn so rows stay distinct
        import numpy as np
        rng = np.random.default_rng(self.seed)
        chosen: list = []
        seen = set()
        while len(chosen) < self.n_random:
            cfg = (self.beam_values[int(rng.integers(len(self.beam_values)))],
                   self.lm_weights[int(rng.integers(len(self.lm_weights)))],
                   self.length_alphas[int(rng.integers(len(self.length_alphas)))])
            if cfg not in seen:
                seen.add(cfg)
                chosen.append(cfg)
        return chosen


@dataclass
class SweepRow:
    beam: int
    lm_weight: float
    length_alpha: float
    per: float
    accuracy: float
    mean_latency_ms: float
    failed: bool = False


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)

    def sort(self) -> None:
        # accuracy descending; ties: smaller beam first, then lambda, alpha
        self.rows.sort(key=lambda r: (-r.accuracy, r.beam, r.lm_weight,
                                      r.length_alpha))


def run_sweep(spec: SweepSpec, eval_set, graph,
              measure_latency: bool = True, jobs: int = 1) -> SweepResult:
    """Decode every trial under every configuration and score it.

    ``eval_set`` is a list of (log-prob matrix, reference id sequence) pairs.
    A configuration whose decode raises is kept as a flagged row with zero
    accuracy rather than aborting the sweep.
    """
    if not eval_set:
        raise DataError("sweep needs a non-empty evaluation set")
    configurations = spec.configurations()

    def evaluate(config):
        beam, lam, alpha = config
        cfg = BeamConfig(beam_width=int(beam), lm_weight=float(lam),
                         length_alpha=float(alpha), nbest=1)
        alignments = []
        elapsed = 0.0
        try:
            for logp, ref in eval_set:
                start = time.perf_counter() if measure_latency else 0.0
                nbest = beam_search(logp, graph, cfg)
                if measure_latency:
                    elapsed += time.perf_counter() - start
                best = nbest[0][0] if nbest else []
                alignments.append(align(ref, best))
            rates = error_rate(alignments)
        except Exception:
            return SweepRow(beam=int(beam), lm_weight=float(lam),
                            length_alpha=float(alpha), per=1.0, accuracy=0.0,
                            mean_latency_ms=0.0, failed=True)
        mean_ms = (elapsed / len(eval_set)) * 1000.0 if measure_latency else 0.0
        return SweepRow(beam=int(beam), lm_weight=float(lam),
                        length_alpha=float(alpha), per=rates["per"],
                        accuracy=rates["accuracy"], mean_latency_ms=mean_ms)

    if jobs > 1:
        from joblib import Parallel, delayed
        rows = Parallel(n_jobs=jobs)(delayed(evaluate)(c) for c in configurations)
    else:
        rows = [evaluate(c) for c in configurations]
    result = SweepResult(rows=list(rows))
    result.sort()
    return result


def top_k(result: SweepResult, k: int) -> list:
    if k < 1:
        raise ParameterError("k must be >= 1")
    return result.rows[:k]


def result_to_csv(result: SweepResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["beam", "lm_weight", "length_alpha", "per", "accuracy",
                     "mean_latency_ms", "failed"])
    for row in result.rows:
        writer.writerow([row.beam, repr(row.lm_weight), repr(row.length_alpha),
                         f"{row.per:.6f}", f"{row.accuracy:.6f}",
                         f"{row.mean_latency_ms:.3f}",
                         int(row.failed)])
    return buf.getvalue()


def write_result_csv(path, result: SweepResult) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(result_to_csv(result))
