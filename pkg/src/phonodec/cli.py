"""Command-line interface wiring the pipeline over its documented file formats.

Subcommands: preprocess, lm-train, model-init, model-forward, gradcheck,
decode, eval, trigger-rank, sweep, augment-preview.  Exit codes: 0 success,
1 usage error, 2 data/format error, 3 numeric failure; every failure prints a
one-line diagnostic on stderr.

A JSON file passed via --config supplies defaults whose keys mirror the flag
names (dashes or underscores); explicit flags override it.  --deterministic
zeroes latency fields so outputs are byte-identical across reruns.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from collections import defaultdict

import numpy as np

from . import ctc, decoder, lm, metrics, model, preprocessing, sweep, trigger
from .errors import DataError, NumericError, ParameterError, PhonodecError
from .ndjson import read_ndjson, require_fields, write_ndjson
from .vocab import default_vocab, load_vocab, split_on_sil

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so errors map to exit 1."""

    def error(self, message):
        raise ParameterError(message)


def _load_vocab(path):
    return load_vocab(path) if path else default_vocab()


def _read_references(path, vocab):
    """References NDJSON: {"trial_id", "ids": [...]} or {"trial_id", "symbols": [...]}."""
    refs = {}
    for i, rec in enumerate(read_ndjson(path)):
        require_fields(rec, ("trial_id",), f"{path} record {i}")
        if "ids" in rec:
            ids = [int(t) for t in rec["ids"]]
        elif "symbols" in rec:
            ids = [vocab.id_of(s) for s in rec["symbols"]]
        else:
            raise DataError(f"{path} record {i}: needs 'ids' or 'symbols'")
        refs[str(rec["trial_id"])] = ids
    return refs


# ---------------------------------------------------------------------------
# handlers

def _cmd_preprocess(args):
    trials = preprocessing.read_raw_trials(args.input)
    if not trials:
        raise DataError(f"no trials in {args.input}")
    cfg = preprocessing.PipelineConfig(filter_order=args.order, low_hz=args.low_hz,
                                       high_hz=args.high_hz, bin_size=args.bin,
                                       eps=args.eps)

    def binned(trial):
        filtered = preprocessing.apply_filter(cfg.filter_for(trial.sample_rate_hz), trial)
        return preprocessing.bin_average(
            preprocessing.common_average_reference(filtered.samples), cfg.bin_size)

    if args.jobs > 1:
        from joblib import Parallel, delayed
        features = Parallel(n_jobs=args.jobs)(delayed(binned)(t) for t in trials)
    else:
        features = [binned(t) for t in trials]

    by_session = defaultdict(list)
    for trial, feats in zip(trials, features):
        by_session[trial.session].append(feats)
    stats = {session: preprocessing.compute_session_stats(items)
             for session, items in by_session.items()}

    out = []
    for trial, feats in zip(trials, features):
        values = preprocessing.zscore(feats, stats[trial.session], cfg.eps)
        out.append(preprocessing.FeatureMatrix(
            values=values, frame_rate_hz=trial.sample_rate_hz / cfg.bin_size,
            session=trial.session, trial_id=trial.trial_id))
    preprocessing.write_features(args.output, out)
    print(f"preprocessed {len(out)} trials -> {args.output}")
    return EXIT_OK


def _cmd_lm_train(args):
    vocab = _load_vocab(args.vocab)
    corpus = []
    with open(args.corpus, "r", encoding="utf-8") as fh:
        for line in fh:
            symbols = line.split()
            if symbols:
                corpus.append([vocab.id_of(s) for s in symbols])
    if not corpus:
        raise DataError(f"no utterances in {args.corpus}")
    stats = lm.count_ngrams(corpus, order=args.order, vocab_size=vocab.size,
                            sentence_bounds=not args.no_sentence_bounds)
    trained = lm.train_kneser_ney(stats, discount_mode=args.discount_mode,
                                  discount=args.discount)
    symbols = {i + 1: s for i, s in enumerate(vocab.symbols)}
    lm.write_arpa(trained, args.output, symbols=symbols)
    print(f"trained order-{args.order} model on {len(corpus)} utterances "
          f"-> {args.output}")
    return EXIT_OK


def _model_config(args) -> model.ModelConfig:
    if getattr(args, "model_config", None):
        return model.config_from_json(args.model_config)
    return model.ModelConfig()


def _cmd_model_init(args):
    cfg = _model_config(args)
    params = model.init_params(cfg, args.seed)
    model.save_params(params, args.output)
    if args.write_config:
        model.config_to_json(cfg, args.write_config)
    print(f"initialized {model.param_count(cfg)} parameters (seed {args.seed}) "
          f"-> {args.output}")
    return EXIT_OK


def _cmd_model_forward(args):
    cfg = _model_config(args)
    params = model.load_params(args.params)
    features = preprocessing.read_features(args.features)
    if not features:
        raise DataError(f"no trials in {args.features}")
    rows = []
    for feat in features:
        logp = model.forward_one(params, feat.values, cfg)
        rows.append((feat.trial_id, logp))
    model.write_logits(args.output, rows)
    print(f"forwarded {len(rows)} trials -> {args.output}")
    return EXIT_OK


def _fd_ctc_grad(logp, target, h=1e-6):
    """Central finite differences of the softmax-composed CTC loss."""
    from scipy.special import log_softmax
    logp = np.asarray(logp, dtype=np.float64)
    grad = np.zeros_like(logp)
    for t in range(logp.shape[0]):
        for k in range(logp.shape[1]):
            plus = logp.copy()
            plus[t, k] += h
            minus = logp.copy()
            minus[t, k] -= h
            loss_plus = ctc.ctc_loss(log_softmax(plus, axis=1), target)
            loss_minus = ctc.ctc_loss(log_softmax(minus, axis=1), target)
            grad[t, k] = (loss_plus - loss_minus) / (2.0 * h)
    return grad


def _cmd_gradcheck(args):
    from scipy.special import log_softmax
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.trials):
        frames, vocab_size = 5, 4
        logp = log_softmax(rng.normal(0.0, 2.0, size=(frames, vocab_size)), axis=1)
        target_len = int(rng.integers(1, 4))
        target = [int(rng.integers(1, vocab_size)) for _ in range(target_len)]
        analytic = ctc.ctc_grad(logp, target)
        fd = _fd_ctc_grad(logp, target)
        rel = float(np.max(np.abs(analytic - fd)) / np.max(np.abs(fd)))
        worst = max(worst, rel)
    print(f"max relative error over {args.trials} instances: {worst:.3e}")
    return EXIT_OK


def _build_graph(args, vocab):
    if not args.lm:
        raise ParameterError(f"--lm is required for stage '{args.stage}'")
    symbol_ids = {s: i + 1 for i, s in enumerate(vocab.symbols)}
    ngram = lm.read_arpa(args.lm, symbols=symbol_ids, vocab_size=vocab.size)
    return decoder.ContextGraph(ngram)


def _cmd_decode(args):
    vocab = _load_vocab(args.vocab)
    logits = model.read_logits(args.logits)
    if not logits:
        raise DataError(f"no trials in {args.logits}")

    graph = None
    if args.stage in ("lm", "wfst"):
        graph = _build_graph(args, vocab)
    cfg = decoder.BeamConfig(beam_width=args.beam, lm_weight=args.lm_weight,
                             length_alpha=args.len_alpha, nbest=args.nbest)

    def decode_one(item):
        trial_id, logp = item
        start = time.perf_counter()
        nbest = []
        if args.stage == "greedy":
            ids = ctc.greedy_decode(logp)
            score = -ctc.ctc_loss(logp, ids) if ids or logp.size else 0.0
        elif args.stage == "lm":
            ids, score = decoder.rescore_greedy(logp, graph.model, beta=args.lm_beta)
        else:
            results = decoder.beam_search(logp, graph, cfg)
            ids, score = (results[0][0], results[0][1]) if results else ([], -np.inf)
            nbest = [{"ids": r_ids, "score": r_score} for r_ids, r_score in results]
        latency_ms = 0.0 if args.deterministic \
            else (time.perf_counter() - start) * 1000.0
        return {"trial_id": trial_id, "best": list(ids),
                "best_symbols": [vocab.symbol_of(i) for i in ids],
                "score": float(score), "nbest": nbest, "stage": args.stage,
                "latency_ms": latency_ms}

    if args.jobs > 1:
        from joblib import Parallel, delayed
        rows = Parallel(n_jobs=args.jobs)(delayed(decode_one)(item) for item in logits)
    else:
        rows = [decode_one(item) for item in logits]
    decoder.write_decode_results(args.output, rows)
    print(f"decoded {len(rows)} trials (stage {args.stage}) -> {args.output}")
    return EXIT_OK


def _cmd_eval(args):
    vocab = _load_vocab(args.vocab)
    hyps = decoder.read_decode_results(args.hyps)
    refs = _read_references(args.refs, vocab)
    alignments = []
    ref_words, hyp_words = [], []
    for row in hyps:
        trial_id = str(row["trial_id"])
        if trial_id not in refs:
            raise DataError(f"{args.refs}: no reference for trial {trial_id}")
        ref = refs[trial_id]
        hyp = [int(t) for t in row["best"]]
        alignments.append(metrics.align(ref, hyp))
        ref_words.append(metrics.words_from_ids(ref, vocab))
        hyp_words.append(metrics.words_from_ids(hyp, vocab))
    summary = metrics.error_rate(alignments)
    summary["wer"] = metrics.wer(ref_words, hyp_words)
    matrix = metrics.confusion(alignments, vocab.size)
    if args.output_json:
        metrics.write_metrics_json(args.output_json, summary)
    if args.per_class_csv:
        metrics.write_per_class_csv(args.per_class_csv, vocab,
                                    metrics.precision_recall(matrix))
    if args.confusion_csv:
        metrics.write_confusion_csv(args.confusion_csv, vocab, matrix)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _cmd_trigger_rank(args):
    vocab = _load_vocab(args.vocab)
    _, matrix = metrics.read_confusion_csv(args.confusion, vocab)
    pr = metrics.precision_recall(matrix)
    freq = trigger.read_frequency_csv(args.freq, vocab)
    rows = trigger.rank_triggers(pr["precision"], pr["recall"], freq, eps=args.eps)
    trigger.write_ranking_csv(args.output, vocab, rows)
    print(f"ranked {len(rows)} candidates -> {args.output}")
    return EXIT_OK


def _cmd_sweep(args):
    vocab = _load_vocab(args.vocab)
    spec = sweep.SweepSpec.from_json(args.spec)
    logits = model.read_logits(args.logits)
    if not logits:
        raise DataError(f"no trials in {args.logits}")
    refs = _read_references(args.refs, vocab)
    eval_set = []
    for trial_id, logp in logits:
        if trial_id not in refs:
            raise DataError(f"{args.refs}: no reference for trial {trial_id}")
        eval_set.append((logp, refs[trial_id]))
    graph = _build_graph(args, vocab)
    result = sweep.run_sweep(spec, eval_set, graph,
                             measure_latency=not args.deterministic,
                             jobs=args.jobs)
    sweep.write_result_csv(args.output, result)
    print(f"evaluated {len(result.rows)} configurations -> {args.output}")
    return EXIT_OK


def _cmd_augment_preview(args):
    from .training import AugmentPolicy, specaugment
    features = preprocessing.read_features(args.features)
    if not features:
        raise DataError(f"no trials in {args.features}")
    policy = AugmentPolicy(n_time_masks=args.time_masks,
                           max_time_width=args.time_width,
                           n_channel_masks=args.channel_masks,
                           max_channel_width=args.channel_width,
                           seed=args.seed)
    out = []
    for feat in features:
        masked = specaugment(feat.values, policy)
        out.append(preprocessing.FeatureMatrix(values=masked,
                                               frame_rate_hz=feat.frame_rate_hz,
                                               session=feat.session,
                                               trial_id=feat.trial_id))
    preprocessing.write_features(args.output, out)
    print(f"masked {len(out)} trials -> {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser construction

def build_parser():
    parser = _Parser(prog="phonodec",
                     description="Phoneme decoding toolkit CLI")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")

    def sub(name, handler, help_text):
        p = subparsers.add_parser(name, help=help_text,
                                  description=help_text)
        p.set_defaults(handler=handler)
        p.add_argument("--config", help="JSON file of defaults mirroring flag names")
        return p

    p = sub("preprocess", _cmd_preprocess,
            "raw trial NDJSON -> normalized feature NDJSON")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--order", type=int, default=4)
    p.add_argument("--low-hz", type=float, default=0.3)
    p.add_argument("--high-hz", type=float, default=300.0)
    p.add_argument("--bin", type=int, default=600)
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--jobs", type=int, default=1)

    p = sub("lm-train", _cmd_lm_train, "phoneme corpus -> ARPA model")
    p.add_argument("--corpus", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--vocab")
    p.add_argument("--order", type=int, default=6)
    p.add_argument("--discount-mode", choices=("fixed", "modified"),
                   default="modified")
    p.add_argument("--discount", type=float, default=0.75)
    p.add_argument("--no-sentence-bounds", action="store_true")

    p = sub("model-init", _cmd_model_init, "initialize seeded model parameters")
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--model-config", help="model config JSON (defaults otherwise)")
    p.add_argument("--write-config", help="also write the effective config JSON")

    p = sub("model-forward", _cmd_model_forward,
            "features NDJSON -> log-probability NDJSON")
    p.add_argument("--params", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--model-config")

    p = sub("gradcheck", _cmd_gradcheck,
            "compare the CTC gradient against finite differences")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=20)

    p = sub("decode", _cmd_decode, "log-probabilities -> hypotheses NDJSON")
    p.add_argument("--stage", choices=("greedy", "lm", "wfst"), default="wfst")
    p.add_argument("--logits", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--lm", help="ARPA model (required for lm/wfst stages)")
    p.add_argument("--vocab")
    p.add_argument("--beam", type=int, default=128)
    p.add_argument("--lm-weight", type=float, default=1.0)
    p.add_argument("--len-alpha", type=float, default=0.9)
    p.add_argument("--lm-beta", type=float, default=0.8)
    p.add_argument("--nbest", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--deterministic", action="store_true")

    p = sub("eval", _cmd_eval, "hypotheses + references -> metrics reports")
    p.add_argument("--hyps", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--vocab")
    p.add_argument("--output-json")
    p.add_argument("--per-class-csv")
    p.add_argument("--confusion-csv")

    p = sub("trigger-rank", _cmd_trigger_rank,
            "confusion CSV + frequency CSV -> ranked trigger CSV")
    p.add_argument("--confusion", required=True)
    p.add_argument("--freq", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--vocab")
    p.add_argument("--eps", type=float, default=0.001)

    p = sub("sweep", _cmd_sweep, "spec JSON -> decoder hyperparameter sweep CSV")
    p.add_argument("--spec", required=True)
    p.add_argument("--logits", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--vocab")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(stage="wfst")  # for the shared graph builder

    p = sub("augment-preview", _cmd_augment_preview,
            "apply seeded time/channel masking to features NDJSON")
    p.add_argument("--features", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--time-masks", type=int, default=3)
    p.add_argument("--time-width", type=int, default=100)
    p.add_argument("--channel-masks", type=int, default=2)
    p.add_argument("--channel-width", type=int, default=25)

    return parser, subparsers


def _apply_config_file(argv, subparsers):
    """Install --config file values as subcommand defaults (flags still win)."""
    if "--config" not in argv:
        return
    idx = argv.index("--config")
    if idx + 1 >= len(argv):
        raise ParameterError("--config needs a file argument")
    if not argv or argv[0] not in subparsers.choices:
        return
    with open(argv[idx + 1], "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{argv[idx + 1]}: invalid JSON: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise DataError(f"{argv[idx + 1]}: config must be a JSON object")
    sub = subparsers.choices[argv[0]]
    valid = {action.dest for action in sub._actions}
    overrides = {}
    for key, value in raw.items():
        dest = key.replace("-", "_")
        if dest not in valid:
            raise ParameterError(f"config key {key!r} is not a flag of {argv[0]!r}")
        overrides[dest] = value
    sub.set_defaults(**overrides)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser, subparsers = build_parser()
        _apply_config_file(argv, subparsers)
        args = parser.parse_args(argv)
        if not getattr(args, "handler", None):
            parser.print_help()
            return EXIT_USAGE
        return args.handler(args)
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PhonodecError as exc:  # safety net for future subclasses
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
