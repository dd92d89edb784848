"""phonodec: phoneme decoding toolkit.

Neural-signal preprocessing, a deterministic Conformer-style encoder forward
pass, CTC loss/decoding, Kneser-Ney phoneme language models, beam-search
decoding over a lazy LM graph, and the evaluation/selection analytics around
them.  Pipeline stages follow the scikit-learn estimator API so they compose
with the wider ecosystem; the numerical primitives are plain functions.
"""

from .ctc import (collapse, ctc_grad, ctc_lattice, ctc_loss, greedy_decode,
                  lattice_stats, min_frames)
from .decoder import (BeamConfig, BeamSearchDecoder, BeamStats, ContextGraph,
                      GreedyCTCDecoder, Hypothesis, beam_search,
                      length_normalize, rescore_greedy, score_sequence)
from .errors import DataError, NumericError, ParameterError, PhonodecError
from .lm import (CorpusStats, KneserNeyLM, NGramModel, count_ngrams,
                 empty_model, lm_logprob, perplexity, read_arpa,
                 rescore_interpolate, train_kneser_ney, write_arpa)
from .metrics import (Alignment, align, confusion, error_rate,
                      expected_word_accuracy, precision_recall, wer)
from .model import (ConformerEncoder, ModelConfig, conformer_block_forward,
                    init_params, load_params, model_forward, param_count,
                    prenet_forward, rmsnorm, save_params, subsample_forward,
                    subsampled_length)
from .preprocessing import (FeatureMatrix, FilterSOS, PipelineConfig,
                            RawRecording, SessionStats, SignalPreprocessor,
                            apply_filter, bin_average, common_average_reference,
                            compute_session_stats, design_bandpass, preprocess,
                            zscore)
from .sweep import SweepResult, SweepSpec, run_sweep, top_k
from .training import (AdamWState, AugmentPolicy, SchedulerConfig, adamw_step,
                       clip_grad_norm, cosine_lr, label_smooth, specaugment)
from .trigger import (FrequencyTable, fitts_pointing_time, phoneme_frequencies,
                      rank_triggers, trigger_score)
from .vocab import (BLANK_ID, Vocabulary, decode, default_vocab, encode,
                    load_vocab, split_on_sil)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
