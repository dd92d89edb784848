"""Neural-signal preprocessing: bandpass filter, CAR, binning, z-scoring.

The pipeline turns raw high-rate multichannel recordings (channel x time)
into normalized 50 Hz feature matrices (time x channel) in four stages:

1. causal Butterworth bandpass (cascaded second-order sections),
2. common average reference across channels,
3. non-overlapping temporal bin averaging,
4. per-session, per-channel z-score normalization.

All stages are pure functions; :class:`SignalPreprocessor` wraps them in a
scikit-learn transformer so sessions can be fit once and trials transformed
independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sp_signal
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import DataError, NumericError, ParameterError
from .ndjson import read_ndjson, require_fields, write_ndjson

DEFAULT_SAMPLE_RATE_HZ = 30_000.0
DEFAULT_BIN = 600  # 30 kHz -> 50 Hz


@dataclass
class RawRecording:
    """One trial of raw multichannel samples, channel-major."""

    samples: np.ndarray  # [channels, time]
    sample_rate_hz: float = DEFAULT_SAMPLE_RATE_HZ
    session: str = ""
    trial_id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise DataError("raw samples must be a channel x time array")
        if self.sample_rate_hz <= 0:
            raise DataError("sample_rate_hz must be positive")


@dataclass
class FeatureMatrix:
    """Time-major feature array at the binned frame rate."""

    values: np.ndarray  # [time, channels]
    frame_rate_hz: float = 50.0
    session: str = ""
    trial_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError("feature values must be a time x channel array")
        if not np.all(np.isfinite(self.values)):
            raise DataError("feature values must be finite")


@dataclass
class SessionStats:
    """Pooled per-channel mean and population std for one session."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise DataError("stats mean/std must be equal-length vectors")
        if np.any(self.std < 0):
            raise DataError("stats std must be non-negative")


@dataclass
class FilterSOS:
    """Cascaded biquad sections with the design metadata that produced them."""

    sections: np.ndarray  # [n_sections, 6] rows (b0, b1, b2, a0, a1, a2)
    order: int
    low_hz: float
    high_hz: float
    sample_rate_hz: float


@dataclass
class PipelineConfig:
    filter_order: int = 4
    low_hz: float = 0.3
    high_hz: float = 300.0
    bin_size: int = DEFAULT_BIN
    eps: float = 1e-8
    _filters: dict = field(default_factory=dict, repr=False)

    def filter_for(self, sample_rate_hz: float) -> FilterSOS:
        # one design per sample rate; recordings in a session share it
        key = float(sample_rate_hz)
        if key not in self._filters:
            self._filters[key] = design_bandpass(
                self.filter_order, self.low_hz, self.high_hz, key
            )
        return self._filters[key]


def design_bandpass(order: int, low_hz: float, high_hz: float,
                    sample_rate_hz: float) -> FilterSOS:
    """Butterworth bandpass as second-order sections.

    ``order`` is the prototype order per band edge, so the digital filter has
    2 * order poles.  Sections are verified stable (poles strictly inside the
    unit circle); the very low edge relative to the sample rate is the reason
    for the SOS realization in the first place.
    """
    if order < 1:
        raise ParameterError(f"filter order must be >= 1, got {order}")
    if not 0.0 < low_hz < high_hz < sample_rate_hz / 2.0:
        raise ParameterError(
            f"invalid band [{low_hz}, {high_hz}] Hz at fs={sample_rate_hz} Hz"
        )
    sos = sp_signal.butter(order, [low_hz, high_hz], btype="bandpass",
                           fs=sample_rate_hz, output="sos")
    sos = np.asarray(sos, dtype=np.float64)
    for row in sos:
        poles = np.roots(row[3:])
        if np.any(np.abs(poles) >= 1.0):
            raise NumericError(
                "unstable filter section for band "
                f"[{low_hz}, {high_hz}] at fs={sample_rate_hz}"
            )
    return FilterSOS(sections=sos, order=order, low_hz=low_hz,
                     high_hz=high_hz, sample_rate_hz=sample_rate_hz)


def apply_filter(filt: FilterSOS, rec: RawRecording) -> RawRecording:
    """Causal per-channel filtering with zero initial state; shape preserved."""
    if rec.samples.shape[1] == 0:
        raise DataError("cannot filter an empty recording")
    out = sp_signal.sosfilt(filt.sections, rec.samples, axis=1)
    if not np.all(np.isfinite(out)):
        raise NumericError("filter produced non-finite output (unstable cascade)")
    return RawRecording(samples=out, sample_rate_hz=rec.sample_rate_hz,
                        session=rec.session, trial_id=rec.trial_id)


def common_average_reference(x: np.ndarray) -> np.ndarray:
    """Subtract the cross-channel mean at every time point."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ParameterError("CAR needs at least 2 channels")
    return x - x.mean(axis=0, keepdims=True)


def bin_average(x: np.ndarray, bin_size: int) -> np.ndarray:
    """Average channel x time into non-overlapping bins, time-major output.

    The trailing partial bin is dropped; output shape is
    ``[time // bin_size, channels]``.
    """
    x = np.asarray(x, dtype=np.float64)
    if bin_size < 1:
        raise ParameterError(f"bin size must be >= 1, got {bin_size}")
    channels, time = x.shape
    n_bins = time // bin_size
    if n_bins == 0:
        raise DataError(f"recording of {time} samples shorter than one bin ({bin_size})")
    trimmed = x[:, : n_bins * bin_size]
    binned = trimmed.reshape(channels, n_bins, bin_size).mean(axis=2)
    return binned.T.copy()


def compute_session_stats(frames) -> SessionStats:
    """Pool per-channel mean and population std over all frames of a session.

    ``frames`` is a non-empty list of time x channel arrays (or
    FeatureMatrix) with a consistent channel count.
    """
    arrays = [f.values if isinstance(f, FeatureMatrix) else np.asarray(f, dtype=np.float64)
              for f in frames]
    if not arrays:
        raise DataError("cannot compute session stats from an empty list")
    channels = arrays[0].shape[1]
    for a in arrays:
        if a.ndim != 2 or a.shape[1] != channels:
            raise DataError("inconsistent channel count across session frames")
    pooled = np.concatenate(arrays, axis=0)
    return SessionStats(mean=pooled.mean(axis=0), std=pooled.std(axis=0, ddof=0))


def zscore(frame, stats: SessionStats, eps: float = 1e-8):
    """Per-channel (x - mean) / max(std, eps); constant channels map to 0."""
    values = frame.values if isinstance(frame, FeatureMatrix) else np.asarray(frame, dtype=np.float64)
    denom = np.maximum(stats.std, eps)
    out = (values - stats.mean[None, :]) / denom[None, :]
    if isinstance(frame, FeatureMatrix):
        return FeatureMatrix(values=out, frame_rate_hz=frame.frame_rate_hz,
                             session=frame.session, trial_id=frame.trial_id)
    return out


def preprocess(rec: RawRecording, stats: SessionStats | None = None,
               cfg: PipelineConfig | None = None) -> FeatureMatrix:
    """Full pipeline: filter -> CAR -> bin -> z-score.

    When ``stats`` is None the recording is normalized against its own
    binned statistics.
    """
    cfg = cfg or PipelineConfig()
    filtered = apply_filter(cfg.filter_for(rec.sample_rate_hz), rec)
    referenced = common_average_reference(filtered.samples)
    binned = bin_average(referenced, cfg.bin_size)
    if stats is None:
        stats = compute_session_stats([binned])
    normalized = zscore(binned, stats, cfg.eps)
    return FeatureMatrix(values=normalized,
                         frame_rate_hz=rec.sample_rate_hz / cfg.bin_size,
                         session=rec.session, trial_id=rec.trial_id)


class SignalPreprocessor(TransformerMixin, BaseEstimator):
    """Session-aware preprocessing transformer.

    ``fit`` runs filter/CAR/bin over the given trials and pools the session
    statistics; ``transform`` then normalizes each trial against them.  The
    input is a list of channel x time arrays (or RawRecording); the output is
    a list of time x channel feature arrays.
    """

    def __init__(self, filter_order=4, low_hz=0.3, high_hz=300.0,
                 bin_size=DEFAULT_BIN, eps=1e-8,
                 sample_rate_hz=DEFAULT_SAMPLE_RATE_HZ):
        self.filter_order = filter_order
        self.low_hz = low_hz
        self.high_hz = high_hz
        self.bin_size = bin_size
        self.eps = eps
        self.sample_rate_hz = sample_rate_hz

    def _config(self) -> PipelineConfig:
        return PipelineConfig(filter_order=self.filter_order, low_hz=self.low_hz,
                              high_hz=self.high_hz, bin_size=self.bin_size,
                              eps=self.eps)

    def _as_recording(self, item) -> RawRecording:
        if isinstance(item, RawRecording):
            return item
        return RawRecording(samples=item, sample_rate_hz=self.sample_rate_hz)

    def _binned(self, item, cfg: PipelineConfig) -> np.ndarray:
        rec = self._as_recording(item)
        filtered = apply_filter(cfg.filter_for(rec.sample_rate_hz), rec)
        return bin_average(common_average_reference(filtered.samples), cfg.bin_size)

    def fit(self, X, y=None):
        cfg = self._config()
        binned = [self._binned(item, cfg) for item in X]
        self.stats_ = compute_session_stats(binned)
        self.cfg_ = cfg
        return self

    def transform(self, X):
        check_is_fitted(self, "stats_")
        return [zscore(self._binned(item, self.cfg_), self.stats_, self.eps)
                for item in X]


# ---------------------------------------------------------------------------
# file formats

def read_raw_trials(path) -> list[RawRecording]:
    """Raw trial NDJSON: {"session","trial_id","sample_rate_hz","samples"}."""
    trials = []
    for i, rec in enumerate(read_ndjson(path)):
        require_fields(rec, ("trial_id", "sample_rate_hz", "samples"),
                       f"{path} record {i}")
        trials.append(RawRecording(samples=np.asarray(rec["samples"], dtype=np.float64),
                                   sample_rate_hz=float(rec["sample_rate_hz"]),
                                   session=str(rec.get("session", "")),
                                   trial_id=str(rec["trial_id"])))
    return trials


def write_raw_trials(path, trials) -> None:
    write_ndjson(path, ({"session": t.session, "trial_id": t.trial_id,
                         "sample_rate_hz": t.sample_rate_hz,
                         "samples": t.samples.tolist()} for t in trials))


def read_features(path) -> list[FeatureMatrix]:
    """Feature NDJSON: {"session","trial_id","frame_rate_hz","features"}."""
    out = []
    for i, rec in enumerate(read_ndjson(path)):
        require_fields(rec, ("trial_id", "frame_rate_hz", "features"),
                       f"{path} record {i}")
        out.append(FeatureMatrix(values=np.asarray(rec["features"], dtype=np.float64),
                                 frame_rate_hz=float(rec["frame_rate_hz"]),
                                 session=str(rec.get("session", "")),
                                 trial_id=str(rec["trial_id"])))
    return out


def write_features(path, frames) -> None:
    write_ndjson(path, ({"session": f.session, "trial_id": f.trial_id,
                         "frame_rate_hz": f.frame_rate_hz,
                         "features": f.values.tolist()} for f in frames))
