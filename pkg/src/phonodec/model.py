"""Deterministic forward computation of the Conformer-style encoder.

Architecture: temporal prenet (two dilated convolutions, each followed by
RMSNorm and ReLU, then a bidirectional GRU and linear projection to the model
width), three stride-2 GELU convolutions for 8x subsampling, N macaron
Conformer blocks with pre-RMSNorm, a final RMSNorm, and a linear projection
to log-softmax class scores.

Everything runs in float64 numpy with no data-dependent control flow, so the
forward pass is bitwise reproducible for a given seed and configuration.
Dropout exists in the configuration but is inert: this is an inference-only
artifact.  Batch items are processed one at a time at their true lengths, so
no padding or masking enters the math.
"""

from __future__ import annotations

import dataclasses
import json
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, log_softmax
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import DataError, NumericError, ParameterError
from .ndjson import read_ndjson, require_fields, write_ndjson

PARAMS_MAGIC = b"CXL1"


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int = 512
    d_model: int = 384
    num_layers: int = 12
    num_heads: int = 6
    head_dim: int = 64
    ff_expansion: int = 4
    conv_kernel: int = 15
    prenet_kernel: int = 5
    prenet_gru_hidden: int = 256
    groupnorm_groups: int = 32
    dropout: float = 0.15
    vocab_size: int = 42

    def __post_init__(self):
        if self.d_model != self.num_heads * self.head_dim:
            raise ParameterError("d_model must equal num_heads * head_dim")
        if self.conv_kernel % 2 == 0:
            raise ParameterError("conv_kernel must be odd")
        if (2 * self.d_model) % self.groupnorm_groups != 0:
            raise ParameterError("groupnorm_groups must divide the conv expansion width")
        for name in ("input_dim", "d_model", "num_layers", "num_heads", "head_dim",
                     "ff_expansion", "prenet_kernel", "prenet_gru_hidden", "vocab_size"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1")


def config_to_json(cfg: ModelConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(dataclasses.asdict(cfg), fh, indent=2)
        fh.write("\n")


def config_from_json(path) -> ModelConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    known = {f.name for f in dataclasses.fields(ModelConfig)}
    unknown = set(raw) - known
    if unknown:
        raise DataError(f"{path}: unknown model config keys {sorted(unknown)}")
    return ModelConfig(**raw)


def param_spec(cfg: ModelConfig):
    """Ordered (name, shape, fan_in) for every tensor of the model.

    fan_in is None for gains and biases (initialized to 1 and 0); weights
    draw from uniform(+-1/sqrt(fan_in)) in exactly this enumeration order.
    """
    c, d = cfg.input_dim, cfg.d_model
    h = cfg.prenet_gru_hidden
    k = cfg.prenet_kernel
    f = cfg.ff_expansion * d
    spec = []

    def tensor(name, shape, fan_in=None):
        spec.append((name, tuple(shape), fan_in))

    tensor("prenet.conv1.w", (c, c, k), c * k)
    tensor("prenet.conv1.b", (c,))
    tensor("prenet.norm1.g", (c,))
    tensor("prenet.conv2.w", (c, c, k), c * k)
    tensor("prenet.conv2.b", (c,))
    tensor("prenet.norm2.g", (c,))
    for direction in ("fwd", "bwd"):
        for gate in ("z", "r", "h"):
            tensor(f"prenet.gru.{direction}.w_{gate}", (c, h), c)
            tensor(f"prenet.gru.{direction}.u_{gate}", (h, h), h)
            tensor(f"prenet.gru.{direction}.b_{gate}", (h,))
    tensor("prenet.proj.w", (2 * h, d), 2 * h)
    tensor("prenet.proj.b", (d,))

    for i in range(3):
        tensor(f"subsample.{i}.w", (d, d, 3), d * 3)
        tensor(f"subsample.{i}.b", (d,))

    for i in range(cfg.num_layers):
        p = f"block{i}"
        tensor(f"{p}.ffn1.norm.g", (d,))
        tensor(f"{p}.ffn1.w1", (d, f), d)
        tensor(f"{p}.ffn1.b1", (f,))
        tensor(f"{p}.ffn1.w2", (f, d), f)
        tensor(f"{p}.ffn1.b2", (d,))
        tensor(f"{p}.attn.norm.g", (d,))
        tensor(f"{p}.attn.wq", (d, d), d)
        tensor(f"{p}.attn.wk", (d, d), d)
        tensor(f"{p}.attn.wv", (d, d), d)
        tensor(f"{p}.attn.wo", (d, d), d)
        tensor(f"{p}.conv.norm.g", (d,))
        tensor(f"{p}.conv.pw1.w", (d, 2 * d), d)
        tensor(f"{p}.conv.pw1.b", (2 * d,))
        tensor(f"{p}.conv.dw.w", (d, cfg.conv_kernel), cfg.conv_kernel)
        tensor(f"{p}.conv.dw.b", (d,))
        tensor(f"{p}.conv.gn.g", (d,))
        tensor(f"{p}.conv.gn.b", (d,))
        tensor(f"{p}.conv.pw2.w", (d, d), d)
        tensor(f"{p}.conv.pw2.b", (d,))
        tensor(f"{p}.ffn2.norm.g", (d,))
        tensor(f"{p}.ffn2.w1", (d, f), d)
        tensor(f"{p}.ffn2.b1", (f,))
        tensor(f"{p}.ffn2.w2", (f, d), f)
        tensor(f"{p}.ffn2.b2", (d,))

    tensor("final_norm.g", (d,))
    tensor("out.w", (d, cfg.vocab_size), d)
    tensor("out.b", (cfg.vocab_size,))
    return spec


def init_params(cfg: ModelConfig, seed: int) -> dict:
    """Seeded initialization: weights ~ U(+-1/sqrt(fan_in)), gains 1, biases 0."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape, fan_in in param_spec(cfg):
        if fan_in is None:
            fill = 1.0 if name.endswith(".g") else 0.0
            params[name] = np.full(shape, fill, dtype=np.float64)
        else:
            bound = 1.0 / np.sqrt(fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def param_count(cfg: ModelConfig) -> int:
    """Total scalar parameter count implied by the configuration."""
    return sum(int(np.prod(shape)) for _, shape, _ in param_spec(cfg))


# ---------------------------------------------------------------------------
# primitive layers

def rmsnorm(x, gamma, eps: float = 1e-8):
    """x / sqrt(mean(x^2) + eps) * gamma along the last dimension."""
    x = np.asarray(x, dtype=np.float64)
    ms = np.mean(x * x, axis=-1, keepdims=True)
    return x / np.sqrt(ms + eps) * gamma


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def swish(x):
    return x * _sigmoid(x)


def conv1d(x, w, b, dilation: int = 1, stride: int = 1):
    """Symmetrically zero-padded 1D convolution over time.

    x: [T, C_in]; w: [C_out, C_in, k].  Padding is dilation*(k-1)//2 per side
    so stride 1 preserves T and stride 2 yields ceil(T/2) for kernel 3.
    """
    frames = x.shape[0]
    k = w.shape[2]
    pad = dilation * (k - 1) // 2
    padded = np.zeros((frames + 2 * pad, x.shape[1]), dtype=np.float64)
    padded[pad:pad + frames] = x
    starts = np.arange(0, frames, stride)
    taps = starts[:, None] + dilation * np.arange(k)[None, :]
    windows = padded[taps]  # [T_out, k, C_in]
    return np.einsum("oik,tki->to", w, windows, optimize=True) + b


def depthwise_conv1d(x, w, b):
    """Per-channel convolution; x: [T, C], w: [C, k], symmetric padding."""
    frames, channels = x.shape
    k = w.shape[1]
    pad = (k - 1) // 2
    padded = np.zeros((frames + 2 * pad, channels), dtype=np.float64)
    padded[pad:pad + frames] = x
    taps = np.arange(frames)[:, None] + np.arange(k)[None, :]
    windows = padded[taps]  # [T, k, C]
    return np.einsum("ck,tkc->tc", w, windows, optimize=True) + b


def groupnorm(x, gamma, beta, groups: int, eps: float = 1e-5):
    """Normalize over (time, channels-per-group) within each group."""
    frames, channels = x.shape
    grouped = x.reshape(frames, groups, channels // groups)
    mean = grouped.mean(axis=(0, 2), keepdims=True)
    var = grouped.var(axis=(0, 2), keepdims=True)
    normed = ((grouped - mean) / np.sqrt(var + eps)).reshape(frames, channels)
    return normed * gamma + beta


def sinusoidal_positions(frames: int, dim: int) -> np.ndarray:
    """Absolute sinusoidal encodings, interleaved sin/cos pairs."""
    positions = np.arange(frames, dtype=np.float64)[:, None]
    half = np.arange(0, dim, 2, dtype=np.float64)
    freq = np.exp(-np.log(10000.0) * half / dim)
    angles = positions * freq[None, :]
    pe = np.zeros((frames, dim), dtype=np.float64)
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles[:, : dim // 2])
    return pe


def _gru_direction(x, params, prefix: str, reverse: bool):
    w_z, u_z, b_z = params[f"{prefix}.w_z"], params[f"{prefix}.u_z"], params[f"{prefix}.b_z"]
    w_r, u_r, b_r = params[f"{prefix}.w_r"], params[f"{prefix}.u_r"], params[f"{prefix}.b_r"]
    w_h, u_h, b_h = params[f"{prefix}.w_h"], params[f"{prefix}.u_h"], params[f"{prefix}.b_h"]
    frames = x.shape[0]
    hidden = b_z.shape[0]
    order = range(frames - 1, -1, -1) if reverse else range(frames)
    xs_z = x @ w_z + b_z
    xs_r = x @ w_r + b_r
    xs_h = x @ w_h + b_h
    h = np.zeros(hidden, dtype=np.float64)
    out = np.zeros((frames, hidden), dtype=np.float64)
    for t in order:
        z = _sigmoid(xs_z[t] + h @ u_z)
        r = _sigmoid(xs_r[t] + h @ u_r)
        h_tilde = np.tanh(xs_h[t] + (r * h) @ u_h)
        h = (1.0 - z) * h + z * h_tilde
        out[t] = h
    return out


def bigru_forward(params, x) -> np.ndarray:
    """Bidirectional GRU; forward and backward states concatenated."""
    fwd = _gru_direction(x, params, "prenet.gru.fwd", reverse=False)
    bwd = _gru_direction(x, params, "prenet.gru.bwd", reverse=True)
    return np.concatenate([fwd, bwd], axis=1)


def _check_finite(x, layer: str):
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite activation in {layer}")
    return x


def prenet_forward(params, x) -> np.ndarray:
    """Dilated convs + BiGRU + projection; time length preserved.  x: [T, C]."""
    h = rmsnorm(conv1d(x, params["prenet.conv1.w"], params["prenet.conv1.b"],
                       dilation=1), params["prenet.norm1.g"])
    h = np.maximum(h, 0.0)
    h = rmsnorm(conv1d(h, params["prenet.conv2.w"], params["prenet.conv2.b"],
                       dilation=2), params["prenet.norm2.g"])
    h = np.maximum(h, 0.0)
    h = bigru_forward(params, h)
    return _check_finite(h @ params["prenet.proj.w"] + params["prenet.proj.b"],
                         "prenet")


def subsampled_length(frames: int) -> int:
    for _ in range(3):
        frames = -(-frames // 2)  # ceil division
    return frames


def subsample_forward(params, x) -> np.ndarray:
    """Three stride-2 kernel-3 convolutions with GELU; T -> ceil^3(T/2)."""
    h = x
    for i in range(3):
        h = gelu(conv1d(h, params[f"subsample.{i}.w"], params[f"subsample.{i}.b"],
                        stride=2))
    return _check_finite(h, "subsample")


def _ffn(params, prefix, x):
    h = gelu(x @ params[f"{prefix}.w1"] + params[f"{prefix}.b1"])
    return h @ params[f"{prefix}.w2"] + params[f"{prefix}.b2"]


def _mhsa(params, prefix, x, cfg: ModelConfig):
    frames = x.shape[0]
    q = x @ params[f"{prefix}.wq"]
    k = x @ params[f"{prefix}.wk"]
    v = x @ params[f"{prefix}.wv"]
    heads = []
    scale = 1.0 / np.sqrt(cfg.head_dim)
    for head in range(cfg.num_heads):
        sl = slice(head * cfg.head_dim, (head + 1) * cfg.head_dim)
        scores = (q[:, sl] @ k[:, sl].T) * scale
        scores -= scores.max(axis=1, keepdims=True)
        weights = np.exp(scores)
        weights /= weights.sum(axis=1, keepdims=True)
        heads.append(weights @ v[:, sl])
    ctx = np.concatenate(heads, axis=1).reshape(frames, cfg.d_model)
    return ctx @ params[f"{prefix}.wo"]


def _conv_module(params, prefix, x, cfg: ModelConfig):
    d = cfg.d_model
    h = x @ params[f"{prefix}.pw1.w"] + params[f"{prefix}.pw1.b"]  # [T, 2d]
    h = h[:, :d] * _sigmoid(h[:, d:])  # GLU halves the channels
    h = depthwise_conv1d(h, params[f"{prefix}.dw.w"], params[f"{prefix}.dw.b"])
    h = groupnorm(h, params[f"{prefix}.gn.g"], params[f"{prefix}.gn.b"],
                  cfg.groupnorm_groups)
    h = swish(h)
    return h @ params[f"{prefix}.pw2.w"] + params[f"{prefix}.pw2.b"]


def conformer_block_forward(params, block: int, x, cfg: ModelConfig) -> np.ndarray:
    """Macaron sandwich with pre-RMSNorm; residual weights 0.5/1.0/1.0/0.5."""
    p = f"block{block}"
    x = x + 0.5 * _ffn(params, f"{p}.ffn1",
                       rmsnorm(x, params[f"{p}.ffn1.norm.g"]))
    x = x + _mhsa(params, f"{p}.attn",
                  rmsnorm(x, params[f"{p}.attn.norm.g"]), cfg)
    x = x + _conv_module(params, f"{p}.conv",
                         rmsnorm(x, params[f"{p}.conv.norm.g"]), cfg)
    x = x + 0.5 * _ffn(params, f"{p}.ffn2",
                       rmsnorm(x, params[f"{p}.ffn2.norm.g"]))
    return _check_finite(x, f"block{block}")


def forward_one(params, features, cfg: ModelConfig) -> np.ndarray:
    """Log-probability matrix [T', vocab_size] for one trial [T, input_dim]."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != cfg.input_dim:
        raise DataError(f"expected [T, {cfg.input_dim}] features, got {x.shape}")
    h = prenet_forward(params, x)
    h = subsample_forward(params, h)
    h = h + sinusoidal_positions(h.shape[0], cfg.d_model)
    for i in range(cfg.num_layers):
        h = conformer_block_forward(params, i, h, cfg)
    h = rmsnorm(h, params["final_norm.g"])
    logits = h @ params["out.w"] + params["out.b"]
    return _check_finite(log_softmax(logits, axis=1), "output")


def model_forward(params, features, cfg: ModelConfig):
    """Forward a batch (list of [T_i, input_dim] arrays, or [B, T, C] with
    lengths); returns (list of log-prob matrices, output lengths)."""
    if isinstance(features, np.ndarray) and features.ndim == 3:
        items = [features[i] for i in range(features.shape[0])]
    else:
        items = list(features)
    outputs = [forward_one(params, item, cfg) for item in items]
    return outputs, [out.shape[0] for out in outputs]


# ---------------------------------------------------------------------------
# persistence

def save_params(params: dict, path) -> None:
    """Flat binary: CXL1 magic, then per tensor name/rank/dims/float32 data."""
    with open(path, "wb") as fh:
        fh.write(PARAMS_MAGIC)
        for name, tensor in params.items():
            blob = name.encode("utf-8")
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            fh.write(struct.pack("<I", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(np.ascontiguousarray(tensor, dtype=np.float32).tobytes())


def load_params(path) -> dict:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != PARAMS_MAGIC:
        raise DataError(f"{path}: bad magic, not a params file")
    params = {}
    offset = 4
    try:
        while offset < len(blob):
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            dims = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            data = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
            offset += 4 * count
            params[name] = data.reshape(dims).astype(np.float64)
    except (struct.error, ValueError) as exc:
        raise DataError(f"{path}: truncated or corrupt params file") from exc
    return params


def write_logits(path, rows) -> None:
    """Logits NDJSON: {"trial_id","frames":[[vocab log-probs]...]}."""
    write_ndjson(path, ({"trial_id": trial_id, "frames": np.asarray(m).tolist()}
                        for trial_id, m in rows))


def read_logits(path) -> list:
    out = []
    for i, rec in enumerate(read_ndjson(path)):
        require_fields(rec, ("trial_id", "frames"), f"{path} record {i}")
        out.append((str(rec["trial_id"]), np.asarray(rec["frames"], dtype=np.float64)))
    return out


class ConformerEncoder(TransformerMixin, BaseEstimator):
    """Inference-only encoder estimator.

    ``fit`` draws the seeded random weights (no training happens at this
    scale); ``transform`` maps feature arrays to per-trial log-probability
    matrices.
    """

    def __init__(self, input_dim=512, d_model=384, num_layers=12, num_heads=6,
                 head_dim=64, ff_expansion=4, conv_kernel=15, prenet_kernel=5,
                 prenet_gru_hidden=256, groupnorm_groups=32, dropout=0.15,
                 vocab_size=42, seed=0):
        self.input_dim = input_dim
        self.d_model = d_model
        self.num_layers = num_layers
        self.num_heads = num_heads
        self.head_dim = head_dim
        self.ff_expansion = ff_expansion
        self.conv_kernel = conv_kernel
        self.prenet_kernel = prenet_kernel
        self.prenet_gru_hidden = prenet_gru_hidden
        self.groupnorm_groups = groupnorm_groups
        self.dropout = dropout
        self.vocab_size = vocab_size
        self.seed = seed

    def config(self) -> ModelConfig:
        fields = {f.name for f in dataclasses.fields(ModelConfig)}
        return ModelConfig(**{k: v for k, v in self.get_params().items()
                              if k in fields})

    def fit(self, X=None, y=None):
        self.config_ = self.config()
        self.params_ = init_params(self.config_, self.seed)
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        outputs, _ = model_forward(self.params_, X, self.config_)
        return outputs
