"""Audio-to-expression sequence model.

A small transformer that maps framed audio features to per-frame expression
coefficients: the expression history is embedded together with a speaker
embedding and sinusoidal positions, passed through causally masked
self-attention, then fused with the audio stream through cross-attention
whose bias matrix restricts each output frame to a narrow window of aligned
audio frames.  The output head starts at exactly zero, so a fresh model
predicts the all-zero expression sequence.

Decoding is autoregressive with a zero start vector; training is
teacher-forced against the mouth-weighted vertex loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .audio import AudioFeatures, audio_frontend, resample_linear
from .facemodel import FaceBasis, MouthMask, mean_identity, template_face


@dataclass
class PredictorConfig:
    """Model dimensions and the attention window.

    Defaults are sized for desk-scale experiments; production-scale values
    (d_model 1024, feed-forward 2048) work through the same fields.
    `lookback`/`lookahead` bound the audio window of output frame t to
    [t - lookback, t + lookahead); the defaults lock each frame to exactly
    its aligned audio frame.
    """

    d_model: int = 64
    cross_heads: int = 4
    self_heads: int = 4
    ff_dim: int = 256
    k_exp: int = 64
    n_identities: int = 1
    n_audio_features: int = 80
    lookback: int = 0
    lookahead: int = 1
    max_frames: int = 1000

    def __post_init__(self):
        if self.d_model % self.cross_heads or self.d_model % self.self_heads:
            raise ValueError("d_model must be divisible by both head counts")
        if self.lookback < 0 or self.lookahead < 0:
            raise ValueError("window offsets must be >= 0")


def positional_encoding(t_frames: int, d_model: int) -> np.ndarray:
    """Sinusoidal positions: even columns sin(t/10000^(2k/d)), odd columns cos."""
    pe = np.zeros((t_frames, d_model))
    pos = np.arange(t_frames, dtype=np.float64)[:, None]
    k = np.arange(0, d_model, 2, dtype=np.float64)
    angle = pos / (10000.0 ** (k / d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : pe[:, 1::2].shape[1]])
    return pe


def window_bias_matrix(t_frames: int, lookback: int, lookahead: int) -> np.ndarray:
    """Static T x T attention bias over {0, -inf}.

    Entry (i, j) is 0 when max(i - lookback, 0) <= j < min(i + lookahead, T);
    the upper clamp is T (not T - 1) so the final row keeps an aligned frame.
    Raises if any row would end up fully masked.
    """
    if t_frames < 1:
        raise ValueError("t_frames must be >= 1")
    i = np.arange(t_frames)[:, None]
    j = np.arange(t_frames)[None, :]
    allowed = (j >= i - lookback) & (j < i + lookahead)
    if not allowed.any(axis=1).all():
        raise ValueError(
            f"window (lookback={lookback}, lookahead={lookahead}) leaves a row "
            "with no attendable audio frame"
        )
    return np.where(allowed, 0.0, -np.inf)


def _split_heads(x, heads):
    t, d = x.shape
    return ad.transpose(ad.reshape(x, (t, heads, d // heads)), (1, 0, 2))


def _merge_heads(x):
    h, t, dh = x.shape
    return ad.reshape(ad.transpose(x, (1, 0, 2)), (t, h * dh))


def attention_core(q, k, v, allowed, heads):
    """Multi-head scaled dot-product attention with exact masking.

    q/k/v: (T, d) tensors (already projected); `allowed` is a boolean (T, T)
    matrix, broadcast over heads; masked entries are excluded from the
    softmax normalization entirely.  Returns the concatenated heads (T, d),
    before any output projection.
    """
    t, d = q.shape
    if k.shape != (t, d) or v.shape != (t, d):
        raise ValueError(f"q/k/v shapes disagree: {q.shape}, {k.shape}, {v.shape}")
    if d % heads:
        raise ValueError(f"d_model {d} not divisible by {heads} heads")
    dh = d // heads
    qh = _split_heads(q, heads)
    kh = _split_heads(k, heads)
    vh = _split_heads(v, heads)
    scores = ad.mul(ad.matmul(qh, ad.transpose(kh, (0, 2, 1))), dh**-0.5)
    probs = ad.masked_softmax(scores, allowed)
    return _merge_heads(ad.matmul(probs, vh))


def biased_cross_attention(q, k, v, bias, heads, w_out=None):
    """Cross-attention with a static additive bias matrix over {finite, -inf}.

    -inf entries are removed from the normalization exactly (no large-negative
    approximation); finite entries are added to the scaled scores.  Heads are
    concatenated and, when `w_out` is given, output-projected.
    """
    q, k, v = ad._lift(q), ad._lift(k), ad._lift(v)
    bias = np.asarray(bias, dtype=np.float64)
    t = q.shape[0]
    if bias.shape != (t, t):
        raise ValueError(f"bias must be ({t}, {t}), got {bias.shape}")
    allowed = np.isfinite(bias)
    if not allowed.any(axis=1).all():
        raise ValueError("bias matrix leaves a row with no unmasked entry")

    dh = q.shape[1] // heads
    qh = _split_heads(q, heads)
    kh = _split_heads(k, heads)
    vh = _split_heads(v, heads)
    scores = ad.mul(ad.matmul(qh, ad.transpose(kh, (0, 2, 1))), dh**-0.5)
    finite_part = np.where(allowed, bias, 0.0)
    if finite_part.any():
        scores = ad.add(scores, finite_part)
    probs = ad.masked_softmax(scores, allowed)
    out = _merge_heads(ad.matmul(probs, vh))
    if w_out is not None:
        out = ad.matmul(out, w_out)
    return out


class ExpressionPredictor:
    """Learnable weights plus forward/inference logic; all state in `params`."""

    def __init__(self, config: PredictorConfig, rng=None, seed=0):
        self.config = config
        rng = rng if rng is not None else np.random.default_rng(seed)
        c = config
        d = c.d_model

        def normal(shape, scale):
            return ad.Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True)

        def zeros(shape):
            return ad.Tensor(np.zeros(shape), requires_grad=True)

        def ones(shape):
            return ad.Tensor(np.ones(shape), requires_grad=True)

        p = {}
        p["audio_proj_w"] = normal((c.n_audio_features, d), c.n_audio_features**-0.5)
        p["audio_proj_b"] = zeros(d)
        p["expr_proj_w"] = normal((c.k_exp, d), c.k_exp**-0.5)
        p["expr_proj_b"] = zeros(d)
        p["id_embed"] = normal((c.n_identities, d), 0.5 * d**-0.5)
        for side in ("self", "cross"):
            for name in ("wq", "wk", "wv", "wo"):
                p[f"{side}_{name}"] = normal((d, d), d**-0.5)
            p[f"{side}_ln_g"] = ones(d)
            p[f"{side}_ln_b"] = zeros(d)
        p["ff_w1"] = normal((d, c.ff_dim), d**-0.5)
        p["ff_b1"] = zeros(c.ff_dim)
        p["ff_w2"] = normal((c.ff_dim, d), c.ff_dim**-0.5)
        p["ff_b2"] = zeros(d)
        p["ff_ln_g"] = ones(d)
        p["ff_ln_b"] = zeros(d)
        # the output head starts at exactly zero: a fresh model is silent
        p["head_w"] = zeros((d, c.k_exp))
        p["head_b"] = zeros(c.k_exp)
        self.params = p

    def parameters(self):
        return self.params

    def _check_identity(self, identity):
        identity = int(identity)
        if not 0 <= identity < self.config.n_identities:
            raise ValueError(
                f"identity {identity} out of range [0, {self.config.n_identities})"
            )
        return identity

    def embed_history(self, history, identity):
        """Projected history + speaker embedding + positions, before self-attention."""
        identity = self._check_identity(identity)
        history = ad._lift(history)
        t = history.shape[0]
        p = self.params
        fc = ad.add(ad.matmul(history, p["expr_proj_w"]), p["expr_proj_b"])
        with_id = ad.add(fc, p["id_embed"][identity])
        return ad.add(with_id, positional_encoding(t, self.config.d_model))

    def encode_expressions(self, history, identity):
        """Temporal expression embeddings after causally masked self-attention."""
        x = self.embed_history(history, identity)
        t = x.shape[0]
        p = self.params
        causal = np.tril(np.ones((t, t), dtype=bool))
        attn = attention_core(
            ad.matmul(x, p["self_wq"]),
            ad.matmul(x, p["self_wk"]),
            ad.matmul(x, p["self_wv"]),
            causal,
            self.config.self_heads,
        )
        attn = ad.matmul(attn, p["self_wo"])
        return ad.layer_norm(ad.add(x, attn), p["self_ln_g"], p["self_ln_b"])

    def forward(self, audio, history, identity):
        """Teacher-forced prediction: (T, k_exp) betas for a (T, k_exp) history.

        `audio` may be AudioFeatures (resampled here to T) or an already
        aligned (T, F) array.  Row 0 of the history is the zero start vector.
        """
        history = ad._lift(history)
        t = history.shape[0]
        if isinstance(audio, AudioFeatures):
            frames = resample_linear(audio.frames, t)
        else:
            frames = np.asarray(audio, dtype=np.float64)
            if frames.shape[0] != t:
                raise ValueError(
                    f"audio has {frames.shape[0]} frames but history has {t}"
                )
        p = self.params
        f_audio = ad.add(ad.matmul(ad.Tensor(frames), p["audio_proj_w"]), p["audio_proj_b"])
        f_expr = self.encode_expressions(history, identity)

        bias = window_bias_matrix(t, self.config.lookback, self.config.lookahead)
        cross = biased_cross_attention(
            ad.matmul(f_expr, p["cross_wq"]),
            ad.matmul(f_audio, p["cross_wk"]),
            ad.matmul(f_audio, p["cross_wv"]),
            bias,
            self.config.cross_heads,
            w_out=p["cross_wo"],
        )
        x = ad.layer_norm(ad.add(f_expr, cross), p["cross_ln_g"], p["cross_ln_b"])
        hidden = ad.relu(ad.add(ad.matmul(x, p["ff_w1"]), p["ff_b1"]))
        ff = ad.add(ad.matmul(hidden, p["ff_w2"]), p["ff_b2"])
        x = ad.layer_norm(ad.add(x, ff), p["ff_ln_g"], p["ff_ln_b"])
        return ad.add(ad.matmul(x, p["head_w"]), p["head_b"])

    def predict(self, audio: AudioFeatures, identity, n_frames: int) -> np.ndarray:
        """Autoregressive inference: generate n_frames betas from a zero start.

        Each step feeds the model the history built from its own outputs;
        causal masking keeps the zero placeholders for future rows invisible,
        so the result agrees exactly with a teacher-forced pass over the
        generated history.
        """
        if n_frames < 1:
            raise ValueError("n_frames must be >= 1")
        if n_frames > self.config.max_frames:
            raise ValueError(
                f"n_frames {n_frames} exceeds max_frames {self.config.max_frames}"
            )
        frames = resample_linear(audio.frames, n_frames)
        history = np.zeros((n_frames, self.config.k_exp))
        with ad.no_grad():
            for t in range(n_frames):
                out = self.forward(frames, history, identity).data
                if t + 1 < n_frames:
                    history[t + 1] = out[t]
        return out.copy()


def shift_right(betas: np.ndarray) -> np.ndarray:
    """Teacher-forcing history: zero start vector followed by betas[:-1]."""
    betas = np.asarray(betas, dtype=np.float64)
    history = np.zeros_like(betas)
    history[1:] = betas[:-1]
    return history


def vertex_loss_graph(pred, gt_betas, basis: FaceBasis, mouth: MouthMask, lambda_m):
    """Differentiable mouth-weighted vertex loss over a predicted beta tensor.

    Matches facemodel.vertex_prediction_loss: the shared template cancels in
    the difference, so only the expression basis enters the graph.
    """
    diff = ad.matmul(ad.sub(pred, np.asarray(gt_betas, dtype=np.float64)),
                     basis.basis_exp.T)
    weights = np.repeat(mouth.vector, 3)
    mouth_term = ad.mean(ad.power(ad.mul(diff, weights), 2.0))
    rest_term = ad.mean(ad.power(ad.mul(diff, 1.0 - weights), 2.0))
    return ad.add(ad.mul(mouth_term, float(lambda_m)), rest_term)


_CONFIG_FIELDS = (
    "d_model",
    "cross_heads",
    "self_heads",
    "ff_dim",
    "k_exp",
    "n_identities",
    "n_audio_features",
    "lookback",
    "lookahead",
    "max_frames",
)


def save_predictor(path, model: ExpressionPredictor):
    """Checkpoint weights plus the config scalars needed to rebuild the model."""
    from .formats import save_checkpoint

    arrays = {f"config/{f}": np.float64(getattr(model.config, f)) for f in _CONFIG_FIELDS}
    arrays.update({name: p.data for name, p in model.params.items()})
    save_checkpoint(path, arrays)


def load_predictor(path) -> ExpressionPredictor:
    from .formats import load_checkpoint

    arrays = load_checkpoint(path)
    config = PredictorConfig(
        **{f: int(arrays.pop(f"config/{f}")) for f in _CONFIG_FIELDS}
    )
    model = ExpressionPredictor(config, seed=0)
    for name, param in model.params.items():
        if name not in arrays:
            raise ValueError(f"checkpoint missing parameter '{name}'")
        if arrays[name].shape != param.data.shape:
            raise ValueError(
                f"checkpoint parameter '{name}' has shape {arrays[name].shape}, "
                f"expected {param.data.shape}"
            )
        param.data = arrays[name]
    return model


@dataclass
class TrainingLog:
    losses: list = field(default_factory=list)

    @property
    def initial(self):
        return self.losses[0]

    @property
    def final(self):
        return self.losses[-1]


def train_expression_predictor(
    dataset,
    config: PredictorConfig,
    basis: FaceBasis,
    mouth: MouthMask,
    lambda_m: float = 1.8,
    steps: int = 300,
    lr: float = 1e-4,
    seed: int = 0,
):
    """Teacher-forced training against the vertex loss with Adam.

    `dataset` is a sequence of (waveform, betas (T, k_exp), identity) triples;
    clips are visited round-robin, one clip per step, with a fixed sequence
    length per batch.  Returns (model, TrainingLog).  Bit-reproducible for a
    fixed seed: the only randomness is the parameter initialization.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("empty training dataset")
    prepared = []
    for waveform, betas, identity in dataset:
        betas = np.asarray(betas, dtype=np.float64)
        if betas.shape[1] != config.k_exp:
            raise ValueError(
                f"betas have {betas.shape[1]} channels, expected {config.k_exp}"
            )
        feats = audio_frontend(waveform)
        frames = resample_linear(feats.frames, betas.shape[0])
        prepared.append((frames, betas, shift_right(betas), int(identity)))

    rng = np.random.default_rng(seed)
    model = ExpressionPredictor(config, rng=rng)
    opt = ad.Adam(model.params.values(), lr=lr)
    log = TrainingLog()
    for step in range(steps):
        frames, betas, history, identity = prepared[step % len(prepared)]
        pred = model.forward(frames, history, identity)
        loss = vertex_loss_graph(pred, betas, basis, mouth, lambda_m)
        opt.zero_grad()
        ad.backward(loss)
        opt.step()
        log.losses.append(loss.item())
    return model, log
