"""The rhythm network: per-frame feature extractor, VAE latent head, and a
bidirectional GRU stack with windowed additive attention feeding a class head.

Frame path: 60 frequency bins -> residual conv block -> channel mean ->
3-wide average pooling -> 20-float feature -> Gaussian latent (dim 8).
Sequence path: latent frames -> stacked bi-GRUs; between layers, additive
attention collapses consecutive windows (span growing linearly per layer),
and a final global attention produces the head input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ShapeMismatch, TooFewFrames

FRONTEND_VAE = "vae"
FRONTEND_DENSE = "dense_projection"


@dataclass(frozen=True)
class ModelConfig:
    n_res_units: int = 1
    feature_dim: int = 20
    latent_dim: int = 8
    rnn_hidden: int = 10
    rnn_layers: int = 4
    min_attention_window: int = 3
    n_classes: int = 5
    kept_bins: int = 60
    res_channels: int = 4
    res_kernel: int = 3
    head_hidden: int = 16

    def __post_init__(self):
        for name in ("n_res_units", "feature_dim", "latent_dim", "rnn_hidden",
                     "rnn_layers", "min_attention_window", "n_classes",
                     "kept_bins", "res_channels", "res_kernel", "head_hidden"):
            if getattr(self, name) <= 0:
                raise ShapeMismatch(f"ModelConfig.{name}", (getattr(self, name),))
        if self.rnn_layers < 2:
            raise ShapeMismatch("ModelConfig.rnn_layers >= 2", (self.rnn_layers,))
        if self.kept_bins % self.feature_dim != 0:
            raise ShapeMismatch("kept_bins must be a multiple of feature_dim",
                                (self.kept_bins,), (self.feature_dim,))

    @property
    def pool_width(self) -> int:
        return self.kept_bins // self.feature_dim

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class LatentSequence:
    """Per-frame Gaussian parameters for one chunk."""

    means: np.ndarray      # (frames, latent_dim)
    log_vars: np.ndarray   # (frames, latent_dim)

    @property
    def n_frames(self) -> int:
        return self.means.shape[0]


@dataclass
class ForwardResult:
    probs: np.ndarray
    latents: LatentSequence
    recon_per_frame: np.ndarray | None = None
    kl_per_frame: np.ndarray | None = None
    features: np.ndarray | None = None
    decoded: np.ndarray | None = None


def attention_window_spans(cfg: ModelConfig) -> list[int]:
    """Window span per attended layer: the base span scaled by layer index."""
    return [cfg.min_attention_window * l for l in range(1, cfg.rnn_layers)]


def attention_stage_lengths(cfg: ModelConfig, n_frames: int) -> list[int]:
    """Sequence length after each windowed-attention stage (ceil division)."""
    lengths = [n_frames]
    for span in attention_window_spans(cfg):
        lengths.append(-(-lengths[-1] // span))
    return lengths


class _ParamStore:
    def __init__(self, dtype):
        self.dtype = dtype
        self.params: dict[str, ad.Tensor] = {}

    def glorot(self, name: str, shape: tuple, rng: ad.Rng, fan_in: int,
               fan_out: int, gain: float = 1.0) -> ad.Tensor:
        limit = gain * np.sqrt(6.0 / (fan_in + fan_out))
        t = ad.parameter(rng.uniform(-limit, limit, shape, dtype=np.float64)
                         .astype(self.dtype))
        self.params[name] = t
        return t

    def zeros(self, name: str, shape: tuple) -> ad.Tensor:
        t = ad.parameter(np.zeros(shape, dtype=self.dtype))
        self.params[name] = t
        return t


class RepresentationNet:
    """Residual conv feature extractor plus the latent head.

    With the VAE front end the head is an encoder (mean, log-var) and a
    tanh decoder; with the dense front end it is a single projection.
    """

    def __init__(self, cfg: ModelConfig, rng: ad.Rng, frontend: str = FRONTEND_VAE,
                 dtype=np.float32):
        if frontend not in (FRONTEND_VAE, FRONTEND_DENSE):
            raise ShapeMismatch("frontend", (frontend,))
        self.cfg = cfg
        self.frontend = frontend
        self._store = _ParamStore(dtype)
        c, k = cfg.res_channels, cfg.res_kernel
        for u in range(cfg.n_res_units):
            c_in = 1 if u == 0 else c
            self._store.glorot(f"rep.unit{u}.conv1.w", (c, c_in, k), rng,
                               fan_in=c_in * k, fan_out=c * k)
            self._store.zeros(f"rep.unit{u}.conv1.b", (c,))
            self._store.glorot(f"rep.unit{u}.conv2.w", (c, c, k), rng,
                               fan_in=c * k, fan_out=c * k)
            self._store.zeros(f"rep.unit{u}.conv2.b", (c,))
        f, d = cfg.feature_dim, cfg.latent_dim
        if frontend == FRONTEND_VAE:
            # Small-gain latent heads start the posterior near the prior, so
            # the latent loss term begins near zero and grows as the code
            # spreads out to carry information.
            self._store.glorot("rep.enc_mean.w", (f, d), rng, f, d, gain=0.05)
            self._store.zeros("rep.enc_mean.b", (d,))
            self._store.glorot("rep.enc_logvar.w", (f, d), rng, f, d, gain=0.05)
            self._store.zeros("rep.enc_logvar.b", (d,))
            self._store.glorot("rep.dec.w", (d, f), rng, d, f)
            self._store.zeros("rep.dec.b", (f,))
        else:
            self._store.glorot("rep.proj.w", (f, d), rng, f, d)
            self._store.zeros("rep.proj.b", (d,))

    @property
    def params(self) -> dict[str, ad.Tensor]:
        return self._store.params

    def _p(self, name: str) -> ad.Tensor:
        return self._store.params[name]

    def encode_frames(self, columns: ad.Tensor) -> ad.Tensor:
        """(N, kept_bins) frequency columns -> (N, feature_dim) features."""
        cfg = self.cfg
        if columns.data.ndim != 2 or columns.data.shape[1] != cfg.kept_bins:
            raise ShapeMismatch("encode_frames", columns.data.shape,
                                (-1, cfg.kept_bins))
        pad = (cfg.res_kernel - 1) // 2
        x = ad.reshape(columns, (columns.data.shape[0], 1, cfg.kept_bins))
        for u in range(cfg.n_res_units):
            h = ad.relu(ad.conv1d(x, self._p(f"rep.unit{u}.conv1.w"),
                                  self._p(f"rep.unit{u}.conv1.b"), padding=pad))
            h = ad.conv1d(h, self._p(f"rep.unit{u}.conv2.w"),
                          self._p(f"rep.unit{u}.conv2.b"), padding=pad)
            # the first unit's identity skip broadcasts the single input
            # channel across all conv channels
            x = ad.relu(ad.add_broadcast(h, x) if u == 0 else ad.add(h, x))
        merged = ad.reduce_mean(x, axis=1)
        return ad.avg_pool1d(merged, cfg.pool_width, cfg.pool_width)

    def vae_encode(self, features: ad.Tensor) -> tuple[ad.Tensor, ad.Tensor]:
        mean = ad.dense(features, self._p("rep.enc_mean.w"), self._p("rep.enc_mean.b"))
        log_var = ad.dense(features, self._p("rep.enc_logvar.w"),
                           self._p("rep.enc_logvar.b"))
        return mean, log_var

    def vae_decode(self, z: ad.Tensor) -> ad.Tensor:
        return ad.tanh(ad.dense(z, self._p("rep.dec.w"), self._p("rep.dec.b")))

    def project(self, features: ad.Tensor) -> ad.Tensor:
        return ad.dense(features, self._p("rep.proj.w"), self._p("rep.proj.b"))


class ClassifierNet:
    """Bidirectional GRU stack with windowed attention and a dense head."""

    def __init__(self, cfg: ModelConfig, rng: ad.Rng, dtype=np.float32):
        self.cfg = cfg
        self._store = _ParamStore(dtype)
        h = cfg.rnn_hidden
        for layer in range(cfg.rnn_layers):
            in_dim = cfg.latent_dim if layer == 0 else 2 * h
            for direction in ("fwd", "bwd"):
                base = f"clf.gru{layer}.{direction}"
                self._store.glorot(f"{base}.wx", (in_dim, 3 * h), rng, in_dim, 3 * h)
                self._store.glorot(f"{base}.wh", (h, 3 * h), rng, h, 3 * h)
                self._store.zeros(f"{base}.bx", (3 * h,))
                self._store.zeros(f"{base}.bh", (3 * h,))
        width = 2 * h
        for stage in range(cfg.rnn_layers - 1):
            self._store.glorot(f"clf.attn{stage}.w", (width, width), rng, width, width)
            self._store.glorot(f"clf.attn{stage}.v", (width, 1), rng, width, 1)
        self._store.glorot("clf.attn_global.w", (width, width), rng, width, width)
        self._store.glorot("clf.attn_global.v", (width, 1), rng, width, 1)
        self._store.glorot("clf.head1.w", (width, cfg.head_hidden), rng, width,
                           cfg.head_hidden)
        self._store.zeros("clf.head1.b", (cfg.head_hidden,))
        self._store.glorot("clf.head2.w", (cfg.head_hidden, cfg.n_classes), rng,
                           cfg.head_hidden, cfg.n_classes)
        self._store.zeros("clf.head2.b", (cfg.n_classes,))

    @property
    def params(self) -> dict[str, ad.Tensor]:
        return self._store.params

    def _p(self, name: str) -> ad.Tensor:
        return self._store.params[name]

    def _gru_direction(self, frames: list[ad.Tensor], base: str) -> list[ad.Tensor]:
        bsz = frames[0].data.shape[0]
        h = ad.tensor(np.zeros((bsz, self.cfg.rnn_hidden), dtype=self._store.dtype))
        wx, wh = self._p(f"{base}.wx"), self._p(f"{base}.wh")
        bx, bh = self._p(f"{base}.bx"), self._p(f"{base}.bh")
        out = []
        for x in frames:
            h = ad.gru_cell(x, h, wx, wh, bx, bh)
            out.append(h)
        return out

    def bi_gru_layer(self, frames: list[ad.Tensor], layer: int) -> list[ad.Tensor]:
        fwd = self._gru_direction(frames, f"clf.gru{layer}.fwd")
        bwd = self._gru_direction(frames[::-1], f"clf.gru{layer}.bwd")[::-1]
        return [ad.concat([f, b], axis=1) for f, b in zip(fwd, bwd)]

    def _attend(self, block: ad.Tensor, w: ad.Tensor, v: ad.Tensor) -> ad.Tensor:
        """Additive attention over (M, W, H): score = v . tanh(W h)."""
        m, width, h = block.data.shape
        flat = ad.reshape(block, (m * width, h))
        scores = ad.reshape(ad.matmul(ad.tanh(ad.matmul(flat, w)), v), (m, width))
        alpha = ad.softmax(scores, axis=1)
        return ad.weighted_sum(block, alpha)

    def window_attention(self, frames: list[ad.Tensor], span: int,
                         stage: int) -> list[ad.Tensor]:
        """Collapse consecutive windows of `span` frames to one frame each."""
        w, v = self._p(f"clf.attn{stage}.w"), self._p(f"clf.attn{stage}.v")
        t = len(frames)
        bsz, width = frames[0].data.shape
        stacked = ad.stack(frames, axis=1)  # (B, T, H)
        n_full, rem = divmod(t, span)
        parts = []
        if n_full:
            main = stacked if rem == 0 else ad.narrow(stacked, 1, 0, n_full * span)
            block = ad.reshape(main, (bsz * n_full, span, width))
            att = self._attend(block, w, v)
            parts.append(ad.reshape(att, (bsz, n_full, width)))
        if rem:
            tail = ad.narrow(stacked, 1, n_full * span, rem)
            att = self._attend(tail, w, v)
            parts.append(ad.reshape(att, (bsz, 1, width)))
        combined = parts[0] if len(parts) == 1 else ad.concat(parts, axis=1)
        return ad.unstack(combined, axis=1)

    def global_attention(self, frames: list[ad.Tensor]) -> ad.Tensor:
        stacked = ad.stack(frames, axis=1)
        return self._attend(stacked, self._p("clf.attn_global.w"),
                            self._p("clf.attn_global.v"))

    def logits(self, frames: list[ad.Tensor]) -> ad.Tensor:
        """Latent frame sequence (each (B, latent_dim)) -> (B, n_classes)."""
        cfg = self.cfg
        if len(frames) < cfg.min_attention_window:
            raise TooFewFrames(f"need >= {cfg.min_attention_window} frames, "
                               f"got {len(frames)}")
        spans = attention_window_spans(cfg)
        seq = frames
        for layer in range(cfg.rnn_layers):
            seq = self.bi_gru_layer(seq, layer)
            if layer < cfg.rnn_layers - 1:
                seq = self.window_attention(seq, spans[layer], layer)
        vec = self.global_attention(seq)
        hidden = ad.relu(ad.dense(vec, self._p("clf.head1.w"), self._p("clf.head1.b")))
        return ad.dense(hidden, self._p("clf.head2.w"), self._p("clf.head2.b"))


def param_count(net) -> int:
    """Number of trainable scalars in a net exposing `.params`."""
    params = net.params if hasattr(net, "params") else net
    return int(sum(t.data.size for t in params.values()))


class Network:
    """Representation and classifier nets assembled per one config."""

    def __init__(self, cfg: ModelConfig, seed: int = 0,
                 frontend: str = FRONTEND_VAE, dtype=np.float32,
                 rng: ad.Rng | None = None):
        self.cfg = cfg
        self.frontend = frontend
        self.dtype = dtype
        rng = rng if rng is not None else ad.Rng(seed)
        self.representation = RepresentationNet(cfg, rng.split(1), frontend, dtype)
        self.classifier = ClassifierNet(cfg, rng.split(2), dtype)

    @property
    def params(self) -> dict[str, ad.Tensor]:
        return {**self.representation.params, **self.classifier.params}

    def representation_params(self) -> list[ad.Tensor]:
        return list(self.representation.params.values())

    def classifier_params(self) -> list[ad.Tensor]:
        return list(self.classifier.params.values())

    def all_params(self) -> list[ad.Tensor]:
        return list(self.params.values())

    # --- frame-level paths ---

    def frame_features(self, columns: ad.Tensor) -> ad.Tensor:
        return self.representation.encode_frames(columns)

    def latent_params_for(self, spectrogram_batch: np.ndarray) -> tuple[ad.Tensor, ad.Tensor, ad.Tensor]:
        """(B, bins, T) batch -> features, latent mean, latent log-var.

        Rows of the returned (B*T, ...) tensors are chunk-major.
        """
        b, bins, t = spectrogram_batch.shape
        columns = np.ascontiguousarray(
            np.transpose(spectrogram_batch, (0, 2, 1)).reshape(b * t, bins)
        ).astype(self.dtype)
        features = self.frame_features(ad.tensor(columns))
        if self.frontend == FRONTEND_VAE:
            mean, log_var = self.representation.vae_encode(features)
        else:
            mean = self.representation.project(features)
            log_var = ad.tensor(np.zeros_like(mean.data))
        return features, mean, log_var

    # --- sequence-level paths ---

    def sequence_logits(self, z: ad.Tensor, batch: int, n_frames: int) -> ad.Tensor:
        """(B*T, latent_dim) chunk-major z rows -> (B, n_classes) logits."""
        z3 = ad.reshape(z, (batch, n_frames, self.cfg.latent_dim))
        frames = ad.unstack(z3, axis=1)
        return self.classifier.logits(frames)

    def classify(self, latents: LatentSequence, sample_scale: float = 0.0,
                 rng: ad.Rng | None = None) -> np.ndarray:
        """Single-chunk inference: latent sequence -> 5 probabilities."""
        probs = self.classify_batch(latents.means[None], latents.log_vars[None],
                                    sample_scale, rng)
        return probs[0]

    def classify_batch(self, means: np.ndarray, log_vars: np.ndarray,
                       sample_scale: float = 0.0,
                       rng: ad.Rng | None = None) -> np.ndarray:
        b, t, d = means.shape
        mean_t = ad.tensor(means.reshape(b * t, d).astype(self.dtype))
        lv_t = ad.tensor(log_vars.reshape(b * t, d).astype(self.dtype))
        z = ad.reparameterize(mean_t, lv_t, sample_scale,
                              rng if rng is not None else ad.Rng(0))
        logits = self.sequence_logits(z, b, t)
        return np.asarray(_softmax_np(logits.data), dtype=np.float64)

    def forward_full(self, spectrogram_values: np.ndarray, mode: str = "infer",
                     rng: ad.Rng | None = None,
                     sample_scale: float | None = None) -> ForwardResult:
        """Run one (bins, T) spectrogram through the whole network.

        Train mode also reports per-frame reconstruction and KL terms.
        """
        bins, t = spectrogram_values.shape
        if t < self.cfg.min_attention_window:
            raise TooFewFrames(f"need >= {self.cfg.min_attention_window} frames, got {t}")
        if bins != self.cfg.kept_bins:
            raise ShapeMismatch("forward_full", spectrogram_values.shape,
                                (self.cfg.kept_bins, -1))
        if sample_scale is None:
            sample_scale = 0.0 if mode == "infer" else 1.0
        rng = rng if rng is not None else ad.Rng(0)
        batch = spectrogram_values[None].astype(self.dtype)
        features, mean, log_var = self.latent_params_for(batch)
        z = ad.reparameterize(mean, log_var, sample_scale, rng)
        logits = self.sequence_logits(z, 1, t)
        probs = np.asarray(_softmax_np(logits.data), dtype=np.float64)[0]
        latents = LatentSequence(means=mean.data.copy(), log_vars=log_var.data.copy())
        if mode != "train":
            return ForwardResult(probs=probs, latents=latents)
        decoded = (self.representation.vae_decode(z)
                   if self.frontend == FRONTEND_VAE else None)
        if decoded is not None:
            diff = features.data.astype(np.float64) - decoded.data.astype(np.float64)
            recon = (diff ** 2).mean(axis=1)
            lv64 = log_var.data.astype(np.float64)
            m64 = mean.data.astype(np.float64)
            kl = 0.5 * (np.exp(lv64) + m64 ** 2 - 1.0 - lv64).sum(axis=1)
        else:
            recon = np.zeros(t)
            kl = np.zeros(t)
        return ForwardResult(probs=probs, latents=latents,
                             recon_per_frame=recon, kl_per_frame=kl,
                             features=features.data.copy(),
                             decoded=None if decoded is None else decoded.data.copy())


def _softmax_np(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)
