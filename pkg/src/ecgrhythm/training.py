"""Two-stage training: representation warm-up, classifier training, CV runs.

Stage 1 minimizes reconstruction + KL with the sampling std gated by eta,
the latent share of the previous iteration's loss. Once the smoothed loss
crosses the configured threshold the representation freezes and stage 2
trains the classifier on cross entropy. Cross-validation stratifies folds
per class, oversamples the training side, and reports a confusion matrix
with per-class sensitivity and precision.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .dsp import SpectrogramConfig, welch_spectrogram
from .errors import EmptyMatrix, NaNLoss, NegativeLoss
from .network import (FRONTEND_DENSE, FRONTEND_VAE, ModelConfig, Network,
                      _softmax_np)
from .records import Chunk
from .splits import ids_by_class, oversample, stratified_kfold

log = logging.getLogger(__name__)

SMOOTHING_WINDOW = 20
STAGE_REPRESENTATION = "representation"
STAGE_CLASSIFIER = "classifier"

# Reachable within a few epochs on the bundled synthetic set while still
# requiring most of the reconstruction improvement to have happened.
DEFAULT_STAGE1_THRESHOLD = 0.05


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 140
    stage1_loss_threshold: float = DEFAULT_STAGE1_THRESHOLD
    max_epochs_per_stage: int = 30
    lr: float = 1e-3
    k_folds: int = 5
    seed: int = 0
    eta_min: float = 1e-3
    frontend: str = FRONTEND_VAE
    stage2_sampling: str = "eta"  # "eta" or "mean"

    def __post_init__(self):
        if self.batch_size < 1:
            raise NegativeLoss(f"batch_size must be >= 1, got {self.batch_size}")
        if not (0 < self.eta_min <= 1):
            raise NegativeLoss(f"eta_min must be in (0, 1], got {self.eta_min}")
        if self.stage1_loss_threshold <= 0:
            raise NegativeLoss("stage1_loss_threshold must be positive")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class StageState:
    stage: str = STAGE_REPRESENTATION
    iteration: int = 0
    epochs_done: int = 0
    last_recon: float = float("nan")
    last_latent: float = float("nan")
    eta: float = 1e-3
    loss_history: list[float] = field(default_factory=list)
    eta_history: list[float] = field(default_factory=list)


def compute_eta(recon_loss: float, latent_loss: float, eta_min: float) -> float:
    """Latent share of the total loss, clamped into [eta_min, 1]."""
    if recon_loss < 0 or latent_loss < 0:
        raise NegativeLoss(f"losses must be nonnegative, got {recon_loss}, {latent_loss}")
    total = recon_loss + latent_loss
    if total == 0:
        return 1.0
    return min(1.0, max(eta_min, latent_loss / total))


def stage1_step(batch: np.ndarray, model: Network, optimizer: ad.Adam,
                state: StageState, rng: ad.Rng,
                eta_min: float = 1e-3) -> StageState:
    """One representation update on a (B, bins, T) spectrogram batch.

    The sampling scale is the previous iteration's eta (one-step lag).
    """
    scale = state.eta
    with ad.Tape() as tape:
        features, mean, log_var = model.latent_params_for(batch)
        z = ad.reparameterize(mean, log_var, scale, rng.split(state.iteration))
        decoded = model.representation.vae_decode(z)
        # The objective's reconstruction term is the squared norm over the
        # feature vector (summed over its dims), averaged over frames;
        # reconstruction_loss averages over all elements, so scale it back
        # up by the feature width.
        recon = ad.mul(ad.reconstruction_loss(features, decoded),
                       float(model.cfg.feature_dim))
        latent = ad.gaussian_kl(mean, log_var)
        loss = ad.add(recon, latent)
        optimizer.zero_grad()
        ad.backward(loss, tape)
    total = loss.item()
    if not np.isfinite(total):
        raise NaNLoss(f"stage-1 loss diverged at iteration {state.iteration}: "
                      f"recon={recon.item()}, latent={latent.item()}")
    optimizer.step()
    state.last_recon = recon.item()
    state.last_latent = latent.item()
    state.eta = compute_eta(state.last_recon, state.last_latent, eta_min)
    state.iteration += 1
    state.loss_history.append(total)
    state.eta_history.append(state.eta)
    return state


def should_switch_stage(state: StageState, cfg: TrainConfig) -> bool:
    """Switch when the smoothed stage-1 loss meets the threshold, or give up
    after the epoch budget (with a warning)."""
    window = SMOOTHING_WINDOW
    if len(state.loss_history) >= window:
        smoothed = float(np.mean(state.loss_history[-window:]))
        if smoothed <= cfg.stage1_loss_threshold:
            return True
    if state.epochs_done >= cfg.max_epochs_per_stage:
        warnings.warn(
            f"stage-1 threshold {cfg.stage1_loss_threshold} not reached after "
            f"{state.epochs_done} epochs; switching anyway", stacklevel=2)
        return True
    return False


def stage2_step(latent_means: np.ndarray, latent_log_vars: np.ndarray,
                labels: np.ndarray, model: Network, optimizer: ad.Adam,
                state: StageState, rng: ad.Rng,
                sample_scale: float) -> StageState:
    """One classifier update on precomputed (frozen) latent parameters."""
    b, t, d = latent_means.shape
    with ad.Tape() as tape:
        mean_t = ad.tensor(latent_means.reshape(b * t, d))
        lv_t = ad.tensor(latent_log_vars.reshape(b * t, d))
        z = ad.reparameterize(mean_t, lv_t, sample_scale, rng.split(state.iteration))
        logits = model.sequence_logits(z, b, t)
        loss = ad.softmax_cross_entropy(logits, labels)
        optimizer.zero_grad()
        ad.backward(loss, tape)
    if not np.isfinite(loss.item()):
        raise NaNLoss(f"stage-2 loss diverged at iteration {state.iteration}")
    optimizer.step()
    state.iteration += 1
    state.loss_history.append(loss.item())
    return state


def joint_step(batch: np.ndarray, labels: np.ndarray, model: Network,
               optimizer: ad.Adam, state: StageState, rng: ad.Rng) -> StageState:
    """One whole-network update (dense-projection front end, single stage)."""
    b, _, t = batch.shape
    with ad.Tape() as tape:
        _, mean, _ = model.latent_params_for(batch)
        logits = model.sequence_logits(mean, b, t)
        loss = ad.softmax_cross_entropy(logits, labels)
        optimizer.zero_grad()
        ad.backward(loss, tape)
    if not np.isfinite(loss.item()):
        raise NaNLoss(f"joint loss diverged at iteration {state.iteration}")
    optimizer.step()
    state.iteration += 1
    state.loss_history.append(loss.item())
    return state


# --- metrics ---

@dataclass
class MetricsReport:
    confusion: np.ndarray            # rows = truth, cols = prediction
    sensitivity: list[float | None]  # None marks 0/0
    precision: list[float | None]
    accuracy: float

    def counts(self) -> list[str]:
        """Per-class '#PP/Tot' strings: correct over class total."""
        return [f"{int(self.confusion[c, c])}/{int(self.confusion[c].sum())}"
                for c in range(self.confusion.shape[0])]

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.astype(int).tolist(),
            "sensitivity": self.sensitivity,
            "precision": self.precision,
            "accuracy": self.accuracy,
            "pp_tot": self.counts(),
        }


def compute_metrics(confusion: np.ndarray) -> MetricsReport:
    conf = np.asarray(confusion)
    if conf.size == 0:
        raise EmptyMatrix("empty confusion matrix")
    if conf.ndim != 2 or conf.shape[0] != conf.shape[1]:
        raise EmptyMatrix(f"confusion matrix must be square, got {conf.shape}")
    if (conf < 0).any():
        raise EmptyMatrix("confusion matrix entries must be nonnegative")
    total = conf.sum()
    if total == 0:
        raise EmptyMatrix("confusion matrix has no observations")
    sens, prec = [], []
    for c in range(conf.shape[0]):
        row = conf[c].sum()
        col = conf[:, c].sum()
        sens.append(float(conf[c, c] / row) if row else None)
        prec.append(float(conf[c, c] / col) if col else None)
    return MetricsReport(confusion=conf, sensitivity=sens, precision=prec,
                         accuracy=float(np.trace(conf) / total))


def confusion_from_predictions(y_true, y_pred, n_classes: int) -> np.ndarray:
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(np.asarray(y_true), np.asarray(y_pred)):
        conf[int(t), int(p)] += 1
    return conf


# --- cross-validation driver ---

@dataclass
class FoldResult:
    fold_index: int
    report: MetricsReport
    accuracy_by_epoch: list[float]
    eta_trace: list[float]
    stage1_losses: list[float]
    test_ids: tuple[str, ...]
    estimator: object


def spectrogram_matrix(chunks: list[Chunk],
                       cfg: SpectrogramConfig = SpectrogramConfig()) -> np.ndarray:
    """Stack per-chunk spectrograms into one (n, bins, frames) array."""
    images = [welch_spectrogram(c.samples, cfg).values for c in chunks]
    return np.stack(images).astype(np.float32)


def run_cv(chunks: list[Chunk], train_cfg: TrainConfig,
           model_cfg: ModelConfig = ModelConfig(),
           spec_cfg: SpectrogramConfig = SpectrogramConfig(),
           folds: list[int] | None = None) -> list[FoldResult]:
    """Stratified k-fold training/evaluation over labeled chunks."""
    from .estimator import EcgRhythmClassifier

    X = spectrogram_matrix(chunks, spec_cfg)
    y = np.array([int(c.label) for c in chunks], dtype=np.int64)
    index_of = {c.chunk_id: i for i, c in enumerate(chunks)}
    splits = stratified_kfold(chunks, k=train_cfg.k_folds, seed=train_cfg.seed)
    results = []
    for split in splits:
        if folds is not None and split.fold_index not in folds:
            continue
        clf = EcgRhythmClassifier(**_estimator_params(train_cfg, model_cfg),
                                  seed=train_cfg.seed * 100003 + split.fold_index)
        tr = np.array([index_of[i] for i in split.train_ids], dtype=np.int64)
        te = np.array([index_of[i] for i in split.test_ids], dtype=np.int64)
        clf.fit(X[tr], y[tr], eval_set=(X[te], y[te]))
        y_pred = clf.predict(X[te])
        conf = confusion_from_predictions(y[te], y_pred, model_cfg.n_classes)
        report = compute_metrics(conf)
        log.info("fold %d accuracy %.3f", split.fold_index, report.accuracy)
        results.append(FoldResult(
            fold_index=split.fold_index,
            report=report,
            accuracy_by_epoch=list(clf.history_["test_accuracy"]),
            eta_trace=list(clf.history_["eta"]),
            stage1_losses=list(clf.history_["stage1_loss"]),
            test_ids=split.test_ids,
            estimator=clf,
        ))
    return results


def _estimator_params(train_cfg: TrainConfig, model_cfg: ModelConfig) -> dict:
    return {
        "n_res_units": model_cfg.n_res_units,
        "feature_dim": model_cfg.feature_dim,
        "latent_dim": model_cfg.latent_dim,
        "rnn_hidden": model_cfg.rnn_hidden,
        "rnn_layers": model_cfg.rnn_layers,
        "min_attention_window": model_cfg.min_attention_window,
        "n_classes": model_cfg.n_classes,
        "kept_bins": model_cfg.kept_bins,
        "frontend": train_cfg.frontend,
        "batch_size": train_cfg.batch_size,
        "lr": train_cfg.lr,
        "stage1_loss_threshold": train_cfg.stage1_loss_threshold,
        "max_epochs_per_stage": train_cfg.max_epochs_per_stage,
        "eta_min": train_cfg.eta_min,
        "stage2_sampling": train_cfg.stage2_sampling,
    }


# --- comparative experiment (accuracy-vs-epoch per variant) ---

def experiment_variants(base: ModelConfig) -> list[tuple[str, ModelConfig, str]]:
    """The five comparison setups: base, two width/depth tweaks, and the
    dense-projection twins of those tweaks (trained as a whole)."""
    v1 = ModelConfig.from_dict({**base.to_dict(), "rnn_hidden": 15})
    v2 = ModelConfig.from_dict({**base.to_dict(), "min_attention_window": 5,
                                "rnn_layers": 3})
    return [
        ("base", base, FRONTEND_VAE),
        ("#1", v1, FRONTEND_VAE),
        ("#2", v2, FRONTEND_VAE),
        ("#3", v1, FRONTEND_DENSE),
        ("#4", v2, FRONTEND_DENSE),
    ]


def comparative_experiment(chunks: list[Chunk], train_cfg: TrainConfig,
                           base_cfg: ModelConfig = ModelConfig(),
                           spec_cfg: SpectrogramConfig = SpectrogramConfig(),
                           folds: list[int] | None = None) -> dict[str, list[FoldResult]]:
    """Run every variant on identical folds and seed; returns aligned series."""
    out = {}
    for name, cfg, frontend in experiment_variants(base_cfg):
        variant_cfg = TrainConfig.from_dict({**train_cfg.to_dict(),
                                             "frontend": frontend})
        out[name] = run_cv(chunks, variant_cfg, cfg, spec_cfg, folds=folds)
        for a, b in zip(out[next(iter(out))], out[name]):
            assert a.test_ids == b.test_ids
    return out


def epochs_to_reach(accuracy_series: list[float], target: float) -> int | None:
    """1-based epoch index at which the series first reaches the target."""
    for i, acc in enumerate(accuracy_series, start=1):
        if acc >= target:
            return i
    return None
