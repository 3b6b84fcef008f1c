"""Scikit-learn-style estimators wrapping the DSP front end and the
two-stage rhythm classifier, so the pipeline composes with the wider
ecosystem (get_params/set_params, clone, CV utilities).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from . import autodiff as ad
from . import dsp
from . import training as tr
from .network import FRONTEND_VAE, ModelConfig, Network
from .splits import oversample
from .validation import check_labels, check_signal_array, check_spectrogram_array


class HighpassFilter(BaseEstimator, TransformerMixin):
    """Baseline-wander removal as a transformer over equal-length signals."""

    def __init__(self, stop_freq_hz=0.05, stop_atten_db=24.0, pass_freq_hz=0.67,
                 n_taps=1001, fs_hz=200.0):
        self.stop_freq_hz = stop_freq_hz
        self.stop_atten_db = stop_atten_db
        self.pass_freq_hz = pass_freq_hz
        self.n_taps = n_taps
        self.fs_hz = fs_hz

    def fit(self, X=None, y=None):
        self.taps_ = dsp.design_highpass_fir(dsp.FilterSpec(
            stop_freq_hz=self.stop_freq_hz, stop_atten_db=self.stop_atten_db,
            pass_freq_hz=self.pass_freq_hz, n_taps=self.n_taps, fs_hz=self.fs_hz))
        return self

    def transform(self, X):
        if not hasattr(self, "taps_"):
            self.fit()
        X = check_signal_array(X)
        return np.stack([dsp.apply_fir(row, self.taps_) for row in X])


class WelchSpectrogram(BaseEstimator, TransformerMixin):
    """Per-signal log-power spectrogram images, stacked (n, bins, frames)."""

    def __init__(self, fs_hz=200.0, window_len=60, overlap_frac=0.91, nfft=1024,
                 kept_bins=60):
        self.fs_hz = fs_hz
        self.window_len = window_len
        self.overlap_frac = overlap_frac
        self.nfft = nfft
        self.kept_bins = kept_bins

    def fit(self, X=None, y=None):
        return self

    def transform(self, X):
        X = check_signal_array(X)
        cfg = dsp.SpectrogramConfig(fs_hz=self.fs_hz, window_len=self.window_len,
                                    overlap_frac=self.overlap_frac, nfft=self.nfft,
                                    kept_bins=self.kept_bins)
        return np.stack([dsp.welch_spectrogram(row, cfg).values for row in X])


class EcgRhythmClassifier(BaseEstimator, ClassifierMixin):
    """Five-class rhythm classifier over spectrogram batches.

    `fit` runs the staged procedure: representation warm-up on
    reconstruction + KL until the smoothed loss crosses the threshold,
    then classifier training on frozen latents. With the dense-projection
    front end the whole network trains jointly on cross entropy alone.
    Pass `eval_set=(X_test, y_test)` to record test accuracy per epoch.
    """

    def __init__(self, n_res_units=1, feature_dim=20, latent_dim=8, rnn_hidden=10,
                 rnn_layers=4, min_attention_window=3, n_classes=5, kept_bins=60,
                 frontend=FRONTEND_VAE, batch_size=140, lr=1e-3,
                 stage1_loss_threshold=tr.DEFAULT_STAGE1_THRESHOLD,
                 max_epochs_per_stage=30, eta_min=1e-3, stage2_sampling="eta",
                 oversample_training=True, seed=0):
        self.n_res_units = n_res_units
        self.feature_dim = feature_dim
        self.latent_dim = latent_dim
        self.rnn_hidden = rnn_hidden
        self.rnn_layers = rnn_layers
        self.min_attention_window = min_attention_window
        self.n_classes = n_classes
        self.kept_bins = kept_bins
        self.frontend = frontend
        self.batch_size = batch_size
        self.lr = lr
        self.stage1_loss_threshold = stage1_loss_threshold
        self.max_epochs_per_stage = max_epochs_per_stage
        self.eta_min = eta_min
        self.stage2_sampling = stage2_sampling
        self.oversample_training = oversample_training
        self.seed = seed

    # --- config plumbing ---

    def _model_config(self) -> ModelConfig:
        return ModelConfig(n_res_units=self.n_res_units, feature_dim=self.feature_dim,
                           latent_dim=self.latent_dim, rnn_hidden=self.rnn_hidden,
                           rnn_layers=self.rnn_layers,
                           min_attention_window=self.min_attention_window,
                           n_classes=self.n_classes, kept_bins=self.kept_bins)

    def _train_config(self) -> tr.TrainConfig:
        return tr.TrainConfig(batch_size=self.batch_size,
                              stage1_loss_threshold=self.stage1_loss_threshold,
                              max_epochs_per_stage=self.max_epochs_per_stage,
                              lr=self.lr, seed=self.seed, eta_min=self.eta_min,
                              frontend=self.frontend,
                              stage2_sampling=self.stage2_sampling)

    # --- training ---

    def fit(self, X, y, eval_set=None):
        X = check_spectrogram_array(X, kept_bins=self.kept_bins)
        y = check_labels(y, self.n_classes)
        if X.shape[0] != y.shape[0]:
            raise NotFittedError(f"X has {X.shape[0]} samples, y has {y.shape[0]}")
        cfg = self._train_config()
        rng = ad.Rng(self.seed)
        self.model_ = Network(self._model_config(), frontend=self.frontend,
                              rng=rng.split(0))
        self.classes_ = np.arange(self.n_classes)
        history = {"stage1_loss": [], "eta": [], "stage2_loss": [],
                   "test_accuracy": []}
        self.history_ = history

        train_idx = self._training_indices(y)
        if eval_set is not None:
            X_eval = check_spectrogram_array(eval_set[0], kept_bins=self.kept_bins)
            y_eval = check_labels(eval_set[1], self.n_classes)
        else:
            X_eval = y_eval = None

        if self.frontend == FRONTEND_VAE:
            self._fit_two_stage(X, y, train_idx, cfg, rng, X_eval, y_eval)
        else:
            self._fit_joint(X, y, train_idx, cfg, rng, X_eval, y_eval)
        return self

    def _training_indices(self, y: np.ndarray) -> np.ndarray:
        if not self.oversample_training:
            return np.arange(y.size)
        by_class = {}
        for i, label in enumerate(y):
            by_class.setdefault(int(label), []).append(str(i))
        ids = oversample(by_class, seed=self.seed)
        return np.array([int(i) for i in ids], dtype=np.int64)

    def _batches(self, order: np.ndarray):
        for start in range(0, order.size, self.batch_size):
            yield order[start:start + self.batch_size]

    def _fit_two_stage(self, X, y, train_idx, cfg, rng, X_eval, y_eval):
        state = tr.StageState(eta=cfg.eta_min)
        opt = ad.Adam(self.model_.representation_params(), lr=cfg.lr)
        stage_rng = rng.split(2)
        switched = False
        while not switched:
            order = train_idx[rng.split(1, state.epochs_done).permutation(train_idx.size)]
            for batch_idx in self._batches(order):
                tr.stage1_step(X[batch_idx], self.model_, opt, state, stage_rng,
                               eta_min=cfg.eta_min)
                if tr.should_switch_stage(state, cfg):
                    switched = True
                    break
            state.epochs_done += 1
            if not switched and tr.should_switch_stage(state, cfg):
                switched = True
        self.history_["stage1_loss"] = list(state.loss_history)
        self.history_["eta"] = list(state.eta_history)
        self.final_eta_ = state.eta

        means, log_vars = self._latent_arrays(X)
        eval_latents = self._latent_arrays(X_eval) if X_eval is not None else None
        scale = self.final_eta_ if self.stage2_sampling == "eta" else 0.0
        state2 = tr.StageState(stage=tr.STAGE_CLASSIFIER)
        opt2 = ad.Adam(self.model_.classifier_params(), lr=cfg.lr)
        clf_rng = rng.split(4)
        for epoch in range(cfg.max_epochs_per_stage):
            order = train_idx[rng.split(3, epoch).permutation(train_idx.size)]
            for batch_idx in self._batches(order):
                tr.stage2_step(means[batch_idx], log_vars[batch_idx], y[batch_idx],
                               self.model_, opt2, state2, clf_rng, scale)
            state2.epochs_done += 1
            if eval_latents is not None:
                probs = self.model_.classify_batch(*eval_latents, 0.0)
                acc = float((probs.argmax(axis=1) == y_eval).mean())
                self.history_["test_accuracy"].append(acc)
        self.history_["stage2_loss"] = list(state2.loss_history)

    def _fit_joint(self, X, y, train_idx, cfg, rng, X_eval, y_eval):
        state = tr.StageState(stage=tr.STAGE_CLASSIFIER)
        opt = ad.Adam(self.model_.all_params(), lr=cfg.lr)
        step_rng = rng.split(6)
        self.final_eta_ = 0.0
        for epoch in range(cfg.max_epochs_per_stage):
            order = train_idx[rng.split(5, epoch).permutation(train_idx.size)]
            for batch_idx in self._batches(order):
                tr.joint_step(X[batch_idx], y[batch_idx], self.model_, opt,
                              state, step_rng)
            state.epochs_done += 1
            if X_eval is not None:
                acc = float((self.predict(X_eval) == y_eval).mean())
                self.history_["test_accuracy"].append(acc)
        self.history_["stage2_loss"] = list(state.loss_history)

    def _latent_arrays(self, X, batch: int = 64):
        """Frozen-representation latent parameters for every chunk in X."""
        n, _, t = X.shape
        means = np.empty((n, t, self.latent_dim), dtype=np.float32)
        log_vars = np.empty_like(means)
        for start in range(0, n, batch):
            part = X[start:start + batch]
            _, mean, log_var = self.model_.latent_params_for(part)
            means[start:start + batch] = mean.data.reshape(part.shape[0], t,
                                                           self.latent_dim)
            log_vars[start:start + batch] = log_var.data.reshape(part.shape[0], t,
                                                                 self.latent_dim)
        return means, log_vars

    # --- inference ---

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before predicting")

    def predict_proba(self, X) -> np.ndarray:
        self._require_fitted()
        X = check_spectrogram_array(X, kept_bins=self.kept_bins)
        means, log_vars = self._latent_arrays(X)
        out = np.empty((X.shape[0], self.n_classes))
        for start in range(0, X.shape[0], 64):
            out[start:start + 64] = self.model_.classify_batch(
                means[start:start + 64], log_vars[start:start + 64], 0.0)
        return out

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)
