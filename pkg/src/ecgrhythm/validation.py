"""Input validation helpers shared by the estimators and the service."""

from __future__ import annotations

import numpy as np

from .errors import DomainError, ShapeMismatch


def check_spectrogram_array(X, kept_bins: int | None = None) -> np.ndarray:
    """Coerce to a finite (n, bins, frames) float32 array."""
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 3:
        raise ShapeMismatch("spectrogram batch", X.shape, ("n", "bins", "frames"))
    if kept_bins is not None and X.shape[1] != kept_bins:
        raise ShapeMismatch("spectrogram bins", X.shape, ("n", kept_bins, "frames"))
    if not np.isfinite(X).all():
        raise DomainError("spectrogram batch contains non-finite values")
    return X


def check_labels(y, n_classes: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise ShapeMismatch("labels", y.shape, ("n",))
    y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise DomainError(f"labels must lie in [0, {n_classes})")
    return y


def check_signal_array(X) -> np.ndarray:
    """Coerce to a finite (n, length) float64 array of equal-length signals."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None]
    if X.ndim != 2:
        raise ShapeMismatch("signal batch", X.shape, ("n", "length"))
    if not np.isfinite(X).all():
        raise DomainError("signal batch contains non-finite values")
    return X
