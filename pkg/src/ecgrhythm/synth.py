"""Synthetic five-class rhythm surrogates for end-to-end validation.

Real arrhythmia recordings cannot ship with the package, so acceptance
runs use waveform surrogates whose spectral signatures mirror the five
rhythm categories:

  SINUS  1.2 Hz composite beat train (fundamental plus two harmonics)
  ASYS   flatline: noise only
  TACHY  3 Hz narrow-spike train
  VFVFL  quasi-sinusoid swept in 5-7 Hz
  VT     2.5 Hz wide-pulse train

Every chunk gets independent white noise at 10 dB SNR (relative to a unit
reference amplitude for the flatline class) plus per-chunk amplitude,
phase, and rate jitter.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Rng
from .records import Chunk, RhythmClass

SNR_DB = 10.0
REFERENCE_AMPLITUDE = 1.0


def _pulse_train(t: np.ndarray, rate_hz: float, width_s: float, phase: float) -> np.ndarray:
    """Periodic Gaussian bumps: narrow ones read as spikes, wide as broad QRS."""
    period = 1.0 / rate_hz
    offset = (t + phase * period) % period
    centered = np.minimum(offset, period - offset)
    return np.exp(-0.5 * (centered / width_s) ** 2)


def _waveform(label: RhythmClass, t: np.ndarray, rng: Rng) -> np.ndarray:
    jitter = 1.0 + 0.05 * float(rng.normal())
    amp = 0.8 + 0.4 * float(rng.uniform(0.0, 1.0))
    phase = float(rng.uniform(0.0, 1.0))
    if label == RhythmClass.ASYS:
        return np.zeros_like(t)
    if label == RhythmClass.SINUS:
        f0 = 1.2 * jitter
        base = _pulse_train(t, f0, 0.02, phase)
        wave = base + 0.3 * np.sin(2 * np.pi * f0 * t + 2 * np.pi * phase) \
            + 0.15 * np.sin(2 * np.pi * 2 * f0 * t + 4 * np.pi * phase)
        return amp * wave
    if label == RhythmClass.TACHY:
        return amp * _pulse_train(t, 3.0 * jitter, 0.015, phase)
    if label == RhythmClass.VFVFL:
        f0 = float(rng.uniform(5.0, 7.0))
        drift = 0.3 * np.sin(2 * np.pi * 0.2 * t + 2 * np.pi * phase)
        return amp * np.sin(2 * np.pi * (f0 + drift) * t + 2 * np.pi * phase)
    if label == RhythmClass.VT:
        return amp * _pulse_train(t, 2.5 * jitter, 0.06, phase)
    raise ValueError(f"unknown label {label}")


def make_chunk(label: RhythmClass, rng: Rng, span_s: float = 13.0,
               fs_hz: float = 200.0, record_id: str | None = None,
               start_index: int = 0) -> Chunk:
    n = round(span_s * fs_hz)
    t = np.arange(n) / fs_hz
    wave = _waveform(label, t, rng)
    rms = float(np.sqrt(np.mean(wave ** 2)))
    if rms == 0.0:
        rms = REFERENCE_AMPLITUDE
    noise_std = rms / (10.0 ** (SNR_DB / 20.0))
    samples = wave + noise_std * rng.normal(n)
    return Chunk(record_id=record_id or f"synth-{label.dirname}",
                 start_index=start_index, samples=samples,
                 sample_rate_hz=fs_hz, label=label)


def make_dataset(n_chunks: int = 500, seed: int = 0, span_s: float = 13.0,
                 fs_hz: float = 200.0,
                 labels: tuple[RhythmClass, ...] = tuple(RhythmClass)) -> list[Chunk]:
    """Evenly spread chunks over the requested labels, deterministically."""
    rng = Rng(seed)
    chunks = []
    for i in range(n_chunks):
        label = labels[i % len(labels)]
        chunks.append(make_chunk(label, rng.split(i), span_s=span_s, fs_hz=fs_hz,
                                 record_id=f"synth-{label.dirname}-{i}",
                                 start_index=0))
    return chunks
