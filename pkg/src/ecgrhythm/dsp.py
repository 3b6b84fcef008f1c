"""Signal conditioning: resampling, baseline-wander removal, spectrograms.

The front end is resample (windowed sinc) -> high-pass FIR -> log-power
spectrogram of Hann-windowed, zero-padded short frames. All operations are
pure functions of their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, InfeasibleSpec, TooShort

DEFAULT_FS_HZ = 200.0

_KAISER_BETA = 8.0
_SINC_HALF_WIDTH = 48  # input-rate samples on each side of the kernel
_LOG_EPS = 1e-12


@dataclass(frozen=True)
class FilterSpec:
    """High-pass design targets for the baseline-wander filter."""

    stop_freq_hz: float = 0.05
    stop_atten_db: float = 24.0
    pass_freq_hz: float = 0.67
    n_taps: int = 1001
    fs_hz: float = DEFAULT_FS_HZ

    def __post_init__(self):
        if not (0 < self.stop_freq_hz < self.pass_freq_hz < self.fs_hz / 2):
            raise InfeasibleSpec(
                f"need 0 < stop ({self.stop_freq_hz}) < pass ({self.pass_freq_hz})"
                f" < fs/2 ({self.fs_hz / 2})")
        if self.n_taps < 3 or self.n_taps % 2 == 0:
            raise InfeasibleSpec(f"n_taps must be odd and >= 3, got {self.n_taps}")


@dataclass(frozen=True)
class SpectrogramConfig:
    fs_hz: float = DEFAULT_FS_HZ
    window_len: int = 60
    overlap_frac: float = 0.91
    nfft: int = 1024
    kept_bins: int = 60

    def __post_init__(self):
        if not 0 <= self.overlap_frac < 1:
            raise InfeasibleSpec(f"overlap_frac must be in [0, 1), got {self.overlap_frac}")
        if self.window_len > self.nfft:
            raise InfeasibleSpec(f"window_len {self.window_len} exceeds nfft {self.nfft}")
        if self.kept_bins > self.nfft // 2 + 1:
            raise InfeasibleSpec(f"kept_bins {self.kept_bins} exceeds nfft/2+1")

    @property
    def hop(self) -> int:
        return max(1, round(self.window_len * (1.0 - self.overlap_frac)))

    def n_frames(self, n_samples: int) -> int:
        return (n_samples - self.window_len) // self.hop + 1


@dataclass
class Spectrogram:
    """Nonnegative (kept_bins, n_frames) image in [0, 1]."""

    values: np.ndarray
    bin_hz: float
    frame_hop: int

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


def resample(samples, src_hz: float, dst_hz: float = DEFAULT_FS_HZ) -> np.ndarray:
    """Windowed-sinc (Kaiser) interpolation onto the target sample instants.

    Output length is round(n * dst / src); cutoff sits at min(src, dst)/2.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise EmptyInput("cannot resample an empty signal")
    if src_hz <= 0 or dst_hz <= 0:
        raise EmptyInput(f"sample rates must be positive, got {src_hz}, {dst_hz}")
    n = x.size
    m = int(round(n * dst_hz / src_hz))
    ratio = dst_hz / src_hz
    fcn = min(src_hz, dst_hz) / 2.0 / src_hz  # cycles per input sample
    half = _SINC_HALF_WIDTH
    out = np.empty(m, dtype=np.float64)
    denom_i0 = np.i0(_KAISER_BETA)
    block = 16384
    offsets = np.arange(2 * half + 1)
    for start in range(0, m, block):
        jj = np.arange(start, min(start + block, m))
        t = jj / ratio
        k0 = np.floor(t).astype(np.int64) - half
        k = k0[:, None] + offsets[None, :]
        u = t[:, None] - k
        inside = np.abs(u) <= half
        frac = np.clip(1.0 - (u / half) ** 2, 0.0, None)
        window = np.i0(_KAISER_BETA * np.sqrt(frac)) / denom_i0
        kernel = 2.0 * fcn * np.sinc(2.0 * fcn * u) * window * inside
        valid = (k >= 0) & (k < n)
        gathered = np.where(valid, x[np.clip(k, 0, n - 1)], 0.0)
        weight = kernel.sum(axis=1)
        weight[weight == 0.0] = 1.0
        out[jj] = (gathered * kernel).sum(axis=1) / weight
    return out


def design_highpass_fir(spec: FilterSpec = FilterSpec()) -> np.ndarray:
    """Linear-phase high-pass taps via spectral inversion of a Hamming LP.

    The low-pass cutoff sits midway between the stop and pass edges; the
    realized response is checked against the stop-band attenuation target.
    """
    n = spec.n_taps
    cutoff = 0.5 * (spec.stop_freq_hz + spec.pass_freq_hz)
    m = np.arange(n) - (n - 1) / 2
    fc = cutoff / spec.fs_hz
    lowpass = 2.0 * fc * np.sinc(2.0 * fc * m) * np.hamming(n)
    lowpass /= lowpass.sum()
    taps = -lowpass
    taps[(n - 1) // 2] += 1.0
    attained = frequency_response_db(taps, spec.stop_freq_hz, spec.fs_hz)
    if attained > -spec.stop_atten_db:
        raise InfeasibleSpec(
            f"{n} taps reach only {attained:.1f} dB at {spec.stop_freq_hz} Hz,"
            f" need <= {-spec.stop_atten_db:.1f} dB")
    # Too few taps smear the transition over the whole pass band; catch that
    # by requiring the pass edge to sit above half amplitude.
    pass_db = frequency_response_db(taps, spec.pass_freq_hz, spec.fs_hz)
    if pass_db < -6.02:
        raise InfeasibleSpec(
            f"{n} taps leave the pass edge {spec.pass_freq_hz} Hz at"
            f" {pass_db:.1f} dB; filter too short for the transition band")
    return taps


def frequency_response_db(taps: np.ndarray, freq_hz: float, fs_hz: float) -> float:
    """Magnitude response at one frequency by direct DTFT summation."""
    n = np.arange(len(taps))
    mag = abs(np.sum(taps * np.exp(-2j * np.pi * freq_hz / fs_hz * n)))
    return 20.0 * np.log10(max(mag, 1e-300))


def apply_fir(samples, taps) -> np.ndarray:
    """Filter with edge reflection and group-delay compensation.

    Output has the input's length and is time-aligned with it.
    """
    x = np.asarray(samples, dtype=np.float64)
    h = np.asarray(taps, dtype=np.float64)
    if h.size % 2 == 0:
        raise InfeasibleSpec(f"filter length must be odd, got {h.size}")
    if not np.allclose(h, h[::-1], atol=1e-12):
        raise InfeasibleSpec("filter taps must be symmetric (linear phase)")
    delay = (h.size - 1) // 2
    if x.size <= delay:
        raise TooShort(f"signal of {x.size} samples is shorter than half the "
                       f"filter length ({delay + 1})")
    padded = np.pad(x, delay, mode="reflect")
    return np.convolve(padded, h, mode="valid")


def _frame_matrix(x: np.ndarray, cfg: SpectrogramConfig) -> np.ndarray:
    frames = np.lib.stride_tricks.sliding_window_view(x, cfg.window_len)
    return frames[:: cfg.hop]


def welch_spectrogram(samples, cfg: SpectrogramConfig = SpectrogramConfig()) -> Spectrogram:
    """Log-power image of Hann-windowed, zero-padded overlapping frames.

    Per frame: window, zero-pad to nfft, keep the lowest bins of
    |DFT|^2 / window-energy; the image is then log-compressed and min-max
    normalized to [0, 1] (a constant image maps to all zeros).
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size < cfg.window_len:
        raise TooShort(f"need at least {cfg.window_len} samples, got {x.size}")
    window = np.hanning(cfg.window_len)
    frames = _frame_matrix(x, cfg) * window
    spectra = np.fft.rfft(frames, n=cfg.nfft, axis=1)[:, :cfg.kept_bins]
    power = (np.abs(spectra) ** 2) / np.sum(window ** 2)
    image = 10.0 * np.log10(power + _LOG_EPS)
    lo, hi = image.min(), image.max()
    if hi - lo < 1e-30:
        values = np.zeros_like(image)
    else:
        values = (image - lo) / (hi - lo)
    return Spectrogram(values=values.T.astype(np.float32),
                       bin_hz=cfg.fs_hz / cfg.nfft,
                       frame_hop=cfg.hop)


def welch_psd(samples, cfg: SpectrogramConfig = SpectrogramConfig()) -> np.ndarray:
    """Frame-averaged power spectrum (the Welch estimate) over kept bins."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < cfg.window_len:
        raise TooShort(f"need at least {cfg.window_len} samples, got {x.size}")
    window = np.hanning(cfg.window_len)
    frames = _frame_matrix(x, cfg) * window
    spectra = np.fft.rfft(frames, n=cfg.nfft, axis=1)[:, :cfg.kept_bins]
    power = (np.abs(spectra) ** 2) / np.sum(window ** 2)
    return power.mean(axis=0)


def dft_oracle(frame, nfft: int) -> np.ndarray:
    """Direct O(n^2) DFT used as the independent check on the FFT path."""
    x = np.asarray(frame, dtype=np.float64)
    if nfft < x.size:
        raise TooShort(f"nfft {nfft} shorter than frame {x.size}")
    padded = np.zeros(nfft, dtype=np.float64)
    padded[: x.size] = x
    k = np.arange(nfft)
    basis = np.exp(-2j * np.pi * np.outer(k, k) / nfft)
    return basis @ padded


def condition_signal(samples, src_hz: float, dst_hz: float = DEFAULT_FS_HZ,
                     taps: np.ndarray | None = None) -> np.ndarray:
    """Resample to the working rate and remove baseline wander."""
    y = resample(samples, src_hz, dst_hz) if src_hz != dst_hz else np.asarray(
        samples, dtype=np.float64)
    if taps is None:
        taps = design_highpass_fir(FilterSpec(fs_hz=dst_hz))
    return apply_fir(y, taps)
