"""Log mel-filterbank audio features and temporal resampling.

A self-contained front-end: framed power spectra from a radix-2 FFT pushed
through a triangular mel filterbank, log-compressed.  Frames come out at
100/s (window 400, hop 160 at 16 kHz) and are linearly resampled to the
video frame rate downstream.  No pre-emphasis or window taper: frames are
rectangular, which keeps the desk-scale oracles exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SAMPLE_RATE = 16000
WINDOW = 400
HOP = 160
N_FFT = 1024
N_MELS = 80
LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class AudioFeatures:
    """Framed log filterbank energies: (T_a, n_mels) at `hop` samples/frame."""

    frames: np.ndarray
    sample_rate: int = SAMPLE_RATE
    hop: int = HOP

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValueError(f"frames must be (T_a, F) with T_a >= 1, got {frames.shape}")
        if not np.isfinite(frames).all():
            raise ValueError("audio features contain non-finite values")
        object.__setattr__(self, "frames", frames)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels=N_MELS, n_fft=N_FFT, sample_rate=SAMPLE_RATE):
    """Triangular mel filters over rfft bins, as an (n_mels, n_fft//2+1) matrix."""
    nyquist = sample_rate / 2.0
    mel_points = np.linspace(hz_to_mel(0.0), hz_to_mel(nyquist), n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft

    bank = np.zeros((n_mels, n_fft // 2 + 1))
    for m in range(n_mels):
        lo, mid, hi = hz_points[m : m + 3]
        rising = (bin_freqs - lo) / (mid - lo)
        falling = (hi - bin_freqs) / (hi - mid)
        bank[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    if not (bank.sum(axis=1) > 0).all():
        raise ValueError("mel filterbank has an empty filter; increase n_fft")
    return bank


def filter_band_edges(n_mels=N_MELS, sample_rate=SAMPLE_RATE):
    """(lo, hi) Hz support of each triangular filter."""
    nyquist = sample_rate / 2.0
    hz_points = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(nyquist), n_mels + 2))
    return np.column_stack([hz_points[:-2], hz_points[2:]])


def audio_frontend(waveform, sample_rate=SAMPLE_RATE, n_mels=N_MELS) -> AudioFeatures:
    """Log filterbank frames of a mono PCM16 (or float) waveform at 16 kHz.

    Integer input is scaled by 1/32768; waveforms shorter than one window are
    zero-padded to a single frame.  Other sample rates are rejected: the
    caller must resample first.
    """
    if sample_rate != SAMPLE_RATE:
        raise ValueError(
            f"unsupported sample rate {sample_rate}; resample to {SAMPLE_RATE} Hz first"
        )
    x = np.asarray(waveform)
    if x.size == 0:
        raise ValueError("empty waveform")
    if np.issubdtype(x.dtype, np.integer):
        x = x.astype(np.float64) / 32768.0
    else:
        x = x.astype(np.float64)
    if x.ndim != 1:
        raise ValueError(f"waveform must be mono (1-D), got shape {x.shape}")
    if x.size < WINDOW:
        x = np.pad(x, (0, WINDOW - x.size))

    n_frames = 1 + (x.size - WINDOW) // HOP
    idx = np.arange(WINDOW)[None, :] + HOP * np.arange(n_frames)[:, None]
    frames = x[idx]
    spectrum = np.fft.rfft(frames, n=N_FFT, axis=1)
    power = spectrum.real**2 + spectrum.imag**2
    energies = power @ mel_filterbank(n_mels).T
    return AudioFeatures(frames=np.log(LOG_FLOOR + energies))


def resample_linear(features, t_target: int) -> np.ndarray:
    """Per-column linear interpolation of (T_a, F) rows onto t_target rows.

    Endpoints map to endpoints exactly; equal lengths return a copy.
    """
    f = np.asarray(features, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError(f"features must be 2-D, got shape {f.shape}")
    t_source = f.shape[0]
    if t_source < 1 or t_target < 1:
        raise ValueError("both lengths must be >= 1")
    if t_target == t_source:
        return f.copy()
    if t_source == 1:
        return np.repeat(f, t_target, axis=0)
    pos = np.linspace(0.0, t_source - 1.0, t_target)
    i0 = np.minimum(pos.astype(np.int64), t_source - 2)
    frac = (pos - i0)[:, None]
    return f[i0] * (1.0 - frac) + f[i0 + 1] * frac
