"""Waveform I/O, mel spectral analysis, and iterative phase reconstruction.

All analysis uses one frame convention: the signal is reflection-padded by
half a window on each side, then sliced into hops, so a signal of n samples
yields 1 + n // hop frames. Pitch extraction (see pitch.py) uses the same
convention, which keeps F0 and mel sequences aligned frame for frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.io import wavfile
from scipy.signal import resample_poly, get_window

from .errors import AudioFormatError, EmptyAudioError

DEFAULT_SAMPLE_RATE = 22_050
MEL_FLOOR = 1e-5


@dataclass
class Waveform:
    """Mono audio at a known sample rate, amplitudes within [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("samples must be a 1-D array")

    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class StftConfig:
    """Frame analysis settings shared by mel and F0 extraction."""

    window_length: int = 1024
    hop_length: int = 256
    mel_channels: int = 80
    fmin: float = 0.0
    fmax: float = 8000.0
    mel_floor: float = MEL_FLOOR

    def __post_init__(self):
        if self.hop_length > self.window_length:
            raise ValueError("hop_length must not exceed window_length")
        if self.mel_channels < 1:
            raise ValueError("mel_channels must be >= 1")
        if not (0 <= self.fmin < self.fmax):
            raise ValueError("need 0 <= fmin < fmax")
        if self.mel_floor <= 0:
            raise ValueError("mel_floor must be positive")


@dataclass
class MelSpectrogram:
    """Log-mel magnitude frames [T x mel_channels] plus the analysis settings
    needed to invert or re-analyze them."""

    frames: np.ndarray
    sample_rate: int
    hop_length: int
    window_length: int
    fmin: float
    fmax: float
    mel_floor: float = MEL_FLOOR

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise ValueError("frames must be [T, mel_channels]")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def mel_channels(self) -> int:
        return self.frames.shape[1]


def load_waveform(path, target_rate: int = DEFAULT_SAMPLE_RATE) -> Waveform:
    """Read a PCM/float WAV file as mono audio at target_rate.

    Multi-channel input is averaged to mono; sample rates are converted with
    polyphase resampling; peaks above 1.0 are scaled back to 1.0 (quiet audio
    is left untouched).
    """
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise AudioFormatError(f"cannot decode {path}: {exc}") from exc

    if data.size == 0:
        raise EmptyAudioError(f"{path} contains no samples")

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    else:
        raise AudioFormatError(f"{path}: unsupported sample format {data.dtype}")

    if samples.ndim == 2:
        samples = samples.mean(axis=1)

    if rate != target_rate:
        g = math.gcd(int(target_rate), int(rate))
        samples = resample_poly(samples, target_rate // g, rate // g)

    peak = np.max(np.abs(samples)) if samples.size else 0.0
    if peak > 1.0:
        samples = samples / peak
    return Waveform(samples=samples, sample_rate=target_rate)


def save_waveform(path, wave: Waveform, encoding: str = "float32") -> None:
    """Write a mono WAV file, either 16-bit PCM or 32-bit float."""
    samples = np.clip(wave.samples, -1.0, 1.0)
    if encoding == "pcm16":
        data = (samples * 32767.0).round().astype(np.int16)
    elif encoding == "float32":
        data = samples.astype(np.float32)
    else:
        raise ValueError(f"unsupported encoding {encoding!r}")
    wavfile.write(path, wave.sample_rate, data)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(cfg: StftConfig) -> np.ndarray:
    """Center frequency (Hz) of each triangular mel filter."""
    mels = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.mel_channels + 2)
    return mel_to_hz(mels)[1:-1]


def mel_filterbank(sample_rate: int, cfg: StftConfig) -> np.ndarray:
    """Triangular filterbank [mel_channels x n_bins] on the mel scale."""
    n_bins = cfg.window_length // 2 + 1
    bin_freqs = np.arange(n_bins) * sample_rate / cfg.window_length
    mels = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.mel_channels + 2)
    edges = mel_to_hz(mels)
    fb = np.zeros((cfg.mel_channels, n_bins))
    for i in range(cfg.mel_channels):
        lo, center, hi = edges[i], edges[i + 1], edges[i + 2]
        up = (bin_freqs - lo) / max(center - lo, 1e-12)
        down = (hi - bin_freqs) / max(hi - center, 1e-12)
        fb[i] = np.maximum(0.0, np.minimum(up, down))
    return fb


def frame_signal(samples: np.ndarray, window_length: int, hop_length: int) -> np.ndarray:
    """Reflection-pad by window/2 and slice into [T, window_length] frames."""
    half = window_length // 2
    if len(samples) < 2:
        raise ValueError("signal too short to frame (need at least 2 samples)")
    padded = np.pad(samples, (half, half), mode="reflect")
    if len(padded) < window_length:
        raise ValueError("signal shorter than one window even after padding")
    n_frames = 1 + (len(padded) - window_length) // hop_length
    frames = sliding_window_view(padded, window_length)[::hop_length][:n_frames]
    return np.ascontiguousarray(frames)


def _stft(samples: np.ndarray, window_length: int, hop_length: int) -> np.ndarray:
    frames = frame_signal(samples, window_length, hop_length)
    window = get_window("hann", window_length, fftbins=True)
    return np.fft.rfft(frames * window, axis=1)


def _istft(spec: np.ndarray, window_length: int, hop_length: int) -> np.ndarray:
    """Overlap-add inverse of _stft; returns the unpadded signal."""
    window = get_window("hann", window_length, fftbins=True)
    frames = np.fft.irfft(spec, n=window_length, axis=1) * window
    n_frames = frames.shape[0]
    length = (n_frames - 1) * hop_length + window_length
    out = np.zeros(length)
    wsum = np.zeros(length)
    sq = window**2
    for t in range(n_frames):
        start = t * hop_length
        out[start : start + window_length] += frames[t]
        wsum[start : start + window_length] += sq
    out /= np.maximum(wsum, 1e-10)
    half = window_length // 2
    return out[half : length - half]


def mel_spectrogram(wave: Waveform, cfg: StftConfig) -> MelSpectrogram:
    """Log-mel magnitude spectrogram of a waveform.

    Magnitudes are pooled through the triangular filterbank and clamped at
    cfg.mel_floor before the natural log, so silence maps to log(mel_floor)
    rather than -inf.
    """
    if cfg.fmax > wave.sample_rate / 2:
        raise ValueError("fmax exceeds Nyquist frequency")
    spec = np.abs(_stft(wave.samples, cfg.window_length, cfg.hop_length))
    fb = mel_filterbank(wave.sample_rate, cfg)
    energies = spec @ fb.T
    frames = np.log(np.maximum(energies, cfg.mel_floor))
    return MelSpectrogram(
        frames=frames,
        sample_rate=wave.sample_rate,
        hop_length=cfg.hop_length,
        window_length=cfg.window_length,
        fmin=cfg.fmin,
        fmax=cfg.fmax,
        mel_floor=cfg.mel_floor,
    )


def reconstruct_waveform(mel: MelSpectrogram, iterations: int = 60, seed: int = 0) -> Waveform:
    """Invert a log-mel spectrogram by pseudo-inverse filterbank expansion
    followed by iterative phase reconstruction.

    Deterministic for a fixed seed: the initial phases come from a seeded
    generator and every subsequent step is pure FFT arithmetic.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    cfg = StftConfig(
        window_length=mel.window_length,
        hop_length=mel.hop_length,
        mel_channels=mel.mel_channels,
        fmin=mel.fmin,
        fmax=mel.fmax,
        mel_floor=mel.mel_floor,
    )
    fb = mel_filterbank(mel.sample_rate, cfg)
    amp = np.exp(mel.frames)
    target = np.maximum(amp @ np.linalg.pinv(fb).T, 0.0)

    rng = np.random.default_rng(seed)
    angles = np.exp(2j * np.pi * rng.random(target.shape))
    spec = target * angles
    for _ in range(iterations):
        signal = _istft(spec, mel.window_length, mel.hop_length)
        est = _stft(signal, mel.window_length, mel.hop_length)
        angles = est / np.maximum(np.abs(est), 1e-10)
        spec = target * angles
    signal = _istft(spec, mel.window_length, mel.hop_length)

    peak = np.max(np.abs(signal)) if signal.size else 0.0
    if peak > 1.0:
        signal = signal / peak
    return Waveform(samples=signal, sample_rate=mel.sample_rate)
