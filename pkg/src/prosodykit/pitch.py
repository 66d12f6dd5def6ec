"""Fundamental-frequency extraction and pitch-contour transforms.

The extractor is a normalized-autocorrelation tracker: per frame it computes
the difference function, normalizes it by its cumulative mean, picks the
first dip under the voicing threshold, and refines the lag with parabolic
interpolation. Frames with no dip under the threshold are unvoiced and carry
f0 == 0.0 exactly; consumers must branch on the voiced mask, never on float
comparison against zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dsp import Waveform, frame_signal
from .errors import InvalidSpeakerStatsError


@dataclass
class F0Config:
    """Search range and framing for F0 extraction.

    window_length/hop_length must match the mel analysis settings so contour
    and mel frames stay aligned.
    """

    fmin_search: float = 50.0
    fmax_search: float = 600.0
    voicing_threshold: float = 0.15
    window_length: int = 1024
    hop_length: int = 256

    def __post_init__(self):
        if not (0 < self.fmin_search < self.fmax_search):
            raise ValueError("need 0 < fmin_search < fmax_search")
        if not (0.0 < self.voicing_threshold < 1.0):
            raise ValueError("voicing_threshold must lie in (0, 1)")


@dataclass
class PitchContour:
    """Per-frame fundamental frequency with voicing flags.

    f0[t] > 0 exactly when voiced[t]; unvoiced frames carry f0 == 0.0.
    """

    f0: np.ndarray
    voiced: np.ndarray
    hop_length: int = 256
    sample_rate: int = 22_050

    def __post_init__(self):
        self.f0 = np.asarray(self.f0, dtype=np.float64)
        self.voiced = np.asarray(self.voiced, dtype=bool)
        if self.f0.shape != self.voiced.shape or self.f0.ndim != 1:
            raise ValueError("f0 and voiced must be 1-D arrays of equal length")
        if np.any((self.f0 > 0) != self.voiced):
            raise ValueError("voiced mask inconsistent with f0 values")

    def __len__(self) -> int:
        return len(self.f0)

    def voiced_values(self) -> np.ndarray:
        return self.f0[self.voiced]


@dataclass
class VocalRangeStats:
    """Mean/std of natural-log F0 over voiced frames of a speaker."""

    log_f0_mean: float
    log_f0_std: float
    n_voiced_frames: int = 0

    def is_valid(self) -> bool:
        return (
            self.n_voiced_frames > 0
            and np.isfinite(self.log_f0_mean)
            and np.isfinite(self.log_f0_std)
            and self.log_f0_std >= 0
        )


def extract_f0(wave: Waveform, cfg: F0Config) -> PitchContour:
    """Track F0 per analysis frame; one value per mel-aligned frame."""
    sr = wave.sample_rate
    if cfg.fmax_search > sr / 2:
        raise ValueError("fmax_search exceeds Nyquist frequency")
    frames = frame_signal(wave.samples, cfg.window_length, cfg.hop_length)
    n_frames, w = frames.shape
    w_int = w // 2  # integration window; lags range over the remaining half
    tau_min = max(2, int(sr // cfg.fmax_search))
    tau_hi = int(np.ceil(sr / cfg.fmin_search))
    if tau_hi >= w_int - 1:
        raise ValueError(
            f"fmin_search {cfg.fmin_search} Hz needs a lag of {tau_hi} samples, "
            f"more than the {w_int - 1} available at window {w}"
        )

    # difference function d[t, tau] over tau in [0, w_int) via FFT correlation
    head = frames[:, :w_int]
    e_head = np.sum(head**2, axis=1, keepdims=True)
    csq = np.concatenate(
        [np.zeros((n_frames, 1)), np.cumsum(frames**2, axis=1)], axis=1
    )
    lags = np.arange(w_int)
    e_tail = csq[:, lags + w_int] - csq[:, lags]
    spec_full = np.fft.rfft(frames, n=w, axis=1)
    spec_head = np.fft.rfft(head, n=w, axis=1)
    corr = np.fft.irfft(spec_full * np.conj(spec_head), n=w, axis=1)[:, :w_int]
    diff = np.maximum(e_head + e_tail - 2.0 * corr, 0.0)

    # cumulative-mean normalization; 0/0 (silence) maps to 1 == unvoiced
    cum = np.cumsum(diff[:, 1:], axis=1)
    cmndf = np.ones_like(diff)
    positive = cum > 0
    cmndf[:, 1:][positive] = (diff[:, 1:] * lags[1:])[positive] / cum[positive]

    f0 = np.zeros(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    for t in range(n_frames):
        row = cmndf[t]
        below = np.nonzero(row[tau_min : tau_hi + 1] < cfg.voicing_threshold)[0]
        if below.size == 0:
            continue
        tau = tau_min + below[0]
        while tau + 1 <= tau_hi and row[tau + 1] < row[tau]:
            tau += 1
        # parabolic refinement of the dip position
        if 0 < tau < w_int - 1:
            a, b, c = row[tau - 1], row[tau], row[tau + 1]
            denom = a - 2 * b + c
            shift = 0.5 * (a - c) / denom if abs(denom) > 1e-12 else 0.0
            period = tau + np.clip(shift, -1.0, 1.0)
        else:
            period = float(tau)
        estimate = sr / period
        if cfg.fmin_search <= estimate <= cfg.fmax_search:
            f0[t] = estimate
            voiced[t] = True
    return PitchContour(
        f0=f0, voiced=voiced, hop_length=cfg.hop_length, sample_rate=sr
    )


def scale_pitch(contour: PitchContour, factor: float) -> PitchContour:
    """Multiply voiced F0 values by factor; voicing flags are untouched."""
    if factor <= 0:
        raise ValueError("scale factor must be positive")
    f0 = contour.f0.copy()
    f0[contour.voiced] *= factor
    return PitchContour(
        f0=f0,
        voiced=contour.voiced.copy(),
        hop_length=contour.hop_length,
        sample_rate=contour.sample_rate,
    )


def compute_vocal_range(contour: PitchContour) -> VocalRangeStats:
    """Log-F0 mean/std over the voiced frames of one or more utterances."""
    values = contour.voiced_values()
    if values.size == 0:
        return VocalRangeStats(log_f0_mean=float("nan"), log_f0_std=float("nan"), n_voiced_frames=0)
    logs = np.log(values)
    return VocalRangeStats(
        log_f0_mean=float(np.mean(logs)),
        log_f0_std=float(np.std(logs)),
        n_voiced_frames=int(values.size),
    )


def fit_vocal_range(
    contour: PitchContour,
    source: VocalRangeStats,
    target: VocalRangeStats,
    match_std: bool = True,
) -> PitchContour:
    """Map voiced frames through a log-domain affine transform so the contour
    lands in the target speaker's pitch distribution.

    log f0' = (log f0 - source.mean) * (target.std / source.std) + target.mean,
    with the std ratio fixed at 1 when match_std is off. Unvoiced frames are
    untouched.
    """
    if not source.is_valid():
        raise InvalidSpeakerStatsError("source vocal-range stats are invalid")
    if not target.is_valid():
        raise InvalidSpeakerStatsError("target vocal-range stats are invalid")
    if match_std:
        if source.log_f0_std <= 1e-12:
            raise InvalidSpeakerStatsError(
                "source log-F0 std is degenerate; disable match_std or widen the source"
            )
        ratio = target.log_f0_std / source.log_f0_std
    else:
        ratio = 1.0
    f0 = contour.f0.copy()
    logs = np.log(f0[contour.voiced])
    f0[contour.voiced] = np.exp((logs - source.log_f0_mean) * ratio + target.log_f0_mean)
    return PitchContour(
        f0=f0,
        voiced=contour.voiced.copy(),
        hop_length=contour.hop_length,
        sample_rate=contour.sample_rate,
    )


def save_contour_csv(contour: PitchContour, path) -> None:
    """Write `frame,f0_hz,voiced` rows; floats use round-trip repr."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "f0_hz", "voiced"])
        for i, (value, flag) in enumerate(zip(contour.f0, contour.voiced)):
            writer.writerow([i, repr(float(value)), int(flag)])


def load_contour_csv(path, hop_length: int = 256, sample_rate: int = 22_050) -> PitchContour:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["frame", "f0_hz", "voiced"]:
            raise ValueError(f"{path}: unexpected contour CSV header {header}")
        f0, voiced = [], []
        for row in reader:
            f0.append(float(row[1]))
            voiced.append(bool(int(row[2])))
    return PitchContour(
        f0=np.array(f0),
        voiced=np.array(voiced, dtype=bool),
        hop_length=hop_length,
        sample_rate=sample_rate,
    )
