"""Objective evaluation: pitch-error rates and mel-cepstral distortion.

Conventions:
  - Gross pitch error counts frames voiced in BOTH contours whose relative F0
    deviation exceeds the threshold (default 20%).
  - Voicing decision error counts frames where the voiced flags disagree.
  - F0 frame error charges each frame at most once: a voicing mismatch or,
    among both-voiced frames, a gross error.
  - MCD uses the 10/ln(10) * sqrt(2 * sum of squared coefficient differences)
    form over a DTW alignment, 0th cepstral coefficient excluded.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from .dsp import MelSpectrogram, StftConfig, Waveform, mel_spectrogram
from .pitch import F0Config, PitchContour, extract_f0

MCD_CONST = 10.0 / math.log(10.0)
DEFAULT_GPE_THRESHOLD = 0.2
DEFAULT_N_COEFFS = 13


@dataclass
class MetricReport:
    """All objective metrics for one reference/estimate pair.

    The raw counts are kept so the decomposition
    ffe * n_frames == vde * n_frames + gpe * n_both_voiced
    can be checked exactly in integers.
    """

    gpe: float
    vde: float
    ffe: float
    mcd_db: float
    n_frames: int
    n_both_voiced: int
    n_voicing_errors: int = 0
    n_gross_errors: int = 0


@dataclass
class McepSequence:
    """Mel-cepstral coefficients [T x D], energy coefficient already dropped."""

    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        if self.coefficients.ndim != 2:
            raise ValueError("coefficients must be [T, D]")
        if not np.all(np.isfinite(self.coefficients)):
            raise ValueError("coefficients must be finite")

    def __len__(self) -> int:
        return self.coefficients.shape[0]


def _check_lengths(ref: PitchContour, est: PitchContour) -> None:
    if len(ref) != len(est):
        raise ValueError(f"contour length mismatch: {len(ref)} vs {len(est)}")


def voicing_decision_error(ref: PitchContour, est: PitchContour) -> float:
    _check_lengths(ref, est)
    return float(np.count_nonzero(ref.voiced != est.voiced)) / len(ref)


def gross_pitch_error(
    ref: PitchContour, est: PitchContour, threshold: float = DEFAULT_GPE_THRESHOLD
) -> float:
    _check_lengths(ref, est)
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    both = ref.voiced & est.voiced
    n_both = int(np.count_nonzero(both))
    if n_both == 0:
        return 0.0
    deviation = np.abs(est.f0[both] - ref.f0[both])
    return float(np.count_nonzero(deviation > threshold * ref.f0[both])) / n_both


def f0_frame_error(
    ref: PitchContour, est: PitchContour, threshold: float = DEFAULT_GPE_THRESHOLD
) -> float:
    _check_lengths(ref, est)
    counts = _error_counts(ref, est, threshold)
    return (counts[0] + counts[1]) / len(ref)


def _error_counts(ref: PitchContour, est: PitchContour, threshold: float) -> tuple[int, int]:
    """(# voicing mismatches, # gross errors among both-voiced frames)."""
    mismatch = int(np.count_nonzero(ref.voiced != est.voiced))
    both = ref.voiced & est.voiced
    deviation = np.abs(est.f0[both] - ref.f0[both])
    gross = int(np.count_nonzero(deviation > threshold * ref.f0[both]))
    return mismatch, gross


def mel_cepstrum(mel: MelSpectrogram, n_coeffs: int = DEFAULT_N_COEFFS) -> McepSequence:
    """Orthonormal DCT-II of each log-mel frame, coefficients 1..n_coeffs kept."""
    if not (1 <= n_coeffs <= mel.mel_channels - 1):
        raise ValueError(
            f"n_coeffs must lie in [1, {mel.mel_channels - 1}], got {n_coeffs}"
        )
    cepstra = dct(mel.frames, type=2, axis=1, norm="ortho")
    return McepSequence(coefficients=cepstra[:, 1 : n_coeffs + 1])


def _dtw_path(cost: np.ndarray) -> tuple[float, int]:
    """Unconstrained DTW over a local-cost matrix with steps
    {(1,0),(0,1),(1,1)}; returns (total path cost, path length).

    Ties prefer the diagonal step, then the vertical, then the horizontal.
    """
    n, m = cost.shape
    acc = np.full((n, m), np.inf)
    acc[0, 0] = cost[0, 0]
    for i in range(n):
        for j in range(m):
            if i == 0 and j == 0:
                continue
            best = np.inf
            if i > 0 and j > 0:
                best = acc[i - 1, j - 1]
            if i > 0:
                best = min(best, acc[i - 1, j])
            if j > 0:
                best = min(best, acc[i, j - 1])
            acc[i, j] = cost[i, j] + best
    # backtrack for the path length
    i, j = n - 1, m - 1
    length = 1
    while i > 0 or j > 0:
        if i > 0 and j > 0 and acc[i - 1, j - 1] <= acc[i - 1, j] and acc[i - 1, j - 1] <= acc[i, j - 1]:
            i, j = i - 1, j - 1
        elif i > 0 and (j == 0 or acc[i - 1, j] <= acc[i, j - 1]):
            i -= 1
        else:
            j -= 1
        length += 1
    return float(acc[n - 1, m - 1]), length


def mel_cepstral_distortion(ref: McepSequence, est: McepSequence) -> float:
    """DTW-aligned mel-cepstral distortion in dB (mean over the path)."""
    if len(ref) == 0 or len(est) == 0:
        raise ValueError("cepstral sequences must be non-empty")
    if ref.coefficients.shape[1] != est.coefficients.shape[1]:
        raise ValueError("cepstral dimension mismatch")
    diff = ref.coefficients[:, None, :] - est.coefficients[None, :, :]
    local = MCD_CONST * np.sqrt(2.0 * np.sum(diff**2, axis=2))
    total, length = _dtw_path(local)
    return total / length


def evaluate_pair(
    ref_wave: Waveform,
    est_wave: Waveform,
    stft_cfg: StftConfig | None = None,
    f0_cfg: F0Config | None = None,
    n_coeffs: int = DEFAULT_N_COEFFS,
    gpe_threshold: float = DEFAULT_GPE_THRESHOLD,
) -> MetricReport:
    """Extract contours and cepstra from two waveforms and fill a MetricReport.

    The frame-level pitch metrics are computed over the first min(T_ref, T_est)
    frames; MCD aligns the full sequences with DTW.
    """
    if ref_wave.sample_rate != est_wave.sample_rate:
        raise ValueError("reference and estimate sample rates differ")
    stft_cfg = stft_cfg or StftConfig()
    f0_cfg = f0_cfg or F0Config(
        window_length=stft_cfg.window_length, hop_length=stft_cfg.hop_length
    )

    ref_contour = extract_f0(ref_wave, f0_cfg)
    est_contour = extract_f0(est_wave, f0_cfg)
    n = min(len(ref_contour), len(est_contour))
    ref_cut = PitchContour(
        ref_contour.f0[:n], ref_contour.voiced[:n], ref_contour.hop_length, ref_contour.sample_rate
    )
    est_cut = PitchContour(
        est_contour.f0[:n], est_contour.voiced[:n], est_contour.hop_length, est_contour.sample_rate
    )

    mismatch, gross = _error_counts(ref_cut, est_cut, gpe_threshold)
    n_both = int(np.count_nonzero(ref_cut.voiced & est_cut.voiced))
    gpe = gross / n_both if n_both else 0.0
    vde = mismatch / n
    ffe = (mismatch + gross) / n

    ref_mcep = mel_cepstrum(mel_spectrogram(ref_wave, stft_cfg), n_coeffs)
    est_mcep = mel_cepstrum(mel_spectrogram(est_wave, stft_cfg), n_coeffs)
    mcd = mel_cepstral_distortion(ref_mcep, est_mcep)

    return MetricReport(
        gpe=gpe,
        vde=vde,
        ffe=ffe,
        mcd_db=mcd,
        n_frames=n,
        n_both_voiced=n_both,
        n_voicing_errors=mismatch,
        n_gross_errors=gross,
    )


METRIC_CSV_HEADER = ["utt_id", "gpe", "vde", "ffe", "mcd_db", "n_frames", "n_both_voiced"]


def write_metric_csv(rows: list[tuple[str, MetricReport]], path) -> None:
    """Batch evaluation report, one row per utterance."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRIC_CSV_HEADER)
        for utt_id, report in rows:
            writer.writerow(
                [
                    utt_id,
                    repr(report.gpe),
                    repr(report.vde),
                    repr(report.ffe),
                    repr(report.mcd_db),
                    report.n_frames,
                    report.n_both_voiced,
                ]
            )
