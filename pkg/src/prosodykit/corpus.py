"""Corpus handling: manifest ingestion, a deterministic synthetic corpus
generator, and feature preparation (cached mel + F0 + per-speaker pitch
statistics).

Manifest format: one utterance per line, pipe-separated
    audio_path|phoneme phoneme ...|speaker_id[|style]
Paths are resolved relative to the manifest location. The utterance id is the
audio file stem and must be unique.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dsp import (
    StftConfig,
    Waveform,
    load_waveform,
    mel_spectrogram,
    save_waveform,
)
from .errors import ManifestError
from .featureio import save_mel_binary
from .pitch import F0Config, PitchContour, VocalRangeStats, extract_f0, save_contour_csv

MANIFEST_NAME = "manifest.txt"
TRAIN_MANIFEST_NAME = "manifest_train.txt"
SPEAKER_STATS_NAME = "speaker_stats.csv"

CONTOUR_FAMILIES = ("midpeak", "rising", "falling", "flat")


@dataclass
class UtteranceRecord:
    utt_id: str
    audio_path: Path
    phonemes: list[str]
    speaker_id: str
    style: str | None = None


@dataclass
class SyntheticCorpusSpec:
    """Harmonic-tone corpus whose F0 follows per-speaker bands and per-style
    contour families. Speaker bands are geometrically spaced and disjoint as
    long as band_gap_ratio > band_width_ratio (the generator enforces it)."""

    n_speakers: int = 4
    utterances_per_speaker: int = 2
    vocab_size: int = 8
    min_symbols: int = 6
    max_symbols: int = 9
    seed: int = 1234
    sample_rate: int = 22_050
    base_f0_hz: float = 110.0
    band_gap_ratio: float = 1.32
    band_width_ratio: float = 1.18
    symbol_duration: float = 0.11
    styles: tuple[str, ...] = CONTOUR_FAMILIES
    holdout_style: str | None = None

    def __post_init__(self):
        if self.n_speakers < 1 or self.utterances_per_speaker < 1:
            raise ValueError("need at least one speaker and one utterance each")
        if self.band_gap_ratio <= self.band_width_ratio:
            raise ValueError("speaker bands would overlap: need band_gap_ratio > band_width_ratio")
        if not (1 <= self.min_symbols <= self.max_symbols):
            raise ValueError("bad symbol-count range")
        unknown = set(self.styles) - set(CONTOUR_FAMILIES)
        if unknown:
            raise ValueError(f"unknown contour families {sorted(unknown)}")
        if self.holdout_style is not None and self.holdout_style not in self.styles:
            raise ValueError("holdout_style must be one of the configured styles")

    def speaker_band(self, index: int) -> tuple[float, float]:
        low = self.base_f0_hz * self.band_gap_ratio**index
        return low, low * self.band_width_ratio


def _contour_shape(style: str, u: np.ndarray) -> np.ndarray:
    """Normalized pitch trajectory in [0.1, 0.9] over normalized time u."""
    if style == "flat":
        return np.full_like(u, 0.5)
    if style == "rising":
        return 0.15 + 0.7 * u
    if style == "falling":
        return 0.85 - 0.7 * u
    if style == "midpeak":
        return 0.15 + 0.7 * np.sin(np.pi * u)
    raise ValueError(f"unknown contour family {style!r}")


def _symbol_harmonics(seed: int, symbol: int, n_harmonics: int = 5) -> np.ndarray:
    rng = np.random.default_rng(seed * 7919 + symbol)
    weights = 0.25 + rng.random(n_harmonics)
    weights /= weights.sum()
    return weights


def _symbol_duration(spec: SyntheticCorpusSpec, symbol: int) -> float:
    return spec.symbol_duration * (0.85 + 0.3 * (symbol % 4) / 3.0)


def synthesize_utterance(
    spec: SyntheticCorpusSpec, symbols: list[int], band: tuple[float, float], style: str
) -> Waveform:
    """Harmonic tone: per-symbol timbre and duration, style-shaped F0."""
    sr = spec.sample_rate
    seg_lengths = [max(1, int(round(_symbol_duration(spec, s) * sr))) for s in symbols]
    n = sum(seg_lengths)
    u = np.arange(n) / max(n - 1, 1)
    f0 = band[0] + _contour_shape(style, u) * (band[1] - band[0])
    phase = 2.0 * np.pi * np.cumsum(f0) / sr

    n_harmonics = 5
    weights = np.zeros((n, n_harmonics))
    pos = 0
    for sym, seg_len in zip(symbols, seg_lengths):
        weights[pos : pos + seg_len] = _symbol_harmonics(spec.seed, sym)
        pos += seg_len
    # short box smoothing removes timbre steps that would click
    k = max(1, int(0.005 * sr))
    kernel = np.ones(k) / k
    for h in range(n_harmonics):
        weights[:, h] = np.convolve(weights[:, h], kernel, mode="same")

    samples = np.zeros(n)
    for h in range(n_harmonics):
        samples += weights[:, h] * np.sin((h + 1) * phase)
    fade = min(int(0.01 * sr), n // 4)
    if fade > 0:
        ramp = np.linspace(0.0, 1.0, fade)
        samples[:fade] *= ramp
        samples[-fade:] *= ramp[::-1]
    samples *= 0.75 / max(np.max(np.abs(samples)), 1e-9)
    return Waveform(samples=samples, sample_rate=sr)


def generate_synthetic_corpus(spec: SyntheticCorpusSpec, out_dir) -> Path:
    """Write WAVs plus a manifest; returns the manifest path.

    Fully deterministic for a fixed spec: the RNG is seeded and consumed in a
    fixed order. When holdout_style is set, a second manifest excluding that
    style is written next to the full one.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    lines = []
    kept_lines = []
    for s in range(spec.n_speakers):
        band = spec.speaker_band(s)
        speaker_id = f"spk{s}"
        for j in range(spec.utterances_per_speaker):
            n_symbols = int(rng.integers(spec.min_symbols, spec.max_symbols + 1))
            symbols = rng.integers(0, spec.vocab_size, size=n_symbols).tolist()
            style = spec.styles[(s * spec.utterances_per_speaker + j) % len(spec.styles)]
            wave = synthesize_utterance(spec, symbols, band, style)
            utt_id = f"{speaker_id}_utt{j:03d}"
            wav_name = f"{utt_id}.wav"
            save_waveform(out_dir / wav_name, wave, encoding="pcm16")
            phonemes = " ".join(f"p{k}" for k in symbols)
            line = f"{wav_name}|{phonemes}|{speaker_id}|{style}"
            lines.append(line)
            if style != spec.holdout_style:
                kept_lines.append(line)
    manifest = out_dir / MANIFEST_NAME
    manifest.write_text("\n".join(lines) + "\n")
    if spec.holdout_style is not None:
        (out_dir / TRAIN_MANIFEST_NAME).write_text("\n".join(kept_lines) + "\n")
    return manifest


def load_manifest(path) -> list[UtteranceRecord]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    records = []
    seen = set()
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("|")
        if len(fields) not in (3, 4):
            raise ManifestError(
                f"expected 3 or 4 pipe-separated fields, got {len(fields)}", line_no
            )
        audio, phonemes, speaker = fields[0].strip(), fields[1].split(), fields[2].strip()
        if not audio or not phonemes or not speaker:
            raise ManifestError("empty field", line_no)
        style = fields[3].strip() if len(fields) == 4 else None
        audio_path = (path.parent / audio).resolve() if not os.path.isabs(audio) else Path(audio)
        utt_id = Path(audio).stem
        if utt_id in seen:
            raise ManifestError(f"duplicate utterance id {utt_id!r}", line_no)
        seen.add(utt_id)
        records.append(
            UtteranceRecord(
                utt_id=utt_id, audio_path=audio_path, phonemes=phonemes,
                speaker_id=speaker, style=style,
            )
        )
    return records


def save_manifest(records: list[UtteranceRecord], path) -> None:
    path = Path(path)
    lines = []
    for rec in records:
        fields = [str(rec.audio_path), " ".join(rec.phonemes), rec.speaker_id]
        if rec.style is not None:
            fields.append(rec.style)
        lines.append("|".join(fields))
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


def missing_audio(records: list[UtteranceRecord]) -> list[str]:
    """Utterance ids whose audio file is absent."""
    return [rec.utt_id for rec in records if not rec.audio_path.exists()]


@dataclass
class PrepareSummary:
    prepared: list[str] = field(default_factory=list)
    cached: list[str] = field(default_factory=list)
    failed: list[tuple[str, str]] = field(default_factory=list)
    speaker_stats: dict[str, VocalRangeStats] = field(default_factory=dict)


def feature_paths(out_dir, utt_id: str) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    return out_dir / f"{utt_id}.mel", out_dir / f"{utt_id}.f0.csv"


def prepare_features(
    records: list[UtteranceRecord],
    stft_cfg: StftConfig,
    f0_cfg: F0Config,
    out_dir,
    sample_rate: int = 22_050,
    fail_fast: bool = False,
) -> PrepareSummary:
    """Cache mel + F0 per utterance and write per-speaker log-F0 statistics.

    An utterance is skipped when both feature files already exist and are
    newer than the audio; cached contours still feed the speaker statistics.
    """
    from .pitch import load_contour_csv

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = PrepareSummary()
    voiced_logs: dict[str, list[np.ndarray]] = {}

    for rec in records:
        mel_path, f0_path = feature_paths(out_dir, rec.utt_id)
        try:
            audio_mtime = rec.audio_path.stat().st_mtime
            fresh = (
                mel_path.exists()
                and f0_path.exists()
                and mel_path.stat().st_mtime >= audio_mtime
                and f0_path.stat().st_mtime >= audio_mtime
            )
            if fresh:
                contour = load_contour_csv(
                    f0_path, hop_length=f0_cfg.hop_length, sample_rate=sample_rate
                )
                summary.cached.append(rec.utt_id)
            else:
                wave = load_waveform(rec.audio_path, target_rate=sample_rate)
                mel = mel_spectrogram(wave, stft_cfg)
                contour = extract_f0(wave, f0_cfg)
                save_mel_binary(mel_path, mel.frames)
                save_contour_csv(contour, f0_path)
                summary.prepared.append(rec.utt_id)
        except Exception as exc:
            if fail_fast:
                raise
            summary.failed.append((rec.utt_id, str(exc)))
            continue
        voiced_logs.setdefault(rec.speaker_id, []).append(np.log(contour.voiced_values()))

    for speaker_id, chunks in sorted(voiced_logs.items()):
        values = np.concatenate(chunks) if chunks else np.array([])
        if values.size == 0:
            stats = VocalRangeStats(float("nan"), float("nan"), 0)
        else:
            stats = VocalRangeStats(
                log_f0_mean=float(values.mean()),
                log_f0_std=float(values.std()),
                n_voiced_frames=int(values.size),
            )
        summary.speaker_stats[speaker_id] = stats

    write_speaker_stats(summary.speaker_stats, out_dir / SPEAKER_STATS_NAME)
    return summary


def write_speaker_stats(stats: dict[str, VocalRangeStats], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["speaker_id", "log_f0_mean", "log_f0_std", "n_voiced_frames"])
        for speaker_id in sorted(stats):
            s = stats[speaker_id]
            writer.writerow([speaker_id, repr(s.log_f0_mean), repr(s.log_f0_std), s.n_voiced_frames])


def load_speaker_stats(path) -> dict[str, VocalRangeStats]:
    stats = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["speaker_id", "log_f0_mean", "log_f0_std", "n_voiced_frames"]:
            raise ValueError(f"{path}: unexpected speaker stats header {header}")
        for row in reader:
            stats[row[0]] = VocalRangeStats(
                log_f0_mean=float(row[1]), log_f0_std=float(row[2]), n_voiced_frames=int(row[3])
            )
    return stats
