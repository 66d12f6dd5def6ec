"""Inference-time prosody transfer and its output bundle.

A transfer request carries target text, a reference waveform, the target
speaker, and an optional pitch transform (scale, vocal-range fit, or an
explicit replacement contour). Conditioning per variant:

  hard - the reference F0 contour (after the transform) drives the decoder
         frame by frame; output length equals the contour length and the
         stop gate is ignored.
  soft - the transformed contour is encoded to per-frame prosody vectors the
         decoder attends over; the target text may have any length.
  gst  - the reference mel yields one global style vector; pitch transforms
         do not apply and are ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .dsp import (
    MelSpectrogram,
    StftConfig,
    Waveform,
    mel_spectrogram,
    reconstruct_waveform,
    save_waveform,
)
from .featureio import save_mel_binary
from .model import (
    LoadedCheckpoint,
    ProsodyTransferModel,
    Vocabulary,
    contour_to_features,
)
from .pitch import (
    F0Config,
    PitchContour,
    VocalRangeStats,
    compute_vocal_range,
    extract_f0,
    fit_vocal_range,
    save_contour_csv,
    scale_pitch,
)

MIN_REFERENCE_FRAMES = 5


@dataclass
class PitchScale:
    factor: float


@dataclass
class VocalRangeFit:
    target: VocalRangeStats
    match_std: bool = True


@dataclass
class ContourReplace:
    contour: PitchContour


PitchTransform = PitchScale | VocalRangeFit | ContourReplace


@dataclass
class TransferRequest:
    text: str
    reference: Waveform
    target_speaker_id: str
    pitch_transform: PitchTransform | None = None


@dataclass
class TransferResult:
    variant: str
    waveform: Waveform
    mel: MelSpectrogram
    contour: PitchContour                    # extracted from the output audio
    conditioning_contour: PitchContour | None  # what actually fed the model
    text_attention: np.ndarray
    prosody_attention: np.ndarray | None
    token_weights: np.ndarray | None
    transform_record: dict


def apply_pitch_transform(
    contour: PitchContour, transform: PitchTransform | None
) -> tuple[PitchContour, dict]:
    """Apply the requested edit and produce a replayable record of it."""
    if transform is None:
        return contour, {"kind": "none"}
    if isinstance(transform, PitchScale):
        return scale_pitch(contour, transform.factor), {
            "kind": "scale",
            "factor": transform.factor,
        }
    if isinstance(transform, VocalRangeFit):
        source = compute_vocal_range(contour)
        fitted = fit_vocal_range(contour, source, transform.target, transform.match_std)
        return fitted, {
            "kind": "range_fit",
            "source_log_f0_mean": source.log_f0_mean,
            "source_log_f0_std": source.log_f0_std,
            "target_log_f0_mean": transform.target.log_f0_mean,
            "target_log_f0_std": transform.target.log_f0_std,
            "match_std": transform.match_std,
        }
    if isinstance(transform, ContourReplace):
        return transform.contour, {
            "kind": "replace",
            "f0": [float(v) for v in transform.contour.f0],
            "voiced": [int(v) for v in transform.contour.voiced],
        }
    raise TypeError(f"unknown pitch transform {transform!r}")


def replay_transform(contour: PitchContour, record: dict) -> PitchContour:
    """Re-apply a recorded transform to the raw contour; used for audits."""
    kind = record["kind"]
    if kind == "none":
        return contour
    if kind == "scale":
        return scale_pitch(contour, record["factor"])
    if kind == "range_fit":
        source = VocalRangeStats(
            record["source_log_f0_mean"], record["source_log_f0_std"], n_voiced_frames=1
        )
        target = VocalRangeStats(
            record["target_log_f0_mean"], record["target_log_f0_std"], n_voiced_frames=1
        )
        return fit_vocal_range(contour, source, target, record["match_std"])
    if kind == "replace":
        return PitchContour(
            f0=np.array(record["f0"]),
            voiced=np.array(record["voiced"], dtype=bool),
            hop_length=contour.hop_length,
            sample_rate=contour.sample_rate,
        )
    raise ValueError(f"unknown transform record kind {kind!r}")


def _to_numpy(tensor: torch.Tensor | None) -> np.ndarray | None:
    return None if tensor is None else tensor.detach().cpu().numpy()


def run_transfer(
    model: ProsodyTransferModel,
    vocab: Vocabulary,
    speaker_ids: list[str],
    stft_cfg: StftConfig,
    f0_cfg: F0Config,
    request: TransferRequest,
    gl_iterations: int = 60,
) -> TransferResult:
    """Synthesize one utterance from a loaded model (no checkpoint I/O)."""
    variant = model.cfg.variant
    model.eval()
    try:
        speaker_index = speaker_ids.index(request.target_speaker_id)
    except ValueError:
        raise ValueError(f"unknown speaker id {request.target_speaker_id!r}") from None

    symbols = request.text.split()
    ids = torch.tensor([vocab.encode(symbols)], dtype=torch.long)
    speaker = torch.tensor([speaker_index], dtype=torch.long)

    ref_mel_t = None
    feats_t = None
    conditioning = None
    record = {"kind": "none"}

    if variant in ("gst", "hard"):
        ref_mel = mel_spectrogram(request.reference, stft_cfg)
        ref_mel_t = torch.from_numpy(ref_mel.frames).float().unsqueeze(0)
    if variant in ("hard", "soft"):
        raw = extract_f0(request.reference, f0_cfg)
        if len(raw) < MIN_REFERENCE_FRAMES:
            raise ValueError(
                f"reference too short: {len(raw)} frames < {MIN_REFERENCE_FRAMES}"
            )
        conditioning, record = apply_pitch_transform(raw, request.pitch_transform)
        feats = contour_to_features(conditioning, model.cfg.f0_ref_hz)
        feats_t = torch.from_numpy(feats).unsqueeze(0)

    with torch.no_grad():
        out = model.infer(
            ids, speaker, ref_mel=ref_mel_t, ref_contour_features=feats_t
        )

    mel_frames = out.mel_pred[0].numpy()
    mel = MelSpectrogram(
        frames=mel_frames,
        sample_rate=request.reference.sample_rate,
        hop_length=stft_cfg.hop_length,
        window_length=stft_cfg.window_length,
        fmin=stft_cfg.fmin,
        fmax=stft_cfg.fmax,
        mel_floor=stft_cfg.mel_floor,
    )
    wave = reconstruct_waveform(mel, iterations=gl_iterations)
    contour = extract_f0(wave, f0_cfg)

    prosody_attention = _to_numpy(out.prosody_attention)
    token_weights = _to_numpy(out.token_weights)
    return TransferResult(
        variant=variant,
        waveform=wave,
        mel=mel,
        contour=contour,
        conditioning_contour=conditioning,
        text_attention=_to_numpy(out.text_attention)[0],
        prosody_attention=None if prosody_attention is None else prosody_attention[0],
        token_weights=None if token_weights is None else token_weights[0],
        transform_record=record,
    )


def transfer_from_checkpoint(
    ckpt: LoadedCheckpoint, request: TransferRequest, gl_iterations: int = 60
) -> TransferResult:
    return run_transfer(
        ckpt.model, ckpt.vocab, ckpt.speaker_ids, ckpt.stft_cfg, ckpt.f0_cfg,
        request, gl_iterations=gl_iterations,
    )


BUNDLE_FILES = ("out.wav", "mel.bin", "f0.csv", "attention.csv", "transform.json")


def write_transfer_bundle(result: TransferResult, out_dir) -> list[Path]:
    """Write the five-file output bundle and return the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    wav_path = out_dir / "out.wav"
    save_waveform(wav_path, result.waveform, encoding="float32")
    mel_path = out_dir / "mel.bin"
    save_mel_binary(mel_path, result.mel.frames)
    f0_path = out_dir / "f0.csv"
    save_contour_csv(result.contour, f0_path)
    att_path = out_dir / "attention.csv"
    np.savetxt(att_path, result.text_attention, delimiter=",")
    meta_path = out_dir / "transform.json"
    meta_path.write_text(json.dumps(result.transform_record, indent=2) + "\n")
    return [wav_path, mel_path, f0_path, att_path, meta_path]


# ---- figure emission ---------------------------------------------------------


def emit_pitch_figure(
    contours: list[tuple[str, PitchContour]], figure_path, csv_path=None
) -> tuple[Path, Path]:
    """Overlay named pitch contours and write the exact plotted data as CSV
    (`series,frame,f0_hz,voiced`); unvoiced frames plot as gaps."""
    if not contours:
        raise ValueError("need at least one contour to plot")
    figure_path = Path(figure_path)
    csv_path = Path(csv_path) if csv_path is not None else figure_path.with_suffix(".csv")
    figure_path.parent.mkdir(parents=True, exist_ok=True)

    fig, ax = plt.subplots(figsize=(9, 4))
    for name, contour in contours:
        series = contour.f0.astype(float).copy()
        series[~contour.voiced] = np.nan
        frame_time = np.arange(len(contour)) * contour.hop_length / contour.sample_rate
        ax.plot(frame_time, series, label=name, linewidth=1.4)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("F0 (Hz)")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(figure_path, dpi=150)
    plt.close(fig)

    with open(csv_path, "w", newline="") as fh:
        fh.write("series,frame,f0_hz,voiced\n")
        for name, contour in contours:
            for i, (value, flag) in enumerate(zip(contour.f0, contour.voiced)):
                fh.write(f"{name},{i},{float(value)!r},{int(flag)}\n")
    return figure_path, csv_path


def load_pitch_figure_csv(
    path, hop_length: int = 256, sample_rate: int = 22_050
) -> list[tuple[str, PitchContour]]:
    """Inverse of the CSV side of emit_pitch_figure."""
    series: dict[str, tuple[list[float], list[bool]]] = {}
    order: list[str] = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "series,frame,f0_hz,voiced":
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in fh:
            name, _frame, value, flag = line.rstrip("\n").split(",")
            if name not in series:
                series[name] = ([], [])
                order.append(name)
            series[name][0].append(float(value))
            series[name][1].append(bool(int(flag)))
    return [
        (
            name,
            PitchContour(
                f0=np.array(series[name][0]),
                voiced=np.array(series[name][1], dtype=bool),
                hop_length=hop_length,
                sample_rate=sample_rate,
            ),
        )
        for name in order
    ]
