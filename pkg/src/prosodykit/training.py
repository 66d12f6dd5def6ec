"""Optimization harness: Adam with a step-halving schedule, deterministic
single-threaded training, loss logging, checkpointing, and the adversarial
weight sweep with its speaker-probe evaluation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from .corpus import UtteranceRecord, feature_paths, load_manifest
from .dsp import StftConfig, load_waveform
from .errors import TrainingDivergedError
from .featureio import load_mel_binary
from .metrics import MetricReport, evaluate_pair
from .model import (
    ModelConfig,
    ProsodyTransferModel,
    Vocabulary,
    compute_loss,
    contour_to_features,
    save_checkpoint,
)
from .pitch import F0Config, load_contour_csv


@dataclass
class TrainConfig:
    initial_lr: float = 1e-3
    decay_interval: int = 50_000
    batch_size: int = 4
    max_steps: int = 500
    seed: int = 1234
    lambda_speaker: float = 0.0
    checkpoint_interval: int = 250
    grad_clip_norm: float = 1.0

    def __post_init__(self):
        if self.initial_lr <= 0:
            raise ValueError("initial_lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lambda_speaker < 0:
            raise ValueError("lambda_speaker must be >= 0")
        if self.decay_interval < 1:
            raise ValueError("decay_interval must be >= 1")


def lr_schedule(step: int, cfg: TrainConfig) -> float:
    """Halve the initial rate once per decay interval."""
    if step < 0:
        raise ValueError("step must be >= 0")
    return cfg.initial_lr * 0.5 ** (step // cfg.decay_interval)


@dataclass
class TrainingItem:
    utt_id: str
    symbol_ids: list[int]
    speaker_index: int
    mel: np.ndarray            # [T, C]
    contour_features: np.ndarray  # [T, 2]
    record: UtteranceRecord


@dataclass
class TrainingSet:
    items: list[TrainingItem]
    vocab: Vocabulary
    speaker_ids: list[str]


def load_training_set(
    manifest_path, features_dir, f0_ref_hz: float = 200.0, hop_length: int = 256
) -> TrainingSet:
    """Join the manifest with the feature cache and build the symbol/speaker
    tables. F0 and mel frame counts must agree per utterance."""
    records = load_manifest(manifest_path)
    if not records:
        raise ValueError(f"manifest {manifest_path} has no utterances")
    vocab = Vocabulary.from_corpus_symbols(p for r in records for p in r.phonemes)
    speaker_ids = sorted({r.speaker_id for r in records})
    speaker_index = {s: i for i, s in enumerate(speaker_ids)}
    items = []
    for rec in records:
        mel_path, f0_path = feature_paths(features_dir, rec.utt_id)
        if not mel_path.exists() or not f0_path.exists():
            raise FileNotFoundError(f"features for {rec.utt_id} missing under {features_dir}")
        mel = load_mel_binary(mel_path)
        contour = load_contour_csv(f0_path, hop_length=hop_length)
        if len(contour) != mel.shape[0]:
            raise ValueError(
                f"{rec.utt_id}: contour length {len(contour)} != mel frames {mel.shape[0]}"
            )
        items.append(
            TrainingItem(
                utt_id=rec.utt_id,
                symbol_ids=vocab.encode(rec.phonemes),
                speaker_index=speaker_index[rec.speaker_id],
                mel=mel,
                contour_features=contour_to_features(contour, f0_ref_hz),
                record=rec,
            )
        )
    return TrainingSet(items=items, vocab=vocab, speaker_ids=speaker_ids)


@dataclass
class Batch:
    symbol_ids: torch.Tensor
    text_lengths: torch.Tensor
    speaker_ids: torch.Tensor
    mel: torch.Tensor
    mel_lengths: torch.Tensor
    gate_target: torch.Tensor
    contour_features: torch.Tensor


def collate(items: list[TrainingItem]) -> Batch:
    b = len(items)
    n_max = max(len(it.symbol_ids) for it in items)
    t_max = max(it.mel.shape[0] for it in items)
    n_mel = items[0].mel.shape[1]
    symbol_ids = torch.zeros(b, n_max, dtype=torch.long)
    text_lengths = torch.tensor([len(it.symbol_ids) for it in items], dtype=torch.long)
    mel = torch.zeros(b, t_max, n_mel)
    mel_lengths = torch.tensor([it.mel.shape[0] for it in items], dtype=torch.long)
    gate = torch.zeros(b, t_max)
    feats = torch.zeros(b, t_max, 2)
    for i, it in enumerate(items):
        symbol_ids[i, : len(it.symbol_ids)] = torch.tensor(it.symbol_ids, dtype=torch.long)
        t = it.mel.shape[0]
        mel[i, :t] = torch.from_numpy(it.mel).float()
        gate[i, t - 1] = 1.0
        feats[i, :t] = torch.from_numpy(it.contour_features)
    speakers = torch.tensor([it.speaker_index for it in items], dtype=torch.long)
    return Batch(symbol_ids, text_lengths, speakers, mel, mel_lengths, gate, feats)


def make_batches(items: list[TrainingItem], batch_size: int) -> list[list[TrainingItem]]:
    """Length-sorted bucketing keeps padding waste small."""
    ordered = sorted(items, key=lambda it: it.mel.shape[0], reverse=True)
    return [ordered[i : i + batch_size] for i in range(0, len(ordered), batch_size)]


@dataclass
class LossRow:
    step: int
    lr: float
    total: float
    rmse: float
    bce: float
    ce: float


LOSS_LOG_HEADER = ["step", "lr", "total", "rmse", "bce", "ce"]


def write_loss_log(rows: list[LossRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(LOSS_LOG_HEADER)
        for r in rows:
            writer.writerow([r.step, repr(r.lr), repr(r.total), repr(r.rmse), repr(r.bce), repr(r.ce)])


@dataclass
class TrainResult:
    model: ProsodyTransferModel
    vocab: Vocabulary
    speaker_ids: list[str]
    loss_rows: list[LossRow]
    loss_log_path: Path | None
    checkpoint_paths: list[Path]


def _forward_batch(model: ProsodyTransferModel, batch: Batch):
    variant = model.cfg.variant
    return model(
        batch.symbol_ids,
        batch.text_lengths,
        batch.speaker_ids,
        batch.mel,
        ref_mel=batch.mel if variant in ("gst", "hard") else None,
        ref_contour_features=batch.contour_features if variant in ("hard", "soft") else None,
        prosody_lengths=batch.mel_lengths if variant == "soft" else None,
    )


def train(
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    manifest_path,
    features_dir,
    out_dir=None,
    stft_cfg: StftConfig | None = None,
    f0_cfg: F0Config | None = None,
) -> TrainResult:
    """Teacher-forced training, deterministic for a fixed seed (the run is
    pinned to one thread). Writes checkpoints and the loss log when out_dir
    is given; raises TrainingDivergedError on a non-finite loss."""
    torch.set_num_threads(1)
    torch.manual_seed(train_cfg.seed)

    stft_cfg = stft_cfg or StftConfig(mel_channels=model_cfg.n_mel_channels)
    f0_cfg = f0_cfg or F0Config(
        window_length=stft_cfg.window_length, hop_length=stft_cfg.hop_length
    )
    dataset = load_training_set(
        manifest_path, features_dir,
        f0_ref_hz=model_cfg.f0_ref_hz, hop_length=stft_cfg.hop_length,
    )
    model_cfg = replace(
        model_cfg, n_symbols=dataset.vocab.size, n_speakers=len(dataset.speaker_ids)
    )
    model = ProsodyTransferModel(model_cfg, seed=train_cfg.seed)
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=train_cfg.initial_lr)

    batches = make_batches(dataset.items, train_cfg.batch_size)
    order_rng = np.random.default_rng(train_cfg.seed)

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    rows: list[LossRow] = []
    checkpoint_paths: list[Path] = []

    def save(step: int) -> None:
        if out_dir is None:
            return
        path = out_dir / f"checkpoint_step{step:06d}.pt"
        save_checkpoint(
            path, model, dataset.vocab, dataset.speaker_ids, stft_cfg, f0_cfg, step=step
        )
        checkpoint_paths.append(path)

    step = 0
    order: list[int] = []
    while step < train_cfg.max_steps:
        if not order:
            order = list(order_rng.permutation(len(batches)))
        batch = collate(batches[order.pop(0)])
        lr = lr_schedule(step, train_cfg)
        for group in optimizer.param_groups:
            group["lr"] = lr

        out = _forward_batch(model, batch)
        loss = compute_loss(
            out, batch.mel, batch.gate_target, batch.speaker_ids,
            train_cfg.lambda_speaker, mel_lengths=batch.mel_lengths,
        )
        step += 1
        if not torch.isfinite(loss.total):
            raise TrainingDivergedError(step)
        optimizer.zero_grad()
        loss.total.backward()
        if train_cfg.grad_clip_norm > 0:
            torch.nn.utils.clip_grad_norm_(model.parameters(), train_cfg.grad_clip_norm)
        optimizer.step()
        rows.append(
            LossRow(
                step=step, lr=lr, total=float(loss.total), rmse=float(loss.rmse),
                bce=float(loss.bce), ce=float(loss.ce),
            )
        )
        if train_cfg.checkpoint_interval > 0 and step % train_cfg.checkpoint_interval == 0:
            save(step)

    if not checkpoint_paths or checkpoint_paths[-1].name != f"checkpoint_step{step:06d}.pt":
        save(step)
    loss_log_path = None
    if out_dir is not None:
        loss_log_path = out_dir / "loss_log.csv"
        write_loss_log(rows, loss_log_path)

    model.eval()
    return TrainResult(
        model=model,
        vocab=dataset.vocab,
        speaker_ids=dataset.speaker_ids,
        loss_rows=rows,
        loss_log_path=loss_log_path,
        checkpoint_paths=checkpoint_paths,
    )


# ---- adversarial-weight sweep ----------------------------------------------


def prosody_embeddings(model: ProsodyTransferModel, dataset: TrainingSet) -> np.ndarray:
    """Mean-pooled prosody embedding per utterance, computed in eval mode."""
    model.eval()
    pooled = []
    with torch.no_grad():
        for item in dataset.items:
            if model.cfg.variant == "soft":
                feats = torch.from_numpy(item.contour_features).unsqueeze(0)
                embed = model.pitch_prosody(feats)
            else:
                mel = torch.from_numpy(item.mel).float().unsqueeze(0)
                embed, _ = model.gst_embedding(mel)
            pooled.append(embed.mean(dim=1).squeeze(0).numpy())
    return np.stack(pooled)


def speaker_probe_accuracy(
    embeddings: np.ndarray, labels: np.ndarray, seed: int = 0,
    steps: int = 400, lr: float = 0.1,
) -> float:
    """Fit a fresh linear probe on frozen embeddings and report its training
    accuracy: a proxy for how much speaker identity the embeddings retain."""
    torch.manual_seed(seed)
    x = torch.from_numpy(embeddings).float()
    x = (x - x.mean(dim=0)) / x.std(dim=0).clamp(min=1e-6)
    y = torch.from_numpy(labels).long()
    probe = torch.nn.Linear(x.size(1), int(labels.max()) + 1)
    opt = torch.optim.Adam(probe.parameters(), lr=lr)
    for _ in range(steps):
        opt.zero_grad()
        loss = torch.nn.functional.cross_entropy(probe(x), y)
        loss.backward()
        opt.step()
    with torch.no_grad():
        return float((probe(x).argmax(dim=1) == y).float().mean())


@dataclass
class SweepRow:
    lambda_speaker: float
    report: MetricReport
    probe_accuracy: float


SWEEP_CSV_HEADER = ["lambda", "gpe", "vde", "ffe", "mcd_db", "probe_accuracy"]


def write_sweep_csv(rows: list[SweepRow], path, incomplete: list[float] = ()) -> None:
    """Sweep report sorted by lambda; aborted lambdas appear with nan metrics."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_CSV_HEADER)
        done = sorted(rows, key=lambda r: r.lambda_speaker)
        for r in done:
            writer.writerow(
                [
                    repr(r.lambda_speaker), repr(r.report.gpe), repr(r.report.vde),
                    repr(r.report.ffe), repr(r.report.mcd_db), repr(r.probe_accuracy),
                ]
            )
        for lam in sorted(incomplete):
            writer.writerow([repr(lam), "nan", "nan", "nan", "nan", "nan"])


def _mean_report(reports: list[MetricReport]) -> MetricReport:
    n = len(reports)
    return MetricReport(
        gpe=sum(r.gpe for r in reports) / n,
        vde=sum(r.vde for r in reports) / n,
        ffe=sum(r.ffe for r in reports) / n,
        mcd_db=sum(r.mcd_db for r in reports) / n,
        n_frames=sum(r.n_frames for r in reports),
        n_both_voiced=sum(r.n_both_voiced for r in reports),
        n_voicing_errors=sum(r.n_voicing_errors for r in reports),
        n_gross_errors=sum(r.n_gross_errors for r in reports),
    )


def lambda_sweep(
    model_cfg: ModelConfig,
    base_cfg: TrainConfig,
    lambdas: list[float],
    manifest_path,
    features_dir,
    out_dir=None,
    eval_utt_ids: list[str] | None = None,
    gl_iterations: int = 30,
    stft_cfg: StftConfig | None = None,
    f0_cfg: F0Config | None = None,
) -> list[SweepRow]:
    """One full training plus objective evaluation per adversarial weight.

    Evaluation synthesizes each selected utterance with itself as reference
    (matching target and reference speaker) and compares against the original
    audio; the probe accuracy measures residual speaker identity in the
    frozen prosody embeddings.
    """
    from .transfer import TransferRequest, run_transfer

    if not lambdas:
        raise ValueError("need at least one lambda value")
    out_dir = Path(out_dir) if out_dir is not None else None
    stft_cfg = stft_cfg or StftConfig(mel_channels=model_cfg.n_mel_channels)
    f0_cfg = f0_cfg or F0Config(
        window_length=stft_cfg.window_length, hop_length=stft_cfg.hop_length
    )
    rows = []
    for lam in sorted(lambdas):
        run_dir = out_dir / f"lambda_{lam:g}" if out_dir is not None else None
        cfg = replace(base_cfg, lambda_speaker=lam)
        result = train(
            model_cfg, cfg, manifest_path, features_dir, run_dir,
            stft_cfg=stft_cfg, f0_cfg=f0_cfg,
        )
        dataset = load_training_set(
            manifest_path, features_dir,
            f0_ref_hz=result.model.cfg.f0_ref_hz, hop_length=stft_cfg.hop_length,
        )
        embeddings = prosody_embeddings(result.model, dataset)
        labels = np.array([it.speaker_index for it in dataset.items])
        probe = speaker_probe_accuracy(embeddings, labels, seed=base_cfg.seed)

        reports = []
        for item in dataset.items:
            if eval_utt_ids is not None and item.utt_id not in eval_utt_ids:
                continue
            ref_wave = load_waveform(item.record.audio_path)
            request = TransferRequest(
                text=" ".join(item.record.phonemes),
                reference=ref_wave,
                target_speaker_id=item.record.speaker_id,
            )
            outcome = run_transfer(
                result.model, dataset.vocab, dataset.speaker_ids,
                stft_cfg, f0_cfg, request, gl_iterations=gl_iterations,
            )
            reports.append(evaluate_pair(ref_wave, outcome.waveform, stft_cfg, f0_cfg))
        if not reports:
            raise ValueError("no evaluation utterances selected")
        rows.append(SweepRow(lambda_speaker=lam, report=_mean_report(reports), probe_accuracy=probe))
    if out_dir is not None:
        write_sweep_csv(rows, out_dir / "sweep.csv")
    return rows
