"""Command-line entry point.

Subcommands: prepare, train, transfer, eval, sweep, plot. Every command
resolves a flat key=value configuration (defaults < config file < --set
overrides < dedicated flags), echoes it into the output directory as
config.txt before doing any work, and exits 0 on success, 1 on usage errors,
2 on data errors, 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

from .corpus import (
    SyntheticCorpusSpec,
    generate_synthetic_corpus,
    load_manifest,
    load_speaker_stats,
    missing_audio,
    prepare_features,
)
from .dsp import StftConfig, load_waveform
from .errors import (
    AudioFormatError,
    EmptyAudioError,
    InvalidSpeakerStatsError,
    ManifestError,
    MissingUtteranceError,
    TrainingDivergedError,
)
from .metrics import evaluate_pair, write_metric_csv
from .model import ModelConfig, load_checkpoint
from .pitch import F0Config, load_contour_csv
from .training import TrainConfig, lambda_sweep, train, write_sweep_csv
from .transfer import (
    PitchScale,
    TransferRequest,
    VocalRangeFit,
    emit_pitch_figure,
    transfer_from_checkpoint,
    write_transfer_bundle,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


CONFIG_DEFAULTS: dict[str, object] = {
    # analysis
    "sample_rate": 22050,
    "window_length": 1024,
    "hop_length": 256,
    "mel_channels": 80,
    "fmin": 0.0,
    "fmax": 8000.0,
    "mel_floor": 1e-5,
    "f0_min": 50.0,
    "f0_max": 600.0,
    "voicing_threshold": 0.15,
    "gl_iterations": 60,
    # model (toy-scale defaults; raise for full-scale runs)
    "variant": "hard",
    "symbol_embedding_dim": 48,
    "encoder_dim": 48,
    "encoder_n_convs": 1,
    "encoder_kernel_size": 5,
    "attention_rnn_dim": 128,
    "decoder_rnn_dim": 128,
    "attention_dim": 48,
    "attention_location_filters": 8,
    "attention_location_kernel": 15,
    "prenet_dim": 48,
    "prenet_dropout": 0.1,
    "postnet_dim": 48,
    "postnet_n_convs": 2,
    "postnet_kernel_size": 5,
    "speaker_embedding_dim": 8,
    "prosody_dim": 32,
    "n_style_tokens": 10,
    "n_style_heads": 2,
    "ref_encoder_channels": "16,16",
    "pitch_encoder_channels": "16,16",
    "f0_ref_hz": 200.0,
    "gate_threshold": 0.5,
    "max_steps_ratio": 10,
    # training
    "lambda": 0.0,
    "lr": 1e-3,
    "decay_steps": 50000,
    "max_steps": 500,
    "batch_size": 4,
    "seed": 1234,
    "checkpoint_interval": 250,
    "grad_clip_norm": 1.0,
}


def _coerce(key: str, raw: str) -> object:
    default = CONFIG_DEFAULTS[key]
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    return raw


def parse_config_file(path) -> dict[str, str]:
    values = {}
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{line_no}: expected key = value")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def resolve_config(args) -> dict[str, object]:
    cfg = dict(CONFIG_DEFAULTS)
    file_values = parse_config_file(args.config) if getattr(args, "config", None) else {}
    set_values = dict(
        item.split("=", 1) for item in (getattr(args, "set", None) or [])
        if "=" in item
    )
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
    for source in (file_values, set_values):
        for key, value in source.items():
            if key not in CONFIG_DEFAULTS:
                raise UsageError(f"unknown configuration key {key!r}")
            cfg[key] = _coerce(key, value)
    # dedicated flags win last
    for flag, key in (
        ("variant", "variant"), ("lambda_", "lambda"), ("lr", "lr"),
        ("decay_steps", "decay_steps"), ("steps", "max_steps"),
        ("batch_size", "batch_size"), ("seed", "seed"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            cfg[key] = value
    return cfg


def stft_config(cfg) -> StftConfig:
    return StftConfig(
        window_length=cfg["window_length"], hop_length=cfg["hop_length"],
        mel_channels=cfg["mel_channels"], fmin=cfg["fmin"], fmax=cfg["fmax"],
        mel_floor=cfg["mel_floor"],
    )


def f0_config(cfg) -> F0Config:
    return F0Config(
        fmin_search=cfg["f0_min"], fmax_search=cfg["f0_max"],
        voicing_threshold=cfg["voicing_threshold"],
        window_length=cfg["window_length"], hop_length=cfg["hop_length"],
    )


def _channels(raw: str) -> tuple[int, ...]:
    return tuple(int(v) for v in str(raw).split(",") if v != "")


def model_config(cfg) -> ModelConfig:
    return ModelConfig(
        variant=cfg["variant"],
        n_mel_channels=cfg["mel_channels"],
        symbol_embedding_dim=cfg["symbol_embedding_dim"],
        encoder_dim=cfg["encoder_dim"],
        encoder_n_convs=cfg["encoder_n_convs"],
        encoder_kernel_size=cfg["encoder_kernel_size"],
        attention_rnn_dim=cfg["attention_rnn_dim"],
        decoder_rnn_dim=cfg["decoder_rnn_dim"],
        attention_dim=cfg["attention_dim"],
        attention_location_filters=cfg["attention_location_filters"],
        attention_location_kernel=cfg["attention_location_kernel"],
        prenet_dim=cfg["prenet_dim"],
        prenet_dropout=cfg["prenet_dropout"],
        postnet_dim=cfg["postnet_dim"],
        postnet_n_convs=cfg["postnet_n_convs"],
        postnet_kernel_size=cfg["postnet_kernel_size"],
        speaker_embedding_dim=cfg["speaker_embedding_dim"],
        prosody_dim=cfg["prosody_dim"],
        n_style_tokens=cfg["n_style_tokens"],
        n_style_heads=cfg["n_style_heads"],
        ref_encoder_channels=_channels(cfg["ref_encoder_channels"]),
        pitch_encoder_channels=_channels(cfg["pitch_encoder_channels"]),
        f0_ref_hz=cfg["f0_ref_hz"],
        lambda_speaker=cfg["lambda"],
        gate_threshold=cfg["gate_threshold"],
        max_steps_ratio=cfg["max_steps_ratio"],
    )


def train_config(cfg) -> TrainConfig:
    return TrainConfig(
        initial_lr=cfg["lr"], decay_interval=cfg["decay_steps"],
        batch_size=cfg["batch_size"], max_steps=cfg["max_steps"],
        seed=cfg["seed"], lambda_speaker=cfg["lambda"],
        checkpoint_interval=cfg["checkpoint_interval"],
        grad_clip_norm=cfg["grad_clip_norm"],
    )


def _resolve_out_dir(args, command: str, allow_reuse: bool = False) -> Path:
    out = getattr(args, "out", None)
    if out is None:
        out = Path("runs") / f"{command}-{time.strftime('%Y%m%d-%H%M%S')}"
    out = Path(out)
    if out.exists() and any(out.iterdir()) and not allow_reuse and not getattr(args, "force", False):
        raise UsageError(f"output directory {out} is not empty (use --force to reuse)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def echo_config(cfg: dict, out_dir: Path, extras: dict | None = None) -> None:
    lines = [f"{k} = {cfg[k]}" for k in sorted(cfg)]
    for k, v in sorted((extras or {}).items()):
        lines.append(f"{k} = {v}")
    (out_dir / "config.txt").write_text("\n".join(lines) + "\n")


def parse_synthetic_spec(path) -> SyntheticCorpusSpec:
    raw = parse_config_file(path)
    kwargs = {}
    fields = {f.name: f for f in dataclasses.fields(SyntheticCorpusSpec)}
    for key, value in raw.items():
        if key not in fields:
            raise UsageError(f"{path}: unknown synthetic-spec key {key!r}")
        ftype = fields[key].type
        if key in ("styles",):
            kwargs[key] = tuple(v.strip() for v in value.split(","))
        elif key == "holdout_style":
            kwargs[key] = value or None
        elif "int" in str(ftype):
            kwargs[key] = int(value)
        elif "float" in str(ftype):
            kwargs[key] = float(value)
        else:
            kwargs[key] = value
    return SyntheticCorpusSpec(**kwargs)


# ---- commands ----------------------------------------------------------------


def cmd_prepare(args) -> int:
    cfg = resolve_config(args)
    out_dir = _resolve_out_dir(args, "prepare", allow_reuse=True)
    echo_config(cfg, out_dir, {"command": "prepare"})
    if args.synthetic:
        spec = parse_synthetic_spec(args.synthetic)
        manifest = generate_synthetic_corpus(spec, out_dir / "corpus")
        print(f"generated synthetic corpus: {manifest}")
    elif args.manifest:
        manifest = Path(args.manifest)
    else:
        raise UsageError("prepare needs --manifest or --synthetic")
    records = load_manifest(manifest)
    absent = missing_audio(records)
    if absent:
        raise ManifestError("missing audio files: " + ", ".join(absent))
    summary = prepare_features(
        records, stft_config(cfg), f0_config(cfg), out_dir,
        sample_rate=cfg["sample_rate"], fail_fast=args.fail_fast,
    )
    print(
        f"prepared {len(summary.prepared)}, cached {len(summary.cached)}, "
        f"failed {len(summary.failed)}"
    )
    for utt_id, reason in summary.failed:
        print(f"  failed {utt_id}: {reason}")
    if summary.failed and args.fail_fast:
        return 2
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    out_dir = _resolve_out_dir(args, "train")
    echo_config(cfg, out_dir, {"command": "train", "manifest": args.manifest,
                               "features": args.features})
    result = train(
        model_config(cfg), train_config(cfg), args.manifest, args.features,
        out_dir, stft_cfg=stft_config(cfg), f0_cfg=f0_config(cfg),
    )
    print(f"trained {len(result.loss_rows)} steps; "
          f"final total loss {result.loss_rows[-1].total:.4f}")
    print(f"checkpoints: {', '.join(str(p) for p in result.checkpoint_paths)}")
    return 0


def cmd_transfer(args) -> int:
    cfg = resolve_config(args)
    if not args.ref:
        raise UsageError("transfer requires --ref (reference audio)")
    out_dir = _resolve_out_dir(args, "transfer")
    echo_config(cfg, out_dir, {
        "command": "transfer", "checkpoint": args.checkpoint, "ref": args.ref,
        "text": args.text, "speaker": args.speaker,
        "pitch_scale": args.pitch_scale, "pitch_fit_speaker": args.pitch_fit_speaker,
    })
    ckpt = load_checkpoint(args.checkpoint)
    reference = load_waveform(args.ref, target_rate=cfg["sample_rate"])

    transform = None
    if args.pitch_scale is not None and args.pitch_fit_speaker is not None:
        raise UsageError("choose one of --pitch-scale / --pitch-fit-speaker")
    if args.pitch_scale is not None:
        transform = PitchScale(args.pitch_scale)
    elif args.pitch_fit_speaker is not None:
        if not args.speaker_stats:
            raise UsageError("--pitch-fit-speaker needs --speaker-stats")
        stats = load_speaker_stats(args.speaker_stats)
        if args.pitch_fit_speaker not in stats:
            raise MissingUtteranceError([args.pitch_fit_speaker])
        target = stats[args.pitch_fit_speaker]
        if not target.is_valid():
            raise InvalidSpeakerStatsError(
                f"speaker {args.pitch_fit_speaker} has no voiced statistics"
            )
        transform = VocalRangeFit(target=target)

    request = TransferRequest(
        text=args.text, reference=reference,
        target_speaker_id=args.speaker, pitch_transform=transform,
    )
    result = transfer_from_checkpoint(ckpt, request, gl_iterations=cfg["gl_iterations"])
    paths = write_transfer_bundle(result, out_dir)
    print("wrote " + ", ".join(str(p) for p in paths))
    return 0


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    out_dir = _resolve_out_dir(args, "eval")
    echo_config(cfg, out_dir, {"command": "eval", "ref_dir": args.ref_dir,
                               "est_dir": args.est_dir})
    ref_dir, est_dir = Path(args.ref_dir), Path(args.est_dir)
    ref_ids = {p.stem: p for p in sorted(ref_dir.glob("*.wav"))}
    est_ids = {p.stem: p for p in sorted(est_dir.glob("*.wav"))}
    if not ref_ids:
        raise MissingUtteranceError(["(no reference wavs found)"])
    missing = set(ref_ids) ^ set(est_ids)
    if missing:
        raise MissingUtteranceError(missing)
    rows = []
    for utt_id in sorted(ref_ids):
        ref_wave = load_waveform(ref_ids[utt_id], target_rate=cfg["sample_rate"])
        est_wave = load_waveform(est_ids[utt_id], target_rate=cfg["sample_rate"])
        rows.append((utt_id, evaluate_pair(ref_wave, est_wave, stft_config(cfg), f0_config(cfg))))
    csv_path = out_dir / "metrics.csv"
    write_metric_csv(rows, csv_path)
    print(f"wrote {csv_path} ({len(rows)} utterances)")
    return 0


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    out_dir = _resolve_out_dir(args, "sweep")
    lambdas = [float(v) for v in args.lambdas.split(",") if v != ""]
    echo_config(cfg, out_dir, {"command": "sweep", "lambdas": args.lambdas,
                               "manifest": args.manifest, "features": args.features})
    rows = []
    remaining = sorted(lambdas)
    try:
        rows = lambda_sweep(
            model_config(cfg), train_config(cfg), lambdas,
            args.manifest, args.features, out_dir,
            gl_iterations=cfg["gl_iterations"],
            stft_cfg=stft_config(cfg), f0_cfg=f0_config(cfg),
        )
        remaining = []
    finally:
        done = {r.lambda_speaker for r in rows}
        unfinished = [lam for lam in remaining if lam not in done]
        write_sweep_csv(rows, out_dir / "sweep.csv", incomplete=unfinished)
    print(f"wrote {out_dir / 'sweep.csv'}")
    return 0


def cmd_plot(args) -> int:
    cfg = resolve_config(args)
    out_dir = _resolve_out_dir(args, "plot")
    echo_config(cfg, out_dir, {"command": "plot", "series": ";".join(args.series)})
    contours = []
    for item in args.series:
        if "=" not in item:
            raise UsageError(f"--series expects name=contour.csv, got {item!r}")
        name, _, path = item.partition("=")
        contours.append(
            (name, load_contour_csv(path, hop_length=cfg["hop_length"],
                                    sample_rate=cfg["sample_rate"]))
        )
    fig_path, csv_path = emit_pitch_figure(contours, out_dir / "pitch.png")
    print(f"wrote {fig_path} and {csv_path}")
    return 0


# ---- argument wiring -----------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="prosodykit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--force", action="store_true",
                       help="allow writing into a non-empty output directory")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("prepare", help="compute mel/F0 features and speaker stats")
    common(p)
    p.add_argument("--manifest", help="corpus manifest file")
    p.add_argument("--synthetic", help="synthetic corpus spec (key=value file)")
    p.add_argument("--fail-fast", action="store_true")
    p.set_defaults(handler=cmd_prepare)

    p = sub.add_parser("train", help="train one model variant")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--variant", choices=("gst", "hard", "soft"), default=None)
    p.add_argument("--lambda", dest="lambda_", type=float, default=None,
                   help="adversarial speaker-loss weight")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--decay-steps", dest="decay_steps", type=int, default=None)
    p.add_argument("--steps", type=int, default=None, help="total optimizer steps")
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("transfer", help="synthesize target text in a reference prosody")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--ref", help="reference audio (wav)")
    p.add_argument("--text", required=True, help="space-separated phoneme symbols")
    p.add_argument("--speaker", required=True, help="target speaker id")
    p.add_argument("--pitch-scale", dest="pitch_scale", type=float, default=None)
    p.add_argument("--pitch-fit-speaker", dest="pitch_fit_speaker", default=None,
                   help="fit the reference pitch into this speaker's vocal range")
    p.add_argument("--speaker-stats", dest="speaker_stats", default=None,
                   help="speaker_stats.csv from prepare")
    p.set_defaults(handler=cmd_transfer)

    p = sub.add_parser("eval", help="objective metrics over paired wav directories")
    common(p)
    p.add_argument("--ref-dir", dest="ref_dir", required=True)
    p.add_argument("--est-dir", dest="est_dir", required=True)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("sweep", help="train and evaluate across adversarial weights")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--lambdas", default="0.0,0.02,0.2,2.0")
    p.add_argument("--variant", choices=("gst", "hard", "soft"), default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--decay-steps", dest="decay_steps", type=int, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("plot", help="overlay pitch contours into a figure + CSV")
    common(p)
    p.add_argument("--series", action="append", required=True,
                   metavar="NAME=CONTOUR.CSV")
    p.set_defaults(handler=cmd_plot)

    return parser


DATA_ERRORS = (
    FileNotFoundError,
    ManifestError,
    AudioFormatError,
    EmptyAudioError,
    MissingUtteranceError,
    InvalidSpeakerStatsError,
)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergedError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
