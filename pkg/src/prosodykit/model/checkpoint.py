"""Single-file checkpoints carrying parameters plus everything needed to
rebuild an equivalent model: config, vocabulary, speaker table, analysis
settings, and the init seed."""

from __future__ import annotations

from dataclasses import asdict

import torch

from ..dsp import StftConfig
from ..pitch import F0Config
from .config import ModelConfig
from .network import ProsodyTransferModel
from .vocab import Vocabulary

CHECKPOINT_VERSION = 1


def save_checkpoint(
    path,
    model: ProsodyTransferModel,
    vocab: Vocabulary,
    speaker_ids: list[str],
    stft_cfg: StftConfig,
    f0_cfg: F0Config,
    step: int = 0,
) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "model_config": asdict(model.cfg),
        "state_dict": model.state_dict(),
        "symbols": vocab.symbols,
        "speaker_ids": list(speaker_ids),
        "stft_config": asdict(stft_cfg),
        "f0_config": asdict(f0_cfg),
        "seed": model.seed,
        "step": step,
    }
    torch.save(payload, path)


class LoadedCheckpoint:
    def __init__(self, payload):
        if payload.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
        self.model_config = ModelConfig(**payload["model_config"])
        self.vocab = Vocabulary(payload["symbols"])
        self.speaker_ids = payload["speaker_ids"]
        self.stft_cfg = StftConfig(**payload["stft_config"])
        self.f0_cfg = F0Config(**payload["f0_config"])
        self.seed = payload["seed"]
        self.step = payload["step"]
        self.model = ProsodyTransferModel(self.model_config, seed=self.seed)
        self.model.load_state_dict(payload["state_dict"])
        self.model.eval()

    def speaker_index(self, speaker_id: str) -> int:
        try:
            return self.speaker_ids.index(speaker_id)
        except ValueError:
            raise ValueError(f"unknown speaker id {speaker_id!r}") from None


def load_checkpoint(path) -> LoadedCheckpoint:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    return LoadedCheckpoint(payload)
