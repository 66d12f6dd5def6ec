"""The full synthesis network tying encoder, prosody path, decoder, postnet,
and the adversarial speaker classifier together."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import torch
from torch import nn

from ..pitch import PitchContour
from .config import ModelConfig
from .decoder import Decoder
from .encoder import TextEncoder, lengths_to_mask
from .layers import Postnet
from .prosody import GlobalStyleEncoder, PitchProsodyEncoder, SpeakerClassifier


@dataclass
class ModelOutput:
    """Everything one forward pass produces. Tensors carry a leading batch
    dimension; use squeezed() to inspect a single utterance."""

    mel_pred: torch.Tensor                  # [B, T, C] after the postnet
    mel_pred_pre: torch.Tensor | None       # [B, T, C] before the postnet
    gate: torch.Tensor                      # [B, T] stop probabilities in (0, 1)
    text_attention: torch.Tensor            # [B, T, N]
    prosody_attention: torch.Tensor | None  # [B, T, L] (soft variant)
    prosody_embedding: torch.Tensor         # [B, L, D]
    speaker_logits: torch.Tensor            # [B, n_speakers]
    token_weights: torch.Tensor | None = None  # [B, H, n_tokens] (gst/hard)

    def squeezed(self) -> "ModelOutput":
        pick = lambda t: None if t is None else t[0]
        return ModelOutput(
            mel_pred=self.mel_pred[0],
            mel_pred_pre=pick(self.mel_pred_pre),
            gate=self.gate[0],
            text_attention=self.text_attention[0],
            prosody_attention=pick(self.prosody_attention),
            prosody_embedding=self.prosody_embedding[0],
            speaker_logits=self.speaker_logits[0],
            token_weights=pick(self.token_weights),
        )


def contour_to_features(contour: PitchContour, f0_ref_hz: float) -> np.ndarray:
    """(log(f0/ref), voiced) pairs per frame; unvoiced frames carry (0, 0)."""
    out = np.zeros((len(contour), 2), dtype=np.float32)
    voiced = contour.voiced
    out[voiced, 0] = np.log(contour.f0[voiced] / f0_ref_hz)
    out[voiced, 1] = 1.0
    return out


class ProsodyTransferModel(nn.Module):
    def __init__(self, cfg: ModelConfig, seed: int = 1234):
        super().__init__()
        self.cfg = cfg
        self.seed = seed
        torch.manual_seed(seed)
        self.text_encoder = TextEncoder(cfg)
        self.speaker_table = nn.Embedding(cfg.n_speakers, cfg.speaker_embedding_dim)
        if cfg.variant in ("gst", "hard"):
            self.style_encoder = GlobalStyleEncoder(cfg)
            self.pitch_encoder = None
        else:
            self.style_encoder = None
            self.pitch_encoder = PitchProsodyEncoder(cfg)
        self.decoder = Decoder(cfg)
        self.postnet = Postnet(
            cfg.n_mel_channels, cfg.postnet_dim, cfg.postnet_n_convs, cfg.postnet_kernel_size
        )
        self.speaker_classifier = SpeakerClassifier(cfg.prosody_dim, cfg.n_speakers)

    # ---- component passes -------------------------------------------------

    def encode_text(self, symbol_ids: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        if symbol_ids.numel() == 0:
            raise ValueError("empty phoneme sequence")
        if int(symbol_ids.max()) >= self.cfg.n_symbols:
            raise ValueError("symbol id outside the vocabulary")
        return self.text_encoder(symbol_ids, lengths)

    def gst_embedding(self, ref_mel: torch.Tensor):
        """Reference mel [B, T, C] -> (embedding [B, 1, D], token weights)."""
        if self.style_encoder is None:
            raise ValueError(f"variant {self.cfg.variant!r} has no style-token path")
        return self.style_encoder(ref_mel)

    def pitch_prosody(self, contour_features: torch.Tensor) -> torch.Tensor:
        """Contour features [B, L, 2] -> per-frame embeddings [B, L, D]."""
        if self.pitch_encoder is None:
            raise ValueError(f"variant {self.cfg.variant!r} has no pitch-encoder path")
        return self.pitch_encoder(contour_features)

    def classify_speaker(self, prosody_embedding: torch.Tensor, reverse: bool = True) -> torch.Tensor:
        return self.speaker_classifier(prosody_embedding, reverse=reverse)

    def _memory(self, text_enc: torch.Tensor, speaker_ids: torch.Tensor) -> torch.Tensor:
        spk = self.speaker_table(speaker_ids)  # [B, S]
        spk = spk.unsqueeze(1).expand(-1, text_enc.size(1), -1)
        return torch.cat([text_enc, spk], dim=-1)

    def _prosody_inputs(self, prosody_embedding: torch.Tensor):
        """Split the prosody embedding into decoder conditioning arguments."""
        if self.cfg.variant == "soft":
            return None, prosody_embedding
        if prosody_embedding.size(1) != 1:
            raise ValueError("gst/hard variants expect a single global style vector")
        return prosody_embedding[:, 0], None

    # ---- teacher-forced pass ----------------------------------------------

    def decode_teacher_forced(
        self,
        text_enc: torch.Tensor,
        text_lengths: torch.Tensor,
        prosody_embedding: torch.Tensor,
        speaker_ids: torch.Tensor,
        target_mel: torch.Tensor,
        ref_f0_features: torch.Tensor | None = None,
        prosody_lengths: torch.Tensor | None = None,
        token_weights: torch.Tensor | None = None,
    ) -> ModelOutput:
        memory = self._memory(text_enc, speaker_ids)
        memory_mask = ~lengths_to_mask(text_lengths, memory.size(1))
        style_vec, prosody_memory = self._prosody_inputs(prosody_embedding)
        prosody_mask = None
        if prosody_memory is not None and prosody_lengths is not None:
            prosody_mask = ~lengths_to_mask(prosody_lengths, prosody_memory.size(1))
        dec = self.decoder.teacher_forced(
            memory, memory_mask, target_mel, style_vec=style_vec,
            prosody_memory=prosody_memory, prosody_mask=prosody_mask,
            f0_feats=ref_f0_features,
        )
        mel_post = dec.mel_frames + self.postnet(dec.mel_frames)
        logits = self.classify_speaker(prosody_embedding)
        return ModelOutput(
            mel_pred=mel_post,
            mel_pred_pre=dec.mel_frames,
            gate=torch.sigmoid(dec.gate_logits),
            text_attention=dec.text_attention,
            prosody_attention=dec.prosody_attention,
            prosody_embedding=prosody_embedding,
            speaker_logits=logits,
            token_weights=token_weights,
        )

    def forward(
        self,
        symbol_ids: torch.Tensor,
        text_lengths: torch.Tensor,
        speaker_ids: torch.Tensor,
        target_mel: torch.Tensor,
        ref_mel: torch.Tensor | None = None,
        ref_contour_features: torch.Tensor | None = None,
        prosody_lengths: torch.Tensor | None = None,
    ) -> ModelOutput:
        """Teacher-forced training pass. The prosody reference defaults to the
        target utterance itself: ref_mel for gst/hard, the contour for soft;
        the hard variant additionally consumes the contour frame by frame."""
        text_enc = self.encode_text(symbol_ids, text_lengths)
        token_weights = None
        if self.cfg.variant == "soft":
            prosody_embedding = self.pitch_prosody(ref_contour_features)
            f0_feats = None
        else:
            prosody_embedding, token_weights = self.gst_embedding(ref_mel)
            f0_feats = ref_contour_features if self.cfg.variant == "hard" else None
        return self.decode_teacher_forced(
            text_enc, text_lengths, prosody_embedding, speaker_ids, target_mel,
            ref_f0_features=f0_feats, prosody_lengths=prosody_lengths,
            token_weights=token_weights,
        )

    # ---- free-running inference -------------------------------------------

    def infer(
        self,
        symbol_ids: torch.Tensor,
        speaker_ids: torch.Tensor,
        ref_mel: torch.Tensor | None = None,
        ref_contour_features: torch.Tensor | None = None,
    ) -> ModelOutput:
        """Single-utterance synthesis (batch of one).

        hard: runs for exactly the reference contour length, gate ignored.
        gst/soft: runs until the gate fires or 10x the symbol count.
        """
        if symbol_ids.size(0) != 1:
            raise ValueError("inference expects a batch of one")
        lengths = torch.tensor([symbol_ids.size(1)], device=symbol_ids.device)
        text_enc = self.encode_text(symbol_ids, lengths)
        memory = self._memory(text_enc, speaker_ids)

        token_weights = None
        if self.cfg.variant == "soft":
            prosody_embedding = self.pitch_prosody(ref_contour_features)
            f0_feats = None
        else:
            prosody_embedding, token_weights = self.gst_embedding(ref_mel)
            f0_feats = ref_contour_features if self.cfg.variant == "hard" else None
        style_vec, prosody_memory = self._prosody_inputs(prosody_embedding)

        dec = self.decoder.free_running(
            memory, style_vec=style_vec, prosody_memory=prosody_memory,
            f0_feats=f0_feats,
            max_steps=self.cfg.max_steps_ratio * symbol_ids.size(1),
        )
        mel_post = dec.mel_frames + self.postnet(dec.mel_frames)
        logits = self.classify_speaker(prosody_embedding)
        return ModelOutput(
            mel_pred=mel_post,
            mel_pred_pre=dec.mel_frames,
            gate=torch.sigmoid(dec.gate_logits),
            text_attention=dec.text_attention,
            prosody_attention=dec.prosody_attention,
            prosody_embedding=prosody_embedding,
            speaker_logits=logits,
            token_weights=token_weights,
        )
