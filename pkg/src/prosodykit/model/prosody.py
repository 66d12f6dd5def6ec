"""Prosody conditioning paths: style-token bank with its reference encoder,
the pitch-contour encoder, and the adversarial speaker classifier behind a
gradient reversal."""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F

from .config import ModelConfig
from .layers import LinearNorm


class _ReverseGradient(torch.autograd.Function):
    """Identity forward; exact sign flip of the gradient backward."""

    @staticmethod
    def forward(ctx, x):
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad_output):
        return -grad_output


def gradient_reversal(x: torch.Tensor) -> torch.Tensor:
    return _ReverseGradient.apply(x)


class GradientReversal(nn.Module):
    def forward(self, x):
        return gradient_reversal(x)


class ReferenceEncoder(nn.Module):
    """Summarizes a reference mel spectrogram into a fixed query vector."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        convs = []
        in_ch = 1
        for out_ch in cfg.ref_encoder_channels:
            convs.append(
                nn.Sequential(
                    nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=2, padding=1),
                    nn.BatchNorm2d(out_ch),
                    nn.ReLU(),
                )
            )
            in_ch = out_ch
        self.convs = nn.ModuleList(convs)
        freq_out = cfg.n_mel_channels
        for _ in cfg.ref_encoder_channels:
            freq_out = (freq_out + 1) // 2
        self.gru = nn.GRU(in_ch * freq_out, cfg.prosody_dim, batch_first=True)

    def forward(self, mel: torch.Tensor) -> torch.Tensor:
        # mel: [B, T, C] -> query [B, prosody_dim]
        x = mel.unsqueeze(1)  # [B, 1, T, C]
        for conv in self.convs:
            x = conv(x)
        b, ch, t, c = x.shape
        x = x.permute(0, 2, 1, 3).reshape(b, t, ch * c)
        self.gru.flatten_parameters()
        _, hidden = self.gru(x)
        return hidden.squeeze(0)


class StyleTokenBank(nn.Module):
    """Learned style vectors addressed by multi-head attention.

    The output embedding is the concatenation over heads of the token-weight
    averages of the per-head value projections, so it always lies in the span
    of the projected token vectors.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.n_heads = cfg.n_style_heads
        self.n_tokens = cfg.n_style_tokens
        self.d_head = cfg.prosody_dim // cfg.n_style_heads
        token_dim = self.d_head
        self.tokens = nn.Parameter(torch.empty(cfg.n_style_tokens, token_dim))
        nn.init.normal_(self.tokens, std=0.5)
        self.query_proj = LinearNorm(cfg.prosody_dim, cfg.prosody_dim, bias=False)
        self.key_proj = LinearNorm(token_dim, cfg.prosody_dim, bias=False)
        self.value_proj = LinearNorm(token_dim, cfg.prosody_dim, bias=False)

    def _split_heads(self, x: torch.Tensor) -> torch.Tensor:
        # [..., n_heads * d_head] -> [..., n_heads, d_head]
        return x.reshape(*x.shape[:-1], self.n_heads, self.d_head)

    def token_values(self) -> torch.Tensor:
        """Per-head value projections of the tokens: [n_heads, n_tokens, d_head]."""
        return self._split_heads(self.value_proj(self.tokens)).transpose(0, 1)

    def forward(self, query: torch.Tensor):
        # query: [B, prosody_dim] -> (embedding [B, prosody_dim], weights [B, H, n_tokens])
        q = self._split_heads(self.query_proj(query))  # [B, H, d]
        keys = self._split_heads(self.key_proj(torch.tanh(self.tokens))).transpose(0, 1)  # [H, n_tok, d]
        values = self.token_values()  # [H, n_tok, d]
        scores = torch.einsum("bhd,htd->bht", q, keys) / (self.d_head**0.5)
        weights = F.softmax(scores, dim=-1)
        heads = torch.einsum("bht,htd->bhd", weights, values)
        return heads.reshape(query.size(0), -1), weights


class GlobalStyleEncoder(nn.Module):
    """Reference mel -> single style embedding (the gst/hard prosody path)."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.reference_encoder = ReferenceEncoder(cfg)
        self.bank = StyleTokenBank(cfg)

    def forward(self, mel: torch.Tensor):
        if mel.size(1) < 1:
            raise ValueError("reference mel is empty")
        query = self.reference_encoder(mel)
        embedding, weights = self.bank(query)
        return embedding.unsqueeze(1), weights  # [B, 1, D], [B, H, n_tokens]


class PitchProsodyEncoder(nn.Module):
    """Per-frame prosody vectors from the (normalized F0, voiced flag)
    sequence alone (the soft prosody path)."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        convs = []
        in_ch = 2
        for out_ch in cfg.pitch_encoder_channels:
            convs.append(
                nn.Conv1d(in_ch, out_ch, kernel_size=cfg.pitch_encoder_kernel,
                          padding=cfg.pitch_encoder_kernel // 2)
            )
            in_ch = out_ch
        self.convs = nn.ModuleList(convs)
        self.gru = nn.GRU(in_ch, cfg.prosody_dim // 2, batch_first=True, bidirectional=True)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        # features: [B, L, 2] -> [B, L, prosody_dim]
        if features.size(1) < 1:
            raise ValueError("pitch contour is empty")
        x = features.transpose(1, 2)
        for conv in self.convs:
            x = F.relu(conv(x))
        self.gru.flatten_parameters()
        out, _ = self.gru(x.transpose(1, 2))
        return out


class SpeakerClassifier(nn.Module):
    """Speaker logits from a pooled prosody embedding, reached through the
    gradient reversal so the adversarial loss term unlearns speaker cues."""

    def __init__(self, prosody_dim: int, n_speakers: int, hidden_dim: int = 64):
        super().__init__()
        self.net = nn.Sequential(
            LinearNorm(prosody_dim, hidden_dim),
            nn.ReLU(),
            LinearNorm(hidden_dim, n_speakers),
        )

    def forward(self, prosody_embedding: torch.Tensor, reverse: bool = True) -> torch.Tensor:
        # prosody_embedding: [B, L, D]; pooled over L so the single-vector
        # (L == 1) case is a no-op.
        pooled = prosody_embedding.mean(dim=1)
        if reverse:
            pooled = gradient_reversal(pooled)
        return self.net(pooled)
