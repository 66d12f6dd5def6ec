"""Phoneme encoder: embedding, masked convolutions, bidirectional LSTM."""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F

from .config import ModelConfig
from .layers import ConvNorm


def lengths_to_mask(lengths: torch.Tensor, max_len: int) -> torch.Tensor:
    """Boolean [B, max_len] mask, True at real (non-pad) positions."""
    positions = torch.arange(max_len, device=lengths.device)
    return positions.unsqueeze(0) < lengths.unsqueeze(1)


class TextEncoder(nn.Module):
    """One encoding vector per input symbol.

    Padding positions are zeroed after the embedding and after every conv
    block, so the non-pad encodings of a padded batch match the ones computed
    without padding (in evaluation mode).
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.embedding = nn.Embedding(cfg.n_symbols, cfg.symbol_embedding_dim, padding_idx=0)
        nn.init.uniform_(self.embedding.weight, -0.1, 0.1)
        with torch.no_grad():
            self.embedding.weight[0].zero_()
        convs = []
        in_dim = cfg.symbol_embedding_dim
        for _ in range(cfg.encoder_n_convs):
            convs.append(
                nn.Sequential(
                    ConvNorm(in_dim, cfg.encoder_dim, kernel_size=cfg.encoder_kernel_size,
                             w_init_gain="relu"),
                    nn.BatchNorm1d(cfg.encoder_dim),
                )
            )
            in_dim = cfg.encoder_dim
        self.convs = nn.ModuleList(convs)
        self.lstm = nn.LSTM(
            in_dim, cfg.encoder_dim // 2, num_layers=1,
            batch_first=True, bidirectional=True,
        )

    def forward(self, symbol_ids: torch.Tensor, lengths: torch.Tensor) -> torch.Tensor:
        # symbol_ids: [B, N]; lengths: [B]
        mask = lengths_to_mask(lengths, symbol_ids.size(1)).unsqueeze(1).to(symbol_ids.device)
        x = self.embedding(symbol_ids).transpose(1, 2)  # [B, E, N]
        x = x * mask
        for conv in self.convs:
            x = F.dropout(F.relu(conv(x)), 0.5, training=self.training)
            x = x * mask
        x = x.transpose(1, 2)
        packed = nn.utils.rnn.pack_padded_sequence(
            x, lengths.cpu(), batch_first=True, enforce_sorted=False
        )
        self.lstm.flatten_parameters()
        out, _ = self.lstm(packed)
        out, _ = nn.utils.rnn.pad_packed_sequence(
            out, batch_first=True, total_length=symbol_ids.size(1)
        )
        return out
