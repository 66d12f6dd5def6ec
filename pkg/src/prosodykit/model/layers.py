"""Shared neural building blocks: normalized linear/conv layers, the
location-sensitive attention cell, prenet, and postnet."""

from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F


class LinearNorm(nn.Module):
    def __init__(self, in_dim, out_dim, bias=True, w_init_gain="linear"):
        super().__init__()
        self.linear = nn.Linear(in_dim, out_dim, bias=bias)
        nn.init.xavier_uniform_(
            self.linear.weight, gain=nn.init.calculate_gain(w_init_gain)
        )

    def forward(self, x):
        return self.linear(x)


class ConvNorm(nn.Module):
    def __init__(self, in_ch, out_ch, kernel_size=1, stride=1, padding=None,
                 dilation=1, bias=True, w_init_gain="linear"):
        super().__init__()
        if padding is None:
            padding = dilation * (kernel_size - 1) // 2
        self.conv = nn.Conv1d(
            in_ch, out_ch, kernel_size=kernel_size, stride=stride,
            padding=padding, dilation=dilation, bias=bias,
        )
        nn.init.xavier_uniform_(
            self.conv.weight, gain=nn.init.calculate_gain(w_init_gain)
        )

    def forward(self, x):
        return self.conv(x)


class LocationLayer(nn.Module):
    def __init__(self, n_filters, kernel_size, attention_dim):
        super().__init__()
        self.conv = ConvNorm(2, n_filters, kernel_size=kernel_size, bias=False)
        self.dense = LinearNorm(n_filters, attention_dim, bias=False, w_init_gain="tanh")

    def forward(self, attention_weights_cat):
        processed = self.conv(attention_weights_cat)
        return self.dense(processed.transpose(1, 2))


class LocationSensitiveAttention(nn.Module):
    """Content + location attention over a memory sequence.

    Scores at masked positions are forced to -inf before the softmax so their
    weights are exactly zero and each row stays a probability vector over the
    real entries.
    """

    def __init__(self, query_dim, memory_dim, attention_dim, location_filters,
                 location_kernel):
        super().__init__()
        self.query_layer = LinearNorm(query_dim, attention_dim, bias=False, w_init_gain="tanh")
        self.memory_layer = LinearNorm(memory_dim, attention_dim, bias=False, w_init_gain="tanh")
        self.v = LinearNorm(attention_dim, 1, bias=False)
        self.location_layer = LocationLayer(location_filters, location_kernel, attention_dim)

    def process_memory(self, memory):
        return self.memory_layer(memory)

    def forward(self, query, memory, processed_memory, attention_weights_cat, mask=None):
        processed_query = self.query_layer(query.unsqueeze(1))
        processed_location = self.location_layer(attention_weights_cat)
        energies = self.v(
            torch.tanh(processed_query + processed_location + processed_memory)
        ).squeeze(-1)
        if mask is not None:
            energies = energies.masked_fill(mask, float("-inf"))
        weights = F.softmax(energies, dim=1)
        context = torch.bmm(weights.unsqueeze(1), memory).squeeze(1)
        return context, weights


class Prenet(nn.Module):
    """Bottleneck in front of the decoder. Dropout only applies in training
    mode so evaluation stays deterministic."""

    def __init__(self, in_dim, sizes, dropout=0.5):
        super().__init__()
        dims = [in_dim] + list(sizes)
        self.layers = nn.ModuleList(
            [LinearNorm(a, b, bias=False) for a, b in zip(dims[:-1], dims[1:])]
        )
        self.dropout = dropout

    def forward(self, x):
        for layer in self.layers:
            x = F.dropout(F.relu(layer(x)), p=self.dropout, training=self.training)
        return x


class Postnet(nn.Module):
    """Convolutional refinement stack predicting a residual mel correction."""

    def __init__(self, n_mel_channels, hidden_dim, n_convs, kernel_size):
        super().__init__()
        if n_convs < 1:
            raise ValueError("postnet needs at least one convolution")
        convs = []
        for i in range(n_convs):
            in_ch = n_mel_channels if i == 0 else hidden_dim
            out_ch = n_mel_channels if i == n_convs - 1 else hidden_dim
            gain = "linear" if i == n_convs - 1 else "tanh"
            convs.append(
                nn.Sequential(
                    ConvNorm(in_ch, out_ch, kernel_size=kernel_size, w_init_gain=gain),
                    nn.BatchNorm1d(out_ch),
                )
            )
        self.convs = nn.ModuleList(convs)

    def forward(self, mel):
        # mel: [B, T, C]
        x = mel.transpose(1, 2)
        for i, conv in enumerate(self.convs):
            x = conv(x)
            if i < len(self.convs) - 1:
                x = torch.tanh(x)
            x = F.dropout(x, 0.5, training=self.training)
        return x.transpose(1, 2)
