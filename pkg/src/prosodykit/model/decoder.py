"""Autoregressive mel decoder with location-sensitive text attention.

Conditioning differs per variant:
  gst  - one global style vector concatenated into every decoder input.
  hard - the global style vector plus the per-frame (normalized F0, voiced)
         pair for the current output frame.
  soft - a context vector from a second attention over the per-frame prosody
         embedding sequence.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn
from torch.nn import functional as F

from .config import ModelConfig
from .layers import LinearNorm, LocationSensitiveAttention, Prenet


@dataclass
class DecoderOutput:
    mel_frames: torch.Tensor            # [B, T, C]
    gate_logits: torch.Tensor           # [B, T]
    text_attention: torch.Tensor        # [B, T, N]
    prosody_attention: torch.Tensor | None  # [B, T, L] for the soft variant


class Decoder(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.memory_dim = cfg.encoder_dim + cfg.speaker_embedding_dim
        self.n_mel = cfg.n_mel_channels

        extra = cfg.prosody_dim  # style vector (gst/hard) or prosody context (soft)
        if cfg.variant == "hard":
            extra += 2  # (normalized f0, voiced flag) for the current frame
        self.prenet = Prenet(self.n_mel, [cfg.prenet_dim, cfg.prenet_dim], cfg.prenet_dropout)

        cell_in = cfg.prenet_dim + self.memory_dim + extra
        self.attention_rnn = nn.LSTMCell(cell_in, cfg.attention_rnn_dim)
        self.text_attention = LocationSensitiveAttention(
            cfg.attention_rnn_dim, self.memory_dim, cfg.attention_dim,
            cfg.attention_location_filters, cfg.attention_location_kernel,
        )
        if cfg.variant == "soft":
            self.prosody_attention = LocationSensitiveAttention(
                cfg.attention_rnn_dim, cfg.prosody_dim, cfg.attention_dim,
                cfg.attention_location_filters, cfg.attention_location_kernel,
            )
            context_dim = self.memory_dim + cfg.prosody_dim
        else:
            self.prosody_attention = None
            context_dim = self.memory_dim

        self.decoder_rnn = nn.LSTMCell(cfg.attention_rnn_dim + context_dim, cfg.decoder_rnn_dim)
        self.mel_proj = LinearNorm(cfg.decoder_rnn_dim + context_dim, self.n_mel)
        self.gate_proj = LinearNorm(
            cfg.decoder_rnn_dim + context_dim, 1, w_init_gain="sigmoid"
        )

    def _init_state(self, memory, prosody_memory):
        b = memory.size(0)
        n = memory.size(1)
        dev = memory.device
        state = {
            "att_h": torch.zeros(b, self.cfg.attention_rnn_dim, device=dev),
            "att_c": torch.zeros(b, self.cfg.attention_rnn_dim, device=dev),
            "dec_h": torch.zeros(b, self.cfg.decoder_rnn_dim, device=dev),
            "dec_c": torch.zeros(b, self.cfg.decoder_rnn_dim, device=dev),
            "text_weights": torch.zeros(b, n, device=dev),
            "text_weights_cum": torch.zeros(b, n, device=dev),
            "text_context": torch.zeros(b, self.memory_dim, device=dev),
            "processed_memory": self.text_attention.process_memory(memory),
        }
        if self.prosody_attention is not None:
            l = prosody_memory.size(1)
            state.update(
                pros_weights=torch.zeros(b, l, device=dev),
                pros_weights_cum=torch.zeros(b, l, device=dev),
                pros_context=torch.zeros(b, self.cfg.prosody_dim, device=dev),
                processed_prosody=self.prosody_attention.process_memory(prosody_memory),
            )
        return state

    def _step(self, prev_frame, state, memory, memory_mask, style_vec,
              prosody_memory, prosody_mask, f0_feat):
        pre = self.prenet(prev_frame)
        pieces = [pre, state["text_context"]]
        if self.prosody_attention is not None:
            pieces.append(state["pros_context"])
        else:
            pieces.append(style_vec)
        if self.cfg.variant == "hard":
            pieces.append(f0_feat)
        cell_input = torch.cat(pieces, dim=-1)

        state["att_h"], state["att_c"] = self.attention_rnn(
            cell_input, (state["att_h"], state["att_c"])
        )
        weights_cat = torch.cat(
            [state["text_weights"].unsqueeze(1), state["text_weights_cum"].unsqueeze(1)], dim=1
        )
        state["text_context"], state["text_weights"] = self.text_attention(
            state["att_h"], memory, state["processed_memory"], weights_cat, memory_mask
        )
        state["text_weights_cum"] = state["text_weights_cum"] + state["text_weights"]

        contexts = [state["text_context"]]
        pros_weights = None
        if self.prosody_attention is not None:
            pros_cat = torch.cat(
                [state["pros_weights"].unsqueeze(1), state["pros_weights_cum"].unsqueeze(1)], dim=1
            )
            state["pros_context"], state["pros_weights"] = self.prosody_attention(
                state["att_h"], prosody_memory, state["processed_prosody"], pros_cat, prosody_mask
            )
            state["pros_weights_cum"] = state["pros_weights_cum"] + state["pros_weights"]
            contexts.append(state["pros_context"])
            pros_weights = state["pros_weights"]

        dec_input = torch.cat([state["att_h"]] + contexts, dim=-1)
        state["dec_h"], state["dec_c"] = self.decoder_rnn(
            dec_input, (state["dec_h"], state["dec_c"])
        )
        proj_input = torch.cat([state["dec_h"]] + contexts, dim=-1)
        frame = self.mel_proj(proj_input)
        gate_logit = self.gate_proj(proj_input).squeeze(-1)
        return frame, gate_logit, state["text_weights"], pros_weights

    def _check_conditioning(self, style_vec, prosody_memory, f0_feats, n_steps):
        if self.cfg.variant == "hard":
            if f0_feats is None:
                raise ValueError("hard variant requires per-frame F0 features")
            if n_steps is not None and f0_feats.size(1) != n_steps:
                raise ValueError(
                    f"F0 feature length {f0_feats.size(1)} != target frame count {n_steps}"
                )
        elif f0_feats is not None:
            raise ValueError(f"variant {self.cfg.variant!r} takes no decoder F0 input")
        if self.cfg.variant == "soft":
            if prosody_memory is None:
                raise ValueError("soft variant requires a prosody embedding sequence")
        else:
            if style_vec is None:
                raise ValueError("gst/hard variants require a style vector")

    def teacher_forced(self, memory, memory_mask, target_mel, style_vec=None,
                       prosody_memory=None, prosody_mask=None, f0_feats=None) -> DecoderOutput:
        n_steps = target_mel.size(1)
        self._check_conditioning(style_vec, prosody_memory, f0_feats, n_steps)
        state = self._init_state(memory, prosody_memory)
        go = torch.zeros(memory.size(0), self.n_mel, device=memory.device)
        frames, gates, t_weights, p_weights = [], [], [], []
        for t in range(n_steps):
            prev = go if t == 0 else target_mel[:, t - 1]
            f0_t = f0_feats[:, t] if f0_feats is not None else None
            frame, gate, tw, pw = self._step(
                prev, state, memory, memory_mask, style_vec,
                prosody_memory, prosody_mask, f0_t,
            )
            frames.append(frame)
            gates.append(gate)
            t_weights.append(tw)
            if pw is not None:
                p_weights.append(pw)
        return DecoderOutput(
            mel_frames=torch.stack(frames, dim=1),
            gate_logits=torch.stack(gates, dim=1),
            text_attention=torch.stack(t_weights, dim=1),
            prosody_attention=torch.stack(p_weights, dim=1) if p_weights else None,
        )

    def free_running(self, memory, style_vec=None, prosody_memory=None,
                     f0_feats=None, max_steps=None) -> DecoderOutput:
        """Generate until the gate fires (or for exactly len(f0_feats) steps in
        the F0-driven hard mode, where the gate is ignored)."""
        self._check_conditioning(style_vec, prosody_memory, f0_feats, None)
        f0_driven = f0_feats is not None
        if not f0_driven and max_steps is None:
            raise ValueError("max_steps is required when not F0-driven")
        if not f0_driven and memory.size(0) != 1:
            raise ValueError("gate-stopped generation supports batch size 1 only")
        n_steps = f0_feats.size(1) if f0_driven else max_steps

        state = self._init_state(memory, prosody_memory)
        prev = torch.zeros(memory.size(0), self.n_mel, device=memory.device)
        frames, gates, t_weights, p_weights = [], [], [], []
        for t in range(n_steps):
            f0_t = f0_feats[:, t] if f0_driven else None
            frame, gate, tw, pw = self._step(
                prev, state, memory, None, style_vec, prosody_memory, None, f0_t
            )
            frames.append(frame)
            gates.append(gate)
            t_weights.append(tw)
            if pw is not None:
                p_weights.append(pw)
            prev = frame
            if not f0_driven and torch.sigmoid(gate).item() >= self.cfg.gate_threshold:
                break
        return DecoderOutput(
            mel_frames=torch.stack(frames, dim=1),
            gate_logits=torch.stack(gates, dim=1),
            text_attention=torch.stack(t_weights, dim=1),
            prosody_attention=torch.stack(p_weights, dim=1) if p_weights else None,
        )
