"""Training objective: mel RMSE + gate BCE + weighted adversarial speaker CE.

The speaker term reaches the prosody encoder through the gradient reversal,
so minimizing the total loss simultaneously trains the classifier and pushes
the prosody embedding toward speaker neutrality.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch.nn import functional as F

from .network import ModelOutput

GATE_EPS = 1e-7


@dataclass
class LossParts:
    total: torch.Tensor
    rmse: torch.Tensor
    bce: torch.Tensor
    ce: torch.Tensor


def _frame_mask(reference: torch.Tensor, lengths: torch.Tensor | None) -> torch.Tensor:
    b, t = reference.shape[:2]
    if lengths is None:
        return torch.ones(b, t, dtype=torch.bool, device=reference.device)
    positions = torch.arange(t, device=reference.device)
    return positions.unsqueeze(0) < lengths.unsqueeze(1)


def mel_rmse(pred: torch.Tensor, target: torch.Tensor,
             lengths: torch.Tensor | None = None) -> torch.Tensor:
    """Per-utterance root-mean-square error over real frames, batch-averaged."""
    if pred.dim() == 2:
        pred, target = pred.unsqueeze(0), target.unsqueeze(0)
    mask = _frame_mask(pred, lengths).unsqueeze(-1)
    sq = ((pred - target) ** 2) * mask
    per_sample = sq.sum(dim=(1, 2)) / mask.expand_as(sq).sum(dim=(1, 2)).clamp(min=1)
    return torch.sqrt(per_sample).mean()


def gate_bce(gate_probs: torch.Tensor, target: torch.Tensor,
             lengths: torch.Tensor | None = None) -> torch.Tensor:
    """Binary cross entropy on stop probabilities, clamped away from 0/1."""
    if gate_probs.dim() == 1:
        gate_probs, target = gate_probs.unsqueeze(0), target.unsqueeze(0)
    mask = _frame_mask(gate_probs, lengths)
    p = gate_probs.clamp(GATE_EPS, 1.0 - GATE_EPS)
    nll = -(target * torch.log(p) + (1.0 - target) * torch.log(1.0 - p))
    per_sample = (nll * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1)
    return per_sample.mean()


def speaker_ce(logits: torch.Tensor, speaker_ids: torch.Tensor) -> torch.Tensor:
    if logits.dim() == 1:
        logits = logits.unsqueeze(0)
    speaker_ids = torch.atleast_1d(speaker_ids)
    return F.cross_entropy(logits, speaker_ids)


def compute_loss(
    out: ModelOutput,
    target_mel: torch.Tensor,
    target_gate: torch.Tensor,
    speaker_id: torch.Tensor,
    lambda_speaker: float,
    mel_lengths: torch.Tensor | None = None,
) -> LossParts:
    """total = RMSE(mel) + BCE(gate) + lambda * CE(speaker), batch-averaged.

    When a pre-refinement mel prediction is present its RMSE is added to the
    post-refinement one; the logged rmse component is that sum.
    """
    if lambda_speaker < 0:
        raise ValueError("lambda_speaker must be >= 0")
    rmse = mel_rmse(out.mel_pred, target_mel, mel_lengths)
    if out.mel_pred_pre is not None:
        rmse = rmse + mel_rmse(out.mel_pred_pre, target_mel, mel_lengths)
    bce = gate_bce(out.gate, target_gate, mel_lengths)
    ce = speaker_ce(out.speaker_logits, speaker_id)
    total = rmse + bce + lambda_speaker * ce
    return LossParts(total=total, rmse=rmse, bce=bce, ce=ce)
