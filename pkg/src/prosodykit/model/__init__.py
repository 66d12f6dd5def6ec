from .config import ModelConfig, VARIANTS
from .vocab import Vocabulary, PAD_SYMBOL, EOS_SYMBOL
from .network import ModelOutput, ProsodyTransferModel, contour_to_features
from .prosody import gradient_reversal, GradientReversal
from .losses import LossParts, compute_loss, mel_rmse, gate_bce, speaker_ce, GATE_EPS
from .checkpoint import save_checkpoint, load_checkpoint, LoadedCheckpoint

__all__ = [
    "ModelConfig",
    "VARIANTS",
    "Vocabulary",
    "PAD_SYMBOL",
    "EOS_SYMBOL",
    "ModelOutput",
    "ProsodyTransferModel",
    "contour_to_features",
    "gradient_reversal",
    "GradientReversal",
    "LossParts",
    "compute_loss",
    "mel_rmse",
    "gate_bce",
    "speaker_ce",
    "GATE_EPS",
    "save_checkpoint",
    "load_checkpoint",
    "LoadedCheckpoint",
]
