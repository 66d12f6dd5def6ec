"""Model configuration for the three conditioning variants."""

from __future__ import annotations

from dataclasses import dataclass, field

VARIANTS = ("gst", "hard", "soft")


@dataclass
class ModelConfig:
    """Dimensions and variant switches for the synthesis network.

    variant:
      gst  - a bank of learned style tokens; a reference mel is summarized to
             one global style vector broadcast to every decoder step.
      hard - style tokens plus the reference F0 value injected into the
             decoder input at each frame.
      soft - the reference pitch contour alone is encoded to one prosody
             vector per frame; the decoder attends over that sequence.
    """

    variant: str = "gst"
    n_symbols: int = 32
    n_speakers: int = 4
    n_mel_channels: int = 80

    symbol_embedding_dim: int = 256
    encoder_dim: int = 256
    encoder_n_convs: int = 3
    encoder_kernel_size: int = 5

    attention_rnn_dim: int = 512
    decoder_rnn_dim: int = 512
    attention_dim: int = 128
    attention_location_filters: int = 32
    attention_location_kernel: int = 31
    prenet_dim: int = 128
    prenet_dropout: float = 0.5
    postnet_dim: int = 256
    postnet_n_convs: int = 5
    postnet_kernel_size: int = 5

    speaker_embedding_dim: int = 16
    prosody_dim: int = 128
    n_style_tokens: int = 10
    n_style_heads: int = 4
    ref_encoder_channels: tuple[int, ...] = (32, 32, 64, 64)
    pitch_encoder_channels: tuple[int, ...] = (32, 32)
    pitch_encoder_kernel: int = 5

    f0_ref_hz: float = 200.0
    lambda_speaker: float = 0.0
    gate_threshold: float = 0.5
    max_steps_ratio: int = 10

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.prosody_dim % self.n_style_heads != 0:
            raise ValueError("prosody_dim must be divisible by n_style_heads")
        if self.lambda_speaker < 0:
            raise ValueError("lambda_speaker must be >= 0")
        if self.f0_ref_hz <= 0:
            raise ValueError("f0_ref_hz must be positive")
        self.ref_encoder_channels = tuple(self.ref_encoder_channels)
        self.pitch_encoder_channels = tuple(self.pitch_encoder_channels)

    @classmethod
    def toy(cls, variant: str, n_symbols: int, n_speakers: int, **overrides) -> "ModelConfig":
        """Small preset that overfits a handful of utterances on one CPU."""
        defaults = dict(
            variant=variant,
            n_symbols=n_symbols,
            n_speakers=n_speakers,
            symbol_embedding_dim=48,
            encoder_dim=48,
            encoder_n_convs=1,
            encoder_kernel_size=5,
            attention_rnn_dim=128,
            decoder_rnn_dim=128,
            attention_dim=48,
            attention_location_filters=8,
            attention_location_kernel=15,
            prenet_dim=48,
            prenet_dropout=0.1,
            postnet_dim=48,
            postnet_n_convs=2,
            postnet_kernel_size=5,
            speaker_embedding_dim=8,
            prosody_dim=32,
            n_style_heads=2,
            ref_encoder_channels=(16, 16),
            pitch_encoder_channels=(16, 16),
        )
        defaults.update(overrides)
        return cls(**defaults)
