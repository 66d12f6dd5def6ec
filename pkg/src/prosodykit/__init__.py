"""prosodykit: a desk-scale prosody-transfer toolkit.

Signal analysis (mel, F0, contour transforms), objective evaluation
(GPE/VDE/FFE, DTW-aligned MCD), three pitch-conditioned synthesis variants
with an adversarial speaker classifier, a deterministic synthetic corpus, a
training harness, and a CLI for end-to-end transfer experiments.
"""

from .dsp import (
    MelSpectrogram,
    StftConfig,
    Waveform,
    load_waveform,
    mel_spectrogram,
    reconstruct_waveform,
    save_waveform,
)
from .pitch import (
    F0Config,
    PitchContour,
    VocalRangeStats,
    compute_vocal_range,
    extract_f0,
    fit_vocal_range,
    scale_pitch,
)
from .metrics import (
    McepSequence,
    MetricReport,
    evaluate_pair,
    f0_frame_error,
    gross_pitch_error,
    mel_cepstral_distortion,
    mel_cepstrum,
    voicing_decision_error,
)
from .model import (
    ModelConfig,
    ModelOutput,
    ProsodyTransferModel,
    Vocabulary,
    compute_loss,
    contour_to_features,
    gradient_reversal,
    load_checkpoint,
    save_checkpoint,
)
from .corpus import (
    SyntheticCorpusSpec,
    UtteranceRecord,
    generate_synthetic_corpus,
    load_manifest,
    prepare_features,
)
from .training import TrainConfig, lambda_sweep, lr_schedule, train
from .transfer import (
    PitchScale,
    TransferRequest,
    TransferResult,
    VocalRangeFit,
    emit_pitch_figure,
    run_transfer,
    transfer_from_checkpoint,
    write_transfer_bundle,
)

__version__ = "0.1.0"
