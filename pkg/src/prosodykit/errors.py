"""Exception types shared across the toolkit."""


class ProsodyKitError(Exception):
    """Base class for all toolkit errors."""


class AudioFormatError(ProsodyKitError):
    """Audio file exists but cannot be decoded as supported PCM WAV."""


class EmptyAudioError(ProsodyKitError):
    """Audio file decoded to zero samples."""


class ManifestError(ProsodyKitError):
    """Malformed corpus manifest. Carries the offending line number."""

    def __init__(self, message: str, line_no: int | None = None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class MissingUtteranceError(ProsodyKitError):
    """Evaluation pair sets do not cover the same utterance ids."""

    def __init__(self, missing_ids):
        self.missing_ids = sorted(missing_ids)
        super().__init__("missing utterances: " + ", ".join(self.missing_ids))


class InvalidSpeakerStatsError(ProsodyKitError):
    """Per-speaker pitch statistics are degenerate (no voiced frames)."""


class TrainingDivergedError(ProsodyKitError):
    """Loss became NaN/Inf. Carries the step at which it happened."""

    def __init__(self, step: int):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step
