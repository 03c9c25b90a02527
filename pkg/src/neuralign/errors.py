"""Exception types shared across the package."""


class NeuralignError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(NeuralignError, ValueError):
    """Array shapes do not conform to the operation being performed."""


class DegenerateInputError(NeuralignError, ValueError):
    """A vector with (near-)zero norm reached an operation that needs a
    direction, usually a sign of an untrained or collapsed encoder."""


class ConfigError(NeuralignError, ValueError):
    """An architecture or run configuration is internally inconsistent."""


class ManifestError(NeuralignError, ValueError):
    """A dataset manifest violates its invariants.

    Carries the full list of violations, not just the first one found.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class TensorFormatError(NeuralignError, ValueError):
    """A tensor container file is malformed."""


class BadMagicError(TensorFormatError):
    """The file does not start with the tensor container magic bytes."""


class VersionMismatchError(TensorFormatError):
    """The container declares a format version this reader does not speak."""


class TruncatedPayloadError(TensorFormatError):
    """The payload holds fewer scalars than the declared dimensions need."""


class NonFinitePayloadError(TensorFormatError):
    """The payload contains NaN or infinite scalars."""


class CheckpointError(NeuralignError, ValueError):
    """A checkpoint directory does not match the architecture it declares."""
