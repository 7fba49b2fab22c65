"""Exception types shared across the package."""


class NumericalError(RuntimeError):
    """An eigensolver or other dense kernel failed.

    Carries the dimension of the offending matrix so that failures deep in a
    batched update can be traced back to a block size.
    """

    def __init__(self, message: str, dim: int | None = None):
        if dim is not None:
            message = f"{message} (matrix dimension {dim})"
        super().__init__(message)
        self.dim = dim


class BrokenSymmetryError(NumericalError):
    """A block that should be (conjugate-)symmetric drifted past tolerance.

    Raised by the translation-invariant dual update when the Fourier blocks
    fail to be Hermitian, which signals corrupted translation symmetry in the
    data feeding the transform rather than ordinary round-off.
    """


class DivergenceError(RuntimeError):
    """The solver iterate left any plausible energy range."""


class CheckpointError(RuntimeError):
    """A checkpoint file could not be read back safely."""


class FingerprintMismatchError(CheckpointError):
    """Checkpoint belongs to a different problem/configuration."""
