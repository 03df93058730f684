"""Exception types shared across the enhancement engine."""


class CpgaError(Exception):
    """Base class for engine failures that are not plain argument errors."""


class NonFiniteError(CpgaError, FloatingPointError):
    """A tensor op produced NaN or Inf."""

    def __init__(self, op: str, detail: str = ""):
        self.op = op
        message = f"Non-finite values produced by '{op}'"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class ImageReadError(CpgaError, OSError):
    """An image could not be decoded or written."""

    def __init__(self, path, reason: str):
        self.path = path
        super().__init__(f"{path}: {reason}")


class CheckpointError(CpgaError):
    """Checkpoint file is malformed or does not match the requested network."""


class TrainingDiverged(CpgaError):
    """Training hit a non-finite loss or gradient and was aborted."""

    def __init__(self, message: str, last_good=None):
        self.last_good = last_good
        super().__init__(message)
