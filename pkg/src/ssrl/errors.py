"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor extents do not satisfy an operation's contract."""


class DataFormatError(ValueError):
    """A dataset or checkpoint file is malformed (bad magic, truncation, size)."""


class LabelAccessError(RuntimeError):
    """Ground truth of an unlabeled sample was requested through a training path."""


class TrainingError(RuntimeError):
    """The training loop hit a non-recoverable numeric condition."""
