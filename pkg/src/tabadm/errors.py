class TabADMError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(TabADMError, ValueError):
    """Invalid configuration or arguments (CLI exit code 2)."""


class ShapeError(TabADMError, ValueError):
    """Operands have incompatible shapes."""


class DataError(TabADMError, ValueError):
    """Malformed input data, e.g. a non-numeric CSV cell."""


class UndefinedMetricError(TabADMError, ValueError):
    """A metric was requested on single-class labels."""


class TrainingDivergedError(TabADMError, RuntimeError):
    """A non-finite loss appeared during training."""

    def __init__(self, step, t, sample_index, loss):
        self.step = step
        self.t = t
        self.sample_index = sample_index
        self.loss = loss
        super().__init__(
            f"non-finite loss {loss!r} at step {step} (t={t}, batch sample {sample_index})"
        )
