"""Exception types shared across the library."""


class ShapeError(ValueError):
    """Array shapes do not agree with an operation's contract."""


class InvalidStateError(RuntimeError):
    """Operation applied to an object in the wrong state."""


class DatasetError(ValueError):
    """A dataset source is malformed or incomplete."""


class CheckpointError(ValueError):
    """A checkpoint file is corrupt or has an unsupported format version."""


class ConfigError(ValueError):
    """An experiment config file failed to parse or validate."""

    def __init__(self, message, *, section=None, field=None):
        loc = ""
        if section is not None:
            loc = f"[{section}]"
            if field is not None:
                loc += f" {field}"
            loc += ": "
        super().__init__(loc + message)
        self.section = section
        self.field = field


class TrainingDivergence(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, step, loss):
        super().__init__(
            f"non-finite training loss ({loss!r}) at epoch {epoch}, step {step}"
        )
        self.epoch = epoch
        self.step = step
        self.loss = loss
