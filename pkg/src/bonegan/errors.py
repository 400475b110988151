"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A config value violates its contract (bad size, unknown op name, ...)."""


class DimensionError(ValueError):
    """Tensor shapes do not match what an operation requires."""


class ContractError(ValueError):
    """A caller broke an operation precondition (non-one-hot label, missing loss part)."""


class IngestionError(ValueError):
    """A dataset file is missing, malformed or out of range."""


class AgeRangeError(ValueError):
    """An age or age-bin shift falls outside the supported intervals."""


class CheckpointError(RuntimeError):
    """A checkpoint directory is incomplete, corrupt or incompatible."""


class TrainingDiverged(RuntimeError):
    """A loss went non-finite; carries the per-component values for diagnosis."""

    def __init__(self, step, components):
        self.step = step
        self.components = dict(components)
        parts = ", ".join(f"{k}={v!r}" for k, v in self.components.items())
        super().__init__(f"non-finite loss at step {step}: {parts}")
