"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed input data or spec (bad CSV, invalid synthetic spec)."""


class ConfigError(ValueError):
    """Invalid run configuration."""


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str) -> None:
        super().__init__(f"{stage}: {message}")
        self.stage = stage
