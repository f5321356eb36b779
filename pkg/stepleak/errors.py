"""
Exception hierarchy for stepleak.

Library code raises these; only the CLI turns them into exit codes.
"""


class StepleakError(Exception):
    """Base class for all stepleak errors."""


class CohortError(StepleakError):
    """Raised when step or attribute files cannot be ingested."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")


class FeatureError(StepleakError):
    """Raised when a feature cannot be extracted from a step sequence."""


class ModelError(StepleakError):
    """Raised when a model cannot be fitted or applied."""


class SplitError(StepleakError):
    """Raised when users or items cannot be split into the requested partitions."""


class LinkageError(StepleakError):
    """Raised when linkability pairs or attacks cannot be built."""


class ConfigError(StepleakError):
    """Raised when an experiment configuration is invalid; carries every diagnostic."""

    def __init__(self, diagnostics: list[str]):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics) or "invalid configuration")


class NotImplementedVariantError(StepleakError, NotImplementedError):
    """Raised for model variants that have a registry slot but no implementation."""
