"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of a formula."""


class InfeasibleError(ValueError):
    """A caching vector violates the per-SBS cache size constraint."""


class InstanceTooLargeError(ValueError):
    """An exhaustive search would exceed the enumeration guard."""


class ConfigError(ValueError):
    """An experiment config failed validation.

    ``field`` holds the dotted path of the offending entry.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
