"""Exception hierarchy. ``exit_code`` maps each family onto the CLI exit codes."""


class CephforgeError(Exception):
    exit_code = 1


class ValidationError(CephforgeError):
    """Input data violates a landmark, prompt or manifest invariant."""

    exit_code = 1


class DegenerateGeometryError(ValidationError):
    pass


class ResampleBudgetExhausted(ValidationError):
    pass


class ConfigError(CephforgeError):
    """Bad schema / lexicon / config file or inconsistent arguments."""

    exit_code = 3


class SchemaError(ConfigError):
    pass


class InfeasibleLexiconError(ConfigError):
    pass


class CephforgeIOError(CephforgeError):
    exit_code = 2
