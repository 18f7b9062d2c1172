"""Exception types shared across the pipeline, mapped to CLI exit codes."""


class PipelineError(Exception):
    """Base class for errors the CLI converts into nonzero exit codes."""

    exit_code = 1


class ConfigError(PipelineError):
    """Invalid or inconsistent configuration (missing paths, bad keys)."""

    exit_code = 2


class DataError(PipelineError):
    """Input data violates a precondition (unmapped labels, bad values)."""

    exit_code = 3


class NumericalError(PipelineError):
    """A numerical routine failed (eigensolver breakdown and similar)."""

    exit_code = 4
