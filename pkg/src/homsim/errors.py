"""Exception hierarchy shared by all homsim modules.

Three failure families map onto distinct CLI exit codes: bad parameters
(ConfigurationError), unreadable or inconsistent input data (DataError),
and analysis steps that cannot produce a result (AnalysisError).
"""


class HomsimError(Exception):
    """Base class for all homsim errors."""


class ConfigurationError(HomsimError):
    """Invalid physical or numerical parameters."""


class DataError(HomsimError):
    """Corrupt, truncated, or inconsistent input data."""


class AnalysisError(HomsimError):
    """An analysis step cannot produce a meaningful result."""
