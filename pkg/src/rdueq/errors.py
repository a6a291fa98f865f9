"""Exception hierarchy shared across the package.

ConfigError covers bad user input (malformed config, invalid parameters,
violated mathematical preconditions). NumericsError covers runtime numerical
failures (quadrature non-convergence, solver breakdown). The CLI maps them to
exit codes 2 and 3 respectively.
"""


class RdueqError(Exception):
    pass


class ConfigError(RdueqError):
    pass


class DomainError(ConfigError):
    """A mathematical precondition does not hold for the given inputs."""


class NumericsError(RdueqError):
    pass


class QuadratureError(NumericsError):
    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved
