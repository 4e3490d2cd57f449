"""Exception types raised across the package."""


class InvalidNonceError(ValueError):
    pass


class TooFewAgentsError(ValueError):
    pass


class InvalidContributionError(ValueError):
    pass


class ElectionFailedError(RuntimeError):
    pass


class InvalidImageError(ValueError):
    pass


class InvalidReportError(ValueError):
    pass


class StepTooLargeError(ValueError):
    pass


class InvalidCaseError(ValueError):
    pass


class InvalidAgentError(ValueError):
    pass


class NumericalFailureError(RuntimeError):
    pass


class CannotEstimateError(ValueError):
    pass


class ScenarioAbortedError(RuntimeError):
    pass


class ConfigError(ValueError):
    """Config file failed to load or validate; ``errors`` lists diagnostics."""

    def __init__(self, errors):
        self.errors = [errors] if isinstance(errors, str) else list(errors)
        super().__init__("; ".join(self.errors))
