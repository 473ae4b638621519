"""Exception types raised across the package."""


class ContractError(ValueError):
    """Inputs violate a documented shape or value contract."""


class DegenerateDataError(ValueError):
    """Data carry no information for the requested statistic (zero variance, zero range)."""


class IllConditionedError(ArithmeticError):
    """A covariance matrix could not be factorized even after jitter escalation."""


class SingularBasisError(ArithmeticError):
    """The basis matrix of a linear trend is rank deficient."""

    def __init__(self, message, order=None):
        super().__init__(message)
        self.order = order


class TrainingDivergedError(RuntimeError):
    """Network training produced a non-finite loss."""

    def __init__(self, epoch):
        super().__init__(f"training diverged (non-finite loss) at epoch {epoch}")
        self.epoch = epoch


class SamplerDivergedError(RuntimeError):
    """The Langevin chain produced non-finite parameters."""

    def __init__(self, iteration):
        super().__init__(f"sampler diverged (non-finite parameters) at iteration {iteration}")
        self.iteration = iteration


class ConfigError(ValueError):
    """An experiment configuration failed validation."""
