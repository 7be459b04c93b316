"""Exception types shared across the toolkit."""


class ChargeOptError(Exception):
    """Base class for all toolkit errors."""


class ParameterError(ChargeOptError):
    """Invalid, inconsistent, or unphysical parameter data."""


class NoRootError(ChargeOptError):
    """A requested open-circuit voltage is outside the achievable range."""


class SimulationBlowupError(ChargeOptError):
    """The integrator produced non-finite values or left physical bounds.

    Signals a too-large step or bad parameters; the simulator never clamps.
    """


class VoltageDomainError(ChargeOptError):
    """A log or exchange-current argument in the voltage expression was <= 0."""


class InfeasibleRateError(ChargeOptError):
    """A charging target cannot be met inside the allowed current range."""


class CheckpointError(ChargeOptError):
    """Checkpoint shape/config mismatch or unreadable checkpoint file."""


class ConfigError(ChargeOptError):
    """Malformed run configuration file."""
