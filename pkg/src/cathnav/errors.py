"""Exception types shared across the package."""


class CathnavError(Exception):
    """Base class for all package errors."""


class ConfigError(CathnavError):
    """A scenario, catheter, or training configuration is invalid."""


class ContractViolation(CathnavError):
    """A caller passed data that violates a documented precondition."""


class SimulationDiverged(CathnavError):
    """A simulation or training step produced non-finite state."""


class TrainingDiverged(SimulationDiverged):
    """A network or loss went non-finite during training."""


class SchemaMismatch(CathnavError):
    """A stored artifact does not match the active configuration hash."""


class ExtractionError(ConfigError):
    """Centerline extraction failed; a precomputed file may be supplied instead."""
