class QFisherError(Exception):
    """Base class for all toolkit errors."""


class DomainError(QFisherError, ValueError):
    pass


class ValidityError(QFisherError, ValueError):
    """Parameters fall outside the window where the closed forms hold."""


class DivergenceError(QFisherError, ArithmeticError):
    pass


class DegenerateInputError(QFisherError, ValueError):
    pass


class ConfigError(QFisherError, ValueError):
    pass


class StepRejected(QFisherError):
    def __init__(self, dt, admissible):
        super().__init__(f"dt={dt:.3e} exceeds admissible step {admissible:.3e}")
        self.dt = dt
        self.admissible = admissible


class BlowUpError(QFisherError):
    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class DomainSizeError(QFisherError):
    pass


class PreconditionError(QFisherError, ValueError):
    pass


class RefusedError(QFisherError):
    """A claim is requested outside the region where it is certified."""
