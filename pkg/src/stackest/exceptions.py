"""Exception types raised by the estimation machinery."""


class StackestError(Exception):
    """Base class for all package errors."""


class NonConvergence(StackestError):
    """Root finder failed to push the residual below tolerance.

    Usually signals a bad initialization or non-identified parameters
    (e.g. perfect separation in a logistic outcome model).
    """


class SingularJacobian(StackestError):
    """Newton Jacobian is singular: collinear design or degenerate data."""


class SingularBread(StackestError):
    """Bread matrix is not invertible (condition number guard tripped)."""


class UnknownColumn(StackestError):
    """A design or role referenced a column the dataset does not have."""


class MissingOutcomeRead(StackestError):
    """A missing outcome would be dereferenced on a contributing row."""


class EmptyArm(StackestError):
    """A treatment arm required by the estimator has no observations."""
