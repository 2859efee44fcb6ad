"""Generic M-estimation: stacked-equation root finding and sandwich variance.

An M-estimator solves ``n^-1 sum_i g(Z_i; theta) = 0`` for a k-dimensional
per-observation estimating function g. This module finds the root with damped
Newton iterations (central-difference Jacobian of the mean estimating
equation, step-halving line search) and estimates the variance of the
solution with the empirical sandwich ``B^-1 M B^-T / n``, where B is the mean
negative gradient ("bread") and M the mean outer product ("meat") of g.
"""

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .exceptions import NonConvergence, SingularBread, SingularJacobian

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 50
DEFAULT_FD_STEP = 1e-6
MAX_HALVINGS = 20
BREAD_COND_LIMIT = 1e12
WALD_Z = 1.96


@dataclass(frozen=True, eq=False)
class ParameterVector:
    """A labeled point in parameter space."""

    values: np.ndarray
    labels: tuple

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        labels = tuple(self.labels)
        if values.ndim != 1 or values.size < 1:
            raise ValueError("parameter vector must be a nonempty 1-d array")
        if len(labels) != values.size:
            raise ValueError(f"{len(labels)} labels for {values.size} parameters")
        if not np.isfinite(values).all():
            raise ValueError("parameter values must all be finite")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.values.size

    def replace_values(self, values):
        return ParameterVector(values, self.labels)

    def __getitem__(self, label):
        return float(self.values[self.labels.index(label)])


class EstimatingFunctionSet:
    """A k-dimensional per-observation estimating function.

    ``bind(data)`` returns a callable mapping a parameter array to the
    (n, k) matrix of per-observation values; binding is where dataset-specific
    setup (design expansion, validation) happens, so Newton iterations stay
    cheap. ``evaluate(record, theta)`` gives the single-observation view.
    """

    def __init__(self, dim, bind):
        if dim < 1:
            raise ValueError("estimating function dimension must be >= 1")
        self.dim = dim
        self._bind = bind

    @classmethod
    def from_function(cls, dim, fn):
        """Build from a plain ``fn(data, theta) -> (n, k)`` callable."""
        return cls(dim, lambda data: lambda theta: fn(data, theta))

    def bind(self, data):
        return self._bind(data)

    def evaluate(self, record, theta):
        """Evaluate g for a single observation record."""
        theta = np.asarray(theta, dtype=np.float64)
        out = self.bind(Dataset.from_record(record))(theta)
        return np.asarray(out, dtype=np.float64).reshape(self.dim)

    def evaluate_all(self, data, theta):
        """Evaluate g for every observation; returns an (n, k) matrix."""
        theta = np.asarray(theta, dtype=np.float64)
        out = np.asarray(self.bind(data)(theta), dtype=np.float64)
        if out.shape != (data.n_obs, self.dim):
            raise ValueError(
                f"estimating functions returned shape {out.shape}, "
                f"expected {(data.n_obs, self.dim)}"
            )
        return out


def stack(fragments):
    """Stack column blocks into one estimating-function set.

    Each fragment is ``(width, bind)`` where ``bind(data)`` returns a callable
    ``theta -> (n, width)`` receiving the FULL parameter vector.
    """
    dim = sum(width for width, _ in fragments)

    def bind(data):
        bound = [(width, b(data)) for width, b in fragments]

        def evaluate(theta):
            return np.hstack([fn(theta) for _, fn in bound])

        return evaluate

    return EstimatingFunctionSet(dim, bind)


@dataclass(frozen=True, eq=False)
class FitResult:
    """Solved parameters with sandwich variance and 95% Wald intervals.

    ``covariance`` is the variance of theta-hat itself (the asymptotic
    sandwich already divided by n).
    """

    theta_hat: ParameterVector
    covariance: np.ndarray
    std_errors: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    residual_norm: float
    n_obs: int

    def __getitem__(self, label):
        """(estimate, se, lo, hi) for one labeled parameter."""
        j = self.theta_hat.labels.index(label)
        return (
            float(self.theta_hat.values[j]),
            float(self.std_errors[j]),
            float(self.ci_lower[j]),
            float(self.ci_upper[j]),
        )


def _mean_equation(bound, n):
    def mean_g(theta):
        return bound(theta).sum(axis=0) / n

    return mean_g


def _fd_jacobian(mean_g, theta, h):
    """Central-difference Jacobian of the mean estimating equation.

    Per-coordinate step h * max(1, |theta_j|); the denominator uses the
    actually-realized step (tp - tm) to avoid representation error.
    """
    k = theta.size
    jac = np.empty((k, k))
    for j in range(k):
        step = h * max(1.0, abs(theta[j]))
        tp = theta.copy()
        tm = theta.copy()
        tp[j] = theta[j] + step
        tm[j] = theta[j] - step
        jac[:, j] = (mean_g(tp) - mean_g(tm)) / (tp[j] - tm[j])
    return jac


def solve_root(efs, data, init, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
               fd_step=DEFAULT_FD_STEP):
    """Solve the stacked estimating equations for theta-hat.

    Damped Newton on the mean estimating equation: finite-difference
    Jacobian, step-halving line search on the max-abs residual.

    Raises
    ------
    NonConvergence
        Residual still above ``tol`` after ``max_iter`` iterations, or the
        line search stalled.
    SingularJacobian
        The finite-difference Jacobian could not be factorized.
    """
    if data.n_obs < 1:
        raise ValueError("dataset is empty")
    if tol <= 0:
        raise ValueError("tol must be positive")
    theta = np.array(init.values, dtype=np.float64)
    if theta.size != efs.dim:
        raise ValueError(f"init has dimension {theta.size}, expected {efs.dim}")

    bound = efs.bind(data)
    mean_g = _mean_equation(bound, data.n_obs)

    g = mean_g(theta)
    norm = np.abs(g).max()
    for _ in range(max_iter):
        if norm <= tol:
            return init.replace_values(theta)
        jac = _fd_jacobian(mean_g, theta, fd_step)
        if not np.isfinite(jac).all():
            raise SingularJacobian("non-finite entries in the Newton Jacobian")
        try:
            delta = np.linalg.solve(jac, -g)
        except np.linalg.LinAlgError:
            raise SingularJacobian(
                "singular Newton Jacobian: collinear design or degenerate data"
            ) from None

        scale = 1.0
        for _ in range(MAX_HALVINGS + 1):
            candidate = theta + scale * delta
            g_new = mean_g(candidate)
            norm_new = np.abs(g_new).max()
            if np.isfinite(norm_new) and norm_new < norm:
                break
            scale *= 0.5
        else:
            raise NonConvergence(
                f"line search stalled at residual {norm:.3e} (tol {tol:.1e})"
            )
        theta, g, norm = candidate, g_new, norm_new

    if norm <= tol:
        return init.replace_values(theta)
    raise NonConvergence(
        f"residual {norm:.3e} above tol {tol:.1e} after {max_iter} iterations"
    )


def bread_matrix(efs, data, theta, h=DEFAULT_FD_STEP):
    """Bread: mean negative gradient of g at theta, by central differences."""
    values = theta.values if isinstance(theta, ParameterVector) else theta
    values = np.asarray(values, dtype=np.float64)
    mean_g = _mean_equation(efs.bind(data), data.n_obs)
    return -_fd_jacobian(mean_g, values, h)


def meat_matrix(efs, data, theta):
    """Meat: mean outer product of g at theta; symmetric PSD by construction."""
    values = theta.values if isinstance(theta, ParameterVector) else theta
    g = efs.evaluate_all(data, np.asarray(values, dtype=np.float64))
    meat = g.T @ g / data.n_obs
    return (meat + meat.T) / 2.0


def sandwich_fit(efs, data, init, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                 fd_step=DEFAULT_FD_STEP):
    """Solve for theta-hat and attach the empirical sandwich variance.

    Returns a :class:`FitResult` whose covariance is ``B^-1 M B^-T / n``.

    Raises
    ------
    SingularBread
        Bread condition number above 1e12: variance would be meaningless
        (typically a positivity violation or collinear design).
    """
    theta_hat = solve_root(efs, data, init, tol=tol, max_iter=max_iter,
                           fd_step=fd_step)
    n = data.n_obs
    bound = efs.bind(data)
    mean_g = _mean_equation(bound, n)
    residual = float(np.abs(mean_g(theta_hat.values)).max())

    bread = bread_matrix(efs, data, theta_hat, h=fd_step)
    if not np.isfinite(bread).all():
        raise SingularBread("non-finite entries in the bread matrix")
    if np.linalg.cond(bread) > BREAD_COND_LIMIT:
        raise SingularBread(
            "bread matrix condition number exceeds 1e12; "
            "check for collinear design or positivity violations"
        )
    meat = meat_matrix(efs, data, theta_hat)

    bread_inv = np.linalg.solve(bread, np.eye(efs.dim))
    cov = bread_inv @ meat @ bread_inv.T / n
    cov = (cov + cov.T) / 2.0

    diag = np.diag(cov).copy()
    # PSD up to floating-point dust; anything clearly negative is a bug.
    if (diag < -1e-12 * max(1.0, diag.max(initial=0.0))).any():
        raise SingularBread("sandwich produced a negative variance")
    se = np.sqrt(np.maximum(diag, 0.0))

    return FitResult(
        theta_hat=theta_hat,
        covariance=cov,
        std_errors=se,
        ci_lower=theta_hat.values - WALD_Z * se,
        ci_upper=theta_hat.values + WALD_Z * se,
        residual_norm=residual,
        n_obs=n,
    )
