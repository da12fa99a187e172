"""Trust-region linearized MAP estimation with online covariance calibration.

One pass of the inner loop linearizes the model around the current estimate,
solves the resulting convex quadratic inside a Euclidean ball of radius
``delta``, and then checks whether the linearization error stayed small
relative to the model error. Accepted passes recalibrate the noise covariance
from the realized residuals; rejected passes only shrink the trust region.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg

from sysid.model import Dataset, Linearization, ParametricModel, linearize

log = logging.getLogger(__name__)

JITTER_FLOOR = 1e-9
JITTER_REL = 1e-9


class CalibrationError(ValueError):
    """A covariance that must be positive definite is not."""


class SolverError(RuntimeError):
    """The trust-region secular equation did not converge."""


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class GaussianBelief:
    """Gaussian prior over the parameters, stored as mean and precision.

    A zero precision matrix encodes the flat (uniform) prior.
    """

    mean: np.ndarray
    precision: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float, ndmin=1)
        prec = np.array(self.precision, dtype=float, ndmin=2)
        if prec.shape != (mean.size, mean.size):
            raise ValueError(f"precision shape {prec.shape} does not match mean of size {mean.size}")
        if np.max(np.abs(prec - prec.T), initial=0.0) > 1e-12 * (1 + np.max(np.abs(prec), initial=0.0)):
            raise CalibrationError("prior precision is not symmetric")
        if mean.size and np.linalg.eigvalsh(prec)[0] < -1e-10:
            raise CalibrationError("prior precision is not positive semidefinite")
        mean.setflags(write=False)
        prec.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "precision", prec)

    @classmethod
    def flat(cls, dim: int) -> "GaussianBelief":
        return cls(np.zeros(dim), np.zeros((dim, dim)))

    @classmethod
    def from_covariance(cls, mean, cov) -> "GaussianBelief":
        return cls(mean, _sym(np.linalg.inv(np.asarray(cov, dtype=float))))


@dataclass(frozen=True)
class CalibrationState:
    sigma: np.ndarray
    sigma_model_error: np.ndarray
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("trust radius must be positive")
        for name in ("sigma", "sigma_model_error"):
            m = np.array(getattr(self, name), dtype=float, ndmin=2)
            m.setflags(write=False)
            object.__setattr__(self, name, m)
        _cholesky(self.sigma, "sigma")

    @classmethod
    def initial(cls, sigma, delta: float) -> "CalibrationState":
        """Start-up state; the model-error covariance starts equal to ``sigma``."""
        sigma = np.asarray(sigma, dtype=float)
        return cls(sigma, sigma.copy(), delta)


@dataclass(frozen=True)
class Residuals:
    model_errors: np.ndarray  # (n, d_y): y_i - f(x_i; theta_plus)
    lin_errors: np.ndarray  # (n, d_y): f(x_i; theta_plus) - linearization_i(theta_plus)

    def __len__(self):
        return self.model_errors.shape[0]

    def mean_model_norm(self) -> float:
        return float(np.mean(np.linalg.norm(self.model_errors, axis=1)))

    def mean_lin_norm(self) -> float:
        return float(np.mean(np.linalg.norm(self.lin_errors, axis=1)))


def _cholesky(a: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise CalibrationError(f"{what} is not positive definite") from None


def jitter_for(second_moment: np.ndarray) -> float:
    d = second_moment.shape[0]
    return max(JITTER_FLOOR, JITTER_REL * float(np.trace(second_moment)) / d)


def _second_moment(errors: np.ndarray) -> np.ndarray:
    errors = np.atleast_2d(errors)
    n, d = errors.shape
    if n < 1:
        raise ValueError("need at least one residual")
    s = _sym(errors.T @ errors / n)
    return s + jitter_for(s) * np.eye(d)


def update_sigma(residuals: Residuals) -> np.ndarray:
    """Uncentered sample covariance of model plus linearization errors, jittered."""
    return _second_moment(residuals.model_errors + residuals.lin_errors)


def model_error_covariance(residuals: Residuals) -> np.ndarray:
    """Uncentered sample covariance of the model errors alone, jittered."""
    return _second_moment(residuals.model_errors)


def linearize_dataset(dataset: Dataset, model: ParametricModel, theta) -> list[Linearization]:
    return [linearize(model, x, theta) for x in dataset.inputs]


def normal_equations(lins: Sequence[Linearization], outputs, sigma, prior: GaussianBelief):
    """Hessian and linear term of the linearized negative log posterior."""
    chol = _cholesky(np.asarray(sigma, dtype=float), "sigma")
    C = np.stack([lin.C for lin in lins])  # (n, d_y, d_theta)
    resid = np.asarray(outputs, dtype=float) - np.stack([lin.b for lin in lins])
    # whiten: L^{-1} C and L^{-1} (y - b)
    Cw = np.stack([scipy.linalg.solve_triangular(chol, c, lower=True) for c in C])
    rw = scipy.linalg.solve_triangular(chol, resid.T, lower=True).T
    H = prior.precision + np.einsum("nij,nik->jk", Cw, Cw)
    g = prior.precision @ prior.mean + np.einsum("nij,ni->j", Cw, rw)
    return _sym(H), g


class TrustRegionStep(NamedTuple):
    theta: np.ndarray
    mu: float
    on_boundary: bool


def solve_trust_region(H, g, theta_hat, delta: float, max_iter: int = 200) -> TrustRegionStep:
    """Minimize ``0.5 t'Ht - g't`` subject to ``||t - theta_hat|| <= delta``.

    ``H`` must be symmetric positive semidefinite. With ``s = t - theta_hat``
    this is the classical trust-region subproblem; the boundary case is solved
    by safeguarded Newton iteration on the secular equation
    ``1/||s(mu)|| = 1/delta`` with ``s(mu) = (H + mu I)^{-1} (g - H theta_hat)``.
    """
    H = _sym(np.asarray(H, dtype=float))
    g = np.asarray(g, dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float)
    if not delta > 0:
        raise ValueError("trust radius must be positive")

    r = g - H @ theta_hat
    lam, Q = np.linalg.eigh(H)
    lam = np.maximum(lam, 0.0)
    a = Q.T @ r
    a_norm = float(np.linalg.norm(a))
    if a_norm == 0.0:
        return TrustRegionStep(theta_hat.copy(), 0.0, False)

    lam_max = float(lam[-1])
    null = lam <= 1e-13 * max(lam_max, 1e-300)
    if not np.any(null & (np.abs(a) > 1e-14 * a_norm)):
        # stationary points exist; the minimum-norm one is optimal if it fits
        coef = np.where(null, 0.0, a / np.where(null, 1.0, lam))
        if np.linalg.norm(coef) <= delta:
            return TrustRegionStep(theta_hat + Q @ coef, 0.0, False)

    def step_norm(mu):
        return float(np.linalg.norm(a / (lam + mu)))

    lo = max(0.0, a_norm / delta - lam_max)
    hi = a_norm / delta - float(lam[0])
    mu = lo if lo > 0 else 0.5 * hi
    for _ in range(max_iter):
        norm = step_norm(mu)
        if abs(norm - delta) <= 1e-13 * delta:
            break
        if norm > delta:
            lo = mu
        else:
            hi = mu
        # Newton on phi(mu) = 1/||s|| - 1/delta (concave, increasing)
        dnorm = -float(np.sum(a**2 / (lam + mu) ** 3)) / norm
        mu_new = mu - (1.0 / norm - 1.0 / delta) / (-dnorm / norm**2)
        if not (lo < mu_new < hi) or not np.isfinite(mu_new):
            mu_new = 0.5 * (lo + hi)
        if mu_new == mu or hi - lo <= 4 * np.finfo(float).eps * max(hi, 1.0):
            mu = mu_new
            break
        mu = mu_new
    else:
        raise SolverError(f"secular equation did not converge in {max_iter} iterations")

    s = Q @ (a / (lam + mu))
    # pin the step onto the sphere; the correction is at round-off level
    s *= delta / np.linalg.norm(s)
    return TrustRegionStep(theta_hat + s, float(mu), True)


def map_step(dataset: Dataset, model: ParametricModel, theta_hat, sigma, prior: GaussianBelief,
             delta: float, lins: Optional[Sequence[Linearization]] = None) -> np.ndarray:
    """Linearized MAP update restricted to the trust region around ``theta_hat``."""
    if lins is None:
        lins = linearize_dataset(dataset, model, theta_hat)
    H, g = normal_equations(lins, dataset.outputs, sigma, prior)
    return solve_trust_region(H, g, theta_hat, delta).theta


def compute_residuals(dataset: Dataset, model: ParametricModel, theta_plus,
                      lins: Sequence[Linearization]) -> Residuals:
    if len(lins) != len(dataset):
        raise ValueError("one linearization per data point is required")
    theta_plus = np.asarray(theta_plus, dtype=float)
    fitted = np.stack([np.atleast_1d(model(x, theta_plus)) for x in dataset.inputs])
    taylor = np.stack([lin(theta_plus) for lin in lins])
    return Residuals(dataset.outputs - fitted, fitted - taylor)


def step_accepted(residuals: Residuals, rho: float = 0.5, lin_atol: float = 1e-12) -> bool:
    """Accept unless linearization error is large compared to model error."""
    return residuals.mean_lin_norm() <= rho * residuals.mean_model_norm() + lin_atol


@dataclass(frozen=True)
class LoopResult:
    theta: np.ndarray
    state: CalibrationState
    accepted: int
    rejected: int
    residuals: Optional[Residuals]  # from the last accepted pass

    @property
    def no_accept(self) -> bool:
        return self.accepted == 0


def estimation_loop(dataset: Dataset, model: ParametricModel, theta_hat, state: CalibrationState,
                    prior: GaussianBelief, iters: int = 10, rho: float = 0.5, shrink: float = 0.8,
                    lin_atol: float = 1e-12, step_tol: float = 1e-10) -> LoopResult:
    """Inner estimation loop: repeated trust-region MAP steps with calibration.

    A candidate is rejected when the mean linearization error norm exceeds
    ``rho`` times the mean model error norm (plus ``lin_atol`` so that
    round-off on exactly linear families never triggers a rejection). A
    rejection shrinks the trust radius by ``shrink`` and leaves everything else
    untouched. The loop stops early once an accepted step is shorter than
    ``step_tol``.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    theta = np.array(theta_hat, dtype=float)
    accepted = rejected = 0
    last = None
    for _ in range(iters):
        lins = linearize_dataset(dataset, model, theta)
        candidate = map_step(dataset, model, theta, state.sigma, prior, state.delta, lins)
        res = compute_residuals(dataset, model, candidate, lins)
        if not step_accepted(res, rho, lin_atol):
            rejected += 1
            state = replace(state, delta=state.delta * shrink)
            log.debug("rejected step: lin %.3g vs model %.3g, delta -> %.3g",
                      res.mean_lin_norm(), res.mean_model_norm(), state.delta)
            continue
        accepted += 1
        last = res
        state = replace(state, sigma=update_sigma(res), sigma_model_error=model_error_covariance(res))
        step = float(np.linalg.norm(candidate - theta))
        theta = candidate
        if step < step_tol:
            break
    return LoopResult(theta, state, accepted, rejected, last)
