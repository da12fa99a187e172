"""Informative input design.

The next input maximizes a scalar measure of the approximate posterior
information matrix

    prior_precision + sum_i C(x_i)' Sigma^{-1} C(x_i) + C(x)' Sigma^{-1} C(x)

minus a smooth penalty ``lam * (dist(x, X)^2 + dist(f(x), Y)^2)`` for
constraint violations. Only the designable slice of the input is optimized;
the remaining coordinates are a fixed context (e.g. the current state).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from sysid.estimator import CalibrationError, jitter_for
from sysid.model import ParametricModel, assemble_input

MEASURES = ("log-det", "trace", "min-eig")
DIVERGENCE_NORM = 1e6


class DesignError(RuntimeError):
    """Input design failed."""


class DesignDivergence(DesignError):
    """The ascent ran off to infinity; the objective is unbounded on X."""


@dataclass(frozen=True)
class ConstraintSet:
    """Feasible set for a vector: ``unbounded``, ``ball`` (radius) or ``box`` (lo, hi)."""

    kind: str = "unbounded"
    radius: float = None
    lo: np.ndarray = None
    hi: np.ndarray = None

    def __post_init__(self):
        if self.kind == "ball":
            if self.radius is None or not self.radius > 0:
                raise ValueError("ball radius must be positive")
        elif self.kind == "box":
            lo = np.asarray(self.lo, dtype=float)
            hi = np.asarray(self.hi, dtype=float)
            if lo.shape != hi.shape or not np.all(lo < hi):
                raise ValueError("box needs lo < hi elementwise")
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)
        elif self.kind != "unbounded":
            raise ValueError(f"unknown constraint kind {self.kind!r}")

    @classmethod
    def ball(cls, radius: float) -> "ConstraintSet":
        return cls("ball", radius=float(radius))

    @classmethod
    def box(cls, lo, hi) -> "ConstraintSet":
        return cls("box", lo=lo, hi=hi)

    @property
    def bounded(self) -> bool:
        return self.kind != "unbounded"

    def project(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self.kind == "ball":
            norm = np.linalg.norm(v)
            return v * (self.radius / norm) if norm > self.radius else v.copy()
        if self.kind == "box":
            return np.clip(v, self.lo, self.hi)
        return v.copy()

    def tangent(self, x, g) -> np.ndarray:
        """Component of ``g`` that does not point out of the set at ``x``."""
        g = np.asarray(g, dtype=float)
        if self.kind == "ball":
            norm = math.sqrt(float(x @ x))
            if norm >= self.radius * (1.0 - 1e-12):
                u = x / norm
                radial = float(g @ u)
                if radial > 0:
                    return g - radial * u
            return g
        if self.kind == "box":
            blocked = ((x >= self.hi) & (g > 0)) | ((x <= self.lo) & (g < 0))
            return np.where(blocked, 0.0, g)
        return g

    def sqdist(self, v) -> float:
        v = np.asarray(v, dtype=float)
        if self.kind == "ball":
            excess = math.sqrt(float(v @ v)) - self.radius
            return float(excess * excess) if excess > 0 else 0.0
        if self.kind == "box":
            return float(np.sum((v - np.clip(v, self.lo, self.hi)) ** 2))
        return 0.0

    def contains(self, v, tol: float = 0.0) -> bool:
        return self.sqdist(v) <= tol * tol

    def sample(self, rng: np.random.Generator, dim: int) -> np.ndarray:
        """Uniform draw from the set (standard normal when unbounded)."""
        if self.kind == "ball":
            direction = rng.standard_normal(dim)
            direction /= np.linalg.norm(direction)
            return direction * self.radius * rng.uniform() ** (1.0 / dim)
        if self.kind == "box":
            return rng.uniform(self.lo, self.hi)
        return rng.standard_normal(dim)


def info_measure(info: np.ndarray, measure: str = "log-det") -> float:
    """Scalar magnitude of an information matrix (larger is more informative)."""
    if info.shape[0] == 0:
        raise ValueError("information matrix has zero dimension")
    if measure == "log-det":
        try:
            L = np.linalg.cholesky(info)
        except np.linalg.LinAlgError:
            jitter = jitter_for(info)
            d = info.shape[0]
            for _ in range(12):
                try:
                    L = np.linalg.cholesky(info + jitter * np.eye(d))
                    break
                except np.linalg.LinAlgError:
                    jitter *= 10.0
            else:
                return -np.inf
        return 2.0 * float(np.log(L.diagonal()).sum())
    if measure == "trace":
        return float(np.trace(info))
    if measure == "min-eig":
        return float(np.linalg.eigvalsh(info)[0])
    raise ValueError(f"unknown measure {measure!r}; expected one of {MEASURES}")


def _inverse_pd(sigma) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    try:
        L = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise CalibrationError("covariance is not positive definite") from None
    Linv = np.linalg.inv(L)
    return Linv.T @ Linv


def information_increment(C: np.ndarray, sigma_inv: np.ndarray) -> np.ndarray:
    M = C.T @ sigma_inv @ C
    return 0.5 * (M + M.T)


def posterior_information(inputs: Sequence, theta, model: ParametricModel, sigma,
                          prior_precision) -> np.ndarray:
    """Approximate posterior precision at ``theta`` for the given inputs."""
    sigma_inv = _inverse_pd(sigma)
    info = np.array(prior_precision, dtype=float, ndmin=2).copy()
    for x in inputs:
        info += information_increment(model.jac(x, theta), sigma_inv)
    return 0.5 * (info + info.T)


@dataclass(frozen=True)
class InformationObjective:
    """Everything needed to score a candidate input.

    ``designable`` is the ``(start, stop)`` slice of the ``input_dim``-vector
    being optimized; the rest of the input is supplied as context.
    """

    prior_precision: np.ndarray
    fixed_information: np.ndarray
    sigma_inv: np.ndarray
    input_dim: int
    measure: str = "log-det"
    lam: float = 100.0
    input_set: ConstraintSet = field(default_factory=ConstraintSet)
    output_set: ConstraintSet = field(default_factory=ConstraintSet)
    designable: Optional[tuple] = None

    def __post_init__(self):
        if self.measure not in MEASURES:
            raise ValueError(f"unknown measure {self.measure!r}")
        if self.lam < 0:
            raise ValueError("penalty weight must be non-negative")
        if self.designable is None:
            object.__setattr__(self, "designable", (0, self.input_dim))
        base = np.asarray(self.prior_precision, dtype=float) + np.asarray(self.fixed_information, dtype=float)
        object.__setattr__(self, "_base", 0.5 * (base + base.T))

    @property
    def design_dim(self) -> int:
        return self.designable[1] - self.designable[0]

    @property
    def base_information(self) -> np.ndarray:
        return self._base

    def full_input(self, x_cand, context=()) -> np.ndarray:
        if self.design_dim == self.input_dim:
            return np.asarray(x_cand, dtype=float)
        return assemble_input(self.input_dim, self.designable, context, x_cand)


def design_objective(x_cand, obj: InformationObjective, theta, model: ParametricModel, context=()) -> float:
    x_cand = np.asarray(x_cand, dtype=float)
    if x_cand.shape != (obj.design_dim,):
        raise ValueError(f"candidate must have shape ({obj.design_dim},), got {x_cand.shape}")
    x = obj.full_input(x_cand, context)
    info = obj.base_information + information_increment(model.jac(x, theta), obj.sigma_inv)
    value = info_measure(info, obj.measure)
    penalty = obj.input_set.sqdist(x_cand)
    if obj.output_set.bounded:
        penalty += obj.output_set.sqdist(model(x, theta))
    return value - obj.lam * penalty


def initial_points(obj: InformationObjective, starts: int, rng: np.random.Generator) -> list[np.ndarray]:
    return [obj.input_set.sample(rng, obj.design_dim) for _ in range(starts)]


def _fd_gradient(fun: Callable, x: np.ndarray) -> np.ndarray:
    g = np.empty_like(x)
    for j in range(x.size):
        h = 1e-6 * (1.0 + abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        g[j] = (fun(xp) - fun(xm)) / (2.0 * h)
    return g


def ascend(fun: Callable, x0, constraint: Optional[ConstraintSet] = None, max_iter: int = 200,
           gtol: float = 1e-8, ftol: float = 1e-10, xtol: float = 1e-8) -> tuple[np.ndarray, float]:
    """Projected finite-difference gradient ascent with Armijo backtracking.

    The gradient is first restricted to the tangent cone of ``constraint`` (so
    iterates slide along an active boundary instead of pushing into it), the
    trial step uses the Barzilai-Borwein length, and every iterate is projected
    back onto the set. Stops when that restricted gradient is below ``gtol``,
    when a step is shorter than ``xtol`` or gains less than ``ftol`` (both
    relative), or after ``max_iter`` iterations. Raises DesignDivergence if the
    iterate norm exceeds 1e6.
    """
    constraint = ConstraintSet() if constraint is None else constraint
    x = constraint.project(np.asarray(x0, dtype=float))
    fx = fun(x)
    if not np.isfinite(fx):
        raise DesignError("objective is not finite at the start point")
    t = 1.0
    x_prev = g_prev = None
    for _ in range(max_iter):
        g = _fd_gradient(fun, x)
        if not np.all(np.isfinite(g)):
            break
        g = constraint.tangent(x, g)
        if np.linalg.norm(g) < gtol:
            break
        if x_prev is not None:
            s, y = x - x_prev, g - g_prev
            sy = float(s @ y)
            t = float(s @ s) / -sy if sy < 0 else 2.0 * t
        while True:
            x_new = constraint.project(x + t * g)
            d = x_new - x
            if np.linalg.norm(d) <= 1e-14 * (1.0 + np.linalg.norm(x)):
                return x, fx
            f_new = fun(x_new)
            if np.isfinite(f_new) and f_new >= fx + 1e-4 * float(g @ d):
                break
            t *= 0.5
            if t < 1e-20:
                return x, fx
        if np.linalg.norm(x_new) > DIVERGENCE_NORM:
            raise DesignDivergence("input design diverged: iterate norm exceeded 1e6 (bound X or raise lam)")
        gain = f_new - fx
        x_prev, g_prev = x, g
        x, fx = x_new, f_new
        if gain <= ftol * (1.0 + abs(fx)) or np.linalg.norm(d) <= xtol * (1.0 + np.linalg.norm(x)):
            break
    return x, fx


def design_input(obj: InformationObjective, theta, model: ParametricModel, context=(), starts: int = 8,
                 rng: Optional[np.random.Generator] = None, max_iter: int = 200) -> np.ndarray:
    """Multi-start projected ascent on ``design_objective``; returns the best designable vector.

    Ties between starts go to the lowest start index.
    """
    if starts < 1:
        raise ValueError("starts must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    theta = np.asarray(theta, dtype=float)
    context = np.asarray(context, dtype=float)

    def fun(v):
        return design_objective(v, obj, theta, model, context)

    best_x, best_f = None, -np.inf
    failures = []
    for x0 in initial_points(obj, starts, rng):
        try:
            x, fx = ascend(fun, x0, obj.input_set, max_iter=max_iter)
        except DesignDivergence:
            raise
        except DesignError as exc:
            failures.append(str(exc))
            continue
        if fx > best_f:
            best_x, best_f = x, fx
    if best_x is None:
        raise DesignError(f"no start produced a finite objective ({len(failures)} failures)")
    return best_x
