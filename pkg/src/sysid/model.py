"""System oracles, parametric model families, datasets and linearization."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Vector = np.ndarray
Matrix = np.ndarray


class EvaluationError(ValueError):
    """A model or oracle produced a non-finite value."""


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=float, ndmin=ndim)
    arr.setflags(write=False)
    return arr


def _check_finite(values: np.ndarray, what: str) -> None:
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        coord = tuple(int(i) for i in bad[0])
        raise EvaluationError(f"{what} is non-finite at coordinate {coord}")


@dataclass(frozen=True)
class SystemOracle:
    """Black-box system ``y = g(x)``; only queries are available."""

    query: Callable[[Vector], Vector]
    input_dim: int
    output_dim: int

    def __call__(self, x) -> Vector:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.input_dim,):
            raise ValueError(f"oracle expects input of shape ({self.input_dim},), got {x.shape}")
        y = np.asarray(self.query(x), dtype=float)
        if y.shape != (self.output_dim,):
            raise EvaluationError(f"oracle returned shape {y.shape}, expected ({self.output_dim},)")
        _check_finite(y, "oracle output")
        return y


@dataclass(frozen=True)
class ParametricModel:
    """Model family ``f(x; theta)``.

    ``jacobian`` returns ``df/dtheta`` with shape (output_dim, param_dim). When
    it is omitted, central finite differences are used instead.
    """

    eval: Callable[[Vector, Vector], Vector]
    param_dim: int
    output_dim: int
    jacobian: Optional[Callable[[Vector, Vector], Matrix]] = None
    name: str = ""

    def __call__(self, x, theta) -> Vector:
        return np.asarray(self.eval(np.asarray(x, dtype=float), np.asarray(theta, dtype=float)), dtype=float)

    def jac(self, x, theta) -> Matrix:
        if self.jacobian is None:
            return finite_difference_jacobian(self, x, theta)
        x = np.asarray(x, dtype=float)
        theta = np.asarray(theta, dtype=float)
        return np.asarray(self.jacobian(x, theta), dtype=float).reshape(self.output_dim, self.param_dim)


def finite_difference_jacobian(model: ParametricModel, x, theta, h=None) -> Matrix:
    """Central-difference Jacobian of ``model`` with respect to the parameters.

    ``h`` may be a scalar or one step per parameter; by default the step for
    coordinate j is ``1e-6 * (1 + |theta_j|)``.
    """
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float).ravel()
    if h is None:
        steps = 1e-6 * (1.0 + np.abs(theta))
    else:
        steps = np.broadcast_to(np.asarray(h, dtype=float), theta.shape)
    if np.any(steps <= 0):
        raise ValueError("finite-difference step must be positive")

    columns = []
    for j, hj in enumerate(steps):
        tp = theta.copy()
        tm = theta.copy()
        tp[j] += hj
        tm[j] -= hj
        fp = np.atleast_1d(model(x, tp))
        fm = np.atleast_1d(model(x, tm))
        _check_finite(fp, f"model output (theta_{j} + h)")
        _check_finite(fm, f"model output (theta_{j} - h)")
        columns.append((fp - fm) / (2.0 * hj))
    return np.column_stack(columns)


@dataclass(frozen=True)
class Linearization:
    """First-order expansion ``f(x; theta) ~ offset + sensitivity @ theta``."""

    offset: Vector
    sensitivity: Matrix
    expansion_point: Vector

    # short aliases matching the usual b / C notation
    @property
    def b(self) -> Vector:
        return self.offset

    @property
    def C(self) -> Matrix:
        return self.sensitivity

    def __call__(self, theta) -> Vector:
        return self.offset + self.sensitivity @ np.asarray(theta, dtype=float)


def linearize(model: ParametricModel, x, theta_hat) -> Linearization:
    theta_hat = np.asarray(theta_hat, dtype=float).ravel()
    if theta_hat.shape != (model.param_dim,):
        raise ValueError(f"expected {model.param_dim} parameters, got {theta_hat.shape}")
    f0 = np.atleast_1d(model(x, theta_hat))
    _check_finite(f0, "model output")
    C = model.jac(x, theta_hat)
    _check_finite(C, "model Jacobian")
    b = f0 - C @ theta_hat
    return Linearization(_frozen(b, 1), _frozen(C, 2), _frozen(theta_hat, 1))


@dataclass(frozen=True)
class Dataset:
    """Ordered input/output pairs plus what the designer is allowed to choose.

    ``designable`` is the ``(start, stop)`` range of input coordinates chosen by
    the input designer. The remaining coordinates come from
    ``context_provider(dataset)``; for stateless systems there are none.
    """

    inputs: np.ndarray
    outputs: np.ndarray
    designable: tuple = None
    context_provider: Optional[Callable[["Dataset"], Vector]] = field(default=None, compare=False)

    def __post_init__(self):
        inputs = _frozen(self.inputs, 2)
        outputs = _frozen(self.outputs, 2)
        if inputs.shape[0] != outputs.shape[0]:
            raise ValueError("inputs and outputs must have the same number of rows")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "outputs", outputs)
        d_x = inputs.shape[1]
        designable = (0, d_x) if self.designable is None else tuple(int(i) for i in self.designable)
        start, stop = designable
        if not 0 <= start < stop <= d_x:
            raise ValueError(f"designable range {designable} is not a non-empty subrange of [0, {d_x})")
        object.__setattr__(self, "designable", designable)

    @classmethod
    def from_pairs(cls, pairs, **kwargs) -> "Dataset":
        xs, ys = zip(*pairs)
        return cls(np.array(xs, dtype=float), np.array(ys, dtype=float), **kwargs)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    def __iter__(self):
        return iter(zip(self.inputs, self.outputs))

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def output_dim(self) -> int:
        return self.outputs.shape[1]

    @property
    def design_dim(self) -> int:
        return self.designable[1] - self.designable[0]

    def context(self) -> Vector:
        """Fixed (non-designable) coordinates of the next query."""
        n_fixed = self.input_dim - self.design_dim
        if n_fixed == 0:
            return np.empty(0)
        if self.context_provider is None:
            raise ValueError("dataset has fixed input coordinates but no context provider")
        ctx = np.asarray(self.context_provider(self), dtype=float).ravel()
        if ctx.shape != (n_fixed,):
            raise ValueError(f"context provider returned {ctx.shape}, expected ({n_fixed},)")
        return ctx

    def assemble(self, context, design) -> Vector:
        """Full input vector from fixed context and designable coordinates."""
        return assemble_input(self.input_dim, self.designable, context, design)

    def append(self, x, y) -> "Dataset":
        x = np.asarray(x, dtype=float).reshape(1, self.input_dim)
        y = np.asarray(y, dtype=float).reshape(1, self.output_dim)
        return Dataset(
            np.vstack([self.inputs, x]),
            np.vstack([self.outputs, y]),
            self.designable,
            self.context_provider,
        )


def assemble_input(input_dim: int, designable: tuple, context, design) -> Vector:
    start, stop = designable
    x = np.empty(input_dim)
    mask = np.ones(input_dim, dtype=bool)
    mask[start:stop] = False
    x[start:stop] = design
    x[mask] = context
    return x


def latest_output(dataset: Dataset) -> Vector:
    """Context provider for state-space systems: the last observed next state."""
    return dataset.outputs[-1]
