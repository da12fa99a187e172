"""Benchmark systems and model families: linear map, Hénon map, unicycle, mismatch."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from sysid.design import ConstraintSet
from sysid.model import ParametricModel, SystemOracle

LINEAR_MATRIX = np.array([[1.0, 2.0], [3.0, 4.0]])
HENON_ALPHA = 1.4
HENON_BETA = 0.3
UNICYCLE_DT = 0.1

CASE_NAMES = ("linear", "henon", "unicycle", "mismatch-tied", "mismatch-linear")


@dataclass(frozen=True)
class BenchmarkCase:
    name: str
    oracle: SystemOracle
    family: ParametricModel
    theta_true: Optional[np.ndarray]
    input_constraint: ConstraintSet
    sequential: bool = False
    designable: Optional[tuple] = None  # None: the whole input is designable
    initial_state: Optional[np.ndarray] = None

    @property
    def design_dim(self) -> int:
        if self.designable is None:
            return self.oracle.input_dim
        return self.designable[1] - self.designable[0]


def _linear_family() -> ParametricModel:
    def f(x, theta):
        return theta.reshape(2, 2) @ x

    def jac(x, theta):
        return np.array([[x[0], x[1], 0.0, 0.0], [0.0, 0.0, x[0], x[1]]])

    return ParametricModel(f, param_dim=4, output_dim=2, jacobian=jac, name="linear-2x2")


def _henon_oracle(alpha=HENON_ALPHA, beta=HENON_BETA) -> SystemOracle:
    def g(x):
        return np.array([1.0 - alpha * x[0] ** 2 + x[1], beta * x[0]])

    return SystemOracle(g, input_dim=2, output_dim=2)


def linear_case() -> BenchmarkCase:
    oracle = SystemOracle(lambda x: LINEAR_MATRIX @ x, input_dim=2, output_dim=2)
    return BenchmarkCase(
        name="linear",
        oracle=oracle,
        family=_linear_family(),
        theta_true=LINEAR_MATRIX.ravel().copy(),
        input_constraint=ConstraintSet.ball(0.5),
    )


def henon_case(input_radius: float = 2.0) -> BenchmarkCase:
    def f(x, theta):
        return np.array([1.0 - theta[0] * x[0] ** 2 + x[1], theta[1] * x[0]])

    def jac(x, theta):
        return np.array([[-x[0] ** 2, 0.0], [0.0, x[0]]])

    family = ParametricModel(f, param_dim=2, output_dim=2, jacobian=jac, name="henon")
    return BenchmarkCase(
        name="henon",
        oracle=_henon_oracle(),
        family=family,
        theta_true=np.array([HENON_ALPHA, HENON_BETA]),
        input_constraint=ConstraintSet.ball(input_radius),
    )


def unicycle_case(control_bound: float = 1.0, turn_bound: float = 1.0) -> BenchmarkCase:
    """Unicycle with input ``(x1, x2, heading, speed, turn_rate)``; only the controls are designable."""
    dt = UNICYCLE_DT

    def g(z):
        x1, x2, x3, u1, u2 = z
        return np.array([x1 + u1 * dt * np.cos(x3), x2 + u1 * dt * np.sin(x3), x3 + u2 * dt])

    def f(z, theta):
        x1, x2, x3, u1, u2 = z
        return np.array([
            theta[1] * x1 + u1 * theta[0] * np.cos(x3),
            theta[1] * x2 + u1 * theta[0] * np.sin(x3),
            x3 + u2 * theta[0],
        ])

    def jac(z, theta):
        x1, x2, x3, u1, u2 = z
        return np.array([[u1 * np.cos(x3), x1], [u1 * np.sin(x3), x2], [u2, 0.0]])

    return BenchmarkCase(
        name="unicycle",
        oracle=SystemOracle(g, input_dim=5, output_dim=3),
        family=ParametricModel(f, param_dim=2, output_dim=3, jacobian=jac, name="unicycle"),
        theta_true=np.array([dt, 1.0]),
        input_constraint=ConstraintSet.box([-control_bound, -turn_bound], [control_bound, turn_bound]),
        sequential=True,
        designable=(3, 5),
        initial_state=np.zeros(3),
    )


def mismatch_cases(input_radius: float = 2.0) -> list[BenchmarkCase]:
    """Hénon data fitted by two linear families that cannot represent it."""

    def tied(x, theta):
        row = theta[0] * x[0] + theta[1] * x[1]
        return np.array([row, row])

    def tied_jac(x, theta):
        return np.array([[x[0], x[1]], [x[0], x[1]]])

    bound = ConstraintSet.ball(input_radius)
    return [
        BenchmarkCase(
            name="mismatch-tied",
            oracle=_henon_oracle(),
            family=ParametricModel(tied, param_dim=2, output_dim=2, jacobian=tied_jac, name="tied-rows"),
            theta_true=None,
            input_constraint=bound,
        ),
        BenchmarkCase(
            name="mismatch-linear",
            oracle=_henon_oracle(),
            family=_linear_family(),
            theta_true=None,
            input_constraint=bound,
        ),
    ]


def get_case(name: str, henon_radius: float = 2.0) -> BenchmarkCase:
    if name == "linear":
        return linear_case()
    if name == "henon":
        return henon_case(henon_radius)
    if name == "unicycle":
        return unicycle_case()
    for case in mismatch_cases(henon_radius):
        if case.name == name:
            return case
    raise KeyError(f"unknown case {name!r}; choose from {', '.join(CASE_NAMES)}")
