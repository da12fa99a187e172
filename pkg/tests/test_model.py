import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sysid.model import (
    Dataset,
    EvaluationError,
    ParametricModel,
    SystemOracle,
    finite_difference_jacobian,
    latest_output,
    linearize,
)
from sysid.systems import henon_case, linear_case

finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def test_henon_linearization_by_hand():
    lin = linearize(henon_case().family, [1.0, 0.0], [1.4, 0.3])
    np.testing.assert_allclose(lin.C, [[-1.0, 0.0], [0.0, 1.0]], atol=1e-14)
    np.testing.assert_allclose(lin.b, [1.0, 0.0], atol=1e-14)
    np.testing.assert_array_equal(lin.expansion_point, [1.4, 0.3])


def test_linear_family_offset_zero_and_sensitivity_constant():
    fam = linear_case().family
    x = np.array([0.3, -0.2])
    a = linearize(fam, x, np.zeros(4))
    b = linearize(fam, x, np.arange(4.0))
    np.testing.assert_allclose(a.b, 0.0, atol=1e-15)
    np.testing.assert_allclose(b.b, 0.0, atol=1e-15)
    np.testing.assert_array_equal(a.C, b.C)


def test_constant_model():
    c = np.array([2.0, -1.0])
    model = ParametricModel(lambda x, t: c, param_dim=3, output_dim=2)
    lin = linearize(model, [0.0], [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(lin.C, np.zeros((2, 3)))
    np.testing.assert_array_equal(lin.b, c)


def test_fd_square():
    model = ParametricModel(lambda x, t: np.array([t[0] ** 2]), param_dim=1, output_dim=1)
    J = finite_difference_jacobian(model, [0.0], [3.0], h=1e-5)
    assert abs(J[0, 0] - 6.0) < 1e-8


def test_fd_linear_recovers_matrix():
    A = np.array([[1.0, -2.0, 0.5], [3.0, 0.0, 4.0]])
    model = ParametricModel(lambda x, t: A @ t, param_dim=3, output_dim=2)
    np.testing.assert_allclose(finite_difference_jacobian(model, [0.0], [0.1, 0.2, 0.3]), A, atol=1e-9)


def test_fd_henon_matches_hand_derivative():
    J = finite_difference_jacobian(henon_case().family, [1.0, 0.0], [1.4, 0.3])
    np.testing.assert_allclose(J, [[-1.0, 0.0], [0.0, 1.0]], atol=1e-6)


def test_fd_rejects_nonpositive_step():
    model = ParametricModel(lambda x, t: t, param_dim=1, output_dim=1)
    with pytest.raises(ValueError):
        finite_difference_jacobian(model, [0.0], [1.0], h=0.0)


def test_nonfinite_output_names_coordinate():
    model = ParametricModel(lambda x, t: np.array([1.0, np.inf]), param_dim=1, output_dim=2)
    with pytest.raises(EvaluationError, match=r"\(1,\)"):
        linearize(model, [0.0], [0.0])


def test_nonfinite_jacobian():
    model = ParametricModel(lambda x, t: t, param_dim=1, output_dim=1,
                            jacobian=lambda x, t: np.array([[np.nan]]))
    with pytest.raises(EvaluationError):
        linearize(model, [0.0], [0.0])


def test_oracle_checks_shapes_and_values():
    oracle = SystemOracle(lambda x: x * 2, input_dim=2, output_dim=2)
    np.testing.assert_array_equal(oracle([1.0, 2.0]), [2.0, 4.0])
    with pytest.raises(ValueError):
        oracle([1.0])
    bad = SystemOracle(lambda x: np.array([np.nan]), input_dim=1, output_dim=1)
    with pytest.raises(EvaluationError):
        bad([0.0])


def test_fd_fallback_when_no_jacobian():
    model = ParametricModel(lambda x, t: np.array([np.sin(t[0]) * x[0]]), param_dim=1, output_dim=1)
    np.testing.assert_allclose(model.jac([2.0], [0.4]), [[2 * np.cos(0.4)]], rtol=1e-8)


class TestDataset:
    def test_basic(self):
        ds = Dataset.from_pairs([([0.0, 1.0], [1.0]), ([2.0, 3.0], [4.0])])
        assert len(ds) == 2
        assert (ds.input_dim, ds.output_dim, ds.design_dim) == (2, 1, 2)
        assert ds.context().size == 0
        with pytest.raises(ValueError):
            ds.inputs[0, 0] = 9.0

    def test_append_returns_new(self):
        ds = Dataset(np.zeros((1, 2)), np.zeros((1, 1)))
        ds2 = ds.append([1.0, 1.0], [2.0])
        assert len(ds) == 1 and len(ds2) == 2

    @pytest.mark.parametrize("rng_", [(0, 0), (2, 1), (0, 4), (-1, 2)])
    def test_bad_designable(self, rng_):
        with pytest.raises(ValueError):
            Dataset(np.zeros((1, 3)), np.zeros((1, 1)), designable=rng_)

    def test_mismatched_rows(self):
        with pytest.raises(ValueError):
            Dataset(np.zeros((2, 3)), np.zeros((1, 1)))

    def test_sequential_context(self):
        ds = Dataset(np.zeros((1, 5)), np.array([[1.0, 2.0, 3.0]]), designable=(3, 5),
                     context_provider=latest_output)
        np.testing.assert_array_equal(ds.context(), [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(ds.assemble(ds.context(), [7.0, 8.0]), [1, 2, 3, 7, 8])

    def test_missing_provider(self):
        ds = Dataset(np.zeros((1, 3)), np.zeros((1, 1)), designable=(1, 3))
        with pytest.raises(ValueError):
            ds.context()


def _poly_model():
    # nonlinear in theta, smooth
    def f(x, t):
        return np.array([t[0] ** 2 * x[0] + np.sin(t[1]), t[0] * t[1] * x[1]])

    return ParametricModel(f, param_dim=2, output_dim=2)


@settings(max_examples=200, deadline=None)
@given(arrays(float, 2, elements=finite), arrays(float, 2, elements=finite))
def test_linearization_exact_at_expansion_point(x, theta):
    for model in (_poly_model(), henon_case().family):
        lin = linearize(model, x, theta)
        f = model(x, theta)
        assert np.max(np.abs(lin(theta) - f)) <= 1e-12 * (1 + np.max(np.abs(f)))


@settings(max_examples=200, deadline=None)
@given(arrays(float, 2, elements=finite), arrays(float, 4, elements=finite), arrays(float, 4, elements=finite))
def test_linear_family_taylor_is_global(x, theta_hat, theta):
    fam = linear_case().family
    lin = linearize(fam, x, theta_hat)
    assert np.max(np.abs(fam(x, theta) - lin(theta))) <= 1e-10
