import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roughsde.fields import FIELD_REGISTRY, VectorFieldSet, build_fields, with_identity_block


@pytest.mark.parametrize("name", sorted(FIELD_REGISTRY))
def test_registry_jacobians_match_finite_differences(name):
    fs = FIELD_REGISTRY[name]()
    probes = np.linspace(-4, 4, 41)[:, None]
    assert fs.check_jacobian(probes) <= 0


def test_shapes_broadcast_over_leading_axes():
    fs = build_fields("sin", "cos")
    x = np.zeros((3, 5, 1))
    assert fs.fields(x).shape == (3, 5, 1, 1)
    assert fs.jac(x).shape == (3, 5, 1, 1, 1)
    assert fs.u(0.0, x).shape == (3, 5, 1)


def test_two_dimensional_rotation_field():
    # beta_1(x) = (-x2, x1): the Jacobian is the constant rotation generator
    fs = VectorFieldSet(lambda x: np.stack([-x[..., 1], x[..., 0]], axis=-1)[..., None], 2, 1)
    J = fs.jac(np.array([0.3, -1.2]))
    assert np.allclose(J[0], [[0.0, -1.0], [1.0, 0.0]], atol=1e-9)


@given(st.floats(-50, 50))
def test_fd_jacobian_of_sin(x):
    fs = FIELD_REGISTRY["sin"]()
    fd = VectorFieldSet(fs.beta, 1, 1).jac(np.array([x]))[0, 0, 0]
    assert fd == pytest.approx(np.cos(x), abs=1e-6 * (1 + abs(x)) ** 2)


def test_wrong_analytic_jacobian_is_flagged():
    bad = VectorFieldSet(lambda x: np.sin(x)[..., None], 1, 1, jacobian=lambda x: np.sin(x)[..., None, :, None])
    assert bad.check_jacobian(np.array([[0.1], [1.0]])) > 0


def test_identity_block():
    fs = with_identity_block(build_fields("sin"), scale=2.0)
    x = np.array([0.7])
    V = fs.fields(x)
    assert np.array_equal(V, [[2.0, np.sin(0.7)]])
    J = fs.jac(x)
    assert np.all(J[0] == 0)
    assert J[1, 0, 0] == pytest.approx(np.cos(0.7))


def test_unknown_names():
    with pytest.raises(ValueError):
        build_fields("nope")
    with pytest.raises(ValueError):
        build_fields("sin", "nope")


def test_drift_swap():
    fs = build_fields("one", "cos")
    assert fs.u(0.0, np.array([0.0]))[0] == 1.0
    assert np.all(fs.without_drift().u(0.0, np.array([0.0])) == 0)


def test_negated():
    fs = build_fields("one_plus_half_sin", "cos")
    neg = fs.negated()
    x = np.array([[0.4], [-1.0]])
    assert np.array_equal(neg.fields(x), -fs.fields(x))
    assert np.array_equal(neg.jac(x), -fs.jac(x))
    assert np.array_equal(neg.u(0.0, x), -fs.u(0.0, x))
