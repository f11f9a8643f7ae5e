import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adpmpc.errors import ConfigError, DimensionError, SingularLinearizationError
from adpmpc.multitank import TankParams, steady_state_for_input, tank_plant
from adpmpc.plant import linear_plant
from adpmpc.switched_model import (
    CostWeights,
    QuantizedControlSet,
    Setpoint,
    build_switched_model,
    discretize,
    linearize,
    shift_to_error_coordinates,
)


def test_augmented_blocks_scalar(scalar_model):
    m = scalar_model
    assert m.d == 2 and m.M == 3
    np.testing.assert_array_equal(m.abar[0], [[1.0, -1.0], [0.0, 1.0]])
    np.testing.assert_array_equal(m.qbar[2], [[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_array_equal(m.qbar[1], [[1.0, 0.0], [0.0, 0.0]])
    np.testing.assert_array_equal(m.qbarN, [[1.0, 0.0], [0.0, 0.0]])


def test_augmented_step_matches_affine_map():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((3, 3))
    B = rng.standard_normal((3, 2))
    cs = QuantizedControlSet(rng.uniform(-1, 1, (4, 2)), [-1, -1], [1, 1])
    m = build_switched_model(A, B, cs, CostWeights(np.eye(3), np.eye(2), np.eye(3)))
    x = rng.standard_normal(3)
    for s, v in enumerate(cs.levels):
        xbar = np.append(x, 1.0)
        np.testing.assert_allclose(m.abar[s] @ xbar, np.append(A @ x + B @ v, 1.0), atol=1e-14)
        cost = xbar @ m.qbar[s] @ xbar
        assert cost == pytest.approx(x @ x + v @ v, rel=1e-13)


def test_uniform_levels_endpoints():
    cs = QuantizedControlSet.uniform([0.54], [1.0], 6)
    assert cs.M == 6
    assert cs.levels[0, 0] == 0.54 and cs.levels[-1, 0] == 1.0
    np.testing.assert_allclose(np.diff(cs.levels[:, 0]), 0.092)


def test_shifted_levels_keep_order():
    cs = QuantizedControlSet.uniform([0.0], [1.0], 3).shifted([0.25])
    np.testing.assert_allclose(cs.levels[:, 0], [-0.25, 0.25, 0.75])
    np.testing.assert_allclose(cs.lower, [-0.25])


def test_translated_box():
    cs = QuantizedControlSet.uniform([0.54], [1.0], 6).shifted([0.8])
    np.testing.assert_allclose(cs.lower, [-0.26])
    np.testing.assert_allclose(cs.upper, [0.2])


def test_duplicate_levels_rejected():
    with pytest.raises(ConfigError):
        QuantizedControlSet(np.array([0.0, 0.0, 1.0]), [0.0], [1.0])
    cs = QuantizedControlSet(np.array([0.0, 0.0, 1.0]), [0.0], [1.0], allow_duplicates=True)
    assert cs.M == 3


def test_levels_outside_box_rejected():
    with pytest.raises((ConfigError, ValueError)):
        QuantizedControlSet(np.array([-2.0, 0.0]), [-1.0], [1.0])


def test_weights_validation():
    with pytest.raises((ConfigError, ValueError)):
        CostWeights(-np.eye(2), np.eye(1), np.eye(2))
    with pytest.raises((ConfigError, ValueError)):
        CostWeights(np.eye(2), np.zeros((1, 1)), np.eye(2))
    with pytest.raises((ConfigError, DimensionError, ValueError)):
        CostWeights(np.eye(2), np.eye(1), np.eye(3))


def test_fingerprint_changes_with_model(scalar_model):
    cs = QuantizedControlSet(np.array([-1.0, 0.0, 1.0]), [-1.0], [1.0])
    w = CostWeights([[1.0]], [[2.0]], [[1.0]])
    other = build_switched_model([[1.0]], [[1.0]], cs, w)
    assert other.fingerprint() != scalar_model.fingerprint()
    same = build_switched_model([[1.0]], [[1.0]], cs, CostWeights([[1.0]], [[1.0]], [[1.0]]))
    assert same.fingerprint() == scalar_model.fingerprint()


def test_zoh_of_integrator_is_exact():
    A, B = discretize(np.array([[0.0]]), np.array([[1.0]]), 0.5)
    np.testing.assert_allclose(A, [[1.0]])
    np.testing.assert_allclose(B, [[0.5]])


def test_zoh_scalar_closed_form():
    a, dt = -2.0, 0.3
    A, B = discretize(np.array([[a]]), np.array([[1.0]]), dt)
    assert A[0, 0] == pytest.approx(np.exp(a * dt), rel=1e-13)
    assert B[0, 0] == pytest.approx((np.exp(a * dt) - 1) / a, rel=1e-12)


def test_euler_discretization():
    A, B = discretize(np.array([[-2.0]]), np.array([[1.0]]), 0.1, "euler")
    np.testing.assert_allclose(A, [[0.8]])
    np.testing.assert_allclose(B, [[0.1]])


def test_linearize_linear_plant_recovers_matrices():
    Ac = np.array([[-1.0, 0.5], [0.0, -2.0]])
    Bc = np.array([[1.0], [0.5]])
    plant = linear_plant(Ac, Bc, 0.1, [-1.0], [1.0])
    A, B = linearize(plant, [0.2, -0.1], [0.3])
    A_ref, B_ref = discretize(Ac, Bc, 0.1)
    np.testing.assert_allclose(A, A_ref, atol=1e-8)
    np.testing.assert_allclose(B, B_ref, atol=1e-8)


def test_linearize_rejects_empty_tank():
    plant = tank_plant(TankParams())
    with pytest.raises(SingularLinearizationError):
        linearize(plant, [0.1, 0.1, 0.0], [0.8])


@settings(max_examples=25, deadline=None)
@given(st.floats(0.6, 0.98), st.floats(-0.02, 0.02), st.floats(-0.05, 0.05))
def test_shift_preserves_trajectories(u_r, dx, du):
    params = TankParams()
    plant = tank_plant(params)
    ss = steady_state_for_input(u_r, params)
    sp = Setpoint(ss.H, [u_r])
    err = shift_to_error_coordinates(plant, sp)
    x = ss.H + dx
    u = np.array([u_r + du])
    np.testing.assert_allclose(err.step(x - ss.H, u - u_r) + ss.H, plant.step(x, u), atol=1e-13)


def test_shift_warns_on_non_equilibrium(caplog):
    params = TankParams()
    plant = tank_plant(params)
    ss = steady_state_for_input(0.8, params)
    shift_to_error_coordinates(plant, Setpoint(ss.H, [0.9]))
    assert "not a fixed point" in caplog.text


def test_error_origin_is_equilibrium():
    params = TankParams()
    ss = steady_state_for_input(0.862, params)
    err = shift_to_error_coordinates(tank_plant(params), Setpoint(ss.H, [0.862]))
    assert np.max(np.abs(err.step(np.zeros(3), np.zeros(1)))) < 1e-12
