import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_theta, quadratic_theta, small_random_theta
from jkoflow.flow_integrator import (
    AugmentedState, IntegratorConfig, flow_forward, flow_forward_batch, flow_inverse, flow_inverse_batch, rhs,
)
from jkoflow.potential_net import NetConfig, NumericalOverflowError, velocity

FWD64 = IntegratorConfig(nt=64)
INV64 = IntegratorConfig(nt=64, direction="inverse")
NET = NetConfig(2, 3)


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(T=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(nt=0)
    with pytest.raises(ValueError):
        IntegratorConfig(direction="sideways")


def test_rhs_quadratic():
    d = rhs(quadratic_theta(NET), AugmentedState(np.array([1.0, 0.0]), 0.0, 0.0), 0.0, NET)
    np.testing.assert_allclose(d.z, [-1, 0], atol=1e-15)
    assert d.ell == pytest.approx(-2.0, abs=1e-14)
    assert d.kin == pytest.approx(0.5, abs=1e-15)


def test_rhs_zero_field():
    d = rhs(np.zeros(40), AugmentedState(np.array([0.3, -0.7]), 1.0, 2.0), 0.5, NET)
    assert not d.z.any() and d.ell == 0.0 and d.kin == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_rhs_divergence_matches_fd_trace(seed):
    theta = small_random_theta(NET, seed)
    z, t, h = np.random.default_rng(seed).uniform(-1, 1, 2), 0.6, 1e-5
    J = np.column_stack([(velocity(theta, z + h * e, t, NET) - velocity(theta, z - h * e, t, NET)) / (2 * h)
                         for e in np.eye(2)])
    assert rhs(theta, AugmentedState(z, 0.0, 0.0), t, NET).ell == pytest.approx(np.trace(J), rel=1e-5)


def test_linear_flow_analytic_solution():
    s = flow_forward(quadratic_theta(NET), [1.0, 0.0], FWD64, NET)
    np.testing.assert_allclose(s.z, [np.exp(-1), 0.0], atol=1e-6)
    assert s.ell == pytest.approx(-2.0, abs=1e-6)
    assert s.kin == pytest.approx((1 - np.exp(-2)) / 4, abs=1e-6)


def test_zero_field_is_identity():
    x = np.array([0.4, -1.3])
    s = flow_forward(np.zeros(40), x, FWD64, NET)
    assert s.z.tobytes() == x.tobytes() and s.ell == 0.0 and s.kin == 0.0
    assert flow_inverse(np.zeros(40), x, INV64, NET).tobytes() == x.tobytes()


def test_single_rk4_step_on_decay():
    net = NetConfig(1, 2)
    s = flow_forward(quadratic_theta(net), [1.0], IntegratorConfig(T=0.1, nt=1), net)
    # 1 - h + h^2/2 - h^3/6 + h^4/24 at h = 0.1
    assert s.z[0] == pytest.approx(0.9048375, abs=1e-7)


def test_rk4_fourth_order():
    theta = quadratic_theta(NET)
    errs = [abs(flow_forward(theta, [1.0, 0.0], IntegratorConfig(nt=nt), NET).z[0] - np.exp(-1)) for nt in (4, 8)]
    assert 12 <= errs[0] / errs[1] <= 20


def test_linear_flow_inverse():
    x = flow_inverse(quadratic_theta(NET), [np.exp(-1), 0.0], INV64, NET)
    np.testing.assert_allclose(x, [1.0, 0.0], atol=1e-5)


def test_direction_is_enforced():
    with pytest.raises(ValueError):
        flow_forward(np.zeros(40), [0.0, 0.0], INV64, NET)
    with pytest.raises(ValueError):
        flow_inverse(np.zeros(40), [0.0, 0.0], FWD64, NET)


@pytest.mark.parametrize("seed", range(3))
def test_round_trip_random_small_theta(seed):
    theta = small_random_theta(NET, seed, scale=0.2)
    X = np.random.default_rng(seed).uniform(-2, 2, (100, 2))
    back = flow_inverse_batch(theta, flow_forward_batch(theta, X, FWD64, NET).z, INV64, NET)
    assert np.max(np.abs(back - X)) <= 1e-4


@pytest.mark.parametrize("seed", range(3))
def test_jacobi_identity(seed):
    theta = small_random_theta(NET, seed, scale=0.2)
    x, h = np.random.default_rng(seed).uniform(-1, 1, 2), 1e-5
    J = np.column_stack([(flow_forward(theta, x + h * e, FWD64, NET).z - flow_forward(theta, x - h * e, FWD64, NET).z)
                         / (2 * h) for e in np.eye(2)])
    det = abs(np.linalg.det(J))
    assert abs(np.exp(flow_forward(theta, x, FWD64, NET).ell) - det) / det <= 1e-3


def test_kinetic_nondecreasing_in_horizon():
    theta = small_random_theta(NET, 4)
    kins = [flow_forward(theta, [0.5, 0.5], IntegratorConfig(T=T, nt=32), NET).kin for T in (0.25, 0.5, 1.0)]
    assert kins[0] >= 0 and kins == sorted(kins)


def test_batch_matches_rows_and_is_order_free():
    theta = small_random_theta(NET, 1)
    X = np.random.default_rng(1).standard_normal((17, 2))
    batch = flow_forward_batch(theta, X, FWD64, NET)
    rows = [flow_forward(theta, x, FWD64, NET) for x in X[:3]]
    for i, r in enumerate(rows):
        np.testing.assert_allclose(batch.z[i], r.z, rtol=0, atol=1e-14)
    perm = np.random.default_rng(2).permutation(17)
    shuffled = flow_forward_batch(theta, X[perm], FWD64, NET)
    np.testing.assert_allclose(shuffled.z, batch.z[perm], rtol=0, atol=1e-14)
    np.testing.assert_allclose(shuffled.ell, batch.ell[perm], rtol=0, atol=1e-14)


def test_deterministic():
    theta = small_random_theta(NET, 2)
    X = np.random.default_rng(0).standard_normal((50, 2))
    a, b = flow_forward_batch(theta, X, FWD64, NET), flow_forward_batch(theta, X, FWD64, NET)
    assert a.z.tobytes() == b.z.tobytes() and a.ell.tobytes() == b.ell.tobytes()


def test_overflow_reports_step():
    theta = make_theta(NET, A=-30 * np.eye(3))  # v = 900 z blows up
    with pytest.raises(NumericalOverflowError, match="step"):
        flow_forward_batch(theta, np.ones((3, 2)), FWD64, NET)


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        flow_forward_batch(np.zeros(40), np.ones((3, 3)), FWD64, NET)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.25, 2.0))
def test_linear_flow_is_exponential_decay(x1, x2, T):
    s = flow_forward(quadratic_theta(NET), [x1, x2], IntegratorConfig(T=T, nt=64), NET)
    np.testing.assert_allclose(s.z, np.exp(-T) * np.array([x1, x2]), atol=1e-7)
    assert s.ell == pytest.approx(-2 * T, abs=1e-12)
