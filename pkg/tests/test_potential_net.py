import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_theta, quadratic_theta, small_random_theta
from jkoflow.potential_net import (
    NetConfig, NumericalOverflowError, init_params, load_params, pack, param_count, params_from_bytes,
    params_to_bytes, potential, save_params, sigma, sigma_tanh, unpack, velocity, vjp_params,
)


def fd_grad(f, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@pytest.mark.parametrize("m,count", [(3, 40), (4, 53), (5, 68), (8, 125), (16, 365)])
def test_param_count_matches_published_widths(m, count):
    assert param_count(NetConfig(2, m)) == count


@given(st.integers(1, 40))
def test_param_count_closed_form(m):
    assert param_count(NetConfig(2, m)) == m * m + 6 * m + 13


def test_invalid_config_rejected():
    with pytest.raises(ValueError):
        NetConfig(0, 3)
    with pytest.raises(ValueError):
        NetConfig(2, 3, n_resblocks=0)


def test_init_is_seed_deterministic(net2):
    a, b = init_params(net2, 7), init_params(net2, 7)
    assert a.tobytes() == b.tobytes()
    assert a.shape == (40,)
    assert not np.array_equal(a, init_params(net2, 8))


def test_init_layout(net2):
    p = unpack(init_params(net2, 0), net2)
    np.testing.assert_array_equal(p["A"], 0.1 * np.eye(3))
    for name in ("b0", "b1", "w", "b", "c"):
        assert not p[name].any()


@given(st.integers(1, 6), st.integers(1, 3), st.integers(0, 2**31))
def test_pack_unpack_roundtrip(d, blocks, seed):
    net = NetConfig(d, 4, n_resblocks=blocks)
    theta = np.random.default_rng(seed).standard_normal(param_count(net))
    assert pack(unpack(theta, net), net).tobytes() == theta.tobytes()


def test_unpack_rejects_wrong_length(net2):
    with pytest.raises(ValueError):
        unpack(np.zeros(41), net2)


def test_quadratic_potential(net2):
    out = potential(quadratic_theta(net2), [1.0, 0.0], 0.0, net2)
    assert out.phi == pytest.approx(0.5, abs=1e-15)
    np.testing.assert_allclose(out.grad_s, [1, 0, 0], atol=1e-15)
    assert out.lap_z == pytest.approx(2.0, abs=1e-15)


def test_linear_in_time_potential(net2):
    theta = make_theta(net2, b=[0, 0, 1])
    out = potential(theta, [0.3, -2.0], 0.7, net2)
    assert out.phi == pytest.approx(0.7, abs=1e-15)
    np.testing.assert_allclose(out.grad_s, [0, 0, 1], atol=1e-15)
    assert out.lap_z == 0.0


def test_quadratic_velocity_and_trace(net2):
    theta = quadratic_theta(net2)
    np.testing.assert_allclose(velocity(theta, [1.0, 0.0], 0.3, net2), [-1, 0], atol=1e-15)
    for z in ([0.0, 0.0], [2.0, -1.0]):
        assert -potential(theta, z, 0.0, net2).lap_z == pytest.approx(-2.0, abs=1e-14)


@pytest.mark.parametrize("seed", range(100))
def test_grad_and_laplacian_against_finite_differences(seed):
    net = NetConfig(2, 5)
    rng = np.random.default_rng(1000 + seed)
    theta = small_random_theta(net, seed)
    s = rng.uniform(-2, 2, 3)
    s[2] = rng.uniform(0, 1)
    phi = lambda x: potential(theta, x[:2], x[2], net).phi
    out = potential(theta, s[:2], s[2], net)
    fd = fd_grad(phi, s)
    assert np.linalg.norm(out.grad_s - fd) / np.linalg.norm(fd) <= 1e-5

    h = 1e-4
    lap_fd = sum((phi(s + h * e) - 2 * phi(s) + phi(s - h * e)) / h**2 for e in np.eye(3)[:2])
    assert abs(out.lap_z - lap_fd) / max(1.0, abs(lap_fd)) <= 1e-4


@pytest.mark.parametrize("seed", range(10))
def test_velocity_jacobian_trace_matches_laplacian(seed):
    net = NetConfig(2, 4)
    theta = small_random_theta(net, seed)
    z, t = np.random.default_rng(seed).uniform(-1.5, 1.5, 2), 0.4
    J = np.column_stack([fd_grad(lambda x: velocity(theta, x, t, net)[i], z) for i in range(2)]).T
    lap = potential(theta, z, t, net).lap_z
    assert np.trace(J) == pytest.approx(-lap, rel=1e-5)


def test_without_readout_laplacian_is_partial_trace_of_AtA():
    net = NetConfig(3, 4)
    rng = np.random.default_rng(0)
    A = rng.standard_normal((4, 4))
    theta = make_theta(net, A=A, K0=rng.standard_normal((4, 4)), b=rng.standard_normal(4))
    out = potential(theta, rng.standard_normal(3), 0.5, net)
    assert out.lap_z == np.trace((A.T @ A)[:3, :3])


def test_sigma_derivative_is_tanh():
    import jax

    x = np.linspace(-30, 30, 2001)
    s, t = sigma_tanh(x)
    np.testing.assert_allclose(np.asarray(t), np.tanh(x), rtol=0, atol=4e-16)
    np.testing.assert_allclose(np.asarray(s), np.logaddexp(x, -x), rtol=1e-15, atol=0)
    dsig = jax.vmap(jax.grad(sigma))(x)
    np.testing.assert_allclose(np.asarray(dsig), np.tanh(x), rtol=0, atol=4e-16)
    assert float(jax.grad(jax.grad(sigma))(0.0)) == 1.0


def test_sigma_is_stable_for_large_inputs():
    s, _ = sigma_tanh(np.array([1e6, -1e6]))
    np.testing.assert_allclose(np.asarray(s), [1e6, 1e6])


def test_non_finite_output_is_reported(net2):
    theta = make_theta(net2, A=1e200 * np.eye(3))
    with pytest.raises(NumericalOverflowError):
        potential(theta, [1e200, 0.0], 0.0, net2)


def test_vjp_zero_cotangent_is_zero(net2):
    g = vjp_params(small_random_theta(net2, 0), [0.5, 0.1], 0.2, net2)
    assert not g.any()


def test_vjp_constant_term(net2):
    g = vjp_params(quadratic_theta(net2), [0.5, 0.1], 0.2, net2, cot_phi=1.0)
    assert unpack(g, net2)["c"][0] == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_vjp_against_finite_differences(seed):
    net = NetConfig(2, 3)
    rng = np.random.default_rng(seed)
    theta = small_random_theta(net, seed)
    z, t = rng.uniform(-1, 1, 2), 0.3
    cp, cg, cl = rng.standard_normal(), rng.standard_normal(3), rng.standard_normal()

    def scalar(th):
        o = potential(th, z, t, net)
        return cp * o.phi + cg @ o.grad_s + cl * o.lap_z

    g = vjp_params(theta, z, t, net, cp, cg, cl)
    fd = fd_grad(scalar, theta)
    assert np.max(np.abs(g - fd)) / np.max(np.abs(fd)) <= 1e-5


def test_serialization_roundtrip(tmp_path):
    net = NetConfig(3, 5, n_resblocks=2, resnet_step=0.5)
    theta = small_random_theta(net, 3)
    blob = params_to_bytes(theta, net)
    back, net2 = params_from_bytes(blob)
    assert net2 == net and back.tobytes() == theta.tobytes()
    save_params(tmp_path / "p.bin", theta, net)
    back, _ = load_params(tmp_path / "p.bin")
    assert back.tobytes() == theta.tobytes()


def test_truncated_blob_rejected(net2):
    blob = params_to_bytes(init_params(net2, 0), net2)
    with pytest.raises(ValueError):
        params_from_bytes(blob[:-8])
