import numpy as np
import pytest

from bcn_deform import blocks_global as bg
from bcn_deform import blocks_local as bl
from bcn_deform.linalg import cartan_position
from bcn_deform.momentum import constraint_residual
from bcn_deform.params import CouplingParams, LocalPoint
from bcn_deform.sampling import random_global_point, random_local_point
from bcn_deform.verify import gauge_residuals


def test_j_factor():
    assert bg.j_factor(0.0) == 1.0
    y = np.array([0.99e-4, 1.01e-4, 0.3])
    assert np.allclose(bg.j_factor(y), np.sqrt(np.sinh(y) / y), rtol=1e-15, atol=0)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_q_at_origin(n):
    x = 0.9
    Q = bg.q_matrix(x, np.zeros(n))
    for j in range(n):
        for k in range(j + 1, n):
            a = (k - j) * x / 2
            assert Q[j, k] == pytest.approx(np.sqrt(np.sinh(a - x / 2) / np.sinh(a)), abs=1e-15)
        if j + 1 < n:
            assert Q[j, j + 1] == 0.0


def test_q_matches_position_differences():
    params = CouplingParams(4, 0.7, -0.3, 0.5)
    rng = np.random.default_rng(1)
    for _ in range(10):
        pt = random_local_point(rng, params.x, 4)
        Q = bg.q_matrix(params.x, bl.z_of_local(params, pt))
        d = pt.p_hat[:, None] - pt.p_hat[None, :]
        j, k = np.triu_indices(4, 1)
        assert np.abs(Q[j, k] - np.sqrt(np.sinh(d[j, k] - params.x / 2) / np.sinh(d[j, k]))).max() < 1e-12


def test_gamma_real_point():
    z = np.array([0.4, 0.7, 0.6])
    g = bg.gamma_hat(1.0, z)
    assert np.all(np.abs(g.imag) < 1e-15)
    assert g[0, 0].real == pytest.approx(0.6 * np.sqrt(2 - 0.36), abs=1e-15)


@pytest.mark.parametrize("x", [-0.8, 0.8])
def test_blocks_unitary(x):
    rng = np.random.default_rng(2)
    for _ in range(20):
        z = random_global_point(rng, 3).z
        for M in (bg.zeta_hat(x, z), bg.theta_hat(x, z)):
            assert np.abs(M @ M.conj().T - np.eye(3)).max() < 1e-12


@pytest.mark.parametrize("x", [-0.8, 0.8])
def test_block_identities(x):
    params = CouplingParams(3, x, -0.3, 0.5)
    rng = np.random.default_rng(3)
    for _ in range(30):
        res = gauge_residuals(params, random_local_point(rng, x, 3))
        assert max(res.values()) < 1e-10, res


def test_alpha_subdiagonal_depends_on_moduli_only():
    params = CouplingParams(3, 0.8, -0.3, 0.5)
    rng = np.random.default_rng(4)
    z = random_global_point(rng, 3).z
    a = bg.alpha_hat(params, z)
    for _ in range(5):
        b = bg.alpha_hat(params, np.abs(z) * np.exp(1j * rng.uniform(-np.pi, np.pi, 3)))
        for k in range(2):
            assert b[k + 1, k] == pytest.approx(a[k + 1, k], abs=1e-12)
        assert b[0, 2] == pytest.approx(a[0, 2], abs=1e-12)
        assert abs(a[0, 2]) > 0 and np.all(np.abs(np.diag(a, -1)) > 0)


def test_origin_is_finite_and_on_shell():
    for x in (-1.0, 1.0):
        params = CouplingParams(3, x, -0.3, 0.5)
        data = bg.global_section_data(params, np.zeros(3))
        for M in (data.zeta_hat, data.theta_hat, data.gamma_hat, data.alpha_hat):
            assert np.all(np.isfinite(M))
        K = bg.K_global(params, np.zeros(3))
        assert abs(np.linalg.det(K.K) - 1) < 1e-12
        assert constraint_residual(K, params) < 1e-10


def test_tau_factors():
    tau, tau_t = bg.tau_factors(0.5, np.zeros(3))
    assert np.allclose(tau, np.eye(3)) and np.allclose(tau_t, np.eye(3))
    a, b = 0.4, -1.3
    tau, tau_t = bg.tau_factors(0.5, [a, b])
    assert np.allclose(tau, np.diag([np.exp(1j * b), 1]))
    assert np.allclose(tau_t, np.diag([1, np.exp(1j * b)]))


def test_gauge_factors_unitary():
    rng = np.random.default_rng(5)
    for x in (-0.5, 0.5):
        eta_L, eta_R = bg.gauge_factors(x, rng.uniform(-3, 3, 3))
        for M in (eta_L, eta_R):
            assert np.abs(M @ M.conj().T - np.eye(6)).max() < 1e-12


@pytest.mark.parametrize("x", [-1.2, 1.2])
def test_global_constraint_with_zero_components(x):
    params = CouplingParams(3, x, -0.3, 0.5)
    rng = np.random.default_rng(6)
    for zeros in (0, 1, 2, 3):
        for _ in range(5):
            z = random_global_point(rng, 3, zeros=zeros)
            assert constraint_residual(bg.K_global(params, z), params) < 1e-10


def test_batch_matches_single():
    params = CouplingParams(3, -0.6, -0.3, 0.5)
    rng = np.random.default_rng(7)
    Z = np.array([random_global_point(rng, 3).z for _ in range(4)])
    batch = bg.batch_alpha_hat(params.x, params.u, params.v, Z)
    for i in range(4):
        assert np.allclose(batch[i], bg.alpha_hat(params, Z[i]), atol=1e-14)


def test_section_values_agree_with_local_chart():
    params = CouplingParams(2, 1.0, -0.3, 0.5)
    pt = LocalPoint([-0.2, -1.0], [0.3, -0.7])
    K = bg.K_global(params, bl.z_of_local(params, pt))
    q = cartan_position(K.g_L).q
    assert np.allclose(np.log(np.sin(q)), pt.p_hat, atol=1e-12)
