import numpy as np
import pytest

from bcn_deform import blocks_local as bl
from bcn_deform.blocks_global import K_global
from bcn_deform.dynamics import (free_flow, global_ode, gradient, local_ode, local_then_global,
                                 projected_p_trajectory)
from bcn_deform.hamiltonians import all_h_global, lax
from bcn_deform.linalg import GroupPoint
from bcn_deform.params import CouplingParams, GlobalPoint, LocalPoint
from bcn_deform.sampling import random_global_point, random_local_point

# mild couplings keep the flows slow enough for short test runs
MILD = dict(x=0.2, u=-0.3, v=-0.2)
START = dict(first=(0.05, 0.3), gap=(0.05, 0.3), q_range=1.0)


def _start(n, seed, x=MILD["x"]):
    return random_local_point(np.random.default_rng(seed), x, n, **START)


def test_gradient_linear_and_quadratic():
    a = np.array([1.5, -2.0, 0.25])
    assert np.abs(gradient(lambda y: a @ y + 3, [0.3, 1.0, -2.0], h=0.5) - a).max() < 1e-12
    assert np.abs(gradient(lambda y: np.sum(y ** 2), [1.0, 2.0]) - [2, 4]).max() < 1e-9


def test_gradient_order():
    f = lambda y: np.sin(3 * y[0]) * np.exp(y[1])
    pt = np.array([0.4, 0.2])
    exact = np.array([3 * np.cos(1.2), np.sin(1.2)]) * np.exp(0.2)
    e1 = np.abs(gradient(f, pt, h=1e-2) - exact).max()
    e2 = np.abs(gradient(f, pt, h=5e-3) - exact).max()
    assert e1 / e2 == pytest.approx(4.0, rel=0.05)
    e4 = np.abs(gradient(f, pt, h=1e-2, order=4) - exact).max()
    assert e4 < e1 / 100


def test_free_flow_invariants():
    params = CouplingParams(2, 1.0, -0.3, 0.5)
    z0 = random_global_point(np.random.default_rng(1), 2)
    K0 = K_global(params, z0)
    assert np.allclose(free_flow(K0, 1, 0.0).K, K0.K, atol=1e-13)
    L0 = K0.b_R.conj().T @ K0.b_R
    h0 = [np.trace(np.linalg.matrix_power(L0, k)).real / (2 * k) for k in (1, 2)]
    for t in (0.3, 1.7):
        Kt = free_flow(K0, 2, t)
        assert np.abs(Kt.b_R - K0.b_R).max() < 1e-10
        Lt = Kt.b_R.conj().T @ Kt.b_R
        for k in (1, 2):
            assert np.trace(np.linalg.matrix_power(Lt, k)).real / (2 * k) == pytest.approx(h0[k - 1], rel=1e-10)
    with pytest.raises(ValueError):
        free_flow(GroupPoint(np.eye(4)), 3, 1.0)


def test_projection_starts_at_p_hat_and_stays_in_chamber():
    params = CouplingParams(3, 1.0, -0.3, 0.5)
    z0 = random_global_point(np.random.default_rng(2), 3)
    traj = projected_p_trajectory(params, z0, 1, np.linspace(0, 2, 201))
    assert np.allclose(traj.states[0], bl.p_hat_of_z(params, z0), atol=1e-10)
    assert all(bl.in_chamber(params.x, p, tol=1e-9) for p in traj.states)


def test_local_ode_matches_projection_and_conserves():
    params = CouplingParams(2, **MILD)
    pt = _start(2, 3)
    t = np.linspace(0, 1, 11)
    traj = local_ode(params, pt, 1, (0.0, 1.0), tol=1e-10, t_eval=t)
    proj = projected_p_trajectory(params, bl.z_of_local(params, pt), 1, t)
    assert np.abs(traj.p_hat() - proj.p_hat()).max() < 1e-6
    assert traj.drift() < 1e-8


def test_x_reflection():
    pt = _start(2, 4)
    a = local_ode(CouplingParams(2, **MILD), pt, 1, (0.0, 0.4), tol=1e-10, t_eval=[0.2, 0.4])
    b = local_ode(CouplingParams(2, -MILD["x"], MILD["u"], MILD["v"]), pt, 1, (0.0, 0.4),
                  tol=1e-10, t_eval=[0.2, 0.4])
    assert np.abs(a.states - b.states).max() < 1e-8


def test_global_ode_matches_local_and_projection():
    params = CouplingParams(2, **MILD)
    pt = _start(2, 5)
    z0 = bl.z_of_local(params, pt)
    t = np.linspace(0, 0.5, 6)
    glob = global_ode(params, z0, 2, (0.0, 0.5), tol=1e-11, t_eval=t)
    loc = local_ode(params, pt, 2, (0.0, 0.5), tol=1e-11, t_eval=t)
    proj = projected_p_trajectory(params, z0, 2, t)
    assert np.abs(glob.p_hat() - loc.p_hat()).max() < 1e-6
    assert np.abs(glob.p_hat() - proj.p_hat()).max() < 1e-6
    for i in range(len(t)):
        zl = bl.z_of_local(params, LocalPoint.from_vector(loc.states[i])).z
        assert np.abs(glob.z_at(i) - zl).max() < 1e-6


def test_global_ode_reversibility():
    params = CouplingParams(2, **MILD)
    z0 = bl.z_of_local(params, _start(2, 6))
    fwd = global_ode(params, z0, 1, (0.0, 0.5), tol=1e-11)
    back = global_ode(params, fwd.z_at(len(fwd.times) - 1), 1, (0.5, 0.0), tol=1e-11)
    assert np.abs(back.z_at(len(back.times) - 1) - z0.z).max() < 1e-7


def test_zero_span_returns_initial_state():
    params = CouplingParams(2, **MILD)
    pt = _start(2, 7)
    loc = local_ode(params, pt, 1, (0.0, 0.0))
    assert loc.states.shape == (1, 4) and np.allclose(loc.states[0], pt.as_vector())
    z0 = bl.z_of_local(params, pt)
    glob = global_ode(params, z0, 1, (0.0, 0.0))
    assert np.allclose(glob.z_at(0), z0.z)
    assert np.allclose(glob.conserved[0], all_h_global(params, z0.z))


def test_local_then_global_hands_over_at_wall():
    params = CouplingParams(2, **MILD)
    # a flow through z_1 = 0 meets the wall p_1 - p_2 = |x|/2 of the local chart
    zc = bl.z_of_local(params, _start(2, 9)).z.copy()
    zc[0] = 0
    back = global_ode(params, zc, 1, (0.0, -0.1), tol=1e-11)
    pt = bl.local_of_z(params, GlobalPoint(back.z_at(len(back.times) - 1)))
    segs = local_then_global(params, pt, 1, (0.0, 0.2), tol=1e-10, t_eval=np.linspace(0, 0.2, 5))
    assert [s.kind for s in segs] == ["local", "global"]
    assert max(s.drift() for s in segs) < 1e-7
    assert segs[0].times[-1] < segs[1].times[0]


def test_lax_is_invariant_along_global_flow():
    params = CouplingParams(2, **MILD)
    z0 = bl.z_of_local(params, _start(2, 8))
    traj = global_ode(params, z0, 1, (0.0, 0.4), tol=1e-11, t_eval=[0.0, 0.4])
    e0 = np.linalg.eigvalsh(lax(params, traj.z_at(0)))
    e1 = np.linalg.eigvalsh(lax(params, traj.z_at(1)))
    assert np.abs(e0 - e1).max() < 1e-8 * (1 + np.abs(e0).max())


def test_initial_state_types():
    with pytest.raises(ValueError):
        GlobalPoint([0.1, 1.0])
