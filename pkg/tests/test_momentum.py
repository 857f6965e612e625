from types import SimpleNamespace

import numpy as np
import pytest

from bcn_deform import blocks_global as bg
from bcn_deform import blocks_local as bl
from bcn_deform.errors import OffShell
from bcn_deform.momentum import (admissible, char_poly_residual, constraint_residual, momentum_plus,
                                 mu_target, onshell_relations, w_squared_oracle, w_vector)
from bcn_deform.params import CouplingParams, LocalPoint
from bcn_deform.sampling import random_local_point, random_p_hat


def test_identity_momentum():
    m = momentum_plus(np.eye(4))
    assert np.allclose(m.bL_proj, np.eye(4)) and np.allclose(m.bR_proj, np.eye(4))


def test_target_values():
    mu = mu_target(CouplingParams(2, 1.0, -0.3, 0.5))
    assert np.allclose(mu.bR_proj, np.diag(np.exp([0.5, 0.5, -0.5, -0.5])), atol=1e-15)
    assert np.linalg.det(mu.bL_proj) == pytest.approx(1.0, abs=1e-13)
    assert np.linalg.det(mu.bR_proj) == pytest.approx(1.0, abs=1e-13)
    near = mu_target(SimpleNamespace(n=2, x=1e-300, u=0.0, v=0.0))
    assert np.allclose(near.bL_proj, np.eye(4)) and np.allclose(near.bR_proj, np.eye(4))


@pytest.mark.parametrize("x", [-0.9, 0.9])
def test_equivariance(x):
    params = CouplingParams(3, x, -0.3, 0.5)
    rng = np.random.default_rng(1)
    pt = random_local_point(rng, x, 3)
    K = bl.K_local(params, pt).K
    for _ in range(5):
        eta_L, eta_R = bg.gauge_factors(x, rng.uniform(-3, 3, 3))
        moved = eta_L @ K @ np.linalg.inv(eta_R)
        assert constraint_residual(moved, params) < 1e-10


@pytest.mark.parametrize("n", [1, 2, 3, 4])
@pytest.mark.parametrize("x", [-0.7, 1.1])
def test_onshell_relations(n, x):
    params = CouplingParams(n, x, -0.3, 0.5)
    rng = np.random.default_rng(n)
    for _ in range(10):
        rep = onshell_relations(bl.K_local(params, random_local_point(rng, x, n)), params)
        assert rep.max_residual < 1e-10, rep.residuals
        assert rep.q[-1] > 0


def test_onshell_rejects_off_constraint():
    params = CouplingParams(2, 1.0, -0.3, 0.5)
    with pytest.raises(OffShell):
        onshell_relations(np.eye(4), params)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
@pytest.mark.parametrize("x", [-1.3, 0.6])
def test_w_norm_and_oracle(n, x):
    rng = np.random.default_rng(5 + n)
    for _ in range(10):
        p = random_p_hat(rng, x, n)
        w2 = np.abs(w_vector(x, bl.section_rho(x, p))) ** 2
        assert np.sum(w2) == pytest.approx(np.sign(x) * np.exp(-x) * np.expm1(n * x), abs=1e-12)
        assert np.abs(w2 - w_squared_oracle(x, p)).max() < 1e-10
        lam = np.exp(1j * rng.uniform(-np.pi, np.pi, 20))
        assert char_poly_residual(x, p, w_vector(x, bl.section_rho(x, p)), lam).max() < 1e-10


def test_oracle_vanishes_on_wall():
    assert w_squared_oracle(1.0, [-0.2, -0.7, -1.9])[0] == pytest.approx(0.0, abs=1e-15)


def test_admissible_examples():
    assert admissible(1.0, [-0.1, -1.1])
    assert not admissible(1.0, [-0.1, -0.3])
    assert not admissible(1.0, [0.2, -1.0])


def test_admissible_matches_walls():
    rng = np.random.default_rng(9)
    for x in (-0.8, 1.0):
        for _ in range(10_000):
            p = rng.uniform(-3, 0.5, 2)
            if p[0] == p[1]:
                continue
            assert admissible(x, p) == bl.in_chamber(x, p)


def test_single_particle_key_equation():
    params = CouplingParams(1, 0.7, -0.3, 0.5)
    rep = onshell_relations(bl.K_local(params, LocalPoint([-0.6], [1.1])), params)
    assert rep.residuals["key_equation"] < 1e-12
