"""
Momentum map, its constraint value and the on-shell relations.

The admissibility oracle expresses ``|w_m|^2`` (with ``w = rho^dagger v_hat``)
through ``p_hat`` alone; a point belongs to the closed chamber exactly when
every such value is non-negative and ``p_1 <= 0``.
"""

from dataclasses import dataclass

import numpy as np

from .blocks_local import nu_matrix, v_hat
from .errors import CoincidentComponents, OffShell
from .linalg import GroupPoint, cartan_position, polar

ORACLE_TOL = 1e-12
OFFSHELL_TOL = 1e-8


@dataclass(frozen=True)
class MomentumValue:
    """Block-diagonal parts of ``b_L`` and ``b_R``."""

    bL_proj: np.ndarray
    bR_proj: np.ndarray

    def distance(self, other):
        """Max-entry distance to another momentum value."""
        return float(max(np.abs(self.bL_proj - other.bL_proj).max(),
                         np.abs(self.bR_proj - other.bR_proj).max()))


def _block_part(b):
    n = b.shape[0] // 2
    out = np.zeros_like(b)
    out[:n, :n] = b[:n, :n]
    out[n:, n:] = b[n:, n:]
    return out


def momentum_plus(K):
    """``(pi(b_L), pi(b_R))`` where ``pi`` keeps the diagonal blocks."""
    gp = K if isinstance(K, GroupPoint) else GroupPoint(K)
    return MomentumValue(_block_part(gp.b_L), _block_part(gp.b_R))


def mu_target(params):
    n = params.n
    I = np.eye(n)
    Z = np.zeros((n, n))
    mu_L = np.block([[np.exp(params.u) * nu_matrix(params.x, n), Z], [Z, np.exp(-params.u) * I]])
    mu_R = np.block([[np.exp(params.v) * I, Z], [Z, np.exp(-params.v) * I]])
    return MomentumValue(mu_L.astype(complex), mu_R.astype(complex))


def constraint_residual(K, params):
    """``max |Phi_+(K) - mu|`` over all entries."""
    return momentum_plus(K).distance(mu_target(params))


@dataclass(frozen=True)
class OnShellReport:
    q: np.ndarray
    residuals: dict

    @property
    def max_residual(self):
        return max(self.residuals.values())


def _rel(a, ref):
    return float(np.abs(a - ref).max() / max(1.0, np.abs(ref).max()))


def onshell_relations(K, params):
    """Check the block relations satisfied by an on-shell element in section gauge.

    ``K`` must have the form ``diag(rho, 1) C(q) [[e^{-v}, alpha], [0, e^{v}]]``,
    as produced by the local section. The report contains max-entry residuals,
each divided by ``max(1, largest reference entry)``, of

    * ``Lambda^2 = e^{-2u} - e^{-2v} sin^2 q`` for the polar part of ``Omega = K_22``,
    * ``Omega = i sin q alpha + e^{v} cos q``,
    * ``K K^dagger = b_L b_L^dagger`` with ``b_L`` rebuilt from ``chi``,
    * agreement of the rebuilt ``b_L`` with the Iwasawa factor,
    * ``rho sin^{-1} T^dagger sin^2 T sin^{-1} rho^dagger = nu nu^dagger``.
    """
    gp = K if isinstance(K, GroupPoint) else GroupPoint(K)
    n = params.n
    x, u, v = params.x, params.u, params.v
    if gp.n != n:
        raise ValueError("dimension mismatch between K and params")
    dist = momentum_plus(gp).distance(mu_target(params))
    if dist >= OFFSHELL_TOL:
        raise OffShell(f"constraint residual {dist:.3e}")
    M = gp.K
    g_L = gp.g_L
    q = cartan_position(g_L, strict=True).q
    sin_q = np.sin(q)
    cos_q = np.cos(q)
    # section gauge: lower-left block of g_L is i sin q
    S = g_L[n:, :n] / 1j
    if np.abs(S - np.diag(np.diag(S))).max() > 1e-8:
        raise OffShell("K is not in section gauge")
    rho = g_L[:n, n:] @ np.diag(1 / (1j * sin_q))
    alpha = np.linalg.inv(gp.b_R)[:n, n:]
    Omega = M[n:, n:]
    Lam, T = polar(Omega)
    res = {}
    res["lambda_squared"] = _rel(Lam @ Lam, np.diag(np.exp(-2 * u) - np.exp(-2 * v) * sin_q ** 2))
    res["omega"] = _rel(Omega, 1j * np.diag(sin_q) @ alpha + np.exp(v) * np.diag(cos_q))
    chi = rho @ np.diag(1 / (1j * sin_q)) @ (np.exp(-u) * np.diag(cos_q) - np.exp(u + v) * Omega.conj().T)
    Z = np.zeros((n, n))
    b_L = np.block([[np.exp(u) * nu_matrix(x, n), chi], [Z, np.exp(-u) * np.eye(n)]])
    res["kk_dagger"] = _rel(b_L @ b_L.conj().T, M @ M.conj().T)
    res["b_left"] = _rel(gp.b_L, b_L)
    Sinv = np.diag(1 / sin_q)
    key = rho @ Sinv @ T.conj().T @ np.diag(sin_q ** 2) @ T @ Sinv @ rho.conj().T
    nu = nu_matrix(x, n)
    res["key_equation"] = _rel(key, nu @ nu.T)
    return OnShellReport(q=q, residuals=res)


def w_vector(x, rho):
    """``w = rho^dagger v_hat(x)``."""
    rho = np.asarray(rho)
    return rho.conj().T @ v_hat(x, rho.shape[0])


def w_squared_oracle(x, p_hat):
    """``|w_m|^2`` predicted from ``p_hat``.

    ``sgn(x)(1 - e^{-x}) prod_{j != m} (e^{2p_j + x} - e^{2p_m}) / (e^{2p_j} - e^{2p_m})``
    """
    p = np.asarray(p_hat, dtype=float).reshape(-1)
    n = p.size
    e = np.exp(2 * p)
    diff = e[:, None] - e[None, :]
    off = ~np.eye(n, dtype=bool)
    if np.any(diff[off] == 0):
        raise CoincidentComponents("p_hat has coincident components")
    num = np.exp(x) * e[:, None] - e[None, :]
    ratio = np.where(off, num / np.where(off, diff, 1.0), 1.0)
    return np.sign(x) * -np.expm1(-x) * np.prod(ratio, axis=0)


def char_poly_residual(x, p_hat, w, lam):
    """Residual of the characteristic-polynomial identity linking ``p_hat`` and ``w``.

    ``prod(e^{2p_j} - lam) = prod(e^{2p_j - x} - lam)
    + sgn(x) sum_j e^{2p_j} |w_j|^2 prod_{k != j}(e^{2p_k - x} - lam)``
    """
    p = np.asarray(p_hat, dtype=float)
    w2 = np.abs(np.asarray(w)) ** 2
    lam = np.asarray(lam, dtype=complex).reshape(-1)
    e = np.exp(2 * p)
    f = e * np.exp(-x)
    lhs = np.prod(e[None, :] - lam[:, None], axis=1)
    shifted = f[None, :] - lam[:, None]
    rhs = np.prod(shifted, axis=1)
    n = p.size
    for j in range(n):
        others = np.prod(np.delete(shifted, j, axis=1), axis=1)
        rhs = rhs + np.sign(x) * e[j] * w2[j] * others
    return np.abs(lhs - rhs)


def admissible(x, p_hat):
    """Chamber membership decided through the ``|w|^2`` oracle."""
    p = np.asarray(p_hat, dtype=float).reshape(-1)
    if p.size > 1 and not np.all(np.diff(p) < 0):
        return False
    if p[0] > ORACLE_TOL:
        return False
    return bool(np.all(w_squared_oracle(x, p) >= -ORACLE_TOL))
