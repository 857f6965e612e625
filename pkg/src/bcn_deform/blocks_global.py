"""
Smooth building blocks on the global model ``C^{n-1} x D`` and the global
section ``K_global(z)``.

Indices are 0-based throughout: ``q_matrix(x, z)[j, k]`` is the factor
``Q_{j+1, k+1}`` in one-based notation. Everything here stays finite when
some ``z_j`` vanish; only the local chart degenerates there.

The ``batch_*`` functions accept ``z`` of shape ``(B, n)`` and return arrays
with a leading batch axis; finite-difference stencils use them to evaluate
all displaced points in one pass.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .blocks_local import (_angle_block, _block_diag, _triangular_block, kappa_matrix,
                           pivot_index, sqrt_nonneg)
from .errors import CouplingViolation, DomainViolation, ZeroDeformation
from .linalg import GroupPoint
from .params import GlobalPoint

_J_SWITCH = 1e-4


def _as_z(z):
    if isinstance(z, GlobalPoint):
        return z.z
    z = np.asarray(z, dtype=complex).reshape(-1)
    if abs(z[-1]) >= 1:
        raise DomainViolation("|z_n| must be < 1")
    return z


def j_factor(y):
    """``sqrt(sinh(y)/y)`` with ``J(0) = 1``; Taylor series for ``|y| < 1e-4``."""
    y = np.asarray(y, dtype=float)
    small = np.abs(y) < _J_SWITCH
    safe = np.where(small, 1.0, y)
    y2 = y * y
    series = 1 + y2 / 12 + y2 * y2 / 1440 + y2 * y2 * y2 / 24192
    out = np.where(small, series, np.sqrt(np.sinh(safe) / safe))
    return out if out.ndim else float(out)


def batch_p_hat(x, Z):
    """``p_hat(z)`` for each row of ``Z``."""
    a2 = np.abs(Z) ** 2
    p = np.empty(a2.shape)
    p[:, 0] = np.log1p(-a2[:, -1])
    p[:, 1:] = p[:, :1] - np.cumsum(a2[:, :-1] + abs(x) / 2, axis=1)
    return p


def _partial_sums(Z):
    a2 = np.abs(Z) ** 2
    return a2, np.concatenate([np.zeros((Z.shape[0], 1)), np.cumsum(a2, axis=1)], axis=1)


@lru_cache(maxsize=None)
def _tables(n):
    j, k = np.indices((n, n))
    idx = np.arange(n)
    return {
        "lo": np.minimum(j, k), "hi": np.maximum(j, k), "upper": j < k, "diag": j == k,
        "m": k - j - 1,
        # entries dropped from the column products, for x > 0 and x < 0
        "excl+": (idx[None, :] == idx[:, None]) | (idx[None, :] == idx[:, None] + 1),
        "excl-": (idx[None, :] == idx[:, None]) | (idx[None, :] == idx[:, None] - 1),
        "keep": [(idx != r) & (idx != r + 1) for r in range(n - 1)],
    }


def _q_from_sums(x, cs, t):
    s = cs[:, t["hi"]] - cs[:, t["lo"]] + (t["hi"] - t["lo"]) * abs(x) / 2
    # j < k uses -x/2; j > k is Q_kj(-x), i.e. +x/2
    shift = np.where(t["upper"], -x / 2, x / 2)
    diag = t["diag"]
    rad = np.where(diag, 1.0, np.sinh(s + shift) / np.sinh(np.where(diag, 1.0, s)))
    return sqrt_nonneg(rad, "radicand in Q")


def batch_q_matrix(x, Z):
    """``Q_jk(x, z)`` for each row of ``Z``; diagonal entries are 1.

    ``Q(-x, z)`` is the transpose of ``Q(x, z)``.
    """
    _, cs = _partial_sums(Z)
    return _q_from_sums(x, cs, _tables(Z.shape[1]))


def _column(x, Z, Q, t):
    B, n = Z.shape
    a = pivot_index(x, n)
    excl = t["excl+"] if x > 0 else t["excl-"]
    prodQ = np.prod(np.where(excl, 1.0, Q), axis=2)
    # w_j = z_j for x > 0, conj(z_{j-1}) for x < 0, on the non-pivot rows
    w = np.zeros((B, n), dtype=complex)
    if n > 1:
        if x > 0:
            w[:, :-1] = Z[:, :-1]
        else:
            w[:, 1:] = np.conj(Z[:, :-1])
    y = np.abs(w) ** 2
    factor = w * j_factor(y) / np.sqrt(np.sinh(y + abs(x) / 2))
    factor[:, a] = 1.0
    c = np.sqrt(np.sinh(abs(x) / 2) / np.sinh(n * abs(x) / 2))
    return c * prodQ * factor


def batch_zeta_hat_column(x, Z):
    if x == 0:
        raise ZeroDeformation("x must be non-zero")
    return _column(x, Z, batch_q_matrix(x, Z), _tables(Z.shape[1]))


def _batch_completion(col, a):
    n = col.shape[1]
    Zm = np.eye(n, dtype=complex)[None] - col[:, :, None] * col.conj()[:, None, :] / (1 + col[:, a])[:, None, None]
    Zm[:, :, a] = col
    Zm[:, a, :] = -col.conj()
    Zm[:, a, a] = col[:, a]
    return Zm


def batch_zeta_hat(x, Z):
    return _batch_completion(batch_zeta_hat_column(x, Z), pivot_index(x, Z.shape[1]))


def batch_theta_hat(x, Z):
    if x == 0:
        raise ZeroDeformation("x must be non-zero")
    if x < 0:
        return np.swapaxes(batch_theta_hat(-x, Z), 1, 2)
    B, n = Z.shape
    t = _tables(n)
    a2, cs = _partial_sums(Z)
    Qp = _q_from_sums(x, cs, t)
    Qn = np.swapaxes(Qp, 1, 2)
    cp = _column(x, Z, Qp, t)
    cm = _column(-x, Z, Qn, t)
    m = t["m"]
    denom = np.sinh(cs[:, t["hi"]] - cs[:, t["lo"]] + np.abs(m) * x / 2)
    denom = np.where(m == 0, 1.0, denom)
    T = -np.sinh(n * x / 2) * np.sign(m) * cp[:, :, None] * cm[:, None, :] / denom
    for r, keep in enumerate(t["keep"]):
        T[:, r, r + 1] = (-np.sinh(x / 2) / np.sinh(a2[:, r] + x / 2)
                          * np.prod(Qp[:, r, keep] * Qn[:, r + 1, keep], axis=1))
    return T


def batch_gamma_hat(x, Z, p=None):
    """Diagonals of ``gamma_hat`` as rows."""
    if p is None:
        p = batch_p_hat(x, Z)
    g = sqrt_nonneg(-np.expm1(2 * p), "1-e^{2p}").astype(complex)
    zn = Z[:, -1]
    g[:, 0] = zn * np.sqrt(2 - np.abs(zn) ** 2)
    return g


def batch_alpha_hat(x, u, v, Z):
    p = batch_p_hat(x, Z)
    A2 = np.exp(-2 * u - 2 * p) - np.exp(-2 * v)
    if np.any(A2 <= 0):
        raise CouplingViolation("non-positive radicand e^{-2u-2p}-e^{-2v}")
    first = np.sqrt(A2)[:, :, None] * np.conj(np.swapaxes(batch_theta_hat(x, Z), 1, 2))
    g = batch_gamma_hat(x, Z, p)
    n = Z.shape[1]
    second = np.exp(v) * np.exp(-p)[:, :, None] * (np.conj(g)[:, :, None] * np.eye(n))
    return -1j * (first - second)


def _single(fn, x, z):
    return fn(x, _as_z(z)[None, :])[0]


def q_matrix(x, z):
    """All factors ``Q_jk(x, z)`` at once; the diagonal is set to 1."""
    return _single(batch_q_matrix, x, z)


def q_factor(x, z, j, k):
    """Single factor ``Q_jk(x, z)`` (0-based, ``j != k``)."""
    if j == k:
        raise ValueError("Q_jk needs j != k")
    return float(q_matrix(x, z)[j, k])


def zeta_hat_column(x, z):
    """Pivot column of ``zeta_hat(x, z)``; its pivot entry equals ``r(x, p_hat(z))_a``."""
    return _single(batch_zeta_hat_column, x, z)


def zeta_hat(x, z):
    """Unitary ``zeta_hat(x, z)``."""
    return _single(batch_zeta_hat, x, z)


def theta_hat(x, z):
    """Unitary ``theta_hat(x, z)``; for ``x < 0`` it is the transpose of ``theta_hat(-x, z)``."""
    return _single(batch_theta_hat, x, z)


def gamma_hat(x, z):
    """Diagonal ``gamma_hat``: ``z_n sqrt(2 - |z_n|^2)`` then ``sqrt(1 - e^{2 p_hat_j})``."""
    return np.diag(_single(batch_gamma_hat, x, z))


def alpha_hat(params, z):
    """Upper-right block of the triangular factor of the global section."""
    return batch_alpha_hat(params.x, params.u, params.v, _as_z(z)[None, :])[0]


@dataclass(frozen=True)
class GlobalSectionData:
    zeta_hat: np.ndarray
    theta_hat: np.ndarray
    gamma_hat: np.ndarray
    alpha_hat: np.ndarray
    p_hat: np.ndarray


def global_section_data(params, z):
    z = _as_z(z)
    x = params.x
    return GlobalSectionData(zeta_hat=zeta_hat(x, z), theta_hat=theta_hat(x, z),
                             gamma_hat=gamma_hat(x, z), alpha_hat=alpha_hat(params, z),
                             p_hat=_single(batch_p_hat, x, z))


def tau_factors(x, q_hat):
    """Diagonal unitaries ``(tau, tau_tilde)`` relating local and global blocks."""
    e = np.exp(1j * np.asarray(q_hat, dtype=float))
    tail = np.cumprod(e[::-1])[::-1]
    one = np.ones(1, dtype=complex)
    if x > 0:
        t = tail
        tau = np.concatenate([t[1:], one])
        tau_t = np.concatenate([one, t[1:]])
    else:
        t = e / tail
        tau = np.concatenate([one, t[:-1]])
        tau_t = np.concatenate([t[:-1], one])
    return np.diag(tau), np.diag(tau_t)


def gauge_factors(x, q_hat):
    """``(eta_L, eta_R)`` with ``K_global(z(p, q)) = eta_L K_local(p, q) eta_R^{-1}``."""
    q = np.asarray(q_hat, dtype=float)
    n = q.size
    tau, tau_t = tau_factors(x, q)
    kap = kappa_matrix(x, n)
    em = np.diag(np.exp(-1j * q))
    Z = np.zeros((n, n))
    eta_L = np.block([[kap @ tau @ kap.T, Z], [Z, tau_t @ em]])
    eta_R = np.block([[tau_t @ em, Z], [Z, tau]])
    return eta_L, eta_R


def K_global(params, z):
    """Global section ``diag(kappa zeta_hat^{-1}, 1) C_hat(z) [[e^{-v}, alpha_hat], [0, e^{v}]]``."""
    z = _as_z(z)
    if z.size != params.n:
        raise DomainViolation(f"z has n={z.size}, params have n={params.n}")
    x = params.x
    p = _single(batch_p_hat, x, z)
    rho = kappa_matrix(x, z.size) @ zeta_hat(x, z).conj().T
    K = (_block_diag(rho, z.size) @ _angle_block(p, gamma_hat(x, z))
         @ _triangular_block(params.v, alpha_hat(params, z)))
    return GroupPoint(K)
