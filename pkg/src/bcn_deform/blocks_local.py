"""
Closed-form building blocks of the local section over the chamber C_x.

The chamber is the closed polyhedron ``0 >= p_1`` and
``p_k - p_{k+1} >= |x|/2``; its interior carries the Darboux chart
``(p_hat, q_hat)``. All functions here are pure and vectorised over indices.
"""

import numpy as np

from .errors import CouplingViolation, DomainViolation, OffDenseLocus, ZeroDeformation
from .linalg import GroupPoint
from .params import GlobalPoint, LocalPoint

RADICAND_FLOOR = -1e-14
WALL_TOL = 1e-12


def sqrt_nonneg(values, what="radicand"):
    """Square root that clamps roundoff negatives and rejects real ones."""
    values = np.asarray(values, dtype=float)
    if np.any(values < RADICAND_FLOOR) or np.any(np.isnan(values)):
        raise DomainViolation(f"negative {what}: min {np.nanmin(values):.3e}")
    return np.sqrt(np.maximum(values, 0.0))


def wall_distances(x, p_hat):
    """Signed distances to the walls: ``-p_1`` and ``p_k - p_{k+1} - |x|/2``."""
    p = np.asarray(p_hat, dtype=float)
    return np.concatenate([[-p[0]], -np.diff(p) - abs(x) / 2])


def in_chamber(x, p_hat, strict=False, tol=WALL_TOL):
    d = wall_distances(x, p_hat)
    return bool(np.all(d > tol)) if strict else bool(np.all(d >= -tol))


def require_chamber(x, p_hat, strict=False):
    p = np.asarray(p_hat, dtype=float).reshape(-1)
    if x == 0:
        raise ZeroDeformation("x must be non-zero")
    if not np.all(np.isfinite(p)):
        raise DomainViolation("non-finite p_hat")
    if not in_chamber(x, p, strict=strict):
        d = wall_distances(x, p)
        kind = "open" if strict else "closed"
        raise DomainViolation(f"p_hat={p.tolist()} outside the {kind} chamber "
                              f"(min wall distance {d.min():.3e})")
    return p


def nu_matrix(x, n):
    """Upper unitriangular ``nu(x)`` with ``nu_jk = (1 - e^{-x}) e^{(k-j)x/2}``."""
    j, k = np.indices((n, n))
    N = np.where(k > j, -np.expm1(-x) * np.exp((k - j) * x / 2), 0.0)
    return N + np.eye(n)


def v_vector(x, n):
    """Positive vector ``v(x)`` with ``|v|^2 = n``."""
    if x == 0:
        raise ZeroDeformation("v(x) is undefined at x = 0")
    j = np.arange(1, n + 1)
    return np.sqrt(n * np.expm1(x) / -np.expm1(-n * x)) * np.exp(-j * x / 2)


def v_hat(x, n):
    """``v_hat = sqrt(sgn(x) e^{-x} (e^{nx}-1)/n) v``, so ``nu nu^T = e^{-x} + sgn(x) v_hat v_hat^T``."""
    scale = np.sqrt(np.sign(x) * np.exp(-x) * np.expm1(n * x) / n)
    return scale * v_vector(x, n)


def pivot_index(x, n):
    return n - 1 if x > 0 else 0


def pivot_completion(col, a):
    """Complete a unit column to the unitary with that column at pivot ``a``.

    Entries: ``Z[:, a] = col``, ``Z[a, j] = -conj(col_j)`` and
    ``Z[j, k] = delta_jk - col_j conj(col_k) / (1 + col_a)`` off the pivot.
    """
    col = np.asarray(col)
    n = col.size
    Z = np.eye(n, dtype=col.dtype) - np.outer(col, col.conj()) / (1 + col[a])
    Z[:, a] = col
    Z[a, :] = -col.conj()
    Z[a, a] = col[a]
    return Z


def r_vector(x, p_hat, check=True):
    """Non-negative unit vector ``r(x, p_hat)``."""
    p = require_chamber(x, p_hat) if check else np.asarray(p_hat, dtype=float)
    n = p.size
    E = 2 * (p[:, None] - p[None, :])
    off = ~np.eye(n, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(off, np.expm1(E - x) / np.expm1(E), 1.0)
    pref = np.expm1(-x) / np.expm1(-n * x)
    return sqrt_nonneg(pref * np.prod(ratio, axis=1), "radicand in r")


def _ratio_tables(x, p):
    n = p.size
    d = p[:, None] - p[None, :]
    off = ~np.eye(n, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(off, np.sinh(d - x / 2) / np.sinh(d), 1.0)
        b = np.where(off, np.sinh(d + x / 2) / np.sinh(d), 1.0)
    return d, off, a, b


def theta_matrix(x, p_hat, check=True):
    """Real orthogonal ``theta(x, p_hat)`` with ``theta(x)^{-1} = theta(-x)``."""
    p = require_chamber(x, p_hat) if check else np.asarray(p_hat, dtype=float)
    n = p.size
    d, off, a, b = _ratio_tables(x, p)
    # P[j, k, m] = a[j, m] b[k, m], dropping m in {j, k}
    P = a[:, None, :] * b[None, :, :]
    idx = np.arange(n)
    drop = (idx[None, None, :] == idx[:, None, None]) | (idx[None, None, :] == idx[None, :, None])
    rad = np.prod(np.where(drop, 1.0, P), axis=2)
    root = sqrt_nonneg(rad, "radicand in theta")
    with np.errstate(divide="ignore", invalid="ignore"):
        lead = np.where(off, np.sinh(x / 2) / np.sinh(d.T), 1.0)
    return lead * root


def zeta_matrix(x, p_hat, check=True):
    """Orthogonal ``zeta(x, p_hat)`` whose pivot column is ``r(x, p_hat)``."""
    r = r_vector(x, p_hat, check=check)
    return pivot_completion(r, pivot_index(x, r.size))


def kappa_matrix(x, n):
    """Orthogonal ``kappa(x)`` whose pivot column is ``v(x)/sqrt(n)``."""
    return pivot_completion(v_vector(x, n) / np.sqrt(n), pivot_index(x, n))


def section_rho(x, p_hat, check=True):
    """``rho = kappa(x) zeta(x, p_hat)^{-1}`` (``zeta`` is orthogonal)."""
    p = np.asarray(p_hat, dtype=float)
    return kappa_matrix(x, p.size) @ zeta_matrix(x, p, check=check).T


def _alpha(x, u, v, p, q):
    A2 = np.exp(-2 * u - 2 * p) - np.exp(-2 * v)
    if np.any(A2 <= 0):
        raise CouplingViolation("non-positive radicand e^{-2u-2p}-e^{-2v}: "
                                "requires u < v and p_1 <= 0")
    A = np.sqrt(A2)
    B = sqrt_nonneg(np.expm1(-2 * p), "radicand e^{-2p}-1")
    first = (np.exp(1j * q) * A)[:, None] * theta_matrix(-x, p, check=False)
    return -1j * (first - np.exp(v) * np.diag(B))


def alpha_matrix(params, pt):
    """Upper-right block ``alpha`` of the section's triangular factor."""
    p = require_chamber(params.x, pt.p_hat)
    return _alpha(params.x, params.u, params.v, p, pt.q_hat)


def _angle_block(p, c):
    n = p.size
    s = np.diag(np.exp(p)).astype(complex)
    C = np.zeros((2 * n, 2 * n), dtype=complex)
    C[:n, :n] = c
    C[:n, n:] = 1j * s
    C[n:, :n] = 1j * s
    C[n:, n:] = c.conj().T
    return C


def _triangular_block(v, alpha):
    n = alpha.shape[0]
    B = np.zeros((2 * n, 2 * n), dtype=complex)
    B[:n, :n] = np.exp(-v) * np.eye(n)
    B[:n, n:] = alpha
    B[n:, n:] = np.exp(v) * np.eye(n)
    return B


def _block_diag(top, n):
    M = np.eye(2 * n, dtype=complex)
    M[:n, :n] = top
    return M


def K_local(params, pt):
    """Section matrix ``diag(rho, 1) C(p_hat) [[e^{-v}, alpha], [0, e^{v}]]``."""
    if pt.n != params.n:
        raise DomainViolation(f"point has n={pt.n}, params have n={params.n}")
    x = params.x
    p = require_chamber(x, pt.p_hat)
    alpha = _alpha(x, params.u, params.v, p, pt.q_hat)
    c = np.diag(sqrt_nonneg(-np.expm1(2 * p), "radicand 1-e^{2p}"))
    K = (_block_diag(section_rho(x, p, check=False), params.n)
         @ _angle_block(p, c.astype(complex)) @ _triangular_block(params.v, alpha))
    return GroupPoint(K)


def z_of_local(params, pt):
    """Global coordinates ``z`` of a chamber point."""
    x = params.x
    p = require_chamber(x, pt.p_hat)
    e = np.exp(1j * pt.q_hat)
    # tail[j] = prod_{k >= j} e^{i q_k}
    tail = np.cumprod(e[::-1])[::-1]
    z = np.empty(p.size, dtype=complex)
    z[:-1] = sqrt_nonneg(-np.diff(p) - abs(x) / 2, "gap") * tail[1:]
    z[-1] = sqrt_nonneg(-np.expm1(p[0]), "1-e^{p_1}") * tail[0]
    return GlobalPoint(z)


def _p_hat_of_z(x, z):
    z = np.asarray(z, dtype=complex).reshape(-1)
    a2 = np.abs(z) ** 2
    p = np.empty(z.size)
    p[0] = np.log1p(-a2[-1])
    p[1:] = p[0] - np.cumsum(a2[:-1] + abs(x) / 2)
    return p


def p_hat_of_z(params, gp):
    """``p_hat`` as a smooth function on the whole global model."""
    return _p_hat_of_z(params.x, gp.z)


def local_of_z(params, gp):
    """Inverse of :func:`z_of_local` on the locus where every ``z_j != 0``."""
    z = gp.z
    n = z.size
    if np.any(z == 0):
        raise OffDenseLocus("local chart needs all z_j != 0")
    p = _p_hat_of_z(params.x, z)
    if n == 1:
        q = np.angle(z)
    else:
        w = np.empty(n, dtype=complex)
        w[0] = z[-1] * np.conj(z[0])
        w[1:-1] = z[:-2] * np.conj(z[1:-1])
        w[-1] = z[-2]
        q = np.angle(w)
    return LocalPoint(p, q)


def theta_derivative(x, p_hat, theta=None):
    """Partial derivatives ``D[l, j, k] = d theta_jk / d p_l`` on the open chamber.

    Uses ``d log theta_jk`` as a sum of coth differences; every entry of theta
    is non-zero in the interior, so the logarithmic form is exact there.
    ``theta`` may pass in an already computed ``theta_matrix(x, p_hat)``.
    """
    p = np.asarray(p_hat, dtype=float)
    n = p.size
    T = theta_matrix(x, p, check=False) if theta is None else theta
    d = p[:, None] - p[None, :]
    off = ~np.eye(n, dtype=bool)
    safe = np.where(off, d, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        Ap = np.where(off, 1 / np.tanh(safe - x / 2) - 1 / np.tanh(safe), 0.0)
        Bp = np.where(off, 1 / np.tanh(safe + x / 2) - 1 / np.tanh(safe), 0.0)
        lead = np.where(off, -1 / np.tanh(np.where(off, d.T, 1.0)), 0.0)
    idx = np.arange(n)
    # M[j, k, m]: m differs from both j and k
    M = (idx[None, None, :] != idx[:, None, None]) & (idx[None, None, :] != idx[None, :, None])
    SA = np.einsum("jkm,jm->jk", M, Ap)
    SB = np.einsum("jkm,km->jk", M, Bp)
    delta = np.eye(n)
    G = 0.5 * (delta[:, :, None] * SA[None, :, :] + delta[:, None, :] * SB[None, :, :]
               - np.transpose(M, (2, 0, 1)) * (Ap.T[:, :, None] + Bp.T[:, None, :]))
    G += lead[None, :, :] * (delta[:, None, :] - delta[:, :, None])
    return T[None, :, :] * G
