"""
Hamiltonians of the deformed system, its commuting family and three limits.

* ``h_main``: the main Hamiltonian in Darboux coordinates ``(p_hat, q_hat)``.
* ``h_cal1``: the same function after ``e^{p_hat} = sin q``, ``q_hat = p tan q``.
* ``h_beta`` / ``sutherland_h``: the scaled family and its BC_n Sutherland limit.
* ``lax`` / ``h_k``: commuting family ``tr(L^k) / 2k`` from the Lax matrix.
* ``vdiejen_h`` / ``schneider_h``: the two relatives reached by singular limits.
"""

from dataclasses import dataclass

import numpy as np

from .blocks_global import _as_z, batch_alpha_hat
from .blocks_local import (_alpha, require_chamber, sqrt_nonneg, theta_derivative,
                           theta_matrix)
from .errors import BCnError, CouplingViolation, DomainViolation, PoleProximity

POLE_TOL = 1e-10
IMAG_TOL = 1e-9


def _h_formula(p, q, x, u, v):
    # no chamber check; used directly by the Schneider limit
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    n = p.size
    e2 = np.exp(2 * (v - u))
    ext = sqrt_nonneg(1 - (1 + e2) * np.exp(-2 * p) + e2 * np.exp(-4 * p), "external-field radicand")
    d = p[:, None] - p[None, :]
    off = ~np.eye(n, dtype=bool)
    with np.errstate(divide="ignore"):
        pair = np.where(off, 1 - np.sinh(x / 2) ** 2 / np.sinh(np.where(off, d, 1.0)) ** 2, 1.0)
    pair = np.prod(sqrt_nonneg(pair, "pair radicand"), axis=1)
    kinetic = (np.exp(-2 * u) + np.exp(2 * v)) / 2 * np.sum(np.exp(-2 * p))
    return float(kinetic - np.sum(np.cos(q) * ext * pair))


def h_main(params, pt):
    """Main Hamiltonian ``H(p_hat, q_hat; x, u, v)`` on the closed chamber."""
    p = require_chamber(params.x, pt.p_hat)
    return _h_formula(p, pt.q_hat, params.x, params.u, params.v)


def darboux_change(q, p):
    """``(q, p) -> (p_hat, q_hat) = (log sin q, p tan q)`` for ``q`` in ``(0, pi/2)``."""
    from .params import LocalPoint

    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    if np.any(q <= 0) or np.any(q >= np.pi / 2):
        raise DomainViolation("darboux_change needs every q_j in (0, pi/2)")
    return LocalPoint(np.log(np.sin(q)), p * np.tan(q))


def h_cal1(params, q, p):
    """Main Hamiltonian written in the variables ``(q, p)``.

    Needs ``sin q_j != 0``, ``cos q_j != 0`` and ``q_j != +-q_k``.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    x, u, v = params.x, params.u, params.v
    s2 = np.sin(q) ** 2
    if np.any(s2 == 0) or np.any(np.cos(q) == 0):
        raise DomainViolation("h_cal1 needs sin q and cos q non-zero")
    e2 = np.exp(2 * (v - u))
    ext = sqrt_nonneg(1 - (1 + e2) / s2 + 4 * e2 / (4 * s2 - np.sin(2 * q) ** 2),
                      "external-field radicand")
    n = q.size
    off = ~np.eye(n, dtype=bool)
    den = np.sin(q[:, None] - q[None, :]) ** 2 * np.sin(q[:, None] + q[None, :]) ** 2
    if np.any(den[off] == 0):
        raise DomainViolation("h_cal1 needs q_j != +-q_k")
    with np.errstate(divide="ignore", invalid="ignore"):
        pair = np.where(off, 1 - 4 * np.sinh(x / 2) ** 2 * s2[:, None] * s2[None, :]
                        / np.where(off, den, 1.0), 1.0)
    pair = np.prod(sqrt_nonneg(pair, "pair radicand"), axis=1)
    kinetic = (np.exp(-2 * u) + np.exp(2 * v)) / 2 * np.sum(1 / s2)
    return float(kinetic - np.sum(np.cos(p * np.tan(q)) * ext * pair))


@dataclass(frozen=True)
class SutherlandCouplings:
    gamma: float
    gamma1: float
    gamma2: float


def sutherland_couplings(params):
    """``gamma = x^2/4``, ``gamma1 = 2uv``, ``gamma2 = 2(v-u)^2``."""
    c = SutherlandCouplings(params.x ** 2 / 4, 2 * params.u * params.v, 2 * (params.v - params.u) ** 2)
    if not (c.gamma2 > 0 and 4 * c.gamma1 + c.gamma2 > 0):
        raise CouplingViolation("Sutherland couplings violate gamma2 > 0, 4 gamma1 + gamma2 > 0")
    return c


def sutherland_h(couplings, q, p):
    """Trigonometric BC_n Sutherland Hamiltonian."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    j, k = np.triu_indices(q.size, 1)
    pair = np.sum(1 / np.sin(q[j] - q[k]) ** 2 + 1 / np.sin(q[j] + q[k]) ** 2)
    return float(0.5 * np.sum(p ** 2) + couplings.gamma * pair
                 + np.sum(couplings.gamma1 / np.sin(q) ** 2 + couplings.gamma2 / np.sin(2 * q) ** 2))


def _scaled(params, beta):
    from .params import CouplingParams

    return CouplingParams(params.n, beta * params.x, beta * params.u, beta * params.v)


def h_beta(params, q, p, beta):
    """``H_beta(q, p) = H_1(q, beta p; beta x, beta u, beta v)``."""
    if not beta > 0:
        raise DomainViolation("beta must be positive")
    sp = _scaled(params, beta)
    q = np.asarray(q, dtype=float)
    if np.any(q <= 0) or np.any(q >= np.pi / 2):
        raise DomainViolation(f"q outside (0, pi/2) at beta={beta}")
    try:
        require_chamber(sp.x, np.log(np.sin(q)))
    except DomainViolation as exc:
        raise DomainViolation(f"scaled domain violated at beta={beta}: {exc}") from None
    return h_cal1(sp, q, beta * np.asarray(p, dtype=float))


def sutherland_residual(params, q, p, beta):
    """``(H_beta - n)/beta^2 - H_Suth``; vanishes linearly in ``beta``."""
    return (h_beta(params, q, p, beta) - params.n) / beta ** 2 - sutherland_h(
        sutherland_couplings(params), q, p)


def lax_from_alpha(v, alpha):
    """``[[e^{2v}, -e^{v} alpha], [-e^{v} alpha^dagger, e^{-2v} + alpha^dagger alpha]]``."""
    n = alpha.shape[0]
    ad = alpha.conj().T
    L = np.empty((2 * n, 2 * n), dtype=complex)
    L[:n, :n] = np.exp(2 * v) * np.eye(n)
    L[:n, n:] = -np.exp(v) * alpha
    L[n:, :n] = -np.exp(v) * ad
    L[n:, n:] = np.exp(-2 * v) * np.eye(n) + ad @ alpha
    return L


def batch_lax(params, Z):
    """Lax matrices for each row of ``Z``, shape ``(B, 2n, 2n)``."""
    alpha = batch_alpha_hat(params.x, params.u, params.v, Z)
    B, n, _ = alpha.shape
    v = params.v
    ad = np.conj(np.swapaxes(alpha, 1, 2))
    L = np.empty((B, 2 * n, 2 * n), dtype=complex)
    L[:, :n, :n] = np.exp(2 * v) * np.eye(n)
    L[:, :n, n:] = -np.exp(v) * alpha
    L[:, n:, :n] = -np.exp(v) * ad
    L[:, n:, n:] = np.exp(-2 * v) * np.eye(n) + ad @ alpha
    return L


def batch_h_k(params, Z, k):
    """``h_k`` for each row of ``Z``."""
    k = _check_k(params, k)
    L = batch_lax(params, np.asarray(Z, dtype=complex))
    return np.trace(np.linalg.matrix_power(L, k), axis1=1, axis2=2).real / (2 * k)


def lax(params, z):
    """Lax matrix ``b_R^dagger b_R`` of the global section at ``z``."""
    return batch_lax(params, _as_z(z)[None, :])[0]


def lax_local(params, pt):
    p = require_chamber(params.x, pt.p_hat)
    return lax_from_alpha(params.v, _alpha(params.x, params.u, params.v, p, pt.q_hat))


def _check_k(params, k):
    if int(k) != k or not 1 <= k <= params.n:
        raise ValueError(f"k must be an integer in [1, {params.n}]")
    return int(k)


def power_traces(L, kmax):
    """``[tr(L^k)/(2k) for k = 1..kmax]``."""
    out = []
    P = np.eye(L.shape[0], dtype=complex)
    for k in range(1, kmax + 1):
        P = P @ L
        out.append(np.trace(P).real / (2 * k))
    return np.array(out)


def h_k(params, z, k):
    """``h_k = tr(L^k) / 2k`` on the global model."""
    k = _check_k(params, k)
    return float(power_traces(lax(params, z), k)[-1])


def h_k_local(params, pt, k):
    k = _check_k(params, k)
    return float(power_traces(lax_local(params, pt), k)[-1])


def all_h_local(params, pt):
    return power_traces(lax_local(params, pt), params.n)


def all_h_global(params, z):
    return power_traces(lax(params, z), params.n)


def h_k_local_gradient(params, p_hat, q_hat, k):
    """Exact ``(dh_k/dp_hat, dh_k/dq_hat)`` on the open chamber.

    With ``L`` Hermitian, ``dh_k = Re tr(G d alpha)`` where
    ``G = (L^{k-1})_{22} alpha^dagger - e^{v} (L^{k-1})_{21}``.
    """
    x, u, v = params.x, params.u, params.v
    p = np.asarray(p_hat, dtype=float)
    q = np.asarray(q_hat, dtype=float)
    n = p.size
    A = np.sqrt(np.exp(-2 * u - 2 * p) - np.exp(-2 * v))
    B = np.sqrt(np.expm1(-2 * p))
    th = theta_matrix(-x, p, check=False)
    eq = np.exp(1j * q)
    F = (eq * A)[:, None] * th
    alpha = -1j * (F - np.exp(v) * np.diag(B))
    L = lax_from_alpha(v, alpha)
    M = np.linalg.matrix_power(L, k - 1)
    G = M[n:, n:] @ alpha.conj().T - np.exp(v) * M[n:, :n]
    dq = np.real(np.einsum("ma,am->m", F, G))
    dA = -np.exp(-2 * u - 2 * p) / A
    dB = -np.exp(-2 * p) / B
    dalpha = (eq * A)[None, :, None] * theta_derivative(-x, p, th)
    idx = np.arange(n)
    dalpha[idx, idx, :] += (eq * dA)[:, None] * th
    dalpha[idx, idx, idx] -= np.exp(v) * dB
    dp = np.real(-1j * np.einsum("lab,ba->l", dalpha, G))
    return dp, dq


# --- van Diejen -----------------------------------------------------------


class ComplexResidue(BCnError, ArithmeticError):
    pass


def vdiejen_couplings(params, R, branch="printed"):
    """Couplings ``(mu, mu0, mu1, mu0', mu1')`` after the complex substitution.

    ``branch="printed"`` uses ``mu1 = i(u+v) + pi/2``; ``branch="reflected"``
    uses ``mu1 = -i(u+v) + pi/2``. Both reproduce ``-H`` in the limit; they
    differ in the additive constant (see :func:`vdiejen_shift`).
    """
    g1 = _branch_g1(params, branch)
    return (1j * params.x / 2, 1j * (params.v - params.u + R), 1j * g1 + np.pi / 2,
            -1j * R, np.pi / 2 + 0j)


def _branch_g1(params, branch):
    if branch == "printed":
        return params.u + params.v
    if branch == "reflected":
        return -(params.u + params.v)
    raise ValueError(f"unknown branch {branch!r}")


def vdiejen_shift(params, branch="printed"):
    """Limit constant ``sum_j cosh((j-1)x + s)`` with ``s = g0 + g0' + g1 + g1'``."""
    s = (params.v - params.u) + _branch_g1(params, branch)
    return float(np.sum(np.cosh(np.arange(params.n) * params.x + s)))


def _guard(vals):
    if np.min(np.abs(vals)) < POLE_TOL:
        raise PoleProximity("argument too close to a pole of the potentials")
    return vals


def v_potential(mu, z):
    z = np.asarray(z, dtype=complex)
    return np.sin(mu + z) / _guard(np.sin(z))


def w_potential(mu0, mu1, mu0p, mu1p, z):
    z = np.asarray(z, dtype=complex)
    s = _guard(np.sin(z))
    c = _guard(np.cos(z))
    return (np.sin(mu0 + z) / s * np.cos(mu1 + z) / c
            * np.sin(mu0p + z) / s * np.cos(mu1p + z) / c)


def vdiejen_h(mu_params, lam, th):
    """Five-coupling van Diejen Hamiltonian, evaluated in complex arithmetic.

    ``V_j^{1/2} V_{-j}^{1/2}`` is taken as the principal root of the product,
    which is the branch continuous with the large-``R`` asymptote.
    """
    mu, mu0, mu1, mu0p, mu1p = mu_params
    lam = np.asarray(lam, dtype=complex)
    th = np.asarray(th, dtype=complex)
    n = lam.size
    off = ~np.eye(n, dtype=bool)
    Vp = w_potential(mu0, mu1, mu0p, mu1p, lam)
    Vm = w_potential(mu0, mu1, mu0p, mu1p, -lam)
    if n > 1:
        ls = lam[:, None] + lam[None, :]
        ld = lam[:, None] - lam[None, :]
        one = np.ones_like(ls)
        Vp = Vp * np.prod(np.where(off, v_potential(mu, np.where(off, ls, 1.0))
                                   * v_potential(mu, np.where(off, ld, 1.0)), one), axis=1)
        Vm = Vm * np.prod(np.where(off, v_potential(mu, np.where(off, -ld, 1.0))
                                   * v_potential(mu, np.where(off, -ls, 1.0)), one), axis=1)
    total = np.sum(np.cosh(th) * np.sqrt(Vp * Vm) - (Vp + Vm) / 2)
    return complex(total)


def vdiejen_residual(params, pt, R, branch="printed"):
    """``H_vD(i(p_hat + R), i q_hat) + H(p_hat, q_hat) - shift``; tends to 0 as ``R`` grows."""
    h = h_main(params, pt)
    val = vdiejen_h(vdiejen_couplings(params, R, branch), 1j * (pt.p_hat + R), 1j * pt.q_hat)
    res = val + h - vdiejen_shift(params, branch)
    if abs(res.imag) > IMAG_TOL:
        raise ComplexResidue(f"imaginary residue {res.imag:.3e} exceeds {IMAG_TOL}")
    return float(res.real)


# --- Schneider ------------------------------------------------------------


def schneider_h(Q, P, x, u):
    """External-field Ruijsenaars-Schneider Hamiltonian; needs pairwise gaps above ``|x|/2``."""
    Q = np.asarray(Q, dtype=float)
    P = np.asarray(P, dtype=float)
    n = Q.size
    d = Q[:, None] - Q[None, :]
    off = ~np.eye(n, dtype=bool)
    if np.any(np.abs(d[off]) <= abs(x) / 2):
        raise DomainViolation("Schneider Hamiltonian needs |Q_j - Q_k| > |x|/2")
    with np.errstate(divide="ignore"):
        pair = np.where(off, 1 - np.sinh(x / 2) ** 2 / np.sinh(np.where(off, d, 1.0)) ** 2, 1.0)
    pair = np.prod(np.sqrt(pair), axis=1)
    return float(np.exp(-2 * u) / 2 * np.sum(np.exp(2 * Q)) - np.sum(np.cos(P) * pair))


def schneider_residual(params, Q, P, sigma):
    """``H(-Q + sigma, -P; x, u - sigma, v - sigma) - H_Sch(Q, P, x, u)``."""
    Q = np.asarray(Q, dtype=float)
    P = np.asarray(P, dtype=float)
    ref = schneider_h(Q, P, params.x, params.u)
    val = _h_formula(-Q + sigma, -P, params.x, params.u - sigma, params.v - sigma)
    return val - ref
