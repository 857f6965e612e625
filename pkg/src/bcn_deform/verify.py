"""
Numerical certification: two-form pullbacks, Poisson commutativity of the
reduced family, functional independence, and seeded suites that combine
these with the identity checks of the building blocks.

Tangent vectors are real arrays of length ``2n`` laid out as ``(p_hat, q_hat)``
in the local chart and ``(Re z, Im z)`` on the global model.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import blocks_global as bg
from . import blocks_local as bl
from .dynamics import gradient
from .errors import FDBreakdown
from .hamiltonians import h_k_local, h_k_local_gradient
from .linalg import COND_LIMIT, GroupPoint
from .momentum import admissible, char_poly_residual, constraint_residual, w_squared_oracle, w_vector
from .params import CouplingParams, GlobalPoint, LocalPoint
from .sampling import random_global_point, random_local_point, random_tangent
from .tolerances import DEFAULT_TOLERANCES

THREADS_ENV = "BCN_DEFORM_THREADS"
FORM_STEP = 1e-5
BRACKET_STEP = 1e-6
RANK_RTOL = 1e-8
# sampling window for bracket checks; the absolute bracket threshold only makes
# sense while |grad h_j| |grad h_k| stays moderate
MODERATE = {"first": (0.05, 0.3), "gap": (0.05, 0.3)}


# --- two-forms -----------------------------------------------------------


@dataclass(frozen=True)
class TwoFormSample:
    base: object
    v1: np.ndarray
    v2: np.ndarray
    value: float


def _factors(K):
    gp = K if isinstance(K, GroupPoint) else GroupPoint(K)
    return gp.g_L, gp.b_R, gp.b_L, gp.g_R


def _directional(K_path, v, h):
    plus = _factors(K_path(h * v))
    minus = _factors(K_path(-h * v))
    d = [(a - b) / (2 * h) for a, b in zip(plus, minus)]
    plus2 = _factors(K_path(2 * h * v))
    minus2 = _factors(K_path(-2 * h * v))
    d2 = [(a - b) / (4 * h) for a, b in zip(plus2, minus2)]
    # the two stencils agree to O(h^2) on a smooth curve
    for a, b in zip(d, d2):
        scale = 1.0 + np.abs(a).max()
        if not np.all(np.isfinite(a)) or np.abs(a - b).max() > 1e-3 * scale:
            raise FDBreakdown("Iwasawa factor curve is not smooth at the sample")
    return d


def am_form(K_path, v1, v2, h=FORM_STEP):
    """Evaluate the Alekseev-Malkin form on two tangent vectors.

    Parameters
    ----------
    K_path : callable
        Maps a real displacement ``w`` (same length as ``v1``) to the group
        element at ``base + w``; ``K_path(0)`` is the base point.
    v1, v2 : array_like
    h : float
        Central-difference step for the Iwasawa factor curves.

    Returns
    -------
    float
        ``1/2 Im tr(A1 B2 - A2 B1) + 1/2 Im tr(At1 Bt2 - At2 Bt1)`` with
        ``A = (D b_L) b_L^{-1}``, ``B = (D g_L) g_L^{-1}``, ``At = (D b_R) b_R^{-1}``
        and ``Bt = (D g_R) g_R^{-1}``.
    """
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    g_L, b_R, b_L, g_R = _factors(K_path(np.zeros_like(v1)))
    if max(np.linalg.cond(b_L), np.linalg.cond(b_R)) > COND_LIMIT:
        raise FDBreakdown("triangular factor is ill-conditioned")
    d1 = _directional(K_path, v1, h)
    d2 = _directional(K_path, v2, h)
    inv_gL, inv_bR = g_L.conj().T, np.linalg.inv(b_R)
    inv_bL, inv_gR = np.linalg.inv(b_L), g_R.conj().T

    def parts(d):
        dgL, dbR, dbL, dgR = d
        return dbL @ inv_bL, dgL @ inv_gL, dbR @ inv_bR, dgR @ inv_gR

    A1, B1, At1, Bt1 = parts(d1)
    A2, B2, At2, Bt2 = parts(d2)
    return float(0.5 * np.trace(A1 @ B2 - A2 @ B1).imag + 0.5 * np.trace(At1 @ Bt2 - At2 @ Bt1).imag)


def _complex_tangent(v):
    v = np.asarray(v, dtype=float)
    m = v.size // 2
    return v[:m] + 1j * v[m:]


def omega_c_form(z, v1, v2):
    """``i sum_{j<n} dz_j ^ dzbar_j + i dz_n ^ dzbar_n / (1 - |z_n|^2)`` on real tangents."""
    z = z.z if isinstance(z, GlobalPoint) else np.asarray(z, dtype=complex)
    w1, w2 = _complex_tangent(v1), _complex_tangent(v2)
    terms = -2 * np.imag(w1 * np.conj(w2))
    terms[-1] /= 1 - abs(z[-1]) ** 2
    return float(np.sum(terms))


def omega_local_form(v1, v2):
    """Darboux form ``sum dq_hat ^ dp_hat`` on ``(p_hat, q_hat)`` tangents."""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    m = v1.size // 2
    return float(v1[m:] @ v2[:m] - v2[m:] @ v1[:m])


def local_path(params, pt):
    base = pt.as_vector()
    return lambda w: bl.K_local(params, LocalPoint.from_vector(base + w))


def global_path(params, z):
    z = z if isinstance(z, GlobalPoint) else GlobalPoint(z)
    base = z.as_real()
    return lambda w: bg.K_global(params, GlobalPoint.from_real(base + w))


def local_pullback_residual(params, pt, v1, v2, h=FORM_STEP):
    """``am_form`` through the local section minus the Darboux form."""
    return am_form(local_path(params, pt), v1, v2, h) - omega_local_form(v1, v2)


def global_pullback_residual(params, z, v1, v2, h=FORM_STEP):
    """``am_form`` through the global section minus ``omega_c_form``."""
    return am_form(global_path(params, z), v1, v2, h) - omega_c_form(z, v1, v2)


def pushforward(params, pt, v, h=FORM_STEP):
    """Central-difference image of a local tangent under ``z_of_local``, as a real vector."""
    base = pt.as_vector()
    zp = bl.z_of_local(params, LocalPoint.from_vector(base + h * v)).as_real()
    zm = bl.z_of_local(params, LocalPoint.from_vector(base - h * v)).as_real()
    return (zp - zm) / (2 * h)


def pushforward_residual(params, pt, v1, v2, h=FORM_STEP):
    """``omega_c_form`` on pushed-forward tangents minus the Darboux form."""
    z = bl.z_of_local(params, pt)
    return (omega_c_form(z, pushforward(params, pt, v1, h), pushforward(params, pt, v2, h))
            - omega_local_form(v1, v2))


# --- brackets and rank ---------------------------------------------------


def canonical_bracket(f, g, pt, h=BRACKET_STEP):
    """``sum_m (df/dq_m dg/dp_m - df/dp_m dg/dq_m)`` with central-difference gradients.

    ``f`` and ``g`` take the ``(p_hat, q_hat)`` vector.
    """
    y = pt.as_vector() if isinstance(pt, LocalPoint) else np.asarray(pt, dtype=float)
    m = y.size // 2
    df = gradient(f, y, h=h)
    dg = gradient(g, y, h=h)
    return float(df[m:] @ dg[:m] - df[:m] @ dg[m:])


def _h_of_vector(params, k):
    return lambda y: h_k_local(params, LocalPoint.from_vector(y), k)


def _h_gradients(params, pt, ks, h):
    if h is None:
        return {k: np.concatenate(h_k_local_gradient(params, pt.p_hat, pt.q_hat, k)) for k in ks}
    y = pt.as_vector()
    return {k: gradient(_h_of_vector(params, k), y, h=h) for k in ks}


def bracket_values(params, pt, pairs=None, h=None):
    """``{(j, k): ({h_j, h_k}, |grad h_j| |grad h_k|)}`` for the requested pairs.

    ``h=None`` uses the exact gradients; a float selects central differences
    with that step.
    """
    n = params.n
    if pairs is None:
        pairs = [(j, k) for j in range(1, n + 1) for k in range(j + 1, n + 1)]
    grads = _h_gradients(params, pt, sorted({i for pr in pairs for i in pr}), h)
    out = {}
    for j, k in pairs:
        gj, gk = grads[j], grads[k]
        val = 0.0 if j == k else float(gj[n:] @ gk[:n] - gj[:n] @ gk[n:])
        out[(j, k)] = (val, float(np.linalg.norm(gj) * np.linalg.norm(gk)))
    return out


def poisson_commutativity(params, pt, pairs=None, h=None):
    """Largest ``|{h_j, h_k}|`` over ``pairs`` (default: all ``j < k``)."""
    vals = bracket_values(params, pt, pairs, h)
    return float(max((abs(b) for b, _ in vals.values()), default=0.0))


def independence_rank(params, pt, h=None):
    """Numerical rank of ``[dh_k/dq_hat_j]`` with threshold ``1e-8 * sigma_max``.

    Rows are normalized first: the rank does not depend on the scale of each
    ``h_k``, whose gradients can differ by many orders of magnitude.
    """
    n = params.n
    grads = _h_gradients(params, pt, range(1, n + 1), h)
    M = np.array([grads[k][n:] for k in range(1, n + 1)])
    norms = np.linalg.norm(M, axis=1)
    if np.any(norms == 0):
        M = M[norms > 0]
        norms = norms[norms > 0]
        if M.size == 0:
            return 0
    s = np.linalg.svd(M / norms[:, None], compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > RANK_RTOL * s[0]))


# --- identity checks -----------------------------------------------------


def _unit_defect(M):
    n = M.shape[0]
    return max(np.abs(M @ M.conj().T - np.eye(n)).max(), abs(np.linalg.det(M) - 1))


def identity_residuals(x, p_hat):
    """Orthogonality / unit determinant of ``theta, zeta, kappa``, ``theta(x) theta(-x) = 1``,
    ``|r| = 1`` and ``nu nu^T = e^{-x} + sgn(x) v_hat v_hat^T``."""
    p = np.asarray(p_hat, dtype=float)
    n = p.size
    th = bl.theta_matrix(x, p)
    nu = bl.nu_matrix(x, n)
    vh = bl.v_hat(x, n)
    return {
        "theta_orthogonal": _unit_defect(th),
        "zeta_orthogonal": _unit_defect(bl.zeta_matrix(x, p)),
        "kappa_orthogonal": _unit_defect(bl.kappa_matrix(x, n)),
        "theta_inverse": float(np.abs(th @ bl.theta_matrix(-x, p) - np.eye(n)).max()),
        "r_norm": abs(float(np.linalg.norm(bl.r_vector(x, p))) - 1),
        "nu_identity": float(np.abs(nu @ nu.T - np.exp(-x) * np.eye(n) - np.sign(x) * np.outer(vh, vh)).max()),
    }


def gauge_residuals(params, pt):
    """Residuals of the four block identities linking global and local data, and of
    ``K_global(z(pt)) = eta_L K_local(pt) eta_R^{-1}``."""
    x = params.x
    p, q = pt.p_hat, pt.q_hat
    z = bl.z_of_local(params, pt)
    tau, tau_t = bg.tau_factors(x, q)
    tinv, tt_inv = tau.conj(), tau_t.conj()
    eq = np.diag(np.exp(1j * q))
    res = {
        "zeta_hat": np.abs(bg.zeta_hat(x, z) - tau @ bl.zeta_matrix(x, p) @ tinv).max(),
        "theta_hat": np.abs(bg.theta_hat(x, z) - tau @ bl.theta_matrix(x, p) @ tt_inv).max(),
        "gamma_hat": np.abs(bg.gamma_hat(x, z)
                            - eq @ tau @ tt_inv @ np.diag(np.sqrt(-np.expm1(2 * p)))).max(),
        "alpha_hat": np.abs(bg.alpha_hat(params, z)
                            - eq.conj() @ tau_t @ bl.alpha_matrix(params, pt) @ tinv).max(),
    }
    eta_L, eta_R = bg.gauge_factors(x, q)
    res["gauge"] = np.abs(bg.K_global(params, z).K
                          - eta_L @ bl.K_local(params, pt).K @ np.linalg.inv(eta_R)).max()
    return {k: float(v) for k, v in res.items()}


def oracle_residual(params, pt):
    """``max_m | |(rho^dagger v_hat)_m|^2 - oracle_m |`` at a section point."""
    rho = bl.section_rho(params.x, pt.p_hat)
    w2 = np.abs(w_vector(params.x, rho)) ** 2
    return float(np.abs(w2 - w_squared_oracle(params.x, pt.p_hat)).max())


def admissibility_disagreements(x, grid):
    """Count grid points (n=2) where the oracle and the wall inequalities disagree.

    The walls are tested with the closed-chamber tolerance, so grid nodes lying
    on a wall up to roundoff count as admissible on both sides.
    """
    bad = 0
    for p1 in grid:
        for p2 in grid:
            p = np.array([p1, p2])
            if admissible(x, p) != bl.in_chamber(x, p):
                bad += 1
    return bad


# --- suites --------------------------------------------------------------


@dataclass
class SuiteResult:
    name: str
    samples: int
    max_residual: float
    tolerance: float
    passed: bool
    details: dict = field(default_factory=dict)

    def as_dict(self):
        return {"name": self.name, "samples": self.samples, "max_residual": self.max_residual,
                "tolerance": self.tolerance, "passed": self.passed, "details": self.details}


def worker_count():
    """Worker pool size: ``BCN_DEFORM_THREADS`` if set, else the CPU count."""
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ValueError(f"{THREADS_ENV} must be a positive integer") from exc
    return max(1, os.cpu_count() or 1)


def ordered_map(fn, items, workers):
    # results come back in item order regardless of scheduling
    if workers <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _spawn(seed, name, count):
    # one child stream per sample, keyed by suite name, so that suites and
    # shards do not depend on evaluation order
    key = [ord(c) for c in name]
    ss = np.random.SeedSequence([int(seed)] + key)
    return [np.random.default_rng(s) for s in ss.spawn(count)]


def _result(name, values, tol, details=None):
    worst = float(np.max(values)) if len(values) else 0.0
    return SuiteResult(name, len(values), worst, tol, bool(worst < tol), details or {})


def suite_constraint_local(params, seed, samples, tol, workers):
    def one(rng):
        return constraint_residual(bl.K_local(params, random_local_point(rng, params.x, params.n)), params)
    return _result("constraint_local", ordered_map(one, _spawn(seed, "constraint_local", samples), workers), tol)


def suite_constraint_global(params, seed, samples, tol, workers):
    zeroed = max(1, samples // 10)

    def one(item):
        i, rng = item
        zeros = int(rng.integers(1, params.n + 1)) if i < zeroed else 0
        return constraint_residual(bg.K_global(params, random_global_point(rng, params.n, zeros)), params)
    items = list(enumerate(_spawn(seed, "constraint_global", samples)))
    return _result("constraint_global", ordered_map(one, items, workers), tol, {"with_zero_components": zeroed})


def suite_identities(params, seed, samples, tol, workers):
    def one(item):
        n, sx, rng = item
        x = sx * abs(params.x)
        return max(identity_residuals(x, random_local_point(rng, x, n).p_hat).values())
    rngs = _spawn(seed, "identities", samples)
    items = [(1 + i % 4, 1 if (i // 4) % 2 == 0 else -1, rng) for i, rng in enumerate(rngs)]
    return _result("identities", ordered_map(one, items, workers), tol, {"n_values": [1, 2, 3, 4]})


def suite_gauge(params, seed, samples, tol, workers):
    def one(rng):
        return max(gauge_residuals(params, random_local_point(rng, params.x, params.n)).values())
    return _result("gauge_identities", ordered_map(one, _spawn(seed, "gauge", samples), workers), tol)


def suite_oracle(params, seed, samples, tol, workers):
    n_lam = 20

    def one(rng):
        pt = random_local_point(rng, params.x, params.n)
        rho = bl.section_rho(params.x, pt.p_hat)
        lam = rng.normal(size=n_lam) + 1j * rng.normal(size=n_lam)
        poly = char_poly_residual(params.x, pt.p_hat, w_vector(params.x, rho), lam)
        return max(oracle_residual(params, pt), float(poly.max()))
    vals = ordered_map(one, _spawn(seed, "oracle", samples), workers)
    grid = np.linspace(-3.0, 0.5, 50)
    bad = admissibility_disagreements(params.x, grid)
    res = _result("oracle", vals, tol, {"grid_points": grid.size ** 2, "grid_disagreements": bad})
    res.passed = res.passed and bad == 0
    return res


def suite_pushforward(params, seed, samples, tol, workers, pairs=5):
    def one(rng):
        pt = random_local_point(rng, params.x, params.n)
        return max(abs(pushforward_residual(params, pt, random_tangent(rng, params.n),
                                            random_tangent(rng, params.n))) for _ in range(pairs))
    return _result("form_pushforward", ordered_map(one, _spawn(seed, "pushforward", samples), workers), tol,
                   {"pairs_per_point": pairs, "step": FORM_STEP})


def suite_global_pullback(params, seed, samples, tol, workers, pairs=5):
    def one(rng):
        z = random_global_point(rng, params.n, radius=0.8)
        return max(abs(global_pullback_residual(params, z, random_tangent(rng, params.n),
                                                random_tangent(rng, params.n))) for _ in range(pairs))
    return _result("form_global_pullback", ordered_map(one, _spawn(seed, "global_pullback", samples), workers),
                   tol, {"pairs_per_point": pairs, "step": FORM_STEP})


def suite_local_pullback(params, seed, samples, tol, workers, pairs=5):
    def one(rng):
        pt = random_local_point(rng, params.x, params.n)
        return max(abs(local_pullback_residual(params, pt, random_tangent(rng, params.n),
                                               random_tangent(rng, params.n))) for _ in range(pairs))
    return _result("form_local_pullback", ordered_map(one, _spawn(seed, "local_pullback", samples), workers),
                   tol, {"pairs_per_point": pairs, "step": FORM_STEP})


def suite_commutativity(params, seed, samples, tol, workers):
    def one(rng):
        pt = random_local_point(rng, params.x, params.n, **MODERATE)
        vals = bracket_values(params, pt).values()
        return (max((abs(b) for b, _ in vals), default=0.0),
                max((abs(b) / s for b, s in vals if s > 0), default=0.0))
    out = ordered_map(one, _spawn(seed, "commutativity", samples), workers)
    return _result("commutativity", [a for a, _ in out], tol,
                   {"max_relative": float(max((r for _, r in out), default=0.0))})


def suite_rank(params, seed, samples, fraction, workers):
    rngs = _spawn(seed, "rank", samples)
    pts = [random_local_point(rng, params.x, params.n) for rng in rngs]
    ranks = ordered_map(lambda pt: independence_rank(params, pt), pts, workers)
    full = sum(r == params.n for r in ranks)
    deficient = [{"p_hat": pt.p_hat.tolist(), "q_hat": pt.q_hat.tolist(), "rank": r}
                 for pt, r in zip(pts, ranks) if r != params.n]
    share = full / samples if samples else 1.0
    # the residual reported is the deficient share; the threshold is 1 - fraction
    return SuiteResult("independence_rank", samples, float(1 - share), float(1 - fraction),
                       bool(share >= fraction), {"full_rank": full, "deficient": deficient})


def run_suites(params, seed=42, samples=100, tolerances=DEFAULT_TOLERANCES, workers=None):
    """Run every certification suite and return a JSON-ready report.

    Point counts follow ``samples`` for the cheap suites and ``samples // 5``
    (at least 1) for the finite-difference form checks and brackets.
    """
    if not isinstance(params, CouplingParams):
        raise TypeError("params must be CouplingParams")
    workers = worker_count() if workers is None else max(1, int(workers))
    tol = tolerances
    few = max(1, samples // 5)
    results = [
        suite_constraint_local(params, seed, samples, tol.constraint, workers),
        suite_constraint_global(params, seed, samples, tol.constraint, workers),
        suite_identities(params, seed, samples, tol.property, workers),
        suite_gauge(params, seed, samples, tol.property, workers),
        suite_oracle(params, seed, samples, tol.oracle, workers),
        suite_pushforward(params, seed, few, tol.local_form, workers),
        suite_global_pullback(params, seed, few, tol.global_form, workers),
        suite_local_pullback(params, seed, few, tol.global_form, workers),
        suite_commutativity(params, seed, few, tol.bracket, workers),
        suite_rank(params, seed, samples, tol.rank_fraction, workers),
    ]
    return {
        "params": {"n": params.n, "x": params.x, "u": params.u, "v": params.v},
        "seed": int(seed),
        "samples": int(samples),
        "tolerances": tol.as_dict(),
        "suites": [r.as_dict() for r in results],
        "passed": all(r.passed for r in results),
    }

