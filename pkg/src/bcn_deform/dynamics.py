"""
Reduced flows of the commuting Hamiltonians ``h_k``, computed two ways.

Projection method: the unreduced flow of ``h_k`` is
``K(t) = g_L exp(-i t L^k) b_R^{-1}`` with ``L = b_R^dagger b_R`` frozen, and the
gauge-invariant positions ``p_hat(t)`` are read off from the Cartan angles of
``g_L(t)``.

Direct integration: with this normalisation of the symplectic form the
equations of motion are

    dp_hat/dt = + dh_k/dq_hat,        dq_hat/dt = - dh_k/dp_hat

in the local chart, and

    dz_j/dt = i dh_k/dconj(z_j)  (j < n),
    dz_n/dt = i (1 - |z_n|^2) dh_k/dconj(z_n)

on the global model. The sign was fixed once by agreement with the projection
method and is covered by the cross-method tests.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .blocks_global import K_global
from .blocks_local import in_chamber, wall_distances, z_of_local
from .errors import BoundaryReached, DomainViolation, EscapeDisk, StepFailure
from .hamiltonians import _check_k, all_h_global, all_h_local, batch_h_k, h_k_local_gradient
from .linalg import GroupPoint, cartan_position, herm_exp_action
from .params import GlobalPoint, LocalPoint

BOUNDARY_EVENT = 1e-8
DISK_MARGIN = 1e-12


def gradient(f, pt, h=None, order=2):
    """Central finite-difference gradient of a scalar function of ``m`` reals.

    Parameters
    ----------
    f : callable
        Maps a length-``m`` float array to a float.
    pt : array_like
    h : float or array_like, optional
        Step(s). Default ``1e-6 * (1 + |pt_i|)``.
    order : {2, 4}
        Two-point or four-point central stencil.
    """
    pt = np.asarray(pt, dtype=float)
    if h is None:
        h = 1e-6 * (1 + np.abs(pt))
    h = np.broadcast_to(np.asarray(h, dtype=float), pt.shape)
    g = np.empty_like(pt)
    for i in range(pt.size):
        e = np.zeros_like(pt)
        e[i] = h[i]
        if order == 2:
            g[i] = (f(pt + e) - f(pt - e)) / (2 * h[i])
        elif order == 4:
            g[i] = (8 * (f(pt + e) - f(pt - e)) - (f(pt + 2 * e) - f(pt - 2 * e))) / (12 * h[i])
        else:
            raise ValueError("order must be 2 or 4")
    return g


@dataclass
class Trajectory:
    """Sampled flow.

    ``states`` holds ``(p_hat, q_hat)`` rows for ``kind == "local"`` (angles
    unwrapped), ``(Re z, Im z)`` rows for ``kind == "global"`` and ``p_hat``
    rows for ``kind == "projection"``. ``conserved[i, j]`` is ``h_{j+1}`` at
    ``times[i]``.
    """

    times: np.ndarray
    states: np.ndarray
    conserved: np.ndarray
    kind: str
    k: int
    nfev: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.conserved.shape[1]

    def p_hat(self):
        from .blocks_local import _p_hat_of_z

        if self.kind == "local":
            return self.states[:, :self.n]
        if self.kind == "projection":
            return self.states
        return np.array([_p_hat_of_z(self.meta["x"], self.z_at(i)) for i in range(len(self.times))])

    def z_at(self, i):
        n = self.n
        return self.states[i, :n] + 1j * self.states[i, n:]

    def points(self):
        if self.kind == "local":
            return [LocalPoint.from_vector(s) for s in self.states]
        if self.kind == "global":
            return [GlobalPoint.from_real(s) for s in self.states]
        raise ValueError("projection trajectories carry positions only")

    def drift(self):
        """Max relative change of every ``h_j`` along the samples."""
        h0 = self.conserved[0]
        return float(np.max(np.abs(self.conserved - h0) / (1 + np.abs(h0))))


def free_flow(K0, k, t):
    """Unreduced flow ``g_L exp(-i t L^k) b_R^{-1}`` of ``h_k`` from ``K0``.

    ``b_R(t) = b_R(0)`` by construction.
    """
    gp = K0 if isinstance(K0, GroupPoint) else GroupPoint(K0)
    if int(k) != k or not 1 <= k <= gp.n:
        raise ValueError(f"k must be an integer in [1, {gp.n}]")
    b = gp.b_R
    L = b.conj().T @ b
    L = (L + L.conj().T) / 2
    # drop the scalar part of the generator so that K(t) stays unimodular;
    # a central phase does not affect any reduced quantity
    c = np.trace(np.linalg.matrix_power(L, k)).real / L.shape[0]
    U = herm_exp_action(L, k, t) * np.exp(1j * t * c)
    return GroupPoint(gp.g_L @ U @ np.linalg.inv(b))


def projected_p_trajectory(params, z0, k, t_grid, tol=1e-9):
    """Positions ``p_hat(t)`` from the projection method, one row per time."""
    k = _check_k(params, k)
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be increasing")
    K0 = K_global(params, z0)
    rows = []
    for i, t in enumerate(t_grid):
        q = cartan_position(free_flow(K0, k, t).g_L).q
        p = np.log(np.sin(q))
        if not in_chamber(params.x, p, tol=tol):
            t_last = float(t_grid[i - 1]) if i else None
            raise StepFailure(f"projected p_hat left the chamber at t={t:.17g}", t_last=t_last)
        rows.append(p)
    h0 = all_h_global(params, z0)
    return Trajectory(times=t_grid, states=np.array(rows), conserved=np.tile(h0, (len(t_grid), 1)),
                      kind="projection", k=k, meta={"x": params.x})


def _solve(rhs, t_span, y0, tol, t_eval, events):
    try:
        sol = solve_ivp(rhs, t_span, y0, method="DOP853", rtol=tol, atol=tol,
                        t_eval=t_eval, events=events)
    except (ArithmeticError, ValueError) as exc:
        raise StepFailure(f"integration failed: {exc}") from exc
    return sol


def _sample_times(t_span, t_eval):
    t0, t1 = map(float, t_span)
    if t_eval is None:
        return None if t0 != t1 else np.array([t0])
    return np.asarray(t_eval, dtype=float)


def local_ode(params, pt0, k, t_span, tol=1e-10, t_eval=None):
    """Integrate the flow of ``h_k`` in the local chart.

    Raises
    ------
    BoundaryReached
        When the state comes within ``1e-8`` of a chamber wall; the exception
        carries the event time, state and the samples recorded so far.
    """
    k = _check_k(params, k)
    n = params.n
    if not in_chamber(params.x, pt0.p_hat, strict=True, tol=BOUNDARY_EVENT):
        raise DomainViolation("local_ode needs a strictly interior start")
    y0 = pt0.as_vector()

    def rhs(t, y):
        # trial stages outside the chamber get a NaN slope, which makes the
        # step controller reject the step and retry with a smaller one
        if not in_chamber(params.x, y[:n], strict=True, tol=0.0):
            return np.full_like(y, np.nan)
        with np.errstate(all="ignore"):
            try:
                dp, dq = h_k_local_gradient(params, y[:n], y[n:], k)
            except (DomainViolation, ArithmeticError, ValueError):
                return np.full_like(y, np.nan)
        return np.concatenate([dq, -dp])

    def wall(t, y):
        return float(np.min(wall_distances(params.x, y[:n]))) - BOUNDARY_EVENT

    wall.terminal = True
    wall.direction = -1
    te = _sample_times(t_span, t_eval)
    if t_span[0] == t_span[1]:
        states = y0[None, :]
        return Trajectory(np.array([float(t_span[0])]), states,
                          all_h_local(params, pt0)[None, :], "local", k, meta={"x": params.x})
    sol = _solve(rhs, t_span, y0, tol, te, [wall])
    traj = _local_traj(params, sol, k)
    if sol.status == 1:
        t_hit = float(sol.t_events[0][0])
        raise BoundaryReached(f"chamber wall reached at t={t_hit:.17g}", t=t_hit,
                              state=sol.y_events[0][0], trajectory=traj)
    if sol.status != 0:
        raise StepFailure(sol.message, t_last=float(traj.times[-1]) if len(traj.times) else None)
    return traj


def _local_traj(params, sol, k):
    states = sol.y.T.copy()
    cons = np.array([all_h_local(params, LocalPoint.from_vector(s)) for s in states]) \
        if len(states) else np.zeros((0, params.n))
    return Trajectory(sol.t.copy(), states, cons, "local", k, nfev=sol.nfev, meta={"x": params.x})


def _stencil(m, h, order):
    """Offsets and weights of the central stencil for all ``m`` coordinates at once."""
    if order == 2:
        steps, weights = np.array([1.0, -1.0]), np.array([0.5, -0.5])
    elif order == 4:
        steps = np.array([1.0, -1.0, 2.0, -2.0])
        weights = np.array([8.0, -8.0, -1.0, 1.0]) / 12
    else:
        raise ValueError("order must be 2 or 4")
    offsets = (steps[:, None, None] * np.eye(m)[None]).reshape(-1, m) * h
    return offsets, weights


def _global_rhs(params, k, h, order):
    n = params.n
    offsets, weights = _stencil(2 * n, h, order)

    def rhs(t, y):
        Y = y[None, :] + offsets
        if np.any(np.hypot(Y[:, n - 1], Y[:, 2 * n - 1]) >= 1):
            return np.full_like(y, np.nan)
        try:
            vals = batch_h_k(params, Y[:, :n] + 1j * Y[:, n:], k)
        except (DomainViolation, ArithmeticError, ValueError):
            return np.full_like(y, np.nan)
        g = weights @ vals.reshape(len(weights), 2 * n) / h
        dzbar = 0.5 * (g[:n] + 1j * g[n:])
        zn = y[n - 1] + 1j * y[2 * n - 1]
        dzbar[-1] *= 1 - abs(zn) ** 2
        zdot = 1j * dzbar
        return np.concatenate([zdot.real, zdot.imag])

    return rhs


def global_ode(params, z0, k, t_span, tol=1e-10, t_eval=None, h=1e-3, order=4):
    """Integrate the flow of ``h_k`` on the global model.

    Gradients use a central stencil of the given ``order`` and step ``h``,
    evaluated in one batched pass; no chart boundary exists here, so flows
    pass through ``z_j = 0`` without events.
    """
    k = _check_k(params, k)
    n = params.n
    z0 = z0 if isinstance(z0, GlobalPoint) else GlobalPoint(z0)
    y0 = z0.as_real()
    te = _sample_times(t_span, t_eval)
    if t_span[0] == t_span[1]:
        return Trajectory(np.array([float(t_span[0])]), y0[None, :],
                          all_h_global(params, z0.z)[None, :], "global", k, meta={"x": params.x})

    def disk(t, y):
        return 1 - DISK_MARGIN - np.hypot(y[n - 1], y[2 * n - 1])

    disk.terminal = True
    sol = _solve(_global_rhs(params, k, h, order), t_span, y0, tol, te, [disk])
    states = sol.y.T.copy()
    cons = np.array([all_h_global(params, s[:n] + 1j * s[n:]) for s in states]) \
        if len(states) else np.zeros((0, n))
    traj = Trajectory(sol.t.copy(), states, cons, "global", k, nfev=sol.nfev, meta={"x": params.x})
    t_last = float(sol.t[-1]) if len(sol.t) else float(t_span[0])
    if sol.status == 1:
        raise EscapeDisk(f"|z_n| reached 1 at t={float(sol.t_events[0][0]):.17g}", t_last=t_last)
    if sol.status != 0:
        raise StepFailure(sol.message, t_last=t_last)
    return traj


def local_then_global(params, pt0, k, t_span, tol=1e-10, t_eval=None):
    """Local-chart flow that hands over to the global model at a chamber wall.

    Returns
    -------
    list of Trajectory
        One local segment, followed by a global segment if a wall was reached.
    """
    try:
        return [local_ode(params, pt0, k, t_span, tol, t_eval)]
    except BoundaryReached as hit:
        z = z_of_local(params, LocalPoint.from_vector(hit.state))
        rest = None
        if t_eval is not None:
            t_eval = np.asarray(t_eval, dtype=float)
            forward = t_span[1] >= t_span[0]
            rest = t_eval[t_eval > hit.t] if forward else t_eval[t_eval < hit.t]
            if rest.size == 0:
                return [hit.trajectory]
        seg = global_ode(params, z, k, (hit.t, t_span[1]), tol, rest)
        return [hit.trajectory, seg]
