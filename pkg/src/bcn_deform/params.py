"""Model constants and phase-space point containers."""

from dataclasses import dataclass

import numpy as np

from .errors import CouplingViolation, DomainViolation


@dataclass(frozen=True)
class CouplingParams:
    """Model constants ``n, x, u, v``.

    Admissibility requires ``x != 0``, ``u < v`` and ``v != -u``; it is checked
    on construction.
    """

    n: int
    x: float
    u: float
    v: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise CouplingViolation(f"n must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        for name in ("x", "u", "v"):
            val = float(getattr(self, name))
            if not np.isfinite(val):
                raise CouplingViolation(f"{name} must be finite")
            object.__setattr__(self, name, val)
        problems = []
        if self.x == 0:
            problems.append("x != 0")
        if not self.u < self.v:
            problems.append("u < v")
        if self.v == -self.u:
            problems.append("v != -u")
        if problems:
            raise CouplingViolation(
                "inadmissible couplings (need u < v, v != -u, x != 0); violated: "
                + ", ".join(problems))


@dataclass(frozen=True)
class LocalPoint:
    """Darboux coordinates ``(p_hat, q_hat)``; angles are reduced to (-pi, pi]."""

    p_hat: np.ndarray
    q_hat: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p_hat, dtype=float).reshape(-1)
        q = np.asarray(self.q_hat, dtype=float).reshape(-1)
        if p.shape != q.shape:
            raise DomainViolation("p_hat and q_hat must have equal length")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise DomainViolation("non-finite local coordinates")
        q = np.angle(np.exp(1j * q))
        q[q == -np.pi] = np.pi
        p.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "p_hat", p)
        object.__setattr__(self, "q_hat", q)

    @property
    def n(self):
        return self.p_hat.size

    def as_vector(self):
        return np.concatenate([self.p_hat, self.q_hat])

    @classmethod
    def from_vector(cls, y):
        y = np.asarray(y, dtype=float)
        m = y.size // 2
        return cls(y[:m], y[m:])


@dataclass(frozen=True)
class GlobalPoint:
    """Point ``z`` of the global complex model; ``|z_n| < 1``."""

    z: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=complex).reshape(-1)
        if z.size == 0 or not np.all(np.isfinite(z)):
            raise DomainViolation("z must be a non-empty finite vector")
        if abs(z[-1]) >= 1.0:
            raise DomainViolation(f"|z_n| = {abs(z[-1])!r} must be < 1")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    @property
    def n(self):
        return self.z.size

    def as_real(self):
        return np.concatenate([self.z.real, self.z.imag])

    @classmethod
    def from_real(cls, y):
        y = np.asarray(y, dtype=float)
        m = y.size // 2
        return cls(y[:m] + 1j * y[m:])
