"""
Dense complex kernels: Iwasawa factorizations, Cartan position, polar
decomposition and exponentials of Hermitian generators.

Both Iwasawa forms are obtained from Householder QR / RQ followed by a
diagonal phase normalization, which is unique and avoids forming K^dagger K.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .errors import (DegeneratePosition, NonInvertible, NotHermitian,
                     NotUnimodular, NotUnitary, Singular)

COND_LIMIT = 1e12
DET_TOL = 1e-8


@dataclass(frozen=True)
class IwasawaFactors:
    """Unitary factor `g` and upper-triangular positive-diagonal factor `b`."""

    g: np.ndarray
    b: np.ndarray


@dataclass(frozen=True)
class CartanPosition:
    """Angles ``q`` sorted non-increasingly, with ``sin q = exp(p_hat)``."""

    q: np.ndarray

    @property
    def p_hat(self):
        with np.errstate(divide="ignore"):
            return np.log(np.sin(self.q))


def _check_square(K, name="matrix"):
    K = np.asarray(K, dtype=complex)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValueError(f"{name} must be square, got shape {K.shape}")
    if not np.all(np.isfinite(K)):
        raise ValueError(f"{name} has non-finite entries")
    return K


def _check_group_element(K):
    K = _check_square(K, "K")
    if np.linalg.cond(K) > COND_LIMIT:
        raise NonInvertible("condition number exceeds 1e12")
    det = np.linalg.det(K)
    if abs(det - 1.0) > DET_TOL:
        raise NotUnimodular(f"|det K - 1| = {abs(det - 1.0):.3e}")
    return K


def _phases(d):
    return d / np.abs(d)


def iwasawa_right(K):
    """Factor ``K = g_L b_R^{-1}``.

    Parameters
    ----------
    K : (2n, 2n) complex array with unit determinant

    Returns
    -------
    IwasawaFactors
        ``g`` is ``g_L`` and ``b`` is ``b_R``.
    """
    K = _check_group_element(K)
    Q, R = np.linalg.qr(K)
    ph = _phases(np.diag(R))
    g = Q * ph
    b_inv = R / ph[:, None]
    b = sla.solve_triangular(b_inv, np.eye(len(K)), lower=False)
    return IwasawaFactors(g=g, b=b)


def iwasawa_left(K):
    """Factor ``K = b_L g_R^{-1}``.

    Returns
    -------
    IwasawaFactors
        ``g`` is ``g_R`` and ``b`` is ``b_L``.
    """
    K = _check_group_element(K)
    R, Q = sla.rq(K)
    ph = _phases(np.diag(R))
    b = R / ph[None, :]
    g_inv = Q * ph[:, None]
    return IwasawaFactors(g=g_inv.conj().T, b=b)


class GroupPoint:
    """Unimodular 2n x 2n matrix with lazily cached Iwasawa factors."""

    def __init__(self, K):
        K = _check_square(K, "K")
        if K.shape[0] % 2:
            raise ValueError("group points must have even dimension 2n")
        K = K.copy()
        K.setflags(write=False)
        self.K = K

    @property
    def n(self):
        return self.K.shape[0] // 2

    @cached_property
    def right(self):
        return iwasawa_right(self.K)

    @cached_property
    def left(self):
        return iwasawa_left(self.K)

    @property
    def g_L(self):
        return self.right.g

    @property
    def b_R(self):
        return self.right.b

    @property
    def b_L(self):
        return self.left.b

    @property
    def g_R(self):
        return self.left.g

    def __array__(self, dtype=None, copy=None):
        return self.K if dtype is None else self.K.astype(dtype)

    def __repr__(self):
        return f"GroupPoint(n={self.n})"


def as_matrix(K):
    return K.K if isinstance(K, GroupPoint) else np.asarray(K, dtype=complex)


def cartan_position(g, strict=False):
    """Angles ``q`` of the block Cartan decomposition of a unitary ``g``.

    The squared cosines are the eigenvalues of ``D D^dagger`` where ``D`` is
    the upper-left n x n block. Eigenvalues are clamped to [0, 1].

    Parameters
    ----------
    g : (2n, 2n) unitary array
    strict : bool
        If true, require ``q_n > 0``.
    """
    g = _check_square(as_matrix(g), "g")
    m = g.shape[0]
    if m % 2:
        raise ValueError("g must have even dimension")
    if np.abs(g.conj().T @ g - np.eye(m)).max() > 1e-10:
        raise NotUnitary("g is not unitary to 1e-10")
    n = m // 2
    D = g[:n, :n]
    lam = np.clip(np.linalg.eigvalsh(D @ D.conj().T), 0.0, 1.0)
    # ascending eigenvalues give non-increasing angles
    q = np.arccos(np.sqrt(lam))
    if strict and not q[-1] > 0:
        raise DegeneratePosition("smallest Cartan angle is zero")
    return CartanPosition(q=q)


def polar(Omega):
    """Left polar decomposition ``Omega = Lambda T``.

    Returns
    -------
    Lambda : Hermitian positive definite array
    T : unitary array
    """
    Omega = _check_square(Omega, "Omega")
    if sla.svdvals(Omega).min() < 1e-12:
        raise Singular("smallest singular value below 1e-12")
    T, Lam = sla.polar(Omega, side="left")
    return Lam, T


def herm_exp_action(L, k, t):
    """``exp(-i t L^k)`` for Hermitian ``L`` via its eigendecomposition."""
    L = _check_square(L, "L")
    if np.abs(L - L.conj().T).max() >= 1e-10:
        raise NotHermitian("generator is not Hermitian to 1e-10")
    if int(k) != k or k < 1:
        raise ValueError("k must be a positive integer")
    w, V = np.linalg.eigh(L)
    return (V * np.exp(-1j * t * w ** int(k))) @ V.conj().T
