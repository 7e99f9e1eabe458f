"""Generalized eigenproblem K phi = lam M phi and modal coordinates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import ModelSystem

RIGID_REL = 1e-9
RIGID_ABS = 1e-12


@dataclass(frozen=True)
class ModalBasis:
    """Lowest ``r`` M-orthonormal eigenmodes of a :class:`ModelSystem`.

    ``delta[i] = (alpha + beta * lam[i]) / 2`` so that ``2 delta`` is the
    modal damping coefficient of ``D = alpha M + beta K``. ``gm[i]`` is
    ``phi_i^T g``, i.e. the coefficient of ``M phi_i`` in ``g``.
    """

    system: ModelSystem
    lam: np.ndarray
    phi: np.ndarray
    delta: np.ndarray
    gm: np.ndarray
    rigid: np.ndarray

    @property
    def r(self) -> int:
        return self.phi.shape[1]

    @property
    def n(self) -> int:
        return self.phi.shape[0]


def eigendecompose(sys: ModelSystem, r: int | None = None) -> ModalBasis:
    n = sys.n
    r = n if r is None else int(r)
    if not 1 <= r <= n:
        raise ValueError(f"number of modes r={r} must lie in [1, {n}]")
    # M = L L^T reduces to the standard problem L^-1 K L^-T y = lam y
    L = np.linalg.cholesky(sys.M)
    C = scipy.linalg.solve_triangular(L, sys.K, lower=True)
    C = scipy.linalg.solve_triangular(L, C.T, lower=True)
    C = 0.5 * (C + C.T)
    lam, Y = np.linalg.eigh(C)
    phi = scipy.linalg.solve_triangular(L.T, Y, lower=False)

    lam_max = lam.max() if n else 0.0
    thresh = RIGID_ABS if lam_max <= RIGID_ABS else RIGID_REL * lam_max
    rigid = lam < thresh
    lam = np.where(rigid, 0.0, lam)

    for i in range(n):
        k = np.argmax(np.abs(phi[:, i]))
        if phi[k, i] < 0:
            phi[:, i] = -phi[:, i]

    lam, phi, rigid = lam[:r], phi[:, :r], rigid[:r]
    delta = 0.5 * (sys.alpha + sys.beta * lam)
    gm = phi.T @ sys.g
    return ModalBasis(system=sys, lam=lam, phi=phi, delta=delta, gm=gm, rigid=rigid)


def to_modal(basis: ModalBasis, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != basis.n:
        raise ValueError(f"expected vectors of length {basis.n}, got {u.shape}")
    return u @ (basis.system.M @ basis.phi)


def from_modal(basis: ModalBasis, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape[-1] != basis.r:
        raise ValueError(f"expected modal vectors of length {basis.r}, got {w.shape}")
    return w @ basis.phi.T


def check_basis(basis: ModalBasis) -> dict:
    """Eigen-residual (relative to ||K||) and M-orthonormality error."""
    sys = basis.system
    knorm = max(np.linalg.norm(sys.K, 2), np.finfo(float).tiny)
    res = sys.K @ basis.phi - (sys.M @ basis.phi) * basis.lam
    ortho = basis.phi.T @ sys.M @ basis.phi - np.eye(basis.r)
    return {
        "eig_residual": float(np.linalg.norm(res, axis=0).max() / knorm),
        "orthonormality": float(np.abs(ortho).max()),
    }


def mode_table(basis: ModalBasis) -> list[dict]:
    from .wiggly import classify

    return [
        {
            "mode": i,
            "lambda": float(basis.lam[i]),
            "delta": float(basis.delta[i]),
            "g": float(basis.gm[i]),
            "regime": classify(basis.lam[i], basis.delta[i]).name,
            "rigid": bool(basis.rigid[i]),
        }
        for i in range(basis.r)
    ]
