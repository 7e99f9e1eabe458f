"""Small linear elastodynamic systems  M u'' + (alpha M + beta K) u' + K u + g = 0.

Two desk-scale builders are provided: 1D mass-spring chains and 2D
plane-stress linear triangle meshes. Both use lumped (diagonal) mass and
eliminate clamped degrees of freedom from the output.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SYM_TOL = 1e-12
PSD_TOL = 1e-10


@dataclass(frozen=True)
class ModelSystem:
    """Physical data of the linear dynamics.

    ``g`` is the constant vector exactly as it appears on the left-hand side
    of the equation of motion, so a gravity acceleration ``a`` enters as
    ``g = -M a``. The Rayleigh damping matrix is derived on demand.
    """

    M: np.ndarray
    K: np.ndarray
    alpha: float = 0.0
    beta: float = 0.0
    g: np.ndarray | None = None

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        n = M.shape[0]
        g = np.zeros(n) if self.g is None else np.asarray(self.g, dtype=float).reshape(-1)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "beta", float(self.beta))
        self.validate()

    @property
    def n(self) -> int:
        return self.M.shape[0]

    @property
    def D(self) -> np.ndarray:
        return self.alpha * self.M + self.beta * self.K

    def validate(self) -> None:
        n = self.n
        if self.M.shape != (n, n) or self.K.shape != (n, n) or self.g.shape != (n,):
            raise ValueError(f"inconsistent shapes M{self.M.shape} K{self.K.shape} g{self.g.shape}")
        if not (np.all(np.isfinite(self.M)) and np.all(np.isfinite(self.K)) and np.all(np.isfinite(self.g))):
            raise ValueError("non-finite entries in system matrices")
        for name, A in (("M", self.M), ("K", self.K)):
            scale = max(np.abs(A).max(), np.finfo(float).tiny)
            if np.abs(A - A.T).max() > SYM_TOL * scale:
                raise ValueError(f"{name} is not symmetric")
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("Rayleigh coefficients must be non-negative")
        if np.linalg.eigvalsh(self.M).min() <= 0:
            raise ValueError("mass matrix is not positive definite")
        knorm = np.linalg.norm(self.K, 2)
        if n and np.linalg.eigvalsh(self.K).min() < -PSD_TOL * knorm:
            raise ValueError("stiffness matrix is not positive semidefinite")


@dataclass(frozen=True)
class ChainSpec:
    """Point masses joined by springs.

    A spring ``(i, j, k)`` with ``j`` equal to ``None`` or ``-1`` connects DOF
    ``i`` to ground. ``gravity`` is a per-DOF acceleration (scalar or list).
    """

    masses: Sequence[float]
    springs: Sequence[tuple] = ()
    fixed: Sequence[int] = ()
    gravity: float | Sequence[float] = 0.0

    def validate(self) -> None:
        n = len(self.masses)
        if n == 0:
            raise ValueError("empty system")
        if any(m <= 0 for m in self.masses):
            raise ValueError("masses must be positive")
        for s in self.springs:
            i, j, k = s
            if k <= 0:
                raise ValueError(f"spring {s} has non-positive stiffness")
            for idx in (i, j):
                if idx is None or idx == -1:
                    continue
                if not 0 <= idx < n:
                    raise ValueError(f"spring {s} index out of range")
        for f in self.fixed:
            if not 0 <= f < n:
                raise ValueError(f"fixed DOF {f} out of range")
        if len(set(self.fixed)) >= n:
            raise ValueError("empty system")


@dataclass(frozen=True)
class Mesh2DSpec:
    vertices: Sequence[Sequence[float]]
    triangles: Sequence[Sequence[int]]
    young: float = 1.0
    poisson: float = 0.3
    density: float = 1.0
    fixed: Sequence[int] = ()
    gravity: Sequence[float] = (0.0, 0.0)
    thickness: float = 1.0

    def validate(self) -> None:
        V = np.asarray(self.vertices, dtype=float)
        T = np.asarray(self.triangles, dtype=int)
        if V.ndim != 2 or V.shape[1] != 2:
            raise ValueError("vertices must be an (nv, 2) array")
        if T.ndim != 2 or T.shape[1] != 3:
            raise ValueError("triangles must be an (nt, 3) array")
        if T.size and (T.min() < 0 or T.max() >= len(V)):
            raise ValueError("triangle index out of range")
        if not 0.0 <= self.poisson < 0.5:
            raise ValueError("poisson ratio must lie in [0, 0.5)")
        if self.young <= 0 or self.density <= 0:
            raise ValueError("young modulus and density must be positive")
        for f in self.fixed:
            if not 0 <= f < len(V):
                raise ValueError(f"fixed vertex {f} out of range")
        if len(set(self.fixed)) >= len(V):
            raise ValueError("empty system")


def _eliminate(M, K, g, fixed):
    free = np.setdiff1d(np.arange(M.shape[0]), np.asarray(sorted(set(fixed)), dtype=int))
    if free.size == 0:
        raise ValueError("empty system")
    ix = np.ix_(free, free)
    return M[ix], K[ix], g[free], free


def assemble_chain(spec: ChainSpec, alpha: float = 0.0, beta: float = 0.0) -> ModelSystem:
    spec.validate()
    n = len(spec.masses)
    M = np.diag(np.asarray(spec.masses, dtype=float))
    K = np.zeros((n, n))
    for i, j, k in spec.springs:
        if j is None or j == -1:
            K[i, i] += k
        elif i is None or i == -1:
            K[j, j] += k
        else:
            K[i, i] += k
            K[j, j] += k
            K[i, j] -= k
            K[j, i] -= k
    grav = np.broadcast_to(np.asarray(spec.gravity, dtype=float), (n,))
    g = -M @ grav
    M, K, g, _ = _eliminate(M, K, g, spec.fixed)
    return ModelSystem(M=M, K=K, alpha=alpha, beta=beta, g=g)


def plane_stress_matrix(young: float, poisson: float) -> np.ndarray:
    c = young / (1.0 - poisson**2)
    return c * np.array([[1.0, poisson, 0.0], [poisson, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - poisson)]])


def triangle_stiffness(xy: np.ndarray, Dmat: np.ndarray, thickness: float = 1.0) -> tuple[np.ndarray, float]:
    """Constant-strain triangle stiffness (6x6, DOF order x0 y0 x1 y1 x2 y2) and signed area."""
    (x0, y0), (x1, y1), (x2, y2) = xy
    twoA = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
    b = np.array([y1 - y2, y2 - y0, y0 - y1]) / twoA
    c = np.array([x2 - x1, x0 - x2, x1 - x0]) / twoA
    B = np.zeros((3, 6))
    B[0, 0::2] = b
    B[1, 1::2] = c
    B[2, 0::2] = c
    B[2, 1::2] = b
    area = 0.5 * twoA
    return thickness * abs(area) * B.T @ Dmat @ B, area


def assemble_mesh2d(spec: Mesh2DSpec, alpha: float = 0.0, beta: float = 0.0) -> ModelSystem:
    spec.validate()
    V = np.asarray(spec.vertices, dtype=float)
    T = np.asarray(spec.triangles, dtype=int)
    nv = len(V)
    bbox = np.ptp(V, axis=0).max() if nv > 1 else 0.0
    Dmat = plane_stress_matrix(spec.young, spec.poisson)
    K = np.zeros((2 * nv, 2 * nv))
    lumped = np.zeros(nv)
    for t, tri in enumerate(T):
        if _area(V[tri]) <= 1e-12 * bbox**2:
            raise ValueError(f"degenerate triangle {t}: {tuple(int(i) for i in tri)}")
        Ke, area = triangle_stiffness(V[tri], Dmat, spec.thickness)
        dofs = np.ravel([[2 * v, 2 * v + 1] for v in tri])
        K[np.ix_(dofs, dofs)] += Ke
        lumped[tri] += spec.density * spec.thickness * abs(area) / 3.0
    K = 0.5 * (K + K.T)
    mdiag = np.repeat(lumped, 2)
    if np.any(mdiag <= 0):
        raise ValueError("vertex not referenced by any triangle")
    M = np.diag(mdiag)
    grav = np.tile(np.asarray(spec.gravity, dtype=float), nv)
    g = -mdiag * grav
    fixed_dofs = [d for v in spec.fixed for d in (2 * v, 2 * v + 1)]
    M, K, g, _ = _eliminate(M, K, g, fixed_dofs)
    return ModelSystem(M=M, K=K, alpha=alpha, beta=beta, g=g)


def _area(xy):
    (x0, y0), (x1, y1), (x2, y2) = xy
    return 0.5 * abs((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))


def rect_mesh(nx: int, ny: int, width: float = 1.0, height: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Structured triangulation of a rectangle; returns (vertices, triangles)."""
    xs = np.linspace(0.0, width, nx + 1)
    ys = np.linspace(0.0, height, ny + 1)
    verts = np.array([(x, y) for y in ys for x in xs])
    tris = []
    for j in range(ny):
        for i in range(nx):
            v0 = j * (nx + 1) + i
            v1, v2, v3 = v0 + 1, v0 + nx + 1, v0 + nx + 2
            tris += [(v0, v1, v3), (v0, v3, v2)]
    return verts, np.array(tris)
