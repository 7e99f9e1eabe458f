"""Brute-force reference: direct time transcription of the spacetime functional.

The trajectory is sampled on a uniform grid that hits every node.
Velocities and accelerations come from central differences, the force
integral uses trapezoid weights, and the whole functional is minimized over
all samples. At interior nodes carrying a velocity constraint the
acceleration may jump, so such a node gets one force sample per side plus a
discrete C^1 condition tying the two one-sided velocities together.
Nothing here touches modal coordinates or wiggly bases.
"""
from __future__ import annotations

import logging
import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .model import ModelSystem
from .spacetime import ConstraintSet, Underdetermined
from .trajectory import Trajectory

log = logging.getLogger(__name__)

GRID_TOL = 1e-9


class OracleConvergenceError(RuntimeError):
    def __init__(self, msg, x):
        super().__init__(msg)
        self.x = x


def make_grid(nodes, dt: float) -> np.ndarray:
    """Uniform grid of step ``dt`` through every node; rejects misaligned steps."""
    nodes = np.asarray(nodes, dtype=float)
    counts = np.diff(nodes) / dt
    steps = np.rint(counts).astype(int)
    if np.any(steps < 1) or np.any(np.abs(counts - steps) > GRID_TOL * np.maximum(1.0, counts)):
        raise ValueError(f"grid misalignment: dt={dt} does not divide the node gaps {np.diff(nodes)}")
    times = nodes[0] + dt * np.arange(steps.sum() + 1)
    times[np.concatenate([[0], np.cumsum(steps)])] = nodes
    return times


def node_indices(times, nodes) -> np.ndarray:
    idx = np.searchsorted(times, nodes)
    idx = np.clip(idx, 0, len(times) - 1)
    if not np.allclose(times[idx], nodes, rtol=0, atol=1e-12 * max(1.0, abs(nodes).max())):
        raise ValueError("grid does not contain every node")
    return idx


def difference_operators(N: int, dt: float) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """First and second derivative stencils on N+1 samples.

    Velocities are second order everywhere (one-sided at the ends). The end
    acceleration rows reuse the neighbouring central stencil; that choice
    is compatible with summation by parts against the trapezoid weights,
    which keeps velocity-constrained optima second-order accurate.
    """
    if N < 3:
        raise ValueError("need at least four samples")
    D1 = sp.lil_matrix((N + 1, N + 1))
    D2 = sp.lil_matrix((N + 1, N + 1))
    for j in range(1, N):
        D1[j, j - 1], D1[j, j + 1] = -0.5, 0.5
        D2[j, j - 1], D2[j, j], D2[j, j + 1] = 1.0, -2.0, 1.0
    D1[0, :3] = [-1.5, 2.0, -0.5]
    D1[N, N - 2:] = [0.5, -2.0, 1.5]
    D2[0, :3] = [1.0, -2.0, 1.0]
    D2[N, N - 2:] = [1.0, -2.0, 1.0]
    return (D1 / dt).tocsr(), (D2 / dt**2).tocsr()


def node_velocity_row(N: int, j: int, dt: float) -> np.ndarray:
    """Velocity stencil at a constrained node.

    Interior nodes average the two one-sided second-order stencils, so the
    estimate stays second order when the acceleration jumps at the node.
    """
    row = np.zeros(N + 1)
    if j == 0:
        row[:3] = [-1.5, 2.0, -0.5]
    elif j == N:
        row[N - 2:] = [0.5, -2.0, 1.5]
    elif j == 1 or j == N - 1:
        row[j - 1], row[j + 1] = -0.5, 0.5
    else:
        row[j - 2:j + 3] = [0.25, -1.0, 0.0, 1.0, -0.25]
    return row / dt


def _continuity_rows(split, N: int, dt: float, n: int):
    """Discrete C^1 at split nodes: left and right one-sided velocities agree."""
    if len(split) == 0:
        return None
    rows = np.zeros((len(split), N + 1))
    for i, j in enumerate(split):
        rows[i, j - 2:j + 1] += np.array([0.5, -2.0, 1.5]) / dt
        rows[i, j:j + 3] -= np.array([-1.5, 2.0, -0.5]) / dt
    return sp.kron(sp.csr_matrix(rows), sp.identity(n)).tocsr()


def _one_sided_rows(N: int, dt: float, j: int, sgn: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    cols = [j + sgn * k for k in range(3)]
    d1 = sp.csr_matrix((sgn * np.array([-1.5, 2.0, -0.5]) / dt, ([0, 0, 0], cols)), shape=(1, N + 1))
    d2 = sp.csr_matrix((np.array([1.0, -2.0, 1.0]) / dt**2, ([0, 0, 0], cols)), shape=(1, N + 1))
    return d1, d2


def _force_operators(N: int, dt: float, split):
    """Stacked velocity/acceleration rows, sample selector and trapezoid weights.

    Global central stencils, except that each node in ``split`` carries two
    force samples (left and right one-sided stencils) with half weight each.
    """
    D1, D2 = difference_operators(N, dt)
    P = sp.identity(N + 1, format="csr")
    w = np.full(N + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    b1, b2, bP, bw = [], [], [], []
    start = 0
    for j in sorted(int(j) for j in split):
        b1.append(D1[start:j]), b2.append(D2[start:j]), bP.append(P[start:j]), bw.append(w[start:j])
        for sgn in (-1, 1):
            d1, d2 = _one_sided_rows(N, dt, j, sgn)
            b1.append(d1), b2.append(d2), bP.append(P[j:j + 1]), bw.append([0.5 * w[j]])
        start = j + 1
    b1.append(D1[start:]), b2.append(D2[start:]), bP.append(P[start:]), bw.append(w[start:])
    st = lambda blocks: sp.vstack(blocks).tocsr()
    return st(b1), st(b2), st(bP), np.concatenate(bw)


def check_rigid_motions(sys: ModelSystem, constraints: ConstraintSet) -> None:
    """Reject problems leaving some force-free rigid motion unconstrained.

    On the null space Z of K every ``u = Z (c1 + c2 tau(t))`` with
    ``tau = (1 - exp(-alpha t)) / alpha`` is force free; the constraint rows
    must pin all such coefficient pairs.
    """
    lam, vec = np.linalg.eigh(sys.K)
    kmax = max(abs(lam).max(), 0.0)
    Z = vec[:, lam <= 1e-9 * kmax] if kmax > 0 else np.eye(sys.n)
    if Z.shape[1] == 0:
        return
    t0, al = constraints.nodes[0], sys.alpha
    tau = lambda t: (t - t0) if al == 0 else -np.expm1(-al * (t - t0)) / al
    dtau = lambda t: np.exp(-al * (t - t0))
    rows = []
    for e in constraints.entries:
        t = constraints.nodes[e.node]
        if e.A is not None and constraints.c_A * e.wA > 0:
            AZ = e.A @ Z
            rows.append(np.hstack([AZ, tau(t) * AZ]))
        if e.B is not None and constraints.c_B * e.wB > 0:
            BZ = e.B @ Z
            rows.append(np.hstack([np.zeros_like(BZ), dtau(t) * BZ]))
    G = np.vstack(rows) if rows else np.zeros((0, 2 * Z.shape[1]))
    norms = np.linalg.norm(G, axis=0)
    if np.any(norms == 0) or np.linalg.cond(G / norms) > 1e12:
        raise Underdetermined("underdetermined: rigid motion left unconstrained")


class DiscreteFunctional:
    """E + E_C (or E + E_WC) evaluated on samples ``U`` of shape (N+1, n)."""

    def __init__(self, sys: ModelSystem, constraints, times):
        from .warp import WarpedConstraintProblem

        times = np.asarray(times, dtype=float)
        steps = np.diff(times)
        dt = steps.mean()
        if np.abs(steps - dt).max() > 1e-9 * max(dt, 1.0):
            raise ValueError("oracle grid must be uniform")
        self.sys, self.times, self.dt = sys, times, dt
        if isinstance(constraints, WarpedConstraintProblem):
            self.warp, self.constraints = constraints.warp, constraints.constraints
        else:
            self.warp, self.constraints = None, constraints
        self.constraints.check_dimension(sys.n)
        n, N = sys.n, len(times) - 1
        self.n, self.N = n, N
        self.node_idx = node_indices(times, self.constraints.nodes)
        if np.any(np.diff(self.node_idx) < 3):
            raise ValueError("grid too coarse: every node interval needs at least 3 steps")
        vel_nodes = self.constraints.velocity_nodes()
        self.split = np.array([self.node_idx[k] for k in vel_nodes if 0 < k < len(self.node_idx) - 1], dtype=int)
        D1r, D2r, Pr, w = _force_operators(N, dt, self.split)
        M, K, D = (sp.csr_matrix(A) for A in (sys.M, sys.K, sys.D))
        self.R = (sp.kron(D2r, M) + sp.kron(D1r, D) + sp.kron(Pr, K)).tocsr()
        self.G = np.tile(sys.g, Pr.shape[0])
        Linv = np.linalg.inv(np.linalg.cholesky(sys.M))
        self.S = sp.kron(sp.diags(np.sqrt(w)), sp.csr_matrix(Linv)).tocsr()
        self.JE = (self.S @ self.R).tocsr()
        self.rE = self.S @ self.G
        D1 = difference_operators(N, dt)[0].tolil()
        for j in self.node_idx:
            D1[j, :] = node_velocity_row(N, j, dt)
        self.D1 = D1.tocsr()
        self.C = _continuity_rows(self.split, N, dt, n)

        # per-entry sampling operators
        self._terms = []
        cs = self.constraints
        for e in cs.entries:
            j = self.node_idx[e.node]
            P = sp.kron(sp.csr_matrix(([1.0], ([0], [j])), shape=(1, N + 1)), sp.identity(n)).tocsr()
            Vrow = sp.kron(sp.csr_matrix(node_velocity_row(N, j, dt)[None, :]), sp.identity(n)).tocsr()
            self._terms.append((e, P, Vrow))

    # -- residual stack -------------------------------------------------------
    def residual(self, x: np.ndarray) -> np.ndarray:
        cs = self.constraints
        parts = [self.JE @ x + self.rE]
        for e, P, Vrow in self._terms:
            u, v = P @ x, Vrow @ x
            if e.A is not None:
                Wu = u if self.warp is None else self.warp.W(u)
                parts.append(np.sqrt(cs.c_A * e.wA) * (e.A @ Wu - e.a))
            if e.B is not None:
                DWv = v if self.warp is None else self.warp.DW(u, v)
                parts.append(np.sqrt(cs.c_B * e.wB) * (e.B @ DWv - e.b))
        return np.concatenate(parts)

    def jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        cs = self.constraints
        blocks = [self.JE]
        n = self.n
        eye = np.eye(n)
        for e, P, Vrow in self._terms:
            u, v = P @ x, Vrow @ x
            if self.warp is None:
                DWm, T = eye, np.zeros((n, n))
            else:
                DWm = np.column_stack([self.warp.DW(u, c) for c in eye])
                T = np.column_stack([self.warp.d_DW(u, c, v) for c in eye])
            if e.A is not None:
                blocks.append(sp.csr_matrix(np.sqrt(cs.c_A * e.wA) * e.A @ DWm) @ P)
            if e.B is not None:
                s = np.sqrt(cs.c_B * e.wB)
                blocks.append(sp.csr_matrix(s * e.B @ DWm) @ Vrow + sp.csr_matrix(s * e.B @ T) @ P)
        return sp.vstack(blocks).tocsr()

    def value(self, U) -> float:
        r = self.residual(np.asarray(U, dtype=float).reshape(-1))
        return 0.5 * float(r @ r)

    def energy(self, U) -> float:
        r = self.JE @ np.asarray(U, dtype=float).reshape(-1) + self.rE
        return 0.5 * float(r @ r)

    def project(self, V) -> np.ndarray:
        """Closest perturbation (in the sample 2-norm) satisfying discrete C^1."""
        V = np.asarray(V, dtype=float)
        if self.C is None:
            return V
        x = V.reshape(-1)
        CCt = (self.C @ self.C.T).tocsc()
        x = x - self.C.T @ spla.spsolve(CCt, self.C @ x)
        return x.reshape(V.shape)

    def variation(self, U, V, h: float = 1e-4, project: bool = True) -> float:
        U = np.asarray(U, dtype=float)
        V = self.project(V) if project else np.asarray(V, dtype=float)
        return (self.value(U + h * V) - self.value(U - h * V)) / (2.0 * h)

    def trajectory(self, x: np.ndarray) -> Trajectory:
        U = x.reshape(self.N + 1, self.n)
        return Trajectory(self.times, U, self.D1 @ U)

    def lsq_step(self, J: sp.spmatrix, r: np.ndarray, x: np.ndarray | None = None, damp=None) -> np.ndarray:
        """Minimize ``|J s + r|^2 + s^T diag(damp) s`` subject to ``C (x + s) = 0``.

        Solved through the augmented system, which avoids squaring the
        condition number of ``J``.
        """
        m, d = J.shape
        k = 0 if self.C is None else self.C.shape[0]
        D = sp.diags(np.zeros(d) if damp is None else -np.asarray(damp))
        blocks = [[sp.identity(m), J, None], [J.T, D, None if k == 0 else self.C.T]]
        if k:
            blocks.append([None, self.C, None])
        A = sp.bmat(blocks).tocsc()
        cx = np.zeros(k) if (x is None or k == 0) else -(self.C @ x)
        rhs = np.concatenate([-r, np.zeros(d), cx])
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                sol = spla.spsolve(A, rhs)
            except (spla.MatrixRankWarning, RuntimeError) as exc:
                raise Underdetermined(f"underdetermined: singular transcribed system ({exc})") from exc
        if not np.all(np.isfinite(sol)):
            raise Underdetermined("underdetermined: singular transcribed system")
        return sol[m:m + d]


def transcribe_minimize(sys: ModelSystem, constraints: ConstraintSet, dt: float) -> Trajectory:
    """Minimizer of the transcribed E + E_C on the uniform grid of step ``dt``."""
    check_rigid_motions(sys, constraints)
    times = make_grid(constraints.nodes, dt)
    F = DiscreteFunctional(sys, constraints, times)
    x0 = np.zeros((F.N + 1) * F.n)
    x = F.lsq_step(F.jacobian(x0), F.residual(x0))
    return F.trajectory(x)


def transcribe_minimize_warped(
    sys: ModelSystem, problem, dt: float, init: Trajectory | None = None,
    max_iter: int = 100, tol: float = 1e-10,
) -> Trajectory:
    """Levenberg-damped Gauss-Newton on the transcribed residual stack."""
    times = make_grid(problem.constraints.nodes, dt)
    F = DiscreteFunctional(sys, problem, times)
    if init is None:
        init = transcribe_minimize(sys, problem.constraints, dt)
    else:
        check_rigid_motions(sys, problem.constraints)
    x = np.asarray(init.u, dtype=float).reshape(-1).copy()
    r = F.residual(x)
    f = 0.5 * r @ r
    mu = 0.0
    for it in range(max_iter):
        J = F.jacobian(x)
        diag = np.asarray(J.multiply(J).sum(axis=0)).ravel()
        for _ in range(12):
            try:
                step = F.lsq_step(J, r, x, mu * diag)
            except Underdetermined:
                step = None
            if step is not None:
                if np.abs(step).max() <= tol * max(1.0, np.abs(x).max()):
                    return F.trajectory(x + step)
                r_new = F.residual(x + step)
                f_new = 0.5 * r_new @ r_new
                if f_new <= f:
                    break
            mu = max(10.0 * mu, 1e-4)
        else:
            raise OracleConvergenceError("oracle Gauss-Newton: damping escalation failed", x)
        x, r, f = x + step, r_new, f_new
        mu *= 0.1
        log.debug("oracle GN iter %d f=%.6e", it, f)
    raise OracleConvergenceError(f"oracle Gauss-Newton did not converge in {max_iter} iterations", x)


def variation_probe(sys: ModelSystem, constraints, traj: Trajectory, v, h: float = 1e-4) -> float:
    """Central difference of the discrete functional at ``traj`` along ``v``.

    ``v`` is first projected onto the discrete C^1 samples.
    """
    F = DiscreteFunctional(sys, constraints, traj.times)
    return F.variation(traj.u, np.asarray(v, dtype=float).reshape(traj.u.shape), h)
