"""Warped node constraints and their Gauss-Newton solver.

A warp ``W`` maps linear displacements to warped ones. Position constraints
act on ``W(u(t_k))`` and velocity constraints on the chain-rule velocity
``DW(u(t_k)) u'(t_k)``. The optimization variable is still the wiggly
Hermite DOF vector.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .modal import ModalBasis
from .model import ModelSystem
from .spacetime import ConstraintSet, dofs_per_mode, dof_index, energy_residuals, solve_sparse
from .trajectory import Trajectory
from .wiggly import WigglySolution, solution_from_dofs

log = logging.getLogger(__name__)

MAX_ESCALATIONS = 10


@dataclass(frozen=True)
class WarpMap:
    """``W(u)``, its derivative ``DW(u, v)`` and optionally ``D2W(u, v, w)``.

    Without ``D2W`` the derivative of ``DW(u) v`` with respect to ``u`` is
    taken by central differences with step ``1e-6 (1 + |u|)``.
    """

    name: str
    W: Callable[[np.ndarray], np.ndarray]
    DW: Callable[[np.ndarray, np.ndarray], np.ndarray]
    D2W: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray] | None = None
    params: dict = field(default_factory=dict)

    def d_DW(self, u, e, v) -> np.ndarray:
        """Derivative of ``DW(u) v`` with respect to ``u`` along ``e``."""
        if self.D2W is not None:
            return self.D2W(u, e, v)
        eps = 1e-6 * (1.0 + np.linalg.norm(u))
        return (self.DW(u + eps * e, v) - self.DW(u - eps * e, v)) / (2.0 * eps)


def identity_warp() -> WarpMap:
    return WarpMap("identity", lambda u: np.array(u, dtype=float), lambda u, v: np.array(v, dtype=float),
                   lambda u, v, w: np.zeros_like(np.asarray(u, dtype=float)))


def linear_warp(scale: float) -> WarpMap:
    return WarpMap("linear", lambda u: scale * np.asarray(u), lambda u, v: scale * np.asarray(v),
                   lambda u, v, w: np.zeros_like(np.asarray(u, dtype=float)), {"scale": scale})


def poly_warp(eps: float = 0.1) -> WarpMap:
    """``W(u)_j = u_j + eps u_j^2`` (diagonal derivative)."""
    return WarpMap(
        "poly",
        lambda u: u + eps * u * u,
        lambda u, v: (1.0 + 2.0 * eps * u) * v,
        lambda u, v, w: 2.0 * eps * v * w,
        {"eps": eps},
    )


def mix_warp(eps: float = 0.1) -> WarpMap:
    """``W(u) = u + eps S(u * u)`` with S the cyclic shift ``(S x)_j = x_{j+1}``."""
    S = lambda x: np.roll(x, -1)
    return WarpMap(
        "mix",
        lambda u: u + eps * S(u * u),
        lambda u, v: v + 2.0 * eps * S(u * v),
        lambda u, v, w: 2.0 * eps * S(v * w),
        {"eps": eps},
    )


WARPS = {"identity": identity_warp, "poly": poly_warp, "mix": mix_warp, "linear": linear_warp}


def make_warp(spec: dict | None) -> WarpMap:
    spec = dict(spec or {"name": "identity"})
    name = spec.pop("name", "identity")
    if name not in WARPS:
        raise ValueError(f"unknown warp {name!r}; choose from {sorted(WARPS)}")
    return WARPS[name](**spec)


@dataclass(frozen=True)
class WarpedConstraintProblem:
    constraints: ConstraintSet
    warp: WarpMap


class ConvergenceError(RuntimeError):
    def __init__(self, msg, q, grad_norm):
        super().__init__(msg)
        self.q = q
        self.grad_norm = grad_norm


def _node_state(basis: ModalBasis, nodes, q, k):
    Q = q.reshape(basis.r, len(nodes), 2)
    return basis.phi @ Q[:, k, 0], basis.phi @ Q[:, k, 1]


def constraint_residuals(problem: WarpedConstraintProblem, basis: ModalBasis, q) -> tuple[np.ndarray, np.ndarray]:
    """Warped constraint residual vector and its Jacobian in DOF space."""
    cs, warp = problem.constraints, problem.warp
    cs.check_dimension(basis.n)
    nodes = cs.nodes
    d = basis.r * dofs_per_mode(nodes)
    q = np.asarray(q, dtype=float)
    res, jac = [], []
    for e in cs.entries:
        u, v = _node_state(basis, nodes, q, e.node)
        vcols = [dof_index(nodes, i, e.node) for i in range(basis.r)]
        dcols = [dof_index(nodes, i, e.node, True) for i in range(basis.r)]
        DWphi = np.column_stack([warp.DW(u, p) for p in basis.phi.T])
        if e.A is not None:
            s = np.sqrt(cs.c_A * e.wA)
            res.append(s * (e.A @ warp.W(u) - e.a))
            J = np.zeros((e.A.shape[0], d))
            J[:, vcols] = s * e.A @ DWphi
            jac.append(J)
        if e.B is not None:
            s = np.sqrt(cs.c_B * e.wB)
            res.append(s * (e.B @ warp.DW(u, v) - e.b))
            J = np.zeros((e.B.shape[0], d))
            J[:, dcols] = s * e.B @ DWphi
            J[:, vcols] = s * e.B @ np.column_stack([warp.d_DW(u, p, v) for p in basis.phi.T])
            jac.append(J)
    return np.concatenate(res), np.vstack(jac)


def eval_EWC(problem: WarpedConstraintProblem, basis: ModalBasis, q) -> float:
    r, _ = constraint_residuals(problem, basis, q)
    return 0.5 * float(r @ r)


def warped_gradient(problem: WarpedConstraintProblem, basis: ModalBasis, q) -> np.ndarray:
    r, J = constraint_residuals(problem, basis, q)
    return J.T @ r


def solve_warped(
    sys: ModelSystem,
    basis: ModalBasis,
    problem: WarpedConstraintProblem,
    init=None,
    max_iter: int = 50,
    tol: float = 1e-10,
    damping: float = 0.0,
) -> WigglySolution:
    """Minimize E + E_WC over the wiggly DOF by Levenberg-damped Gauss-Newton.

    Starts from the unwarped sparse solution unless ``init`` is given. A step
    is accepted only if it does not increase the objective; otherwise the
    damping grows tenfold, at most ten times in a row.
    """
    nodes = problem.constraints.nodes
    JE, rE = energy_residuals(basis, nodes)
    q = solve_sparse(sys, basis, problem.constraints).q if init is None else np.array(init, dtype=float)

    def residual(q):
        rC, JC = constraint_residuals(problem, basis, q)
        return np.concatenate([JE @ q + rE, rC]), np.vstack([JE, JC])

    r, J = residual(q)
    f = 0.5 * float(r @ r)
    history = [f]
    iterations = 0
    mu = damping
    for _ in range(max_iter + 1):
        g = J.T @ r
        A = J.T @ J
        gnorm = float(np.abs(g).max())
        gscale = max(1.0, np.abs(A).sum(axis=1).max() * max(1.0, np.abs(q).max()))
        if gnorm <= tol * gscale:
            break
        if iterations == max_iter:
            raise ConvergenceError(f"Gauss-Newton did not converge in {max_iter} iterations", q, gnorm)
        for _esc in range(MAX_ESCALATIONS + 1):
            step = None
            try:
                cho = scipy.linalg.cho_factor(A + mu * np.diag(np.diag(A)))
                step = scipy.linalg.cho_solve(cho, -g)
            except np.linalg.LinAlgError:
                pass
            if step is not None and np.all(np.isfinite(step)):
                if np.abs(step).max() <= tol * max(1.0, np.abs(q).max()):
                    break
                r_new, J_new = residual(q + step)
                f_new = 0.5 * float(r_new @ r_new)
                if f_new <= f:
                    break
            mu = max(10.0 * mu, 1e-4)
        else:
            raise ConvergenceError("Gauss-Newton damping escalation failed", q, gnorm)
        if np.abs(step).max() <= tol * max(1.0, np.abs(q).max()):
            break
        q, r, J, f = q + step, r_new, J_new, f_new
        history.append(f)
        iterations += 1
        mu = damping if mu <= damping else 0.1 * mu
        log.debug("GN iter %d: f=%.12e |step|=%.3e", iterations, f, np.abs(step).max())

    rq = JE @ q + rE
    return solution_from_dofs(
        basis, nodes, q,
        {"solver": "warped", "iterations": iterations, "history": history, "E": 0.5 * float(rq @ rq),
         "E_WC": eval_EWC(problem, basis, q),
         "warp": problem.warp.name},
    )


def warp_trajectory(sol: WigglySolution, warp: WarpMap, times, velocities: bool = False) -> Trajectory:
    times = np.asarray(times, dtype=float)
    U = sol.u(times, 0)
    WU = np.array([warp.W(u) for u in U])
    V = None
    if velocities:
        Ud = sol.u(times, 1)
        V = np.array([warp.DW(u, v) for u, v in zip(U, Ud)])
    return Trajectory(times, WU, V)
