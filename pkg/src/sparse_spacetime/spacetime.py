"""Force-minimizing spacetime problems over the wiggly Hermite DOF space.

The dynamics energy  E = 1/2 int ||M u'' + D u' + K u + g||^2_{M^-1} dt  is
block-diagonal in modal coordinates and is assembled per mode by Gauss
quadrature of the force residual. Node constraints only see node values and
node velocities, which are DOF themselves, so the constraint energy is an
exact quadratic in the DOF.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg
from scipy.interpolate import CubicHermiteSpline

from .modal import ModalBasis, from_modal, to_modal
from .model import ModelSystem
from .wiggly import (
    WigglySolution,
    classify,
    hermite_inverse,
    ode_residual_all,
    one_sided,
    operator_on_basis,
    particular,
    solution_from_dofs,
)

log = logging.getLogger(__name__)

QUAD_REL = 1e-10
MAX_PANELS = 64
SINGULAR_COND = 1e13
SPAN_TOL = 1e-9


class Underdetermined(ValueError):
    pass


@dataclass(frozen=True)
class NodeConstraint:
    """Constraints ``A u(t_k) = a`` and ``B u'(t_k) = b`` at node index ``node``.

    ``wA``/``wB`` scale the global weights at this node (default 1).
    """

    node: int
    A: np.ndarray | None = None
    a: np.ndarray | None = None
    B: np.ndarray | None = None
    b: np.ndarray | None = None
    wA: float = 1.0
    wB: float = 1.0

    def __post_init__(self):
        for M_name, v_name in (("A", "a"), ("B", "b")):
            M = getattr(self, M_name)
            if M is None:
                continue
            M = np.atleast_2d(np.asarray(M, dtype=float))
            v = getattr(self, v_name)
            v = np.zeros(M.shape[0]) if v is None else np.asarray(v, dtype=float).reshape(-1)
            if v.shape[0] != M.shape[0]:
                raise ValueError(f"node {self.node}: {M_name} has {M.shape[0]} rows but {v_name} has {v.shape[0]}")
            if not (np.all(np.isfinite(M)) and np.all(np.isfinite(v))):
                raise ValueError(f"node {self.node}: non-finite constraint data")
            object.__setattr__(self, M_name, M)
            object.__setattr__(self, v_name, v)

    @property
    def has_velocity(self) -> bool:
        return self.B is not None and self.B.shape[0] > 0


@dataclass(frozen=True)
class ConstraintSet:
    nodes: np.ndarray
    entries: tuple
    c_A: float = 1e3
    c_B: float = 1e3

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "entries", tuple(self.entries))
        if nodes.ndim != 1 or len(nodes) < 2 or np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing with at least two entries")
        if self.c_A < 0 or self.c_B < 0:
            raise ValueError("weights must be non-negative")
        if not any(e.A is not None or e.B is not None for e in self.entries):
            raise ValueError("constraint set has no constraints")
        for e in self.entries:
            if not 0 <= e.node < len(nodes):
                raise ValueError(f"constraint node index {e.node} out of range")

    @property
    def m(self) -> int:
        return len(self.nodes) - 1

    def check_dimension(self, n: int) -> None:
        for e in self.entries:
            for M in (e.A, e.B):
                if M is not None and (M.shape[1] != n or M.shape[0] > n):
                    raise ValueError(f"node {e.node}: constraint matrix shape {M.shape} incompatible with n={n}")

    def velocity_nodes(self) -> set[int]:
        return {e.node for e in self.entries if e.has_velocity and self.c_B * e.wB > 0}

    def scaled(self, gamma: float) -> "ConstraintSet":
        return ConstraintSet(self.nodes, self.entries, gamma * self.c_A, gamma * self.c_B)


@dataclass(frozen=True)
class HardKeyframes:
    nodes: np.ndarray
    u: np.ndarray
    v0: np.ndarray
    vm: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        u = np.atleast_2d(np.asarray(self.u, dtype=float))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v0", np.asarray(self.v0, dtype=float).reshape(-1))
        object.__setattr__(self, "vm", np.asarray(self.vm, dtype=float).reshape(-1))
        if nodes.ndim != 1 or len(nodes) < 2 or np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing with at least two entries")
        if u.shape[0] != len(nodes):
            raise ValueError("need exactly one keyframe per node")
        if self.v0.shape != (u.shape[1],) or self.vm.shape != (u.shape[1],):
            raise ValueError("boundary velocities must match keyframe dimension")


@dataclass(frozen=True)
class QuadraticForm:
    """``1/2 q^T H q + h^T q + c``."""

    H: np.ndarray
    h: np.ndarray
    c: float = 0.0

    def value(self, q) -> float:
        q = np.asarray(q, dtype=float)
        return float(0.5 * q @ self.H @ q + self.h @ q + self.c)

    def gradient(self, q) -> np.ndarray:
        return self.H @ np.asarray(q, dtype=float) + self.h

    def __add__(self, other: "QuadraticForm") -> "QuadraticForm":
        return QuadraticForm(self.H + other.H, self.h + other.h, self.c + other.c)

    def scaled(self, gamma: float) -> "QuadraticForm":
        return QuadraticForm(gamma * self.H, gamma * self.h, gamma * self.c)

    @classmethod
    def from_residuals(cls, J: np.ndarray, r0: np.ndarray) -> "QuadraticForm":
        """Form of ``1/2 ||J q + r0||^2``."""
        H = J.T @ J
        return cls(0.5 * (H + H.T), J.T @ r0, 0.5 * float(r0 @ r0))


# -- DOF layout ---------------------------------------------------------------

def dofs_per_mode(nodes) -> int:
    return 2 * len(nodes)


def dof_index(nodes, mode: int, node: int, velocity: bool = False) -> int:
    return mode * dofs_per_mode(nodes) + 2 * node + int(velocity)


def node_maps(basis: ModalBasis, nodes, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Matrices taking q to u(t_k) and u'(t_k), each n x d."""
    d = basis.r * dofs_per_mode(nodes)
    U = np.zeros((basis.n, d))
    V = np.zeros((basis.n, d))
    for i in range(basis.r):
        U[:, dof_index(nodes, i, k)] = basis.phi[:, i]
        V[:, dof_index(nodes, i, k, True)] = basis.phi[:, i]
    return U, V


# -- dynamics energy ------------------------------------------------------------

def _interval_rows(lam, delta, gm, length, panels):
    """Rows of sqrt(weight) * residual on one interval as an affine map of local Hermite data."""
    regime = classify(lam, delta)
    Ci = hermite_inverse(regime, lam, delta, length)
    x, w = np.polynomial.legendre.leggauss(7)
    edges = np.linspace(-0.5 * length, 0.5 * length, panels + 1)
    s = (0.5 * (edges[1:] + edges[:-1])[:, None] + 0.5 * np.diff(edges)[:, None] * x).ravel()
    wt = (0.5 * np.diff(edges)[:, None] * w).ravel()
    ell = operator_on_basis(regime, lam, delta, s) @ Ci
    wp = particular(lam, delta, gm)
    kappa = lam * wp + gm
    const = kappa - ell @ np.array([wp, 0.0, wp, 0.0])
    sw = np.sqrt(wt)
    return sw[:, None] * ell, sw * const


def _adaptive_rows(lam, delta, gm, length):
    panels = 1
    rows, const = _interval_rows(lam, delta, gm, length, panels)
    while panels < MAX_PANELS:
        rows2, const2 = _interval_rows(lam, delta, gm, length, 2 * panels)
        G1 = np.column_stack([rows, const])
        G2 = np.column_stack([rows2, const2])
        G1, G2 = G1.T @ G1, G2.T @ G2
        panels *= 2
        rows, const = rows2, const2
        if np.abs(G1 - G2).max() <= QUAD_REL * max(np.abs(G2).max(), np.finfo(float).tiny):
            break
    else:
        log.warning("quadrature did not settle for lam=%g delta=%g length=%g", lam, delta, length)
    return rows, const


def energy_residuals(basis: ModalBasis, nodes) -> tuple[np.ndarray, np.ndarray]:
    """``(J, r0)`` with  E(q) = 1/2 ||J q + r0||^2  (quadrature-weighted force residuals)."""
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 1 or len(nodes) < 2 or np.any(np.diff(nodes) <= 0):
        raise ValueError("nodes must be strictly increasing with at least two entries")
    d = basis.r * dofs_per_mode(nodes)
    blocks, consts = [], []
    for i in range(basis.r):
        for j in range(len(nodes) - 1):
            rows, const = _adaptive_rows(basis.lam[i], basis.delta[i], basis.gm[i], nodes[j + 1] - nodes[j])
            J = np.zeros((rows.shape[0], d))
            start = dof_index(nodes, i, j)
            J[:, start:start + 4] = rows
            blocks.append(J)
            consts.append(const)
    return np.vstack(blocks), np.concatenate(consts)


def assemble_E(basis: ModalBasis, nodes) -> QuadraticForm:
    return QuadraticForm.from_residuals(*energy_residuals(basis, nodes))


def _residual_energy(J: np.ndarray, r0: np.ndarray, q: np.ndarray) -> float:
    # nonnegative by construction, unlike the expanded quadratic near zero
    r = J @ q + r0
    return 0.5 * float(r @ r)


# -- constraint energy ------------------------------------------------------------

def constraint_residuals(constraints: ConstraintSet, basis: ModalBasis) -> tuple[np.ndarray, np.ndarray]:
    """``(J, r0)`` with  E_C(q) = 1/2 ||J q + r0||^2."""
    constraints.check_dimension(basis.n)
    nodes = constraints.nodes
    rows, consts = [], []
    for e in constraints.entries:
        U, V = node_maps(basis, nodes, e.node)
        if e.A is not None:
            s = np.sqrt(constraints.c_A * e.wA)
            rows.append(s * e.A @ U)
            consts.append(-s * e.a)
        if e.B is not None:
            s = np.sqrt(constraints.c_B * e.wB)
            rows.append(s * e.B @ V)
            consts.append(-s * e.b)
    return np.vstack(rows), np.concatenate(consts)


def assemble_EC(constraints: ConstraintSet, basis: ModalBasis) -> QuadraticForm:
    return QuadraticForm.from_residuals(*constraint_residuals(constraints, basis))


def default_weights(basis: ModalBasis, nodes) -> float:
    """1e3 times the energy of the zero trajectory (or 1e3 when that is zero)."""
    scale = assemble_E(basis, nodes).c
    return 1e3 * (scale if scale > 0 else 1.0)


# -- solvers ------------------------------------------------------------------------

def _check_definite(H: np.ndarray, basis: ModalBasis, nodes) -> None:
    diag = np.diag(H).copy()
    per_mode = dofs_per_mode(nodes)
    if np.any(diag <= 0):
        bad = int(np.argmax(diag <= 0)) // per_mode
        raise Underdetermined(f"underdetermined: mode {bad} unconstrained")
    sc = 1.0 / np.sqrt(diag)
    evals, evecs = np.linalg.eigh(H * sc[:, None] * sc)
    if evals[0] <= evals[-1] / SINGULAR_COND:
        null = evecs[:, 0].reshape(basis.r, per_mode)
        mode = int(np.argmax(np.linalg.norm(null, axis=1)))
        kind = "rigid mode" if basis.rigid[mode] else "mode"
        raise Underdetermined(f"underdetermined: {kind} {mode} unconstrained (lambda={basis.lam[mode]:g})")


def _minimize(form: QuadraticForm, basis: ModalBasis, nodes) -> np.ndarray:
    _check_definite(form.H, basis, nodes)
    cho = scipy.linalg.cho_factor(form.H)
    return scipy.linalg.cho_solve(cho, -form.h)


def solve_sparse(sys: ModelSystem, basis: ModalBasis, constraints: ConstraintSet) -> WigglySolution:
    nodes = constraints.nodes
    JE, rE = energy_residuals(basis, nodes)
    JC, rC = constraint_residuals(constraints, basis)
    q = _minimize(QuadraticForm.from_residuals(JE, rE) + QuadraticForm.from_residuals(JC, rC), basis, nodes)
    return solution_from_dofs(
        basis, nodes, q,
        {"solver": "sparse", "E": _residual_energy(JE, rE, q), "E_C": _residual_energy(JC, rC, q)},
    )


def solve_hard(sys: ModelSystem, basis: ModalBasis, kf: HardKeyframes) -> WigglySolution:
    nodes = kf.nodes
    m = len(nodes) - 1
    W = to_modal(basis, kf.u)
    back = W @ basis.phi.T
    for k in range(m + 1):
        if np.linalg.norm(back[k] - kf.u[k]) > SPAN_TOL * (1.0 + np.linalg.norm(kf.u[k])):
            raise ValueError(f"unrepresentable keyframe at node {k}: target outside the retained modes")
    v0, vm = to_modal(basis, kf.v0), to_modal(basis, kf.vm)
    for v, name in ((kf.v0, "v0"), (kf.vm, "vm")):
        if np.linalg.norm(to_modal(basis, v) @ basis.phi.T - v) > SPAN_TOL * (1.0 + np.linalg.norm(v)):
            raise ValueError(f"unrepresentable keyframe: boundary velocity {name} outside the retained modes")

    d = basis.r * dofs_per_mode(nodes)
    q = np.zeros(d)
    pinned = np.zeros(d, dtype=bool)
    for i in range(basis.r):
        for k in range(m + 1):
            q[dof_index(nodes, i, k)] = W[k, i]
            pinned[dof_index(nodes, i, k)] = True
        q[dof_index(nodes, i, 0, True)] = v0[i]
        q[dof_index(nodes, i, m, True)] = vm[i]
        pinned[dof_index(nodes, i, 0, True)] = pinned[dof_index(nodes, i, m, True)] = True

    JE, rE = energy_residuals(basis, nodes)
    E = QuadraticForm.from_residuals(JE, rE)
    free = ~pinned
    if free.any():
        Hff = E.H[np.ix_(free, free)]
        rhs = -(E.h[free] + E.H[np.ix_(free, pinned)] @ q[pinned])
        q[free] = scipy.linalg.solve(Hff, rhs, assume_a="pos")
    return solution_from_dofs(basis, nodes, q, {"solver": "hard", "E": _residual_energy(JE, rE, q)})


def hard_as_constraints(kf: HardKeyframes, c: float) -> ConstraintSet:
    """Penalty version of hard keyframes: A = I at every node, B = I at both ends."""
    n = kf.u.shape[1]
    I = np.eye(n)
    m = len(kf.nodes) - 1
    entries = []
    for k in range(m + 1):
        kw = {"A": I, "a": kf.u[k]}
        if k == 0:
            kw.update(B=I, b=kf.v0)
        if k == m:
            kw.update(B=I, b=kf.vm)
        entries.append(NodeConstraint(k, **kw))
    return ConstraintSet(kf.nodes, entries, c, c)


# -- verification ------------------------------------------------------------------

@dataclass
class StationarityReport:
    max_variation: float = 0.0
    raw_variation: float = 0.0
    variation_scale: float = 1.0
    dof_gradient: float = 0.0
    dof_gradient_scale: float = 1.0
    c2_jumps: list = field(default_factory=list)
    max_c2_jump: float = 0.0
    c2_scale: float = 1.0
    ode_residual: float = 0.0
    node_conditions: float = 0.0
    probes: int = 0

    def checks(self, variation_tol=1e-4, gradient_tol=1e-8, smooth_tol=1e-6, ode_tol=1e-8) -> dict:
        return {
            "variation": self.max_variation <= variation_tol * self.variation_scale,
            "dof_gradient": self.dof_gradient <= gradient_tol * self.dof_gradient_scale,
            "smoothness": self.max_c2_jump <= smooth_tol * self.c2_scale,
            "ode_residual": self.ode_residual <= ode_tol,
            "node_conditions": self.node_conditions <= smooth_tol,
        }

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _constraint_gradient(sol: WigglySolution, problem) -> np.ndarray:
    from .warp import WarpedConstraintProblem, warped_gradient

    if isinstance(problem, WarpedConstraintProblem):
        return warped_gradient(problem, sol.basis, sol.q)
    return assemble_EC(problem, sol.basis).gradient(sol.q)


def dof_gradient(sol: WigglySolution, problem) -> tuple[float, float]:
    """Infinity norm of the DOF-space gradient of E + constraint energy, and its scale."""
    E = assemble_E(sol.basis, sol.nodes)
    gC = _constraint_gradient(sol, problem)
    grad = E.gradient(sol.q) + gC
    scale = np.abs(E.H).sum(axis=1).max() * np.abs(sol.q).max() + np.abs(E.h).max() + np.abs(gC).max()
    return float(np.abs(grad).max()), float(max(scale, np.finfo(float).tiny))


def energy_node_terms(sol: WigglySolution) -> np.ndarray:
    """Node terms of the first variation of E, shape (r, m+1, 2) for (value, velocity).

    With F = w'' + 2 delta w' + lam w + g and X = F' - 2 delta F, the piece on
    [a, b] contributes [v' F - v X] evaluated from a to b. For a piecewise
    solution of the quartic ODE this equals the gradient of E in the DOF.
    """
    m = len(sol.nodes) - 1
    out = np.zeros((sol.basis.r, m + 1, 2))
    for i, sp in enumerate(sol.splines):
        lam, delta, g = sp.lam, sp.delta, sp.gm
        for k in range(m + 1):
            for side, sign in (("left", 1.0), ("right", -1.0)):
                if (k == 0 and side == "left") or (k == m and side == "right"):
                    continue
                w = [one_sided(sp, k, q, side) for q in range(4)]
                F = w[2] + 2 * delta * w[1] + lam * w[0] + g
                X = w[3] + 2 * delta * w[2] + lam * w[1] - 2 * delta * F
                out[i, k, 0] += -sign * X
                out[i, k, 1] += sign * F
    return out


def node_condition_residual(sol: WigglySolution, problem) -> float:
    """Max violation of the natural node conditions, relative to the DOF-gradient scale.

    Uses one-sided derivatives of the splines instead of the quadrature
    gradient, so it cross-checks the assembled energy.
    """
    terms = energy_node_terms(sol).reshape(-1)
    gC = _constraint_gradient(sol, problem)
    _, scale = dof_gradient(sol, problem)
    return float(np.abs(terms + gC).max() / scale)


def random_probe(n: int, knots: np.ndarray, rng: np.random.Generator) -> CubicHermiteSpline:
    """Random C^1 piecewise cubic in R^n with unit-scale knot values and slopes."""
    vals = rng.standard_normal((len(knots), n))
    slopes = rng.standard_normal((len(knots), n)) / np.diff(knots).mean()
    return CubicHermiteSpline(knots, vals, slopes, axis=0)


def verify_stationarity(
    sol: WigglySolution,
    sys: ModelSystem,
    basis: ModalBasis,
    constraints,
    probes: int = 20,
    h: float = 1e-4,
    dt: float = 1e-3,
    seed: int = 42,
    extrapolate: bool = True,
) -> StationarityReport:
    """First-variation checks of E + constraint energy at ``sol``.

    Probes are random C^1 piecewise cubics with knots at the nodes and the
    interval midpoints (so they leave the wiggly DOF space), projected onto
    the retained modes when the basis is truncated; the functional is the
    independent time-transcribed one from :mod:`oracle`. The transcription
    bias is O(dt^2); with ``extrapolate`` each probe is also evaluated at
    ``dt/2`` and the two values are Richardson-combined. The raw value at
    ``dt`` is kept in ``raw_variation``.
    """
    from .oracle import DiscreteFunctional, make_grid

    grad, gscale = dof_gradient(sol, constraints)
    report = StationarityReport(dof_gradient=grad, dof_gradient_scale=gscale, probes=probes)
    if probes <= 0:
        return report
    nodes = sol.nodes
    grids = [dt, 0.5 * dt] if extrapolate else [dt]
    funcs = []
    for step in grids:
        times = make_grid(nodes, step)
        funcs.append((times, DiscreteFunctional(sys, constraints, times), sol.u(times)))
    knots = np.unique(np.concatenate([np.linspace(nodes[j], nodes[j + 1], 3) for j in range(len(nodes) - 1)]))
    rng = np.random.default_rng(seed)
    worst = raw = 0.0
    for _ in range(probes):
        probe = random_probe(sys.n, knots, rng)
        vals = []
        for times, F, U in funcs:
            V = from_modal(basis, to_modal(basis, probe(times)))
            vals.append(F.variation(U, V / max(np.abs(V).max(), np.finfo(float).tiny), h))
        raw = max(raw, abs(vals[0]))
        worst = max(worst, abs((4.0 * vals[1] - vals[0]) / 3.0) if extrapolate else abs(vals[0]))
    report.max_variation = worst
    report.raw_variation = raw
    report.variation_scale = 1.0 + abs(funcs[0][1].value(funcs[0][2]))
    return report


def verify_smoothness(sol: WigglySolution, constraints, tol: float = 1e-6) -> StationarityReport:
    """C^2 jumps at interior nodes; only velocity-free nodes are asserted."""
    from .warp import WarpedConstraintProblem

    cs = constraints.constraints if isinstance(constraints, WarpedConstraintProblem) else constraints
    vel_nodes = cs.velocity_nodes()
    m = len(sol.nodes) - 1
    jumps, scale = [], 0.0
    for i, sp in enumerate(sol.splines):
        for k in range(m + 1):
            for side in ("left", "right"):
                if (k == 0 and side == "left") or (k == m and side == "right"):
                    continue
                scale = max(scale, abs(one_sided(sp, k, 2, side)))
        for k in range(1, m):
            jump = one_sided(sp, k, 2, "right") - one_sided(sp, k, 2, "left")
            jumps.append({"node": k, "mode": i, "jump": jump, "asserted": k not in vel_nodes})
    scale = scale if scale > 0 else 1.0
    asserted = [abs(j["jump"]) for j in jumps if j["asserted"]]
    return StationarityReport(
        c2_jumps=jumps,
        max_c2_jump=max(asserted, default=0.0),
        c2_scale=scale,
        ode_residual=ode_residual_all(sol),
        node_conditions=node_condition_residual(sol, constraints),
    )


def verify(sol, sys, basis, constraints, probes=20, h=1e-4, dt=1e-3, seed=42, tol=1e-6) -> StationarityReport:
    """Stationarity and smoothness in one report."""
    rep = verify_stationarity(sol, sys, basis, constraints, probes, h, dt, seed)
    smooth = verify_smoothness(sol, constraints, tol)
    for name in ("c2_jumps", "max_c2_jump", "c2_scale", "ode_residual", "node_conditions"):
        setattr(rep, name, getattr(smooth, name))
    return rep


def verify_hard(sol, sys, kf: HardKeyframes, probes=20, h=1e-4, dt=1e-3, seed=42, tol=1e-6) -> StationarityReport:
    """Checks for a hard-keyframe solution.

    Only the interior node velocities are free, so the DOF gradient is taken
    over those, and the full-space probes vanish at every node and have zero
    velocity at both ends (admissible variations of the hard problem).
    """
    from .oracle import DiscreteFunctional, make_grid

    nodes, m, basis = sol.nodes, len(sol.nodes) - 1, sol.basis
    E = assemble_E(basis, nodes)
    free = np.array([dof_index(nodes, i, k, True) for i in range(basis.r) for k in range(1, m)], dtype=int)
    grad = E.gradient(sol.q)[free]
    gscale = np.abs(E.H).sum(axis=1).max() * np.abs(sol.q).max() + np.abs(E.h).max()
    free_pen = hard_as_constraints(kf, 0.0)
    smooth = verify_smoothness(sol, free_pen, tol)
    terms = energy_node_terms(sol)[:, 1:m, 1]
    report = StationarityReport(
        dof_gradient=float(np.abs(grad).max(initial=0.0)),
        dof_gradient_scale=float(max(gscale, np.finfo(float).tiny)),
        c2_jumps=smooth.c2_jumps, max_c2_jump=smooth.max_c2_jump, c2_scale=smooth.c2_scale,
        ode_residual=smooth.ode_residual,
        node_conditions=float(np.abs(terms).max(initial=0.0) / max(gscale, np.finfo(float).tiny)),
        probes=probes,
    )
    if probes <= 0:
        return report
    rng = np.random.default_rng(seed)
    funcs = []
    for step in (dt, 0.5 * dt):
        times = make_grid(nodes, step)
        funcs.append((times, DiscreteFunctional(sys, free_pen, times), sol.u(times)))
    knots = np.unique(np.concatenate([np.linspace(nodes[j], nodes[j + 1], 3) for j in range(m)]))
    at_node = np.isin(knots, nodes)
    worst = raw = 0.0
    for _ in range(probes):
        vals = rng.standard_normal((len(knots), sys.n))
        slopes = rng.standard_normal((len(knots), sys.n)) / np.diff(knots).mean()
        vals[at_node] = 0.0
        slopes[[0, -1]] = 0.0
        probe = CubicHermiteSpline(knots, vals, slopes, axis=0)
        out = []
        for times, F, U in funcs:
            V = from_modal(basis, to_modal(basis, probe(times)))
            out.append(F.variation(U, V / max(np.abs(V).max(), np.finfo(float).tiny), h, project=False))
        raw = max(raw, abs(out[0]))
        worst = max(worst, abs((4.0 * out[1] - out[0]) / 3.0))
    report.max_variation, report.raw_variation = worst, raw
    report.variation_scale = 1.0 + abs(funcs[0][1].value(funcs[0][2]))
    return report
