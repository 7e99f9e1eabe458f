"""Wiggly splines: piecewise solutions of

    w'''' + 2 (lam - 2 delta^2) w'' + lam (lam w + g) = 0

on each interval between nodes, parameterized by node values and node
velocities (Hermite data), so every spline is C^1 by construction.

Each interval is evaluated in local time ``s = t - midpoint`` so that
growing and decaying exponentials stay bounded by ``exp(delta * len / 2)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from math import comb, factorial
from typing import TYPE_CHECKING

import numpy as np

from .trajectory import Trajectory

if TYPE_CHECKING:
    from .modal import ModalBasis

TIE_TOL = 1e-9
COND_LIMIT = 1e12
GAUSS_POINTS = 7


class Regime(enum.Enum):
    PolyCubic = "PolyCubic"
    RigidDamped = "RigidDamped"
    Undamped = "Undamped"
    Underdamped = "Underdamped"
    Critical = "Critical"
    Overdamped = "Overdamped"


class IllConditionedInterval(ValueError):
    pass


def classify(lam: float, delta: float, tol: float = TIE_TOL) -> Regime:
    """Root structure of (r^2 + 2 delta r + lam)(r^2 - 2 delta r + lam).

    Near-ties go to the repeated-root case.
    """
    lam, delta = float(lam), float(delta)
    if lam < 0 or delta < 0:
        raise ValueError(f"lam and delta must be non-negative (got {lam}, {delta})")
    d2 = delta * delta
    if lam == 0.0 or lam <= tol * d2:
        return Regime.PolyCubic if delta == 0.0 else Regime.RigidDamped
    if d2 <= tol * lam:
        return Regime.Undamped
    if abs(d2 - lam) <= tol * max(lam, d2):
        return Regime.Critical
    return Regime.Underdamped if d2 < lam else Regime.Overdamped


@lru_cache(maxsize=4096)
def _terms(regime: Regime, lam: float, delta: float) -> tuple:
    """Each basis function as ``s^k exp(z s)`` with a real/imag selector."""
    if regime is Regime.PolyCubic:
        return ((0, 0j, "re"), (1, 0j, "re"), (2, 0j, "re"), (3, 0j, "re"))
    if regime is Regime.RigidDamped:
        return ((0, 0j, "re"), (1, 0j, "re"), (0, complex(2 * delta), "re"), (0, complex(-2 * delta), "re"))
    if regime is Regime.Undamped:
        z = 1j * np.sqrt(lam)
        return ((0, z, "re"), (0, z, "im"), (1, z, "re"), (1, z, "im"))
    if regime is Regime.Underdamped:
        wb = np.sqrt(lam - delta * delta)
        zm, zp = complex(-delta, wb), complex(delta, wb)
        return ((0, zm, "re"), (0, zm, "im"), (0, zp, "re"), (0, zp, "im"))
    if regime is Regime.Critical:
        return ((0, complex(-delta), "re"), (1, complex(-delta), "re"), (0, complex(delta), "re"), (1, complex(delta), "re"))
    root = np.sqrt(delta * delta - lam)
    return tuple((0, complex(z), "re") for z in (-delta - root, -delta + root, delta - root, delta + root))


def basis_eval(regime: Regime, lam: float, delta: float, s, order: int = 0) -> np.ndarray:
    """Order-``order`` derivatives of the four homogeneous solutions at local time(s) ``s``.

    Returns an array of shape ``s.shape + (4,)``.
    """
    if not 0 <= order <= 4:
        raise ValueError("order must lie in 0..4")
    s = np.asarray(s, dtype=float)
    out = np.empty(s.shape + (4,))
    for p, (k, z, part) in enumerate(_terms(regime, float(lam), float(delta))):
        e = np.exp(z * s)
        acc = np.zeros(s.shape, dtype=complex)
        for j in range(min(order, k) + 1):
            acc += comb(order, j) * (factorial(k) / factorial(k - j)) * s ** (k - j) * z ** (order - j)
        val = acc * e
        out[..., p] = val.real if part == "re" else val.imag
    return out


def particular(lam: float, delta: float, gm: float) -> float:
    """Constant particular solution; the forcing term is annihilated when lam = 0."""
    return -gm / lam if lam > 0 else 0.0


def operator_on_basis(regime: Regime, lam: float, delta: float, s) -> np.ndarray:
    """Force residual operator  w'' + 2 delta w' + lam w  applied to each basis function."""
    return (
        basis_eval(regime, lam, delta, s, 2)
        + 2.0 * delta * basis_eval(regime, lam, delta, s, 1)
        + lam * basis_eval(regime, lam, delta, s, 0)
    )


def collocation_matrix(regime: Regime, lam: float, delta: float, half: float) -> np.ndarray:
    """Rows: value and slope at ``-half``, value and slope at ``+half``."""
    ends = np.array([-half, half])
    B0 = basis_eval(regime, lam, delta, ends, 0)
    B1 = basis_eval(regime, lam, delta, ends, 1)
    return np.array([B0[0], B1[0], B0[1], B1[1]])


def hermite_inverse(regime: Regime, lam: float, delta: float, length: float) -> np.ndarray:
    """Inverse collocation matrix mapping (w_a, w'_a, w_b, w'_b) to coefficients."""
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        C = collocation_matrix(regime, lam, delta, 0.5 * length)
        # equilibrate so the check measures the interval, not the basis normalization
        cn = np.linalg.norm(C, axis=0)
        rn = np.linalg.norm(C / cn, axis=1)
        Cs = C / cn / rn[:, None]
        ok = np.all(np.isfinite(Cs)) and np.all(cn > 0) and np.all(rn > 0)
        cond = np.linalg.cond(Cs) if ok else np.inf
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedInterval(
            f"ill-conditioned interval: lam={lam:g}, delta={delta:g}, length={length:g} (cond={cond:.3g})"
        )
    return np.linalg.inv(Cs) / cn[:, None] / rn


def hermite_to_coeffs(regime: Regime, lam: float, delta: float, gm: float, interval, data) -> np.ndarray:
    a, b = map(float, interval)
    if not b > a:
        raise ValueError("interval must satisfy b > a")
    wp = particular(lam, delta, gm)
    d = np.asarray(data, dtype=float) - np.array([wp, 0.0, wp, 0.0])
    return hermite_inverse(regime, lam, delta, b - a) @ d


@dataclass(frozen=True)
class WigglySpline:
    lam: float
    delta: float
    gm: float
    nodes: np.ndarray
    coeffs: np.ndarray
    regime: Regime

    @property
    def m(self) -> int:
        return len(self.nodes) - 1

    @property
    def part(self) -> float:
        return particular(self.lam, self.delta, self.gm)

    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])


def build_spline(lam: float, delta: float, gm: float, nodes, values, velocities) -> WigglySpline:
    """Spline through node values ``values`` with node slopes ``velocities``."""
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 1 or len(nodes) < 2 or np.any(np.diff(nodes) <= 0):
        raise ValueError("nodes must be strictly increasing with at least two entries")
    values = np.asarray(values, dtype=float)
    velocities = np.asarray(velocities, dtype=float)
    regime = classify(lam, delta)
    coeffs = np.array(
        [
            hermite_to_coeffs(
                regime, lam, delta, gm, (nodes[j], nodes[j + 1]),
                (values[j], velocities[j], values[j + 1], velocities[j + 1]),
            )
            for j in range(len(nodes) - 1)
        ]
    )
    return WigglySpline(float(lam), float(delta), float(gm), nodes, coeffs, regime)


def _piece(spline: WigglySpline, j: int, t, order: int):
    s = np.asarray(t, dtype=float) - spline.midpoints()[j]
    val = basis_eval(spline.regime, spline.lam, spline.delta, s, order) @ spline.coeffs[j]
    return val + spline.part if order == 0 else val


def eval_spline(spline: WigglySpline, t, order: int = 0, side: str | None = None):
    """Evaluate the spline (or a derivative) at ``t``.

    At an interior node, derivatives of order >= 2 are one-sided and require
    ``side='left'`` or ``side='right'``.
    """
    t_arr = np.asarray(t, dtype=float)
    nodes = spline.nodes
    if np.any(t_arr < nodes[0]) or np.any(t_arr > nodes[-1]):
        raise ValueError(f"t outside [{nodes[0]}, {nodes[-1]}]")
    idx = np.clip(np.searchsorted(nodes, t_arr, side="right") - 1, 0, spline.m - 1)
    at_interior = np.isin(t_arr, nodes[1:-1])
    if order >= 2 and np.any(at_interior):
        if side not in ("left", "right"):
            raise ValueError("order >= 2 at an interior node needs side='left' or 'right'")
        if side == "left":
            idx = np.where(at_interior, idx - 1, idx)
    flat_t, flat_i = t_arr.reshape(-1), idx.reshape(-1)
    out = np.empty(flat_t.shape)
    for j in np.unique(flat_i):
        sel = flat_i == j
        out[sel] = _piece(spline, int(j), flat_t[sel], order)
    return out.reshape(t_arr.shape) if t_arr.ndim else float(out[0])


def one_sided(spline: WigglySpline, k: int, order: int, side: str) -> float:
    """Derivative at node ``k`` of the piece on its ``side``."""
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    if not 0 <= k <= spline.m:
        raise ValueError(f"node index {k} out of range")
    if (k == 0 and side == "left") or (k == spline.m and side == "right"):
        raise ValueError(f"node {k} has no {side} interval")
    j = k - 1 if side == "left" else k
    return float(_piece(spline, j, spline.nodes[k], order))


def ode_residual(spline: WigglySpline, npts: int = GAUSS_POINTS) -> float:
    """Max relative residual of the quartic ODE at Gauss points of every interval."""
    x, _ = np.polynomial.legendre.leggauss(npts)
    lam, delta = spline.lam, spline.delta
    k2 = 2.0 * (lam - 2.0 * delta**2)
    worst = 0.0
    for j in range(spline.m):
        a, b = spline.nodes[j], spline.nodes[j + 1]
        s = 0.5 * (b - a) * x
        c = spline.coeffs[j]
        B = [basis_eval(spline.regime, lam, delta, s, q) for q in (0, 2, 4)]
        w0 = B[0] @ c + spline.part
        res = np.abs(B[2] @ c + k2 * (B[1] @ c) + lam * (lam * w0 + spline.gm))
        # scale from absolute contributions so cancellation is measured honestly
        scale = (
            np.abs(B[2] * c).sum(axis=1)
            + abs(k2) * np.abs(B[1] * c).sum(axis=1)
            + lam * lam * (np.abs(B[0] * c).sum(axis=1) + abs(spline.part))
            + lam * abs(spline.gm)
        )
        ok = scale > 0
        if np.any(ok):
            worst = max(worst, float((res[ok] / scale[ok]).max()))
    return worst


@dataclass(frozen=True)
class WigglySolution:
    """Per-mode wiggly splines sharing one node vector.

    ``q`` holds the stacked Hermite DOF: mode-major, then node-major, value
    before velocity, so mode ``i`` node ``k`` lives at ``i*(2m+2) + 2k``.
    """

    basis: "ModalBasis"
    nodes: np.ndarray
    q: np.ndarray
    splines: tuple
    info: dict

    def modal(self, t, order: int = 0, side: str | None = None) -> np.ndarray:
        """Modal coordinates (or derivatives), shape ``t.shape + (r,)``."""
        return np.stack([eval_spline(sp, t, order, side) for sp in self.splines], axis=-1)

    def u(self, t, order: int = 0, side: str | None = None) -> np.ndarray:
        return self.modal(t, order, side) @ self.basis.phi.T

    def sample(self, times, velocities: bool = False) -> Trajectory:
        times = np.asarray(times, dtype=float)
        v = self.u(times, 1) if velocities else None
        return Trajectory(times, self.u(times, 0), v)

    def node_values(self) -> tuple[np.ndarray, np.ndarray]:
        """Modal node values and velocities, each of shape (m+1, r)."""
        Q = self.q.reshape(self.basis.r, len(self.nodes), 2)
        return Q[:, :, 0].T, Q[:, :, 1].T


def solution_from_dofs(basis, nodes, q, info: dict | None = None) -> WigglySolution:
    nodes = np.asarray(nodes, dtype=float)
    q = np.asarray(q, dtype=float)
    Q = q.reshape(basis.r, len(nodes), 2)
    splines = tuple(
        build_spline(basis.lam[i], basis.delta[i], basis.gm[i], nodes, Q[i, :, 0], Q[i, :, 1])
        for i in range(basis.r)
    )
    return WigglySolution(basis, nodes, q, splines, dict(info or {}))


def ode_residual_all(sol: WigglySolution) -> float:
    return max(ode_residual(sp) for sp in sol.splines)
