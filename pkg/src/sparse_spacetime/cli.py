"""Command-line entry point: scenario files in, CSV/JSON artifacts out.

Exit codes: 0 success, 2 validation error, 3 solver error, 4 a
verification threshold was missed.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .modal import ModalBasis, check_basis, eigendecompose, mode_table
from .model import ChainSpec, Mesh2DSpec, ModelSystem, assemble_chain, assemble_mesh2d, rect_mesh
from .oracle import OracleConvergenceError, transcribe_minimize, transcribe_minimize_warped
from .spacetime import (
    ConstraintSet,
    HardKeyframes,
    NodeConstraint,
    StationarityReport,
    Underdetermined,
    default_weights,
    solve_hard,
    solve_sparse,
    verify,
    verify_hard,
)
from .trajectory import Trajectory, fmt
from .warp import ConvergenceError, WarpedConstraintProblem, make_warp, solve_warped, warp_trajectory
from .wiggly import IllConditionedInterval, WigglySolution, solution_from_dofs

log = logging.getLogger("sparse_spacetime")

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4
SOLVER_ERRORS = (Underdetermined, IllConditionedInterval, ConvergenceError, OracleConvergenceError, np.linalg.LinAlgError)


class ScenarioError(ValueError):
    """Scenario file does not parse or does not validate."""


@dataclass
class VerifyOptions:
    probes: int = 20
    dt: float = 1e-3
    h: float = 1e-4
    smooth_tol: float = 1e-6
    variation_tol: float = 1e-4
    gradient_tol: float = 1e-8
    ode_tol: float = 1e-8
    min_order: float = 1.8


@dataclass
class Scenario:
    name: str
    system: ModelSystem
    basis: ModalBasis
    nodes: np.ndarray
    constraints: ConstraintSet | None = None
    hard: HardKeyframes | None = None
    warp: dict | None = None
    max_iter: int = 50
    tol: float = 1e-10
    verify: VerifyOptions = field(default_factory=VerifyOptions)
    samples_per_interval: int = 50
    velocities: bool = True
    seed: int = 42

    @property
    def problem(self):
        if self.warp is None:
            return self.constraints
        return WarpedConstraintProblem(self.constraints, make_warp(self.warp))

    def sample_times(self) -> np.ndarray:
        k = self.samples_per_interval
        parts = [np.linspace(a, b, k + 1)[:-1] for a, b in zip(self.nodes[:-1], self.nodes[1:])]
        return np.concatenate(parts + [self.nodes[-1:]])


# -- scenario parsing -------------------------------------------------------------

def _matrix(spec, n: int, where: str) -> np.ndarray:
    if isinstance(spec, dict):
        if set(spec) != {"select"}:
            raise ScenarioError(f"{where}: matrix shorthand must be {{'select': [dof, ...]}}")
        idx = spec["select"]
        if not all(isinstance(i, int) and 0 <= i < n for i in idx):
            raise ScenarioError(f"{where}: select indices must be integers in [0, {n})")
        S = np.zeros((len(idx), n))
        S[np.arange(len(idx)), idx] = 1.0
        return S
    try:
        A = np.atleast_2d(np.asarray(spec, dtype=float))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: not a numeric matrix") from exc
    if A.ndim != 2 or A.shape[1] != n:
        raise ScenarioError(f"{where}: expected rows of length {n}, got shape {A.shape}")
    return A


def _model(spec: dict, alpha: float, beta: float) -> ModelSystem:
    kind = spec.get("type")
    if kind == "chain":
        springs = [tuple(s) for s in spec.get("springs", [])]
        cs = ChainSpec(spec["masses"], springs, spec.get("fixed", []), spec.get("gravity", 0.0))
        return assemble_chain(cs, alpha, beta)
    if kind == "mesh2d":
        if "rect" in spec:
            r = spec["rect"]
            V, T = rect_mesh(r["nx"], r["ny"], r.get("width", 1.0), r.get("height", 1.0))
        else:
            V, T = np.asarray(spec["vertices"], dtype=float), np.asarray(spec["triangles"], dtype=int)
        fixed = spec.get("fixed", [])
        if fixed == "left":
            fixed = [i for i, v in enumerate(V) if v[0] <= V[:, 0].min() + 1e-12]
        ms = Mesh2DSpec(V, T, spec.get("young", 1.0), spec.get("poisson", 0.3), spec.get("density", 1.0),
                        fixed, spec.get("gravity", [0.0, 0.0]), spec.get("thickness", 1.0))
        return assemble_mesh2d(ms, alpha, beta)
    raise ScenarioError(f"model.type must be 'chain' or 'mesh2d', got {kind!r}")


def parse_scenario(data: dict, seed: int | None = None) -> Scenario:
    """Build a :class:`Scenario` from decoded JSON, raising :class:`ScenarioError`."""
    try:
        return _parse(data, seed)
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        detail = f"missing key {exc}" if isinstance(exc, KeyError) else str(exc)
        raise ScenarioError(detail) from exc


def _parse(data: dict, seed: int | None) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    ray = data.get("rayleigh", {})
    system = _model(data["model"], float(ray.get("alpha", 0.0)), float(ray.get("beta", 0.0)))
    basis = eigendecompose(system, data.get("modes"))
    nodes = np.asarray(data["nodes"], dtype=float)
    has_sparse, has_hard = "constraints" in data, "hard" in data
    if has_sparse == has_hard:
        raise ScenarioError("scenario needs exactly one of 'constraints' or 'hard'")
    n = system.n
    sc = Scenario(data.get("name", "scenario"), system, basis, nodes)
    if has_hard:
        h = data["hard"]
        sc.hard = HardKeyframes(nodes, h["u"], h["v0"], h["vm"])
        if sc.hard.u.shape[1] != n:
            raise ScenarioError(f"hard: keyframes must have length {n}")
        if "warp" in data:
            raise ScenarioError("warp applies to sparse constraints only")
    else:
        entries = []
        for i, c in enumerate(data["constraints"]):
            where = f"constraints[{i}]"
            kw = {"node": int(c["node"]), "wA": float(c.get("wA", 1.0)), "wB": float(c.get("wB", 1.0))}
            if "A" in c:
                kw["A"], kw["a"] = _matrix(c["A"], n, where + ".A"), c.get("a")
            if "B" in c:
                kw["B"], kw["b"] = _matrix(c["B"], n, where + ".B"), c.get("b")
            entries.append(NodeConstraint(**kw))
        w = data.get("weights", "default")
        if w == "default":
            c_A = c_B = default_weights(basis, nodes)
        else:
            c_A, c_B = float(w["c_A"]), float(w["c_B"])
        sc.constraints = ConstraintSet(nodes, entries, c_A, c_B)
        sc.constraints.check_dimension(n)
        sc.warp = data.get("warp")
        if sc.warp is not None:
            make_warp(sc.warp)
    solver = data.get("solver", {})
    sc.max_iter, sc.tol = int(solver.get("max_iter", 50)), float(solver.get("tol", 1e-10))
    sc.verify = VerifyOptions(**data.get("verify", {}))
    out = data.get("output", {})
    sc.samples_per_interval = int(out.get("samples_per_interval", 50))
    sc.velocities = bool(out.get("velocities", True))
    sc.seed = int(data.get("seed", 42) if seed is None else seed)
    return sc


def bundled_scenarios() -> dict[str, Path]:
    """Scenario files shipped with the package, keyed by stem."""
    root = resources.files(__package__) / "scenarios"
    return {Path(p.name).stem: Path(str(p)) for p in sorted(root.iterdir(), key=lambda p: p.name) if p.name.endswith(".json")}


def load_scenario(path, seed: int | None = None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return parse_scenario(data, seed)


# -- serialization ------------------------------------------------------------------

def solution_to_dict(sol: WigglySolution) -> dict:
    return {
        "nodes": sol.nodes.tolist(),
        "modes": sol.basis.r,
        "lambda": sol.basis.lam.tolist(),
        "delta": sol.basis.delta.tolist(),
        "g_modal": sol.basis.gm.tolist(),
        "regimes": [sp.regime.name for sp in sol.splines],
        "q": sol.q.tolist(),
        "coeffs": [sp.coeffs.tolist() for sp in sol.splines],
        "info": {k: v for k, v in sol.info.items()},
    }


def solution_from_dict(data: dict, basis: ModalBasis) -> WigglySolution:
    if data.get("modes") != basis.r:
        raise ScenarioError(f"solution has {data.get('modes')} modes, scenario has {basis.r}")
    lam = np.asarray(data["lambda"], dtype=float)
    if not np.allclose(lam, basis.lam, rtol=1e-9, atol=1e-12):
        raise ScenarioError("solution eigenvalues do not match the scenario")
    return solution_from_dofs(basis, data["nodes"], data["q"], data.get("info", {}))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _report_dict(rep: StationarityReport, opts: VerifyOptions) -> dict:
    checks = rep.checks(opts.variation_tol, opts.gradient_tol, opts.smooth_tol, opts.ode_tol)
    out = json.loads(rep.to_json())
    out["checks"] = checks
    out["passed"] = all(checks.values())
    return out


# -- commands ------------------------------------------------------------------------

def _solve(sc: Scenario, warped: bool, args) -> WigglySolution:
    if sc.hard is not None:
        if warped:
            raise ScenarioError("solve-warped needs sparse constraints")
        return solve_hard(sc.system, sc.basis, sc.hard)
    if warped:
        problem = WarpedConstraintProblem(sc.constraints, make_warp(sc.warp))
        max_iter = sc.max_iter if args.max_iter is None else args.max_iter
        tol = sc.tol if args.tol is None else args.tol
        return solve_warped(sc.system, sc.basis, problem, max_iter=max_iter, tol=tol)
    return solve_sparse(sc.system, sc.basis, sc.constraints)


def _verify(sc: Scenario, sol: WigglySolution, warped: bool) -> StationarityReport:
    o = sc.verify
    if sc.hard is not None:
        return verify_hard(sol, sc.system, sc.hard, o.probes, o.h, o.dt, sc.seed, o.smooth_tol)
    problem = WarpedConstraintProblem(sc.constraints, make_warp(sc.warp)) if warped else sc.constraints
    return verify(sol, sc.system, sc.basis, problem, o.probes, o.h, o.dt, sc.seed, o.smooth_tol)


def cmd_modes(sc: Scenario, out: Path, args) -> int:
    rows = mode_table(sc.basis)
    with open(out / "modes.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "lambda", "delta", "g", "regime", "rigid"])
        for r in rows:
            w.writerow([r["mode"], fmt(r["lambda"]), fmt(r["delta"]), fmt(r["g"]), r["regime"], int(r["rigid"])])
    chk = check_basis(sc.basis)
    for r in rows:
        print(f"{r['mode']:3d}  lambda={r['lambda']:.6g}  delta={r['delta']:.6g}  {r['regime']}")
    print(f"eig_residual={chk['eig_residual']:.3e} orthonormality={chk['orthonormality']:.3e}")
    return EXIT_OK


def cmd_solve(sc: Scenario, out: Path, args, warped: bool = False) -> int:
    if warped and sc.warp is None:
        sc.warp = {"name": "identity"}
    sol = _solve(sc, warped, args)
    times = sc.sample_times()
    sol.sample(times, sc.velocities).to_csv(out / "trajectory.csv")
    if warped:
        warp_trajectory(sol, make_warp(sc.warp), times, sc.velocities).to_csv(out / "warped.csv")
    _write_json(out / "solution.json", solution_to_dict(sol))
    rep = _verify(sc, sol, warped)
    report = _report_dict(rep, sc.verify)
    _write_json(out / "report.json", report)
    print(f"{sc.name}: solver={sol.info.get('solver')} E={sol.info.get('E', float('nan')):.12g}")
    for k, v in report["checks"].items():
        print(f"  {k:16s} {'ok' if v else 'FAIL'}")
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def _oracle(sc: Scenario, dt: float, init: Trajectory | None = None) -> Trajectory:
    if sc.hard is not None:
        raise ScenarioError("the oracle handles sparse and warped scenarios only")
    if sc.warp is not None:
        return transcribe_minimize_warped(sc.system, sc.problem, dt, init)
    return transcribe_minimize(sc.system, sc.constraints, dt)


def cmd_oracle(sc: Scenario, out: Path, args) -> int:
    if args.dt is None:
        raise ScenarioError("oracle needs --dt")
    traj = _oracle(sc, args.dt)
    traj.to_csv(out / "oracle.csv")
    print(f"{sc.name}: oracle dt={args.dt:g} samples={len(traj.times)}")
    return EXIT_OK


def cmd_compare(sc: Scenario, out: Path, args) -> int:
    if not args.dt_sweep:
        raise ScenarioError("compare needs --dt-sweep d0,d1,...")
    try:
        dts = [float(x) for x in args.dt_sweep.split(",")]
    except ValueError as exc:
        raise ScenarioError(f"bad --dt-sweep value: {args.dt_sweep}") from exc
    sol = _solve(sc, sc.warp is not None, args)
    rows = []
    for dt in dts:
        traj = _oracle(sc, dt)
        ref = sol.u(traj.times)
        err = float(np.abs(traj.u - ref).max())
        rows.append((dt, err, float(np.abs(ref).max())))
    orders = [np.log(rows[i][1] / rows[i + 1][1]) / np.log(rows[i][0] / rows[i + 1][0]) for i in range(len(rows) - 1)]
    with open(out / "compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["dt", "linf_error", "linf_u", "order"])
        for i, (dt, err, un) in enumerate(rows):
            w.writerow([fmt(dt), fmt(err), fmt(un), fmt(orders[i - 1]) if i else ""])
    for i, (dt, err, un) in enumerate(rows):
        tail = f"  order={orders[i - 1]:.3f}" if i else ""
        print(f"dt={dt:<8g} error={err:.6e} |u|={un:.6g}{tail}")
    ok = all(o >= sc.verify.min_order for o in orders)
    print(f"observed order {'ok' if ok else 'below'} {sc.verify.min_order}")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_verify(sc: Scenario, out: Path, args) -> int:
    if args.solution is None:
        raise ScenarioError("verify needs --solution path/to/solution.json")
    try:
        data = json.loads(Path(args.solution).read_text())
    except OSError as exc:
        raise ScenarioError(f"{args.solution}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{args.solution}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    sol = solution_from_dict(data, sc.basis)
    warped = sol.info.get("solver") == "warped"
    if warped and sc.warp is None:
        sc.warp = {"name": sol.info.get("warp", "identity")}
    report = _report_dict(_verify(sc, sol, warped), sc.verify)
    _write_json(out / "report.json", report)
    for k, v in report["checks"].items():
        print(f"  {k:16s} {'ok' if v else 'FAIL'}")
    return EXIT_OK if report["passed"] else EXIT_VERIFY


COMMANDS = {
    "modes": cmd_modes,
    "solve": cmd_solve,
    "solve-warped": lambda sc, out, args: cmd_solve(sc, out, args, warped=True),
    "oracle": cmd_oracle,
    "compare": cmd_compare,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sparse-spacetime", description="Sparse spacetime constraints via wiggly splines.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--dt", type=float, help="oracle time step")
    p.add_argument("--dt-sweep", help="comma-separated oracle time steps for compare")
    p.add_argument("--seed", type=int, help="probe seed (overrides the scenario)")
    p.add_argument("--tol", type=float, help="Gauss-Newton tolerance")
    p.add_argument("--max-iter", type=int, help="Gauss-Newton iteration cap")
    p.add_argument("--solution", help="stored solution.json for verify")
    return p


def main(argv=None) -> int:
    level = os.environ.get("WIGGLY_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        sc = load_scenario(args.scenario, args.seed)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](sc, out, args)
    except SOLVER_ERRORS as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
