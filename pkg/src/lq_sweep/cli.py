"""
Command line front end: ``lq-sweep solve|check|compare --problem FILE``.

Exit codes: 0 success, 2 invalid input or failed validation, 3 numerical
failure (singular elimination, blow-up), 4 a declared tolerance failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import LqSweepError, NonFiniteState, SingularMatrix
from .hamiltonian import fundamental_direct, trajectory_symplectic_max
from .oracle import compare, oracle_solve
from .problem import LqProblem, parse_problem, validate
from .sweep import (
    FUNDAMENTALS,
    METHODS,
    augmented_solve,
    build_sweep_system,
    fundamental_trajectory,
    singularity_hints,
    solve,
    sweep_symmetry_residual,
)
from .zakhar_itkin import factor_block_trajectory

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3
EXIT_TOLERANCE = 4


@dataclass
class RunConfig:
    problem_path: str
    method: str = "sweep"
    fundamental: str = "direct"
    steps: int = 2000
    oracle_n: int = 2000
    out_dir: str = "."
    tolerances: dict = field(default_factory=lambda: {
        "symmetry": 1e-6,
        "bc": 1e-6,
        "compare_cost": 1e-3,
        "compare_trajectory": 2e-3,
        "duality": 1e-6,
        "augmented": 1e-8,
        "symplectic": 1e-6,
        "block_distance": 1e-6,
    })

    def __post_init__(self):
        if not self.problem_path or not self.out_dir:
            raise ValueError("problem and output paths must be non-empty")
        if self.steps < 10:
            raise ValueError(f"steps must be at least 10, got {self.steps}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.fundamental not in FUNDAMENTALS:
            raise ValueError(f"unknown fundamental {self.fundamental!r}")


class _Fail(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _err(msg):
    print(f"lq-sweep: {msg}", file=sys.stderr)


def _load(cfg: RunConfig) -> LqProblem:
    try:
        text = Path(cfg.problem_path).read_text()
    except OSError as exc:
        raise _Fail(EXIT_INVALID, f"cannot read problem file: {exc}") from None
    p = parse_problem(text)
    rep = validate(p)
    for msg in rep.messages("warning"):
        _err(f"warning: {msg}")
    if not rep.ok:
        raise _Fail(EXIT_INVALID, "validation failed:\n  " + "\n  ".join(rep.messages("error")))
    return p


def _report(sol, cfg: RunConfig) -> dict:
    return {
        "x0": [float(v) for v in sol.x0],
        "nu": [float(v) for v in sol.nu],
        "cost": float(sol.cost),
        "diagnostics": {key: float(sol.diagnostics[key]) for key in
                        ("d_symmetry", "symplectic_max", "bc_residual", "dynamics_residual", "duality_gap")},
        "method": cfg.method,
        "fundamental": cfg.fundamental,
        "steps": int(cfg.steps),
    }


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=2) + "\n")


def write_trajectory(path: Path, sol):
    n, m = sol.x.shape[1], sol.u.shape[1]
    header = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)] \
        + [f"lambda{i + 1}" for i in range(n)]
    rows = np.column_stack([sol.grid.nodes, sol.x, sol.u, sol.lam])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([f"{v:.17g}" for v in row])


def _solve(p: LqProblem, cfg: RunConfig, method=None):
    try:
        return solve(p, method or cfg.method, cfg.fundamental, cfg.steps)
    except SingularMatrix as exc:
        hints = singularity_hints(p)
        msg = str(exc) + "".join(f"\n  hint: {h}" for h in hints)
        raise _Fail(EXIT_NUMERICAL, msg) from None


def _violations(checks) -> list:
    return [f"{name} = {value:.3e} exceeds {tol:.1e}" for name, value, tol in checks
            if not value <= tol]


def cmd_solve(cfg: RunConfig) -> int:
    p = _load(cfg)
    sol = _solve(p, cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory(out / "trajectory.csv", sol)
    _write_json(out / "report.json", _report(sol, cfg))
    print(f"cost {sol.cost:.10g}  x0 {np.array2string(sol.x0, precision=10)}  "
          f"nu {np.array2string(sol.nu, precision=10)}")
    tol = cfg.tolerances
    bad = _violations([
        ("d_symmetry", sol.diagnostics["d_symmetry"], tol["symmetry"]),
        ("bc_residual", sol.diagnostics["bc_residual"], tol["bc"]),
    ])
    if bad:
        raise _Fail(EXIT_TOLERANCE, "; ".join(bad))
    return EXIT_OK


def cmd_check(cfg: RunConfig) -> int:
    p = _load(cfg)
    rep = validate(p)
    grid = p.grid(cfg.steps)
    direct = fundamental_direct(p, grid)
    factored = factor_block_trajectory(p, grid)
    distance = float(np.max(np.abs(direct.phi - factored.phi)))
    sym_direct = trajectory_symplectic_max(direct)
    sym_factored = trajectory_symplectic_max(factored)
    d_sym = sweep_symmetry_residual(build_sweep_system(p, direct.final))
    print(f"symplectic residual (direct)       {sym_direct:.3e}")
    print(f"symplectic residual (zakhar-itkin) {sym_factored:.3e}")
    print(f"block distance direct/zakhar-itkin {distance:.3e}")
    print(f"d_symmetry                         {d_sym:.3e}")
    print(f"gramian margin                     {rep.gramian_min_eig:.3e}")
    tol = cfg.tolerances
    bad = _violations([
        ("symplectic residual (direct)", sym_direct, tol["symplectic"]),
        ("symplectic residual (zakhar-itkin)", sym_factored, tol["symplectic"]),
        ("block distance", distance, tol["block_distance"]),
        ("d_symmetry", d_sym, tol["symmetry"]),
    ])
    if bad:
        raise _Fail(EXIT_TOLERANCE, "; ".join(bad))
    return EXIT_OK


def cmd_compare(cfg: RunConfig) -> int:
    p = _load(cfg)
    traj = fundamental_trajectory(p, cfg.steps, cfg.fundamental)
    try:
        sol = solve(p, "sweep", traj=traj)
        aug = augmented_solve(p, traj.final)
    except SingularMatrix as exc:
        raise _Fail(EXIT_NUMERICAL, str(exc) + "".join(f"\n  hint: {h}" for h in singularity_hints(p))) from None
    osol = oracle_solve(p, cfg.oracle_n)
    tol = cfg.tolerances
    cmp = compare(sol, osol, tol["compare_cost"], tol["compare_trajectory"])
    aug_diff = float(max(np.max(np.abs(aug.x0 - sol.x0)), np.max(np.abs(aug.nu - sol.nu))))
    report = dict(_report(sol, cfg), method="sweep")
    payload = {
        "sweep": report,
        "augmented": {"x0": [float(v) for v in aug.x0], "nu": [float(v) for v in aug.nu]},
        "oracle": {"cost": float(osol.cost)},
        "pairwise": {
            "sweep_vs_oracle_cost_rel": float(cmp.cost_rel_diff),
            "sweep_vs_augmented_x0": aug_diff,
            "x_sup_diff": float(cmp.x_sup_diff),
            "u_sup_diff": float(cmp.u_sup_diff),
        },
        "duality_gap": float(sol.diagnostics["duality_gap"]),
    }
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "compare.json", payload)
    for key, value in payload["pairwise"].items():
        print(f"{key:26s} {value:.3e}")
    print(f"{'duality_gap':26s} {payload['duality_gap']:.3e}")
    bad = _violations([
        ("sweep_vs_oracle_cost_rel", cmp.cost_rel_diff, tol["compare_cost"]),
        ("x_sup_diff", cmp.x_sup_diff, tol["compare_trajectory"]),
        ("u_sup_diff", cmp.u_sup_diff, tol["compare_trajectory"]),
        ("sweep_vs_augmented_x0", aug_diff, tol["augmented"]),
        ("duality_gap", payload["duality_gap"], tol["duality"]),
        ("d_symmetry", sol.diagnostics["d_symmetry"], tol["symmetry"]),
    ])
    if bad:
        raise _Fail(EXIT_TOLERANCE, "; ".join(bad))
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "check": cmd_check, "compare": cmd_compare}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lq-sweep",
                                 description="LQ optimal control with coupled two-point boundary conditions.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--problem", required=True, help="JSON problem file")
    ap.add_argument("--method", choices=METHODS, default="sweep")
    ap.add_argument("--fundamental", choices=FUNDAMENTALS, default="direct")
    ap.add_argument("--steps", type=int, default=2000, help="RK4 steps on [t0, tau] (>= 10)")
    ap.add_argument("--oracle-n", type=int, default=2000, help="oracle grid intervals")
    ap.add_argument("--out", default=".", help="output directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig(args.problem, args.method, args.fundamental, args.steps, args.oracle_n, args.out)
        return COMMANDS[args.command](cfg)
    except _Fail as exc:
        _err(str(exc))
        return exc.code
    except (SingularMatrix, NonFiniteState) as exc:
        _err(f"numerical failure: {exc}")
        return EXIT_NUMERICAL
    except (LqSweepError, ValueError) as exc:
        _err(f"invalid input: {exc}")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
