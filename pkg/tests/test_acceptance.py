"""Acceptance criteria 1-10; each test records one PASS/FAIL line for the summary."""

import time

import numpy as np
import pytest

from lq_sweep.cli import main
from lq_sweep.hamiltonian import fundamental_direct, trajectory_symplectic_max
from lq_sweep.numerics import lyapunov_integral, lyapunov_solve
from lq_sweep.oracle import compare, oracle_solve
from lq_sweep.problem import LqProblem, serialize_problem
from lq_sweep.sweep import augmented_solve, build_sweep_system, solve, sweep_symmetry_residual
from lq_sweep.zakhar_itkin import factor_block_trajectory, integrate_psi_w_v, stationary_blocks

from conftest import ACCEPTANCE_LINES, p1_problem, p2_problem
from suite import problem_suite

STEPS = 2000


def record(number, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}")
    assert ok, detail


@pytest.fixture(scope="module")
def suite():
    return problem_suite()


@pytest.fixture(scope="module")
def suite_runs(suite):
    """Fundamental matrices, sweep systems and all three solutions per instance."""
    start = time.perf_counter()
    trajs, systems = [], []
    for p in suite:
        traj = fundamental_direct(p, p.grid(STEPS))
        trajs.append(traj)
        systems.append(build_sweep_system(p, traj.final))
    symmetry_seconds = time.perf_counter() - start
    sols = []
    for p, traj in zip(suite, trajs):
        sols.append({m: solve(p, m, traj=traj) for m in ("sweep", "augmented", "feedback")})
    return {"trajs": trajs, "systems": systems, "sols": sols, "symmetry_seconds": symmetry_seconds}


@pytest.fixture(scope="module")
def canonical_runs():
    problems = {"P1": p1_problem(), "P2": p2_problem(), "P3": p1_problem(q=[0.0])}
    return {name: (p, {m: solve(p, m, steps=STEPS) for m in ("sweep", "augmented", "feedback")})
            for name, p in problems.items()}


def test_criterion_01_d_symmetry(suite_runs):
    worst = max(sweep_symmetry_residual(s) for s in suite_runs["systems"])
    secs = suite_runs["symmetry_seconds"]
    ok = worst <= 1e-6 and secs < 30.0
    record(1, ok, f"max D symmetry residual {worst:.2e} (<= 1e-6) over {len(suite_runs['systems'])} "
                  f"instances in {secs:.1f} s (< 30 s)")


def test_criterion_02_symplectic(suite, suite_runs):
    node_worst = max(trajectory_symplectic_max(t) for t in suite_runs["trajs"])
    coarse = max(trajectory_symplectic_max(fundamental_direct(p, p.grid(50))) for p in suite)
    fine = max(trajectory_symplectic_max(fundamental_direct(p, p.grid(100))) for p in suite)
    ratio = coarse / fine
    ok = node_worst <= 1e-6 and 12.0 <= ratio <= 20.0
    record(2, ok, f"worst node residual {node_worst:.2e} (<= 1e-6); halving 50->100 steps reduces "
                  f"worst residual by {ratio:.1f} (required in [12, 20])")


def test_criterion_03_factor_cross_validation(suite, suite_runs):
    worst = max(float(np.max(np.abs(factor_block_trajectory(p, t.grid).phi - t.phi)))
                for p, t in zip(suite, suite_runs["trajs"]))
    record(3, worst <= 1e-6, f"sup |factor blocks - direct blocks| {worst:.2e} (<= 1e-6)")


def _stationary_instances(count=10, seed=7):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        n = 1 + i % 4
        m = int(rng.integers(1, n + 1))
        f = rng.normal(size=(n, n))
        f -= (np.max(np.linalg.eigvals(f).real) + rng.uniform(0.2, 1.5)) * np.eye(n)
        b = rng.normal(size=(m, m))
        out.append(LqProblem(F=f, G=rng.normal(size=(n, m)), R=np.zeros((n, n)), C=b @ b.T + np.eye(m),
                             Phi1=np.eye(n), Phi2=np.eye(n), q=rng.normal(size=n), t0=0.0, tau=1.0))
    return out


def test_criterion_04_stationary_path():
    block_worst, lyap_worst = 0.0, 0.0
    for p in _stationary_instances():
        traj = fundamental_direct(p, p.grid(STEPS))
        for i in np.linspace(0, STEPS, 20).astype(int):
            got = stationary_blocks(p, traj.grid.node(i)).as_matrix()
            block_worst = max(block_worst, float(np.max(np.abs(got - traj.phi[i]))))
        f = p.F.value
        s = p.G.value @ np.linalg.solve(p.C.value, p.G.value.T)
        s = 0.5 * (s + s.T)
        horizon = 40.0 / abs(np.max(np.linalg.eigvals(f).real))
        lyap_worst = max(lyap_worst, float(np.max(np.abs(lyapunov_solve(f, s) - lyapunov_integral(f, s, horizon)))))
    ok = block_worst <= 1e-8 and lyap_worst <= 1e-6
    record(4, ok, f"stationary vs direct blocks {block_worst:.2e} (<= 1e-8); "
                  f"lyapunov_solve vs lyapunov_integral {lyap_worst:.2e} (<= 1e-6)")


def test_criterion_05_p1(canonical_runs):
    p, sols = canonical_runs["P1"]
    sol = sols["sweep"]
    d = build_sweep_system(p, fundamental_direct(p, p.grid(STEPS)).final).d
    d_ref = np.array([[0.7615941560, 0.3519457263], [0.3519457263, -0.7615941560]])
    errs = {
        "x0": abs(sol.x0[0] - 0.5),
        "nu": abs(sol.nu[0] + 1.0819767069),
        "J": abs(sol.cost - 0.5409883534),
        "D": float(np.max(np.abs(d - d_ref))),
    }
    ok = errs["x0"] <= 1e-6 and errs["nu"] <= 1e-5 and errs["J"] <= 1e-5 and errs["D"] <= 1e-6
    record(5, ok, "P1 errors " + ", ".join(f"{k} {v:.1e}" for k, v in errs.items())
                  + " (tol 1e-6, 1e-5, 1e-5, 1e-6)")


def test_criterion_06_p2(canonical_runs):
    _, sols = canonical_runs["P2"]
    sol = sols["sweep"]
    errs = {
        "x0": abs(sol.x0[0] - 1.0),
        "nu": float(np.max(np.abs(sol.nu - [0.5378828427, -1.4621171573]))),
        "J": abs(sol.cost - 0.4621171573),
        "u": float(np.max(np.abs(sol.u[:, 0] - 0.5378828427 * np.exp(sol.t)))),
    }
    ok = errs["x0"] <= 1e-8 and errs["nu"] <= 1e-5 and errs["J"] <= 1e-5 and errs["u"] <= 1e-5
    record(6, ok, "P2 errors " + ", ".join(f"{k} {v:.1e}" for k, v in errs.items())
                  + " (tol 1e-8, 1e-5, 1e-5, 1e-5)")


def test_criterion_07_duality(suite_runs, canonical_runs):
    gaps = [s.diagnostics["duality_gap"] for run in suite_runs["sols"] for s in run.values()]
    gaps += [s.diagnostics["duality_gap"] for _, run in canonical_runs.values() for s in run.values()]
    worst = max(gaps)
    record(7, worst <= 1e-6, f"max |J + nu'q/2| {worst:.2e} over {len(gaps)} solutions (<= 1e-6)")


@pytest.fixture(scope="module")
def oracle_cases(suite):
    small = [p for p in suite if p.n + p.m <= 3][:3]
    return [p1_problem(), p2_problem()] + small


def test_criterion_08_method_agreement(suite, suite_runs, canonical_runs, oracle_cases):
    aug = 0.0
    for p, traj, run in zip(suite, suite_runs["trajs"], suite_runs["sols"]):
        md = augmented_solve(p, traj.final)
        sweep = run["sweep"]
        aug = max(aug, float(np.max(np.abs(md.x0 - sweep.x0))), float(np.max(np.abs(md.nu - sweep.nu))))
    for _, run in canonical_runs.values():
        aug = max(aug, float(np.max(np.abs(run["augmented"].x0 - run["sweep"].x0))),
                  float(np.max(np.abs(run["augmented"].nu - run["sweep"].nu))))
    loop = max(float(np.max(np.abs(run["sweep"].x - run["feedback"].x))) for run in suite_runs["sols"])
    cost_rel, traj_sup = 0.0, 0.0
    for p in oracle_cases:
        rep = compare(solve(p, steps=STEPS), oracle_solve(p, 2000))
        cost_rel = max(cost_rel, rep.cost_rel_diff)
        traj_sup = max(traj_sup, rep.x_sup_diff, rep.u_sup_diff)
    ok = aug <= 1e-8 and loop <= 1e-5 and cost_rel <= 1e-3 and traj_sup <= 2e-3
    record(8, ok, f"sweep vs augmented {aug:.1e} (<= 1e-8); open vs closed loop {loop:.1e} (<= 1e-5); "
                  f"oracle cost rel {cost_rel:.1e} (<= 1e-3), trajectory {traj_sup:.1e} (<= 2e-3) "
                  f"on {len(oracle_cases)} problems")


def test_criterion_09_failure_semantics(tmp_path, capsys):
    singular = tmp_path / "r0.json"
    singular.write_text(serialize_problem(p1_problem(R=[[0.0]])))
    code_singular = main(["solve", "--problem", str(singular), "--out", str(tmp_path / "a")])
    err = capsys.readouterr().err
    inconsistent = tmp_path / "bc.json"
    inconsistent.write_text(serialize_problem(p1_problem(Phi1=[[1.0], [1.0]], Phi2=[[0.0], [0.0]], q=[0.0, 1.0])))
    code_bc = main(["solve", "--problem", str(inconsistent), "--out", str(tmp_path / "b")])
    ok = code_singular == 3 and "rank deficient" in err and code_bc == 2
    record(9, ok, f"R=0 exit {code_singular} (3) naming rank deficiency: {'rank deficient' in err}; "
                  f"inconsistent BC exit {code_bc} (2)")


def test_criterion_10_state_size(suite):
    seen = {}
    for p in suite:
        if p.n in seen:
            continue
        grid = p.grid(10)
        seen[p.n] = (integrate_psi_w_v(p, grid).state_size, int(fundamental_direct(p, grid).phi[0].size))
    ok = all(r == 3 * n * n and d == 4 * n * n for n, (r, d) in seen.items())
    detail = ", ".join(f"n={n}: {r} vs {d}" for n, (r, d) in sorted(seen.items()))
    record(10, ok, f"integrated state sizes (3n^2 vs 4n^2) {detail}")
