"""
Direct-transcription reference solver.

The continuous problem is discretized on a uniform grid with trapezoidal
collocation and the resulting equality-constrained QP is solved through its
dense KKT system. Nothing here touches the Euler-Lagrange machinery, so the
result is an independent check on the sweep pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import Grid, mat_solve
from .problem import LqProblem

MAX_WORK = 20000


@dataclass
class OracleSolution:
    grid: Grid
    x: np.ndarray
    u: np.ndarray
    cost: float
    kkt_residual: float
    constraint_residual: float


@dataclass
class ComparisonReport:
    cost_rel_diff: float
    x_sup_diff: float
    u_sup_diff: float
    passed: bool


def oracle_solve(p: LqProblem, N: int = 2000) -> OracleSolution:
    """Solve the trapezoidal-collocation QP with ``N`` intervals.

    Unknowns are ``x_0..x_N`` and ``u_0..u_N``; the objective is the
    trapezoid rule applied to the running cost. The reported cost is the QP
    objective; the two endpoint controls are post-processed from the
    constraint multipliers (see :func:`_fix_endpoint_controls`).

    Raises
    ------
    SingularMatrix
        The KKT matrix is singular (infeasible or degenerate QP).
    """
    n, m, k = p.n, p.m, p.k
    if N < 10:
        raise ValueError(f"oracle needs N >= 10, got {N}")
    if N * (n + m) > MAX_WORK:
        raise ValueError(f"N*(n+m) = {N * (n + m)} exceeds the dense-KKT cap {MAX_WORK}")
    grid = Grid(p.t0, p.tau, N)
    ts = grid.nodes
    h = grid.h
    fs = p.F.evaluate_many(ts)
    gs = p.G.evaluate_many(ts)
    rs = p.R.evaluate_many(ts)
    cs = p.C.evaluate_many(ts)

    nx = (N + 1) * n
    nz = nx + (N + 1) * m
    nc = N * n + k
    size = nz + nc

    def xi(i):
        return slice(i * n, (i + 1) * n)

    def ui(i):
        return slice(nx + i * m, nx + (i + 1) * m)

    kkt = np.zeros((size, size))
    weights = np.full(N + 1, h)
    weights[[0, -1]] = 0.5 * h
    for i in range(N + 1):
        kkt[xi(i), xi(i)] = weights[i] * rs[i]
        kkt[ui(i), ui(i)] = weights[i] * cs[i]

    e = np.eye(n)
    for i in range(N):
        row = slice(nz + i * n, nz + (i + 1) * n)
        kkt[row, xi(i)] = -e - 0.5 * h * fs[i]
        kkt[row, xi(i + 1)] = e - 0.5 * h * fs[i + 1]
        kkt[row, ui(i)] = -0.5 * h * gs[i]
        kkt[row, ui(i + 1)] = -0.5 * h * gs[i + 1]
    row = slice(nz + N * n, size)
    kkt[row, xi(0)] = p.Phi1
    kkt[row, xi(N)] = -p.Phi2
    constraints = kkt[nz:, :nz]
    kkt[:nz, nz:] = constraints.T

    rhs = np.zeros(size)
    rhs[nz + N * n:] = p.q
    sol = mat_solve(kkt, rhs)

    scale = np.linalg.norm(kkt, np.inf) * np.linalg.norm(sol, np.inf) + np.linalg.norm(rhs, np.inf)
    kkt_res = float(np.linalg.norm(kkt @ sol - rhs, np.inf) / scale) if scale > 0 else 0.0
    z = sol[:nz]
    con = constraints @ z - rhs[nz:]
    con_scale = np.linalg.norm(constraints, np.inf) * np.linalg.norm(z, np.inf) + np.linalg.norm(p.q, np.inf)
    con_res = float(np.linalg.norm(con, np.inf) / con_scale) if con_scale > 0 else 0.0

    x = z[:nx].reshape(N + 1, n)
    u = z[nx:].reshape(N + 1, m).copy()
    running = np.einsum("ti,tij,tj->t", x, rs, x) + np.einsum("ti,tij,tj->t", u, cs, u)
    cost = float(0.5 * weights @ running)
    _fix_endpoint_controls(u, sol[nz:nz + N * n].reshape(N, n), gs, cs)
    return OracleSolution(grid, x, u, cost, kkt_res, con_res)


def _fix_endpoint_controls(u, mu, gs, cs):
    """Replace the QP's endpoint controls by multiplier-based estimates.

    Stationarity gives ``u_i = C^{-1} G' (mu_{i-1} + mu_i) / 2`` inside the
    grid, second order, but ``u_0 = C^{-1} G' mu_0`` at the ends, where
    ``mu_0`` belongs to the half step; that is only first order. Linear
    extrapolation of the interval multipliers restores second order.
    """
    if mu.shape[0] < 2:
        return
    for i, y in ((0, 1.5 * mu[0] - 0.5 * mu[1]), (-1, 1.5 * mu[-1] - 0.5 * mu[-2])):
        u[i] = np.linalg.solve(cs[i], gs[i].T @ y)


def _resample(src_t, values, dst_t):
    return np.column_stack([np.interp(dst_t, src_t, values[:, j]) for j in range(values.shape[1])])


def relative_difference(a: float, b: float, floor: float = 1e-12) -> float:
    """``|a - b| / max(|b|, floor)``, zero when both vanish."""
    diff = abs(a - b)
    if diff == 0.0:
        return 0.0
    return diff / max(abs(b), floor)


def compare(sol, osol: OracleSolution, cost_tol: float = 1e-3, traj_tol: float = 2e-3) -> ComparisonReport:
    """Distances between a sweep solution and the oracle on the sweep grid.

    Oracle values are interpolated linearly onto the solution grid.
    """
    t = sol.grid.nodes
    ox = _resample(osol.grid.nodes, osol.x, t)
    ou = _resample(osol.grid.nodes, osol.u, t)
    cost_rel = relative_difference(sol.cost, osol.cost)
    x_sup = float(np.max(np.abs(sol.x - ox)))
    u_sup = float(np.max(np.abs(sol.u - ou)))
    passed = cost_rel <= cost_tol and x_sup <= traj_tol and u_sup <= traj_tol
    return ComparisonReport(cost_rel, x_sup, u_sup, passed)
