"""
Sweep solution of the LQ problem with non-separated boundary conditions.

From the fundamental matrix at ``tau`` the missing initial data
``(x(t0), nu)`` solve the ``(n + k)``-square system ``D [x0; nu] = [0; q]``
with ``M = Phi22^{-1}``::

    D = [[ -M Phi21,                              Phi1' - M Phi2'     ],
         [  Phi1 - Phi2 (Phi11 - Phi12 M Phi21),  Phi2 Phi12 M Phi2'  ]]

The first block row is ``lam(t0) = M (lam(tau) - Phi21 x0)`` with both
transversality conditions substituted, the second is the boundary condition
with ``x(tau)`` eliminated. Symplecticity of ``Phi`` makes ``D`` symmetric;
that is checked at runtime rather than exploited.

Once ``x0`` and ``nu`` are known the trajectory follows from ``Phi(t, t0)``
(open loop) or from the state feedback obtained by eliminating ``x0``
(closed loop). The joint ``(4n + k)`` endpoint system is kept as an
independent elimination order for cross-checking.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson, trapezoid

from .errors import SingularMatrix
from .hamiltonian import (
    BlockTrajectory,
    FundamentalBlocks,
    assemble_h_stages,
    fundamental_direct,
    trajectory_symplectic_max,
)
from .numerics import Grid, batched_solve, mat_solve, rk4_integrate_staged
from .problem import LqProblem, numerical_rank

SYMMETRY_WARN = 1e-4

METHODS = ("sweep", "augmented", "feedback")
FUNDAMENTALS = ("direct", "zakhar-itkin", "stationary")


@dataclass(frozen=True)
class SweepSystem:
    d: np.ndarray
    rhs: np.ndarray
    n: int
    k: int


@dataclass(frozen=True)
class MissingData:
    x0: np.ndarray
    nu: np.ndarray


@dataclass
class Solution:
    """Optimal trajectory on a grid; arrays are indexed ``[node, component]``."""

    grid: Grid
    x: np.ndarray
    u: np.ndarray
    lam: np.ndarray
    x0: np.ndarray
    nu: np.ndarray
    cost: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes


def build_sweep_system(p: LqProblem, b: FundamentalBlocks) -> SweepSystem:
    """Assemble ``D`` and ``[0; q]`` from the blocks at ``tau``.

    Raises
    ------
    SingularMatrix
        If ``Phi22(tau, t0)`` is not safely invertible.
    """
    n, k = p.n, p.k
    try:
        m21 = mat_solve(b.phi22, b.phi21)
        m_phi2t = mat_solve(b.phi22, p.Phi2.T)
    except SingularMatrix as exc:
        raise SingularMatrix(f"Phi22(tau, t0) is singular: {exc}", exc.condition) from None
    d = np.empty((n + k, n + k))
    d[:n, :n] = -m21
    d[:n, n:] = p.Phi1.T - m_phi2t
    d[n:, :n] = p.Phi1 - p.Phi2 @ (b.phi11 - b.phi12 @ m21)
    d[n:, n:] = p.Phi2 @ b.phi12 @ m_phi2t
    rhs = np.concatenate([np.zeros(n), p.q])
    return SweepSystem(d, rhs, n, k)


def sweep_symmetry_residual(s: SweepSystem) -> float:
    d = np.asarray(s.d)
    return float(np.linalg.norm(d - d.T) / (1.0 + np.linalg.norm(d)))


def solve_missing_data(s: SweepSystem) -> MissingData:
    """Solve ``D [x0; nu] = [0; q]``.

    Raises
    ------
    SingularMatrix
        ``D`` is rank deficient: the problem has no unique optimum (for
        example ``R = 0`` with boundary rows that leave ``x0`` free).
    """
    asym = sweep_symmetry_residual(s)
    if asym > SYMMETRY_WARN:
        warnings.warn(f"sweep matrix D is not symmetric (residual {asym:.3e}); "
                      "the fundamental matrix is probably inaccurate", RuntimeWarning, stacklevel=2)
    try:
        z = mat_solve(s.d, s.rhs)
    except SingularMatrix as exc:
        rank = numerical_rank(s.d, 1e-10)
        raise SingularMatrix(
            f"missing-data matrix D is rank deficient (numerical rank {rank} < {s.n + s.k}); "
            f"x(t0) and nu are not uniquely determined",
            exc.condition,
        ) from None
    return MissingData(z[:s.n].copy(), z[s.n:].copy())


def costate_initial(nu, p: LqProblem) -> np.ndarray:
    return -p.Phi1.T @ np.asarray(nu, dtype=float)


def augmented_solve(p: LqProblem, b: FundamentalBlocks) -> MissingData:
    """Solve the joint system in ``(x0, lam0, x_tau, lam_tau, nu)``.

    Rows: transition of ``x`` and ``lam`` over ``[t0, tau]`` (2n), both
    transversality conditions (2n), boundary condition (k).
    """
    n, k = p.n, p.k
    e = np.eye(n)
    a = np.zeros((4 * n + k, 4 * n + k))
    x0, l0, xt, lt = (slice(i * n, (i + 1) * n) for i in range(4))
    nu = slice(4 * n, 4 * n + k)
    r = slice(0, n)
    a[r, x0], a[r, l0], a[r, xt] = -b.phi11, -b.phi12, e
    r = slice(n, 2 * n)
    a[r, x0], a[r, l0], a[r, lt] = -b.phi21, -b.phi22, e
    r = slice(2 * n, 3 * n)
    a[r, l0], a[r, nu] = e, p.Phi1.T
    r = slice(3 * n, 4 * n)
    a[r, lt], a[r, nu] = e, p.Phi2.T
    r = slice(4 * n, 4 * n + k)
    a[r, x0], a[r, xt] = p.Phi1, -p.Phi2
    rhs = np.concatenate([np.zeros(4 * n), p.q])
    try:
        z = mat_solve(a, rhs)
    except SingularMatrix as exc:
        rank = numerical_rank(a, 1e-10)
        raise SingularMatrix(
            f"joint endpoint system is rank deficient (numerical rank {rank} < {4 * n + k})",
            exc.condition,
        ) from None
    return MissingData(z[x0].copy(), z[nu].copy())


def evaluate_cost(p: LqProblem, x, u, grid: Grid) -> float:
    """Composite Simpson quadrature of ``1/2 (x'Rx + u'Cu)`` over the node values.

    Fourth order for smooth data, matching the RK4 trajectories; coefficient
    jumps inside the grid drop it to first order (see :func:`stage_cost`).
    """
    ts = grid.nodes
    x = np.asarray(x, dtype=float).reshape(ts.size, -1)
    u = np.asarray(u, dtype=float).reshape(ts.size, -1)
    rs = p.R.evaluate_many(ts)
    cs = p.C.evaluate_many(ts)
    running = np.einsum("ti,tij,tj->t", x, rs, x) + np.einsum("ti,tij,tj->t", u, cs, u)
    if ts.size < 3:
        return float(0.5 * trapezoid(running, ts))
    return float(0.5 * simpson(running, x=ts))


def stage_cost(p: LqProblem, grid: Grid, x, lam) -> float:
    """Cost of an extremal from node values of ``x`` and ``lam``.

    On an extremal ``u'Cu = lam' S lam`` with ``S = G C^{-1} G'``. Each step
    gets its own Simpson rule; the mid-step state comes from cubic Hermite
    interpolation with ``z' = H z`` and the step ends use one-sided
    coefficients, so jumps on grid nodes keep fourth order.
    """
    z = np.concatenate([np.asarray(x, dtype=float), np.asarray(lam, dtype=float)], axis=1)
    n = z.shape[1] // 2
    hs = assemble_h_stages(p, grid).reshape(grid.steps, 3, 2 * n, 2 * n)
    dz_start = np.einsum("tij,tj->ti", hs[:, 0], z[:-1])
    dz_end = np.einsum("tij,tj->ti", hs[:, 2], z[1:])
    z_mid = 0.5 * (z[:-1] + z[1:]) + (grid.h / 8.0) * (dz_start - dz_end)
    rs = p.R.stage_values(grid).reshape(grid.steps, 3, n, n)
    ss = -hs[:, :, :n, n:]

    def running(zz, s):
        xx, ll = zz[:, :n], zz[:, n:]
        return (np.einsum("ti,tij,tj->t", xx, rs[:, s], xx)
                + np.einsum("ti,tij,tj->t", ll, ss[:, s], ll))

    per_step = running(z[:-1], 0) + 4.0 * running(z_mid, 1) + running(z[1:], 2)
    return float(0.5 * grid.h / 6.0 * per_step.sum())


def boundary_residual(p: LqProblem, x0, x_tau) -> float:
    return float(np.linalg.norm(p.Phi1 @ np.asarray(x0) - p.Phi2 @ np.asarray(x_tau) - p.q))


def _controls(p: LqProblem, ts, lam):
    g = p.G.evaluate_many(ts)
    c = p.C.evaluate_many(ts)
    glam = np.einsum("tij,ti->tj", g, lam)
    return -np.linalg.solve(c, glam[..., None])[..., 0]


def dynamics_residual(p: LqProblem, grid: Grid, x, u) -> float:
    """Max node defect of ``x' - F x - G u`` with central differences."""
    if grid.steps < 2:
        return float("nan")
    ts = grid.nodes
    f = p.F.evaluate_many(ts[1:-1])
    g = p.G.evaluate_many(ts[1:-1])
    xdot = (x[2:] - x[:-2]) / (2.0 * grid.h)
    rhs = np.einsum("tij,tj->ti", f, x[1:-1]) + np.einsum("tij,tj->ti", g, u[1:-1])
    return float(np.max(np.linalg.norm(xdot - rhs, axis=1)))


def _finish(p, traj, md, x, lam, u, sweep_system=None) -> Solution:
    grid = traj.grid
    cost = stage_cost(p, grid, x, lam)
    if sweep_system is None:
        try:
            sweep_system = build_sweep_system(p, traj.final)
        except SingularMatrix:
            sweep_system = None
    diagnostics = {
        "d_symmetry": sweep_symmetry_residual(sweep_system) if sweep_system is not None else float("nan"),
        "symplectic_max": trajectory_symplectic_max(traj),
        "bc_residual": boundary_residual(p, x[0], x[-1]),
        "dynamics_residual": dynamics_residual(p, grid, x, u),
        "duality_gap": abs(cost + 0.5 * float(md.nu @ p.q)),
    }
    return Solution(grid, x, u, lam, md.x0.copy(), md.nu.copy(), cost, diagnostics)


def open_loop(p: LqProblem, traj: BlockTrajectory, md: MissingData, sweep_system=None) -> Solution:
    """Trajectory from ``[x; lam](t) = Phi(t, t0) [x0; lam0]`` at every node."""
    n = p.n
    lam0 = costate_initial(md.nu, p)
    z0 = np.concatenate([md.x0, lam0])
    z = traj.phi @ z0
    x, lam = z[:, :n], z[:, n:]
    u = _controls(p, traj.grid.nodes, lam)
    return _finish(p, traj, md, x, lam, u, sweep_system)


def _feedback_terms(b: FundamentalBlocks, lam0):
    """Gain ``K`` and offset ``c`` with ``lam(t) = K x(t) + c``."""
    try:
        k = mat_solve(b.phi11.T, b.phi21.T).T
    except SingularMatrix as exc:
        raise SingularMatrix(f"Phi11(t, t0) is singular at t={b.t:.6g}; "
                             f"feedback form unavailable (use open loop)", exc.condition) from None
    return k, (b.phi22 - k @ b.phi12) @ lam0


def feedback_control(p: LqProblem, b: FundamentalBlocks, x, nu) -> np.ndarray:
    """Control ``u(t)`` as a function of the current state.

    Eliminating ``x0`` through ``x(t) = Phi11 x0 + Phi12 lam0`` gives
    ``lam(t) = Phi21 Phi11^{-1} x(t) + (Phi22 - Phi21 Phi11^{-1} Phi12) lam0``
    with ``lam0 = -Phi1' nu``; then ``u = -C^{-1} G' lam``.
    """
    k, c = _feedback_terms(b, costate_initial(nu, p))
    lam = k @ np.asarray(x, dtype=float) + c
    return _controls(p, [b.t], lam[None])[0]


def _stage_blocks(traj: BlockTrajectory, hs):
    """Blocks at every RK4 stage, shape ``(3 * steps, 2n, 2n)``.

    Step ends are node values; mid-steps use cubic Hermite interpolation
    with one-sided derivatives ``H Phi`` taken from the stage table ``hs``.
    """
    phi = traj.phi
    steps = phi.shape[0] - 1
    hs = hs.reshape((steps, 3) + phi.shape[1:])
    d_start = hs[:, 0] @ phi[:-1]
    d_end = hs[:, 2] @ phi[1:]
    out = np.empty((steps, 3) + phi.shape[1:])
    out[:, 0] = phi[:-1]
    out[:, 1] = 0.5 * (phi[:-1] + phi[1:]) + (traj.grid.h / 8.0) * (d_start - d_end)
    out[:, 2] = phi[1:]
    return out.reshape((-1,) + phi.shape[1:])


def closed_loop(p: LqProblem, md: MissingData, traj: BlockTrajectory) -> Solution:
    """Integrate the state under feedback from ``x(t0) = x0``.

    ``x' = (F - S K(t)) x - S c(t)`` with ``S = G C^{-1} G'`` and the gain
    and offset of :func:`feedback_control`. Blocks between grid nodes are
    reconstructed by cubic Hermite interpolation using ``Phi' = H Phi``.

    Raises
    ------
    SingularMatrix
        ``Phi11(t, t0)`` becomes singular somewhere on the grid.
    """
    grid = traj.grid
    n = p.n
    hs = assemble_h_stages(p, grid)
    stage_phi = _stage_blocks(traj, hs)
    lam0 = costate_initial(md.nu, p)
    fs = hs[:, :n, :n]
    ss = -hs[:, :n, n:]

    p11, p12 = stage_phi[:, :n, :n], stage_phi[:, :n, n:]
    p21, p22 = stage_phi[:, n:, :n], stage_phi[:, n:, n:]
    try:
        gains = np.swapaxes(batched_solve(np.swapaxes(p11, 1, 2), np.swapaxes(p21, 1, 2), "Phi11"), 1, 2)
    except SingularMatrix as exc:
        raise SingularMatrix(f"Phi11(t, t0) is singular on the grid; feedback form unavailable "
                             f"(use open loop): {exc}", exc.condition) from None
    offsets = np.einsum("tij,j->ti", p22 - gains @ p12, lam0)
    a = fs - ss @ gains
    bias = -np.einsum("tij,tj->ti", ss, offsets)

    def rhs(j, x):
        return a[j] @ x + bias[j]

    x = rk4_integrate_staged(rhs, md.x0, grid)
    node_gains = np.concatenate([gains[::3], gains[-1:]])
    node_offsets = np.concatenate([offsets[::3], offsets[-1:]])
    lam = np.einsum("tij,tj->ti", node_gains, x) + node_offsets
    u = _controls(p, grid.nodes, lam)
    return _finish(p, traj, md, x, lam, u)


def fundamental_trajectory(p: LqProblem, steps: int = 2000, fundamental: str = "direct") -> BlockTrajectory:
    """Fundamental matrix on the problem grid by the chosen construction."""
    from .zakhar_itkin import factor_block_trajectory, stationary_block_trajectory

    grid = p.grid(steps)
    if fundamental == "direct":
        return fundamental_direct(p, grid)
    if fundamental == "zakhar-itkin":
        return factor_block_trajectory(p, grid)
    if fundamental == "stationary":
        return stationary_block_trajectory(p, grid)
    raise ValueError(f"unknown fundamental matrix construction {fundamental!r}; expected one of {FUNDAMENTALS}")


def solve(p: LqProblem, method: str = "sweep", fundamental: str = "direct",
          steps: int = 2000, traj: BlockTrajectory = None) -> Solution:
    """Run the full pipeline: fundamental matrix, missing data, trajectory.

    ``method`` selects ``sweep`` (symmetric system + open loop),
    ``augmented`` (joint endpoint system + open loop) or ``feedback``
    (symmetric system + closed-loop integration).
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    if traj is None:
        traj = fundamental_trajectory(p, steps, fundamental)
    system = build_sweep_system(p, traj.final)
    if method == "augmented":
        md = augmented_solve(p, traj.final)
    else:
        md = solve_missing_data(system)
    if method == "feedback":
        return closed_loop(p, md, traj)
    return open_loop(p, traj, md, system)


def singularity_hints(p: LqProblem, report=None) -> list:
    """Human-readable likely causes for a singular missing-data system."""
    from .problem import validate

    hints = []
    ts = np.linspace(p.t0, p.tau, 11)
    if np.all(p.R.evaluate_many(ts) == 0.0):
        hints.append("R is identically zero: the cost does not see the state, so boundary rows "
                     "must pin x(t0) and x(tau) completely")
    if report is None:
        report = validate(p)
    if report.gramian_min_eig is not None and report.gramian_min_eig <= 1e-8:
        hints.append(f"controllability Gramian margin is {report.gramian_min_eig:.3e}")
    if report.bc_rank < p.k:
        hints.append(f"boundary rows are dependent (rank {report.bc_rank} < k={p.k})")
    return hints
