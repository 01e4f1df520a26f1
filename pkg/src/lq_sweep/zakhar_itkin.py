"""
Fundamental matrix through three ``n x n`` flows (psi, W, V).

The factors describe the mixed relation

    x(t)   = psi x(t0) - W lam(t)
    lam(t0) = V x(t0) + psi' lam(t)

and obey, with ``S = G C^{-1} G'``::

    psi' = (F - W R) psi,                 psi(t0) = E
    W'   = F W + W F' - W R W + S,        W(t0)   = 0
    V'   = psi' R psi,                    V(t0)   = 0

Sign convention: with these equations the blocks

    Phi11 = psi + W psi'^{-1} V,   Phi12 = -W psi'^{-1},
    Phi21 = -psi'^{-1} V,          Phi22 = psi'^{-1}

coincide with the directly integrated ``Phi' = H Phi``. ``W`` here is the
filter-type Riccati flow (positive semidefinite for ``R, S >= 0``); the
opposite-sign flow ``-W`` satisfies ``W' = FW + WF' + WRW - S`` instead.

Only ``3 n^2`` state entries are integrated, against ``4 n^2`` for the
direct ``2n x 2n`` transition matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionViolated
from .hamiltonian import BlockTrajectory, FundamentalBlocks, _control_weight
from .numerics import Grid, batched_solve, lyapunov_solve, mat_expm, mat_solve, rk4_integrate_staged
from .problem import LqProblem


@dataclass(frozen=True)
class PsiWvState:
    t: float
    psi: np.ndarray
    w: np.ndarray
    v: np.ndarray


class FactorTrajectory:
    """Integrated ``(psi, W, V)`` on a grid, stacked as ``(steps + 1, 3n, n)``."""

    def __init__(self, grid: Grid, states: np.ndarray):
        self.grid = grid
        self.states = states
        self.states.setflags(write=False)

    @property
    def n(self) -> int:
        return self.states.shape[2]

    @property
    def state_size(self) -> int:
        """Number of scalar unknowns advanced by the integrator."""
        return int(self.states[0].size)

    def __len__(self):
        return self.states.shape[0]

    def __getitem__(self, i) -> PsiWvState:
        if isinstance(i, slice):
            return [self[j] for j in range(len(self))[i]]
        i = range(len(self))[i]
        n = self.n
        s = self.states[i]
        return PsiWvState(self.grid.node(i), s[:n], s[n:2 * n], s[2 * n:])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]


def integrate_psi_w_v(p: LqProblem, grid: Grid) -> FactorTrajectory:
    """Co-integrate ``psi``, ``W`` and ``V`` with RK4.

    Raises
    ------
    NonFiniteState
        If the flow escapes; the exception carries the first bad node time.
    """
    n = p.n
    fs = p.F.stage_values(grid)
    rs = p.R.stage_values(grid)
    ss = _control_weight(p.G.stage_values(grid), p.C.stage_values(grid))

    def rhs(j, y):
        f, r = fs[j], rs[j]
        psi, w = y[:n], y[n:2 * n]
        wr = w @ r
        fw = f @ w
        return np.concatenate([
            (f - wr) @ psi,
            fw + fw.T - wr @ w + ss[j],
            psi.T @ r @ psi,
        ])

    y0 = np.concatenate([np.eye(n), np.zeros((n, n)), np.zeros((n, n))])
    return FactorTrajectory(grid, rk4_integrate_staged(rhs, y0, grid))


def blocks_from_factors(s: PsiWvState) -> FundamentalBlocks:
    """Fundamental-matrix blocks from one ``(psi, W, V)`` state.

    Raises
    ------
    SingularMatrix
        When ``psi`` is near-singular; fall back to the direct integration.
    """
    n = s.psi.shape[0]
    phi22 = mat_solve(s.psi.T, np.eye(n))
    return FundamentalBlocks(
        s.t,
        phi11=s.psi + s.w @ phi22 @ s.v,
        phi12=-s.w @ phi22,
        phi21=-phi22 @ s.v,
        phi22=phi22,
    )


def factor_block_trajectory(p: LqProblem, grid: Grid) -> BlockTrajectory:
    """Fundamental matrix on ``grid`` assembled from the reduced flows."""
    factors = integrate_psi_w_v(p, grid)
    n = p.n
    st = factors.states
    psi, w, v = st[:, :n], st[:, n:2 * n], st[:, 2 * n:]
    eye = np.broadcast_to(np.eye(n), psi.shape)
    phi22 = batched_solve(np.swapaxes(psi, 1, 2), eye, "psi")
    phi = np.empty((st.shape[0], 2 * n, 2 * n))
    phi[:, :n, :n] = psi + w @ phi22 @ v
    phi[:, :n, n:] = -w @ phi22
    phi[:, n:, :n] = -phi22 @ v
    phi[:, n:, n:] = phi22
    return BlockTrajectory(grid, phi)


def _require_stationary_free(p: LqProblem):
    if not p.is_stationary:
        raise PreconditionViolated("stationary blocks need constant F, G, R, C")
    if np.any(p.R.value != 0.0):
        raise PreconditionViolated("stationary blocks need R = 0")


def stationary_w1(p: LqProblem) -> np.ndarray:
    """Solution of ``F W1 + W1 F' = G C^{-1} G'`` for a constant problem."""
    _require_stationary_free(p)
    s = _control_weight(p.G.value[None], p.C.value[None])[0]
    return lyapunov_solve(p.F.value, 0.5 * (s + s.T))


def stationary_blocks(p: LqProblem, t: float, w1=None) -> FundamentalBlocks:
    """Closed-form blocks for constant ``F, G, C`` and ``R = 0``.

    ``psi = e^{F(t-t0)}``, ``W = psi W1 psi' - W1``, ``V = 0``, hence
    ``Phi11 = psi``, ``Phi21 = 0``, ``Phi22 = e^{-F'(t-t0)}`` and
    ``Phi12 = W1 e^{-F'(t-t0)} - e^{F(t-t0)} W1``.

    Raises
    ------
    PreconditionViolated
        Non-constant data or ``R != 0``.
    SingularMatrix
        Resonant spectrum of ``F`` (some ``l_i + l_j = 0``).
    """
    _require_stationary_free(p)
    if w1 is None:
        w1 = stationary_w1(p)
    dt = t - p.t0
    f = p.F.value
    psi = mat_expm(f * dt)
    phi22 = mat_expm(-f.T * dt)
    return FundamentalBlocks(
        float(t),
        phi11=psi,
        phi12=w1 @ phi22 - psi @ w1,
        phi21=np.zeros_like(f),
        phi22=phi22,
    )


def stationary_block_trajectory(p: LqProblem, grid: Grid) -> BlockTrajectory:
    w1 = stationary_w1(p)
    phi = np.stack([stationary_blocks(p, t, w1).as_matrix() for t in grid.nodes])
    return BlockTrajectory(grid, phi)


def reduced_state_size(n: int) -> int:
    return 3 * n * n


def direct_state_size(n: int) -> int:
    return 4 * n * n
