"""
Euler-Lagrange system and its fundamental (state-transition) matrix.

The joint state ``(x, lam)`` obeys ``d/dt [x; lam] = H(t) [x; lam]`` with::

    H = [[ F, -G C^{-1} G'],
         [-R, -F'         ]]

so that ``u = -C^{-1} G' lam`` and the transversality conditions read
``lam(t0) = -Phi1' nu``, ``lam(tau) = -Phi2' nu``. ``J H`` is symmetric and
the transition matrix is symplectic; the residual helpers below measure how
far a computed matrix is from those structures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularMatrix
from .numerics import Grid, rk4_integrate_staged
from .problem import LqProblem


@dataclass(frozen=True)
class FundamentalBlocks:
    """The four ``n x n`` blocks of ``Phi(t, t0)``."""

    t: float
    phi11: np.ndarray
    phi12: np.ndarray
    phi21: np.ndarray
    phi22: np.ndarray

    @property
    def n(self) -> int:
        return self.phi11.shape[0]

    def as_matrix(self) -> np.ndarray:
        return np.block([[self.phi11, self.phi12], [self.phi21, self.phi22]])

    @classmethod
    def from_matrix(cls, t, phi) -> "FundamentalBlocks":
        n = phi.shape[0] // 2
        return cls(float(t), phi[:n, :n], phi[:n, n:], phi[n:, :n], phi[n:, n:])

    @classmethod
    def identity(cls, t, n) -> "FundamentalBlocks":
        e, z = np.eye(n), np.zeros((n, n))
        return cls(float(t), e, z, z.copy(), e.copy())


class BlockTrajectory:
    """``Phi(t, t0)`` at every node of a grid.

    Indexing returns :class:`FundamentalBlocks`; the raw stack of shape
    ``(steps + 1, 2n, 2n)`` is available as :attr:`phi`.
    """

    def __init__(self, grid: Grid, phi: np.ndarray):
        if phi.shape[0] != grid.steps + 1 or phi.shape[1] != phi.shape[2] or phi.shape[1] % 2:
            raise ValueError(f"block stack of shape {phi.shape} does not fit a grid of {grid.steps} steps")
        self.grid = grid
        self.phi = phi
        self.phi.setflags(write=False)

    @property
    def n(self) -> int:
        return self.phi.shape[1] // 2

    def __len__(self):
        return self.phi.shape[0]

    def __getitem__(self, i) -> FundamentalBlocks:
        if isinstance(i, slice):
            return [self[j] for j in range(len(self))[i]]
        i = range(len(self))[i]
        return FundamentalBlocks.from_matrix(self.grid.node(i), self.phi[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def final(self) -> FundamentalBlocks:
        return self[-1]


def _control_weight(g, c):
    """``G C^{-1} G'`` for stacked ``G`` and ``C``."""
    try:
        cg = np.linalg.solve(c, np.swapaxes(g, -1, -2))
    except np.linalg.LinAlgError:
        raise SingularMatrix("control weight C is singular") from None
    return g @ cg


def _h_from_parts(f, s, r):
    top = np.concatenate([f, -s], axis=2)
    bottom = np.concatenate([-r, -np.swapaxes(f, 1, 2)], axis=2)
    return np.concatenate([top, bottom], axis=1)


def assemble_h_many(p: LqProblem, ts, side: str = "right") -> np.ndarray:
    """Stack of ``H(t)`` for every ``t`` in ``ts`` (one-sided at jumps, see ``side``)."""
    ts = np.asarray(ts, dtype=float).reshape(-1)
    ev = lambda tm: tm.evaluate_many(ts, side=side)  # noqa: E731
    return _h_from_parts(ev(p.F), _control_weight(ev(p.G), ev(p.C)), ev(p.R))


def assemble_h_stages(p: LqProblem, grid: Grid) -> np.ndarray:
    """``H`` at the RK4 stages of ``grid``, shape ``(3 * steps, 2n, 2n)``."""
    s = _control_weight(p.G.stage_values(grid), p.C.stage_values(grid))
    return _h_from_parts(p.F.stage_values(grid), s, p.R.stage_values(grid))


def assemble_h(p: LqProblem, t: float) -> np.ndarray:
    return assemble_h_many(p, [t])[0]


def j_matrix(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be positive")
    e, z = np.eye(n), np.zeros((n, n))
    return np.block([[z, e], [-e, z]])


def hamiltonian_residual(h) -> float:
    """``||J H - (J H)'||_2 / (1 + ||H||_2)``; zero for a Hamiltonian matrix."""
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] % 2:
        raise ValueError(f"expected an even square matrix, got shape {h.shape}")
    jh = j_matrix(h.shape[0] // 2) @ h
    return float(np.linalg.norm(jh - jh.T, 2) / (1.0 + np.linalg.norm(h, 2)))


def symplectic_residual(b: FundamentalBlocks) -> float:
    """Largest Frobenius defect among the four block identities of a symplectic matrix."""
    e = np.eye(b.n)
    defects = (
        b.phi22 @ b.phi11.T - b.phi21 @ b.phi12.T - e,
        b.phi22 @ b.phi21.T - b.phi21 @ b.phi22.T,
        b.phi11 @ b.phi12.T - b.phi12 @ b.phi11.T,
        b.phi11 @ b.phi22.T - b.phi12 @ b.phi21.T - e,
    )
    return float(max(np.linalg.norm(d) for d in defects))


def tabulated_rhs(mats: np.ndarray):
    """Staged RHS ``(j, Y) -> mats[j] @ Y`` for :func:`rk4_integrate_staged`."""

    def rhs(j, y):
        return mats[j] @ y

    return rhs


def fundamental_direct(p: LqProblem, grid: Grid) -> BlockTrajectory:
    """Integrate ``Phi' = H(t) Phi``, ``Phi(t0) = E`` with RK4 on ``grid``."""
    if abs(grid.t_start - p.t0) > 1e-12 * max(1.0, abs(p.t0)) or \
            abs(grid.t_end - p.tau) > 1e-12 * max(1.0, abs(p.tau)):
        raise ValueError("grid must span [t0, tau]")
    hs = assemble_h_stages(p, grid)
    phi = rk4_integrate_staged(tabulated_rhs(hs), np.eye(2 * p.n), grid)
    return BlockTrajectory(grid, phi)


def trajectory_symplectic_max(traj: BlockTrajectory) -> float:
    """Worst :func:`symplectic_residual` over all nodes (vectorized)."""
    n = traj.n
    phi = traj.phi
    p11, p12, p21, p22 = phi[:, :n, :n], phi[:, :n, n:], phi[:, n:, :n], phi[:, n:, n:]
    tr = lambda a: np.swapaxes(a, 1, 2)  # noqa: E731
    e = np.eye(n)
    defects = (
        p22 @ tr(p11) - p21 @ tr(p12) - e,
        p22 @ tr(p21) - p21 @ tr(p22),
        p11 @ tr(p12) - p12 @ tr(p11),
        p11 @ tr(p22) - p12 @ tr(p21) - e,
    )
    return float(max(np.linalg.norm(d, axis=(1, 2)).max() for d in defects))
