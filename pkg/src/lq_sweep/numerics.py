"""
Dense matrix utilities shared by every solver path.

Everything here works on small real ``numpy`` arrays. Linear solves go
through :func:`mat_solve`, which refuses systems whose 1-norm condition
estimate exceeds :data:`SINGULAR_CONDITION`; downstream code relies on that
to turn conjugate points and ill-posed boundary data into a
:class:`~lq_sweep.errors.SingularMatrix` instead of garbage.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve
from scipy.linalg.lapack import dgecon

from .errors import NonFiniteState, NotHurwitz, SingularMatrix

SINGULAR_CONDITION = 1e12
INFINITE_CONDITION = 1e308

__all__ = [
    "Grid",
    "as_matrix",
    "batched_solve",
    "condition_estimate",
    "lyapunov_integral",
    "lyapunov_solve",
    "mat_expm",
    "mat_solve",
    "rk4_integrate",
    "rk4_integrate_staged",
]


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float array (scalars and vectors are promoted)."""
    arr = np.array(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True)
class Grid:
    """Uniform time grid with ``steps`` intervals on ``[t_start, t_end]``."""

    t_start: float
    t_end: float
    steps: int

    def __post_init__(self):
        if not (math.isfinite(self.t_start) and math.isfinite(self.t_end)):
            raise ValueError("grid end points must be finite")
        if not self.t_start < self.t_end:
            raise ValueError(f"grid needs t_start < t_end, got [{self.t_start}, {self.t_end}]")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"grid needs at least one step, got {self.steps}")
        object.__setattr__(self, "steps", int(self.steps))

    @property
    def h(self) -> float:
        return (self.t_end - self.t_start) / self.steps

    def node(self, i: int) -> float:
        if i == self.steps:
            return float(self.t_end)
        return self.t_start + i * self.h

    @property
    def nodes(self) -> np.ndarray:
        t = self.t_start + np.arange(self.steps + 1) * self.h
        t[-1] = self.t_end
        return t

    def stage_times(self) -> np.ndarray:
        """RK4 stage times, shape ``(steps, 3)``: step start, mid-step, step end."""
        t = self.nodes
        return np.column_stack([t[:-1], t[:-1] + 0.5 * self.h, t[1:]])


def _factor(a):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(a, check_finite=False)
    return lu, piv


def _condition_from_lu(a, lu):
    if np.any(np.diag(lu) == 0.0):
        return INFINITE_CONDITION
    anorm = np.linalg.norm(a, 1)
    rcond, info = dgecon(lu, anorm, norm="1")
    if info != 0 or not rcond > 0.0:
        return INFINITE_CONDITION
    return max(1.0, min(1.0 / rcond, INFINITE_CONDITION))


def condition_estimate(a) -> float:
    """Estimated 1-norm condition number of a square matrix.

    Uses the LAPACK ``gecon`` estimator on an LU factorization, so the cost
    beyond the factorization is O(n^2). Exactly singular input returns
    ``1e308``.
    """
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"condition estimate needs a square matrix, got {a.shape}")
    lu, _ = _factor(a)
    return _condition_from_lu(a, lu)


def mat_solve(a, b):
    """Solve ``a @ x = b`` with a conditioning guard.

    ``b`` may be a vector or a matrix; the result has the same shape as ``b``.

    Raises
    ------
    SingularMatrix
        If a zero pivot occurs or the condition estimate exceeds
        :data:`SINGULAR_CONDITION`.
    """
    a = as_matrix(a, "A")
    b_arr = np.asarray(b, dtype=float)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"mat_solve needs a square matrix, got {a.shape}")
    if b_arr.shape[0] != a.shape[0]:
        raise ValueError(f"right-hand side has {b_arr.shape[0]} rows, expected {a.shape[0]}")
    lu, piv = _factor(a)
    cond = _condition_from_lu(a, lu)
    if cond > SINGULAR_CONDITION:
        raise SingularMatrix(
            f"matrix of size {a.shape[0]} is singular to working precision "
            f"(condition estimate {cond:.3e})",
            condition=cond,
        )
    return lu_solve((lu, piv), b_arr, check_finite=False)


def batched_solve(a, b, what="matrix"):
    """Solve a stack of small systems ``a[i] @ x[i] = b[i]`` with the same guard.

    The 1-norm condition number is computed exactly per slice, which is
    cheap at the sizes used here.

    Raises
    ------
    SingularMatrix
        For the first slice whose condition exceeds the guard; the message
        carries its index.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(all="ignore"):
        try:
            cond = np.linalg.cond(a, 1)
        except np.linalg.LinAlgError:
            cond = np.array([condition_estimate(ai) for ai in a])
    cond = np.where(np.isfinite(cond), cond, INFINITE_CONDITION)
    bad = np.flatnonzero(cond > SINGULAR_CONDITION)
    if bad.size:
        i = int(bad[0])
        raise SingularMatrix(f"{what} singular at slice {i} (condition {cond[i]:.3e})", condition=float(cond[i]))
    return np.linalg.solve(a, b)


# Pade(13, 13) coefficients and scaling threshold (Higham 2005).
_PADE13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
)
_THETA13 = 5.371920351148152


def mat_expm(a) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a fixed Pade(13) kernel."""
    a = as_matrix(a)
    n = a.shape[0]
    if a.shape[1] != n:
        raise ValueError(f"mat_expm needs a square matrix, got {a.shape}")
    norm = np.linalg.norm(a, 1)
    s = 0
    if norm > _THETA13:
        s = int(math.ceil(math.log2(norm / _THETA13)))
    a = a / (2.0 ** s)

    b = _PADE13
    ident = np.eye(n)
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident)
    r = np.linalg.solve(v - u, v + u)
    for _ in range(s):
        r = r @ r
    return r


def rk4_integrate(rhs: Callable[[float, np.ndarray], np.ndarray], y0, grid: Grid) -> np.ndarray:
    """Classical fixed-step RK4 for a matrix-valued ODE ``Y' = rhs(t, Y)``.

    Returns an array of shape ``(grid.steps + 1,) + Y0.shape`` holding the
    state at every grid node.

    Raises
    ------
    NonFiniteState
        As soon as a node value contains a non-finite entry.
    """
    times = grid.stage_times().ravel()
    return rk4_integrate_staged(lambda j, y: rhs(times[j], y), y0, grid)


def rk4_integrate_staged(rhs: Callable[[int, np.ndarray], np.ndarray], y0, grid: Grid) -> np.ndarray:
    """RK4 whose right-hand side is addressed by stage index.

    ``rhs(j, Y)`` receives ``j = 3*i + s`` for step ``i`` and stage
    ``s`` in (start, mid-step, end), i.e. an index into
    ``grid.stage_times().ravel()``. Callers tabulate coefficients once per
    stage; evaluating the end stage as a left limit keeps the scheme fourth
    order for coefficients that jump on grid nodes.
    """
    y = np.array(y0, dtype=float)
    h = grid.h
    out = np.empty((grid.steps + 1,) + y.shape)
    out[0] = y
    for i in range(grid.steps):
        j = 3 * i
        k1 = rhs(j, y)
        k2 = rhs(j + 1, y + (0.5 * h) * k1)
        k3 = rhs(j + 1, y + (0.5 * h) * k2)
        k4 = rhs(j + 2, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        if not np.all(np.isfinite(y)):
            t_bad = grid.node(i + 1)
            raise NonFiniteState(f"integration blew up at t={t_bad:.6g} (step {i + 1})", t=t_bad)
        out[i + 1] = y
    return out


def lyapunov_solve(f, s) -> np.ndarray:
    """Solve ``F W + W F' = S`` through the vectorized Kronecker system.

    Raises
    ------
    SingularMatrix
        When some pair of eigenvalues of ``F`` sums to (nearly) zero.
    """
    f = as_matrix(f, "F")
    s = as_matrix(s, "S")
    n = f.shape[0]
    if f.shape != (n, n) or s.shape != (n, n):
        raise ValueError(f"lyapunov_solve needs square F and S of equal size, got {f.shape}, {s.shape}")
    if np.max(np.abs(s - s.T)) > 1e-10 * (1.0 + np.max(np.abs(s))):
        raise ValueError("S must be symmetric")
    ident = np.eye(n)
    # column-major vec: vec(FW) = (I kron F) vec(W), vec(WF') = (F kron I) vec(W)
    k = np.kron(ident, f) + np.kron(f, ident)
    w = mat_solve(k, s.reshape(-1, order="F")).reshape(n, n, order="F")
    return 0.5 * (w + w.T)


def lyapunov_integral(f, s, horizon: float, steps: int = 8000) -> np.ndarray:
    """Evaluate ``-int_0^horizon e^{Ft} S e^{F't} dt`` by quadrature.

    The composite trapezoid rule on ``steps`` intervals is combined with the
    same rule on every other node (one Richardson step), which removes the
    leading h^2 error term. For Hurwitz ``F`` and a long enough horizon the
    result solves ``F W + W F' = S``; it is kept free of any linear solve so
    it can check :func:`lyapunov_solve` independently.

    Raises
    ------
    NotHurwitz
        If ``||e^{F horizon}||`` is not below ``1e-8``.
    """
    f = as_matrix(f, "F")
    s = as_matrix(s, "S")
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    if np.linalg.norm(mat_expm(f * horizon), 2) >= 1e-8:
        raise NotHurwitz("e^{F*horizon} has not decayed below 1e-8; F is not Hurwitz or horizon too short")
    steps = int(steps) + int(steps) % 2
    h = horizon / steps
    step = mat_expm(f * h)
    e = np.eye(f.shape[0])
    fine = np.zeros_like(s)
    coarse = np.zeros_like(s)
    for i in range(steps + 1):
        g = e @ s @ e.T
        w = 0.5 if i in (0, steps) else 1.0
        fine += w * g
        if i % 2 == 0:
            coarse += (0.5 if i in (0, steps) else 1.0) * g
        e = step @ e
    fine *= h
    coarse *= 2.0 * h
    w1 = -(4.0 * fine - coarse) / 3.0
    return 0.5 * (w1 + w1.T)
