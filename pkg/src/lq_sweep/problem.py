"""
Problem instances: dynamics ``x' = F x + G u``, coupled boundary rows
``Phi1 x(t0) - Phi2 x(tau) = q`` and cost ``1/2 int (x'Rx + u'Cu) dt``.

Time-varying coefficients are carried by :class:`TimeMatrix`, either a
constant value or samples with linear / step interpolation. Problems are
read from and written to a small JSON document (see :func:`parse_problem`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import qr

from .errors import OutOfRange, ParseError, ShapeError
from .numerics import Grid, as_matrix, rk4_integrate_staged

INTERPOLATIONS = ("linear", "previous")


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class TimeMatrix:
    """Matrix-valued function of time.

    Use :meth:`constant` or :meth:`sampled` to build one. Sampled matrices
    are exact at the sample times; ``linear`` interpolates entrywise between
    neighbours and ``previous`` holds the latest sample (jumps allowed).
    """

    def __init__(self, value=None, times=None, values=None, interp="linear"):
        if value is not None:
            self.kind = "constant"
            self.value = _frozen(as_matrix(value))
            self.times = None
            self.values = None
            self.interp = None
            return
        if interp not in INTERPOLATIONS:
            raise ValueError(f"interp must be one of {INTERPOLATIONS}, got {interp!r}")
        times = np.asarray(times, dtype=float).reshape(-1)
        if times.size == 0:
            raise ValueError("sampled matrix needs at least one sample")
        if not np.all(np.isfinite(times)):
            raise ValueError("sample times must be finite")
        if np.any(np.diff(times) <= 0):
            raise ValueError("times not increasing")
        mats = [as_matrix(v, "sample") for v in values]
        if len(mats) != times.size:
            raise ValueError(f"{times.size} sample times but {len(mats)} values")
        if len({m.shape for m in mats}) != 1:
            raise ShapeError("sampled values do not share one shape")
        self.kind = "sampled"
        self.value = None
        self.times = _frozen(times)
        self.values = _frozen(np.stack(mats))
        self.interp = interp

    @classmethod
    def constant(cls, value) -> "TimeMatrix":
        return cls(value=value)

    @classmethod
    def sampled(cls, times, values, interp="linear") -> "TimeMatrix":
        return cls(times=times, values=values, interp=interp)

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"

    @property
    def shape(self):
        return self.value.shape if self.is_constant else self.values.shape[1:]

    def covers(self, a: float, b: float) -> bool:
        if self.is_constant:
            return True
        tol = 1e-12 * max(1.0, abs(a), abs(b))
        return self.times[0] <= a + tol and self.times[-1] >= b - tol

    def __call__(self, t: float) -> np.ndarray:
        return self.evaluate_many(np.array([t], dtype=float))[0]

    def evaluate_many(self, ts, side: str = "right") -> np.ndarray:
        """Evaluate at an array of times; result has shape ``(len(ts),) + shape``.

        ``side`` picks the one-sided limit at a sample time of a ``previous``
        matrix: ``"right"`` gives the new value, ``"left"`` the old one.
        Times within ``1e-12`` (relative) of a sample count as that sample.
        """
        if side not in ("left", "right"):
            raise ValueError(f"side must be 'left' or 'right', got {side!r}")
        ts = np.asarray(ts, dtype=float).reshape(-1)
        if self.is_constant:
            return np.broadcast_to(self.value, (ts.size,) + self.value.shape).copy()
        lo, hi = self.times[0], self.times[-1]
        tol = 1e-12 * max(1.0, abs(lo), abs(hi))
        if ts.size and (ts.min() < lo - tol or ts.max() > hi + tol):
            bad = ts[(ts < lo - tol) | (ts > hi + tol)][0]
            raise OutOfRange(f"t={bad} outside sample range [{lo}, {hi}]")
        ts = np.clip(ts, lo, hi)
        last = self.times.size - 1
        if self.interp == "previous" or last == 0:
            if side == "right":
                idx = np.searchsorted(self.times, ts + tol, side="right") - 1
            else:
                idx = np.searchsorted(self.times, ts - tol, side="left") - 1
            return self.values[np.clip(idx, 0, last)].copy()
        idx = np.clip(np.searchsorted(self.times, ts, side="right") - 1, 0, last - 1)
        t_lo = self.times[idx]
        w = ((ts - t_lo) / (self.times[idx + 1] - t_lo))[:, None, None]
        return self.values[idx] * (1.0 - w) + self.values[idx + 1] * w

    def stage_values(self, grid: Grid) -> np.ndarray:
        """Values at the RK4 stages of ``grid``, shape ``(3 * steps,) + shape``.

        Step starts and mid-steps use right limits, step ends left limits, so
        jumps placed on grid nodes never leak into the wrong step.
        """
        st = grid.stage_times()
        out = np.empty((st.shape[0], 3) + tuple(self.shape))
        out[:, :2] = self.evaluate_many(st[:, :2].ravel()).reshape((st.shape[0], 2) + tuple(self.shape))
        out[:, 2] = self.evaluate_many(st[:, 2], side="left")
        return out.reshape((-1,) + tuple(self.shape))

    def to_dict(self) -> dict:
        if self.is_constant:
            return {"constant": self.value.tolist()}
        return {"sampled": {"times": self.times.tolist(),
                            "values": self.values.tolist(),
                            "interp": self.interp}}

    def __repr__(self):
        if self.is_constant:
            return f"TimeMatrix.constant({self.value.tolist()!r})"
        return f"TimeMatrix.sampled(<{self.times.size} samples>, interp={self.interp!r})"


def eval_time_matrix(tm: TimeMatrix, t: float) -> np.ndarray:
    return tm(t)


def _as_time_matrix(x) -> TimeMatrix:
    return x if isinstance(x, TimeMatrix) else TimeMatrix.constant(x)


@dataclass(frozen=True)
class LqProblem:
    """One LQ problem with non-separated two-point boundary conditions.

    Matrix arguments may be plain arrays (taken as constant) or
    :class:`TimeMatrix`. ``q`` is stored as a length-``k`` vector.
    """

    F: TimeMatrix
    G: TimeMatrix
    R: TimeMatrix
    C: TimeMatrix
    Phi1: np.ndarray
    Phi2: np.ndarray
    q: np.ndarray
    t0: float
    tau: float
    n: int = field(init=False)
    m: int = field(init=False)
    k: int = field(init=False)

    def __post_init__(self):
        set_ = object.__setattr__
        for name in ("F", "G", "R", "C"):
            set_(self, name, _as_time_matrix(getattr(self, name)))
        set_(self, "Phi1", _frozen(as_matrix(self.Phi1, "Phi1")))
        set_(self, "Phi2", _frozen(as_matrix(self.Phi2, "Phi2")))
        set_(self, "q", _frozen(np.asarray(self.q, dtype=float).reshape(-1)))
        set_(self, "t0", float(self.t0))
        set_(self, "tau", float(self.tau))
        n = self.F.shape[0]
        m = self.G.shape[1]
        k = self.Phi1.shape[0]
        set_(self, "n", n)
        set_(self, "m", m)
        set_(self, "k", k)
        expected = {"F": (n, n), "G": (n, m), "R": (n, n), "C": (m, m)}
        for name, shape in expected.items():
            got = tuple(getattr(self, name).shape)
            if got != shape:
                raise ShapeError(f"{name} has shape {got}, expected {shape}")
        if self.Phi1.shape != (k, n) or self.Phi2.shape != (k, n):
            raise ShapeError(f"Phi1/Phi2 have shapes {self.Phi1.shape}/{self.Phi2.shape}, expected {(k, n)}")
        if self.q.shape != (k,):
            raise ShapeError(f"q has length {self.q.size}, expected {k}")
        if not np.all(np.isfinite(self.q)):
            raise ValueError("q has non-finite entries")
        if not self.t0 < self.tau:
            raise ValueError(f"need t0 < tau, got t0={self.t0}, tau={self.tau}")

    @property
    def is_stationary(self) -> bool:
        return all(getattr(self, s).is_constant for s in ("F", "G", "R", "C"))

    def grid(self, steps: int = 2000) -> Grid:
        return Grid(self.t0, self.tau, steps)

    def replace(self, **changes) -> "LqProblem":
        kw = {s: getattr(self, s) for s in ("F", "G", "R", "C", "Phi1", "Phi2", "q", "t0", "tau")}
        kw.update(changes)
        return LqProblem(**kw)


@dataclass
class ValidationReport:
    findings: list = field(default_factory=list)
    gramian_min_eig: Optional[float] = None
    bc_rank: int = 0
    bc_rank_augmented: int = 0

    @property
    def ok(self) -> bool:
        return not any(sev == "error" for sev, _, _ in self.findings)

    def error(self, code, message):
        self.findings.append(("error", code, message))

    def warning(self, code, message):
        self.findings.append(("warning", code, message))

    def messages(self, severity=None):
        return [msg for sev, _, msg in self.findings if severity is None or sev == severity]


def numerical_rank(a, rtol: float = 1e-10) -> int:
    """Rank from QR with column pivoting, tolerance ``rtol * ||a||``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return 0
    scale = np.linalg.norm(a, 2)
    if scale == 0.0:
        return 0
    r = qr(a, mode="r", pivoting=True)[0]
    d = np.abs(np.diag(r))
    return int(np.sum(d > rtol * scale))


def validate(p: LqProblem, samples: int = 21, gramian_steps: int = 500) -> ValidationReport:
    """Check the standing assumptions of a problem.

    Covers sample coverage of ``[t0, tau]``, symmetry and definiteness of
    ``R`` and ``C`` at ``samples`` equispaced times, consistency of the
    boundary rows (rank of ``[Phi1 | -Phi2]`` against ``[Phi1 | -Phi2 | q]``)
    and the smallest eigenvalue of the controllability Gramian.
    """
    rep = ValidationReport()
    n, m, k = p.n, p.m, p.k
    for name, shape in (("F", (n, n)), ("G", (n, m)), ("R", (n, n)), ("C", (m, m))):
        tm = getattr(p, name)
        if tuple(tm.shape) != shape:
            rep.error("shape", f"{name} has shape {tuple(tm.shape)}, expected {shape}")
        if not tm.covers(p.t0, p.tau):
            rep.error("coverage", f"{name} samples do not cover [{p.t0}, {p.tau}]")
    if not rep.ok:
        return rep

    ts = np.linspace(p.t0, p.tau, max(int(samples), 2))
    for name, floor, label in (("R", -1e-9, "positive semidefinite"), ("C", 1e-12, "positive definite")):
        mats = getattr(p, name).evaluate_many(ts)
        asym = np.abs(mats - np.swapaxes(mats, 1, 2)).max()
        if asym > 1e-9 * max(1.0, np.abs(mats).max()):
            rep.error(f"{name}_not_symmetric", f"{name} not symmetric (max asymmetry {asym:.3e})")
            continue
        low = np.linalg.eigvalsh(0.5 * (mats + np.swapaxes(mats, 1, 2))).min()
        if not low >= floor:
            rep.error(f"{name}_not_definite", f"{name} not {label} (smallest eigenvalue {low:.3e})")

    coeff = np.hstack([p.Phi1, -p.Phi2])
    aug = np.hstack([coeff, p.q.reshape(-1, 1)])
    rep.bc_rank = numerical_rank(coeff)
    rep.bc_rank_augmented = numerical_rank(aug)
    if rep.bc_rank_augmented > rep.bc_rank:
        rep.error("bc_inconsistent",
                  f"boundary condition inconsistent: augmented rank {rep.bc_rank_augmented} "
                  f"> coefficient rank {rep.bc_rank}")
    if k > 2 * n:
        rep.warning("bc_overdetermined", f"k={k} boundary rows exceed 2n={2 * n}")

    try:
        wc = controllability_gramian(p, gramian_steps)
        rep.gramian_min_eig = float(np.linalg.eigvalsh(wc).min())
        if rep.gramian_min_eig <= 1e-10 * max(1.0, np.abs(wc).max()):
            rep.warning("weak_controllability",
                        f"controllability Gramian nearly singular (min eigenvalue {rep.gramian_min_eig:.3e})")
    except FloatingPointError as exc:
        rep.warning("gramian_failed", f"controllability Gramian not computed: {exc}")
    return rep


def controllability_gramian(p: LqProblem, steps: int = 2000) -> np.ndarray:
    """Gramian ``int_{t0}^{tau} Psi(tau,s) G G' Psi(tau,s)' ds`` of the pair (F, G).

    Integrated as ``W' = F W + W F' + G G'`` from ``W(t0) = 0`` on the RK4
    grid, which equals the transported quadrature at every node.
    """
    grid = p.grid(steps)
    fs = p.F.stage_values(grid)
    gs = p.G.stage_values(grid)
    ggs = gs @ np.swapaxes(gs, 1, 2)

    def rhs(j, w):
        fw = fs[j] @ w
        return fw + fw.T + ggs[j]

    w = rk4_integrate_staged(rhs, np.zeros((p.n, p.n)), grid)[-1]
    return 0.5 * (w + w.T)


# -- JSON problem files ----------------------------------------------------

_REQUIRED = ("n", "m", "k", "t0", "tau", "F", "G", "R", "C", "Phi1", "Phi2", "q")


def _numeric_matrix(obj, where):
    try:
        arr = np.array(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: expected a list of numeric rows ({exc})") from None
    if arr.ndim != 2:
        raise ParseError(f"{where}: expected a list of rows, got nesting depth {arr.ndim}")
    return arr


def _parse_mx(obj, where) -> TimeMatrix:
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ParseError(f"{where}: expected {{'constant': ...}} or {{'sampled': ...}}")
    if "constant" in obj:
        return TimeMatrix.constant(_numeric_matrix(obj["constant"], f"{where}.constant"))
    if "sampled" not in obj:
        raise ParseError(f"{where}: unknown matrix kind {next(iter(obj))!r}")
    s = obj["sampled"]
    if not isinstance(s, dict):
        raise ParseError(f"{where}.sampled: expected an object")
    for key in ("times", "values"):
        if key not in s:
            raise ParseError(f"{where}.sampled: missing field {key!r}")
    interp = s.get("interp", "linear")
    if interp not in INTERPOLATIONS:
        raise ParseError(f"{where}.sampled.interp: expected one of {INTERPOLATIONS}, got {interp!r}")
    try:
        times = np.array(s["times"], dtype=float)
    except (TypeError, ValueError):
        raise ParseError(f"{where}.sampled.times: expected a list of numbers") from None
    if times.ndim != 1:
        raise ParseError(f"{where}.sampled.times: expected a flat list of numbers")
    if np.any(np.diff(times) <= 0):
        raise ParseError(f"{where}.sampled.times: times not increasing")
    if not isinstance(s["values"], list):
        raise ParseError(f"{where}.sampled.values: expected a list of matrices")
    values = [_numeric_matrix(v, f"{where}.sampled.values[{i}]") for i, v in enumerate(s["values"])]
    if len(values) != times.size:
        raise ParseError(f"{where}.sampled: {times.size} times but {len(values)} values")
    if len({v.shape for v in values}) > 1:
        raise ShapeError(f"{where}.sampled.values: samples do not share one shape")
    return TimeMatrix.sampled(times, values, interp)


def parse_problem(text: str) -> LqProblem:
    """Build an :class:`LqProblem` from a JSON problem document.

    Raises
    ------
    ParseError
        Malformed JSON, missing or mistyped fields, non-increasing times.
    ShapeError
        Declared ``n``, ``m``, ``k`` disagree with a matrix payload.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ParseError("problem document must be a JSON object")
    for key in _REQUIRED:
        if key not in doc:
            raise ParseError(f"missing field {key!r}")
    dims = {}
    for key in ("n", "m", "k"):
        v = doc[key]
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ParseError(f"field {key!r}: expected a positive integer, got {v!r}")
        dims[key] = v
    for key in ("t0", "tau"):
        if isinstance(doc[key], bool) or not isinstance(doc[key], (int, float)):
            raise ParseError(f"field {key!r}: expected a number")
    n, m, k = dims["n"], dims["m"], dims["k"]
    mats = {key: _parse_mx(doc[key], key) for key in ("F", "G", "R", "C")}
    expected = {"F": (n, n), "G": (n, m), "R": (n, n), "C": (m, m)}
    for key, shape in expected.items():
        if tuple(mats[key].shape) != shape:
            raise ShapeError(f"field {key!r}: shape {tuple(mats[key].shape)} disagrees with declared {shape}")
    phi1 = _numeric_matrix(doc["Phi1"], "Phi1")
    phi2 = _numeric_matrix(doc["Phi2"], "Phi2")
    for key, arr in (("Phi1", phi1), ("Phi2", phi2)):
        if arr.shape != (k, n):
            raise ShapeError(f"field {key!r}: shape {arr.shape} disagrees with declared {(k, n)}")
    try:
        q = np.array(doc["q"], dtype=float)
    except (TypeError, ValueError):
        raise ParseError("field 'q': expected a list of numbers") from None
    if q.ndim != 1:
        raise ParseError("field 'q': expected a flat list of numbers")
    if q.size != k:
        raise ShapeError(f"field 'q': length {q.size} disagrees with declared k={k}")
    try:
        return LqProblem(F=mats["F"], G=mats["G"], R=mats["R"], C=mats["C"],
                         Phi1=phi1, Phi2=phi2, q=q, t0=doc["t0"], tau=doc["tau"])
    except ShapeError:
        raise
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def problem_to_dict(p: LqProblem) -> dict:
    return {
        "n": p.n, "m": p.m, "k": p.k, "t0": p.t0, "tau": p.tau,
        "F": p.F.to_dict(), "G": p.G.to_dict(), "R": p.R.to_dict(), "C": p.C.to_dict(),
        "Phi1": p.Phi1.tolist(), "Phi2": p.Phi2.tolist(), "q": p.q.tolist(),
    }


def serialize_problem(p: LqProblem) -> str:
    return json.dumps(problem_to_dict(p), indent=2)
