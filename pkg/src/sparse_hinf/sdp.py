"""Compile affine matrix inequalities into a conic program and solve it.

Each LMI ``F(v) <= -m I`` becomes the PSD-cone constraint
``smat(h - G v) >= 0`` with ``h = svec(-F0 - m I)`` and ``G[:, j] = svec(F_j)``.
The interior-point work is delegated to ``cvxopt.solvers.conelp``; every
point it returns is re-checked in un-vectorized form before being reported
as optimal.
"""

from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .lmi import AffineMatrixInequality, VariableSpace
from .system_model import DimensionError

SQRT2 = math.sqrt(2.0)

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
NUMERICAL_TROUBLE = "NumericalTrouble"
ITERATION_LIMIT = "IterationLimit"


def svec(A: np.ndarray) -> np.ndarray:
    """Upper triangle stacked column by column, off-diagonals times sqrt(2)."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    rows, cols = _triu_colmajor(n)
    scale = np.where(rows == cols, 1.0, SQRT2)
    return A[rows, cols] * scale


def smat(x: np.ndarray) -> np.ndarray:
    """Inverse of :func:`svec`."""
    x = np.asarray(x, dtype=float)
    n = int(round((math.sqrt(8 * x.size + 1) - 1) / 2))
    if n * (n + 1) // 2 != x.size:
        raise DimensionError(f"length {x.size} is not a triangular number")
    rows, cols = _triu_colmajor(n)
    vals = np.where(rows == cols, x, x / SQRT2)
    A = np.zeros((n, n))
    A[rows, cols] = vals
    A[cols, rows] = vals
    return A


@lru_cache(maxsize=None)
def _triu_colmajor(n: int) -> tuple[np.ndarray, np.ndarray]:
    cols, rows = np.tril_indices(n)  # transposed lower row-major == upper col-major
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


@lru_cache(maxsize=None)
def _svec_to_vec(n: int) -> sp.csr_matrix:
    """Sparse map taking svec(A) to the column-major vec(A) (full square)."""
    rows, cols = _triu_colmajor(n)
    k = np.arange(rows.size)
    diag = rows == cols
    scale = np.where(diag, 1.0, 1.0 / SQRT2)
    r = np.concatenate([rows + n * cols, (cols + n * rows)[~diag]])
    c = np.concatenate([k, k[~diag]])
    v = np.concatenate([scale, scale[~diag]])
    return sp.csr_matrix((v, (r, c)), shape=(n * n, rows.size))


@dataclass
class PsdCone:
    """``smat(h - G v)`` must be positive semidefinite."""

    dim: int
    h: np.ndarray
    G: sp.csc_matrix
    margin: float
    name: str = ""

    def slack(self, v: np.ndarray) -> np.ndarray:
        return smat(self.h - self.G @ v)

    def lmi_value(self, v: np.ndarray) -> np.ndarray:
        """F(v), recovered from the cone data."""
        return -self.slack(v) - self.margin * np.eye(self.dim)


@dataclass
class ConicProgram:
    c: np.ndarray
    cones: list[PsdCone]
    lower: dict[int, float]
    space: VariableSpace | None = None

    @property
    def n_v(self) -> int:
        return self.c.size


@dataclass
class SolverSettings:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    feas_tol: float = 1e-9
    max_iter: int = 200
    # looser feasibility tolerances tried after a solver error or numerical trouble
    retry_feas_tols: tuple[float, ...] = (1e-8, 1e-7)


@dataclass
class SolveReport:
    status: str
    v: np.ndarray | None
    objective: float
    primal_residual: float
    solve_time: float
    max_eigenvalues: list[float] = field(default_factory=list)
    margins: list[float] = field(default_factory=list)
    iterations: int = 0
    solver_status: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def compile_program(space: VariableSpace, lmis: Sequence[AffineMatrixInequality],
                    rho: np.ndarray | None = None, objective: np.ndarray | None = None,
                    weighted: str = "beta") -> ConicProgram:
    """Build the conic program.

    The objective is ``rho^T beta`` (linear since beta > 0) when ``rho`` is
    given, an explicit cost vector when ``objective`` is given, else zero.
    """
    n_v = space.size
    c = np.zeros(n_v)
    if rho is not None:
        rho = np.asarray(rho, dtype=float).ravel()
        idx = space.indices(weighted)
        if rho.size != idx.size:
            raise DimensionError(f"rho has {rho.size} entries, {weighted} has {idx.size}")
        if np.any(rho <= 0):
            raise ValueError("weights must be positive")
        c[idx] = rho
    elif objective is not None:
        c = np.asarray(objective, dtype=float).ravel()
        if c.size != n_v:
            raise DimensionError("objective length mismatch")
    cones = []
    for lmi in lmis:
        if lmi.n_v != n_v:
            raise DimensionError(f"{lmi.name}: built for {lmi.n_v} variables, space has {n_v}")
        m = lmi.dim
        h = svec(-lmi.const - lmi.margin * np.eye(m))
        rows, cols = _triu_colmajor(m)
        scale = np.where(rows == cols, 1.0, SQRT2)
        G = sp.csc_matrix((lmi.coef[:, rows, cols] * scale).T)
        G.eliminate_zeros()
        cones.append(PsdCone(m, h, G, lmi.margin, lmi.name))
    return ConicProgram(c, cones, space.lower_bounds(), space)


def _check_point(prog: ConicProgram, v: np.ndarray):
    eigs = [float(np.linalg.eigvalsh(cone.lmi_value(v))[-1]) for cone in prog.cones]
    sound = all(e <= -0.5 * cone.margin for e, cone in zip(eigs, prog.cones))
    bounds = all(v[j] >= lb - 1e-9 for j, lb in prog.lower.items())
    resid = max([max(0.0, e + cone.margin) for e, cone in zip(eigs, prog.cones)]
                + [max(0.0, lb - v[j]) for j, lb in prog.lower.items()] + [0.0])
    return eigs, sound and bounds, resid


def solve(prog: ConicProgram, settings: SolverSettings | None = None) -> SolveReport:
    """Solve with cvxopt's primal-dual interior-point method.

    A run ending in a solver error or NumericalTrouble is repeated with the
    looser feasibility tolerances of ``settings.retry_feas_tols``; the
    returned point is post-checked either way, so only the chance of
    success changes. Infeasible and IterationLimit verdicts are final.
    """
    settings = settings or SolverSettings()
    rep = _solve_once(prog, settings, settings.feas_tol)
    for tol in settings.retry_feas_tols:
        if rep.status != NUMERICAL_TROUBLE:
            break
        rep = _solve_once(prog, settings, tol)
    return rep


def _solve_once(prog: ConicProgram, settings: SolverSettings, feas_tol: float) -> SolveReport:
    from cvxopt import matrix, spmatrix, solvers

    n_v = prog.n_v
    lb_idx = sorted(prog.lower)
    blocks_G = []
    blocks_h = []
    if lb_idx:
        nl = len(lb_idx)
        blocks_G.append(sp.csr_matrix((-np.ones(nl), (np.arange(nl), lb_idx)), shape=(nl, n_v)))
        blocks_h.append(-np.array([prog.lower[j] for j in lb_idx]))
    for cone in prog.cones:
        P = _svec_to_vec(cone.dim)
        blocks_G.append(P @ cone.G)
        blocks_h.append(P @ cone.h)
    G = sp.vstack(blocks_G).tocoo() if blocks_G else sp.coo_matrix((0, n_v))
    h = np.concatenate(blocks_h) if blocks_h else np.zeros(0)
    dims = {"l": len(lb_idx), "q": [], "s": [cone.dim for cone in prog.cones]}
    G_cvx = spmatrix(G.data.tolist(), G.row.tolist(), G.col.tolist(), size=G.shape)
    options = {"show_progress": False, "abstol": settings.abs_tol, "reltol": settings.rel_tol,
               "feastol": feas_tol, "maxiters": settings.max_iter}
    t0 = time.perf_counter()
    try:
        sol = solvers.conelp(matrix(prog.c), G_cvx, matrix(h), dims, options=options)
    except (ArithmeticError, ValueError) as exc:
        return SolveReport(NUMERICAL_TROUBLE, None, math.nan, math.inf,
                           time.perf_counter() - t0, solver_status=f"error: {exc}")
    elapsed = time.perf_counter() - t0
    raw = sol["status"]
    iters = int(sol.get("iterations", 0) or 0)
    if raw == "primal infeasible":
        return SolveReport(INFEASIBLE, None, math.nan, math.inf, elapsed,
                           iterations=iters, solver_status=raw)
    if sol["x"] is None:
        return SolveReport(NUMERICAL_TROUBLE, None, math.nan, math.inf, elapsed,
                           iterations=iters, solver_status=raw)
    v = np.array(sol["x"]).ravel()
    eigs, sound, resid = _check_point(prog, v)
    objective = float(prog.c @ v)
    margins = [cone.margin for cone in prog.cones]
    if raw == "optimal" and sound:
        status = OPTIMAL
    elif raw == "unknown" and iters >= settings.max_iter:
        status = ITERATION_LIMIT
    else:
        status = NUMERICAL_TROUBLE
    return SolveReport(status, v, objective, resid, elapsed, eigs, margins, iters, raw)


def dump_program(prog: ConicProgram, stream: io.TextIOBase | None = None) -> str:
    """Plain-text sparse dump of the cone data, for cross-solver testing.

    Each cone lists the upper triangle of its slack matrix
    ``S(v) = S0 + sum_j v_j S_j`` as ``row col val var_index`` with
    ``var_index = -1`` for ``S0``. Objective, lower bounds and cone margins
    follow as ``OBJ j c_j``, ``LB j lb_j`` and ``MARGIN k margin_k`` lines.
    """
    out = io.StringIO()
    out.write(f"SDP {prog.n_v} {len(prog.cones)}\n")
    for cone in prog.cones:
        m = cone.dim
        rows, cols = _triu_colmajor(m)
        entries = []
        S0 = smat(cone.h)
        for r, c in zip(rows, cols):
            if S0[r, c] != 0.0:
                entries.append((r, c, S0[r, c], -1))
        Gc = cone.G.tocsc()
        for j in range(prog.n_v):
            col = Gc.getcol(j)
            if col.nnz == 0:
                continue
            Sj = -smat(col.toarray().ravel())
            for r, c in zip(rows, cols):
                if Sj[r, c] != 0.0:
                    entries.append((r, c, Sj[r, c], j))
        out.write(f"CONE {m} {len(entries)}\n")
        for r, c, val, j in entries:
            out.write(f"{r} {c} {float(val)!r} {j}\n")
    for j in np.flatnonzero(prog.c):
        out.write(f"OBJ {j} {float(prog.c[j])!r}\n")
    for j in sorted(prog.lower):
        out.write(f"LB {j} {float(prog.lower[j])!r}\n")
    for k, cone in enumerate(prog.cones):
        if cone.margin:
            out.write(f"MARGIN {k} {float(cone.margin)!r}\n")
    text = out.getvalue()
    if stream is not None:
        stream.write(text)
    return text


def load_program(text: str) -> ConicProgram:
    """Parse the output of :func:`dump_program`.

    Margins are already folded into the constant term; the ``MARGIN`` lines
    only restore what the post-check compares against.
    """
    lines = iter(text.splitlines())
    tag, n_v, n_cones = next(lines).split()
    if tag != "SDP":
        raise ValueError("missing SDP header")
    n_v, n_cones = int(n_v), int(n_cones)
    cones = []
    for _ in range(n_cones):
        tag, m, nnz = next(lines).split()
        if tag != "CONE":
            raise ValueError("expected CONE line")
        m, nnz = int(m), int(nnz)
        mats: dict[int, np.ndarray] = {}
        for _ in range(nnz):
            r, c, val, j = next(lines).split()
            r, c, j = int(r), int(c), int(j)
            M = mats.setdefault(j, np.zeros((m, m)))
            M[r, c] = M[c, r] = float(val)
        h = svec(mats.get(-1, np.zeros((m, m))))
        G = np.zeros((h.size, n_v))
        for j, M in mats.items():
            if j >= 0:
                G[:, j] = -svec(M)
        cones.append(PsdCone(m, h, sp.csc_matrix(G), 0.0))
    c = np.zeros(n_v)
    lower = {}
    for line in lines:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "OBJ":
            c[int(parts[1])] = float(parts[2])
        elif parts[0] == "LB":
            lower[int(parts[1])] = float(parts[2])
        elif parts[0] == "MARGIN":
            cones[int(parts[1])].margin = float(parts[2])
    return ConicProgram(c, cones, lower)
