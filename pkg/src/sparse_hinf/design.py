"""Sparse robust observer synthesis by iteratively reweighted l1 minimization."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .lmi import (BETA_MIN, DELTA_MIN, assemble_structured_lmis, assemble_lft_lmis, positivity_lmi,
                  small_gain_lmi)
from .sdp import INFEASIBLE, SolverSettings, SolveReport, compile_program, solve
from .system_model import (AffineUncertainty, LftPlant, ObserverGain, PrecisionVector,
                           StateSpaceModel)

log = logging.getLogger(__name__)


class DesignError(RuntimeError):
    pass


class InfeasibleDesign(DesignError):
    """The first reweighting iteration (or a plant-level condition) failed.

    ``frontier`` is the smallest feasible gamma found by bisection, when
    one was searched for.
    """

    def __init__(self, message, gamma=None, status=INFEASIBLE, frontier=None, history=None):
        super().__init__(message)
        self.gamma = gamma
        self.status = status
        self.frontier = frontier
        self.history = history or []


class DegenerateSolution(DesignError):
    pass


@dataclass
class DesignOptions:
    epsilon_reweight: float = 1e-4
    max_reweight_iters: int = 10
    convergence_tol: float = 1e-3
    prune_rel: float = 1e-5
    prune_abs: float = 1e-7
    beta_min: float = BETA_MIN
    delta_min: float = DELTA_MIN
    epsilon_margin: float | None = None
    rng_seed: int = 0
    solver: SolverSettings = field(default_factory=SolverSettings)
    bisect_frontier: bool = True
    frontier_bounds: tuple[float, float] | None = None
    frontier_steps: int = 12

    def __post_init__(self):
        for name in ("epsilon_reweight", "convergence_tol", "prune_rel", "prune_abs",
                     "beta_min", "delta_min"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.epsilon_margin is not None and not self.epsilon_margin > 0:
            raise ValueError("epsilon_margin must be positive")
        if self.max_reweight_iters < 1:
            raise ValueError("max_reweight_iters must be at least 1")


@dataclass
class IterationRecord:
    iteration: int
    rho: np.ndarray
    beta: np.ndarray | None
    objective: float
    status: str
    stage: str = "reweight"  # "reweight" | "refine"
    sensors: tuple[int, ...] = ()


@dataclass
class DesignResult:
    gain: ObserverGain
    precision: PrecisionVector
    gamma: float
    kind: str
    history: list[IterationRecord]
    refined: bool
    first_active_count: int
    restorations: int = 0
    solution: dict = field(default_factory=dict)
    lmi_max_eigenvalues: list[float] = field(default_factory=list)
    lmi_margins: list[float] = field(default_factory=list)
    gain_residual: float = math.nan
    certification: object = None

    @property
    def active_count(self) -> int:
        return int(np.count_nonzero(self.precision.active))

    @property
    def active(self) -> list[int]:
        return self.precision.active_indices


def reweight(beta, epsilon: float) -> np.ndarray:
    """Weights for the next weighted-l1 iterate: 1 / (epsilon + |beta|)."""
    beta = np.asarray(beta, dtype=float)
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    return 1.0 / (epsilon + np.abs(beta))


def recover_gain(X2: np.ndarray, Y: np.ndarray) -> ObserverGain:
    """Solve X2 L = Y with a Cholesky factorization of X2."""
    X2 = 0.5 * (np.asarray(X2, float) + np.asarray(X2, float).T)
    Y = np.asarray(Y, float)
    if np.linalg.eigvalsh(X2)[0] <= 0:
        raise DegenerateSolution("X2 is not positive definite")
    try:
        factor = scipy.linalg.cho_factor(X2)
    except np.linalg.LinAlgError as exc:
        raise DegenerateSolution(f"X2 is numerically singular: {exc}") from exc
    L = scipy.linalg.cho_solve(factor, Y)
    resid = np.abs(X2 @ L - Y).max(initial=0.0)
    if not resid <= 1e-8 * (1.0 + np.abs(Y).max(initial=0.0)):
        raise DegenerateSolution(f"gain recovery residual {resid:.3e} too large")
    return ObserverGain(L)


def prune_threshold(beta: np.ndarray, opts: DesignOptions) -> float:
    return max(opts.prune_rel * float(np.max(beta)), opts.prune_abs)


def feasibility_frontier(feasible: Callable[[float], bool], lo: float, hi: float | None = None,
                         steps: int = 12, max_doublings: int = 64) -> float | None:
    """Smallest feasible gamma in (lo, hi] to within ``steps`` bisections.

    ``lo`` is assumed infeasible. Without ``hi`` the bracket is grown by
    doubling. Returns None when no feasible gamma is found.
    """
    if hi is None:
        hi = 2.0 * lo
        for _ in range(max_doublings):
            if feasible(hi):
                break
            lo, hi = hi, 2.0 * hi
        else:
            return None
    elif not feasible(hi):
        return None
    for _ in range(steps):
        mid = math.sqrt(lo * hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _sparse_design(n_y: int, assemble, gamma: float, opts: DesignOptions, kind: str) -> DesignResult:
    """Reweighting loop, pruning, and refinement on the surviving sensors.

    ``assemble(keep)`` returns (space, lmis) for the sensor subset ``keep``.
    """
    everyone = list(range(n_y))
    rho = np.ones(n_y)
    history: list[IterationRecord] = []
    betas: list[np.ndarray] = []
    eps = None
    prev_l1 = None
    for k in range(opts.max_reweight_iters):
        space, lmis = assemble(everyone)
        rep = solve(compile_program(space, lmis, rho=rho), opts.solver)
        beta = space.unpack(rep.v)["beta"].ravel() if rep.ok else None
        history.append(IterationRecord(k, rho.copy(), beta, rep.objective, rep.status,
                                       sensors=tuple(everyone)))
        log.debug("iteration %d: %s objective=%.6g", k, rep.status, rep.objective)
        if not rep.ok:
            if k == 0:
                raise InfeasibleDesign(f"gamma={gamma:g} infeasible ({rep.status})",
                                       gamma=gamma, status=rep.status, history=history)
            break
        betas.append(beta)
        l1 = float(np.sum(np.abs(beta)))
        if eps is None:
            eps = opts.epsilon_reweight * max(1.0, float(np.max(beta)))
        if prev_l1 is not None and abs(l1 - prev_l1) <= opts.convergence_tol * prev_l1:
            break
        prev_l1 = l1
        rho = reweight(beta, eps)

    last = betas[-1]
    first = betas[0]
    active = last >= prune_threshold(last, opts)
    first_active_count = int(np.count_nonzero(first >= prune_threshold(first, opts)))

    # refinement with equal weights; restore pruned sensors (largest beta first) if needed
    restore_order = [i for i in np.argsort(-last, kind="stable") if not active[i]]
    restorations = 0
    while True:
        keep = [i for i in everyone if active[i]]
        space, lmis = assemble(keep)
        prog = compile_program(space, lmis, rho=np.ones(len(keep)))
        rep = solve(prog, opts.solver)
        sol = space.unpack(rep.v) if rep.ok else None
        history.append(IterationRecord(len(history), np.ones(len(keep)),
                                       sol["beta"].ravel() if rep.ok else None,
                                       rep.objective, rep.status, "refine", tuple(keep)))
        if rep.ok:
            break
        if not restore_order or restorations >= n_y:
            raise DesignError(f"refinement failed ({rep.status}) with no sensor left to restore")
        active[restore_order.pop(0)] = True
        restorations += 1

    gain = recover_gain(sol["X2"], sol["Y"])
    resid = float(np.abs(sol["X2"] @ gain.L - sol["Y"]).max(initial=0.0))
    full_gain = gain.expand(keep, n_y)
    beta_out = last.copy()
    beta_out[keep] = sol["beta"].ravel()
    precision = PrecisionVector(beta_out, active)
    return DesignResult(full_gain.masked(active), precision, gamma, kind, history, True,
                        first_active_count, restorations, sol, list(rep.max_eigenvalues),
                        list(rep.margins), resid)


def _all_sensor_feasible(assemble, n_y, opts):
    def feasible(g: float) -> bool:
        space, lmis = assemble(list(range(n_y)), g)
        return solve(compile_program(space, lmis, rho=np.ones(n_y)), opts.solver).ok
    return feasible


def _with_frontier(exc: InfeasibleDesign, assemble, n_y, gamma, opts):
    if opts.bisect_frontier:
        lo, hi = opts.frontier_bounds if opts.frontier_bounds else (gamma, None)
        exc.frontier = feasibility_frontier(_all_sensor_feasible(assemble, n_y, opts), lo, hi,
                                            steps=opts.frontier_steps)
    return exc


def design_structured(model: StateSpaceModel, unc: AffineUncertainty, gamma: float,
                      opts: DesignOptions | None = None) -> DesignResult:
    """Sparse observer guaranteeing ||G_{w~ eps}||_inf <= gamma for all admissible dA, dB_d."""
    opts = opts or DesignOptions()
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    unc.check(model)

    def assemble(keep, g=gamma):
        return assemble_structured_lmis(model.select_sensors(keep), unc, g, opts.beta_min,
                                 opts.delta_min, opts.epsilon_margin)

    try:
        return _sparse_design(model.n_y, assemble, gamma, opts, "structured")
    except InfeasibleDesign as exc:
        raise _with_frontier(exc, assemble, model.n_y, gamma, opts)


def check_small_gain(plant: LftPlant, opts: DesignOptions | None = None) -> SolveReport:
    """Feasibility of the bounded-real LMI for ||G_{w~ z_delta}||_inf <= 1."""
    opts = opts or DesignOptions()
    space, lmi = small_gain_lmi(plant, margin=opts.epsilon_margin)
    return solve(compile_program(space, [lmi, positivity_lmi(space, "X1")]), opts.solver)


def design_lft(plant: LftPlant, gamma: float, opts: DesignOptions | None = None) -> DesignResult:
    """Sparse observer for LFT uncertainty (small-gain + nominal performance LMIs)."""
    opts = opts or DesignOptions()
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    rep = check_small_gain(plant, opts)
    if not rep.ok:
        raise InfeasibleDesign(f"small-gain condition ||G_wz||_inf <= 1 fails ({rep.status})",
                               gamma=gamma, status=rep.status)

    def assemble(keep, g=gamma):
        return assemble_lft_lmis(plant.select_sensors(keep), g, opts.beta_min,
                                 opts.epsilon_margin, include_small_gain=False)

    try:
        return _sparse_design(plant.n_y, assemble, gamma, opts, "lft")
    except InfeasibleDesign as exc:
        raise _with_frontier(exc, assemble, plant.n_y, gamma, opts)
