"""Serially connected three-mass spring-mass-damper benchmark.

States are (x1, x2, x3, v1, v2, v3); all nominal masses, spring constants
and damper coefficients equal one. Spring/damper j joins mass j-1 and mass j
(the wall for j = 1). Six sensors: three positions, then three velocities.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .analysis import CertificationReport, LmiCertificate, certify
from .design import DesignError, DesignOptions, DesignResult, design_lft, design_structured
from .system_model import AffineUncertainty, LftPlant, StateSpaceModel

log = logging.getLogger(__name__)

GAMMA_GRID = (1.0, 0.75, 0.5, 0.25)
C0_GRID = (0.0, 0.1, 0.2, 0.3)
LFT_GAMMA_GRID = (0.5, 0.3, 0.2, 0.15)
LFT_S_D = 0.2

H = np.array([[-2.0, 1.0, 0.0],
              [1.0, -2.0, 1.0],
              [0.0, 1.0, -1.0]])
H.setflags(write=False)

N_MASSES = 3


def _scaling(S_d) -> np.ndarray:
    if S_d is None:
        return np.eye(N_MASSES)
    S = np.asarray(S_d, dtype=float)
    if S.ndim == 0:
        return float(S) * np.eye(N_MASSES)
    if S.ndim == 1:
        S = np.diag(S)
    if S.shape != (N_MASSES, N_MASSES) or np.any(S != np.diag(np.diag(S))) or np.any(np.diag(S) <= 0):
        raise ValueError("S_d must be a positive diagonal 3x3 scaling")
    return S


@dataclass(frozen=True)
class SmdConfig:
    c0: float = 0.0
    c1: float = 0.0
    c2: float = 0.0
    S_d: float | tuple = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if min(self.c0, self.c1, self.c2) < 0:
            raise ValueError("uncertainty magnitudes must be nonnegative")
        _scaling(self.S_d)

    @property
    def scaling(self) -> np.ndarray:
        return _scaling(self.S_d)


def smd_nominal(S_d=None) -> StateSpaceModel:
    S = _scaling(S_d)
    Z, I = np.zeros((3, 3)), np.eye(3)
    A = np.block([[Z, I], [H, H]])
    B_d = np.vstack([Z, I]) @ S
    return StateSpaceModel(A, B_d, np.eye(6), np.zeros((6, 3)), np.eye(6))


def smd_affine(c0: float, c1: float, c2: float) -> AffineUncertainty:
    if min(c0, c1, c2) < 0:
        raise ValueError("uncertainty magnitudes must be nonnegative")
    M = np.vstack([np.zeros((3, 3)), np.eye(3)])
    N1 = np.block([[c0 * H, np.zeros((3, 3))], [np.zeros((3, 3)), c1 * H]])
    return AffineUncertainty(M, N1, M.copy(), c2 * np.eye(3))


def _relative_map() -> np.ndarray:
    """R with r = R p, r_j = p_j - p_{j-1} (p_0 = wall)."""
    R = np.eye(N_MASSES)
    R[np.arange(1, N_MASSES), np.arange(N_MASSES - 1)] = -1.0
    return R


LFT_SPLITS = ("output", "balanced")


def smd_lft(c0: float, c1: float, S_d=None, split: str = "output") -> LftPlant:
    """LFT form with k_j = 1 + c0 delta_j and xi_j = 1 + c1 delta_{3+j}.

    Channels whose magnitude is zero are left out, so smd_lft(0, 0) carries
    no uncertainty channels at all. Delta is diagonal with |delta_l| <= 1.

    ``split`` places the magnitude c: "output" puts all of it on z_delta
    (z_delta = c r), "balanced" puts sqrt(c) on each of z_delta and the
    force routing. The closed loop is the same either way; only the
    scaling seen by the small-gain and performance conditions differs.
    """
    if min(c0, c1) < 0:
        raise ValueError("uncertainty magnitudes must be nonnegative")
    if split not in LFT_SPLITS:
        raise ValueError(f"split must be one of {LFT_SPLITS}")
    nominal = smd_nominal(S_d)
    R = _relative_map()
    Z = np.zeros((3, 3))
    # the extra force -delta_j c r_j acts on mass j, and its reaction on mass j-1
    force = np.vstack([Z, -R.T])
    C_parts, B_parts = [], []
    for c, C in ((c0, np.hstack([R, Z])), (c1, np.hstack([Z, R]))):
        if c > 0:
            out, into = (c, 1.0) if split == "output" else (np.sqrt(c), np.sqrt(c))
            C_parts.append(out * C)
            B_parts.append(into * force)
    nw = 3 * len(C_parts)
    C_delta = np.vstack(C_parts) if C_parts else np.zeros((0, 6))
    B_delta = np.hstack(B_parts) if B_parts else np.zeros((6, 0))
    return LftPlant(nominal.A, B_delta, nominal.B_d, C_delta,
                    E_delta=np.zeros((nw, nw)), E_d=np.zeros((nw, 3)),
                    C_y=nominal.C_y, D_delta=np.zeros((6, nw)), D_d=nominal.D_d,
                    C_z=nominal.C_z, delta_structure="diagonal")


def smd_lft_delta(delta, c0: float, c1: float) -> np.ndarray:
    """Diagonal Delta for a full 6-vector of (spring, damper) deviations,
    dropping the entries of zero-magnitude groups as :func:`smd_lft` does."""
    delta = np.asarray(delta, dtype=float).ravel()
    keep = []
    if c0 > 0:
        keep.extend(range(3))
    if c1 > 0:
        keep.extend(range(3, 6))
    return np.diag(delta[keep]) if keep else np.zeros((0, 0))


@dataclass
class SweepPoint:
    sweep_param: str
    sweep_value: float
    kind: str
    config: SmdConfig
    result: DesignResult | None = None
    report: CertificationReport | None = None
    lmi_certificate: LmiCertificate | None = None
    passed: bool | None = None
    status: str = "ok"
    message: str = ""
    frontier: float | None = None

    @property
    def feasible(self) -> bool:
        return self.result is not None

    @property
    def active_count(self) -> int | None:
        return None if self.result is None else self.result.active_count

    @property
    def certified(self) -> bool | None:
        return self.passed


def smd_problem(kind: str, config: SmdConfig, split: str = "output"):
    if kind == "structured":
        return smd_nominal(config.S_d), smd_affine(config.c0, config.c1, config.c2)
    if kind == "lft":
        return smd_lft(config.c0, config.c1, config.S_d, split), None
    raise ValueError(f"unknown problem kind {kind!r}")


def run_point(kind: str, config: SmdConfig, opts: DesignOptions | None = None, n_samples: int = 200,
              seed: int = 0, split: str = "output", sweep_param: str = "", sweep_value: float = math.nan
              ) -> SweepPoint:
    """Design and certify one benchmark instance (n_samples < 0 skips certification)."""
    point = SweepPoint(sweep_param, sweep_value, kind, config)
    model, unc = smd_problem(kind, config, split)
    try:
        if kind == "structured":
            point.result = design_structured(model, unc, config.gamma, opts)
        else:
            point.result = design_lft(model, config.gamma, opts)
    except DesignError as exc:
        point.status = getattr(exc, "status", "DesignError")
        point.message = str(exc)
        point.frontier = getattr(exc, "frontier", None)
        log.info("%s=%g: %s", sweep_param, sweep_value, exc)
        return point
    if n_samples >= 0:
        point.report, point.lmi_certificate, point.passed = certify(
            kind, model, unc, point.result, config.gamma, n_samples, seed)
    return point


def sweep_gamma(kind: str, config: SmdConfig, gamma_list=None, opts: DesignOptions | None = None,
                n_samples: int = 200, seed: int = 0, split: str = "output") -> list[SweepPoint]:
    """One design and certification per gamma; infeasible points are recorded, not raised."""
    if gamma_list is None:
        gamma_list = GAMMA_GRID if kind == "structured" else LFT_GAMMA_GRID
    if len(gamma_list) == 0:
        raise ValueError("empty gamma grid")
    return [run_point(kind, _replace(config, gamma=float(g)), opts, n_samples, seed, split, "gamma", float(g))
            for g in gamma_list]


def sweep_uncertainty(kind: str, config: SmdConfig, c0_list=None, opts: DesignOptions | None = None,
                      n_samples: int = 200, seed: int = 0, split: str = "output") -> list[SweepPoint]:
    """As :func:`sweep_gamma`, varying c0 with c1, c2 and gamma taken from ``config``."""
    c0_list = C0_GRID if c0_list is None else c0_list
    if len(c0_list) == 0:
        raise ValueError("empty c0 grid")
    return [run_point(kind, _replace(config, c0=float(c)), opts, n_samples, seed, split, "c0", float(c))
            for c in c0_list]


def _replace(config: SmdConfig, **changes) -> SmdConfig:
    return replace(config, **changes)
