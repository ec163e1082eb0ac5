"""Plant, uncertainty and observer types, and the augmented error systems."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg

WELL_POSED_RCOND = 1e-10


class DimensionError(ValueError):
    """Raised when matrix shapes do not fit together."""


class WellPosednessError(ArithmeticError):
    """Raised when I - Delta E_delta is numerically singular."""


def as_matrix(x, rows: int | None = None, cols: int | None = None, name: str = "matrix") -> np.ndarray:
    """Coerce ``x`` into a finite 2-D float array, checking shape when given."""
    a = np.array(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise DimensionError(f"{name}: expected a 2-D array, got ndim={a.ndim}")
    if rows is not None and a.shape[0] != rows:
        raise DimensionError(f"{name}: expected {rows} rows, got {a.shape[0]}")
    if cols is not None and a.shape[1] != cols:
        raise DimensionError(f"{name}: expected {cols} columns, got {a.shape[1]}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name}: non-finite entries")
    a.setflags(write=False)
    return a


def symmetrize(X: np.ndarray) -> np.ndarray:
    return 0.5 * (X + X.T)


class StateSpace(NamedTuple):
    """Generic (A, B, C, D) realization used by the norm computations."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def frequency_response(self, omega: float) -> np.ndarray:
        n = self.A.shape[0]
        if n == 0:
            return np.array(self.D, dtype=complex)
        return self.C @ np.linalg.solve(1j * omega * np.eye(n) - self.A, self.B) + self.D


@dataclass(frozen=True)
class StateSpaceModel:
    """Nominal plant: x' = A x + B_d d, y = C_y x + D_d d + S_n n, z = C_z x."""

    A: np.ndarray
    B_d: np.ndarray
    C_y: np.ndarray
    D_d: np.ndarray
    C_z: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A, name="A")
        n = A.shape[0]
        if A.shape[1] != n:
            raise DimensionError("A must be square")
        B_d = as_matrix(self.B_d, rows=n, name="B_d")
        C_y = as_matrix(self.C_y, cols=n, name="C_y")
        D_d = as_matrix(self.D_d, rows=C_y.shape[0], cols=B_d.shape[1], name="D_d")
        C_z = as_matrix(self.C_z, cols=n, name="C_z")
        for k, v in dict(A=A, B_d=B_d, C_y=C_y, D_d=D_d, C_z=C_z).items():
            object.__setattr__(self, k, v)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_d(self) -> int:
        return self.B_d.shape[1]

    @property
    def n_y(self) -> int:
        return self.C_y.shape[0]

    @property
    def n_z(self) -> int:
        return self.C_z.shape[0]

    def select_sensors(self, keep: Sequence[int]) -> StateSpaceModel:
        """Structural deletion: keep only the listed measurement rows."""
        keep = list(keep)
        return StateSpaceModel(self.A, self.B_d, self.C_y[keep], self.D_d[keep], self.C_z)


@dataclass(frozen=True)
class AffineUncertainty:
    """Norm-bounded affine uncertainty dA = M1 F1 N1, dB_d = M2 F2 N2."""

    M1: np.ndarray
    N1: np.ndarray
    M2: np.ndarray
    N2: np.ndarray

    def __post_init__(self):
        for k in ("M1", "N1", "M2", "N2"):
            object.__setattr__(self, k, as_matrix(getattr(self, k), name=k))
        if self.M1.shape[0] != self.M2.shape[0]:
            raise DimensionError("M1 and M2 must have the same number of rows")

    @classmethod
    def zero(cls, model: StateSpaceModel) -> AffineUncertainty:
        n, nd = model.n_x, model.n_d
        return cls(np.zeros((n, 1)), np.zeros((1, n)), np.zeros((n, 1)), np.zeros((1, nd)))

    def check(self, model: StateSpaceModel) -> None:
        n = model.n_x
        if self.M1.shape[0] != n or self.N1.shape[1] != n:
            raise DimensionError(f"M1/N1 incompatible with n_x={n}")
        if self.M2.shape[0] != n or self.N2.shape[1] != model.n_d:
            raise DimensionError(f"M2/N2 incompatible with n_x={n}, N_d={model.n_d}")

    @property
    def f1_shape(self) -> tuple[int, int]:
        return self.M1.shape[1], self.N1.shape[0]

    @property
    def f2_shape(self) -> tuple[int, int]:
        return self.M2.shape[1], self.N2.shape[0]


@dataclass(frozen=True)
class LftPlant:
    """Plant with the uncertainty pulled out as w_delta = Delta z_delta.

    ``delta_structure`` is ``"full"`` or ``"diagonal"`` and only affects how
    Delta is sampled during verification.
    """

    A: np.ndarray
    B_delta: np.ndarray
    B_d: np.ndarray
    C_delta: np.ndarray
    E_delta: np.ndarray
    E_d: np.ndarray
    C_y: np.ndarray
    D_delta: np.ndarray
    D_d: np.ndarray
    C_z: np.ndarray
    delta_structure: str = "full"

    def __post_init__(self):
        A = as_matrix(self.A, name="A")
        n = A.shape[0]
        if A.shape[1] != n:
            raise DimensionError("A must be square")
        B_delta = as_matrix(self.B_delta, rows=n, name="B_delta")
        B_d = as_matrix(self.B_d, rows=n, name="B_d")
        nw, nd = B_delta.shape[1], B_d.shape[1]
        C_delta = as_matrix(self.C_delta, cols=n, name="C_delta")
        nzd = C_delta.shape[0]
        E_delta = as_matrix(self.E_delta, rows=nzd, cols=nw, name="E_delta")
        E_d = as_matrix(self.E_d, rows=nzd, cols=nd, name="E_d")
        C_y = as_matrix(self.C_y, cols=n, name="C_y")
        ny = C_y.shape[0]
        D_delta = as_matrix(self.D_delta, rows=ny, cols=nw, name="D_delta")
        D_d = as_matrix(self.D_d, rows=ny, cols=nd, name="D_d")
        C_z = as_matrix(self.C_z, cols=n, name="C_z")
        if self.delta_structure not in ("full", "diagonal"):
            raise ValueError(f"unknown delta_structure {self.delta_structure!r}")
        if self.delta_structure == "diagonal" and nw != nzd:
            raise DimensionError("diagonal Delta needs as many w_delta as z_delta channels")
        for k, v in dict(A=A, B_delta=B_delta, B_d=B_d, C_delta=C_delta, E_delta=E_delta,
                         E_d=E_d, C_y=C_y, D_delta=D_delta, D_d=D_d, C_z=C_z).items():
            object.__setattr__(self, k, v)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_w(self) -> int:
        return self.B_delta.shape[1]

    @property
    def n_zd(self) -> int:
        return self.C_delta.shape[0]

    @property
    def n_d(self) -> int:
        return self.B_d.shape[1]

    @property
    def n_y(self) -> int:
        return self.C_y.shape[0]

    @property
    def n_z(self) -> int:
        return self.C_z.shape[0]

    def nominal_model(self) -> StateSpaceModel:
        return StateSpaceModel(self.A, self.B_d, self.C_y, self.D_d, self.C_z)

    def select_sensors(self, keep: Sequence[int]) -> LftPlant:
        keep = list(keep)
        return LftPlant(self.A, self.B_delta, self.B_d, self.C_delta, self.E_delta, self.E_d,
                        self.C_y[keep], self.D_delta[keep], self.D_d[keep], self.C_z,
                        self.delta_structure)

    def uncertainty_channel(self) -> StateSpace:
        """Open-loop map from (w_delta, d, n) to z_delta."""
        ny = self.n_y
        B = np.hstack([self.B_delta, self.B_d, np.zeros((self.n_x, ny))])
        D = np.hstack([self.E_delta, self.E_d, np.zeros((self.n_zd, ny))])
        return StateSpace(self.A, B, self.C_delta, D)


@dataclass(frozen=True)
class PrecisionVector:
    """Sensor precisions; the noise scaling is S_n = diag(beta)^(-1/2)."""

    beta: np.ndarray
    active: np.ndarray = None

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float).ravel()
        if np.any(~np.isfinite(beta)) or np.any(beta <= 0):
            raise ValueError("precisions must be finite and positive")
        active = np.ones(beta.size, bool) if self.active is None else np.array(self.active, bool).ravel()
        if active.shape != beta.shape:
            raise DimensionError("active mask and beta differ in length")
        beta.setflags(write=False)
        active.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "active", active)

    @classmethod
    def ones(cls, n: int) -> PrecisionVector:
        return cls(np.ones(n))

    @property
    def size(self) -> int:
        return self.beta.size

    @property
    def scaling(self) -> np.ndarray:
        return np.diag(1.0 / np.sqrt(self.beta))

    @property
    def active_indices(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.active)]


@dataclass(frozen=True)
class ObserverGain:
    """Gain of x_hat' = (A + L C_y) x_hat - L y."""

    L: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "L", as_matrix(self.L, name="L"))

    def masked(self, active) -> ObserverGain:
        L = np.array(self.L)
        L[:, ~np.asarray(active, bool)] = 0.0
        return ObserverGain(L)

    def expand(self, keep: Sequence[int], n_y: int) -> ObserverGain:
        """Scatter the gain of a reduced sensor set back into ``n_y`` columns."""
        L = np.zeros((self.L.shape[0], n_y))
        L[:, list(keep)] = self.L
        return ObserverGain(L)


@dataclass(frozen=True)
class ErrorSystem:
    """Augmented error dynamics x~' = A_err x~ + B_err S_scale w~, eps = C_err x~.

    For ``kind == "structured"`` the tiled uncertainty factors are stored too,
    so that dA~ = M1 F1 N1 and dB~ = M2 F2 N2 in the augmented coordinates.
    """

    A_err: np.ndarray
    B_err: np.ndarray
    S_scale: np.ndarray
    C_err: np.ndarray
    kind: str
    input_partition: tuple[int, ...]
    M1: np.ndarray | None = None
    N1: np.ndarray | None = None
    M2: np.ndarray | None = None
    N2: np.ndarray | None = None

    @property
    def input_matrix(self) -> np.ndarray:
        return self.B_err @ self.S_scale

    def state_space(self) -> StateSpace:
        return StateSpace(self.A_err, self.input_matrix, self.C_err,
                          np.zeros((self.C_err.shape[0], self.B_err.shape[1])))

    def perturbed(self, F1: np.ndarray, F2: np.ndarray) -> StateSpace:
        """Structured error system with a particular (F1, F2) realization."""
        if self.kind != "structured":
            raise ValueError("perturbed() needs a structured error system")
        A = self.A_err + self.M1 @ F1 @ self.N1
        B = self.input_matrix + self.M2 @ F2 @ self.N2
        return StateSpace(A, B, self.C_err, np.zeros((self.C_err.shape[0], B.shape[1])))


def _check_gain(gain: ObserverGain, n_x: int, n_y: int, prec: PrecisionVector) -> None:
    if gain.L.shape != (n_x, n_y):
        raise DimensionError(f"L must be {n_x}x{n_y}, got {gain.L.shape}")
    if prec.size != n_y:
        raise DimensionError(f"precision vector has {prec.size} entries, expected {n_y}")


def build_structured_error_system(model: StateSpaceModel, unc: AffineUncertainty,
                                  gain: ObserverGain, prec: PrecisionVector) -> ErrorSystem:
    unc.check(model)
    _check_gain(gain, model.n_x, model.n_y, prec)
    n, nd, ny = model.n_x, model.n_d, model.n_y
    A, L = model.A, gain.L
    A_err = scipy.linalg.block_diag(A, A + L @ model.C_y)
    B_err = np.block([[model.B_d, np.zeros((n, ny))],
                      [model.B_d + L @ model.D_d, L]])
    S = scipy.linalg.block_diag(np.eye(nd), prec.scaling)
    C_err = np.hstack([np.zeros((model.n_z, n)), model.C_z])
    M1 = np.vstack([unc.M1, unc.M1])
    N1 = np.hstack([unc.N1, np.zeros_like(unc.N1)])
    M2 = np.vstack([unc.M2, unc.M2])
    N2 = np.hstack([unc.N2, np.zeros((unc.N2.shape[0], ny))])
    return ErrorSystem(A_err, B_err, S, C_err, "structured", (nd, ny), M1, N1, M2, N2)


def build_lft_error_system(plant: LftPlant, gain: ObserverGain, prec: PrecisionVector) -> ErrorSystem:
    _check_gain(gain, plant.n_x, plant.n_y, prec)
    n, nw, nd, ny = plant.n_x, plant.n_w, plant.n_d, plant.n_y
    L = gain.L
    A_err = plant.A + L @ plant.C_y
    B_err = (np.hstack([plant.B_delta, plant.B_d, np.zeros((n, ny))])
             + L @ np.hstack([plant.D_delta, plant.D_d, np.eye(ny)]))
    S = scipy.linalg.block_diag(np.eye(nw), np.eye(nd), prec.scaling)
    return ErrorSystem(A_err, B_err, S, plant.C_z, "lft", (nw, nd, ny))


def close_delta_loop(plant: LftPlant, gain: ObserverGain, prec: PrecisionVector,
                     Delta: np.ndarray) -> StateSpace:
    """Close w_delta = Delta z_delta around plant and observer.

    Returns the (x, e)-state system from (d, n) to the estimation error
    eps = C_z e.
    """
    _check_gain(gain, plant.n_x, plant.n_y, prec)
    Delta = as_matrix(Delta, rows=plant.n_w, cols=plant.n_zd, name="Delta")
    n, nd, ny = plant.n_x, plant.n_d, plant.n_y
    L = gain.L
    if plant.n_w == 0:
        K = np.zeros((0, plant.n_zd))
    else:
        I_DE = np.eye(plant.n_w) - Delta @ plant.E_delta
        if np.linalg.cond(I_DE) * WELL_POSED_RCOND > 1.0:
            raise WellPosednessError("I - Delta E_delta is numerically singular")
        K = np.linalg.solve(I_DE, Delta)
    # w_delta = K (C_delta x + E_d d)
    Bw_e = plant.B_delta + L @ plant.D_delta
    A_xx = plant.A + plant.B_delta @ K @ plant.C_delta
    A_ex = Bw_e @ K @ plant.C_delta
    A_ee = plant.A + L @ plant.C_y
    B_xd = plant.B_d + plant.B_delta @ K @ plant.E_d
    B_ed = plant.B_d + L @ plant.D_d + Bw_e @ K @ plant.E_d
    A = np.block([[A_xx, np.zeros((n, n))], [A_ex, A_ee]])
    B = np.block([[B_xd, np.zeros((n, ny))], [B_ed, L @ prec.scaling]])
    C = np.hstack([np.zeros((plant.n_z, n)), plant.C_z])
    return StateSpace(A, B, C, np.zeros((plant.n_z, nd + ny)))
