"""Affine matrix inequalities over a flat decision vector.

A symmetric n x n matrix variable occupies n(n+1)/2 slots (upper triangle,
row-major); a full r x c variable occupies r*c slots. Every expression is kept
as a constant term plus one coefficient matrix per decision slot, which keeps
the map from decision vector to matrix explicitly affine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .system_model import DimensionError, ErrorSystem, LftPlant, StateSpaceModel, AffineUncertainty

BETA_MIN = 1e-8
DELTA_MIN = 1e-9
MARGIN_REL = 1e-7


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str  # "symmetric" | "full" | "vector" | "scalar"
    shape: tuple[int, int]
    offset: int
    size: int
    lower: float | None = None


class VariableSpace:
    """Ordered collection of named decision variables."""

    def __init__(self):
        self.variables: dict[str, Variable] = {}
        self.size = 0

    def _add(self, name, kind, shape, size, lower=None) -> Variable:
        if name in self.variables:
            raise ValueError(f"duplicate variable name {name!r}")
        var = Variable(name, kind, shape, self.size, size, lower)
        self.variables[name] = var
        self.size += size
        return var

    def symmetric(self, name: str, n: int) -> Variable:
        return self._add(name, "symmetric", (n, n), n * (n + 1) // 2)

    def full(self, name: str, rows: int, cols: int) -> Variable:
        return self._add(name, "full", (rows, cols), rows * cols)

    def vector(self, name: str, k: int, lower: float = 0.0) -> Variable:
        return self._add(name, "vector", (k, 1), k, lower)

    def scalar(self, name: str, lower: float = 0.0) -> Variable:
        return self._add(name, "scalar", (1, 1), 1, lower)

    def __getitem__(self, name: str) -> Variable:
        return self.variables[name]

    def __contains__(self, name: str) -> bool:
        return name in self.variables

    def indices(self, name: str) -> np.ndarray:
        var = self.variables[name]
        return np.arange(var.offset, var.offset + var.size)

    def lower_bounds(self) -> dict[int, float]:
        out = {}
        for var in self.variables.values():
            if var.lower is not None:
                for j in range(var.offset, var.offset + var.size):
                    out[j] = var.lower
        return out

    def expr(self, name: str) -> AffineExpr:
        """The variable itself as an affine expression of the decision vector."""
        var = self.variables[name]
        r, c = var.shape
        coef = np.zeros((self.size, r, c))
        if var.kind == "symmetric":
            j = var.offset
            for a in range(r):
                for b in range(a, r):
                    coef[j, a, b] = coef[j, b, a] = 1.0
                    j += 1
        elif var.kind == "full":
            idx = var.offset + np.arange(r * c)
            coef[idx, np.repeat(np.arange(r), c), np.tile(np.arange(c), r)] = 1.0
        else:
            coef[var.offset + np.arange(r), np.arange(r), 0] = 1.0
        return AffineExpr(np.zeros((r, c)), coef)

    def scaled(self, name: str, M: np.ndarray) -> AffineExpr:
        """Scalar variable ``name`` times the constant matrix ``M``."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        coef = np.zeros((self.size,) + M.shape)
        coef[self.variables[name].offset] = M
        return AffineExpr(np.zeros(M.shape), coef)

    def diag_expr(self, name: str) -> AffineExpr:
        """diag(v) for a vector variable v."""
        var = self.variables[name]
        k = var.shape[0]
        coef = np.zeros((self.size, k, k))
        coef[var.offset + np.arange(k), np.arange(k), np.arange(k)] = 1.0
        return AffineExpr(np.zeros((k, k)), coef)

    def unpack(self, v: np.ndarray) -> dict[str, np.ndarray]:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.size,):
            raise DimensionError(f"decision vector must have length {self.size}")
        return {name: self.expr(name).value(v) if var.kind != "scalar" else float(v[var.offset])
                for name, var in self.variables.items()}

    def pack(self, values: dict[str, np.ndarray | float]) -> np.ndarray:
        v = np.zeros(self.size)
        for name, var in self.variables.items():
            val = np.asarray(values[name], dtype=float)
            r, c = var.shape
            if var.kind == "symmetric":
                iu = np.triu_indices(r)
                v[var.offset:var.offset + var.size] = symm(val)[iu]
            else:
                v[var.offset:var.offset + var.size] = val.reshape(-1)
        return v


def symm(X):
    return 0.5 * (X + X.T)


class AffineExpr:
    """Matrix-valued affine function ``const + sum_j v_j coef[j]``."""

    __slots__ = ("const", "coef")
    __array_ufunc__ = None  # make ndarray (op) AffineExpr defer to us

    def __init__(self, const: np.ndarray, coef: np.ndarray):
        self.const = np.asarray(const, dtype=float)
        self.coef = np.asarray(coef, dtype=float)

    @property
    def shape(self):
        return self.const.shape

    @property
    def n_v(self) -> int:
        return self.coef.shape[0]

    @classmethod
    def constant(cls, M, n_v: int) -> AffineExpr:
        M = np.atleast_2d(np.asarray(M, dtype=float))
        return cls(M, np.zeros((n_v,) + M.shape))

    def value(self, v: np.ndarray) -> np.ndarray:
        return self.const + np.tensordot(v, self.coef, axes=1)

    @property
    def T(self) -> AffineExpr:
        return AffineExpr(self.const.T, self.coef.transpose(0, 2, 1))

    def __add__(self, other):
        if isinstance(other, AffineExpr):
            return AffineExpr(self.const + other.const, self.coef + other.coef)
        return AffineExpr(self.const + other, self.coef)

    __radd__ = __add__

    def __neg__(self):
        return AffineExpr(-self.const, -self.coef)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar: float):
        return AffineExpr(self.const * scalar, self.coef * scalar)

    __rmul__ = __mul__

    def __matmul__(self, M):
        M = np.asarray(M, dtype=float)
        return AffineExpr(self.const @ M, self.coef @ M)

    def __rmatmul__(self, M):
        M = np.asarray(M, dtype=float)
        return AffineExpr(M @ self.const, np.matmul(M, self.coef))

    def sym(self) -> AffineExpr:
        """X + X^T."""
        return self + self.T


def block(rows: list[list], n_v: int) -> AffineExpr:
    """Assemble a block matrix from AffineExpr / ndarray / None (zero) entries.

    Block sizes are inferred from the non-None entries of each row/column.
    """
    nr, nc = len(rows), len(rows[0])
    heights = [None] * nr
    widths = [None] * nc
    for i, row in enumerate(rows):
        for j, b in enumerate(row):
            if b is None:
                continue
            h, w = np.shape(b.const if isinstance(b, AffineExpr) else np.atleast_2d(b))
            if heights[i] not in (None, h) or widths[j] not in (None, w):
                raise DimensionError(f"block ({i},{j}) has inconsistent size")
            heights[i], widths[j] = h, w
    if None in heights or None in widths:
        raise DimensionError("every block row and column needs one sized entry")
    m, n = sum(heights), sum(widths)
    const = np.zeros((m, n))
    coef = np.zeros((n_v, m, n))
    r0 = 0
    for i, row in enumerate(rows):
        c0 = 0
        for j, b in enumerate(row):
            sl = (slice(r0, r0 + heights[i]), slice(c0, c0 + widths[j]))
            if isinstance(b, AffineExpr):
                const[sl] = b.const
                coef[(slice(None),) + sl] = b.coef
            elif b is not None:
                const[sl] = b
            c0 += widths[j]
        r0 += heights[i]
    return AffineExpr(const, coef)


def sym_block(upper: list[list], n_v: int) -> AffineExpr:
    """Symmetric block matrix from its upper-triangular blocks (``*`` below)."""
    k = len(upper)
    rows = [[None] * k for _ in range(k)]
    for i in range(k):
        for j in range(i, k):
            b = upper[i][j]
            rows[i][j] = b
            if j > i and b is not None:
                rows[j][i] = b.T
    return block(rows, n_v)


class AffineMatrixInequality:
    """Constraint ``F(v) = F0 + sum_j v_j F_j  <=  -margin * I``."""

    def __init__(self, expr: AffineExpr, name: str = "", margin: float | None = None):
        if expr.shape[0] != expr.shape[1]:
            raise DimensionError("LMI must be square")
        self.const = symm(expr.const)
        self.coef = 0.5 * (expr.coef + expr.coef.transpose(0, 2, 1))
        self.name = name
        if margin is None:
            margin = MARGIN_REL * (1.0 + np.abs(self.const).max(initial=0.0))
        self.margin = float(margin)

    @property
    def dim(self) -> int:
        return self.const.shape[0]

    @property
    def n_v(self) -> int:
        return self.coef.shape[0]

    def evaluate(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.n_v,):
            raise DimensionError(f"decision vector must have length {self.n_v}, got {v.shape}")
        return self.const + np.tensordot(v, self.coef, axes=1)

    def involves(self, indices) -> bool:
        return bool(np.any(self.coef[np.asarray(indices)] != 0))

    def __repr__(self):
        return f"AffineMatrixInequality({self.name!r}, dim={self.dim}, n_v={self.n_v})"


def evaluate_lmi(lmi: AffineMatrixInequality, v: np.ndarray) -> tuple[np.ndarray, float]:
    M = lmi.evaluate(v)
    return M, float(np.linalg.eigvalsh(M)[-1])


def _check_gamma(gamma):
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")


def positivity_lmi(space: VariableSpace, name: str) -> AffineMatrixInequality:
    return AffineMatrixInequality(-space.expr(name), name=f"{name}>0")


def _present(M, N) -> bool:
    return bool(np.any(M != 0) and np.any(N != 0))


def assemble_structured_lmis(model: StateSpaceModel, unc: AffineUncertainty, gamma: float,
                      beta_min: float = BETA_MIN, delta_min: float = DELTA_MIN,
                      margin: float | None = None):
    """Robust sparse observer LMI for norm-bounded affine uncertainty.

    Returns the variable space {X1, X2, Y, beta, delta1, delta2} and the list
    [main LMI, -X1 < 0, -X2 < 0]. The gain is L = X2^-1 Y.

    An uncertainty term whose factors vanish contributes nothing, and its
    multiplier would be unbounded, so delta_i and its blocks are omitted.
    """
    _check_gamma(gamma)
    unc.check(model)
    n, nd, ny = model.n_x, model.n_d, model.n_y
    A, Bd, Cy, Dd, Cz = model.A, model.B_d, model.C_y, model.D_d, model.C_z
    M1, N1, M2, N2 = unc.M1, unc.N1, unc.M2, unc.N2
    has1, has2 = _present(M1, N1), _present(M2, N2)

    sp = VariableSpace()
    sp.symmetric("X1", n)
    sp.symmetric("X2", n)
    sp.full("Y", n, ny)
    sp.vector("beta", ny, lower=beta_min)
    if has1:
        sp.scalar("delta1", lower=delta_min)
    if has2:
        sp.scalar("delta2", lower=delta_min)
    nv = sp.size
    X1, X2, Y = sp.expr("X1"), sp.expr("X2"), sp.expr("Y")
    g2 = gamma ** 2

    Z11a = (X1 @ A).sym()
    Z22a = -g2 * np.eye(nd)
    if has1:
        Z11a = Z11a + sp.scaled("delta1", N1.T @ N1)
    if has2:
        Z22a = sp.scaled("delta2", N2.T @ N2) + Z22a
    Z11 = block([[Z11a, None],
                 [None, (X2 @ A + Y @ Cy).sym() + Cz.T @ Cz]], nv)
    Z12 = block([[X1 @ Bd, np.zeros((n, ny))],
                 [X2 @ Bd + Y @ Dd, Y]], nv)
    Z22 = block([[Z22a, np.zeros((nd, ny))],
                 [np.zeros((ny, nd)), -g2 * sp.diag_expr("beta")]], nv)
    upper = [[Z11, Z12], [None, Z22]]
    for name, M, present in (("delta1", M1, has1), ("delta2", M2, has2)):
        if not present:
            continue
        q = M.shape[1]
        for row in upper:
            row.append(None)
        upper[0][-1] = block([[X1 @ M], [X2 @ M]], nv)
        upper[1][-1] = np.zeros((nd + ny, q))
        upper.append([None] * len(upper[0]))
        upper[-1][-1] = sp.scaled(name, -np.eye(q))
    main = sym_block(_fill_zero_blocks(upper), nv)
    lmis = [AffineMatrixInequality(main, "structured_design", margin),
            positivity_lmi(sp, "X1"), positivity_lmi(sp, "X2")]
    return sp, lmis


def _fill_zero_blocks(upper):
    """Replace None above the diagonal by explicit zeros (sizes from the diagonal)."""
    k = len(upper)
    size = [np.shape(upper[i][i].const if isinstance(upper[i][i], AffineExpr) else upper[i][i])
            for i in range(k)]
    out = [row[:] for row in upper]
    for i in range(k):
        for j in range(i + 1, k):
            if out[i][j] is None:
                out[i][j] = np.zeros((size[i][0], size[j][1]))
    return out


def small_gain_lmi(plant: LftPlant, space: VariableSpace | None = None, margin: float | None = None):
    """Bounded-real LMI certifying ||G_{w~ -> z_delta}||_inf <= 1 (X1 only)."""
    if space is None:
        space = VariableSpace()
        space.symmetric("X1", plant.n_x)
    nv = space.size
    X1 = space.expr("X1")
    A, Bw, Bd, Cw, Ew, Ed = plant.A, plant.B_delta, plant.B_d, plant.C_delta, plant.E_delta, plant.E_d
    nw, nd = plant.n_w, plant.n_d
    M = sym_block([[(X1 @ A).sym() + Cw.T @ Cw, X1 @ Bw + Cw.T @ Ew, X1 @ Bd + Cw.T @ Ed],
                   [None, Ew.T @ Ew - np.eye(nw), Ew.T @ Ed],
                   [None, None, Ed.T @ Ed - np.eye(nd)]], nv)
    return space, AffineMatrixInequality(M, "small_gain", margin)


def performance_lmi(plant: LftPlant, gamma: float, space: VariableSpace, margin: float | None = None):
    """Nominal error-system performance LMI over (X2, Y, beta)."""
    _check_gamma(gamma)
    nv = space.size
    X2, Y = space.expr("X2"), space.expr("Y")
    A, Cy, Cz = plant.A, plant.C_y, plant.C_z
    nw, nd, ny = plant.n_w, plant.n_d, plant.n_y
    g2 = gamma ** 2
    W11 = (X2 @ A + Y @ Cy).sym() + Cz.T @ Cz
    W12 = X2 @ plant.B_delta + Y @ plant.D_delta
    W13 = X2 @ plant.B_d + Y @ plant.D_d
    M = sym_block([[W11, W12, W13, Y],
                   [None, -g2 * np.eye(nw), np.zeros((nw, nd)), np.zeros((nw, ny))],
                   [None, None, -g2 * np.eye(nd), np.zeros((nd, ny))],
                   [None, None, None, -g2 * space.diag_expr("beta")]], nv)
    return AffineMatrixInequality(M, "performance", margin)


def assemble_lft_lmis(plant: LftPlant, gamma: float, beta_min: float = BETA_MIN,
                      margin: float | None = None, include_small_gain: bool = True):
    """Robust sparse observer LMIs for LFT uncertainty.

    Returns {X1, X2, Y, beta} and [small-gain LMI, performance LMI, -X1<0, -X2<0].
    With ``include_small_gain=False`` X1 and its constraints are omitted;
    the small-gain LMI does not involve the design variables.
    """
    _check_gamma(gamma)
    n, ny = plant.n_x, plant.n_y
    sp = VariableSpace()
    if include_small_gain:
        sp.symmetric("X1", n)
    sp.symmetric("X2", n)
    sp.full("Y", n, ny)
    sp.vector("beta", ny, lower=beta_min)
    lmis = []
    if include_small_gain:
        lmis.append(small_gain_lmi(plant, sp, margin)[1])
    lmis.append(performance_lmi(plant, gamma, sp, margin))
    if include_small_gain:
        lmis.append(positivity_lmi(sp, "X1"))
    lmis.append(positivity_lmi(sp, "X2"))
    return sp, lmis


def assemble_bounded_real(A, B, C, D, gamma: float, margin: float | None = None):
    """||C (sI-A)^-1 B + D||_inf <= gamma  iff  exists X > 0 with this LMI."""
    _check_gamma(gamma)
    A, B, C, D = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, B, C, D))
    n, m, p = A.shape[0], B.shape[1], C.shape[0]
    if A.shape != (n, n) or B.shape[0] != n or C.shape[1] != n or D.shape != (p, m):
        raise DimensionError("inconsistent (A, B, C, D) dimensions")
    sp = VariableSpace()
    sp.symmetric("X", n)
    X = sp.expr("X")
    M = sym_block([[(X @ A).sym() + C.T @ C, X @ B + C.T @ D],
                   [None, D.T @ D - gamma ** 2 * np.eye(m)]], sp.size)
    return sp, [AffineMatrixInequality(M, "bounded_real", margin), positivity_lmi(sp, "X")]


def assemble_robust_bounded_real(err: ErrorSystem, gamma: float, delta_min: float = DELTA_MIN,
                                 margin: float | None = None):
    """Robust bounded-real LMI on a structured error system (B taken as B~ S~).

    As in :func:`assemble_structured_lmis`, vanishing uncertainty terms drop out.
    """
    _check_gamma(gamma)
    if err.kind != "structured":
        raise ValueError("robust bounded-real LMI needs a structured error system")
    A, B, C = err.A_err, err.input_matrix, err.C_err
    m = B.shape[1]
    terms = [(name, M, N) for name, M, N in (("delta1", err.M1, err.N1), ("delta2", err.M2, err.N2))
             if _present(M, N)]
    sp = VariableSpace()
    sp.symmetric("X", A.shape[0])
    for name, _, _ in terms:
        sp.scalar(name, lower=delta_min)
    nv = sp.size
    X = sp.expr("X")

    Z = (X @ A).sym() + C.T @ C
    W = -gamma ** 2 * np.eye(m)
    for name, M, N in terms:
        if name == "delta1":
            Z = Z + sp.scaled(name, N.T @ N)
        else:
            W = sp.scaled(name, N.T @ N) + W
    upper = [[Z, X @ B], [None, W]]
    for name, M, N in terms:
        for row in upper:
            row.append(None)
        upper[0][-1] = X @ M
        upper.append([None] * len(upper[0]))
        upper[-1][-1] = sp.scaled(name, -np.eye(M.shape[1]))
    M = sym_block(_fill_zero_blocks(upper), nv)
    return sp, [AffineMatrixInequality(M, "robust_bounded_real", margin), positivity_lmi(sp, "X")]
