"""Reference computations that share no code with the package."""

import numpy as np


def grid_hinf(A, B, C, D, n_points=100_000, w_min=1e-4, w_max=1e4):
    """Peak of sigma_max over a log-spaced frequency grid (plus w = 0).

    Evaluated through an eigendecomposition of A, so it needs a
    diagonalizable A, which random test systems are almost surely.
    """
    A, B, C, D = (np.atleast_2d(np.asarray(M, float)) for M in (A, B, C, D))
    lam, V = np.linalg.eig(A)
    Bm = np.linalg.solve(V, B)
    Cm = C @ V
    w = np.concatenate([[0.0], np.logspace(np.log10(w_min), np.log10(w_max), n_points)])
    best = 0.0
    for chunk in np.array_split(w, 50):
        inv = 1.0 / (1j * chunk[:, None] - lam[None, :])  # (k, n)
        G = np.einsum("pn,kn,nm->kpm", Cm, inv, Bm) + D[None]
        best = max(best, float(np.linalg.svd(G, compute_uv=False)[:, 0].max()))
    return best


def random_stable_system(rng, n, m, p, min_damping=0.05):
    """Real system with poles of damping ratio >= min_damping and |lambda| in [0.1, 10]."""
    blocks = []
    size = 0
    while size < n:
        mag = 10 ** rng.uniform(-1, 1)
        if n - size >= 2 and rng.uniform() < 0.6:
            zeta = rng.uniform(min_damping, 0.9)
            sigma, omega = -zeta * mag, mag * np.sqrt(1 - zeta ** 2)
            blocks.append(np.array([[sigma, omega], [-omega, sigma]]))
            size += 2
        else:
            blocks.append(np.array([[-mag]]))
            size += 1
    T = np.zeros((n, n))
    i = 0
    for b in blocks:
        k = b.shape[0]
        T[i:i + k, i:i + k] = b
        i += k
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = Q @ T @ Q.T
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((p, n))
    D = 0.3 * rng.standard_normal((p, m)) if rng.uniform() < 0.5 else np.zeros((p, m))
    return A, B, C, D


def svec_loops(A):
    """Upper triangle, column by column, off-diagonals times sqrt(2)."""
    n = A.shape[0]
    out = []
    for j in range(n):
        for i in range(j + 1):
            out.append(A[i, j] if i == j else np.sqrt(2.0) * A[i, j])
    return np.array(out)


def smd_physical_A(k, xi):
    """Three unit masses in a chain from a wall: spring/damper j joins mass j-1 and j.

    m x_i'' = -k_i (x_i - x_{i-1}) + k_{i+1} (x_{i+1} - x_i) + (same for dampers).
    """
    n = len(k)
    K = np.zeros((n, n))
    Xi = np.zeros((n, n))
    for j in range(n):
        # element j couples mass j and mass j-1 (wall when j == 0)
        for M, c in ((K, k[j]), (Xi, xi[j])):
            M[j, j] += c
            if j > 0:
                M[j - 1, j - 1] += c
                M[j, j - 1] -= c
                M[j - 1, j] -= c
    return np.block([[np.zeros((n, n)), np.eye(n)], [-K, -Xi]])


def observer_error_system(A, B_d, C_y, D_d, C_z, L, S_n):
    """(x, e) realization built from plant and observer equations in (x, x_hat).

    x' = A x + B_d d, y = C_y x + D_d d + S_n n, x_hat' = (A + L C_y) x_hat - L y,
    then e = x - x_hat and output C_z e.
    """
    n = A.shape[0]
    nd, ny = B_d.shape[1], C_y.shape[0]
    A_xx = np.block([[A, np.zeros((n, n))], [-L @ C_y, A + L @ C_y]])
    B_xx = np.block([[B_d, np.zeros((n, ny))], [-L @ D_d, -L @ S_n]])
    T = np.block([[np.eye(n), np.zeros((n, n))], [np.eye(n), -np.eye(n)]])  # (x, e) = T (x, x_hat)
    Ti = np.linalg.inv(T)
    C = np.hstack([np.zeros((C_z.shape[0], n)), C_z])
    return T @ A_xx @ Ti, T @ B_xx, C, np.zeros((C_z.shape[0], nd + ny))


def freq_response(A, B, C, D, w):
    n = A.shape[0]
    return C @ np.linalg.solve(1j * w * np.eye(n) - A, B) + D
