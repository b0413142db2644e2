"""Small dense linear-algebra helpers and seeded random streams.

Matrices are plain ``float64`` numpy arrays. The helpers here add the
shape checks and degeneracy conventions the scoring code relies on.
"""

import numpy as np

from .errors import ContractError, DegenerateGradientError, SingularityError

EPS_NORM = 1e-12
EPS_RIDGE = 1e-9


def as_matrix(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ContractError(f"expected a 2-D array, got shape {a.shape}")
    return a


def matmul(a, b):
    """Matrix product with an explicit inner-dimension check."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ContractError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def cholesky(a):
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Plain column-by-column factorization; ``a`` is at most a handful of rows
    (one per protected attribute) so there is no point in blocking.
    """
    a = as_matrix(a)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ContractError(f"expected a square matrix, got {a.shape}")
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-14):
        raise SingularityError("matrix is not symmetric")
    low = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - low[j, :j] @ low[j, :j]
        if not d > 0.0:
            raise SingularityError(f"matrix is not positive definite (pivot {j} = {d:g})")
        low[j, j] = np.sqrt(d)
        for i in range(j + 1, n):
            low[i, j] = (a[i, j] - low[i, :j] @ low[j, :j]) / low[j, j]
    return low


def solve_spd(a, b):
    """Solve ``a @ x = b`` for symmetric positive definite ``a``.

    Parameters
    ----------
    a : (k, k) array
    b : (k,) or (k, m) array

    Returns
    -------
    ndarray with the shape of ``b``.
    """
    b_arr = np.asarray(b, dtype=np.float64)
    vector = b_arr.ndim == 1
    rhs = as_matrix(b_arr)
    low = cholesky(a)
    if rhs.shape[0] != low.shape[0]:
        raise ContractError(f"right-hand side has {rhs.shape[0]} rows, expected {low.shape[0]}")
    n = low.shape[0]
    y = np.zeros_like(rhs)
    for i in range(n):
        y[i] = (rhs[i] - low[i, :i] @ y[:i]) / low[i, i]
    x = np.zeros_like(rhs)
    for i in reversed(range(n)):
        x[i] = (y[i] - low[i + 1:, i] @ x[i + 1:]) / low[i, i]
    return x[:, 0] if vector else x


def dot(u, v):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ContractError(f"dot needs equal-length vectors, got {u.shape} and {v.shape}")
    return float(u @ v)


def norm2(u):
    return float(np.sqrt(dot(u, u)))


def normalize(u, eps=EPS_NORM):
    """Return ``u / ||u||``; raises if the norm does not exceed ``eps``."""
    u = np.asarray(u, dtype=np.float64)
    n = norm2(u)
    if n <= eps:
        raise DegenerateGradientError(f"cannot normalize a vector of norm {n:g}")
    return u / n


def normalize_rows(a, eps=EPS_NORM):
    """Row-wise unit vectors; rows with norm ``<= eps`` come back as zeros.

    Also returns the boolean mask of degenerate rows.
    """
    a = np.asarray(a, dtype=np.float64)
    norms = np.linalg.norm(a, axis=-1, keepdims=True)
    degenerate = norms[..., 0] <= eps
    safe = np.where(norms > eps, norms, 1.0)
    out = np.where(norms > eps, a / safe, 0.0)
    return out, degenerate


def make_rng(seed):
    """Seeded PCG64 stream. Same seed gives the same draws on every platform."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def child_seed(seed, *keys):
    """Derive an independent 64-bit seed from ``seed`` and integer/str keys."""
    material = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for key in keys:
        if isinstance(key, str):
            material.extend(key.encode("utf-8"))
        else:
            material.append(int(key))
    ss = np.random.SeedSequence(material)
    return int(ss.generate_state(1, dtype=np.uint64)[0])
