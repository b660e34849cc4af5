"""Small dense linear algebra and seeded randomness.

Matrices are plain 2-D ``float64`` numpy arrays. The generator is numpy's
PCG64 (``numpy.random.Generator``), so a given seed reproduces the same
stream on any machine running the same numpy major version.
"""
import numpy as np

from .errors import NumericError, ShapeError, SingularMatrixError

_JACOBI_MAX_SWEEPS = 60
_JACOBI_TOL = 1e-15


def as_matrix(a):
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a, b):
    """Matrix product with an explicit shape check."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def svd_small(m):
    """SVD of a 2x2 or 3x3 matrix by one-sided (Hestenes) Jacobi rotations.

    Returns ``(U, s, Vt)`` with ``s`` non-negative and descending, so that
    ``U @ np.diag(s) @ Vt`` reconstructs ``m``.
    """
    m = as_matrix(m)
    if m.shape not in ((2, 2), (3, 3)):
        raise ShapeError(f"svd_small supports 2x2 and 3x3 only, got {m.shape}")
    u, s, vt = svd_small_batch(m[None])
    return u[0], s[0], vt[0]


def svd_small_batch(ms):
    """Vectorised :func:`svd_small` over a stack of shape (B, n, n)."""
    ms = np.asarray(ms, dtype=np.float64)
    if ms.ndim != 3 or ms.shape[1] != ms.shape[2] or ms.shape[1] not in (2, 3):
        raise ShapeError(f"expected (B, n, n) with n in (2, 3), got {ms.shape}")
    if not np.all(np.isfinite(ms)):
        raise NumericError("svd_small: non-finite input")

    nb, n, _ = ms.shape
    # rescale so squared column norms neither underflow nor overflow
    scale = np.abs(ms).max(axis=(1, 2))
    scale = np.where(scale > 0, scale, 1.0)
    a = ms / scale[:, None, None]
    v = np.broadcast_to(np.eye(n), (nb, n, n)).copy()
    pairs = [(p, q) for p in range(n) for q in range(p + 1, n)]

    for _ in range(_JACOBI_MAX_SWEEPS):
        rotated = False
        for p, q in pairs:
            ap = a[:, :, p]
            aq = a[:, :, q]
            alpha = np.einsum("bi,bi->b", ap, ap)
            beta = np.einsum("bi,bi->b", aq, aq)
            gamma = np.einsum("bi,bi->b", ap, aq)
            need = np.abs(gamma) > _JACOBI_TOL * np.sqrt(alpha * beta)
            if not need.any():
                continue
            rotated = True
            g = np.where(need, gamma, 1.0)
            # a subnormal gamma can overflow zeta to inf; the limit t -> 0 is correct
            with np.errstate(over="ignore", divide="ignore"):
                zeta = (beta - alpha) / (2.0 * g)
                sign = np.where(zeta >= 0.0, 1.0, -1.0)
                t = sign / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
            c = np.where(need, 1.0 / np.sqrt(1.0 + t * t), 1.0)
            s = np.where(need, c * t, 0.0)
            c = c[:, None]
            s = s[:, None]
            for mat in (a, v):
                mp = mat[:, :, p].copy()
                mq = mat[:, :, q]
                mat[:, :, p] = c * mp - s * mq
                mat[:, :, q] = s * mp + c * mq
        if not rotated:
            break

    sv = np.linalg.norm(a, axis=1)
    order = np.argsort(-sv, axis=1, kind="stable")
    sv = np.take_along_axis(sv, order, axis=1)
    a = np.take_along_axis(a, order[:, None, :], axis=2)
    v = np.take_along_axis(v, order[:, None, :], axis=2)

    tiny = sv <= np.maximum(sv[:, :1], 1e-300) * 1e-13
    safe = np.where(tiny, 1.0, sv)
    u = a / safe[:, None, :]
    for b in np.nonzero(tiny.any(axis=1))[0]:
        u[b] = _complete_basis(u[b], ~tiny[b])
    return u, sv * scale[:, None], np.transpose(v, (0, 2, 1))


def _complete_basis(u, keep):
    # Columns flagged by ``keep`` are orthonormal; replace the rest so U is orthogonal.
    n = u.shape[0]
    cols = [u[:, j] for j in range(n) if keep[j]]
    out = u.copy()
    candidates = iter(np.eye(n))
    for j in range(n):
        if keep[j]:
            continue
        for e in candidates:
            w = e - sum(np.dot(e, c) * c for c in cols)
            norm = np.linalg.norm(w)
            if norm > 1e-6:
                w = w / norm
                cols.append(w)
                out[:, j] = w
                break
    return out


def solve_least_squares(a, b):
    """Minimise ``||a @ x - b||`` through a thin QR factorisation."""
    a = as_matrix(a)
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1 or b.shape[0] != a.shape[0]:
        raise ShapeError(f"rhs of shape {b.shape} does not match matrix {a.shape}")
    if a.shape[0] < a.shape[1]:
        raise ShapeError(f"underdetermined system {a.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise NumericError("solve_least_squares: non-finite input")
    q, r = np.linalg.qr(a, mode="reduced")
    diag = np.abs(np.diag(r))
    if diag.size and diag.min() <= 1e-12 * max(diag.max(), 1e-300):
        raise SingularMatrixError("least-squares matrix is rank deficient")
    rhs = q.T @ b
    x = np.zeros(a.shape[1])
    for i in range(a.shape[1] - 1, -1, -1):
        x[i] = (rhs[i] - r[i, i + 1:] @ x[i + 1:]) / r[i, i]
    return x


def new_rng(seed):
    """Return a PCG64 generator; identical seeds give identical streams."""
    return np.random.Generator(np.random.PCG64(seed))


def gaussian_samples(rng, n, mean=0.0, std=1.0):
    if std < 0:
        raise ValueError("std must be non-negative")
    return mean + std * rng.standard_normal(n)
