"""Thin SVD, trace/spectral norms and the trace-norm subgradient."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import NumericalError, ShapeError

DEFAULT_SUBGRAD_TOL = 1e-10


class SvdResult(NamedTuple):
    U: np.ndarray
    singular_values: np.ndarray
    V: np.ndarray


def _as_matrix(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"expected a matrix, got array of shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericalError("matrix has non-finite entries")
    return m


def _fix_signs(U, V):
    # first nonzero entry of every U column made nonnegative
    if U.size == 0:
        return U, V
    nz = np.abs(U) > 1e-300
    first = np.argmax(nz, axis=0)
    signs = np.sign(U[first, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


def _jacobi_svd(a, max_sweeps, tol):
    # one-sided (Hestenes) Jacobi on the columns; requires rows >= cols
    a = a.copy()
    n = a.shape[1]
    v = np.eye(n)
    floor = (np.finfo(float).eps * np.linalg.norm(a)) ** 2
    for sweep in range(1, max_sweeps + 1):
        rotated = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                ai, aj = a[:, i], a[:, j]
                alpha = ai @ ai
                beta = aj @ aj
                gamma = ai @ aj
                if min(alpha, beta) <= floor or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.copysign(1.0, zeta) / (abs(zeta) + np.hypot(1.0, zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                a[:, [i, j]] = a[:, [i, j]] @ np.array([[c, s], [-s, c]])
                v[:, [i, j]] = v[:, [i, j]] @ np.array([[c, s], [-s, c]])
        if not rotated:
            break
    else:
        raise NumericalError(
            f"Jacobi SVD did not converge after {max_sweeps} sweeps", iterations=max_sweeps
        )
    sigma = np.linalg.norm(a, axis=0)
    order = np.argsort(-sigma, kind="stable")
    sigma, a, v = sigma[order], a[:, order], v[:, order]
    u = np.zeros_like(a)
    big = sigma > n * np.finfo(float).eps * (sigma[0] if n else 0.0)
    u[:, big] = a[:, big] / sigma[big]
    if not np.all(big):
        # complete U with an orthonormal basis for the null directions
        q, _ = np.linalg.qr(np.hstack([u[:, big], np.eye(a.shape[0])]))
        u[:, ~big] = q[:, big.sum(): big.sum() + (~big).sum()]
    return u, sigma, v


def svd(m, method: str = "lapack", max_sweeps: int = 60) -> SvdResult:
    """Thin singular value decomposition ``m = U diag(s) V^T``.

    Parameters
    ----------
    m : array_like, shape (rows, cols)
    method : {"lapack", "jacobi"}
        ``"lapack"`` calls numpy's divide-and-conquer driver; ``"jacobi"``
        runs a one-sided Jacobi sweep in pure numpy.
    max_sweeps : int
        Sweep cap for the Jacobi route.

    Returns
    -------
    SvdResult
        ``U`` (rows x k), nonincreasing ``singular_values`` (k,), ``V``
        (cols x k) with ``k = min(rows, cols)``. Column signs are fixed so the
        first nonzero entry of each ``U`` column is nonnegative.
    """
    a = _as_matrix(m)
    if method == "lapack":
        try:
            U, s, Vt = np.linalg.svd(a, full_matrices=False)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"SVD did not converge: {exc}") from exc
        V = Vt.T
    elif method == "jacobi":
        if a.shape[0] >= a.shape[1]:
            U, s, V = _jacobi_svd(a, max_sweeps, 1e-15)
        else:
            V, s, U = _jacobi_svd(a.T, max_sweeps, 1e-15)
    else:
        raise ValueError(f"unknown SVD method {method!r}")
    U, V = _fix_signs(U, V)
    return SvdResult(U, s, V)


def singular_values(m) -> np.ndarray:
    return np.linalg.svd(_as_matrix(m), compute_uv=False)


def trace_norm(m) -> float:
    """Sum of singular values (nuclear norm)."""
    return float(np.sum(singular_values(m)))


def spectral_norm(m) -> float:
    s = singular_values(m)
    return float(s[0]) if s.size else 0.0


def trace_norm_subgradient(m, tol: float = DEFAULT_SUBGRAD_TOL) -> np.ndarray:
    """Subgradient ``U_r V_r^T`` of the trace norm at ``m``.

    Singular directions with ``sigma_i <= tol * sigma_max`` are dropped, so
    the zero matrix maps to the zero matrix.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    U, s, V = svd(m)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros_like(np.asarray(m, dtype=np.float64))
    keep = s > tol * s[0]
    return U[:, keep] @ V[:, keep].T
