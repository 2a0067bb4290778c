"""Dense complex linear algebra used by the relay optimizer.

Matrices are plain 2-D ``numpy`` arrays of ``complex128``; vectors are 1-D
arrays.  The module provides a Cholesky-based Hermitian positive definite
solver and two dominant-eigenvector engines:

* :func:`dominant_eig_qr` -- full Hermitian eigendecomposition by Householder
  tridiagonalisation followed by implicitly shifted QR sweeps.
* :func:`dominant_eig_power` -- power iteration on a linear operator.

:func:`generalized_dominant` wraps both for the Hermitian-definite pencil
``(phi, z)``, i.e. the dominant eigenpair of ``inv(z) @ phi``.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "EigenResult",
    "ShapeError",
    "FactorizationError",
    "ConvergenceError",
    "hermitian",
    "matmul",
    "cholesky",
    "solve_hermitian_pd",
    "dominant_eig_qr",
    "dominant_eig_power",
    "generalized_dominant",
    "rayleigh_quotient",
    "fix_phase",
]

_EPS = np.finfo(float).eps
HERMITIAN_TOL = 1e-10
PHASE_TOL = 1e-12


class ShapeError(ValueError):
    """Operand dimensions are incompatible."""


class FactorizationError(np.linalg.LinAlgError):
    """Cholesky factorisation failed (matrix not Hermitian positive definite)."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class ConvergenceError(RuntimeError):
    """An iterative eigensolver ran out of sweeps."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class EigenResult:
    """Dominant eigenpair.

    ``vector`` has unit Euclidean norm and its first component with
    magnitude above ``1e-12`` is real and positive.
    """

    value: float
    vector: np.ndarray
    iterations: int
    converged: bool


def _as_matrix(m, name="matrix"):
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    return m


def hermitian(m):
    """Conjugate transpose."""
    return np.conj(np.asarray(m)).T


def matmul(a, b):
    """Complex matrix product with an explicit shape check."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}: inner dimensions {a.shape[-1]} != {b.shape[0]}")
    return a @ b


def fix_phase(v):
    """Rotate ``v`` so its first non-negligible entry is real positive."""
    v = np.asarray(v, dtype=complex)
    idx = np.flatnonzero(np.abs(v) > PHASE_TOL)
    if idx.size == 0:
        return v.copy()
    lead = v[idx[0]]
    out = v * (np.conj(lead) / abs(lead))
    out[idx[0]] = abs(out[idx[0]])
    return out


def _unit(v):
    return fix_phase(v / np.linalg.norm(v))


def _check_hermitian(m, name):
    m = _as_matrix(m, name)
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"{name} must be square, got shape {m.shape}")
    scale = max(1.0, np.abs(m).sum(axis=1).max())
    dev = np.abs(m - hermitian(m)).sum(axis=1).max()
    if dev >= HERMITIAN_TOL * scale:
        raise ValueError(f"{name} is not Hermitian: ||M - M^H||_inf = {dev:.3e}")
    return 0.5 * (m + hermitian(m))


def cholesky(z):
    """Lower-triangular ``L`` with ``z = L @ L^H``.

    Raises
    ------
    ValueError
        If ``z`` is not Hermitian.
    FactorizationError
        If a pivot is not strictly positive.  The message names the smallest
        pivot encountered.
    """
    z = _check_hermitian(z, "z")
    n = z.shape[0]
    L = np.zeros_like(z)
    pivots = np.empty(n)
    for j in range(n):
        row = L[j, :j]
        pivots[j] = z[j, j].real - np.vdot(row, row).real
        if not pivots[j] > 0.0:
            k = int(np.argmin(pivots[: j + 1]))
            raise FactorizationError(
                f"matrix is not positive definite: smallest pivot {pivots[k]:.3e} at index {k}",
                pivot=float(pivots[k]),
            )
        L[j, j] = np.sqrt(pivots[j])
        if j + 1 < n:
            L[j + 1 :, j] = (z[j + 1 :, j] - L[j + 1 :, :j] @ np.conj(row)) / L[j, j]
    return L


def _forward(L, b):
    x = np.array(b, dtype=complex)
    for i in range(L.shape[0]):
        x[i] = (x[i] - L[i, :i] @ x[:i]) / L[i, i]
    return x


def _backward_h(L, b):
    # solves L^H x = b
    U = hermitian(L)
    x = np.array(b, dtype=complex)
    n = U.shape[0]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - U[i, i + 1 :] @ x[i + 1 :]) / U[i, i]
    return x


def _cho_solve(L, b):
    return _backward_h(L, _forward(L, b))


def solve_hermitian_pd(z, b):
    """Solve ``z @ x = b`` for Hermitian positive definite ``z``.

    ``b`` may be a vector or a matrix of right-hand sides.  No inverse is
    formed; the system is solved by Cholesky factorisation and two
    triangular substitutions.
    """
    L = cholesky(z)
    b = np.asarray(b, dtype=complex)
    if b.shape[0] != L.shape[0]:
        raise ShapeError(f"right-hand side has {b.shape[0]} rows, expected {L.shape[0]}")
    return _cho_solve(L, b)


# ---------------------------------------------------------------------------
# QR algorithm
# ---------------------------------------------------------------------------


def _tridiagonalize(a):
    """Householder reduction ``a = Q T Q^H`` with real symmetric tridiagonal T."""
    a = a.copy()
    n = a.shape[0]
    Q = np.eye(n, dtype=complex)
    for k in range(n - 2):
        x = a[k + 1 :, k].copy()
        tail = np.linalg.norm(x[1:])
        if tail == 0.0:
            continue
        x0 = x[0]
        phase = x0 / abs(x0) if abs(x0) > 0 else 1.0
        alpha = -phase * np.linalg.norm(x)
        v = x
        v[0] -= alpha
        v /= np.linalg.norm(v)
        # H = I - 2 v v^H applied from both sides
        blk = a[k + 1 :, :]
        blk -= 2.0 * np.outer(v, np.conj(v) @ blk)
        blk = a[:, k + 1 :]
        blk -= 2.0 * np.outer(blk @ v, np.conj(v))
        blk = Q[:, k + 1 :]
        blk -= 2.0 * np.outer(blk @ v, np.conj(v))
    # unitary diagonal scaling makes the complex sub-diagonal real and >= 0
    d = np.ones(n, dtype=complex)
    for k in range(n - 1):
        e = a[k + 1, k]
        d[k + 1] = d[k] * (e / abs(e)) if abs(e) > 0 else d[k]
    Q = Q * d[np.newaxis, :]
    T = np.zeros((n, n))
    T[np.diag_indices(n)] = a.diagonal().real
    sub = np.abs(a.diagonal(-1))
    T[np.arange(1, n), np.arange(n - 1)] = sub
    T[np.arange(n - 1), np.arange(1, n)] = sub
    return T, Q


def _wilkinson_shift(T, h):
    a, b, c = T[h - 1, h - 1], T[h, h - 1], T[h, h]
    delta = 0.5 * (a - c)
    if b == 0.0:
        return c
    sgn = 1.0 if delta >= 0 else -1.0
    return c - b * b / (delta + sgn * np.hypot(delta, b))


def _qr_sweep(T, Q, lo, hi):
    """One implicit Wilkinson-shifted QR step on the block ``lo..hi``."""
    mu = _wilkinson_shift(T, hi)
    x = T[lo, lo] - mu
    z = T[lo + 1, lo]
    for k in range(lo, hi):
        r = np.hypot(x, z)
        if r == 0.0:
            c, s = 1.0, 0.0
        else:
            c, s = x / r, z / r
        R = np.array([[c, s], [-s, c]])
        idx = [k, k + 1]
        T[idx, :] = R @ T[idx, :]
        T[:, idx] = T[:, idx] @ R.T
        Q[:, idx] = Q[:, idx] @ R.T
        if k > lo:
            T[k + 1, k - 1] = T[k - 1, k + 1] = 0.0
        if k + 1 < hi:
            x = T[k + 1, k]
            z = T[k + 2, k]


def hermitian_eigh(m, max_sweeps=None):
    """All eigenpairs of a Hermitian matrix, eigenvalues in descending order.

    Returns ``(values, vectors, sweeps)`` with eigenvectors as columns.  Ties
    keep the order in which the QR iteration left them (stable sort).
    """
    m = _check_hermitian(m, "m")
    n = m.shape[0]
    if max_sweeps is None:
        max_sweeps = 100 * n
    T, Q = _tridiagonalize(m)
    sweeps = 0
    while True:
        for i in range(n - 1):
            if abs(T[i + 1, i]) <= _EPS * (abs(T[i, i]) + abs(T[i + 1, i + 1])):
                T[i + 1, i] = T[i, i + 1] = 0.0
        hi = n - 1
        while hi > 0 and T[hi, hi - 1] == 0.0:
            hi -= 1
        if hi == 0:
            break
        if sweeps >= max_sweeps:
            resid = float(np.abs(T.diagonal(-1)).max())
            raise ConvergenceError(
                f"QR iteration did not converge after {sweeps} sweeps (largest off-diagonal {resid:.3e})",
                residual=resid,
            )
        lo = hi - 1
        while lo > 0 and T[lo, lo - 1] != 0.0:
            lo -= 1
        _qr_sweep(T, Q, lo, hi)
        sweeps += 1
    values = T.diagonal().copy()
    order = np.argsort(-values, kind="stable")
    return values[order], Q[:, order], sweeps


def dominant_eig_qr(m, max_sweeps=None):
    """Dominant eigenpair of a Hermitian matrix via the QR algorithm."""
    values, vectors, sweeps = hermitian_eigh(m, max_sweeps=max_sweeps)
    return EigenResult(float(values[0]), _unit(vectors[:, 0]), sweeps, True)


# ---------------------------------------------------------------------------
# Power method
# ---------------------------------------------------------------------------


def dominant_eig_power(apply, dim, tol=1e-10, max_iter=1000):
    """Power iteration for the dominant eigenpair of a linear operator.

    Parameters
    ----------
    apply : callable
        Maps a length-``dim`` complex vector to its image.
    dim : int
        Operator dimension.
    tol : float
        Relative change of the Rayleigh quotient between successive
        iterates below which the iteration stops.  An iterate whose
        eigen-residual is already below ``tol`` also stops the iteration.
    max_iter : int
        Iteration cap.  Hitting it returns the last iterate with
        ``converged=False``.

    Notes
    -----
    The start vector is the normalised all-ones vector, so results are
    reproducible.  If that vector happens to have no component along the
    dominant eigenvector, the iteration settles on a subdominant pair.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    v = np.ones(dim, dtype=complex) / np.sqrt(dim)
    lam_prev = None
    lam = 0.0
    for k in range(1, max_iter + 1):
        u = np.asarray(apply(v), dtype=complex)
        lam = np.vdot(v, u).real
        norm_u = np.linalg.norm(u)
        if norm_u == 0.0:
            return EigenResult(0.0, fix_phase(v), k, True)
        resid = np.linalg.norm(u - lam * v)
        if resid <= tol * norm_u or (lam_prev is not None and abs(lam - lam_prev) < tol * abs(lam)):
            return EigenResult(float(lam), fix_phase(v), k, True)
        lam_prev = lam
        v = u / norm_u
    return EigenResult(float(lam), fix_phase(v), max_iter, False)


def generalized_dominant(phi, z, method="qr", tol=1e-10, max_iter=1000):
    """Dominant eigenpair of ``inv(z) @ phi`` for a Hermitian-definite pencil.

    The eigenvalue equals the maximum of ``(w^H phi w) / (w^H z w)``.

    ``method="qr"`` whitens with ``z = L L^H`` and solves the Hermitian
    problem ``inv(L) phi inv(L)^H`` by the QR algorithm.  ``method="power"``
    iterates ``v <- solve(z, phi v)``.  ``inv(z) @ phi`` is never formed.
    """
    phi = _check_hermitian(phi, "phi")
    L = cholesky(z)
    if phi.shape != L.shape:
        raise ShapeError(f"phi {phi.shape} and z {L.shape} differ in shape")
    method = str(method).lower()
    if method == "qr":
        # inv(L) phi inv(L)^H
        half = _forward(L, phi)
        white = hermitian(_forward(L, hermitian(half)))
        res = dominant_eig_qr(0.5 * (white + hermitian(white)))
        vec = _unit(_backward_h(L, res.vector))
        return EigenResult(res.value, vec, res.iterations, res.converged)
    if method == "power":
        res = dominant_eig_power(lambda v: _cho_solve(L, phi @ v), phi.shape[0], tol=tol, max_iter=max_iter)
        v = res.vector
        value = np.vdot(v, phi @ v).real / np.vdot(v, z @ v).real
        return EigenResult(float(value), v, res.iterations, res.converged)
    raise ValueError(f"unknown eigen method {method!r}; expected 'qr' or 'power'")


def rayleigh_quotient(w, phi, z):
    """Generalised Rayleigh quotient ``(w^H phi w) / (w^H z w)``."""
    w = np.asarray(w, dtype=complex)
    num = np.vdot(w, np.asarray(phi) @ w)
    den = np.vdot(w, np.asarray(z) @ w)
    for name, q, mat in (("numerator", num, phi), ("denominator", den, z)):
        scale = np.vdot(w, w).real * np.abs(mat).max()
        if abs(q.imag) > 1e-10 * max(abs(q.real), scale, np.finfo(float).tiny):
            raise ValueError(f"{name} quadratic form has imaginary part {q.imag:.3e}")
    if den.real <= 0.0:
        raise ZeroDivisionError("w^H z w must be positive")
    return float(num.real / den.real)
