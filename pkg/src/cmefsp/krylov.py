"""Action of the matrix exponential, w = exp(t A) v, by Arnoldi projection.

The scheme follows the classic Expokit ``expv`` design: build an Arnoldi
basis of dimension m for the current iterate, exponentiate the small
augmented Hessenberg matrix, estimate the local error from the two
correction coefficients, and substep in time until the horizon is reached.

Two things differ from the textbook routine.  Error estimates are measured
in the l1 norm (the correction vectors' l1 norms multiply the coefficients),
because probability errors are l1 quantities.  And each substep is charged
against a per-unit-time share of ``safety * tol * ||v||_1``, so the
accumulated estimate stays below ``tol * ||v||_1`` over the whole interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import ExpmvFailure, InvalidArgumentError, OracleCapError

__all__ = ["ExpmvOptions", "ExpmvReport", "expmv", "dense_expm", "DENSE_ORACLE_CAP"]

DENSE_ORACLE_CAP = 1024

_EPS = np.finfo(float).eps


@dataclass
class ExpmvOptions:
    tol: float = 1e-8
    krylov_dim: int = 30
    max_krylov_dim: int = 64
    max_substeps: int = 100_000
    # fraction of the tolerance the a posteriori estimates may consume
    safety: float = 0.1
    max_rejects: int = 20

    def __post_init__(self):
        if not (0 < self.tol < 1):
            raise InvalidArgumentError(f"expmv tolerance must lie in (0, 1), got {self.tol}")
        if self.max_krylov_dim < 2:
            raise InvalidArgumentError("max_krylov_dim must be >= 2")
        if self.krylov_dim < 1 or self.max_substeps < 1:
            raise InvalidArgumentError("krylov_dim and max_substeps must be positive")
        if not (0 < self.safety <= 1):
            raise InvalidArgumentError("safety must lie in (0, 1]")


@dataclass
class ExpmvReport:
    substeps: int = 0
    krylov_dim: int = 0
    error: float = 0.0  # accumulated estimate relative to ||v||_1
    clamped_mass: float = 0.0
    rejections: int = 0


def _as_operator(A):
    """Return (matvec, n, one-norm) for a generator, sparse matrix or array."""
    if hasattr(A, "offdiag") and hasattr(A, "diag"):
        mat = A.matrix
    elif sp.issparse(A):
        mat = A.tocsc()
    else:
        mat = np.asarray(A, dtype=float)
    if sp.issparse(mat):
        anorm = float(abs(mat).sum(axis=0).max()) if mat.nnz else 0.0
    else:
        anorm = float(np.abs(mat).sum(axis=0).max()) if mat.size else 0.0
    return (lambda x: mat @ x), mat.shape[0], anorm


def _arnoldi(matvec, v0, m, n, btol):
    """Arnoldi with modified Gram-Schmidt and one reorthogonalisation pass.

    Returns (V, H, k, breakdown, residual).  ``breakdown`` is set when the
    residual drops to ``btol`` or the whole space has been spanned.
    """
    V = np.zeros((len(v0), m + 1))
    H = np.zeros((m + 2, m + 2))
    V[:, 0] = v0
    for j in range(m):
        p = matvec(V[:, j])
        for i in range(j + 1):
            H[i, j] = V[:, i] @ p
            p -= H[i, j] * V[:, i]
        # second pass keeps the basis orthogonal on non-normal generators
        for i in range(j + 1):
            c = V[:, i] @ p
            H[i, j] += c
            p -= c * V[:, i]
        s = np.linalg.norm(p)
        if s <= btol or j + 1 >= n:
            return V, H, j + 1, True, s
        H[j + 1, j] = s
        V[:, j + 1] = p / s
    return V, H, m, False, 0.0


def expmv(A, v, t: float, opts: ExpmvOptions | None = None, clamp: bool = False):
    """Approximate ``exp(t A) v`` to l1 accuracy ``opts.tol * ||v||_1``.

    Returns ``(w, ExpmvReport)``.  With ``clamp=True`` negative entries of
    magnitude at most ``tol * ||v||_1`` are set to zero (meant for
    probability vectors).
    """
    opts = opts or ExpmvOptions()
    if t < 0:
        raise InvalidArgumentError(f"time must be nonnegative, got {t}")
    matvec, n, anorm = _as_operator(A)
    v = np.asarray(v, dtype=float)
    if v.shape != (n,):
        raise InvalidArgumentError(f"vector of length {v.shape} does not match operator dimension {n}")
    report = ExpmvReport()
    norm1 = float(np.abs(v).sum())
    if t == 0 or norm1 == 0 or anorm == 0:
        return v.copy(), report

    tol_abs = opts.tol * norm1
    rate = opts.safety * tol_abs / t  # allowed estimated error per unit time
    gamma = 0.9
    m = min(opts.krylov_dim, n)
    w = v.copy()
    t_now = 0.0
    err_sum = 0.0
    rndoff = anorm * _EPS

    beta = np.linalg.norm(w)
    fact = ((m + 1) / math.e) ** (m + 1) * math.sqrt(2 * math.pi * (m + 1))
    t_new = (1.0 / anorm) * ((fact * opts.tol) / (4.0 * anorm)) ** (1.0 / m)
    t_new = min(max(t_new, t * 1e-8), t)

    while t_now < t:
        if report.substeps >= opts.max_substeps:
            raise ExpmvFailure(
                f"expmv reached max_substeps={opts.max_substeps} at t={t_now:g} of {t:g}",
                w=w, t_reached=t_now, error=err_sum / norm1,
            )
        t_step = min(t - t_now, t_new)
        beta = np.linalg.norm(w)
        if beta == 0:
            break
        # accept a happy breakdown only if its residual fits in the budget
        btol = min(1e-13 * anorm, 0.1 * rate / (beta * math.sqrt(n)))
        V, H, k, breakdown, resid = _arnoldi(matvec, w / beta, m, n, btol)
        rejects = 0
        grown = False
        while True:
            if breakdown:
                # invariant subspace: the projection is exact up to the residual
                t_step = t - t_now
                F = scipy.linalg.expm(t_step * H[:k, :k])
                w_new = V[:, :k] @ (beta * F[:, 0])
                err_loc = beta * resid * t_step * math.sqrt(n)
                m_used = k
                xm = 1.0 / max(k, 1)
                break
            hm = H[:m + 2, :m + 2].copy()
            hm[m + 1, m] = 1.0
            F = scipy.linalg.expm(t_step * hm)
            v_next = V[:, m]
            av_next = matvec(v_next)
            phi1 = abs(beta * F[m, 0]) * np.abs(v_next).sum()
            phi2 = abs(beta * F[m + 1, 0]) * np.abs(av_next).sum()
            if phi1 > 10 * phi2:
                err_loc, xm = phi2, 1.0 / m
            elif phi1 > phi2:
                err_loc, xm = phi1 * phi2 / (phi1 - phi2), 1.0 / m
            else:
                err_loc, xm = phi1, 1.0 / max(m - 1, 1)
            if err_loc <= rate * t_step:
                w_new = V[:, :m + 1] @ (beta * F[:m + 1, 0])
                m_used = m + 1
                break
            if m < opts.max_krylov_dim and m < n and not grown:
                # try a richer subspace before shrinking the step
                m = min(opts.max_krylov_dim, n, m + max(m // 2, 1))
                grown = True
                break
            rejects += 1
            report.rejections += 1
            if rejects > opts.max_rejects:
                raise ExpmvFailure(
                    f"expmv step rejected {rejects} times at t={t_now:g}",
                    w=w, t_reached=t_now, error=err_sum / norm1,
                )
            t_step = gamma * t_step * (rate * t_step / err_loc) ** xm
        if grown:
            continue

        w = w_new
        t_now = t if t_step >= t - t_now else t_now + t_step
        err_sum += max(err_loc, rndoff * beta)
        report.substeps += 1
        report.krylov_dim = m_used
        # predict from the raw estimate; the roundoff floor only enters the tally
        if err_loc > 0:
            t_new = gamma * t_step * (rate * t_step / err_loc) ** xm
        else:
            t_new = t - t_now
        t_new = min(max(t_new, 1e-3 * t_step), 10 * t_step)

    report.error = err_sum / norm1
    if clamp:
        neg = (w < 0) & (w >= -tol_abs)
        report.clamped_mass = float(-w[neg].sum())
        w[neg] = 0.0
    return w, report


def dense_expm(A, t: float = 1.0, cap: int = DENSE_ORACLE_CAP) -> np.ndarray:
    """Dense exp(t A) by Pade scaling-and-squaring; test oracle only."""
    if hasattr(A, "offdiag") and hasattr(A, "diag"):
        A = A.matrix
    if sp.issparse(A):
        A = A.toarray()
    A = np.asarray(A, dtype=float)
    if A.shape[0] > cap:
        raise OracleCapError(f"dense oracle limited to {cap} states, got {A.shape[0]}")
    return scipy.linalg.expm(t * A)
