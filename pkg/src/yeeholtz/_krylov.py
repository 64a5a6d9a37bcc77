# vim:set et sw=4 ts=4:
# SPDX-FileCopyrightText: 2024-present Atri Bhattacharya <atrib@duck.com>
#
# SPDX-License-Identifier: MIT
#
"""
Matrix-free conjugate gradients and GMRES for operators that are costly to
apply (one wave solve per product)
"""

import logging as log
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from yeeholtz.errors import BreakdownError

# Loss of orthogonality that triggers a second Gram-Schmidt pass
REORTH_TOL = 1e-8

# CG curvature p·Ap within this fraction of ||p||·||Ap|| is round-off
CURVATURE_RTOL = 1e-10

# GMRES accepts a solution if the true residual is within this factor of tol
TRUE_RESIDUAL_SLACK = 10.0


@dataclass
class KrylovResult:

    """Outcome of a Krylov solve"""

    x: np.ndarray
    converged: bool
    iterations: int = 0
    residuals: list = field(default_factory=list)
    true_residual: float = None


def conjugate_gradient(matvec, b, tol, max_iters, callback=None):
    """
    CG from a zero initial guess; `callback(iteration, residual)` is called
    with the relative residual ||b − Ax||/||b|| after every iteration
    """
    x = np.zeros_like(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return KrylovResult(x, True, 0, [], 0.0)
    r = b.copy()
    p = r.copy()
    rr = r @ r
    residuals = []
    for it in range(1, max_iters + 1):
        ap = matvec(p)
        curvature = p @ ap
        scale = CURVATURE_RTOL * np.linalg.norm(p) * np.linalg.norm(ap)
        if curvature <= -scale:
            raise BreakdownError(
                f"Negative curvature ({curvature:.3e}) in conjugate gradients"
                f" at iteration {it}: the operator is not positive definite,"
                " most likely because of a non-PEC boundary or cos forcing;"
                " use GMRES instead"
            )
        if curvature <= scale:
            # search direction lost in round-off
            log.warning(
                "Conjugate gradients stagnated at iteration %d (curvature"
                " %.3e); returning the current iterate",
                it,
                curvature,
            )
            last = residuals[-1] if residuals else 1.0
            return KrylovResult(x, False, it - 1, residuals, last)
        alpha = rr / curvature
        x += alpha * p
        r -= alpha * ap
        rr_new = r @ r
        res = float(np.sqrt(rr_new) / bnorm)
        residuals.append(res)
        log.debug("CG iteration %d: relative residual %.3e", it, res)
        if callback is not None:
            callback(it, res)
        if res <= tol:
            return KrylovResult(x, True, it, residuals, res)
        p = r + (rr_new / rr) * p
        rr = rr_new
    last = residuals[-1] if residuals else 1.0
    return KrylovResult(x, False, max_iters, residuals, last)


def _givens(a, b):
    """Rotation (c, s) with [c s; −s c]·[a, b] = [r, 0]"""
    if b == 0.0:
        return 1.0, 0.0
    r = np.hypot(a, b)
    return a / r, b / r


def _arnoldi_step(matvec, basis, j, hess):
    """Extend the Krylov basis by one vector with modified Gram-Schmidt"""
    w = matvec(basis[j])
    for i in range(j + 1):
        hess[i, j] = basis[i] @ w
        w -= hess[i, j] * basis[i]
    norm = np.linalg.norm(w)
    if norm > 0.0 and np.max(np.abs(basis[: j + 1] @ w)) > REORTH_TOL * norm:
        for i in range(j + 1):
            corr = basis[i] @ w
            hess[i, j] += corr
            w -= corr * basis[i]
        norm = np.linalg.norm(w)
    hess[j + 1, j] = norm
    return w, norm


def gmres(  # noqa: PLR0913
    matvec, b, tol, max_iters, restart=None, callback=None
):
    """
    GMRES from a zero initial guess, unrestarted unless `restart` is given.
    The residual is tracked through the Hessenberg least squares problem and
    checked against the true residual before accepting a solution; a
    mismatch beyond TRUE_RESIDUAL_SLACK·tol restarts from the current iterate.
    Iterations count Krylov steps, not the extra true residual products.
    """
    size = b.size
    x = np.zeros_like(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return KrylovResult(x, True, 0, [], 0.0)

    residuals = []
    r = b.copy()
    beta = bnorm
    true_res = 1.0
    it = 0
    while it < max_iters:
        dim = min(restart or max_iters, max_iters - it, size)
        basis = np.zeros((dim + 1, size))
        hess = np.zeros((dim + 1, dim))
        cs = np.zeros(dim)
        sn = np.zeros(dim)
        g = np.zeros(dim + 1)
        g[0] = beta
        basis[0] = r / beta

        steps = 0
        breakdown = False
        res = beta / bnorm
        for j in range(dim):
            w, norm = _arnoldi_step(matvec, basis, j, hess)
            for i in range(j):
                hi, hi1 = hess[i, j], hess[i + 1, j]
                hess[i, j] = cs[i] * hi + sn[i] * hi1
                hess[i + 1, j] = -sn[i] * hi + cs[i] * hi1
            cs[j], sn[j] = _givens(hess[j, j], hess[j + 1, j])
            hess[j, j] = cs[j] * hess[j, j] + sn[j] * hess[j + 1, j]
            hess[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]

            it += 1
            steps = j + 1
            res = float(abs(g[j + 1]) / bnorm)
            residuals.append(res)
            log.debug("GMRES iteration %d: relative residual %.3e", it, res)
            if callback is not None:
                callback(it, res)
            if norm == 0.0:
                breakdown = True
                break
            if res <= tol:
                break
            basis[j + 1] = w / norm

        y = solve_triangular(hess[:steps, :steps], g[:steps])
        x += basis[:steps].T @ y

        r = b - matvec(x)
        beta = np.linalg.norm(r)
        true_res = float(beta / bnorm)
        if res <= tol or breakdown:
            if true_res <= TRUE_RESIDUAL_SLACK * tol:
                return KrylovResult(x, True, it, residuals, true_res)
            log.warning(
                "GMRES true residual %.3e disagrees with the estimate %.3e;"
                " restarting from the current iterate",
                true_res,
                res,
            )
        if beta == 0.0:
            return KrylovResult(x, True, it, residuals, 0.0)
    return KrylovResult(x, False, it, residuals, true_res)
