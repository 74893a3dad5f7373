"""Compiled inner loop of the planar elastica equilibrium solve.

Coordinates are 2-D inside the bending plane: ``h`` is horizontal (from
endpoint 1 toward endpoint 2) and ``z`` is up. Segment ``i`` has absolute
angle ``theta[i]``; joint ``j`` sits between segments ``j`` and ``j + 1``.
"""

import numpy as np
from numba import njit

OK = 0
NO_CONVERGENCE = 1


@njit(cache=True)
def energy(theta, ell, kb, kappa0, wgrav, g):
    e = 0.0
    for j in range(kb.shape[0]):
        dk = theta[j + 1] - theta[j] - kappa0[j]
        e += 0.5 * kb[j] * dk * dk
    for i in range(theta.shape[0]):
        e += g * ell * wgrav[i] * np.sin(theta[i])
    return e


@njit(cache=True)
def _residual(theta, mu, dh, dz, ell, kb, kappa0, wgrav, g, f):
    n = theta.shape[0]
    for i in range(n):
        s = np.sin(theta[i])
        c = np.cos(theta[i])
        gi = g * ell * wgrav[i] * c
        if i > 0:
            gi += kb[i - 1] * (theta[i] - theta[i - 1] - kappa0[i - 1])
        if i < n - 1:
            gi -= kb[i] * (theta[i + 1] - theta[i] - kappa0[i])
        # grad E - J^T mu with J = [[-ell s], [ell c]]
        f[i] = gi + mu[0] * ell * s - mu[1] * ell * c
    sx = 0.0
    sz = 0.0
    for i in range(n):
        sx += np.cos(theta[i])
        sz += np.sin(theta[i])
    f[n] = ell * sx - dh
    f[n + 1] = ell * sz - dz


@njit(cache=True)
def _augmented_pd(hess, jac, rho):
    """Cholesky test of ``H + rho J^T J``; success implies a positive reduced Hessian."""
    n = hess.shape[0]
    a = hess + rho * (jac.T @ jac)
    for j in range(n):
        d = a[j, j]
        for k in range(j):
            d -= a[j, k] * a[j, k]
        if d <= 1e-10 * (1.0 + abs(a[j, j])):
            return False
        d = np.sqrt(d)
        a[j, j] = d
        for i in range(j + 1, n):
            v = a[i, j]
            for k in range(j):
                v -= a[i, k] * a[j, k]
            a[i, j] = v / d
    return True


@njit(cache=True)
def solve(theta0, dh, dz, ell, kb, kappa0, wgrav, g, max_iter, tol_grad, tol_con):
    """Projected Newton on the KKT system with inertia correction.

    Returns ``(theta, mu, iterations, status, reduced_grad_norm)``.
    """
    n = theta0.shape[0]
    theta = theta0.copy()
    mu = np.zeros(2)
    f = np.zeros(n + 2)
    jac = np.zeros((2, n))
    # least-squares multipliers for the warm start
    _residual(theta, mu, dh, dz, ell, kb, kappa0, wgrav, g, f)
    for i in range(n):
        jac[0, i] = -ell * np.sin(theta[i])
        jac[1, i] = ell * np.cos(theta[i])
    mu = np.linalg.solve(jac @ jac.T, jac @ f[:n])
    _residual(theta, mu, dh, dz, ell, kb, kappa0, wgrav, g, f)

    kkt = np.zeros((n + 2, n + 2))
    trial_f = np.zeros(n + 2)
    eye = np.eye(n)
    status = NO_CONVERGENCE
    it = 0
    while it < max_iter:
        gnorm = np.sqrt(np.sum(f[:n] ** 2))
        cnorm = np.sqrt(f[n] ** 2 + f[n + 1] ** 2)
        if gnorm <= tol_grad and cnorm <= tol_con:
            status = OK
            break
        it += 1
        for i in range(n):
            jac[0, i] = -ell * np.sin(theta[i])
            jac[1, i] = ell * np.cos(theta[i])
        hess = np.zeros((n, n))
        for i in range(n):
            s = np.sin(theta[i])
            c = np.cos(theta[i])
            hess[i, i] = -g * ell * wgrav[i] * s + mu[0] * ell * c + mu[1] * ell * s
            if i > 0:
                hess[i, i] += kb[i - 1]
                hess[i, i - 1] = -kb[i - 1]
            if i < n - 1:
                hess[i, i] += kb[i]
                hess[i, i + 1] = -kb[i]
        hmax = np.max(np.abs(hess))
        if not _augmented_pd(hess, jac, 10.0 * (1.0 + hmax) / (ell * ell)):
            # reduced Hessian spectrum via P H P + (I - P)
            proj = eye - jac.T @ np.linalg.solve(jac @ jac.T, jac)
            lam_min = np.linalg.eigvalsh(proj @ hess @ proj + (eye - proj))[0]
            floor = 1e-8 * (1.0 + hmax)
            if lam_min < floor:
                # indefinite: shift toward gradient descent
                shift = floor - lam_min + 1e-3 * hmax
                for i in range(n):
                    hess[i, i] += shift
        kkt[:n, :n] = hess
        kkt[:n, n:] = -jac.T
        kkt[n:, :n] = jac
        kkt[n:, n:] = 0.0
        step = np.linalg.solve(kkt, -f)
        fnorm = np.sqrt(np.sum(f ** 2))
        alpha = 1.0
        for _ in range(30):
            t_theta = theta + alpha * step[:n]
            t_mu = mu + alpha * step[n:]
            _residual(t_theta, t_mu, dh, dz, ell, kb, kappa0, wgrav, g, trial_f)
            if np.sqrt(np.sum(trial_f ** 2)) <= (1.0 - 1e-4 * alpha) * fnorm:
                break
            alpha *= 0.5
        theta = t_theta
        mu = t_mu
        f[:] = trial_f
    gnorm = np.sqrt(np.sum(f[:n] ** 2))
    return theta, mu, it, status, gnorm
