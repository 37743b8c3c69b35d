"""Independent reference implementations used to pin expected test values.

Everything here is written against the plain mathematical definitions with
no reliance on the package internals, so tests can cross-check the package
against a second route.
"""

from __future__ import annotations

import numpy as np


def hand_trapezoid(values, h):
    """Composite trapezoid sum written out longhand."""
    values = list(values)
    total = 0.0
    for i in range(len(values) - 1):
        total += 0.5 * h * (values[i] + values[i + 1])
    return total


def rectangle_perimeter_weights(lx, ly, nx, ny):
    """Per-edge trapezoid weights summed node by node over the 4 edges.

    Returns a dict mapping (ix, iy) -> weight for every boundary node.
    """
    hx = lx / (nx - 1)
    hy = ly / (ny - 1)

    def w1d(i, n, h):
        return h / 2 if i in (0, n - 1) else h

    acc = {}
    for iy in range(ny):  # left and right edges run along y
        for ix in (0, nx - 1):
            acc[(ix, iy)] = acc.get((ix, iy), 0.0) + w1d(iy, ny, hy)
    for ix in range(nx):  # bottom and top edges run along x
        for iy in (0, ny - 1):
            acc[(ix, iy)] = acc.get((ix, iy), 0.0) + w1d(ix, nx, hx)
    return acc


def bisect_increasing(fun, a, b, tol=1e-12, max_iter=200):
    """Root of an increasing scalar function by plain bisection."""
    fa, fb = fun(a), fun(b)
    if fa > 0 or fb < 0:
        raise ValueError("root not bracketed")
    for _ in range(max_iter):
        mid = 0.5 * (a + b)
        fm = fun(mid)
        if abs(fm) <= tol or (b - a) <= 1e-16 * max(1.0, abs(mid)):
            return mid
        if fm > 0:
            b = mid
        else:
            a = mid
    return 0.5 * (a + b)


def log_resolvent_oracle(eps, r, tol=1e-12):
    """Resolvent of the logarithmic monotone graph via bisection on (-1, 1)."""

    def g(s):
        return s + eps * np.log((1.0 + s) / (1.0 - s)) - r

    lo, hi = -1.0 + 1e-15, 1.0 - 1e-15
    return bisect_increasing(g, lo, hi, tol=tol)


def central_difference(fun, x0, delta):
    """Symmetric difference quotient of a scalar function of one scalar."""
    return (fun(x0 + delta) - fun(x0 - delta)) / (2.0 * delta)


def loglog_slope(xs, ys):
    """Least-squares slope of log(ys) against log(xs)."""
    lx = np.log(np.asarray(xs, float))
    ly = np.log(np.asarray(ys, float))
    n = len(lx)
    return float((n * (lx * ly).sum() - lx.sum() * ly.sum())
                 / (n * (lx * lx).sum() - lx.sum() ** 2))


def dense_staggered_march(W, A, bnodes, S, sigma, tau, alpha, m, dt, n_steps,
                          n_sweeps, beta, dbeta, pi, lam, u, th0, ph0,
                          newton_tol=1e-13):
    """Reference staggered implicit march, dense linear algebra throughout.

    Mirrors the scheme definition directly: per step, freeze the smooth-well
    and latent-heat factors at the step start, then alternate (nonlinear
    phase solve by plain Newton, linear temperature solve) for n_sweeps
    sweeps, feeding each fresh temperature into the next phase solve.
    """
    A = np.asarray(A, float)
    Mth = np.diag(W / dt) + A
    for j, node in enumerate(bnodes):
        Mth[node, node] += S[j] * (tau / dt + alpha)
    th, ph = np.array(th0, float), np.array(ph0, float)
    ths, phs = [th.copy()], [ph.copy()]
    for n in range(n_steps):
        src = th
        pi0, lam0 = pi(ph), lam(ph)
        for _ in range(n_sweeps):
            p = ph.copy()
            for _ in range(80):
                F = W * ((p - ph) / dt + beta(p) + pi0 - src * lam0) + sigma * (A @ p)
                if np.max(np.abs(F / W)) <= newton_tol:
                    break
                J = np.diag(W / dt + W * dbeta(p)) + sigma * A
                p = p + np.linalg.solve(J, -F)
            rhs = W * (th - lam(p) * (p - ph)) / dt
            for j, node in enumerate(bnodes):
                rhs[node] += S[j] * (tau * th[node] / dt + alpha * m[j] * u[n, j])
            tnew = np.linalg.solve(Mth, rhs)
            src = tnew
        th, ph = tnew, p
        ths.append(th.copy())
        phs.append(ph.copy())
    return np.array(ths), np.array(phs)


def monolithic_coupled_march(W, A, bnodes, S, sigma, tau, alpha, m, dt, n_steps,
                             beta, dbeta, pi, lam, dlam, u, th0, ph0,
                             newton_tol=1e-13):
    """Fully coupled implicit march: one Newton solve in (theta, phi) per step.

    Solves the same per-step equations as the staggered scheme's sweep fixed
    point, but simultaneously: the stacked 2M-dimensional residual

        R_th = W (th - th0)/dt + A th + W lam(ph)(ph - ph0)/dt  [+ boundary]
        R_ph = W (ph - ph0)/dt + sigma A ph
               + W (beta(ph) + pi(ph0) - th lam(ph0))

    is driven to the round-off floor by undamped Newton with a dense exact
    Jacobian.  Different algorithm, same equations: agreement validates that
    iterating the sweeps converges to the coupled solution.
    """
    A = np.asarray(A, float)
    M = len(W)
    bd = np.zeros(M)
    for j, node in enumerate(bnodes):
        bd[node] = S[j]
    th, ph = np.array(th0, float), np.array(ph0, float)
    ths, phs = [th.copy()], [ph.copy()]
    for n in range(n_steps):
        th_old, ph_old = th, ph
        pi0, lam0 = pi(ph_old), lam(ph_old)
        x_th, x_ph = th_old.copy(), ph_old.copy()
        for it in range(80):
            R_th = W * ((x_th - th_old) / dt + lam(x_ph) * (x_ph - ph_old) / dt)
            R_th += A @ x_th
            R_th += bd * (tau * (x_th - th_old) / dt + alpha * x_th)
            for j, node in enumerate(bnodes):
                R_th[node] -= S[j] * alpha * m[j] * u[n, j]
            R_ph = W * ((x_ph - ph_old) / dt + beta(x_ph) + pi0 - x_th * lam0)
            R_ph += sigma * (A @ x_ph)
            res = max(np.max(np.abs(R_th / W)), np.max(np.abs(R_ph / W)))
            if res <= newton_tol:
                break
            Jtt = np.diag(W / dt + bd * (tau / dt + alpha)) + A
            Jtp = np.diag(W * (dlam(x_ph) * (x_ph - ph_old) + lam(x_ph)) / dt)
            Jpt = np.diag(-W * lam0)
            Jpp = np.diag(W / dt + W * dbeta(x_ph)) + sigma * A
            J = np.block([[Jtt, Jtp], [Jpt, Jpp]])
            step = np.linalg.solve(J, -np.concatenate([R_th, R_ph]))
            x_th = x_th + step[:M]
            x_ph = x_ph + step[M:]
        else:
            raise RuntimeError("coupled Newton failed to converge")
        th, ph = x_th, x_ph
        ths.append(th.copy())
        phs.append(ph.copy())
    return np.array(ths), np.array(phs)
