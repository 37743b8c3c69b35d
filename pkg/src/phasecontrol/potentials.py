"""Double-well potentials, monotone regularization, and latent-heat tables.

A potential is split as W = (convex part) + (smooth perturbation).  The
convex part has a monotone derivative ``beta`` defined on an open interval
``domain`` (possibly all of R); the smooth perturbation ``pi_hat`` and the
latent-heat primitive ``lam_hat`` are C^2 with Lipschitz derivatives on
bounded sets.  Set-valued convex parts are out of scope: singular behaviour
is always through a single-valued derivative blowing up at the ends of an
open domain, and the Yosida route below covers the approximation theory.

All evaluators are vectorized over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "PotentialSpec",
    "Regularization",
    "LatentHeat",
    "constant_latent",
    "tanh_latent",
    "regular_potential",
    "logarithmic_potential",
    "custom_potential",
    "resolvent",
    "yosida",
    "yosida_envelope",
    "lambda_trunc",
    "eval_gamma",
    "smooth_cutoff",
    "effective_nonlinearity",
    "PotentialDomainError",
    "ResolventError",
]


class PotentialDomainError(ValueError):
    """An evaluator was called outside the domain of the monotone part."""


class ResolventError(RuntimeError):
    """The resolvent iteration failed to converge."""


@dataclass(frozen=True)
class LatentHeat:
    """Latent-heat primitive and its first three derivatives."""

    hat: Callable
    fun: Callable
    deriv: Callable
    second: Callable


def constant_latent(value: float = 1.0) -> LatentHeat:
    """Latent heat with constant coupling: primitive value * r."""
    v = float(value)
    return LatentHeat(
        hat=lambda r: v * np.asarray(r, float),
        fun=lambda r: np.full_like(np.asarray(r, float), v),
        deriv=lambda r: np.zeros_like(np.asarray(r, float)),
        second=lambda r: np.zeros_like(np.asarray(r, float)),
    )


def tanh_latent() -> LatentHeat:
    """Saturating latent heat: primitive log cosh r, coupling tanh r."""
    return LatentHeat(
        hat=lambda r: np.logaddexp(np.asarray(r, float), -np.asarray(r, float)) - np.log(2.0),
        fun=lambda r: np.tanh(np.asarray(r, float)),
        deriv=lambda r: 1.0 / np.cosh(np.asarray(r, float)) ** 2,
        second=lambda r: -2.0 * np.tanh(r) / np.cosh(np.asarray(r, float)) ** 2,
    )


@dataclass(frozen=True)
class PotentialSpec:
    """Split double-well potential with latent-heat evaluators.

    ``beta_hat``/``beta``/``dbeta``/``d2beta`` are the convex part and its
    derivatives, defined strictly inside ``domain``.  ``pi_hat``/``pi``/``dpi``
    are the smooth perturbation.  ``lam_hat``/``lam``/``dlam``/``d2lam`` are
    the latent-heat primitive and derivatives.
    """

    name: str
    domain: tuple[float, float]
    beta_hat: Callable
    beta: Callable
    dbeta: Callable
    d2beta: Callable
    pi_hat: Callable
    pi: Callable
    dpi: Callable
    lam_hat: Callable
    lam: Callable
    dlam: Callable
    d2lam: Callable

    def check_domain(self, r):
        r = np.asarray(r, float)
        lo, hi = self.domain
        if np.any(r <= lo) or np.any(r >= hi):
            raise PotentialDomainError(
                f"argument outside the open domain ({lo}, {hi}) of the monotone part"
            )
        return r


def _guarded(fun, spec_domain_check):
    def wrapped(r):
        return fun(spec_domain_check(r))

    return wrapped


def regular_potential(latent: LatentHeat | None = None) -> PotentialSpec:
    """Quartic double well r^2 (r-1)^2 with wells at 0 and 1.

    Convex part r^4 - 2 r^3 + 3/2 r^2 (second derivative 3 (2r-1)^2 >= 0),
    smooth part -r^2/2.
    """
    latent = latent or constant_latent(1.0)
    return PotentialSpec(
        name="regular",
        domain=(-np.inf, np.inf),
        beta_hat=lambda r: ((np.asarray(r, float) - 2.0) * r + 1.5) * r * r,
        beta=lambda r: ((4.0 * np.asarray(r, float) - 6.0) * r + 3.0) * r,
        dbeta=lambda r: 3.0 * (2.0 * np.asarray(r, float) - 1.0) ** 2,
        d2beta=lambda r: 24.0 * np.asarray(r, float) - 12.0,
        pi_hat=lambda r: -0.5 * np.asarray(r, float) ** 2,
        pi=lambda r: -np.asarray(r, float),
        dpi=lambda r: -np.ones_like(np.asarray(r, float)),
        lam_hat=latent.hat,
        lam=latent.fun,
        dlam=latent.deriv,
        d2lam=latent.second,
    )


def logarithmic_potential(a: float, latent: LatentHeat | None = None) -> PotentialSpec:
    """Logarithmic double well on (-1, 1) with smooth part -a r^2.

    Convex part (1+r) log(1+r) + (1-r) log(1-r); its derivative
    log((1+r)/(1-r)) blows up at the ends, confining the phase variable.
    Requires a > 0 for a double-well shape (validated).
    """
    a = float(a)
    if not (a > 0 and np.isfinite(a)):
        raise ValueError("logarithmic well coefficient a must be positive and finite")
    latent = latent or constant_latent(1.0)

    def beta_hat(r):
        r = np.asarray(r, float)
        # xlogy-style guard: (1 +/- r) log(1 +/- r) -> 0 as the factor -> 0;
        # finite closure value 2 log 2 at r = +/- 1, +inf beyond
        p, m = 1.0 + r, 1.0 - r
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(p > 0, p * np.log(np.maximum(p, 1e-300)), 0.0) + np.where(
                m > 0, m * np.log(np.maximum(m, 1e-300)), 0.0
            )
        return np.where(np.abs(r) <= 1.0, out, np.inf)

    spec = PotentialSpec(
        name="logarithmic",
        domain=(-1.0, 1.0),
        beta_hat=beta_hat,
        beta=lambda r: np.log1p(np.asarray(r, float)) - np.log1p(-np.asarray(r, float)),
        dbeta=lambda r: 2.0 / (1.0 - np.asarray(r, float) ** 2),
        d2beta=lambda r: 4.0 * np.asarray(r, float) / (1.0 - np.asarray(r, float) ** 2) ** 2,
        pi_hat=lambda r: -a * np.asarray(r, float) ** 2,
        pi=lambda r: -2.0 * a * np.asarray(r, float),
        dpi=lambda r: np.full_like(np.asarray(r, float), -2.0 * a),
        lam_hat=latent.hat,
        lam=latent.fun,
        dlam=latent.deriv,
        d2lam=latent.second,
    )
    # route the singular evaluators through a strict domain check
    object.__setattr__(spec, "beta", _guarded(spec.beta, spec.check_domain))
    object.__setattr__(spec, "dbeta", _guarded(spec.dbeta, spec.check_domain))
    object.__setattr__(spec, "d2beta", _guarded(spec.d2beta, spec.check_domain))
    return spec


def custom_potential(
    *,
    beta_hat,
    beta,
    dbeta,
    d2beta,
    pi_hat,
    pi,
    dpi,
    domain=(-np.inf, np.inf),
    latent: LatentHeat | None = None,
    name: str = "custom",
) -> PotentialSpec:
    """Assemble a potential from user-supplied smooth split evaluators."""
    latent = latent or constant_latent(1.0)
    return PotentialSpec(
        name=name,
        domain=(float(domain[0]), float(domain[1])),
        beta_hat=beta_hat,
        beta=beta,
        dbeta=dbeta,
        d2beta=d2beta,
        pi_hat=pi_hat,
        pi=pi,
        dpi=dpi,
        lam_hat=latent.hat,
        lam=latent.fun,
        dlam=latent.deriv,
        d2lam=latent.second,
    )


@dataclass(frozen=True)
class Regularization:
    """Yosida smoothing of the monotone part at level eps > 0."""

    eps: float
    resolvent_tol: float = 1e-12
    max_iter: int = 100

    def __post_init__(self):
        if not (self.eps > 0 and np.isfinite(self.eps)):
            raise ValueError("regularization level eps must be positive and finite")


def eval_gamma(spec: PotentialSpec, r):
    """Combined derivative beta + pi of the full well and its derivative."""
    r = spec.check_domain(r)
    return spec.beta(r) + spec.pi(r), spec.dbeta(r) + spec.dpi(r)


@np.errstate(over="ignore", invalid="ignore")
def resolvent(spec: PotentialSpec, eps: float, r, tol: float = 1e-12, max_iter: int = 100):
    """Solve s + eps * beta(s) = r for s, elementwise.

    Safeguarded Newton: iterates are confined to a sign-changing bracket
    strictly inside the domain and fall back to bisection whenever a Newton
    step leaves it.  Converges to |residual| <= tol, or to a bracket of
    machine width when the root is closer to a domain end than floating
    point can resolve.
    """
    if not (eps > 0 and np.isfinite(eps)):
        raise ValueError("eps must be positive and finite")
    r_in = np.asarray(r, dtype=float)
    scalar = r_in.ndim == 0
    rr = np.atleast_1d(r_in).astype(float).ravel()
    lo, hi = spec.domain

    # establish per-component brackets [a, b] with g(a) <= 0 <= g(b),
    # where g(s) = s + eps beta(s) - r is strictly increasing
    if np.isfinite(lo):
        step = np.full_like(rr, (hi - lo) / 4 if np.isfinite(hi) else 1.0)
        a = lo + step
        for _ in range(200):
            bad = a + eps * spec.beta(a) - rr > 0
            if not bad.any():
                break
            step = np.where(bad, step / 2, step)
            a = np.where(bad, np.maximum(lo + step, np.nextafter(lo, hi)), a)
            if np.all(a[bad] == np.nextafter(lo, hi)):
                break
    else:
        a = np.minimum(rr, 0.0) - 1.0
        for _ in range(200):
            bad = a + eps * spec.beta(a) - rr > 0
            if not bad.any():
                break
            a = np.where(bad, 2.0 * a - 1.0, a)
    if np.isfinite(hi):
        step = np.full_like(rr, (hi - lo) / 4 if np.isfinite(lo) else 1.0)
        b = hi - step
        for _ in range(200):
            bad = b + eps * spec.beta(b) - rr < 0
            if not bad.any():
                break
            step = np.where(bad, step / 2, step)
            b = np.where(bad, np.minimum(hi - step, np.nextafter(hi, lo)), b)
            if np.all(b[bad] == np.nextafter(hi, lo)):
                break
    else:
        b = np.maximum(rr, 0.0) + 1.0
        for _ in range(200):
            bad = b + eps * spec.beta(b) - rr < 0
            if not bad.any():
                break
            b = np.where(bad, 2.0 * b + 1.0, b)

    s = 0.5 * (a + b)
    done = np.zeros_like(rr, dtype=bool)
    for _ in range(max_iter):
        gs = s + eps * spec.beta(s) - rr
        done |= np.abs(gs) <= tol
        width = b - a
        done |= width <= 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(s))
        if done.all():
            break
        pos = gs > 0
        b = np.where(~done & pos, s, b)
        a = np.where(~done & ~pos, s, a)
        ds = -gs / (1.0 + eps * spec.dbeta(s))
        cand = s + ds
        inside = (cand > a) & (cand < b)
        s = np.where(done, s, np.where(inside, cand, 0.5 * (a + b)))
    else:
        gs = s + eps * spec.beta(s) - rr
        width = b - a
        stuck = (np.abs(gs) > tol) & (
            width > 4.0 * np.finfo(float).eps * np.maximum(1.0, np.abs(s))
        )
        if stuck.any():
            raise ResolventError(
                f"resolvent failed to converge for {int(stuck.sum())} entries"
            )
    out = s.reshape(np.atleast_1d(r_in).shape)
    return float(out[0]) if scalar else out.reshape(r_in.shape)


def yosida(spec: PotentialSpec, eps: float, r, tol: float = 1e-12, max_iter: int = 100):
    """Yosida approximation (r - resolvent(r)) / eps of the monotone part."""
    r = np.asarray(r, dtype=float)
    s = resolvent(spec, eps, r, tol=tol, max_iter=max_iter)
    y = (r - s) / eps
    return float(y) if r.ndim == 0 else y


def yosida_envelope(spec: PotentialSpec, eps: float, r, tol: float = 1e-12, max_iter: int = 100):
    """Smoothed convex primitive: beta_hat(resolvent) + eps/2 * yosida^2.

    This closed form of the infimal-convolution envelope lies between 0 and
    beta_hat and has the Yosida approximation as derivative, which is what
    the energy bookkeeping needs.
    """
    r = np.asarray(r, dtype=float)
    s = resolvent(spec, eps, r, tol=tol, max_iter=max_iter)
    y = (r - s) / eps
    env = spec.beta_hat(np.asarray(s, dtype=float)) + 0.5 * eps * y * y
    return float(env) if r.ndim == 0 else env


# --- smooth cutoff for the truncated latent heat ---------------------------
#
# Plateau 1 on |y| <= 1, plateau 0 on |y| >= 2, C^infinity in between via the
# standard exp(-1/x) transition kernel.


def _kernel(x):
    x = np.asarray(x, float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def _dkernel(x):
    x = np.asarray(x, float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos]) / x[pos] ** 2
    return out


def _d2kernel(x):
    x = np.asarray(x, float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos]) * (1.0 - 2.0 * x[pos]) / x[pos] ** 4
    return out


def smooth_cutoff(y, order: int = 0):
    """C^inf cutoff equal to 1 on |y| <= 1 and 0 on |y| >= 2.

    order 0/1/2 selects the value or the first or second derivative in y.
    """
    y = np.asarray(y, float)
    s = np.abs(y)
    u, v = _kernel(2.0 - s), _kernel(s - 1.0)
    d = u + v
    if order == 0:
        return u / d
    mid = (s > 1.0) & (s < 2.0)
    out = np.zeros_like(s)
    du, dv = -_dkernel(2.0 - s), _dkernel(s - 1.0)
    if order == 1:
        out[mid] = ((du * v - u * dv) / d**2)[mid]
        return out * np.sign(y)
    if order == 2:
        d2u, d2v = _d2kernel(2.0 - s), _d2kernel(s - 1.0)
        num = (d2u * v - u * d2v) * d - 2.0 * (du * v - u * dv) * (du + dv)
        out[mid] = (num / d**3)[mid]
        return out
    raise ValueError("order must be 0, 1, or 2")


def lambda_trunc(spec: PotentialSpec, eps: float, r):
    """Truncated latent-heat primitive and its derivative.

    The primitive is lam_hat(r) * cutoff(eps r); the returned derivative is
    exact: lam(r) * cutoff(eps r) + eps * lam_hat(r) * cutoff'(eps r).
    """
    r = np.asarray(r, float)
    z = smooth_cutoff(eps * r)
    dz = smooth_cutoff(eps * r, order=1)
    value = spec.lam_hat(r) * z
    deriv = spec.lam(r) * z + eps * spec.lam_hat(r) * dz
    return value, deriv


def _lambda_trunc_second(spec: PotentialSpec, eps: float, r):
    # second derivative of the truncated primitive, for linearization
    r = np.asarray(r, float)
    z = smooth_cutoff(eps * r)
    dz = smooth_cutoff(eps * r, order=1)
    d2z = smooth_cutoff(eps * r, order=2)
    return spec.dlam(r) * z + 2.0 * eps * spec.lam(r) * dz + eps**2 * spec.lam_hat(r) * d2z


@dataclass(frozen=True)
class Nonlinearity:
    """Per-run effective nonlinear functions, direct or Yosida-smoothed.

    ``beta_pair(r)`` returns (value, derivative) of the effective monotone
    part; ``guard`` is the open confinement interval when the direct singular
    derivative is in use, else None.
    """

    beta_pair: Callable
    beta_hat: Callable
    pi: Callable
    dpi: Callable
    lam: Callable
    dlam: Callable
    guard: tuple[float, float] | None


def effective_nonlinearity(spec: PotentialSpec, reg: Regularization | None = None) -> Nonlinearity:
    """Bundle the nonlinear functions a solver run actually evaluates."""
    if reg is None:
        guard = spec.domain if np.isfinite(spec.domain).all() else None
        return Nonlinearity(
            beta_pair=lambda r: (spec.beta(r), spec.dbeta(r)),
            beta_hat=spec.beta_hat,
            pi=spec.pi,
            dpi=spec.dpi,
            lam=spec.lam,
            dlam=spec.dlam,
            guard=guard,
        )

    eps, tol, cap = reg.eps, reg.resolvent_tol, reg.max_iter

    def beta_pair(r):
        r = np.asarray(r, float)
        s = resolvent(spec, eps, r, tol=tol, max_iter=cap)
        val = (r - s) / eps
        ds = spec.dbeta(s)
        return val, ds / (1.0 + eps * ds)

    def lam_eff(r):
        return lambda_trunc(spec, eps, r)[1]

    return Nonlinearity(
        beta_pair=beta_pair,
        beta_hat=lambda r: yosida_envelope(spec, eps, r, tol=tol, max_iter=cap),
        pi=spec.pi,
        dpi=spec.dpi,
        lam=lam_eff,
        dlam=lambda r: _lambda_trunc_second(spec, eps, r),
        guard=None,
    )
