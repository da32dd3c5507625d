"""Carrier-closed scalar oscillator: turning points, period, action, support
sampling and the pendulum closed-form oracle.

The support is sampled through the regular phase coordinate delta = A*sin(theta)
with midpoint nodes, which keeps the period and action integrands smooth across
the turning points. The branch rate is reconstructed from the energy level, so
the retained support defect measures floating-point error only; the independent
check is the event-integrated closed-channel period.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import cos, pi, sin, sqrt

import numpy as np

from .kernel import EventSpec, integrate
from .model_2seg import Params2Seg, closed_rhs_2seg, domain_check, eval_coeffs

__all__ = [
    "ScalarSupport", "build_support", "closed_period_ode", "pendulum_oracle",
    "agm_elliptic_K", "agm_elliptic_E", "SupportError",
]


class SupportError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScalarSupport:
    """Carrier-closed periodic internal oscillation at one energy level."""

    amplitude: float
    E_perp: float
    theta: np.ndarray
    delta: np.ndarray
    sigma: np.ndarray
    dt: np.ndarray
    T_L: float
    J_L: float
    R_supp: float

    def section_rate(self, p: Params2Seg) -> float:
        """Positive branch rate at delta = 0 on this energy level."""
        c0 = eval_coeffs(p, 0.0)
        return sqrt(2.0 * (self.E_perp - c0.U) / c0.Meff)


def build_support(p: Params2Seg, A: float, n_theta: int = 4096) -> ScalarSupport:
    """Midpoint-sampled closed support at turning amplitude A.

    The well must be simple on [-A, A]: U(A) > U(delta) strictly inside.
    """
    if A <= 0.0:
        raise SupportError("amplitude must be positive")
    cA = eval_coeffs(p, A)
    E = cA.U

    dtheta = 2.0 * pi / n_theta
    theta = (np.arange(n_theta) + 0.5) * dtheta
    delta = A * np.sin(theta)
    sigma = np.empty(n_theta)
    dt = np.empty(n_theta)
    p_of = np.empty(n_theta)
    resid = np.empty(n_theta)
    for j, (th, d) in enumerate(zip(theta, delta)):
        rep = domain_check(p, d)
        if not rep.ok:
            from .kernel import DomainExit
            raise DomainExit(rep.guard)
        c = eval_coeffs(p, d)
        gap = E - c.U
        if gap <= 0.0:
            raise SupportError("multi-well-unsupported")
        s_abs = sqrt(2.0 * gap / c.Meff)
        sigma[j] = s_abs if cos(th) > 0 else -s_abs
        dt[j] = abs(A * cos(th)) * dtheta / s_abs
        p_of[j] = sqrt(2.0 * c.Meff * gap)
        resid[j] = abs(0.5 * c.Meff * sigma[j] ** 2 + c.U - E)

    T_L = float(np.sum(dt))
    # loop action: the full theta circle traverses the closed loop once,
    # covering each angle range on both rate branches.
    J_L = float(np.sum(p_of * np.abs(A * np.cos(theta)) * dtheta) / (2.0 * pi))
    R_supp = float(resid.max())

    return ScalarSupport(amplitude=A, E_perp=E, theta=theta, delta=delta,
                         sigma=sigma, dt=dt, T_L=T_L, J_L=J_L, R_supp=R_supp)


def closed_period_ode(p: Params2Seg, A: float, rtol: float = 1e-12) -> float:
    """Independent period oracle: event-integrated closed transverse field.

    Starts at delta = 0 with the positive branch rate for the energy level
    U(A) and integrates to the next upward crossing of delta = 0.
    """
    E = eval_coeffs(p, A).U
    c0 = eval_coeffs(p, 0.0)
    sigma0 = sqrt(2.0 * (E - c0.U) / c0.Meff)
    ev = EventSpec(fn=lambda y: y[0], direction=+1, skip_initial=True,
                   name="section")
    traj = integrate(lambda t, y: closed_rhs_2seg(p, y), [0.0, sigma0],
                     horizon=1e3, events=[ev], rtol=rtol, atol=rtol)
    if traj.event_time is None:
        raise SupportError("no-return")
    return float(traj.event_time)


def agm_elliptic_K(k: float, tol: float = 1e-15) -> float:
    """Complete elliptic integral of the first kind by AGM iteration."""
    if not 0.0 <= k < 1.0:
        raise ValueError("modulus must satisfy 0 <= k < 1")
    a, b = 1.0, sqrt(1.0 - k * k)
    while abs(a - b) > tol * a:
        a, b = 0.5 * (a + b), sqrt(a * b)
    return pi / (2.0 * a)


def agm_elliptic_E(k: float, tol: float = 1e-15) -> float:
    """Complete elliptic integral of the second kind by AGM with c-sum."""
    if not 0.0 <= k < 1.0:
        raise ValueError("modulus must satisfy 0 <= k < 1")
    a, b, c = 1.0, sqrt(1.0 - k * k), k
    csum = 0.5 * c * c
    pow2 = 1.0
    while abs(c) > tol:
        a, b, c = 0.5 * (a + b), sqrt(a * b), 0.5 * (a - b)
        pow2 *= 2.0
        csum += 0.5 * pow2 * c * c
    K = pi / (2.0 * a)
    return K * (1.0 - csum)


def pendulum_oracle(k: float, m: float = 1.0, ell: float = 1.0, g: float = 1.0):
    """Closed-form libration period and action of the gravity pendulum.

    k = sin(theta_max / 2) is the modulus below the separatrix. Returns
    (T, J) built from internally implemented complete elliptic integrals.
    """
    if k >= 1.0:
        raise ValueError("above-separatrix")
    if k < 0.0:
        raise ValueError("modulus must be nonnegative")
    K = agm_elliptic_K(k)
    E = agm_elliptic_E(k)
    T = 4.0 * sqrt(ell / g) * K
    J = (8.0 * m * ell * ell * sqrt(g / ell) / pi) * (E - (1.0 - k * k) * K)
    return T, J


def pendulum_quadrature(k: float, m: float = 1.0, ell: float = 1.0,
                        g: float = 1.0):
    """Independent (T, J) by adaptive quadrature of the action integrals.

    The turning-point singularities are removed by the phase substitution
    theta = theta_max * sin(phi), leaving smooth integrands.
    """
    from math import asin
    from scipy.integrate import quad
    if k == 0.0:
        return 2.0 * pi * sqrt(ell / g), 0.0
    theta_max = 2.0 * asin(k)
    E_tot = m * g * ell * (1.0 - cos(theta_max))
    M = m * ell * ell

    def gap(phi):
        return E_tot - m * g * ell * (1.0 - cos(theta_max * np.sin(phi)))

    Tq = 4.0 * quad(
        lambda phi: theta_max * np.cos(phi) * sqrt(M / (2.0 * gap(phi))),
        0.0, pi / 2.0, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    Jq = (2.0 / pi) * quad(
        lambda phi: theta_max * np.cos(phi) * sqrt(2.0 * M * gap(phi)),
        0.0, pi / 2.0, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    return Tq, Jq
