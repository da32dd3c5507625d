"""Opened finite-speed flow of the two-segment system: oriented section
returns with exchange and speed accumulators, the exchange-return residual,
the scaled section solve, continuation in mean speed, and pose reconstruction.

For prescribed nonzero mean speed vbar the flow is integrated in oriented
section variables Y = (delta, zeta, u, Q) with h = 1/|vbar|, s = sgn(vbar);
the physical rates are sigma = s*zeta, nu = s*u (normalized speed), q_y = s*Q
(yaw-speed product) and omega = h*Q/u. A cycle is accepted only when the
four-row residual (exchange integral, speed return, yaw-product return,
mean-speed normalization) closes at the section fixed point.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import cos, exp, log, sin, sqrt

import numpy as np

from .kernel import (DomainExit, EventSpec, KernelError, Trajectory,
                     damped_least_squares, integrate)
from .model_2seg import (Params2Seg, domain_check, eval_coeffs,
                         reduced_energy_2seg)
from .support_2seg import ScalarSupport, build_support

__all__ = [
    "SectionPoint", "ExchangeResidual", "AcceptedCycle2Seg", "CycleRejected",
    "oriented_rhs", "integrate_to_return", "assemble_residual", "solve_cycle",
    "continue_in_speed", "reconstruct_pose_2seg",
]

TAU_EX_DEFAULT = 1e-10
DENOM_MARGIN = 1e-10
DEFAULT_SEED_AMPLITUDE = 0.85   # inside the basin of the default branch


class CycleRejected(RuntimeError):
    """A section solve failed a guard, the solver, or the residual gate."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}" + (f": {detail}" if detail else ""))
        self.reason = reason


@dataclass(frozen=True)
class SectionPoint:
    """Oriented section state at delta = 0 with speed sign and scale."""

    zeta: float
    u: float
    Q: float
    s: int
    h: float

    def __post_init__(self):
        if self.zeta <= 0.0 or self.u <= 0.0:
            raise ValueError("section point requires zeta > 0 and u > 0")

    @property
    def vbar(self) -> float:
        return self.s / self.h

    def state(self) -> np.ndarray:
        return np.array([0.0, self.zeta, self.u, self.Q])

    def physical(self) -> tuple[float, float, float, float]:
        """(sigma, v, omega, q_y) recovered from the oriented variables."""
        sigma = self.s * self.zeta
        v = self.s * self.u / self.h
        omega = self.h * self.Q / self.u
        q_y = self.s * self.Q
        return sigma, v, omega, q_y


@dataclass(frozen=True)
class ExchangeResidual:
    """Exchange-return rows, unscaled, with the invertible row weights."""

    I_POE: float
    C_u: float
    C_Q: float
    S: float
    weights: tuple[float, float, float, float]

    @property
    def rows(self) -> np.ndarray:
        return np.array([self.I_POE, self.C_u, self.C_Q, self.S])

    @property
    def scaled_rows(self) -> np.ndarray:
        return self.rows * np.asarray(self.weights)

    @property
    def scaled_norm(self) -> float:
        return float(np.linalg.norm(self.scaled_rows))


@dataclass
class AcceptedCycle2Seg:
    """Certified opened cycle at one signed mean speed."""

    Y0: SectionPoint
    tau: float
    residual: ExchangeResidual
    trajectory: Trajectory
    vbar: float
    energy_drift: float
    Y_return: np.ndarray
    delta_g: tuple[float, float, float] | None = None

    def certificate_row(self) -> dict:
        dg = self.delta_g or (float("nan"),) * 3
        return {
            "vbar": self.vbar, "tau": self.tau,
            "I_POE": self.residual.I_POE, "C_u": self.residual.C_u,
            "C_Q": self.residual.C_Q, "S": self.residual.S,
            "scaled_norm": self.residual.scaled_norm,
            "dx": dg[0], "dy": dg[1], "dtheta": dg[2],
        }


def _rows(p: Params2Seg, delta: float, zeta: float, u: float, Q: float,
          h: float, s: int):
    """Oriented transport rows (dzeta, du, dQ)/dtheta and the exchange power.

    Evaluates the exact finite-speed rows at the physical substitution
    sigma = s*zeta, nu = s*u, q_y = s*Q, omega = h*q_y/nu.
    """
    c = eval_coeffs(p, delta)
    if abs(c.Delta) < DENOM_MARGIN:
        raise DomainExit("Delta-singular")
    if c.Meff <= DENOM_MARGIN:
        raise DomainExit("Meff-nonpositive")
    sigma = s * zeta
    nu = s * u
    q_y = s * Q
    if abs(nu) < DENOM_MARGIN:
        raise DomainExit("nu-zero")
    omega = h * q_y / nu

    F_sigma = (c.r * (q_y - c.rho * (sigma + omega) ** 2) - c.Uprime) / c.Meff

    lam = c.Gy / c.Delta * (nu - 2.0 * h * c.rho * sigma)
    phi = nu * (-(c.B12 - c.rho * c.rho) / c.Delta * F_sigma
                + c.rho * c.Gy / c.Delta * sigma * sigma)
    E_geom = c.B11 * (c.Gy - p.alpha) + p.alpha * c.rho * c.rho
    R_nat = (c.rho * (c.B11 - c.B12) * F_sigma
             + E_geom * (2.0 * omega * sigma + sigma * sigma)
             + c.B11 * c.Gy * omega * omega) / c.Delta
    F_qy = (phi + h * h / nu * q_y * R_nat - lam * q_y) / h

    denom = 1.0 + h * h * c.rho * q_y / (nu * nu)
    if abs(denom) < DENOM_MARGIN:
        raise DomainExit("carrier-denominator")
    F_nu = (h * c.rho * F_sigma + h * (c.Gy - p.alpha) * sigma * sigma
            + h * h * c.rho / nu * F_qy
            + 2.0 * h * h * (c.Gy - p.alpha) / nu * q_y * sigma
            + h ** 3 * c.Gy / (nu * nu) * q_y * q_y) / denom

    F_exch = c.r * (q_y - c.rho * (sigma + omega) ** 2) \
        + 0.5 * c.MeffPrime * sigma * sigma
    P_poe = sigma * F_exch
    return F_sigma, F_nu, F_qy, P_poe


def oriented_rhs(p: Params2Seg, Y: np.ndarray, h: float, s: int) -> np.ndarray:
    """Oriented-time derivative of Y = (delta, zeta, u, Q)."""
    delta, zeta, u, Q = Y
    F_sigma, F_nu, F_qy, _ = _rows(p, delta, zeta, u, Q, h, s)
    return np.array([zeta, F_sigma, F_nu, F_qy])


def poe_power_oriented(p: Params2Seg, Y: np.ndarray, h: float, s: int) -> float:
    """Oriented-time exchange-power integrand s * P_poe."""
    delta, zeta, u, Q = Y
    _, _, _, P_poe = _rows(p, delta, zeta, u, Q, h, s)
    return s * P_poe


def section_Eperp(p: Params2Seg, delta: float, zeta: float) -> float:
    """Transverse storage in oriented variables (sign-free in zeta)."""
    c = eval_coeffs(p, delta)
    return 0.5 * c.Meff * zeta * zeta + c.U


def oriented_to_internal(Y: np.ndarray, h: float, s: int) -> np.ndarray:
    """Map oriented (delta, zeta, u, Q) to internal (delta, v, omega, sigma)."""
    delta, zeta, u, Q = Y
    return np.array([delta, s * u / h, h * Q / u, s * zeta])


def integrate_to_return(p: Params2Seg, Y0: SectionPoint,
                        horizon: float | None = None,
                        rtol: float = 1e-12, atol: float = 1e-12):
    """Integrate the oriented flow to the first positive section return.

    Returns (Y_plus, tau, I_POE, I_u, trajectory). The exchange and speed
    integrals accumulate alongside the state under the same error control.
    """
    if horizon is None:
        c0 = eval_coeffs(p, 0.0)
        horizon = 50.0 * 2.0 * np.pi * sqrt(max(c0.Meff, 1e-12) / max(p.k2, 1e-12))
    ev = EventSpec(fn=lambda Y: Y[0], direction=+1, skip_initial=True,
                   tolerance=1e-12, arm_threshold=1e-9, name="section")
    traj = integrate(
        lambda t, Y: oriented_rhs(p, Y, Y0.h, Y0.s),
        Y0.state(), horizon, events=[ev],
        accumulators=[
            ("I_POE", lambda t, Y: poe_power_oriented(p, Y, Y0.h, Y0.s)),
            ("I_u", lambda t, Y: Y[2]),
        ],
        rtol=rtol, atol=atol)
    if traj.event_time is None:
        raise CycleRejected("no-return")
    Y_plus = traj.event_state
    if Y_plus[1] <= 0.0:
        raise CycleRejected("wrong-orientation")
    tau = traj.event_time
    return Y_plus, tau, traj.acc["I_POE"][-1], traj.acc["I_u"][-1], traj


def assemble_residual(Y0: SectionPoint, Y_plus: np.ndarray, tau: float,
                      I_POE: float, I_u: float) -> ExchangeResidual:
    """Four-row exchange-return residual with the standard row scaling."""
    C_u = Y_plus[2] - Y0.u
    C_Q = Y_plus[3] - Y0.Q
    S = I_u / tau - 1.0
    e_sc = max(1.0, abs(I_POE))
    u_sc = max(1.0, abs(Y0.u))
    Q_sc = max(1.0, abs(Y0.Q))
    return ExchangeResidual(I_POE=I_POE, C_u=C_u, C_Q=C_Q, S=S,
                            weights=(1.0 / e_sc, 1.0 / u_sc, 1.0 / Q_sc, 1.0))


def _seed_section_point(p: Params2Seg, vbar: float,
                        seed: ScalarSupport | SectionPoint | float) -> SectionPoint:
    s = 1 if vbar > 0 else -1
    h = 1.0 / abs(vbar)
    if isinstance(seed, SectionPoint):
        return SectionPoint(zeta=seed.zeta, u=seed.u, Q=seed.Q, s=s, h=h)
    if isinstance(seed, ScalarSupport):
        zeta0 = seed.section_rate(p)
        return SectionPoint(zeta=zeta0, u=1.0, Q=0.0, s=s, h=h)
    # bare amplitude
    sup = build_support(p, float(seed), n_theta=512)
    return SectionPoint(zeta=sup.section_rate(p), u=1.0, Q=0.0, s=s, h=h)


def solve_cycle(p: Params2Seg, vbar: float,
                seed: ScalarSupport | SectionPoint | float,
                tau_ex: float = TAU_EX_DEFAULT,
                rtol: float = 1e-12,
                max_iter: int = 100) -> AcceptedCycle2Seg:
    """Solve the scaled exchange-return problem at one signed mean speed.

    The section unknown is (a, b, Q0) with Y0 = (0, e^a, e^b, Q0), which
    keeps the crossing rate and normalized speed positive. All four scaled
    rows are solved jointly by damped least squares with a trust window on
    the rate unknown; the window keeps the iteration off the degenerate
    zero-amplitude solutions, which close every row trivially but carry no
    oscillation. Acceptance requires the domain guards, a located oriented
    return with positive crossing, and scaled residual norm at or below
    tau_ex; unscaled rows are kept as the mechanical diagnostics.
    """
    if vbar == 0.0:
        raise CycleRejected("zero-mean-speed")
    sp0 = _seed_section_point(p, vbar, seed)
    s, h = sp0.s, sp0.h
    a0 = log(sp0.zeta)

    def rows_at(Y0: SectionPoint):
        Ypl, tau_, I_POE_, I_u_, traj_ = integrate_to_return(p, Y0, rtol=rtol,
                                                             atol=rtol)
        return assemble_residual(Y0, Ypl, tau_, I_POE_, I_u_), Ypl, tau_, traj_

    def residual(x):
        a, b, Q0 = x
        if abs(a - a0) > 1.0 or abs(b) > 6.0 or abs(Q0) > 1e3:
            return np.full(4, 1e3)
        Yc = SectionPoint(zeta=exp(a), u=exp(b), Q=Q0, s=s, h=h)
        r, _, _, _ = rows_at(Yc)
        return r.scaled_rows

    last_error: Exception | None = None
    for Q0_try in (sp0.Q, sp0.Q - 0.1 * sp0.zeta * s, sp0.Q + 0.1 * sp0.zeta * s):
        try:
            sol = damped_least_squares(
                residual, np.array([a0, log(sp0.u), Q0_try]),
                tol=tau_ex * 0.3, max_iter=max_iter, fd_step=1e-6, lam0=1e-5)
        except DomainExit as exc:
            last_error = CycleRejected("domain-exit", exc.guard)
            continue
        except CycleRejected as exc:
            last_error = exc
            continue
        except KernelError as exc:
            last_error = CycleRejected("res-open", str(exc))
            continue
        a, b, Q0 = sol.x
        Y0 = SectionPoint(zeta=exp(a), u=exp(b), Q=Q0, s=s, h=h)
        res, Y_plus, tau, traj = rows_at(Y0)
        if res.scaled_norm > tau_ex:
            last_error = CycleRejected(
                "res-open", f"scaled norm {res.scaled_norm:.3e} > {tau_ex:.1e}")
            continue
        if Y_plus[1] <= 0.0:
            last_error = CycleRejected("wrong-orientation")
            continue
        drift = _energy_drift(p, traj, Y0)
        return AcceptedCycle2Seg(Y0=Y0, tau=tau, residual=res, trajectory=traj,
                                 vbar=vbar, energy_drift=drift,
                                 Y_return=Y_plus)
    raise last_error if last_error is not None else CycleRejected("res-open")


def _energy_drift(p: Params2Seg, traj: Trajectory, Y0: SectionPoint) -> float:
    """Relative reduced-energy drift along the oriented trajectory."""
    zs = [oriented_to_internal(traj.y[i], Y0.h, Y0.s)
          for i in range(0, traj.t.size, max(1, traj.t.size // 64))]
    Es = np.array([reduced_energy_2seg(p, z) for z in zs])
    E0 = reduced_energy_2seg(p, oriented_to_internal(traj.y[0], Y0.h, Y0.s))
    scale = max(abs(E0), 1e-30)
    return float(np.max(np.abs(Es - E0)) / scale)


def continue_in_speed(p: Params2Seg, vbar_grid, seed,
                      tau_ex: float = TAU_EX_DEFAULT,
                      rtol: float = 1e-12):
    """Warm-started sweep over signed mean speeds.

    A solved point is only a predictor for its neighbor; every reported
    point is re-certified by the full residual gate. Rejections are recorded
    and the sweep proceeds.
    """
    accepted: list[AcceptedCycle2Seg] = []
    rejections: list[tuple[float, str]] = []
    warm: dict[int, SectionPoint] = {}
    for vbar in vbar_grid:
        s = 1 if vbar > 0 else -1
        use_seed = warm.get(s, seed)
        try:
            cyc = solve_cycle(p, vbar, use_seed, tau_ex=tau_ex, rtol=rtol)
        except CycleRejected as exc:
            if s in warm:
                # retry once from the cold seed
                try:
                    cyc = solve_cycle(p, vbar, seed, tau_ex=tau_ex, rtol=rtol)
                except CycleRejected as exc2:
                    rejections.append((vbar, exc2.reason))
                    continue
            else:
                rejections.append((vbar, exc.reason))
                continue
        accepted.append(cyc)
        warm[s] = cyc.Y0
    return accepted, rejections


def reconstruct_pose_2seg(p: Params2Seg, cycle: AcceptedCycle2Seg,
                          pose0: tuple[float, float, float] = (0.0, 0.0, 0.0),
                          rtol: float = 1e-12) -> tuple[float, float, float]:
    """Planar pose increment over one accepted cycle.

    Integrates the group kinematics along the certified oriented trajectory;
    for negative mean speed the oriented parametrization runs physical time
    backwards, so the increment is inverted before reporting.
    """
    h, s = cycle.Y0.h, cycle.Y0.s
    traj = cycle.trajectory

    def rhs(t, g):
        Y = traj.state(t)
        u = Y[2]
        v_s = u / h                 # s * v
        w_s = s * h * Y[3] / u      # s * omega
        return np.array([v_s * cos(g[2]), v_s * sin(g[2]), w_s])

    g_traj = integrate(rhs, [0.0, 0.0, 0.0], cycle.tau, rtol=rtol, atol=rtol)
    x, y, th = g_traj.y[-1]
    if s < 0:
        # G = (x, y, th) is g(-tau); the physical increment is its inverse
        ct, st = cos(-th), sin(-th)
        x, y, th = -(ct * x - st * y), -(st * x + ct * y), -th
    x0, y0, th0 = pose0
    # left-translate by the starting pose: rotate the body-frame increment
    c0, s0 = cos(th0), sin(th0)
    dg = (c0 * x - s0 * y, s0 * x + c0 * y, th)
    cycle.delta_g = dg
    return dg
