"""Opened-channel three-segment pipeline: carrier lifts, cycle
representations (multiple shooting and Hermite-Simpson collocation),
continuation charts, candidate transformations, and the final certificate
stack with the same-physical pairing.

Certification is representation-honest: the reported cycle is the solved
discrete representation together with its piecewise-Hermite reconstruction;
return, carrier, storage-exchange and displacement rows are evaluated on
that reconstruction while the dynamics-defect row reports how far the
reconstruction sits from the exact internal field. The defect row is the
only row whose magnitude reflects mesh resolution, and it is reported, not
hidden.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import cos, sin

import numpy as np
import scipy.linalg as sla

from .kernel import DomainExit, KernelError, integrate
from .model_3seg import (Params3Seg, S_TIME_REVERSAL, carrier_channel,
                         closed_leaf_state, eperp_3seg, eperp_gradient,
                         eval_f_int, f_perp)
from .modal_3seg import (ModalFeatures, ParentModes, TransverseSupport3Seg,
                         compute_modal_features)

__all__ = [
    "LiftedCycle", "LiftOpen", "lift_support", "shooting_residual",
    "collocation_residual", "solve_collocation", "rhs_check", "poe_row",
    "ContinuationChart", "continuation_step", "ap_cover", "cover_project",
    "time_reversal_candidate", "reversal_compatibility_defect",
    "mobility_probe", "MobilityScores", "CertThresholds", "FinalCertificate",
    "assemble_final_certificate", "paired_certificate", "PairReport",
    "reconstruct_pose_3seg",
]


class LiftOpen(RuntimeError):
    """An opened-cycle candidate solve failed to converge."""


# ---------------------------------------------------------------------------
# cycle representation


@dataclass
class LiftedCycle:
    """Discrete periodic representation of an opened internal cycle.

    nodes: (N+1, 6) mesh states with nodes[N] closing onto nodes[0];
    the dense reconstruction is the piecewise cubic Hermite interpolant
    through (nodes, f_int(nodes)).
    """

    nodes: np.ndarray
    T: float
    sector: str
    kind: str = "hs"
    R_rep: float = float("nan")      # representation residual at the solution
    f_nodes: np.ndarray | None = None

    def __post_init__(self):
        if self.T <= 0.0:
            raise ValueError("period must be positive")

    @property
    def N(self) -> int:
        return self.nodes.shape[0] - 1

    def ensure_f(self, p: Params3Seg) -> np.ndarray:
        if self.f_nodes is None or self.f_nodes.shape != self.nodes.shape:
            self.f_nodes = np.array([eval_f_int(p, z) for z in self.nodes])
        return self.f_nodes

    def state(self, p: Params3Seg, t: float) -> np.ndarray:
        """Hermite reconstruction z_rep(t) on [0, T]."""
        f = self.ensure_f(p)
        N = self.N
        dt = self.T / N
        tt = min(max(t, 0.0), self.T)
        i = min(int(tt / dt), N - 1)
        s = (tt - i * dt) / dt
        h00 = 2 * s ** 3 - 3 * s ** 2 + 1
        h10 = s ** 3 - 2 * s ** 2 + s
        h01 = -2 * s ** 3 + 3 * s ** 2
        h11 = s ** 3 - s ** 2
        return (h00 * self.nodes[i] + h10 * dt * f[i]
                + h01 * self.nodes[i + 1] + h11 * dt * f[i + 1])

    def derivative(self, p: Params3Seg, t: float) -> np.ndarray:
        """Time derivative of the reconstruction."""
        f = self.ensure_f(p)
        N = self.N
        dt = self.T / N
        tt = min(max(t, 0.0), self.T)
        i = min(int(tt / dt), N - 1)
        s = (tt - i * dt) / dt
        d00 = (6 * s ** 2 - 6 * s) / dt
        d10 = 3 * s ** 2 - 4 * s + 1
        d01 = (-6 * s ** 2 + 6 * s) / dt
        d11 = 3 * s ** 2 - 2 * s
        return (d00 * self.nodes[i] + d10 * f[i]
                + d01 * self.nodes[i + 1] + d11 * f[i + 1])

    def samples(self, p: Params3Seg, n: int = 512) -> np.ndarray:
        ts = np.linspace(0.0, self.T, n, endpoint=False)
        return np.array([self.state(p, t) for t in ts])

    def mean_speed(self, p: Params3Seg) -> float:
        """Exact mean of the reconstructed forward speed over the period."""
        f = self.ensure_f(p)
        N = self.N
        dt = self.T / N
        total = 0.0
        for i in range(N):
            total += 0.5 * dt * (self.nodes[i][2] + self.nodes[i + 1][2]) \
                + dt * dt / 12.0 * (f[i][2] - f[i + 1][2])
        return total / self.T

    def carrier_trace(self, p: Params3Seg, n: int = 257) -> np.ndarray:
        ts = np.linspace(0.0, self.T, n)
        return np.array([carrier_channel(p, self.state(p, t)) for t in ts])


# ---------------------------------------------------------------------------
# representation residuals


def shooting_residual(p: Params3Seg, nodes: np.ndarray, durations,
                      gauge_value: float = 0.0, rtol: float = 1e-12,
                      D_z: np.ndarray | None = None):
    """Multiple-shooting matching residual over m nodes.

    nodes: (m, 6); durations: (m,) positive segment lengths summing to the
    period. Returns (residual vector, R_ms) with segment rows scaled by the
    diagonal D_z, closed by the wrap row, plus the supplied gauge row.
    """
    nodes = np.asarray(nodes, dtype=float)
    durations = np.asarray(durations, dtype=float)
    m = nodes.shape[0]
    if durations.shape != (m,) or np.any(durations <= 0):
        raise ValueError("durations must be m positive segment lengths")
    if D_z is None:
        D_z = np.maximum(np.abs(nodes).max(axis=0), 1.0)
    rows = []
    for i in range(m):
        try:
            traj = integrate(lambda t, z: eval_f_int(p, z), nodes[i],
                             durations[i], rtol=rtol, atol=rtol)
        except (DomainExit, KernelError) as exc:
            raise LiftOpen(f"segment-blowup: segment {i}: {exc}")
        target = nodes[(i + 1) % m]
        rows.append((traj.y[-1] - target) / D_z)
    rows.append(np.array([gauge_value]))
    vec = np.concatenate(rows)
    return vec, float(np.linalg.norm(vec))


def hermite_simpson_defects(fun, Z: np.ndarray, T: float):
    """Hermite-Simpson interval defects of a mesh under a generic field.

    Returns (H, f, zm, fm): per-interval defects, node fields, interpolated
    midpoints and midpoint fields.
    """
    Z = np.asarray(Z, dtype=float)
    N = Z.shape[0] - 1
    dt = T / N
    f = np.array([fun(z) for z in Z])
    zm = 0.5 * (Z[:-1] + Z[1:]) + dt / 8.0 * (f[:-1] - f[1:])
    fm = np.array([fun(z) for z in zm])
    H = Z[1:] - Z[:-1] - dt / 6.0 * (f[:-1] + 4.0 * fm + f[1:])
    return H, f, zm, fm


def _hs_defects(p: Params3Seg, Z: np.ndarray, T: float):
    return hermite_simpson_defects(lambda z: eval_f_int(p, z), Z, T)


def collocation_residual(p: Params3Seg, Z: np.ndarray, T: float,
                         gauge_value: float = 0.0,
                         D_z: np.ndarray | None = None):
    """Hermite-Simpson defects, periodic closure, and gauge as one vector."""
    Z = np.asarray(Z, dtype=float)
    if Z.shape[0] - 1 < 4:
        raise ValueError("mesh needs at least 4 intervals")
    if D_z is None:
        D_z = np.maximum(np.abs(Z).max(axis=0), 1.0)
    H, f, zm, fm = _hs_defects(p, Z, T)
    vec = np.concatenate([(H / D_z).ravel(), (Z[-1] - Z[0]) / D_z,
                          [gauge_value]])
    return vec, float(np.linalg.norm(vec))


# ---------------------------------------------------------------------------
# collocation solver


def _fd_jac_f(p: Params3Seg, z: np.ndarray, h: float = 1e-7) -> np.ndarray:
    A = np.empty((6, 6))
    for k in range(6):
        e = np.zeros(6)
        e[k] = h * max(1.0, abs(z[k]))
        A[:, k] = (eval_f_int(p, z + e) - eval_f_int(p, z - e)) / (2.0 * e[k])
    return A


@dataclass
class ExtraRow:
    """Scalar chart row appended to the collocation system.

    kind selects the built-in row families; target and scale fix its zero.
    """

    kind: str                  # 'speed' | 'poe' | 'amplitude' | 'phase-blend'
    target: float = 0.0
    scale: float = 1.0
    sector: str = "IP"
    modes: ParentModes | None = None
    z_ref: np.ndarray | None = None
    alpha: float = 0.5
    weight: float = 1.0


def _extra_row_value(p: Params3Seg, row: ExtraRow, Z, T, f) -> float:
    N = Z.shape[0] - 1
    dt = T / N
    if row.kind == "speed":
        total = 0.0
        for i in range(N):
            total += 0.5 * dt * (Z[i][2] + Z[i + 1][2]) \
                + dt * dt / 12.0 * (f[i][2] - f[i + 1][2])
        return (total / T - row.target) / row.scale
    if row.kind == "poe":
        # line integral of the storage gradient along the reconstruction
        dE = eperp_3seg(p, Z[-1][:2], Z[-1][4:]) \
            - eperp_3seg(p, Z[0][:2], Z[0][4:])
        return (dE / T) / row.scale
    if row.kind == "amplitude":
        Q, _, _ = row.modes.modal_coords(Z[0][:2], Z[0][4:], row.sector)
        return (Q - row.target) / row.scale
    if row.kind == "phase-blend":
        zr = row.z_ref
        v_sc = max(abs(zr[2]), row.scale)
        _, P, _ = row.modes.modal_coords(Z[0][:2], Z[0][4:], row.sector)
        _, Pr, _ = row.modes.modal_coords(zr[:2], zr[4:], row.sector)
        p_sc = max(abs(Pr), row.scale)
        return row.alpha * (Z[0][2] - zr[2]) / v_sc \
            + (1.0 - row.alpha) * (P - Pr) / p_sc
    raise ValueError(f"unknown extra row kind '{row.kind}'")


def _extra_row_grad(p: Params3Seg, row: ExtraRow, Z, T, f, Af) -> np.ndarray:
    """Gradient of the extra row over the unknown vector (Z.ravel(), T)."""
    N = Z.shape[0] - 1
    dt = T / N
    nun = 6 * (N + 1) + 1
    g = np.zeros(nun)
    if row.kind == "speed":
        for i in range(N + 1):
            w_node = (dt if 0 < i < N else 0.5 * dt) / T / row.scale
            g[6 * i + 2] += w_node
            sgn = (1 if i < N else 0) - (1 if i > 0 else 0)
            g[6 * i:6 * i + 6] += (dt * dt / 12.0 * sgn / T / row.scale) \
                * Af[i][2, :]
        total = 0.0
        for i in range(N):
            total += dt * dt / 12.0 * (f[i][2] - f[i + 1][2])
        g[-1] = (total / T) / (T * row.scale) * 1.0
        # dominant T-dependence of the f-correction term only; the
        # trapezoid part of the mean is T-invariant
        return g
    if row.kind == "poe":
        gr0, gs0 = eperp_gradient(p, Z[0][:2], Z[0][4:])
        grN, gsN = eperp_gradient(p, Z[-1][:2], Z[-1][4:])
        g[0:2] = -gr0 / (T * row.scale)
        g[4:6] = -gs0 / (T * row.scale)
        g[6 * N:6 * N + 2] = grN / (T * row.scale)
        g[6 * N + 4:6 * N + 6] = gsN / (T * row.scale)
        dE = eperp_3seg(p, Z[-1][:2], Z[-1][4:]) \
            - eperp_3seg(p, Z[0][:2], Z[0][4:])
        g[-1] = -dE / (T * T * row.scale)
        return g
    if row.kind == "amplitude":
        u = row.modes.shape[row.sector]
        g[0:2] = (row.modes.M0 @ u) / row.scale
        return g
    if row.kind == "phase-blend":
        zr = row.z_ref
        v_sc = max(abs(zr[2]), row.scale)
        _, Pr, _ = row.modes.modal_coords(zr[:2], zr[4:], row.sector)
        p_sc = max(abs(Pr), row.scale)
        g[2] = row.alpha / v_sc
        u = row.modes.shape[row.sector]
        g[4:6] = (1.0 - row.alpha) * (row.modes.M0 @ u) / p_sc
        return g
    raise ValueError(row.kind)


def solve_collocation(p: Params3Seg, Z0: np.ndarray, T0: float,
                      extra_rows: tuple[ExtraRow, ...] = (),
                      defect_weight: float = 1.0,
                      tol: float = 5e-13, itmax: int = 60,
                      rcond: float = 1e-10,
                      D_z: np.ndarray | None = None):
    """Min-norm Gauss-Newton solve of the Hermite-Simpson cycle system.

    Unknowns are the mesh nodes and the period. With no extra rows the
    system is solved unpinned: phase and family directions are near-null
    and the least-squares step simply does not move along them, so the
    iteration lands on the discrete cycle nearest the seed. Weighted extra
    rows (speed, exchange, amplitude, phase) steer candidates; when they
    make the system inconsistent the defect rows absorb the residual,
    which the dynamics-defect certificate row then reports honestly.
    """
    Z = np.asarray(Z0, dtype=float).copy()
    T = float(T0)
    N = Z.shape[0] - 1
    if D_z is None:
        D_z = np.maximum(np.abs(Z).max(axis=0), 1.0)

    def system(Z, T):
        H, f, zm, fm = _hs_defects(p, Z, T)
        rows = [defect_weight * (H / D_z).ravel(),
                (Z[-1] - Z[0]) / D_z]
        for row in extra_rows:
            rows.append([row.weight * _extra_row_value(p, row, Z, T, f)])
        return np.concatenate(rows), f, zm, fm

    r, f, zm, fm = system(Z, T)
    best = np.linalg.norm(r)
    for it in range(itmax):
        nr = np.linalg.norm(r)
        if nr < tol:
            break
        dt = T / N
        Af = [_fd_jac_f(p, z) for z in Z]
        Am = [_fd_jac_f(p, z) for z in zm]
        nun = 6 * (N + 1) + 1
        nrows = 6 * N + 6 + len(extra_rows)
        Jm = np.zeros((nrows, nun))
        Winv = np.diag(1.0 / D_z)
        for i in range(N):
            dzm_dzi = 0.5 * np.eye(6) + dt / 8.0 * Af[i]
            dzm_dzi1 = 0.5 * np.eye(6) - dt / 8.0 * Af[i + 1]
            dH_dzi = -np.eye(6) - dt / 6.0 * (Af[i] + 4.0 * Am[i] @ dzm_dzi)
            dH_dzi1 = np.eye(6) - dt / 6.0 * (Af[i + 1]
                                              + 4.0 * Am[i] @ dzm_dzi1)
            Jm[6 * i:6 * i + 6, 6 * i:6 * i + 6] = \
                defect_weight * Winv @ dH_dzi
            Jm[6 * i:6 * i + 6, 6 * (i + 1):6 * (i + 1) + 6] = \
                defect_weight * Winv @ dH_dzi1
            dzm_dT = (f[i] - f[i + 1]) / (8.0 * N)
            dH_dT = (-(f[i] + 4.0 * fm[i] + f[i + 1]) / (6.0 * N)
                     - dt / 6.0 * 4.0 * (Am[i] @ dzm_dT))
            Jm[6 * i:6 * i + 6, -1] = defect_weight * (dH_dT / D_z)
        Jm[6 * N:6 * N + 6, 0:6] = -Winv
        Jm[6 * N:6 * N + 6, 6 * N:6 * N + 6] = Winv
        for k, row in enumerate(extra_rows):
            Jm[6 * N + 6 + k] = row.weight * _extra_row_grad(p, row, Z, T, f, Af)
        try:
            # gelsd: minimum-norm least squares, so the step does not wander
            # along the near-null phase and family directions
            dx, *_ = sla.lstsq(Jm, -r, cond=rcond, lapack_driver="gelsd")
        except Exception as exc:
            raise LiftOpen(f"lift-open: linear solve failed: {exc}")
        stepped = False
        for damp in range(20):
            step = dx * 0.5 ** damp
            Zn = Z + step[:-1].reshape(N + 1, 6)
            Tn = T + step[-1]
            if Tn <= 0.0:
                continue
            try:
                rn, fn, zmn, fmn = system(Zn, Tn)
            except (DomainExit, KernelError):
                continue
            if np.linalg.norm(rn) < nr:
                Z, T, r, f, zm, fm = Zn, Tn, rn, fn, zmn, fmn
                stepped = True
                break
        if not stepped:
            break
        best = min(best, np.linalg.norm(r))
    return Z, T, float(np.linalg.norm(r))


# ---------------------------------------------------------------------------
# lift


def lift_support(p: Params3Seg, support: TransverseSupport3Seg,
                 modes: ParentModes | None = None,
                 qc0=(0.0, 0.0), n_cover: int = 1, N: int = 192,
                 extra_rows: tuple[ExtraRow, ...] = (),
                 defect_weight: float = 1.0,
                 tol: float = 5e-12, itmax: int = 60,
                 rtol: float = 1e-12, seed_mode: str = "spectral",
                 D_z: np.ndarray | None = None) -> LiftedCycle:
    """Open the carrier channel over a transverse support and solve a cycle.

    The candidate mesh is the integrated opened trajectory over n_cover
    support periods from a turning configuration at the support's modal
    amplitude, lifted with carrier offset qc0. With seed_mode "spectral"
    the turning shape is the parent-mode direction at that amplitude; the
    carrier coupling deforms opened-cycle shapes away from closed-support
    shapes as speed grows, and the spectral configuration stays inside the
    opened basin. seed_mode "support" lifts the support's own minimal-rate
    sample instead, which is preferable near zero carrier offset. An
    unpinned solve recovers the nearest discrete cycle; weighted extra
    rows (speed, exchange, amplitude) steer the candidate when supplied.
    """
    if seed_mode == "spectral":
        if modes is None:
            raise ValueError("spectral seeding requires parent modes")
        u = modes.shape[support.sector]
        y_turn = np.r_[support.amplitude * u, 0.0, 0.0]
    elif seed_mode == "support":
        sup_traj = integrate(lambda t, y: f_perp(p, y), support.y0,
                             support.T, rtol=1e-11, atol=1e-11)
        ts = np.linspace(0.0, support.T, 257)
        ys = np.array([sup_traj.state(t) for t in ts])
        k = int(np.argmin(np.hypot(ys[:, 2], ys[:, 3])))
        y_turn = ys[k]
    else:
        raise ValueError(f"unknown seed_mode '{seed_mode}'")
    z0 = closed_leaf_state(p, y_turn, q_c=np.asarray(qc0, dtype=float))
    T0 = n_cover * support.T
    traj = integrate(lambda t, z: eval_f_int(p, z), z0, T0, rtol=rtol,
                     atol=rtol)
    ts = np.linspace(0.0, T0, N + 1)
    Z0 = np.array([traj.state(t) for t in ts])
    if D_z is None and extra_rows:
        # pinned solves report the plain sup-norm defect; keep rows unscaled
        D_z = np.ones(6)
    Z, T, rfin = solve_collocation(p, Z0, T0, extra_rows=extra_rows,
                                   defect_weight=defect_weight, tol=tol,
                                   itmax=itmax, D_z=D_z)
    if rfin > max(tol * 50.0, 1e-8) and not extra_rows:
        raise LiftOpen(f"lift-open: collocation residual {rfin:.3e}")
    cyc = LiftedCycle(nodes=Z, T=T, sector=support.sector, kind="hs",
                      R_rep=rfin)
    cyc.ensure_f(p)
    return cyc


# ---------------------------------------------------------------------------
# certificate rows


def rhs_check(p: Params3Seg, cycle: LiftedCycle, n_grid: int = 1024,
              interior_frac: float = 0.02):
    """Sup-norm dynamics defect of the reconstruction against f_int.

    Returns (R_rhs, R_rhs_interior); the interior variant excludes the
    given fraction of each mesh interval at both ends.
    """
    N = cycle.N
    dt = cycle.T / N
    per = max(int(np.ceil(n_grid / N)), 5)
    worst = 0.0
    worst_int = 0.0
    for i in range(N):
        for s in np.linspace(0.0, 1.0, per):
            t = (i + s) * dt
            defect = float(np.max(np.abs(
                cycle.derivative(p, t) - eval_f_int(p, cycle.state(p, t)))))
            worst = max(worst, defect)
            if interior_frac <= s <= 1.0 - interior_frac:
                worst_int = max(worst_int, defect)
    return worst, worst_int


def poe_row(p: Params3Seg, cycle: LiftedCycle, n_per_interval: int = 4):
    """Mean exchange power along the reconstruction, by Gauss quadrature.

    The integrand is the chain-rule storage derivative with analytic
    partials; per interval a fixed-order Gauss-Legendre rule is applied.
    """
    xg, wg = np.polynomial.legendre.leggauss(n_per_interval)
    N = cycle.N
    dt = cycle.T / N
    total = 0.0
    for i in range(N):
        for x, w in zip(xg, wg):
            s = 0.5 * (x + 1.0)
            t = (i + s) * dt
            z = cycle.state(p, t)
            dz = cycle.derivative(p, t)
            gr, gs = eperp_gradient(p, z[:2], z[4:])
            P = float(gr @ dz[:2] + gs @ dz[4:])
            total += w * 0.5 * dt * P
    psi = total / cycle.T
    return psi, abs(psi)


def reconstruct_pose_3seg(p: Params3Seg, cycle: LiftedCycle,
                          rtol: float = 1e-11):
    """Planar pose increment over one period of the reconstruction."""
    def rhs(t, g):
        z = cycle.state(p, t)
        return np.array([z[2] * cos(g[2]), z[2] * sin(g[2]), z[3]])

    traj = integrate(rhs, [0.0, 0.0, 0.0], cycle.T, rtol=rtol, atol=rtol)
    gx, gy, gth = traj.y[-1]
    return float(gx), float(gy), float(gth)


def displacement_distance(dg, theta_weight: float = 0.1) -> float:
    """Pose-increment size: planar norm plus weighted heading change."""
    return float(np.hypot(dg[0], dg[1]) + theta_weight * abs(dg[2]))


@dataclass(frozen=True)
class CertThresholds:
    tau_supp: float = 1e-6
    tau_id: float = 0.4
    tau_car: float = 1e-7
    tau_z: float = 1e-7
    tau_rhs: float = 2e-3
    tau_poe: float = 1e-6
    d_min: float = 1e-3
    theta_weight: float = 0.1


@dataclass
class FinalCertificate:
    """Structured residual rows of one reconstructed opened cycle."""

    sector: str
    rep_rows: dict
    mech_rows: dict
    scaled_rows: dict
    passes: dict
    poe_row_enabled: bool
    pose_computed: bool
    delta_g: tuple[float, float, float] | None
    vbar: float
    T: float
    features: ModalFeatures
    label: str
    thresholds: CertThresholds

    @property
    def mech_pass(self) -> bool:
        keys = ("R_supp_fin", "R_id_fin", "R_car_fin", "R_z_fin", "R_rhs_int")
        return all(self.passes[k] for k in keys)

    @property
    def poe_pass(self) -> bool:
        return self.passes["R_POE_fin"]

    @property
    def displacement_pass(self) -> bool:
        return bool(self.passes.get("R_g_fin", False))

    @property
    def natural(self) -> bool:
        """Full acceptance: mechanical, exchange and displacement groups.

        With the exchange row disabled this cannot be asserted, whatever
        the measured exchange magnitude.
        """
        return (self.poe_row_enabled and self.mech_pass and self.poe_pass
                and self.displacement_pass)

    def row_table(self) -> dict:
        out = dict(self.rep_rows)
        out.update(self.mech_rows)
        return out


def assemble_final_certificate(p: Params3Seg, cycle: LiftedCycle,
                               modes: ParentModes, sector: str | None = None,
                               thresholds: CertThresholds = CertThresholds(),
                               poe_row_enabled: bool = True,
                               support_scale: np.ndarray | None = None
                               ) -> FinalCertificate:
    """Evaluate every certificate row of a reconstructed cycle.

    Internal rows (support projection, identity, carrier, return, dynamics
    defect, exchange) are computed first; the pose is reconstructed and the
    displacement row evaluated only after the return and carrier rows pass,
    and the certificate records whether that stage was reached. Disabling
    the exchange gate still reports the exchange magnitude; a cycle that
    moves while exchanging beyond tolerance is labeled explicitly.
    """
    th = thresholds
    z0, zT = cycle.nodes[0], cycle.nodes[-1]
    D_y = np.maximum(np.abs(np.r_[cycle.nodes[:, :2],
                                  cycle.nodes[:, 4:6]]).max(axis=0)[
        [0, 1, 0, 1]], 1.0) if support_scale is None else support_scale
    proj = np.r_[zT[:2] - z0[:2], zT[4:] - z0[4:]]
    R_supp_fin = float(np.linalg.norm(proj / D_y))
    R_z_fin = float(np.linalg.norm(zT - z0))
    qc = cycle.carrier_trace(p)
    R_car_fin = float(np.linalg.norm(qc[-1] - qc[0]))
    R_rhs_fin, R_rhs_int = rhs_check(p, cycle)
    psi, R_POE_fin = poe_row(p, cycle)
    feats = compute_modal_features(modes, cycle.samples(p))
    sec = sector or cycle.sector
    R_id_fin = feats.R_id[sec]
    vbar = cycle.mean_speed(p)

    mech = {
        "R_supp_fin": R_supp_fin, "R_id_fin": R_id_fin,
        "R_car_fin": R_car_fin, "R_z_fin": R_z_fin,
        "R_rhs_fin": R_rhs_fin, "R_rhs_int": R_rhs_int,
        "R_POE_fin": R_POE_fin, "Psi_POE": psi,
    }
    passes = {
        "R_supp_fin": R_supp_fin <= th.tau_supp,
        "R_id_fin": R_id_fin <= th.tau_id,
        "R_car_fin": R_car_fin <= th.tau_car,
        "R_z_fin": R_z_fin <= th.tau_z,
        "R_rhs_int": R_rhs_int <= th.tau_rhs,
        "R_POE_fin": R_POE_fin <= th.tau_poe,
    }

    pose_done = False
    delta_g = None
    if passes["R_z_fin"] and passes["R_car_fin"]:
        delta_g = reconstruct_pose_3seg(p, cycle)
        pose_done = True
        d_g = displacement_distance(delta_g, th.theta_weight)
        R_g_fin = max(0.0, th.d_min - d_g)
        mech["R_g_fin"] = R_g_fin
        mech["d_g"] = d_g
        passes["R_g_fin"] = R_g_fin == 0.0
    else:
        mech["R_g_fin"] = float("nan")
        passes["R_g_fin"] = False

    scaled = {k: v for k, v in mech.items() if k.startswith("R_")}
    rep = {"R_BVP": cycle.R_rep, "kind": cycle.kind, "N": cycle.N}

    mech_ok = all(passes[k] for k in ("R_supp_fin", "R_id_fin", "R_car_fin",
                                      "R_z_fin", "R_rhs_int"))
    moving = pose_done and passes["R_g_fin"]
    if moving and R_POE_fin > th.tau_poe:
        label = "moving-but-not-natural"
    elif moving and mech_ok and passes["R_POE_fin"]:
        label = "natural" if poe_row_enabled else "natural-candidate"
    elif moving:
        label = "moving-rejected"
    elif pose_done:
        label = "stationary"
    else:
        label = "rejected"
    cert = FinalCertificate(sector=sec, rep_rows=rep, mech_rows=mech,
                            scaled_rows=scaled, passes=passes,
                            poe_row_enabled=poe_row_enabled,
                            pose_computed=pose_done, delta_g=delta_g,
                            vbar=vbar, T=cycle.T, features=feats, label=label,
                            thresholds=th)
    return cert


@dataclass
class PairReport:
    ok: bool
    rows: dict
    reason: str = ""


def paired_certificate(p_star: Params3Seg, cert_ip: FinalCertificate,
                       cert_ap: FinalCertificate,
                       params_ip: Params3Seg | None = None,
                       params_ap: Params3Seg | None = None) -> PairReport:
    """Same-physical pairing of two certified sector cycles.

    Both members must be fully natural (mechanical, exchange and
    displacement groups), evaluated at the identical frozen architecture.
    The parameter rows compare the vectors the members were certified at
    against the frozen one; with shared parameters they are exactly zero.
    """
    rows = {}
    for tag, prm in (("IP", params_ip or p_star), ("AP", params_ap or p_star)):
        diff = max(abs(getattr(prm, f.name) - getattr(p_star, f.name))
                   / max(abs(getattr(p_star, f.name)), 1.0)
                   for f in p_star.__dataclass_fields__.values())
        rows[f"theta_row_{tag}"] = diff
    rows["displacement_IP"] = cert_ip.mech_rows.get("d_g", 0.0)
    rows["displacement_AP"] = cert_ap.mech_rows.get("d_g", 0.0)
    rows["R_POE_IP"] = cert_ip.mech_rows["R_POE_fin"]
    rows["R_POE_AP"] = cert_ap.mech_rows["R_POE_fin"]

    if cert_ip.sector != "IP" or cert_ap.sector != "AP":
        return PairReport(False, rows, "sector mismatch")
    if rows["theta_row_IP"] > 0.0 or rows["theta_row_AP"] > 0.0:
        return PairReport(False, rows, "parameter row nonzero")
    for tag, cert in (("IP", cert_ip), ("AP", cert_ap)):
        if not cert.natural:
            return PairReport(False, rows, f"{tag} member not natural")
        if not cert.displacement_pass:
            return PairReport(False, rows, f"{tag} displacement row fails")
    return PairReport(True, rows, "")


# ---------------------------------------------------------------------------
# candidate transformations and probes


def ap_cover(cycle: LiftedCycle, m_cov: int) -> LiftedCycle:
    """Represent a cycle on an m_cov-fold period cover."""
    if m_cov < 1:
        raise ValueError("cover multiplicity must be >= 1")
    if m_cov == 1:
        return cycle
    body = cycle.nodes[:-1]
    nodes = np.vstack([np.tile(body, (m_cov, 1)), cycle.nodes[-1:]])
    return LiftedCycle(nodes=nodes, T=m_cov * cycle.T, sector=cycle.sector,
                       kind=cycle.kind, R_rep=cycle.R_rep)


def cover_project(cycle_cov: LiftedCycle, m_cov: int) -> LiftedCycle:
    """Project an m_cov cover back to the physical single-period cycle."""
    if m_cov == 1:
        return cycle_cov
    N = cycle_cov.N
    if N % m_cov:
        raise ValueError("cover mesh not divisible by multiplicity")
    n = N // m_cov
    nodes = np.vstack([cycle_cov.nodes[:n], cycle_cov.nodes[:1]])
    return LiftedCycle(nodes=nodes, T=cycle_cov.T / m_cov,
                       sector=cycle_cov.sector, kind=cycle_cov.kind,
                       R_rep=cycle_cov.R_rep)


def time_reversal_candidate(cycle: LiftedCycle) -> LiftedCycle:
    """Reversal candidate (S Gamma)(t) = S z(T - t)."""
    nodes = (S_TIME_REVERSAL @ cycle.nodes[::-1].T).T.copy()
    return LiftedCycle(nodes=nodes, T=cycle.T, sector=cycle.sector,
                       kind=cycle.kind, R_rep=cycle.R_rep)


def reversal_compatibility_defect(p: Params3Seg, zs: np.ndarray) -> float:
    """Max defect of S f(z) + f(S z) over sample states (model involution)."""
    worst = 0.0
    for z in np.atleast_2d(zs):
        v = S_TIME_REVERSAL @ eval_f_int(p, z) \
            + eval_f_int(p, S_TIME_REVERSAL @ z)
        worst = max(worst, float(np.max(np.abs(v))))
    return worst


@dataclass(frozen=True)
class MobilityScores:
    b_supp: float
    b_id: float
    b_lift: float
    b_POE: float
    b_mob: float

    @property
    def rank_key(self) -> float:
        return self.b_supp * self.b_id * self.b_lift * self.b_POE \
            * (1.0 + self.b_mob)


def mobility_probe(diags: dict, s_supp: float = 1e-6, s_poe: float = 1e-6,
                   s_id: float = 0.2, s_lift: float = 1e-6,
                   d_min: float = 1e-3) -> MobilityScores:
    """Normalized candidate scores; they order the polish queue only."""
    return MobilityScores(
        b_supp=float(np.exp(-diags.get("R_supp", 0.0) / s_supp)),
        b_id=float(np.exp(-diags.get("R_id", 0.0) / s_id)),
        b_lift=float(np.exp(-diags.get("R_lift", 0.0) / s_lift)),
        b_POE=float(np.exp(-diags.get("R_POE", 0.0) / s_poe)),
        b_mob=1.0 if diags.get("d_g", 0.0) >= d_min else 0.0)


# ---------------------------------------------------------------------------
# continuation charts


CHART_ACTIVE_ROWS = {
    "mean-speed": ("R_vbar_tar",),
    "poe-constrained": ("R_POE_chart",),
    "branch-tangent": ("R_br",),
    "non-v-activity": ("R_act",),
    "modal-floor": ("R_floor",),
    "secant": ("R_sec_v", "R_sec_nonv"),
    "physical-homotopy": ("R_phys",),
}


@dataclass
class ContinuationChart:
    """Chart kind, its active rows, and the continuation parameter state."""

    kind: str
    lam: float = 0.0
    ds: float = 0.1
    sector: str = "IP"
    modes: ParentModes | None = None
    scale: float = 1.0
    theta_src: Params3Seg | None = None
    theta_tar: Params3Seg | None = None

    def __post_init__(self):
        if self.kind not in CHART_ACTIVE_ROWS:
            raise ValueError(f"unknown chart kind '{self.kind}'")

    @property
    def active_rows(self) -> tuple[str, ...]:
        return CHART_ACTIVE_ROWS[self.kind]

    def params_at(self, lam: float) -> Params3Seg | None:
        """Physical homotopy path theta(lam); None for fixed-physical charts."""
        if self.kind != "physical-homotopy":
            return None
        src, tar = self.theta_src, self.theta_tar
        kw = {f: (1.0 - lam) * getattr(src, f) + lam * getattr(tar, f)
              for f in src.__dataclass_fields__}
        return Params3Seg(**kw)

    def extra_rows(self, lam: float) -> tuple[ExtraRow, ...]:
        if self.kind == "mean-speed":
            return (ExtraRow(kind="speed", target=lam, scale=self.scale,
                             weight=1.0),)
        if self.kind == "poe-constrained":
            return (ExtraRow(kind="poe", target=0.0, scale=self.scale,
                             weight=1.0),
                    ExtraRow(kind="amplitude", target=lam, scale=1.0,
                             sector=self.sector, modes=self.modes))
        if self.kind == "modal-floor":
            return (ExtraRow(kind="amplitude", target=lam, scale=1.0,
                             sector=self.sector, modes=self.modes),)
        if self.kind in ("branch-tangent", "non-v-activity", "secant",
                         "physical-homotopy"):
            return ()
        raise ValueError(self.kind)


def continuation_step(p: Params3Seg, chart: ContinuationChart,
                      cycle: LiftedCycle, lam: float,
                      prev: tuple[LiftedCycle, float] | None = None,
                      ds: float | None = None, tol: float = 1e-10,
                      max_halvings: int = 6):
    """One pseudo-arclength transport step through the given chart.

    The predictor is the secant of the last two solutions (or the current
    one on the first step); the corrector re-solves the chart system at the
    shifted parameter. Corrector failure halves the step up to the given
    number of times before a chart stall is reported.
    """
    step = chart.ds if ds is None else ds
    for _ in range(max_halvings + 1):
        lam_new = lam + step
        if prev is not None and prev[1] != lam:
            w = step / (lam - prev[1])
            Z_pred = cycle.nodes + w * (cycle.nodes - prev[0].nodes)
            T_pred = cycle.T + w * (cycle.T - prev[0].T)
        else:
            Z_pred, T_pred = cycle.nodes.copy(), cycle.T
        p_eff = chart.params_at(lam_new) or p
        try:
            Z, T, rfin = solve_collocation(
                p_eff, Z_pred, max(T_pred, 1e-3 * cycle.T),
                extra_rows=chart.extra_rows(lam_new), tol=tol, itmax=40)
        except (LiftOpen, DomainExit, KernelError):
            step *= 0.5
            continue
        if rfin <= max(tol * 100.0, 1e-7):
            out = LiftedCycle(nodes=Z, T=T, sector=cycle.sector,
                              kind=cycle.kind, R_rep=rfin)
            out.ensure_f(p_eff)
            return out, lam_new
        step *= 0.5
    raise LiftOpen("chart-stall")
