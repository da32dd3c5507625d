"""Carrier-closed modal machinery for the three-segment oscillator.

Parent in-phase/anti-phase directions come from the generalized eigenproblem
of the transverse linearization; finite-amplitude supports are periodic
orbits of the carrier-closed field solved under a phase gauge plus modal
rows; modal identity features are recomputed from sampled cycles, never
inherited from the chart that produced them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import pi

import numpy as np

from .kernel import (DomainExit, KernelError, damped_least_squares, integrate,
                     sym_gen_eig)
from .model_3seg import (Params3Seg, eperp_3seg, eval_potential_3seg,
                         eval_schur_layer, f_perp)

__all__ = [
    "ParentModes", "solve_parent_modes", "seed_support", "SupportOpen",
    "TransverseSupport3Seg", "solve_support", "ModalFeatures",
    "compute_modal_features",
]

SECTORS = ("IP", "AP")


class SupportOpen(RuntimeError):
    """A transverse support solve failed to converge."""


@dataclass(frozen=True)
class ParentModes:
    """Linearized transverse modes at the origin, M0-orthonormal columns."""

    M0: np.ndarray
    K0: np.ndarray
    omega: dict          # sector -> frequency
    shape: dict          # sector -> eigenvector (2,)

    def modal_coords(self, r: np.ndarray, sigma: np.ndarray, sector: str):
        """(Q_j, P_j, Ptilde_j) of a transverse point for one sector."""
        u = self.shape[sector]
        Q = float(u @ self.M0 @ r)
        P = float(u @ self.M0 @ sigma)
        return Q, P, P / self.omega[sector]


def solve_parent_modes(p: Params3Seg, degeneracy_tol: float = 1e-8) -> ParentModes:
    """Generalized eigensolve of the transverse linearization at the origin."""
    M0 = eval_schur_layer(p, 0.0, 0.0).M_perp
    K0 = np.array([[p.k2_1 + p.k12, -p.k12],
                   [-p.k12, p.k2_2 + p.k12]])
    w, V = sym_gen_eig(K0, M0)
    if w[0] <= 0.0:
        raise KernelError("transverse linearization not positive")
    Om = np.sqrt(w)
    if abs(Om[1] - Om[0]) < degeneracy_tol * max(Om[1], 1.0):
        raise KernelError("mode-degenerate")
    omega, shape = {}, {}
    for j in range(2):
        u = V[:, j].copy()
        sector = "IP" if u[0] * u[1] > 0.0 else "AP"
        if u[0] < 0.0:
            u = -u
        omega[sector] = float(Om[j])
        shape[sector] = u
    if set(omega) != {"IP", "AP"}:
        # both eigenvectors landed in one sign class; label by frequency order
        omega = {"IP": float(Om[0]), "AP": float(Om[1])}
        shape = {"IP": V[:, 0] * np.sign(V[0, 0] or 1.0),
                 "AP": V[:, 1] * np.sign(V[0, 1] or 1.0)}
    return ParentModes(M0=M0, K0=K0, omega=omega, shape=shape)


def seed_support(modes: ParentModes, sector: str, A: float):
    """Pure small-amplitude seed (y0, T0) for one sector."""
    if A <= 0.0:
        raise ValueError("amplitude must be positive")
    u = modes.shape[sector]
    y0 = np.concatenate([A * u, np.zeros(2)])
    return y0, 2.0 * pi / modes.omega[sector]


@dataclass
class TransverseSupport3Seg:
    """Accepted carrier-closed periodic oscillation of one modal sector."""

    sector: str
    amplitude: float
    y0: np.ndarray
    T: float
    gauge: str
    R_supp: float
    R_E: float
    R_ph: float
    E_perp: float

    def record(self) -> dict:
        return {
            "sector": self.sector, "amplitude": self.amplitude,
            "T": self.T, "y0": list(map(float, self.y0)),
            "gauge": self.gauge,
            "diagnostics": {"R_supp": self.R_supp, "R_E": self.R_E,
                            "R_ph": self.R_ph},
            "E_perp": self.E_perp,
        }


def _flow_perp(p: Params3Seg, y0: np.ndarray, T: float, rtol: float):
    return integrate(lambda t, y: f_perp(p, y), y0, T, rtol=rtol, atol=rtol)


def _gauge_row(gauge: str, modes: ParentModes, sector: str, y: np.ndarray,
               y_ref: np.ndarray, f_ref: np.ndarray,
               p_sc: float = 1.0, eps_ph: float = 1e-10) -> float:
    if gauge == "modal":
        _, P, _ = modes.modal_coords(y[:2], y[2:], sector)
        return P / (p_sc * modes.omega[sector])
    if gauge == "tangent":
        d = np.maximum(np.abs(y_ref), 1.0)
        return float((y - y_ref) @ (f_ref / d ** 2))
    if gauge == "seed-tracking":
        return float((y - y_ref) @ f_ref) / (float(f_ref @ f_ref) + eps_ph)
    raise ValueError(f"unknown gauge '{gauge}'")


def _solve_support_step(p: Params3Seg, modes: ParentModes, sector: str,
                        A: float, gauge: str, y_seed: np.ndarray,
                        T_seed: float, rtol: float, tol: float,
                        max_iter: int):
    """One warm-started pure-support solve on the antiperiodic half period.

    Pure-sector supports inherit the sign symmetry of the carrier-closed
    field, y(t + T/2) = -y(t), so the half-period relation is solved and
    the full period reported; this halves every residual integration and
    excludes period-multiple captures.
    """
    f_ref = f_perp(p, y_seed)
    D_y = np.maximum(np.abs(y_seed), np.array([0.05, 0.05, 0.2, 0.2]))
    q_sc = max(abs(A), 0.01)
    Th_seed = 0.5 * T_seed

    def residual(x):
        y0, Th = x[:4], x[4]
        if not 0.25 * Th_seed <= Th <= 4.0 * Th_seed or np.abs(y0).max() > 50.0:
            return np.full(6, 1e3)
        traj = _flow_perp(p, y0, Th, rtol)
        rows = list((traj.y[-1] + y0) / D_y)
        rows.append(_gauge_row(gauge, modes, sector, y0, y_seed, f_ref))
        Q, _, _ = modes.modal_coords(y0[:2], y0[2:], sector)
        rows.append((Q - A) / q_sc)
        return np.array(rows)

    out = damped_least_squares(residual, np.r_[y_seed, Th_seed], tol=tol,
                               max_iter=max_iter, fd_step=1e-7, lam0=1e-7)
    if not out.converged:
        raise SupportOpen(f"support-open: {out.message}")
    return out.x[:4], 2.0 * float(out.x[4]), f_ref, y_seed


def solve_support(p: Params3Seg, modes: ParentModes, sector: str, A: float,
                  gauge: str = "modal",
                  seed: tuple[np.ndarray, float] | None = None,
                  rtol: float = 3e-11, tol: float = 1e-10,
                  max_iter: int = 30) -> TransverseSupport3Seg:
    """Solve a pure finite-amplitude transverse support at modal amplitude A.

    Unknowns are (y0, T); rows are the scaled periodicity defect, the phase
    gauge, and the modal amplitude row Q_sector(y0) = A. Seeds default to
    the parent mode; amplitudes beyond the near-linear regime are reached
    by a warm-started amplitude ladder that inserts midpoints when a rung
    fails. Diagnostics are recomputed unscaled from a re-integration of
    the solved orbit at tight tolerance.
    """
    if seed is not None:
        ladder = [A]
        y_seed, T_seed = np.asarray(seed[0], dtype=float), float(seed[1])
    else:
        A0 = min(abs(A), 0.004)
        ladder = [A0]
        while ladder[-1] < A:
            ladder.append(min(A, ladder[-1] * 1.6))
        y_seed, T_seed = seed_support(modes, sector, ladder[0])

    try:
        A_now = None
        prev: tuple[float, np.ndarray, float] | None = None   # (A, y0, T)
        queue = list(ladder)
        splits = 0
        while queue:
            A_k = queue.pop(0)
            y_try, T_try = y_seed, T_seed
            if prev is not None and A_now is not None and A_now != prev[0]:
                # secant predictor along the amplitude family
                w = (A_k - A_now) / (A_now - prev[0])
                y_try = y_seed + w * (y_seed - prev[1])
                T_try = max(T_seed + w * (T_seed - prev[2]), 0.05 * T_seed)
            try:
                y0, T, f_ref, y_ref = _solve_support_step(
                    p, modes, sector, A_k, gauge, y_try, T_try,
                    max(rtol, 1e-10), max(tol, 3e-9), max_iter)
            except SupportOpen:
                if splits >= 10 or (A_now is None and A_k <= 0.004):
                    raise
                lo = A_now if A_now is not None else 0.0
                queue.insert(0, A_k)
                queue.insert(0, 0.5 * (lo + A_k))
                splits += 1
                continue
            prev = (A_now, y_seed, T_seed) if A_now is not None else prev
            y_seed, T_seed = y0, T
            A_now = A_k
        # final tight polish at the target amplitude
        y0, T, f_ref, y_ref = _solve_support_step(
            p, modes, sector, A, gauge, y_seed, T_seed, rtol, tol, max_iter)
    except (DomainExit, KernelError) as exc:
        raise SupportOpen(f"support-open: {exc}")
    traj = _flow_perp(p, y0, T, rtol=1e-13)
    R_supp = float(np.linalg.norm(traj.y[-1] - y0))
    ts = np.linspace(0.0, T, 128)
    Es = np.array([eperp_3seg(p, traj.state(t)[:2], traj.state(t)[2:])
                   for t in ts])
    E0 = eperp_3seg(p, y0[:2], y0[2:])
    R_E = float(np.max(np.abs(Es - E0)))
    R_ph = abs(_gauge_row(gauge, modes, sector, y0, y_ref, f_ref))
    Q, _, _ = modes.modal_coords(y0[:2], y0[2:], sector)
    if Q <= 0.0:
        raise SupportOpen("support-open: modal gauge sign")
    return TransverseSupport3Seg(sector=sector, amplitude=A, y0=y0, T=T,
                                 gauge=gauge, R_supp=R_supp, R_E=R_E,
                                 R_ph=R_ph, E_perp=E0)


@dataclass(frozen=True)
class ModalFeatures:
    """Sector-identity features recomputed from a sampled cycle."""

    activity: dict            # sector -> A_j^2
    share: dict               # sector -> rho_j
    phi_rel: float
    c_corr: float
    sign_match: dict          # sector -> bool
    R_id: dict                # sector -> identity distance

    def passes(self, sector: str, tau_id: float = 0.4) -> bool:
        return self.R_id[sector] <= tau_id


EPS_ID = 1e-12


def compute_modal_features(modes: ParentModes, samples: np.ndarray,
                           weight_sign: float = 0.5) -> ModalFeatures:
    """Activity shares, relative phase and identity distances.

    samples: (n, >=6) rows of z = (delta1, delta2, ..., sigma1, sigma2) or
    (n, 4) rows of y = (r, sigma), uniformly spaced over one period.
    """
    zs = np.asarray(samples, dtype=float)
    if zs.shape[1] == 4:
        r, sg = zs[:, :2], zs[:, 2:]
    else:
        r, sg = zs[:, :2], zs[:, 4:6]
    Qs, Pts = {}, {}
    for sector in SECTORS:
        u = modes.shape[sector]
        Q = r @ (modes.M0 @ u)
        P = sg @ (modes.M0 @ u)
        Qs[sector] = Q
        Pts[sector] = P / modes.omega[sector]
    activity = {s: float(np.mean(Qs[s] ** 2 + Pts[s] ** 2)) for s in SECTORS}
    denom = activity["IP"] + activity["AP"] + EPS_ID
    share = {s: activity[s] / denom for s in SECTORS}
    z_ip = Qs["IP"] + 1j * Pts["IP"]
    z_ap = Qs["AP"] - 1j * Pts["AP"]
    phi_rel = float(np.angle(np.mean(z_ip * z_ap)))
    n1 = float(np.sqrt(np.mean(r[:, 0] ** 2)))
    n2 = float(np.sqrt(np.mean(r[:, 1] ** 2)))
    c_corr = float(np.mean(r[:, 0] * r[:, 1]) / (n1 * n2)) \
        if n1 > 0 and n2 > 0 else 0.0
    sign_match = {"IP": c_corr > 0.0, "AP": c_corr < 0.0}
    R_id = {s: (1.0 - share[s]) + weight_sign * (0.0 if sign_match[s] else 1.0)
            for s in SECTORS}
    return ModalFeatures(activity=activity, share=share, phi_rel=phi_rel,
                         c_corr=c_corr, sign_match=sign_match, R_id=R_id)
