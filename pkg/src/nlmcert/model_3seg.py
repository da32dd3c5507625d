"""Three-segment reduced conservative model at a frozen physical vector.

Planar chain: a knife-edge carrier (body 1) with two serial passive yaw
joints. The contact point carries the no-side-slip constraint; the base
center of mass and the first joint sit a distance l1 ahead of it along the
body axis; link 2 hangs at relative angle delta1 with its center of mass at
mid-length; link 3 hangs at the end of link 2 at relative angle delta2,
center of mass again at mid-length. Kernel projection of the constrained
dynamics gives a 4x4 shape-dependent mass matrix in the quasi-velocities
nu = (v, omega, sigma1, sigma2) and a quadratic gyroscopic bias; both are
hard-coded closed forms validated by the energy and involution tests.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import cos, sin

import numpy as np

from .kernel import DomainExit

__all__ = [
    "Params3Seg", "theta_star", "Reduced3SegState", "SchurLayer3Seg",
    "assemble_mass_matrix", "gyro_vector", "eval_potential_3seg",
    "eval_f_int", "reduced_energy_3seg", "eval_schur_layer", "f_perp",
    "eperp_3seg", "eperp_gradient", "poe_power_3seg", "closed_leaf_state",
    "S_TIME_REVERSAL", "S_MIRROR",
]

# involutions on z = (delta1, delta2, v, omega, sigma1, sigma2)
S_TIME_REVERSAL = np.diag([1.0, 1.0, -1.0, -1.0, -1.0, -1.0])
S_MIRROR = np.diag([-1.0, -1.0, 1.0, -1.0, -1.0, -1.0])


@dataclass(frozen=True)
class Params3Seg:
    """Physical three-segment architecture; conservative when u1 = u2 = 0."""

    I1: float
    I2: float
    I3: float
    l1: float
    L2: float
    L3: float
    m1: float
    m2: float
    m3: float
    k12: float
    k2_1: float
    k2_2: float
    k4_1: float
    k4_2: float
    u1: float = 0.0
    u2: float = 0.0

    def __post_init__(self):
        for name in ("I1", "I2", "I3", "l1", "L2", "L3", "m1", "m2", "m3"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    @property
    def l2(self) -> float:
        return self.L2 / 2.0

    @property
    def l3(self) -> float:
        return self.L3 / 2.0

    @property
    def m_tot(self) -> float:
        return self.m1 + self.m2 + self.m3

    # first moments and joint-aggregate inertias of the serial chain
    @property
    def mA(self) -> float:
        return self.m2 * self.l2 + self.m3 * self.L2

    @property
    def mB(self) -> float:
        return self.m3 * self.l3

    @property
    def J1s(self) -> float:
        return self.I1 + self.m_tot * self.l1 ** 2

    @property
    def JA(self) -> float:
        return self.I2 + self.m2 * self.l2 ** 2 + self.m3 * self.L2 ** 2

    @property
    def JB(self) -> float:
        return self.I3 + self.m3 * self.l3 ** 2

    @property
    def kA(self) -> float:
        return self.l1 * self.mA

    @property
    def kB(self) -> float:
        return self.l1 * self.mB

    @property
    def kC(self) -> float:
        return self.L2 * self.mB


def theta_star() -> Params3Seg:
    """The frozen passive architecture at which both modal families certify."""
    return Params3Seg(
        I1=0.418642, I2=0.00608070, I3=0.000314296,
        l1=0.28, L2=0.150076, L3=0.105188,
        m1=6.0, m2=0.394571, m3=0.276554,
        k12=0.00118731, k2_1=0.652435, k2_2=0.300805,
        k4_1=5.258424, k4_2=0.449143,
        u1=0.0, u2=0.0)


Reduced3SegState = np.ndarray    # z = (delta1, delta2, v, omega, sigma1, sigma2)


def assemble_mass_matrix(p: Params3Seg, d1: float, d2: float) -> np.ndarray:
    """Shape-dependent 4x4 mass matrix in nu = (v, omega, sigma1, sigma2)."""
    c1, c2, c12 = cos(d1), cos(d2), cos(d1 + d2)
    s1, s12 = sin(d1), sin(d1 + d2)
    mA, mB = p.mA, p.mB
    J1s, JA, JB = p.J1s, p.JA, p.JB
    kA, kB, kC = p.kA, p.kB, p.kC
    m01 = -mA * s1 - mB * s12
    m03 = -mB * s12
    m11 = J1s + JA + JB + 2.0 * (kA * c1 + kB * c12 + kC * c2)
    m12 = JA + JB + kA * c1 + kB * c12 + 2.0 * kC * c2
    m13 = JB + kB * c12 + kC * c2
    m22 = JA + JB + 2.0 * kC * c2
    m23 = JB + kC * c2
    return np.array([
        [p.m_tot, m01, m01, m03],
        [m01, m11, m12, m13],
        [m01, m12, m22, m23],
        [m03, m13, m23, JB],
    ])


def mass_matrix_partials(p: Params3Seg, d1: float, d2: float):
    """Analytic shape derivatives (dM/ddelta1, dM/ddelta2) of the mass matrix."""
    c1, c2, c12 = cos(d1), cos(d2), cos(d1 + d2)
    s1, s2, s12 = sin(d1), sin(d2), sin(d1 + d2)
    mA, mB = p.mA, p.mB
    kA, kB, kC = p.kA, p.kB, p.kC

    dm01_1 = -mA * c1 - mB * c12
    dm03_1 = -mB * c12
    dM1 = np.array([
        [0.0, dm01_1, dm01_1, dm03_1],
        [dm01_1, -2.0 * (kA * s1 + kB * s12), -kA * s1 - kB * s12, -kB * s12],
        [dm01_1, -kA * s1 - kB * s12, 0.0, 0.0],
        [dm03_1, -kB * s12, 0.0, 0.0],
    ])
    dm01_2 = -mB * c12
    dM2 = np.array([
        [0.0, dm01_2, dm01_2, dm01_2],
        [dm01_2, -2.0 * (kB * s12 + kC * s2), -kB * s12 - 2.0 * kC * s2,
         -kB * s12 - kC * s2],
        [dm01_2, -kB * s12 - 2.0 * kC * s2, -2.0 * kC * s2, -kC * s2],
        [dm01_2, -kB * s12 - kC * s2, -kC * s2, 0.0],
    ])
    return dM1, dM2


def gyro_vector(p: Params3Seg, d1: float, d2: float, v: float, w: float,
                s1_: float, s2_: float) -> np.ndarray:
    """Quadratic quasi-velocity bias of the kernel-projected dynamics."""
    c1, c2, c12 = cos(d1), cos(d2), cos(d1 + d2)
    sn1, sn2, sn12 = sin(d1), sin(d2), sin(d1 + d2)
    mA, mB = p.mA, p.mB
    kA, kB, kC = p.kA, p.kB, p.kC
    l1mt = p.l1 * p.m_tot
    pA = w + s1_
    pB = w + s1_ + s2_
    gA = mA * c1 + mB * c12
    gB = mA * sn1 + mB * sn12
    return np.array([
        -l1mt * w * w - mA * c1 * pA * pA - mB * c12 * pB * pB,
        v * w * (l1mt + gA) - kA * sn1 * (pA * pA - w * w)
        - kB * sn12 * (pB * pB - w * w) - kC * sn2 * (pB * pB - pA * pA),
        v * w * gA + p.l1 * gB * w * w - kC * sn2 * s2_ * (pA + pB),
        v * w * mB * c12 + kB * sn12 * w * w + kC * sn2 * pA * pA,
    ])


def eval_potential_3seg(p: Params3Seg, d1: float, d2: float):
    """Internal potential and its analytic gradient."""
    V = (0.5 * p.k2_1 * d1 * d1 + 0.25 * p.k4_1 * d1 ** 4
         + 0.5 * p.k2_2 * d2 * d2 + 0.25 * p.k4_2 * d2 ** 4
         + 0.5 * p.k12 * (d1 - d2) ** 2)
    g1 = p.k2_1 * d1 + p.k4_1 * d1 ** 3 + p.k12 * (d1 - d2)
    g2 = p.k2_2 * d2 + p.k4_2 * d2 ** 3 - p.k12 * (d1 - d2)
    return V, np.array([g1, g2])


COND_GUARD = 1e12


def eval_f_int(p: Params3Seg, z: Reduced3SegState) -> np.ndarray:
    """Six-state internal field z' = f_int(z)."""
    d1, d2, v, w, s1_, s2_ = z
    M = assemble_mass_matrix(p, d1, d2)
    _, gV = eval_potential_3seg(p, d1, d2)
    rhs = -(gyro_vector(p, d1, d2, v, w, s1_, s2_)
            + np.array([0.0, 0.0, gV[0], gV[1]]))
    rhs[2] += p.u1
    rhs[3] += p.u2
    try:
        nudot = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        raise DomainExit("near-singular-inertia")
    if not np.all(np.isfinite(nudot)):
        raise DomainExit("near-singular-inertia")
    return np.array([s1_, s2_, nudot[0], nudot[1], nudot[2], nudot[3]])


def reduced_energy_3seg(p: Params3Seg, z: Reduced3SegState) -> float:
    """Conserved reduced energy 0.5 nu' M nu + V."""
    d1, d2 = z[0], z[1]
    nu = np.asarray(z[2:], dtype=float)
    M = assemble_mass_matrix(p, d1, d2)
    V, _ = eval_potential_3seg(p, d1, d2)
    return 0.5 * float(nu @ M @ nu) + V


@dataclass(frozen=True)
class SchurLayer3Seg:
    """Carrier-closed transverse layer at one shape."""

    A: np.ndarray          # 2x2 connection M_GG^-1 M_GS
    M_perp: np.ndarray     # 2x2 SPD transverse inertia
    M_GG: np.ndarray
    M_GS: np.ndarray
    M_SS: np.ndarray


def eval_schur_layer(p: Params3Seg, d1: float, d2: float) -> SchurLayer3Seg:
    M = assemble_mass_matrix(p, d1, d2)
    M_GG, M_GS, M_SS = M[:2, :2], M[:2, 2:], M[2:, 2:]
    try:
        A = np.linalg.solve(M_GG, M_GS)
    except np.linalg.LinAlgError:
        raise DomainExit("carrier-block-singular")
    M_perp = M_SS - M_GS.T @ A
    return SchurLayer3Seg(A=A, M_perp=M_perp, M_GG=M_GG, M_GS=M_GS, M_SS=M_SS)


def eperp_3seg(p: Params3Seg, r: np.ndarray, sigma: np.ndarray) -> float:
    """Transverse storage 0.5 sigma' M_perp(r) sigma + V(r)."""
    lay = eval_schur_layer(p, r[0], r[1])
    V, _ = eval_potential_3seg(p, r[0], r[1])
    return 0.5 * float(sigma @ lay.M_perp @ sigma) + V


def eperp_gradient(p: Params3Seg, r: np.ndarray, sigma: np.ndarray):
    """Analytic partials (dE/dr, dE/dsigma) of the transverse storage."""
    lay = eval_schur_layer(p, r[0], r[1])
    dM1, dM2 = mass_matrix_partials(p, r[0], r[1])
    _, gV = eval_potential_3seg(p, r[0], r[1])
    G = lay.A
    grad_r = np.empty(2)
    for i, dM in enumerate((dM1, dM2)):
        dGG, dGS, dSS = dM[:2, :2], dM[:2, 2:], dM[2:, 2:]
        dMp = dSS - dGS.T @ G - G.T @ dGS + G.T @ dGG @ G
        grad_r[i] = 0.5 * float(sigma @ dMp @ sigma) + gV[i]
    grad_sigma = lay.M_perp @ sigma
    return grad_r, grad_sigma


def closed_leaf_state(p: Params3Seg, y: np.ndarray,
                      q_c: np.ndarray | None = None) -> np.ndarray:
    """Lift a transverse point y = (r, sigma) to z with carrier offset q_c."""
    r, sigma = y[:2], y[2:]
    lay = eval_schur_layer(p, r[0], r[1])
    eta = -lay.A @ sigma
    if q_c is not None:
        eta = eta + np.asarray(q_c, dtype=float)
    return np.array([r[0], r[1], eta[0], eta[1], sigma[0], sigma[1]])


def f_perp(p: Params3Seg, y: np.ndarray) -> np.ndarray:
    """Carrier-closed transverse field on y = (r, sigma); preserves E_perp."""
    d1, d2 = y[0], y[1]
    sigma = y[2:]
    M = assemble_mass_matrix(p, d1, d2)
    try:
        eta = -np.linalg.solve(M[:2, :2], M[:2, 2:] @ sigma)
    except np.linalg.LinAlgError:
        raise DomainExit("carrier-block-singular")
    _, gV = eval_potential_3seg(p, d1, d2)
    rhs = -(gyro_vector(p, d1, d2, eta[0], eta[1], sigma[0], sigma[1])
            + np.array([0.0, 0.0, gV[0], gV[1]]))
    rhs[2] += p.u1
    rhs[3] += p.u2
    try:
        nudot = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        raise DomainExit("near-singular-inertia")
    return np.array([sigma[0], sigma[1], nudot[2], nudot[3]])


def poe_power_3seg(p: Params3Seg, z: Reduced3SegState) -> float:
    """Instantaneous exchange power dE_perp/dt along the opened dynamics."""
    r = z[:2]
    sigma = z[4:]
    dz = eval_f_int(p, z)
    grad_r, grad_sigma = eperp_gradient(p, r, sigma)
    return float(grad_r @ dz[:2] + grad_sigma @ dz[4:])


def carrier_channel(p: Params3Seg, z: Reduced3SegState) -> np.ndarray:
    """Admissible pseudo-momentum coordinate q_c = eta + A(r) sigma."""
    lay = eval_schur_layer(p, z[0], z[1])
    return z[2:4] + lay.A @ z[4:]
