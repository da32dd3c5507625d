import numpy as np
import pytest

from nlmcert.model_2seg import Params2Seg, eval_coeffs
from nlmcert.support_2seg import (SupportError, agm_elliptic_E,
                                  agm_elliptic_K, build_support,
                                  closed_period_ode, pendulum_oracle,
                                  pendulum_quadrature)


def test_harmonic_limit_period_and_action(p2):
    p = Params2Seg(epsilon=p2.epsilon, gamma=p2.gamma, k2=p2.k2, k4=0.0)
    sup = build_support(p, 1e-3, n_theta=2048)
    M0 = eval_coeffs(p, 0.0).Meff
    T_lin = 2.0 * np.pi * np.sqrt(M0 / p.k2)
    assert abs(sup.T_L - T_lin) / T_lin < 1e-6
    J_lin = sup.E_perp * np.sqrt(M0 / p.k2)
    assert abs(sup.J_L - J_lin) / J_lin < 1e-6


def test_quadrature_period_matches_ode_oracle(p2):
    sup = build_support(p2, 0.5, n_theta=4096)
    T_ode = closed_period_ode(p2, 0.5)
    assert abs(sup.T_L - T_ode) / T_ode < 1e-8


def test_support_defect_near_machine(p2):
    for A in (0.3, 1.0):
        sup = build_support(p2, A, n_theta=2048)
        assert sup.R_supp <= 1e-10
        assert abs(np.sum(sup.dt) - sup.T_L) < 1e-12


def test_refinement_monotone_and_extrapolates(p2):
    Ts = [build_support(p2, 0.5, n_theta=n).T_L for n in (256, 512, 1024, 2048)]
    gaps = [abs(Ts[i] - Ts[i + 1]) for i in range(3)]
    assert gaps[1] <= gaps[0] and gaps[2] <= gaps[1]
    assert abs(Ts[-1] - closed_period_ode(p2, 0.5)) < 1e-8 * Ts[-1]


def test_action_frequency_relation(p2):
    # dE/dJ across neighboring amplitudes equals 2*pi/T_L
    A, dA = 0.5, 1e-3
    lo = build_support(p2, A - dA, n_theta=4096)
    hi = build_support(p2, A + dA, n_theta=4096)
    mid = build_support(p2, A, n_theta=4096)
    dE_dJ = (hi.E_perp - lo.E_perp) / (hi.J_L - lo.J_L)
    omega = 2.0 * np.pi / mid.T_L
    assert abs(dE_dJ - omega) / omega < 1e-4


def test_multi_well_detected():
    p = Params2Seg(epsilon=0.7, gamma=1.5, k2=-1.0, k4=1.0)
    with pytest.raises(SupportError, match="multi-well"):
        build_support(p, 1.0, n_theta=256)


def test_pendulum_circular_limit():
    T, J = pendulum_oracle(0.0)
    assert abs(T - 2.0 * np.pi) < 1e-14
    assert J == 0.0


def test_pendulum_against_action_quadrature():
    for k in (0.3, 0.5, 0.9):
        T, J = pendulum_oracle(k)
        Tq, Jq = pendulum_quadrature(k)
        assert abs(T - Tq) < 1e-10
        assert abs(J - Jq) < 1e-10


def test_pendulum_period_increases_with_modulus():
    ks = np.linspace(0.0, 0.95, 12)
    Ts = [pendulum_oracle(k)[0] for k in ks]
    assert all(Ts[i + 1] > Ts[i] for i in range(len(Ts) - 1))


def test_pendulum_rejects_separatrix():
    with pytest.raises(ValueError, match="above-separatrix"):
        pendulum_oracle(1.0)


def test_agm_against_series_values():
    # K(0) = E(0) = pi/2; K and E at k = 0.5 against their hypergeometric
    # series evaluated to convergence
    assert abs(agm_elliptic_K(0.0) - np.pi / 2) < 1e-15
    assert abs(agm_elliptic_E(0.0) - np.pi / 2) < 1e-15

    def series_K(k, n=200):
        m = k * k
        total, term = 0.0, 1.0
        for j in range(n):
            if j > 0:
                term *= ((2 * j - 1) / (2 * j)) ** 2 * m
            total += term
        return np.pi / 2 * total

    def series_E(k, n=200):
        m = k * k
        total, term = 1.0, 1.0
        for j in range(1, n):
            term *= ((2 * j - 1) / (2 * j)) ** 2 * m
            total -= term / (2 * j - 1)
        return np.pi / 2 * total

    for k in (0.2, 0.5, 0.7):
        assert abs(agm_elliptic_K(k) - series_K(k)) < 1e-13
        assert abs(agm_elliptic_E(k) - series_E(k)) < 1e-13
