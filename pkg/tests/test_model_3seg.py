import numpy as np
import pytest

from nlmcert.kernel import integrate
from nlmcert.model_3seg import (Params3Seg, S_MIRROR, S_TIME_REVERSAL,
                                assemble_mass_matrix, carrier_channel,
                                closed_leaf_state, eperp_3seg, eperp_gradient,
                                eval_f_int, eval_potential_3seg,
                                eval_schur_layer, f_perp,
                                reduced_energy_3seg, theta_star)

MASS_SUM = 6.671125


def test_mass_matrix_symmetric(p3, rng):
    for _ in range(30):
        d1, d2 = rng.uniform(-1.2, 1.2, 2)
        M = assemble_mass_matrix(p3, d1, d2)
        assert np.abs(M - M.T).max() < 1e-13


def test_translation_entry_is_mass_sum(p3, rng):
    for _ in range(10):
        d1, d2 = rng.uniform(-1.2, 1.2, 2)
        M = assemble_mass_matrix(p3, d1, d2)
        assert abs(M[0, 0] - MASS_SUM) < 1e-12


def test_mass_matrix_positive_definite_at_origin(p3):
    M = assemble_mass_matrix(p3, 0.0, 0.0)
    assert np.linalg.eigvalsh(M).min() > 0.0


def test_potential_origin_and_decoupled_diagonal(p3):
    V, g = eval_potential_3seg(p3, 0.0, 0.0)
    assert V == 0.0 and np.abs(g).max() == 0.0
    a = 0.37
    V_equal, _ = eval_potential_3seg(p3, a, a)
    local = (0.5 * p3.k2_1 * a * a + 0.25 * p3.k4_1 * a ** 4
             + 0.5 * p3.k2_2 * a * a + 0.25 * p3.k4_2 * a ** 4)
    assert abs(V_equal - local) < 1e-15


def test_potential_gradient_matches_differences(p3):
    d1, d2 = 0.3, -0.2
    _, g = eval_potential_3seg(p3, d1, d2)
    h = 1e-6
    fd1 = (eval_potential_3seg(p3, d1 + h, d2)[0]
           - eval_potential_3seg(p3, d1 - h, d2)[0]) / (2 * h)
    fd2 = (eval_potential_3seg(p3, d1, d2 + h)[0]
           - eval_potential_3seg(p3, d1, d2 - h)[0]) / (2 * h)
    assert abs(g[0] - fd1) < 1e-9 and abs(g[1] - fd2) < 1e-9


def test_equilibrium_and_straight_coasting(p3):
    assert np.abs(eval_f_int(p3, np.zeros(6))).max() == 0.0
    z = np.array([0.0, 0.0, 1.7, 0.0, 0.0, 0.0])
    assert np.abs(eval_f_int(p3, z) - [0, 0, 0, 0, 0, 0]).max() < 1e-14


def test_energy_conservation_random_trajectory(p3):
    z0 = np.array([0.3, -0.2, 1.0, 0.5, 2.0, -3.0])
    traj = integrate(lambda t, z: eval_f_int(p3, z), z0, 5.0)
    E0 = reduced_energy_3seg(p3, z0)
    drift = max(abs(reduced_energy_3seg(p3, traj.y[i]) - E0)
                for i in range(0, traj.t.size, max(1, traj.t.size // 60)))
    assert drift / abs(E0) <= 1e-9


def test_schur_layer_matches_brute_force(p3, rng):
    for _ in range(20):
        d1, d2 = rng.uniform(-1.0, 1.0, 2)
        lay = eval_schur_layer(p3, d1, d2)
        M = assemble_mass_matrix(p3, d1, d2)
        brute = M[2:, 2:] - M[2:, :2] @ np.linalg.solve(M[:2, :2], M[:2, 2:])
        assert np.abs(lay.M_perp - brute).max() < 1e-12
        assert np.abs(lay.M_perp - lay.M_perp.T).max() < 1e-13


def test_transverse_inertia_positive_on_box(p3):
    m_min = np.inf
    for d1 in np.linspace(-1.2, 1.2, 13):
        for d2 in np.linspace(-1.2, 1.2, 13):
            lam = np.linalg.eigvalsh(eval_schur_layer(p3, d1, d2).M_perp)
            m_min = min(m_min, lam[0])
    assert m_min > 0.0


def test_energy_splits_into_carrier_and_storage(p3, rng):
    for _ in range(50):
        z = rng.uniform(-1, 1, 6) * np.array([1.0, 1.0, 2.0, 2.0, 4.0, 6.0])
        lay = eval_schur_layer(p3, z[0], z[1])
        qc = carrier_channel(p3, z)
        E_car = 0.5 * qc @ lay.M_GG @ qc
        E_perp = eperp_3seg(p3, z[:2], z[4:])
        assert abs(reduced_energy_3seg(p3, z) - (E_car + E_perp)) < 1e-11


def test_closed_leaf_is_zero_channel(p3, rng):
    for _ in range(20):
        y = rng.uniform(-1, 1, 4) * np.array([0.8, 0.8, 3.0, 5.0])
        z = closed_leaf_state(p3, y)
        assert np.abs(carrier_channel(p3, z)).max() < 1e-13


def test_transverse_field_preserves_storage(p3, rng):
    for _ in range(15):
        y0 = rng.uniform(-1, 1, 4) * np.array([0.4, 0.4, 2.0, 4.0])
        traj = integrate(lambda t, y: f_perp(p3, y), y0, 0.5)
        E0 = eperp_3seg(p3, y0[:2], y0[2:])
        E1 = eperp_3seg(p3, traj.y[-1][:2], traj.y[-1][2:])
        assert abs(E1 - E0) <= 1e-10 * max(1.0, abs(E0))


def test_storage_gradient_matches_differences(p3, rng):
    for _ in range(10):
        r = rng.uniform(-0.8, 0.8, 2)
        sg = rng.uniform(-3.0, 3.0, 2)
        gr, gs = eperp_gradient(p3, r, sg)
        h = 1e-6
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd = (eperp_3seg(p3, r + e, sg) - eperp_3seg(p3, r - e, sg)) / (2 * h)
            assert abs(fd - gr[i]) < 1e-8
            fd = (eperp_3seg(p3, r, sg + e) - eperp_3seg(p3, r, sg - e)) / (2 * h)
            assert abs(fd - gs[i]) < 1e-8


def test_involutions_exact(p3, rng):
    for _ in range(40):
        z = rng.uniform(-1, 1, 6) * np.array([0.9, 0.9, 2.0, 2.0, 4.0, 6.0])
        f = eval_f_int(p3, z)
        rev = S_TIME_REVERSAL @ f + eval_f_int(p3, S_TIME_REVERSAL @ z)
        mir = S_MIRROR @ f - eval_f_int(p3, S_MIRROR @ z)
        assert np.abs(rev).max() < 1e-9
        assert np.abs(mir).max() < 1e-9


def test_gyro_bias_velocity_parity(p3, rng):
    from nlmcert.model_3seg import gyro_vector
    for _ in range(20):
        d1, d2 = rng.uniform(-1, 1, 2)
        nu = rng.uniform(-2, 2, 4)
        a = gyro_vector(p3, d1, d2, *nu)
        b = gyro_vector(p3, d1, d2, *(-nu))
        assert np.abs(a - b).max() < 1e-13


def test_parameter_validation():
    with pytest.raises(ValueError):
        Params3Seg(I1=-1, I2=1, I3=1, l1=1, L2=1, L3=1, m1=1, m2=1, m3=1,
                   k12=0, k2_1=1, k2_2=1, k4_1=0, k4_2=0)


def test_theta_star_values_frozen():
    p = theta_star()
    assert p.m1 + p.m2 + p.m3 == pytest.approx(MASS_SUM, abs=1e-12)
    assert p.u1 == 0.0 and p.u2 == 0.0
