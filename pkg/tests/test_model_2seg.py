import numpy as np
import pytest

from nlmcert.kernel import integrate
from nlmcert.model_2seg import (Params2Seg, closed_rhs_2seg, domain_check,
                                eval_Eperp_2seg, eval_coeffs, f_int_2seg,
                                mass_matrix_2seg, reduced_energy_2seg)


def test_origin_values(p2):
    c = eval_coeffs(p2, 0.0)
    assert c.rho == 0.0
    assert c.Uprime == 0.0
    assert abs(c.B12 - (p2.j2 + p2.mu * p2.beta ** 2
                        + p2.mu * p2.alpha * p2.beta)) < 1e-15
    assert abs(c.Delta - c.B11) < 1e-15


def test_schur_equivalence_random(rng):
    # closed-form reduced inertia vs numerical elimination of the carrier
    # block of the assembled 3x3 matrix
    for _ in range(1000):
        p = Params2Seg(epsilon=rng.uniform(0.05, 0.95),
                       gamma=rng.uniform(0.05, 4.0))
        d = rng.uniform(-1.2, 1.2)
        M = mass_matrix_2seg(p, d)
        brute = M[2, 2] - M[2, :2] @ np.linalg.solve(M[:2, :2], M[:2, 2])
        c = eval_coeffs(p, d)
        assert abs(c.Meff - brute) <= 1e-11 * max(1.0, abs(c.Meff))


def test_meff_prime_matches_central_differences(p2):
    for d in (-0.9, -0.3, 0.2, 0.7):
        c = eval_coeffs(p2, d)
        for h in (1e-3, 1e-4):
            fd = (eval_coeffs(p2, d + h).Meff
                  - eval_coeffs(p2, d - h).Meff) / (2.0 * h)
            assert abs(fd - c.MeffPrime) <= 10.0 * h * h


def test_parity_on_grid(p2):
    for d in np.linspace(0.05, 1.2, 12):
        cp = eval_coeffs(p2, d)
        cm = eval_coeffs(p2, -d)
        assert abs(cp.rho + cm.rho) < 1e-14
        for name in ("B11", "B12", "Meff", "Delta", "U"):
            assert abs(getattr(cp, name) - getattr(cm, name)) < 1e-14


def test_eperp_basics(p2):
    assert eval_Eperp_2seg(p2, 0.0, 0.0) == 0.0
    assert eval_Eperp_2seg(p2, 0.4, 1.3) == eval_Eperp_2seg(p2, 0.4, -1.3)


def test_closed_field_preserves_storage(p2):
    y0 = np.array([0.4, 0.0])
    traj = integrate(lambda t, y: closed_rhs_2seg(p2, y), y0, 3.0)
    E0 = eval_Eperp_2seg(p2, *y0)
    for t in np.linspace(0.0, traj.tf, 40):
        y = traj.state(t)
        assert abs(eval_Eperp_2seg(p2, *y) - E0) < 1e-10


def test_domain_check_default_box(p2):
    assert all(domain_check(p2, d).ok for d in np.linspace(-1.2, 1.2, 97))


def test_domain_guards_fire_at_margin(p2):
    # the reduced inertia block is a Schur complement of a positive
    # definite matrix, so for admissible architectures the guards can only
    # fire through the margin; that is exactly the classifier definition
    c = eval_coeffs(p2, 0.0)
    rep = domain_check(p2, 0.0, margin=2.0 * c.Meff)
    assert not rep.ok and rep.guard == "Meff-nonpositive"
    rep = domain_check(p2, 0.0, margin=2.0 * c.Delta)
    # Delta is checked first
    assert not rep.ok and rep.guard == "Delta-singular"


def test_reduced_field_conserves_energy(p2, rng):
    for _ in range(5):
        z0 = rng.uniform(-1, 1, 4) * np.array([0.8, 2.0, 1.5, 3.0])
        traj = integrate(lambda t, z: f_int_2seg(p2, z), z0, 2.0)
        E0 = reduced_energy_2seg(p2, z0)
        E1 = reduced_energy_2seg(p2, traj.y[-1])
        assert abs(E1 - E0) <= 1e-10 * max(1.0, abs(E0))


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError):
        Params2Seg(epsilon=1.2)
    with pytest.raises(ValueError):
        Params2Seg(gamma=-1.0)
