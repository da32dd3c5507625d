import numpy as np
import pytest

from nlmcert.kernel import (DomainExit, EventSpec, KernelError,
                            StiffOrSingular, damped_least_squares, integrate,
                            sym_gen_eig)


def harmonic(t, y):
    return np.array([y[1], -y[0]])


def test_harmonic_oscillator_closes():
    traj = integrate(harmonic, [1.0, 0.0], 2.0 * np.pi)
    assert np.abs(traj.y[-1] - [1.0, 0.0]).max() < 1e-9


def test_dense_output_matches_nodes():
    traj = integrate(harmonic, [1.0, 0.0], 3.0)
    for k in range(0, traj.t.size, 7):
        assert np.abs(traj.state(traj.t[k]) - traj.y[k]).max() < 1e-13


def test_event_upward_crossing_of_sine():
    # state integrates y' = cos(t) from y(0.1) = sin(0.1), so y(t) = sin(t);
    # the first upward zero after leaving the start is t = 2*pi
    ev = EventSpec(fn=lambda y: y[0], direction=+1, name="zero")
    traj = integrate(lambda t, y: np.array([np.cos(t)]), [np.sin(0.1)], 10.0,
                     events=[ev], t0=0.1)
    assert traj.event_name == "zero"
    assert abs(traj.event_time - 2.0 * np.pi) < 1e-10


def test_event_skip_initial_arms_after_leaving_surface():
    ev = EventSpec(fn=lambda y: y[0], direction=+1, skip_initial=True,
                   arm_threshold=1e-6, name="sec")
    traj = integrate(harmonic, [0.0, 1.0], 20.0, events=[ev])
    # y1 = sin(t): skip the t=0 surface point, fire at 2*pi
    assert abs(traj.event_time - 2.0 * np.pi) < 1e-9


def test_event_idempotence():
    ev = EventSpec(fn=lambda y: y[0], direction=+1, name="zero")
    tr1 = integrate(lambda t, y: np.array([np.cos(t)]), [np.sin(0.1)], 10.0,
                    events=[ev], t0=0.1)
    t_star = tr1.event_time
    # restart shortly before the located event; it must be found again
    t_back = t_star - 0.3
    tr2 = integrate(lambda t, y: np.array([np.cos(t)]), [np.sin(t_back)], 2.0,
                    events=[ev], t0=t_back)
    assert abs(tr2.event_time - t_star) < 1e-10


def test_accumulator_constant_integrand():
    traj = integrate(harmonic, [1.0, 0.0], 3.0,
                     accumulators=[("area", lambda t, y: 1.0)])
    assert abs(traj.acc["area"][-1] - 3.0) < 1e-12


def test_tolerance_refinement_improves_endpoint():
    errs = []
    for tol in (1e-6, 5e-7, 2.5e-7):
        traj = integrate(harmonic, [1.0, 0.0], 20.0 * np.pi, rtol=tol,
                         atol=tol)
        errs.append(np.abs(traj.y[-1] - [1.0, 0.0]).max())
    assert errs[1] <= 0.95 * errs[0]
    assert errs[2] <= 0.95 * errs[1]


def test_domain_exit_carries_guard_name():
    def rhs(t, y):
        if y[0] > 0.5:
            raise DomainExit("test-guard")
        return np.array([1.0])

    with pytest.raises(DomainExit) as err:
        integrate(rhs, [0.0], 2.0)
    assert err.value.guard == "test-guard"


def test_blowup_reports_stiff_or_singular():
    with pytest.raises((StiffOrSingular, KernelError)):
        integrate(lambda t, y: y * y, [1.0], 5.0)


def test_sym_gen_eig_diagonal():
    w, V = sym_gen_eig(np.diag([1.0, 4.0]), np.eye(2))
    assert np.allclose(w, [1.0, 4.0])
    assert np.allclose(np.abs(V), np.eye(2))


def test_sym_gen_eig_exchange_symmetric():
    K = np.array([[2.0, -1.0], [-1.0, 2.0]])
    w, V = sym_gen_eig(K, np.eye(2))
    assert np.allclose(w, [1.0, 3.0])
    assert np.allclose(np.abs(V[:, 0]), [1, 1] / np.sqrt(2))
    assert np.allclose(np.abs(V[:, 1]), [1, 1] / np.sqrt(2))
    assert V[0, 0] * V[1, 0] > 0 and V[0, 1] * V[1, 1] < 0


def test_sym_gen_eig_random_spd_residual(rng):
    for _ in range(20):
        A = rng.normal(size=(4, 4))
        K = A + A.T
        B = rng.normal(size=(4, 4))
        M = B @ B.T + 4.0 * np.eye(4)
        w, V = sym_gen_eig(K, M)
        for j in range(4):
            res = K @ V[:, j] - w[j] * M @ V[:, j]
            assert np.abs(res).max() < 1e-9
        gram = V.T @ M @ V
        assert np.abs(gram - np.eye(4)).max() < 1e-10


def test_sym_gen_eig_indefinite_metric():
    with pytest.raises(KernelError, match="indefinite-metric"):
        sym_gen_eig(np.eye(2), np.diag([1.0, -1.0]))


def test_least_squares_linear_scalar():
    out = damped_least_squares(lambda x: np.array([x[0] - 3.0]), [0.0])
    assert out.converged
    assert abs(out.x[0] - 3.0) < 1e-12


def test_least_squares_rosenbrock():
    def res(x):
        return np.array([10.0 * (x[1] - x[0] ** 2), 1.0 - x[0]])

    out = damped_least_squares(res, [-1.0, 1.0], tol=1e-12, max_iter=200)
    assert np.abs(out.x - [1.0, 1.0]).max() < 1e-8


def test_least_squares_scaling_preserves_zero_set():
    def res(x):
        return np.array([x[0], x[1]])

    plain = damped_least_squares(res, [0.3, -0.2])
    weighted = damped_least_squares(res, [0.3, -0.2],
                                    scaling=np.array([10.0, 1.0]))
    assert np.abs(plain.x).max() < 1e-11
    assert np.abs(weighted.x).max() < 1e-11
    # scaled residual is zero exactly when the unscaled one is
    assert weighted.scaled_norm < 1e-10
    assert np.abs(weighted.residual).max() < 1e-10


def test_least_squares_rejects_zero_weights():
    with pytest.raises(KernelError):
        damped_least_squares(lambda x: np.array([x[0]]), [1.0],
                             scaling=np.array([0.0]))
