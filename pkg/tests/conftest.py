import numpy as np
import pytest

from nlmcert.model_2seg import Params2Seg
from nlmcert.model_3seg import theta_star
from nlmcert.modal_3seg import solve_parent_modes, solve_support
from nlmcert.opened_2seg import continue_in_speed, reconstruct_pose_2seg
from nlmcert.pipeline_3seg import run_pair
from nlmcert.support_2seg import build_support

SPEED_GRID = (2.0, 3.0, 4.0, 5.0, 7.0, -2.0, -3.0, -4.0, -5.0, -7.0)


@pytest.fixture(scope="session")
def p2():
    return Params2Seg()


@pytest.fixture(scope="session")
def p3():
    return theta_star()


@pytest.fixture(scope="session")
def seed_support_2seg(p2):
    return build_support(p2, 0.85, n_theta=512)


@pytest.fixture(scope="session")
def cycles_2seg(p2, seed_support_2seg):
    import time
    t0 = time.time()
    accepted, rejections = continue_in_speed(p2, SPEED_GRID, seed_support_2seg)
    for cyc in accepted:
        reconstruct_pose_2seg(p2, cyc)
    return {"accepted": accepted, "rejections": rejections,
            "elapsed": time.time() - t0}


@pytest.fixture(scope="session")
def modes3(p3):
    return solve_parent_modes(p3)


@pytest.fixture(scope="session")
def support_ip(p3, modes3):
    return solve_support(p3, modes3, "IP", 0.05)


@pytest.fixture(scope="session")
def support_ap(p3, modes3):
    return solve_support(p3, modes3, "AP", 0.01)


@pytest.fixture(scope="session")
def pair_result(p3):
    import time
    t0 = time.time()
    result = run_pair(p3)
    result.elapsed = time.time() - t0
    return result


@pytest.fixture()
def rng():
    return np.random.default_rng(20260808)
