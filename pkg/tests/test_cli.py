import json
import os

import numpy as np
import pytest

from nlmcert.cli import main
from nlmcert.config import ConfigError, load_config
from nlmcert.report import write_cycle_series_2seg, write_cycle_series_3seg


def test_config_round_trip_and_unknown_key_rejected(tmp_path):
    good = """
[run]
system = 2seg
task = solve

[params2seg]
epsilon = 0.7
gamma = 1.5

[tolerances]
tau_ex = 1e-10

[flags]
vbar = 4.0
"""
    cfg = load_config(good, is_text=True)
    assert cfg.params2.epsilon == 0.7
    assert cfg.vbar == 4.0
    with pytest.raises(ConfigError, match="unknown key"):
        load_config("[flags]\nbogus = 1\n", is_text=True)
    with pytest.raises(ConfigError, match="unknown key"):
        load_config("[params2seg]\nepsilonn = 0.5\n", is_text=True)
    with pytest.raises(ConfigError, match="unknown section"):
        load_config("[mystery]\nx = 1\n", is_text=True)
    with pytest.raises(ConfigError):
        load_config("[tolerances]\ntau_ex = -1\n", is_text=True)


def test_oracle_pendulum_exit_and_report(tmp_path):
    out = tmp_path / "o"
    assert main(["oracle", "pendulum", "--k", "0.5", "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["difference"]["J"] < 1e-10
    assert rep["difference"]["T"] < 1e-10
    assert rep["provenance"]["tool"] == "nlmcert"


def test_oracle_schur_and_energy(tmp_path):
    assert main(["oracle", "schur", "--out", str(tmp_path / "s")]) == 0
    assert main(["oracle", "energy", "--out", str(tmp_path / "e")]) == 0


def test_support_run_is_deterministic(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        assert main(["2seg", "support", "--amplitude", "0.5",
                     "--out", str(out)]) == 0
    assert (out1 / "support.csv").read_bytes() == \
        (out2 / "support.csv").read_bytes()
    assert (out1 / "report.json").read_bytes() == \
        (out2 / "report.json").read_bytes()


def test_solve_writes_certificate(tmp_path):
    out = tmp_path / "solve"
    code = main(["2seg", "solve", "--vbar", "5", "--out", str(out)])
    assert code == 0
    lines = (out / "certificates.csv").read_text().strip().splitlines()
    assert lines[0].startswith("vbar,tau,I_POE")
    vals = dict(zip(lines[0].split(","), lines[1].split(",")))
    assert abs(float(vals["scaled_norm"])) <= 1e-10
    rep = json.loads((out / "report.json").read_text())
    assert rep["accepted"] == 1


def test_cycle_series_columns(tmp_path, p2, cycles_2seg):
    path = tmp_path / "cycle.csv"
    cyc = cycles_2seg["accepted"][0]
    write_cycle_series_2seg(str(path), p2, cyc, n=512)
    rows = np.genfromtxt(path, delimiter=",", names=True)
    # internal coordinates close over the period
    for col in ("delta", "sigma", "v", "omega"):
        assert abs(rows[col][0] - rows[col][-1]) < 1e-9
    # the exchange-power column integrates to the exchange residual
    ts = rows["t"]
    I = np.trapezoid(rows["P_POE"], ts)
    assert abs(I - cyc.residual.I_POE * cyc.Y0.s) < 1e-8


def test_closed_leaf_series_constant_storage(tmp_path, p3, modes3,
                                             support_ap):
    from nlmcert.kernel import integrate
    from nlmcert.model_3seg import closed_leaf_state, f_perp
    from nlmcert.opened_3seg import LiftedCycle
    traj = integrate(lambda t, y: f_perp(p3, y), support_ap.y0, support_ap.T)
    ts = np.linspace(0.0, support_ap.T, 97)
    Z = np.array([closed_leaf_state(p3, traj.state(t)) for t in ts])
    cyc = LiftedCycle(nodes=Z, T=support_ap.T, sector="AP")
    cyc.ensure_f(p3)
    path = tmp_path / "leaf.csv"
    write_cycle_series_3seg(str(path), p3, cyc, n=256)
    rows = np.genfromtxt(path, delimiter=",", names=True)
    E = rows["E_perp"]
    assert E.max() - E.min() < 1e-10
