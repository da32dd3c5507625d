"""Report and artifact writers.

Numeric CSV output uses 17 significant digits so certificate rows round-trip
exactly; report tables are written in deterministic key order so identical
configurations produce byte-identical artifacts.
"""
from __future__ import annotations

import csv
import json
import os
from math import cos, sin

import numpy as np

from . import __version__
from .kernel import integrate
from .model_2seg import Params2Seg, eval_coeffs
from .opened_2seg import AcceptedCycle2Seg, poe_power_oriented

__all__ = ["fmt", "write_certificates_2seg", "write_cycle_series_2seg",
           "write_cycle_series_3seg", "write_report"]


def fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def write_report(path: str, payload: dict, config_text: str = "") -> None:
    from .config import config_hash
    payload = dict(payload)
    payload["provenance"] = {
        "tool": "nlmcert",
        "version": __version__,
        "config_sha256_16": config_hash(config_text),
    }
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True, default=_jsonify)
        fh.write("\n")


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if hasattr(obj, "__dict__"):
        return {k: v for k, v in vars(obj).items() if not k.startswith("_")}
    return str(obj)


CERT_COLUMNS_2SEG = ("vbar", "tau", "I_POE", "C_u", "C_Q", "S",
                     "scaled_norm", "dx", "dy", "dtheta")


def write_certificates_2seg(path: str, cycles: list[AcceptedCycle2Seg]) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CERT_COLUMNS_2SEG)
        for cyc in cycles:
            row = cyc.certificate_row()
            w.writerow([fmt(row[c]) for c in CERT_COLUMNS_2SEG])


def write_support_2seg(path: str, support) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("theta_j", "delta_j", "sigma_j", "dt_j"))
        for th, d, s, dt in zip(support.theta, support.delta, support.sigma,
                                support.dt):
            w.writerow([fmt(float(v)) for v in (th, d, s, dt)])


def write_cycle_series_2seg(path: str, p: Params2Seg,
                            cycle: AcceptedCycle2Seg, n: int = 512) -> None:
    """Per-cycle time series for external plotting."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    h, s = cycle.Y0.h, cycle.Y0.s
    ts = np.linspace(0.0, cycle.tau, n)

    def pose_rhs(t, g):
        Y = cycle.trajectory.state(t)
        u = Y[2]
        return np.array([u / h * cos(g[2]), u / h * sin(g[2]),
                         s * h * Y[3] / u])

    g_traj = integrate(pose_rhs, [0.0, 0.0, 0.0], cycle.tau, rtol=1e-11,
                       atol=1e-11)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("t", "delta", "sigma", "v", "omega", "E_perp", "P_POE",
                    "x", "y", "theta"))
        for t in ts:
            Y = cycle.trajectory.state(t)
            delta, zeta, u, Q = Y
            sigma = s * zeta
            v = s * u / h
            omega = h * Q / u
            c = eval_coeffs(p, delta)
            E_perp = 0.5 * c.Meff * sigma * sigma + c.U
            P = s * poe_power_oriented(p, Y, h, s)     # physical-time power
            g = g_traj.state(t)
            w.writerow([fmt(float(x)) for x in
                        (t, delta, sigma, v, omega, E_perp, P, g[0], g[1],
                         g[2])])


def write_cycle_series_3seg(path: str, p, cycle, n: int = 512) -> None:
    from .model_3seg import eperp_3seg, poe_power_3seg
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    ts = np.linspace(0.0, cycle.T, n)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("t", "delta1", "delta2", "v", "omega", "sigma1", "sigma2",
                    "E_perp", "P_POE"))
        for t in ts:
            z = cycle.state(p, t)
            E = eperp_3seg(p, z[:2], z[4:])
            P = poe_power_3seg(p, z)
            w.writerow([fmt(float(x)) for x in (t, *z, E, P)])
