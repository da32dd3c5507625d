"""Command-line entry points.

Subcommands mirror the pipeline stages:

    nlmcert 2seg support|solve|continue|certify
    nlmcert 3seg modes|support|lift|continue|certify|pair
    nlmcert oracle pendulum|schur|energy

Outputs land in the configured output directory: report.json,
certificates.csv and cycles/*.csv. Exit status is zero exactly when every
requested certification passed.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .model_2seg import eval_coeffs, mass_matrix_2seg
from .model_3seg import eval_f_int, reduced_energy_3seg
from .modal_3seg import solve_parent_modes, solve_support
from .opened_2seg import (CycleRejected, continue_in_speed,
                          reconstruct_pose_2seg, solve_cycle)
from .opened_3seg import assemble_final_certificate, lift_support
from .pipeline_3seg import run_pair
from .report import (fmt, write_certificates_2seg, write_cycle_series_2seg,
                     write_cycle_series_3seg, write_report, write_support_2seg)
from .support_2seg import build_support, pendulum_oracle, pendulum_quadrature


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file")
    common.add_argument("--out", help="output directory override")

    ap = argparse.ArgumentParser(prog="nlmcert")
    sub = ap.add_subparsers(dest="system", required=True)

    p2 = sub.add_parser("2seg")
    s2 = p2.add_subparsers(dest="task", required=True)
    for name in ("support", "solve", "continue", "certify"):
        t = s2.add_parser(name, parents=[common])
        t.add_argument("--vbar", type=float)
        t.add_argument("--vbar-grid", type=str)
        t.add_argument("--amplitude", type=float)
        t.add_argument("--ntheta", type=int)

    p3 = sub.add_parser("3seg")
    s3 = p3.add_subparsers(dest="task", required=True)
    for name in ("modes", "support", "lift", "continue", "certify", "pair"):
        t = s3.add_parser(name, parents=[common])
        t.add_argument("--sector", choices=("IP", "AP"))
        t.add_argument("--amplitude", type=float)
        t.add_argument("--vbar", type=float)
        t.add_argument("--m-cov", type=int, choices=(1, 3))
        t.add_argument("--no-poe-row", action="store_true")

    po = sub.add_parser("oracle")
    so = po.add_subparsers(dest="task", required=True)
    pk = so.add_parser("pendulum", parents=[common])
    pk.add_argument("--k", type=float, default=0.5)
    so.add_parser("schur", parents=[common])
    so.add_parser("energy", parents=[common])
    return ap


def _load(args) -> tuple[RunConfig, str]:
    if args.config:
        with open(args.config) as fh:
            text = fh.read()
        cfg = load_config(text, is_text=True)
    else:
        cfg, text = RunConfig(), ""
    if args.out:
        cfg.output_dir = args.out
    return cfg, text


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "vbar", None) is not None:
        cfg.vbar = args.vbar
    if getattr(args, "vbar_grid", None):
        cfg.vbar_grid = tuple(float(t) for t in
                              args.vbar_grid.replace(",", " ").split())
    if getattr(args, "amplitude", None) is not None:
        cfg.amplitude = args.amplitude
    if getattr(args, "ntheta", None) is not None:
        cfg.n_theta = args.ntheta
    if getattr(args, "sector", None):
        cfg.sector = args.sector
    if getattr(args, "m_cov", None) is not None:
        cfg.m_cov = args.m_cov
    if getattr(args, "no_poe_row", False):
        cfg.poe_row_enabled = False
    return cfg


def _run_2seg(cfg: RunConfig, text: str) -> int:
    p = cfg.params2
    out = cfg.output_dir
    if cfg.task == "support":
        sup = build_support(p, cfg.amplitude, n_theta=cfg.n_theta)
        write_support_2seg(os.path.join(out, "support.csv"), sup)
        write_report(os.path.join(out, "report.json"), {
            "task": "2seg support",
            "amplitude": sup.amplitude, "T_L": sup.T_L, "J_L": sup.J_L,
            "E_perp": sup.E_perp, "R_supp": sup.R_supp}, text)
        return 0
    seed = build_support(p, cfg.amplitude, n_theta=512)
    if cfg.task == "solve":
        try:
            cyc = solve_cycle(p, cfg.vbar, seed, tau_ex=cfg.tau_ex,
                              rtol=cfg.rtol)
        except CycleRejected as exc:
            write_report(os.path.join(out, "report.json"), {
                "task": "2seg solve", "vbar": cfg.vbar,
                "accepted": 0, "rejected": 1, "reason": exc.reason}, text)
            return 1
        reconstruct_pose_2seg(p, cyc)
        write_certificates_2seg(os.path.join(out, "certificates.csv"), [cyc])
        write_cycle_series_2seg(
            os.path.join(out, "cycles", f"cycle_vbar_{cfg.vbar:+g}.csv"),
            p, cyc)
        write_report(os.path.join(out, "report.json"), {
            "task": "2seg solve", "vbar": cfg.vbar, "accepted": 1,
            "rejected": 0, "certificate": cyc.certificate_row(),
            "energy_drift": cyc.energy_drift}, text)
        return 0 if cyc.residual.scaled_norm <= cfg.tau_ex else 1
    if cfg.task in ("continue", "certify"):
        accepted, rejections = continue_in_speed(p, cfg.vbar_grid, seed,
                                                 tau_ex=cfg.tau_ex,
                                                 rtol=cfg.rtol)
        rows = []
        for cyc in accepted:
            reconstruct_pose_2seg(p, cyc)
            rows.append(cyc.certificate_row())
            write_cycle_series_2seg(
                os.path.join(out, "cycles",
                             f"cycle_vbar_{cyc.vbar:+g}.csv"), p, cyc)
        write_certificates_2seg(os.path.join(out, "certificates.csv"),
                                accepted)
        ok = (len(rejections) == 0 and
              all(c.residual.scaled_norm <= cfg.tau_ex for c in accepted))
        write_report(os.path.join(out, "report.json"), {
            "task": f"2seg {cfg.task}",
            "accepted": len(accepted), "rejected": len(rejections),
            "rejections": [{"vbar": v, "reason": r} for v, r in rejections],
            "certificates": rows}, text)
        if cfg.task == "certify":
            return 0 if ok and accepted else 1
        return 0
    raise ConfigError(f"unknown 2seg task '{cfg.task}'")


def _run_3seg(cfg: RunConfig, text: str) -> int:
    p = cfg.params3
    out = cfg.output_dir
    modes = solve_parent_modes(p)
    if cfg.task == "modes":
        write_report(os.path.join(out, "report.json"), {
            "task": "3seg modes",
            "omega": modes.omega,
            "shape": {k: v.tolist() for k, v in modes.shape.items()},
            "M0": modes.M0.tolist(), "K0": modes.K0.tolist()}, text)
        return 0
    sector_amp = cfg.amplitude if cfg.amplitude <= 0.3 \
        else (0.05 if cfg.sector == "IP" else 0.01)
    if cfg.task == "support":
        sup = solve_support(p, modes, cfg.sector, sector_amp)
        write_report(os.path.join(out, "report.json"), {
            "task": "3seg support", "support": sup.record()}, text)
        return 0
    if cfg.task == "lift":
        sup = solve_support(p, modes, cfg.sector, sector_amp)
        cyc = lift_support(p, sup, modes, qc0=(cfg.vbar, 0.0),
                           n_cover=cfg.m_cov, N=cfg.n_mesh)
        cert = assemble_final_certificate(
            p, cyc, modes, thresholds=cfg.thresholds,
            poe_row_enabled=cfg.poe_row_enabled)
        write_cycle_series_3seg(
            os.path.join(out, "cycles", f"{cfg.sector}_lift.csv"), p, cyc)
        write_report(os.path.join(out, "report.json"), {
            "task": "3seg lift", "sector": cfg.sector,
            "T": cyc.T, "vbar": cert.vbar, "label": cert.label,
            "rows": cert.row_table(), "passes": cert.passes}, text)
        return 0 if cert.natural else 1
    if cfg.task in ("certify", "pair", "continue"):
        result = run_pair(p, thresholds=cfg.thresholds,
                          poe_row_enabled=cfg.poe_row_enabled)
        rows = []
        for tag, cert, cyc in (("IP", result.cert_ip, result.cycle_ip),
                               ("AP", result.cert_ap, result.cycle_ap)):
            rows.append({"sector": tag, "T": cert.T, "vbar": cert.vbar,
                         "label": cert.label, "natural": cert.natural,
                         "rows": cert.row_table(),
                         "delta_g": cert.delta_g})
            write_cycle_series_3seg(
                os.path.join(out, "cycles", f"{tag}_cycle.csv"), p, cyc)
        _write_family_csv(os.path.join(out, "certificates.csv"), rows)
        write_report(os.path.join(out, "report.json"), {
            "task": f"3seg {cfg.task}",
            "pair_ok": result.pair.ok, "pair_reason": result.pair.reason,
            "pair_rows": result.pair.rows, "cycles": rows,
            "search_log": [list(map(str, e)) for e in result.log]}, text)
        return 0 if result.pair.ok else 1
    raise ConfigError(f"unknown 3seg task '{cfg.task}'")


def _write_family_csv(path: str, rows: list[dict]) -> None:
    import csv
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    cols = ("sector", "T", "vbar", "label", "R_supp_fin", "R_id_fin",
            "R_car_fin", "R_z_fin", "R_rhs_fin", "R_rhs_int", "R_POE_fin",
            "R_g_fin", "d_g")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in rows:
            table = row["rows"]
            w.writerow([row["sector"], fmt(row["T"]), fmt(row["vbar"]),
                        row["label"]] +
                       [fmt(table.get(c, float("nan"))) for c in cols[4:]])


def _run_oracle(cfg: RunConfig, text: str, args) -> int:
    out = cfg.output_dir
    if cfg.task == "pendulum":
        k = args.k
        T, J = pendulum_oracle(k)
        Tq, Jq = pendulum_quadrature(k)
        write_report(os.path.join(out, "report.json"), {
            "task": "oracle pendulum", "k": k,
            "closed_form": {"T": T, "J": J},
            "quadrature": {"T": Tq, "J": Jq},
            "difference": {"T": abs(T - Tq), "J": abs(J - Jq)}}, text)
        return 0 if abs(J - Jq) < 1e-10 and abs(T - Tq) < 1e-10 else 1
    if cfg.task == "schur":
        p = cfg.params2
        rng = np.random.default_rng(cfg.seed)
        worst = 0.0
        for _ in range(200):
            d = rng.uniform(-1.1, 1.1)
            M = mass_matrix_2seg(p, d)
            brute = M[2, 2] - M[2, :2] @ np.linalg.solve(M[:2, :2], M[:2, 2])
            worst = max(worst, abs(brute - eval_coeffs(p, d).Meff))
        write_report(os.path.join(out, "report.json"), {
            "task": "oracle schur", "max_defect": worst}, text)
        return 0 if worst < 1e-11 else 1
    if cfg.task == "energy":
        from .kernel import integrate
        p3 = cfg.params3
        z0 = np.array([0.3, -0.2, 1.0, 0.5, 2.0, -3.0])
        traj = integrate(lambda t, z: eval_f_int(p3, z), z0, 5.0,
                         rtol=1e-12, atol=1e-12)
        E0 = reduced_energy_3seg(p3, traj.y[0])
        drift = max(abs(reduced_energy_3seg(p3, traj.y[i]) - E0)
                    for i in range(0, traj.t.size, max(1, traj.t.size // 50)))
        write_report(os.path.join(out, "report.json"), {
            "task": "oracle energy", "relative_drift": drift / abs(E0)}, text)
        return 0 if drift / abs(E0) < 1e-9 else 1
    raise ConfigError(f"unknown oracle task '{cfg.task}'")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg, text = _load(args)
        cfg.system = args.system
        cfg.task = args.task
        cfg = _apply_overrides(cfg, args)
        cfg.validate()
        if args.system == "2seg":
            return _run_2seg(cfg, text)
        if args.system == "3seg":
            return _run_3seg(cfg, text)
        return _run_oracle(cfg, text, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
