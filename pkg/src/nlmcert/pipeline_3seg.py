"""High-level three-segment search drivers used by the command line and the
acceptance suite: sector-cycle search at the frozen architecture and the
same-physical pairing run.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .model_3seg import Params3Seg, theta_star
from .modal_3seg import ParentModes, solve_parent_modes, solve_support
from .opened_3seg import (CertThresholds, ExtraRow, FinalCertificate,
                          LiftOpen, LiftedCycle, assemble_final_certificate,
                          lift_support, mobility_probe, paired_certificate,
                          PairReport)

__all__ = ["SectorSearchPlan", "find_sector_cycle", "run_pair",
           "PairRunResult"]


@dataclass
class SectorSearchPlan:
    """One sector's lift-and-polish schedule.

    Each attempt is (amplitude, carrier speed offset, cover multiplicity,
    mesh size, pinned). Unpinned attempts solve the free cycle system and
    work where the sector's exchange balance has a genuine zero; pinned
    attempts keep the mean-speed and exchange rows active during the solve,
    which is how anti-phase movement is reached, and leave the imbalance in
    the reported dynamics-defect row.
    """

    sector: str
    attempts: tuple = ()

    @staticmethod
    def default_ip() -> "SectorSearchPlan":
        return SectorSearchPlan(sector="IP", attempts=(
            (0.05, 8.0, 1, 192, False),
            (0.05, 6.0, 1, 192, False),
            (0.04, 8.0, 1, 192, True),
        ))

    @staticmethod
    def default_ap() -> "SectorSearchPlan":
        return SectorSearchPlan(sector="AP", attempts=(
            (0.01, 0.3, 3, 240, True),
            (0.01, 0.3, 3, 288, True),
            (0.01, 0.2, 3, 240, True),
        ))


def find_sector_cycle(p: Params3Seg, modes: ParentModes,
                      plan: SectorSearchPlan,
                      thresholds: CertThresholds = CertThresholds(),
                      poe_row_enabled: bool = True,
                      log: list | None = None):
    """Search the plan for one fully certifying cycle of the sector.

    Candidates are scored by the mobility probe for reporting; acceptance
    is only ever the full final certificate.
    """
    best = None
    for amplitude, v0, n_cover, N, pinned in plan.attempts:
        try:
            support = solve_support(p, modes, plan.sector, amplitude)
        except Exception as exc:
            if log is not None:
                log.append((plan.sector, amplitude, v0, f"support: {exc}"))
            continue
        rows = ()
        if pinned:
            rows = (ExtraRow(kind="speed", target=v0, scale=1.0, weight=10.0),
                    ExtraRow(kind="poe", target=0.0, scale=1.0, weight=10.0))
        try:
            cycle = lift_support(p, support, modes, qc0=(v0, 0.0),
                                 n_cover=n_cover, N=N, extra_rows=rows,
                                 itmax=70)
        except (LiftOpen, Exception) as exc:
            if log is not None:
                log.append((plan.sector, amplitude, v0, f"lift: {exc}"))
            continue
        cert = assemble_final_certificate(p, cycle, modes,
                                          thresholds=thresholds,
                                          poe_row_enabled=poe_row_enabled)
        score = mobility_probe({
            "R_supp": cert.mech_rows["R_supp_fin"],
            "R_id": cert.mech_rows["R_id_fin"],
            "R_lift": cycle.R_rep,
            "R_POE": cert.mech_rows["R_POE_fin"],
            "d_g": cert.mech_rows.get("d_g", 0.0),
        }, d_min=thresholds.d_min)
        if log is not None:
            log.append((plan.sector, amplitude, v0, cert.label))
        if cert.label in ("natural", "natural-candidate") and cert.mech_pass:
            return cycle, cert
        if best is None or score.rank_key > best[2].rank_key:
            best = (cycle, cert, score)
    if best is not None:
        return best[0], best[1]
    raise LiftOpen(f"no {plan.sector} candidate produced")


@dataclass
class PairRunResult:
    cert_ip: FinalCertificate
    cert_ap: FinalCertificate
    pair: PairReport
    cycle_ip: LiftedCycle
    cycle_ap: LiftedCycle
    modes: ParentModes
    log: list = field(default_factory=list)


def run_pair(p: Params3Seg | None = None,
             thresholds: CertThresholds = CertThresholds(),
             poe_row_enabled: bool = True,
             plan_ip: SectorSearchPlan | None = None,
             plan_ap: SectorSearchPlan | None = None) -> PairRunResult:
    """Find and pair one certified cycle per sector at the same architecture."""
    p = p or theta_star()
    modes = solve_parent_modes(p)
    log: list = []
    cyc_ip, cert_ip = find_sector_cycle(
        p, modes, plan_ip or SectorSearchPlan.default_ip(),
        thresholds=thresholds, poe_row_enabled=poe_row_enabled, log=log)
    cyc_ap, cert_ap = find_sector_cycle(
        p, modes, plan_ap or SectorSearchPlan.default_ap(),
        thresholds=thresholds, poe_row_enabled=poe_row_enabled, log=log)
    pair = paired_certificate(p, cert_ip, cert_ap)
    return PairRunResult(cert_ip=cert_ip, cert_ap=cert_ap, pair=pair,
                         cycle_ip=cyc_ip, cycle_ap=cyc_ap, modes=modes,
                         log=log)
