"""Run configuration: a flat key = value file with sections, strictly
validated (unknown keys are rejected so a typo cannot silently change a
run), hashed for provenance.
"""
from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields

from .model_2seg import Params2Seg
from .model_3seg import Params3Seg, theta_star
from .opened_3seg import CertThresholds

__all__ = ["RunConfig", "ConfigError", "load_config", "config_hash",
           "default_config_text"]


class ConfigError(ValueError):
    pass


_RUN_KEYS = {"system", "task", "output_dir", "seed"}
_FLAG_KEYS = {"poe_row_enabled", "m_cov", "gauge", "chart", "vbar",
              "vbar_grid", "amplitude", "amplitude_ladder", "n_theta",
              "n_mesh", "sector", "k_modulus"}
_TOL_KEYS = {"tau_ex", "rtol", "tau_poe", "tau_z", "tau_car", "tau_rhs",
             "tau_id", "d_min", "tau_supp"}


@dataclass
class RunConfig:
    system: str = "2seg"
    task: str = "solve"
    output_dir: str = "out"
    seed: int = 0
    params2: Params2Seg = field(default_factory=Params2Seg)
    params3: Params3Seg = field(default_factory=theta_star)
    tau_ex: float = 1e-10
    rtol: float = 1e-12
    thresholds: CertThresholds = field(default_factory=CertThresholds)
    poe_row_enabled: bool = True
    m_cov: int = 3
    gauge: str = "modal"
    chart: str = "mean-speed"
    vbar: float = 5.0
    vbar_grid: tuple = (2.0, 3.0, 4.0, 5.0, 7.0, -2.0, -3.0, -4.0, -5.0, -7.0)
    amplitude: float = 0.85
    amplitude_ladder: tuple = (0.01, 0.05)
    n_theta: int = 4096
    n_mesh: int = 192
    sector: str = "IP"
    k_modulus: float = 0.5

    def validate(self):
        if self.system not in ("2seg", "3seg", "oracle"):
            raise ConfigError(f"unknown system '{self.system}'")
        for name in ("tau_ex", "rtol"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be positive")
        for f in fields(self.thresholds):
            if getattr(self.thresholds, f.name) <= 0.0:
                raise ConfigError(f"threshold {f.name} must be positive")
        if self.m_cov not in (1, 3):
            raise ConfigError("m_cov must be 1 or 3")
        return self


def _parse_floats(text: str) -> tuple:
    return tuple(float(tok) for tok in text.replace(",", " ").split())


def load_config(path_or_text: str, is_text: bool = False) -> RunConfig:
    """Parse and validate a sectioned key = value configuration."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if is_text:
        cp.read_string(path_or_text)
    else:
        with open(path_or_text) as fh:
            cp.read_string(fh.read())
    cfg = RunConfig()
    for section in cp.sections():
        items = dict(cp.items(section))
        if section == "run":
            for k, v in items.items():
                if k not in _RUN_KEYS:
                    raise ConfigError(f"unknown key '{k}' in [run]")
                if k == "seed":
                    cfg.seed = int(v)
                else:
                    setattr(cfg, k, v)
        elif section == "params2seg":
            known = {f.name for f in fields(Params2Seg)}
            bad = set(items) - known
            if bad:
                raise ConfigError(f"unknown keys {sorted(bad)} in [params2seg]")
            base = {f.name: getattr(cfg.params2, f.name)
                    for f in fields(Params2Seg)}
            base.update({k: float(v) for k, v in items.items()})
            cfg.params2 = Params2Seg(**base)
        elif section == "params3seg":
            known = {f.name for f in fields(Params3Seg)}
            bad = set(items) - known
            if bad:
                raise ConfigError(f"unknown keys {sorted(bad)} in [params3seg]")
            base = {f.name: getattr(cfg.params3, f.name)
                    for f in fields(Params3Seg)}
            base.update({k: float(v) for k, v in items.items()})
            cfg.params3 = Params3Seg(**base)
        elif section == "tolerances":
            bad = set(items) - _TOL_KEYS
            if bad:
                raise ConfigError(f"unknown keys {sorted(bad)} in [tolerances]")
            th = {f.name: getattr(cfg.thresholds, f.name)
                  for f in fields(CertThresholds)}
            for k, v in items.items():
                if k in ("tau_ex", "rtol"):
                    setattr(cfg, k, float(v))
                elif k == "tau_poe":
                    th["tau_poe"] = float(v)
                elif k == "tau_z":
                    th["tau_z"] = float(v)
                elif k == "tau_car":
                    th["tau_car"] = float(v)
                elif k == "tau_rhs":
                    th["tau_rhs"] = float(v)
                elif k == "tau_id":
                    th["tau_id"] = float(v)
                elif k == "tau_supp":
                    th["tau_supp"] = float(v)
                elif k == "d_min":
                    th["d_min"] = float(v)
            cfg.thresholds = CertThresholds(**th)
        elif section == "flags":
            bad = set(items) - _FLAG_KEYS
            if bad:
                raise ConfigError(f"unknown keys {sorted(bad)} in [flags]")
            for k, v in items.items():
                if k == "poe_row_enabled":
                    cfg.poe_row_enabled = v.strip().lower() in ("1", "true",
                                                                "yes", "on")
                elif k in ("m_cov", "n_theta", "n_mesh"):
                    setattr(cfg, k, int(v))
                elif k in ("vbar", "amplitude", "k_modulus"):
                    setattr(cfg, k, float(v))
                elif k in ("vbar_grid", "amplitude_ladder"):
                    setattr(cfg, k, _parse_floats(v))
                else:
                    setattr(cfg, k, v.strip())
        else:
            raise ConfigError(f"unknown section [{section}]")
    return cfg.validate()


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def default_config_text() -> str:
    buf = io.StringIO()
    cfg = RunConfig()
    buf.write("[run]\nsystem = 2seg\ntask = solve\noutput_dir = out\nseed = 0\n\n")
    buf.write("[params2seg]\n")
    for f in fields(Params2Seg):
        buf.write(f"{f.name} = {getattr(cfg.params2, f.name)!r}\n")
    buf.write("\n[params3seg]\n")
    for f in fields(Params3Seg):
        buf.write(f"{f.name} = {getattr(cfg.params3, f.name)!r}\n")
    buf.write("\n[tolerances]\ntau_ex = 1e-10\nrtol = 1e-12\n")
    buf.write("\n[flags]\npoe_row_enabled = true\nvbar = 5.0\n")
    return buf.getvalue()
