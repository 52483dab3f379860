"""Run configuration: schema, defaults, validation and YAML round trip.

Every physical key carries its unit in its name (``_Hz``, ``_per_s``,
``_dBm`` ...).  Values are plain numbers in that unit; a string such as
``"13 MHz"`` is also accepted and converted, provided its unit matches the
key's.  Frequencies and widths are ordinary frequencies in Hz; the model
works in rad/s and the conversion happens in :func:`model_params`.
"""
from __future__ import annotations

import copy
import difflib
import math
import os
import re
from pathlib import Path

import yaml

from .experiment import LossBudget, ModelParams
from .propagation import MediumParams

__all__ = [
    "ConfigError",
    "DEFAULTS",
    "CONFIG_DIR_ENV",
    "load_config",
    "validate_config",
    "dump_config",
    "config_to_yaml",
    "model_params",
    "resolve_config_path",
    "extract_embedded_config",
]

CONFIG_DIR_ENV = "RAMANCONV_CONFIG_DIR"


class ConfigError(ValueError):
    pass


# None marks keys without a default (optional or command-specific)
DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "rates": {
        "gamma31_per_s": 60.0,
        "gamma32_per_s": 30.0,
        "gamma21_per_s": 27.4,
        "gamma2d_per_s": 1.7e6,
        "gamma3d_per_s": 2.8e6,
        "temperature_K": 4.2,
    },
    "inhomogeneity": {
        "sigma_mu_Hz": 13e6,
        "sigma_o_Hz": 1e9,
    },
    "medium": {
        "length_m": 12e-3,
        "refractive_index": 1.8,
        "alpha31_per_m": 20.0,
        "dipole_ratio": math.sqrt(0.5),
        "wavelength_m": 1536.478e-9,
    },
    "optics": {
        "beam_area_m2": 0.5e-6,
        "dipole23_Cm": 1.43e-33,
    },
    "microwave": {
        "frequency_Hz": 4.9e9,
        "linewidth_Hz": 16e6,
        "quality_factor": 300.0,
        "mode_volume_m3": 0.9e-6,
        "filling_factor": 0.8,
        "g_eff": 7.0,
    },
    "losses": {
        "zeta_mu_dB": 13.1,
        "zeta_xi_inv_dB": -6.4,
    },
    "quadrature": {
        "n_mu": 31,
        "n_o": 31,
        "span_sigma": 4.0,
    },
    "spin": {
        "g_tensor_path": None,
        "site": 1,
        "angle_deg": 32.5,
        "field_T": 0.178,
    },
    "spectrum": {
        "detuning_start_Hz": -6e9,
        "detuning_stop_Hz": 6e9,
        "detuning_steps": 241,
    },
    "raman_map": {
        "field_start_T": 0.16,
        "field_stop_T": 0.19,
        "field_steps": 40,
        "detuning_start_Hz": -5e9,
        "detuning_stop_Hz": 5e9,
        "detuning_steps": 40,
        "p_mu_input_dBm": -30.0,
        "p_xi_detector_W": 1e-7,
    },
    "sweep_mu": {
        "start_dBm": -40.0,
        "stop_dBm": 40.0,
        "steps": 41,
        "p_xi_detector_W": 1.8e-3,
    },
    "sweep_xi": {
        "start_W": 1e-9,
        "stop_W": 1e-1,
        "steps": 41,
        "p_mu_input_dBm": 0.0,
    },
    "operating_point": {
        "p_mu_input_dBm": 0.0,
        "p_xi_detector_W": 2e-3,
    },
    "epr": {
        "field_start_T": 0.170,
        "field_stop_T": 0.183,
        "field_steps": 261,
        "peak_shift_Hz": 260e3,
        "fm_depth_Hz": 1e6,
        "slope_Hz_per_T": None,
    },
    "fit": {
        "mu_data_csv": None,
        "xi_data_csv": None,
        "free": ["gamma2d", "gamma3d", "gamma21", "zeta_mu_dB", "zeta_xi_inv_dB"],
        "initial_scale": 2.0,
        "noise": 0.01,
        "max_iter": 50,
        # the low-P_xi end carries most of the gamma21 and gamma3d information
        "mu_points_dBm": [-40.0 + 76.0 * i / 39 for i in range(40)],
        "xi_points_W": [1e-7 * 10 ** (6.0 * i / 39) for i in range(40)],
    },
}

# keys whose value may be a string or a list rather than a number
_NON_NUMERIC = {"g_tensor_path", "mu_data_csv", "xi_data_csv", "free", "mu_points_dBm", "xi_points_W"}
_INTEGER = {"seed", "threads", "n_mu", "n_o", "site", "detuning_steps", "field_steps", "steps", "max_iter"}

_PREFIX = {"G": 1e9, "M": 1e6, "k": 1e3, "": 1.0, "m": 1e-3, "u": 1e-6, "µ": 1e-6, "n": 1e-9, "p": 1e-12}
_KEY_UNITS = {
    "_Hz": "Hz", "_K": "K", "_m": "m", "_m2": "m2", "_m3": "m3", "_T": "T", "_W": "W",
    "_per_s": "1/s", "_per_m": "1/m", "_dB": "dB", "_dBm": "dBm", "_Cm": "Cm", "_deg": "deg",
    "_Hz_per_T": "Hz/T",
}
_QUANTITY = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([A-Za-zµ/0-9]*)\s*$")


def _key_unit(key):
    best = None
    for suffix, unit in _KEY_UNITS.items():
        if key.endswith(suffix) and (best is None or len(suffix) > len(best[0])):
            best = (suffix, unit)
    return best[1] if best else None


def _parse_quantity(value: str, unit: str, where: str) -> float:
    m = _QUANTITY.match(value)
    if not m:
        raise ConfigError(f"{where}: cannot parse quantity {value!r}")
    number, u = float(m.group(1)), m.group(2)
    if u == "" or u == unit:
        return number
    if unit in ("Hz", "W", "m", "T", "K"):
        for p, scale in _PREFIX.items():
            if u == p + unit:
                return number * scale
    raise ConfigError(f"{where}: unit mismatch, {value!r} given but the key expects {unit}")


def _suggest(key, options):
    close = difflib.get_close_matches(key, options, n=1)
    return f" (did you mean {close[0]!r}?)" if close else ""


def _validate(user, defaults, path):
    if not isinstance(user, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(user).__name__}")
    out = copy.deepcopy(defaults)
    for key, value in user.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in defaults:
            raise ConfigError(f"unknown key {where!r}{_suggest(str(key), list(defaults))}")
        default = defaults[key]
        if isinstance(default, dict):
            out[key] = _validate(value if value is not None else {}, default, where)
        elif key in _NON_NUMERIC:
            if key == "free":
                if not isinstance(value, (list, tuple)) or not all(isinstance(v, str) for v in value):
                    raise ConfigError(f"{where}: expected a list of parameter names")
                out[key] = list(value)
            elif key.endswith(("_dBm", "_W")):
                if not isinstance(value, (list, tuple)):
                    raise ConfigError(f"{where}: expected a list of numbers")
                out[key] = [_number(v, key, where) for v in value]
            else:
                if value is not None and not isinstance(value, str):
                    raise ConfigError(f"{where}: expected a path string")
                out[key] = value
        else:
            out[key] = None if value is None and default is None else _number(value, key, where)
    return out


def _number(value, key, where):
    if isinstance(value, bool):
        raise ConfigError(f"{where}: expected a number, got a boolean")
    if isinstance(value, str):
        unit = _key_unit(key)
        if unit is None:
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        value = _parse_quantity(value, unit, where)
    if not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {type(value).__name__}")
    if key in _INTEGER:
        if float(value) != int(value):
            raise ConfigError(f"{where}: expected an integer")
        return int(value)
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{where}: value must be finite")
    return value


def validate_config(user: dict | None) -> dict:
    """Merge a user mapping into the defaults, rejecting unknown keys."""
    cfg = _validate(user or {}, DEFAULTS, "")
    if cfg["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    if cfg["seed"] < 0:
        raise ConfigError("seed must be >= 0")
    return cfg


def resolve_config_path(path) -> Path | None:
    """Find a config file; bare names are looked up in $RAMANCONV_CONFIG_DIR."""
    cfg_dir = os.environ.get(CONFIG_DIR_ENV)
    if path is None:
        if cfg_dir and (Path(cfg_dir) / "default.yaml").is_file():
            return Path(cfg_dir) / "default.yaml"
        return None
    p = Path(path)
    if p.is_file():
        return p
    if cfg_dir and (Path(cfg_dir) / p).is_file():
        return Path(cfg_dir) / p
    raise ConfigError(f"config file {str(path)!r} not found")


def extract_embedded_config(text: str) -> str:
    """The YAML block echoed in a CSV artifact's ``#`` header."""
    lines, inside = [], False
    for line in text.splitlines():
        if not line.startswith("#"):
            break
        body = line[2:] if line.startswith("# ") else line[1:]
        if body.rstrip() == "config:":
            inside = True
            continue
        if inside:
            if not body.startswith("  "):
                break
            lines.append(body[2:])
    if not lines:
        raise ConfigError("no embedded config block found")
    return "\n".join(lines) + "\n"


def load_config(path=None) -> dict:
    """Load and validate a YAML file (or the config embedded in a CSV artifact)."""
    p = resolve_config_path(path)
    if p is None:
        return validate_config({})
    text = p.read_text()
    if p.suffix.lower() == ".csv":
        text = extract_embedded_config(text)
    try:
        user = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"{p}: invalid YAML: {err}") from None
    return validate_config(user or {})


def config_to_yaml(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)


def dump_config(cfg: dict, path) -> None:
    Path(path).write_text(config_to_yaml(cfg))


def model_params(cfg: dict) -> ModelParams:
    r, inh, med, opt, mw, q = (cfg[k] for k in
                               ("rates", "inhomogeneity", "medium", "optics", "microwave", "quadrature"))
    two_pi = 2 * math.pi
    c_light = 299792458.0
    if not med["wavelength_m"] > 0:
        raise ConfigError("medium.wavelength_m must be positive")
    try:
        medium = MediumParams(
            length=med["length_m"],
            refractive_index=med["refractive_index"],
            alpha31=med["alpha31_per_m"],
            omega31=two_pi * c_light / med["wavelength_m"],
            omega_mu=two_pi * mw["frequency_Hz"],
            dipole_ratio=med["dipole_ratio"],
            sigma_o=two_pi * inh["sigma_o_Hz"],
        )
        return ModelParams(
            gamma31=r["gamma31_per_s"], gamma32=r["gamma32_per_s"], gamma21=r["gamma21_per_s"],
            gamma2d=r["gamma2d_per_s"], gamma3d=r["gamma3d_per_s"], temperature=r["temperature_K"],
            f_mu=mw["frequency_Hz"], sigma_mu=two_pi * inh["sigma_mu_Hz"], medium=medium,
            beam_area=opt["beam_area_m2"], dipole23=opt["dipole23_Cm"],
            quality_factor=mw["quality_factor"], mode_volume=mw["mode_volume_m3"],
            filling_factor=mw["filling_factor"], g_eff=mw["g_eff"],
            losses=LossBudget(cfg["losses"]["zeta_mu_dB"], cfg["losses"]["zeta_xi_inv_dB"]),
            n_mu=q["n_mu"], n_o=q["n_o"], span=q["span_sigma"], workers=cfg["threads"],
        )
    except ValueError as err:
        raise ConfigError(str(err)) from None
