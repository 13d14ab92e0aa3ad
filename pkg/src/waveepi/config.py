"""Experiment configuration: YAML schema with defaults, strict unknown
key rejection, dotted-path overrides, and builders that turn a config
into simulation and reconstruction objects."""

from __future__ import annotations

import copy

import numpy as np
import yaml

from .forward import EncodingOperator, SliderEncoding, synth_shot_phases
from .grids import Grid
from .phantom import default_head_spec, make_coil_maps, make_phantom, make_random_coil_maps
from .sampling import make_pattern
from .waveform import WaveformSpec, make_psf


class ConfigError(ValueError):
    pass


# section -> key -> (type, default); None default means nullable
_SCHEMA = {
    "grid": {
        "nx": (int, 64),
        "ny": (int, 64),
        "nz_slabs": (int, 6),
        "fov_x_mm": (float, 220.0),
        "fov_y_mm": (float, 220.0),
        "slab_mm": (float, 20.0),
    },
    "phantom": {
        "kind": (str, "head"),
    },
    "coils": {
        "kind": (str, "ring"),  # ring | random
        "ncoils": (int, 16),
        "ring_radius_mm": (float, 120.0),
        "lobe_width_mm": (float, 70.0),
        "smoothness_mm": (float, 12.0),
        "seed": (int, 1),
    },
    "wave": {
        "g_wave_y_mT_m": (float, 30.0),
        "g_wave_z_mT_m": (float, 15.0),
        "n_cycles_y": (float, 0.5),
        "n_cycles_z": (float, 1.0),
        "t_readout_ms": (float, 1.0),
        "g_read_mT_m": (float, 30.0),
        "slew_max_T_m_s": (float, 200.0),
        "delay_positive_ms": (float, 0.0),
        "delay_negative_ms": (float, 0.0),
        "scale_positive": (float, 1.0),
        "scale_negative": (float, 1.0),
    },
    "sampling": {
        "r_in": (int, 3),
        "r_sms": (int, 3),
        "n_shots": (int, 1),
        "partial_fourier": (float, 1.0),
        "caipi_denominator": (int, None),
    },
    "slider": {
        "matrix": (str, "identity"),  # identity | dft5
        "n_rf": (int, 1),
        "phase_amplitude_rad": (float, 0.8),
        "phase_seed": (int, 4),
    },
    "recon": {
        "mode": (str, "sense"),  # sense | multishot | gslider_joint
        "tol": (float, 1e-6),
        "max_iters": (int, 50),
        "lowrank_kernel": (int, 7),
        "lowrank_keep_fraction": (float, 0.375),
        "fista_iters": (int, 50),
        "lowpass_fraction": (float, 0.25),
    },
    "analysis": {
        "gfactor_replicas": (int, 200),
        "sigma": (float, 0.0),
        "seed": (int, 0),
        "psf_slab_mm": (float, 5.0),
        "psf_supersample": (int, 16),
        "psf_subslices": (int, 16),
    },
    "io": {
        "output_dir": (str, "out"),
    },
}


def default_config() -> dict:
    return {
        section: {key: default for key, (_, default) in keys.items()}
        for section, keys in _SCHEMA.items()
    }


def _coerce(section: str, key: str, value):
    typ, default = _SCHEMA[section][key]
    if value is None:
        if default is None or key == "caipi_denominator":
            return None
        raise ConfigError(f"{section}.{key} must not be null")
    if typ is int:
        if isinstance(value, bool) or (isinstance(value, float) and value != int(value)):
            raise ConfigError(f"{section}.{key} must be an integer, got {value!r}")
        return int(value)
    if typ is float:
        if isinstance(value, str):
            # YAML 1.1 reads exponent forms like "1e-9" as strings
            try:
                return float(value)
            except ValueError:
                raise ConfigError(f"{section}.{key} must be a number, got {value!r}")
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{section}.{key} must be a number, got {value!r}")
        return float(value)
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"{section}.{key} must be a string, got {value!r}")
        return value
    raise ConfigError(f"unsupported type for {section}.{key}")


def merge_config(base: dict, update: dict) -> dict:
    """Validate `update` against the schema and merge over `base`,
    rejecting unknown sections and keys."""
    out = copy.deepcopy(base)
    if not isinstance(update, dict):
        raise ConfigError("config root must be a mapping")
    for section, body in update.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section {section!r}")
        if not isinstance(body, dict):
            raise ConfigError(f"config section {section!r} must be a mapping")
        for key, value in body.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            out[section][key] = _coerce(section, key, value)
    return out


def load_config(path: str | None, overrides: dict | None = None) -> dict:
    """Defaults <- optional YAML file <- dotted-path overrides."""
    cfg = default_config()
    if path is not None:
        with open(path) as f:
            loaded = yaml.safe_load(f)
        if loaded is not None:
            cfg = merge_config(cfg, loaded)
    for dotted, raw in (overrides or {}).items():
        if dotted.count(".") != 1:
            raise ConfigError(f"override key must look like section.key, got {dotted!r}")
        section, key = dotted.split(".")
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"unknown override {dotted!r}")
        value = yaml.safe_load(raw) if isinstance(raw, str) else raw
        cfg[section][key] = _coerce(section, key, value)
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    g = cfg["grid"]
    if min(g["nx"], g["ny"], g["nz_slabs"]) < 1:
        raise ConfigError("grid dimensions must be positive")
    if cfg["phantom"]["kind"] != "head":
        raise ConfigError("phantom.kind must be 'head'")
    if cfg["coils"]["kind"] not in ("ring", "random"):
        raise ConfigError("coils.kind must be 'ring' or 'random'")
    if cfg["slider"]["matrix"] not in ("identity", "dft5"):
        raise ConfigError("slider.matrix must be 'identity' or 'dft5'")
    if cfg["recon"]["mode"] not in ("sense", "multishot", "gslider_joint"):
        raise ConfigError("recon.mode must be sense, multishot or gslider_joint")


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=False)


# -- builders -------------------------------------------------------------------

def build_slider(cfg: dict) -> SliderEncoding:
    if cfg["slider"]["matrix"] == "dft5":
        return SliderEncoding.dft(5)
    return SliderEncoding.identity(cfg["slider"]["n_rf"])


def build_grid(cfg: dict) -> Grid:
    g = cfg["grid"]
    n_thin = build_slider(cfg).n_thin
    nz = g["nz_slabs"] * n_thin
    return Grid(
        g["nx"], g["ny"], nz,
        g["fov_x_mm"] / g["nx"], g["fov_y_mm"] / g["ny"], g["slab_mm"] / n_thin,
    )


def build_phantom(cfg: dict) -> np.ndarray:
    grid = build_grid(cfg)
    g = cfg["grid"]
    fov = (g["fov_x_mm"], g["fov_y_mm"], g["nz_slabs"] * g["slab_mm"])
    return make_phantom(grid, default_head_spec(fov)).data


def build_coils(cfg: dict):
    grid = build_grid(cfg)
    c = cfg["coils"]
    if c["kind"] == "random":
        return make_random_coil_maps(grid, c["ncoils"], c["smoothness_mm"], c["seed"])
    return make_coil_maps(grid, c["ncoils"], c["ring_radius_mm"], c["lobe_width_mm"], c["seed"])


def build_waveforms(cfg: dict) -> tuple[WaveformSpec, WaveformSpec]:
    w = cfg["wave"]
    spec_y = WaveformSpec(
        "y", "cosine", w["g_wave_y_mT_m"], w["n_cycles_y"],
        w["t_readout_ms"], w["g_read_mT_m"], w["slew_max_T_m_s"],
    )
    spec_z = WaveformSpec(
        "z", "sine", w["g_wave_z_mT_m"], w["n_cycles_z"],
        w["t_readout_ms"], w["g_read_mT_m"], w["slew_max_T_m_s"],
    )
    return spec_y, spec_z


def build_pattern(cfg: dict):
    s = cfg["sampling"]
    return make_pattern(
        cfg["grid"]["ny"], cfg["grid"]["nz_slabs"], s["r_in"], s["r_sms"],
        s["n_shots"], s["partial_fourier"], s["caipi_denominator"],
    )


def build_psfs(cfg: dict) -> dict:
    spec_y, spec_z = build_waveforms(cfg)
    w = cfg["wave"]
    nx = cfg["grid"]["nx"]
    psfs = {}
    for pol in ("positive", "negative"):
        psfs[pol] = make_psf(
            spec_y, spec_z, nx, pol,
            delay_ms=w[f"delay_{pol}_ms"], scale=w[f"scale_{pol}"],
        )
    return psfs


def build_operator(cfg: dict) -> EncodingOperator:
    grid = build_grid(cfg)
    slider = build_slider(cfg)
    phases = None
    if cfg["sampling"]["n_shots"] > 1 or slider.n_rf > 1:
        phases = synth_shot_phases(
            grid, cfg["sampling"]["n_shots"], slider.n_rf,
            seed=cfg["slider"]["phase_seed"],
            amplitude_rad=cfg["slider"]["phase_amplitude_rad"],
        )
    return EncodingOperator(
        grid, build_coils(cfg), build_psfs(cfg), build_pattern(cfg),
        slider=slider, phases=phases,
    )
