import numpy as np
import pytest
import yaml

from waveepi import (
    ConfigError,
    build_coils,
    build_grid,
    build_operator,
    build_pattern,
    build_phantom,
    build_psfs,
    build_slider,
    build_waveforms,
    default_config,
    dump_config,
    load_config,
    merge_config,
)


def _small(overrides=None):
    base = {
        "grid.nx": 12, "grid.ny": 12, "grid.nz_slabs": 4,
        "coils.ncoils": 4, "sampling.r_in": 2, "sampling.r_sms": 2,
    }
    base.update(overrides or {})
    return load_config(None, base)


def test_defaults_complete_and_valid():
    cfg = load_config(None)
    assert cfg == merge_config(default_config(), {})
    assert cfg["grid"]["nx"] == 64
    assert cfg["sampling"]["caipi_denominator"] is None


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        merge_config(default_config(), {"nope": {}})
    with pytest.raises(ConfigError):
        merge_config(default_config(), {"grid": {"nq": 3}})
    with pytest.raises(ConfigError):
        load_config(None, {"grid.nq": 3})
    with pytest.raises(ConfigError):
        load_config(None, {"grid": 3})


def test_type_coercion():
    cfg = load_config(None, {"recon.tol": "1e-9", "grid.nx": "32"})
    assert cfg["recon"]["tol"] == 1e-9
    assert cfg["grid"]["nx"] == 32
    with pytest.raises(ConfigError):
        load_config(None, {"grid.nx": "3.5"})
    with pytest.raises(ConfigError):
        load_config(None, {"recon.tol": "abc"})
    with pytest.raises(ConfigError):
        load_config(None, {"recon.mode": "magic"})


def test_yaml_file_round_trip(tmp_path):
    cfg = _small({"wave.g_wave_y_mT_m": 22.0})
    p = tmp_path / "cfg.yaml"
    p.write_text(dump_config(cfg))
    again = load_config(str(p))
    assert again == cfg


def test_build_grid_and_slider():
    cfg = _small()
    grid = build_grid(cfg)
    assert grid.shape == (12, 12, 4)
    assert grid.dx == pytest.approx(220 / 12)
    cfg5 = _small({"slider.matrix": "dft5"})
    grid5 = build_grid(cfg5)
    assert build_slider(cfg5).n_thin == 5
    assert grid5.nz == 20
    assert grid5.dz == pytest.approx(cfg5["grid"]["slab_mm"] / 5)


def test_build_phantom_and_coils():
    cfg = _small()
    img = build_phantom(cfg)
    assert img.shape == (12, 12, 4)
    coils = build_coils(cfg)
    assert coils.ncoils == 4
    rnd = build_coils(_small({"coils.kind": "random"}))
    assert np.abs(rnd.rss() - 1).max() < 1e-12


def test_build_waveforms_and_psfs():
    cfg = _small({"wave.delay_positive_ms": 0.01})
    spec_y, spec_z = build_waveforms(cfg)
    assert spec_y.shape == "cosine" and spec_y.n_cycles == 0.5
    assert spec_z.shape == "sine" and spec_z.n_cycles == 1.0
    psfs = build_psfs(cfg)
    dpos = psfs["positive"][1].phase_slope
    dneg = psfs["negative"][1].phase_slope
    assert np.abs(dpos - dneg).max() > 1e-4  # delay breaks symmetry


def test_build_pattern_and_operator():
    cfg = _small({"sampling.n_shots": 2, "sampling.r_in": 2})
    p = build_pattern(cfg)
    assert p.n_shots == 2 and p.r_in == 2
    op = build_operator(cfg)
    assert op.phases is not None  # multi-shot gets synthetic phase maps
    data = op.encode(build_phantom(cfg))
    assert len(data.blocks) == 2 * 1 * 2


def test_operator_deterministic_from_config():
    cfg = _small()
    a = build_operator(cfg).encode(build_phantom(cfg))
    b = build_operator(cfg).encode(build_phantom(cfg))
    for k in a.blocks:
        assert np.array_equal(a.blocks[k], b.blocks[k])
