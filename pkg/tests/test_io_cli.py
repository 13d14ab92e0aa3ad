import json
import os

import numpy as np
import pytest

from waveepi import VolumeFormatError, read_volume, write_pgm, write_volume
from waveepi.cli import main


def test_volume_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    vol = (rng.standard_normal((5, 4, 3)) + 1j * rng.standard_normal((5, 4, 3))).astype("<c8")
    p = str(tmp_path / "vol.json")
    write_volume(p, vol, (1.0, 2.0, 3.0))
    back, header = read_volume(p)
    assert back.dtype == np.dtype("<c8")
    assert np.array_equal(back, vol)
    assert back.tobytes(order="F") == vol.tobytes(order="F")
    assert header["dims"] == [5, 4, 3]
    assert header["voxel_mm"] == [1.0, 2.0, 3.0]
    # rewriting produces byte-identical files
    raw1 = open(str(tmp_path / "vol.raw"), "rb").read()
    write_volume(p, vol, (1.0, 2.0, 3.0))
    assert open(str(tmp_path / "vol.raw"), "rb").read() == raw1


def test_volume_header_payload_cross_check(tmp_path):
    p = str(tmp_path / "v.json")
    write_volume(p, np.zeros((4, 3, 2), dtype=complex), (1, 1, 1))
    assert os.path.getsize(str(tmp_path / "v.raw")) == 4 * 3 * 2 * 8


def test_volume_truncated_payload_error(tmp_path):
    p = str(tmp_path / "v.json")
    write_volume(p, np.zeros((4, 3, 2), dtype=complex), (1, 1, 1))
    raw = str(tmp_path / "v.raw")
    with open(raw, "rb") as f:
        data = f.read()
    with open(raw, "wb") as f:
        f.write(data[:-8])
    with pytest.raises(VolumeFormatError) as e:
        read_volume(p)
    assert "192" in str(e.value) and "184" in str(e.value)


def test_volume_float32(tmp_path):
    p = str(tmp_path / "g.json")
    write_volume(p, np.ones((2, 2, 2)), (1, 1, 1), dtype="float32")
    back, header = read_volume(p)
    assert header["dtype"] == "float32"
    assert back.dtype == np.dtype("<f4")
    with pytest.raises(VolumeFormatError):
        write_volume(p, np.ones((2, 2)), (1, 1, 1), dtype="float64")


def test_pgm_render(tmp_path):
    p = str(tmp_path / "img.pgm")
    img = np.linspace(0, 1, 12).reshape(3, 4)
    write_pgm(p, img)
    data = open(p, "rb").read()
    assert data.startswith(b"P5\n4 3\n255\n")
    assert data[-12:][-1] == 255
    sidecar = json.load(open(p + ".window.json"))
    assert sidecar == {"min": 0.0, "max": 1.0}
    with pytest.raises(VolumeFormatError):
        write_pgm(p, np.zeros((2, 2, 2)))


# -- CLI -------------------------------------------------------------------------

SMALL = [
    "--grid.nx=12", "--grid.ny=12", "--grid.nz_slabs=2", "--coils.ncoils=4",
    "--sampling.r_in=2", "--sampling.r_sms=2", "--coils.kind=random",
]


def _run(args):
    return main(args)


def test_cli_invalid_config_exit_2(tmp_path, capsys):
    assert _run(["simulate", "--bogus.key=1"]) == 2
    err = capsys.readouterr().err
    assert json.loads(err.strip())["error"] == "invalid-config"
    bad = tmp_path / "bad.yaml"
    bad.write_text("grid:\n  nq: 3\n")
    assert _run(["simulate", "--config", str(bad)]) == 2


def test_cli_slew_violation_exit_3(tmp_path, capsys):
    out = str(tmp_path / "o")
    args = ["simulate", f"--io.output_dir={out}", "--wave.g_wave_y_mT_m=500"] + SMALL
    assert _run(args) == 3
    assert json.loads(capsys.readouterr().err.strip())["error"] == "slew-violation"
    # override flag lets it through
    assert _run(args + ["--allow-slew-violation"]) == 0


def test_cli_pipeline_and_identity_recon(tmp_path):
    # fully sampled, no wave: recon reproduces the phantom to 1e-8
    out = str(tmp_path / "o")
    base = [
        "--grid.nx=12", "--grid.ny=12", "--grid.nz_slabs=2", "--coils.ncoils=4",
        "--coils.kind=random", "--sampling.r_in=1", "--sampling.r_sms=1",
        "--wave.g_wave_y_mT_m=0", "--wave.g_wave_z_mT_m=0",
        f"--io.output_dir={out}",
    ]
    assert _run(["simulate"] + base) == 0
    assert _run(["recon", "--mode=sense", "--recon.tol=1e-12", "--recon.max_iters=300"] + base) == 0
    rows = dict(
        line.split(",", 1)
        for line in open(os.path.join(out, "recon.pgm") and os.path.join(out, "recon_stats.csv")).read().splitlines()[1:]
    )
    assert float(rows["nrmse"]) < 1e-8
    # config echo present
    assert os.path.exists(os.path.join(out, "config.yaml"))
    assert os.path.exists(os.path.join(out, "recon.pgm"))


def test_cli_phantom_outputs(tmp_path):
    out = str(tmp_path / "p")
    assert _run(["phantom", f"--io.output_dir={out}"] + SMALL) == 0
    img, _ = read_volume(os.path.join(out, "phantom.json"))
    assert img.shape == (12, 12, 2)
    assert os.path.exists(os.path.join(out, "phantom.pgm.window.json"))


def test_cli_calibrate_psf(tmp_path):
    out = str(tmp_path / "c")
    args = ["calibrate-psf", f"--io.output_dir={out}",
            "--wave.delay_positive_ms=0.005", "--wave.g_wave_y_mT_m=8",
            "--wave.g_wave_z_mT_m=6"] + SMALL
    assert _run(args) == 0
    blob = json.load(open(os.path.join(out, "psf_coeffs.json")))
    assert set(blob) == {"positive", "negative"}
    assert set(blob["positive"]) == {"y", "z"}
    assert len(blob["positive"]["y"]["coeffs"]) == len(blob["positive"]["y"]["freqs_khz"])


def test_cli_recon_requires_data(tmp_path, capsys):
    out = str(tmp_path / "empty")
    assert _run(["recon", f"--io.output_dir={out}"] + SMALL) == 2
    assert json.loads(capsys.readouterr().err.strip())["error"] == "missing-data"


def test_cli_byte_determinism(tmp_path):
    # identical config + seed => bit-identical outputs
    outs = []
    for name in ("r1", "r2"):
        out = str(tmp_path / name)
        args = SMALL + [f"--io.output_dir={out}", "--analysis.sigma=0.01", "--analysis.seed=5"]
        assert _run(["simulate"] + args) == 0
        assert _run(["recon", "--recon.max_iters=20"] + args) == 0
        outs.append(out)
    for fname in sorted(os.listdir(outs[0])):
        if fname == "config.yaml":  # differs only in the output_dir echo
            continue
        a = open(os.path.join(outs[0], fname), "rb").read()
        b = open(os.path.join(outs[1], fname), "rb").read()
        assert a == b, fname


def test_cli_gfactor_small(tmp_path):
    out = str(tmp_path / "g")
    args = [
        "gfactor", f"--io.output_dir={out}", "--analysis.gfactor_replicas=50",
        "--analysis.sigma=0.02", "--recon.max_iters=40",
    ] + SMALL
    assert _run(args) == 0
    rows = dict(
        line.split(",", 1) for line in open(os.path.join(out, "gfactor.csv")).read().splitlines()[1:]
    )
    assert float(rows["mean_g_wave"]) > 0
    assert float(rows["mean_g_blip"]) > 0
    assert float(rows["fold_gain_mean_g"]) > 0
    gmap, header = read_volume(os.path.join(out, "gmap_wave.json"))
    assert header["dtype"] == "float32"


def test_cli_psf_analyze(tmp_path):
    out = str(tmp_path / "psf")
    # one-cycle 19 mT/m at T_r = 0.5 ms exceeds the default slew limit;
    # the explicit override flag lets the analysis proceed
    assert _run(["psf-analyze", f"--io.output_dir={out}", "--grid.nx=64",
                 "--grid.fov_x_mm=64", "--wave.t_readout_ms=0.5",
                 "--wave.g_wave_z_mT_m=19", "--allow-slew-violation"]) == 0
    lines = open(os.path.join(out, "psf_profile.csv")).read().splitlines()
    rows = {l.split(",")[0]: l.split(",") for l in lines[1:]}
    assert abs(float(rows["no_wave"][1]) - 1.0) < 1e-9
    assert float(rows["slabwise"][2]) > float(rows["no_wave"][2])
