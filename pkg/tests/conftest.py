import numpy as np
import pytest

from waveepi import (
    EncodingOperator,
    Grid,
    ShotDataSet,
    SliderEncoding,
    WaveformSpec,
    default_head_spec,
    make_coil_maps,
    make_pattern,
    make_phantom,
    make_psf,
    make_random_coil_maps,
    no_wave,
    synth_shot_phases,
)


def small_grid(nx=12, ny=12, nz=4, dx=2.0, dy=2.0, dz=3.0):
    return Grid(nx, ny, nz, dx, dy, dz)


def wave_specs(t_readout_ms=1.0, gy=30.0, gz=15.0, ncy=0.5, ncz=1.0, g_read=30.0):
    spec_y = WaveformSpec("y", "cosine", gy, ncy, t_readout_ms, g_read)
    spec_z = WaveformSpec("z", "sine", gz, ncz, t_readout_ms, g_read)
    return spec_y, spec_z


def dual_psfs(nx, spec_y=None, spec_z=None, **kw):
    if spec_y is None or spec_z is None:
        spec_y, spec_z = wave_specs()
    return {
        pol: make_psf(spec_y, spec_z, nx, pol, **kw)
        for pol in ("positive", "negative")
    }


def identity_psfs(nx):
    from waveepi import identity_psf

    return {
        pol: (identity_psf("y", pol, nx), identity_psf("z", pol, nx))
        for pol in ("positive", "negative")
    }


def make_operator(
    grid=None,
    ncoils=4,
    r_in=2,
    r_sms=2,
    n_shots=1,
    partial_fourier=1.0,
    slider=None,
    wave=True,
    coil_kind="ring",
    phases_seed=None,
):
    grid = grid or small_grid()
    slider = slider or SliderEncoding.identity(1)
    nz_slabs = grid.nz // slider.n_thin
    if coil_kind == "ring":
        fov = grid.nx * grid.dx
        coils = make_coil_maps(grid, ncoils, 0.55 * fov, 0.32 * fov, seed=1)
    else:
        fov = grid.nx * grid.dx
        coils = make_random_coil_maps(grid, ncoils, 0.1 * fov, seed=1)
    psfs = dual_psfs(grid.nx) if wave else identity_psfs(grid.nx)
    pattern = make_pattern(grid.ny, nz_slabs, r_in, r_sms, n_shots, partial_fourier)
    phases = None
    if phases_seed is not None:
        phases = synth_shot_phases(grid, n_shots, slider.n_rf, seed=phases_seed, amplitude_rad=0.8)
    return EncodingOperator(grid, coils, psfs, pattern, slider=slider, phases=phases)


def flatten_data(data: ShotDataSet) -> np.ndarray:
    return np.concatenate([data.blocks[k].ravel() for k in data.keys()])


def unflatten_data(vec: np.ndarray, template: ShotDataSet) -> ShotDataSet:
    blocks = {}
    i = 0
    for k in template.keys():
        shape = template.blocks[k].shape
        n = int(np.prod(shape))
        blocks[k] = vec[i : i + n].reshape(shape)
        i += n
    return template.replace_blocks(blocks)


def head_image(grid):
    fov = (grid.nx * grid.dx, grid.ny * grid.dy, grid.nz * grid.dz)
    return make_phantom(grid, default_head_spec(fov)).data
