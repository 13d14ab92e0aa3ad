"""Synthetic magnetization phantoms, coil sensitivity maps and noise."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grids import ComplexVolume, Grid


@dataclass(frozen=True)
class Ellipsoid:
    center_mm: tuple[float, float, float]
    semi_axes_mm: tuple[float, float, float]
    amplitude: complex = 1.0

    def __post_init__(self):
        if min(self.semi_axes_mm) <= 0:
            raise ValueError("ellipsoid semi-axes must be > 0")


@dataclass(frozen=True)
class PhantomSpec:
    """Union of ellipsoids plus an optional smooth polynomial phase.

    ``phase_poly`` holds coefficients (c0, cx, cy, cz, cxx, cyy, czz)
    of a quadratic phase in normalized coordinates (position / 100 mm).
    """

    ellipsoids: tuple[Ellipsoid, ...]
    phase_poly: tuple[float, ...] = ()

    def __post_init__(self):
        if len(self.ellipsoids) == 0:
            raise ValueError("phantom needs at least one ellipsoid")
        if len(self.phase_poly) > 7:
            raise ValueError("phase polynomial supports at most 7 coefficients")


def default_head_spec(fov_mm: tuple[float, float, float]) -> PhantomSpec:
    """Head-like 3-ellipsoid phantom scaled to the given field of view."""
    fx, fy, fz = fov_mm
    return PhantomSpec(
        ellipsoids=(
            Ellipsoid((0.0, 0.0, 0.0), (0.40 * fx, 0.44 * fy, 0.46 * fz), 1.0),
            Ellipsoid((-0.12 * fx, 0.10 * fy, 0.0), (0.10 * fx, 0.12 * fy, 0.30 * fz), 0.5),
            Ellipsoid((0.15 * fx, -0.08 * fy, 0.05 * fz), (0.08 * fx, 0.07 * fy, 0.25 * fz), -0.3 + 0.4j),
        ),
        phase_poly=(0.0, 0.3, -0.2, 0.1, 0.05, 0.04, 0.0),
    )


def make_phantom(grid: Grid, spec: PhantomSpec) -> ComplexVolume:
    """Rasterize the spec: each voxel sums the amplitudes of the
    ellipsoids whose interior contains the voxel center."""
    x = grid.coords("x")[:, None, None]
    y = grid.coords("y")[None, :, None]
    z = grid.coords("z")[None, None, :]
    vol = np.zeros(grid.shape, dtype=np.complex128)
    for e in spec.ellipsoids:
        cx, cy, cz = e.center_mm
        ax, ay, az = e.semi_axes_mm
        inside = ((x - cx) / ax) ** 2 + ((y - cy) / ay) ** 2 + ((z - cz) / az) ** 2 <= 1.0
        vol += np.asarray(e.amplitude, dtype=np.complex128) * inside
    if spec.phase_poly:
        c = list(spec.phase_poly) + [0.0] * (7 - len(spec.phase_poly))
        u, v, w = x / 100.0, y / 100.0, z / 100.0
        phase = c[0] + c[1] * u + c[2] * v + c[3] * w + c[4] * u**2 + c[5] * v**2 + c[6] * w**2
        vol = vol * np.exp(1j * phase)
    return ComplexVolume(grid, vol)


@dataclass
class CoilMaps:
    ncoils: int
    grid: Grid
    maps: np.ndarray  # (ncoils, nx, ny, nz) complex

    def __post_init__(self):
        self.maps = np.asarray(self.maps, dtype=np.complex128)
        if self.ncoils < 1:
            raise ValueError("need at least one coil")
        if self.maps.shape != (self.ncoils,) + self.grid.shape:
            raise ValueError("coil map shape mismatch")

    def rss(self) -> np.ndarray:
        return np.sqrt(np.sum(np.abs(self.maps) ** 2, axis=0))


def make_coil_maps(
    grid: Grid,
    ncoils: int,
    ring_radius_mm: float,
    lobe_width_mm: float,
    seed: int = 0,
) -> CoilMaps:
    """Analytic ring of Gaussian-lobe coils around the x-y plane.

    Coil c sits at angle 2*pi*c/ncoils on a ring of the given radius,
    at alternating z offsets, with a Gaussian magnitude profile and a
    smooth linear phase ramp pointing at the coil center. The seed only
    perturbs the per-coil phase offsets, keeping maps reproducible.
    """
    if ncoils < 1:
        raise ValueError("ncoils must be >= 1")
    rng = np.random.default_rng(seed)
    x = grid.coords("x")[:, None, None]
    y = grid.coords("y")[None, :, None]
    z = grid.coords("z")[None, None, :]
    z_extent = grid.nz * grid.dz
    maps = np.empty((ncoils,) + grid.shape, dtype=np.complex128)
    phase_offsets = rng.uniform(-np.pi, np.pi, size=ncoils)
    for c in range(ncoils):
        ang = 2 * np.pi * c / ncoils
        cx = ring_radius_mm * np.cos(ang)
        cy = ring_radius_mm * np.sin(ang)
        cz = 0.25 * z_extent * (1 if c % 2 == 0 else -1)
        d2 = (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2
        mag = np.exp(-0.5 * d2 / lobe_width_mm**2)
        # ~1 rad of phase across the FOV, oriented toward the coil
        norm = np.hypot(np.hypot(cx, cy), cz) or 1.0
        ramp = (x * cx + y * cy + z * cz) / (norm * max(ring_radius_mm, 1.0))
        maps[c] = mag * np.exp(1j * (ramp + phase_offsets[c]))
    return CoilMaps(ncoils=ncoils, grid=grid, maps=maps)


def make_random_coil_maps(
    grid: Grid,
    ncoils: int,
    smoothness_mm: float,
    seed: int = 0,
    normalize: bool = True,
) -> CoilMaps:
    """Band-limited random complex coil maps for conditioning studies.

    Each coil is an independent complex Gaussian random field smoothed
    to the given correlation length; such maps vary along all three
    axes at many scales, so highly accelerated unaliasing problems stay
    well conditioned where geometric ring arrays become degenerate.
    `normalize` divides by the RSS so the combined magnitude is 1
    everywhere. Deterministic given the seed.
    """
    from scipy.ndimage import gaussian_filter

    if ncoils < 1:
        raise ValueError("ncoils must be >= 1")
    if smoothness_mm <= 0:
        raise ValueError("smoothness must be > 0")
    rng = np.random.default_rng(seed)
    sig = (smoothness_mm / grid.dx, smoothness_mm / grid.dy, smoothness_mm / grid.dz)
    maps = np.empty((ncoils,) + grid.shape, dtype=np.complex128)
    for c in range(ncoils):
        re = gaussian_filter(rng.standard_normal(grid.shape), sig, mode="wrap")
        im = gaussian_filter(rng.standard_normal(grid.shape), sig, mode="wrap")
        maps[c] = re + 1j * im
    if normalize:
        maps = maps / np.sqrt(np.sum(np.abs(maps) ** 2, axis=0))[None]
    return CoilMaps(ncoils=ncoils, grid=grid, maps=maps)


def add_noise(target, sigma: float, seed: int):
    """Add i.i.d. complex Gaussian noise (std `sigma` per real/imag part).

    Accepts a ComplexVolume, a bare ndarray, or a ShotDataSet; returns
    the same type. sigma=0 returns the input unchanged (bitwise).
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return target
    rng = np.random.default_rng(seed)

    def _noisy(arr):
        return arr + sigma * (
            rng.standard_normal(arr.shape) + 1j * rng.standard_normal(arr.shape)
        )

    if isinstance(target, ComplexVolume):
        return ComplexVolume(target.grid, _noisy(target.data), target.domain)
    if isinstance(target, np.ndarray):
        return _noisy(target)
    if hasattr(target, "blocks"):  # ShotDataSet, noised per block in key order
        blocks = {k: _noisy(target.blocks[k]) for k in sorted(target.blocks)}
        out = target.replace_blocks(blocks)
        out.sigma = getattr(target, "sigma", 0.0) + sigma
        return out
    raise TypeError(f"cannot add noise to {type(target)!r}")
