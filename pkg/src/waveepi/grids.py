"""Cartesian grids, complex volumes and centered unitary DFTs.

Conventions used throughout the package:

* axis order is (x, y, z) = (readout, phase-encode, slice)
* the grid center sits at index ``n // 2`` along every axis, so the
  spatial coordinate of index ``i`` is ``(i - n // 2) * spacing``
* DFTs are centered (DC at index ``n // 2``) and unitary (``1/sqrt(n)``
  in both directions)
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

AXES = ("x", "y", "z")


@dataclass(frozen=True)
class Grid:
    """Regular 3D sampling grid. Spacings are in millimeters."""

    nx: int
    ny: int
    nz: int
    dx: float = 1.0
    dy: float = 1.0
    dz: float = 1.0

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 1:
            raise ValueError("grid dimensions must be >= 1")
        if min(self.dx, self.dy, self.dz) <= 0:
            raise ValueError("grid spacings must be > 0")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    def size(self, axis: str) -> int:
        return self.shape[AXES.index(axis)]

    def spacing(self, axis: str) -> float:
        return (self.dx, self.dy, self.dz)[AXES.index(axis)]

    def coords(self, axis: str) -> np.ndarray:
        """Coordinates in mm along `axis`, zero at index n // 2."""
        n = self.size(axis)
        return (np.arange(n) - n // 2) * self.spacing(axis)


@dataclass
class ComplexVolume:
    """Complex data on a Grid with a per-axis domain tag.

    ``domain[i]`` is "image" or "freq" for axis i in (x, y, z) order.
    """

    grid: Grid
    data: np.ndarray
    domain: tuple[str, str, str] = ("image", "image", "image")

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.complex128)
        if self.data.shape != self.grid.shape:
            raise ValueError(
                f"data shape {self.data.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("volume data must be finite")
        for tag in self.domain:
            if tag not in ("image", "freq"):
                raise ValueError(f"bad domain tag {tag!r}")

    def copy(self) -> "ComplexVolume":
        return ComplexVolume(self.grid, self.data.copy(), self.domain)


def dft_axis(v: ComplexVolume, axis: str, direction: str) -> ComplexVolume:
    """Centered unitary DFT of a volume along one named axis.

    Forward maps an image-domain axis to the frequency domain and
    vice versa; transforming an axis already in the requested output
    domain is an error (double-transform guard).
    """
    if axis not in AXES:
        raise ValueError(f"unknown axis {axis!r}")
    if direction not in ("forward", "inverse"):
        raise ValueError(f"unknown direction {direction!r}")
    ai = AXES.index(axis)
    target = "freq" if direction == "forward" else "image"
    if v.domain[ai] == target:
        raise ValueError(f"axis {axis!r} is already in the {target} domain")
    data = dft_array(v.data, ai, direction)
    domain = tuple(target if i == ai else t for i, t in enumerate(v.domain))
    return ComplexVolume(v.grid, data, domain)


def dft_array(data: np.ndarray, axis_index: int, direction: str) -> np.ndarray:
    """Centered unitary FFT along one axis of a bare array."""
    shifted = np.fft.ifftshift(data, axes=axis_index)
    if direction == "forward":
        out = np.fft.fft(shifted, axis=axis_index, norm="ortho")
    else:
        out = np.fft.ifft(shifted, axis=axis_index, norm="ortho")
    return np.fft.fftshift(out, axes=axis_index)


def adjoint_dot_test(apply, apply_adjoint, in_shape, out_shape, seed, n_pairs=3):
    """Max relative adjoint mismatch over `n_pairs` random input pairs.

    Returns max over pairs of |<A x, y> - <x, A^H y>| / (||Ax|| ||y||).
    """
    if n_pairs < 3:
        raise ValueError("need at least 3 test pairs")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        x = rng.standard_normal(in_shape) + 1j * rng.standard_normal(in_shape)
        y = rng.standard_normal(out_shape) + 1j * rng.standard_normal(out_shape)
        ax = np.asarray(apply(x))
        aty = np.asarray(apply_adjoint(y))
        if not (np.all(np.isfinite(ax)) and np.all(np.isfinite(aty))):
            raise ValueError("operator produced non-finite output")
        lhs = np.vdot(ax.ravel(), y.ravel())
        rhs = np.vdot(x.ravel(), aty.ravel())
        denom = np.linalg.norm(ax.ravel()) * np.linalg.norm(y.ravel())
        if denom == 0:
            continue
        worst = max(worst, abs(lhs - rhs) / denom)
    return worst
