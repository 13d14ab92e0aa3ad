"""Linear wave-EPI encoding operator and its exact adjoint.

Maps a thin-slice image volume to acquired multi-coil, multi-shot,
polarity-split k-space. Per (shot, RF-encode) the forward composition
is: shot phase -> coil weighting -> readout DFT -> hybrid-space wave
PSF (per polarity, at thin-slice resolution) -> slab collapse with the
RF encoding weights -> phase-encode DFT -> per-slab CAIPI ramps and
SMS group summation -> ky line selection split by readout polarity.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .grids import Grid, dft_array
from .phantom import CoilMaps
from .sampling import SamplingPattern, split_by_polarity
from .waveform import Psf

POLARITIES = ("positive", "negative")


@dataclass(frozen=True)
class SliderEncoding:
    """RF slab-encoding weights: n_rf acquisitions of n_thin thin
    slices per slab."""

    matrix: np.ndarray  # (n_rf, n_thin) complex

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.complex128)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2:
            raise ValueError("slider matrix must be 2D")
        if np.linalg.matrix_rank(m) < min(m.shape):
            raise ValueError("slider matrix must have full rank")

    @property
    def n_rf(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_thin(self) -> int:
        return self.matrix.shape[1]

    @property
    def condition_number(self) -> float:
        s = np.linalg.svd(self.matrix, compute_uv=False)
        return float(s[0] / s[-1])

    @staticmethod
    def identity(n: int = 1) -> "SliderEncoding":
        return SliderEncoding(np.eye(n, dtype=np.complex128))

    @staticmethod
    def dft(n: int = 5) -> "SliderEncoding":
        """Unitary DFT-style encoding matrix (condition number 1)."""
        return SliderEncoding(np.fft.fft(np.eye(n)) / np.sqrt(n))

    def inverse(self) -> np.ndarray:
        if self.n_rf != self.n_thin:
            raise ValueError("slider matrix is not square; no inverse")
        return np.linalg.inv(self.matrix)


def synth_shot_phases(
    grid: Grid,
    n_shots: int,
    n_rf: int,
    seed: int,
    amplitude_rad: float = 1.0,
    band_fraction: float = 0.15,
) -> dict:
    """Smooth unit-modulus per-(shot, rf) phase maps for simulations.

    Band-limited real random fields (central `band_fraction` of k-space)
    scaled to the requested peak phase amplitude; shot 0 / rf 0 keeps a
    nonzero map too, matching physiological shot-to-shot variation.
    """
    rng = np.random.default_rng(seed)
    nx, ny, nz = grid.shape
    bx = max(1, int(band_fraction * nx))
    by = max(1, int(band_fraction * ny))
    phases = {}
    for s in range(n_shots):
        for r in range(n_rf):
            spec = np.zeros((nx, ny, nz), dtype=np.complex128)
            block = rng.standard_normal((bx, by, nz)) + 1j * rng.standard_normal((bx, by, nz))
            x0, y0 = nx // 2 - bx // 2, ny // 2 - by // 2
            spec[x0 : x0 + bx, y0 : y0 + by, :] = block
            f = dft_array(dft_array(spec, 0, "inverse"), 1, "inverse").real
            peak = np.abs(f).max() or 1.0
            phases[(s, r)] = np.exp(1j * amplitude_rad * f / peak)
    return phases


@dataclass
class ShotDataSet:
    """Acquired k-space blocks keyed by (shot, rf, polarity); each block
    is complex (ncoils, nx, n_lines, n_groups)."""

    blocks: dict
    pattern: SamplingPattern
    sigma: float = 0.0

    def __post_init__(self):
        for key, arr in self.blocks.items():
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite data in block {key}")

    def replace_blocks(self, blocks: dict) -> "ShotDataSet":
        return ShotDataSet(blocks=blocks, pattern=self.pattern, sigma=self.sigma)

    def keys(self):
        return sorted(self.blocks)

    def norm2(self) -> float:
        return float(sum(np.vdot(b, b).real for b in self.blocks.values()))

    def __sub__(self, other: "ShotDataSet") -> "ShotDataSet":
        return self.replace_blocks(
            {k: self.blocks[k] - other.blocks[k] for k in self.blocks}
        )

    def __add__(self, other: "ShotDataSet") -> "ShotDataSet":
        return self.replace_blocks(
            {k: self.blocks[k] + other.blocks[k] for k in self.blocks}
        )

    def scaled(self, a: complex) -> "ShotDataSet":
        return self.replace_blocks({k: a * v for k, v in self.blocks.items()})


class EncodingOperator:
    """Wave-EPI forward model A and adjoint A^H over a fixed context.

    `shots` and `rfs` restrict which (shot, rf) blocks the operator
    spans, which keeps single-shot SENSE and per-shot FISTA gradients
    on the same code path as the joint g-Slider model.
    """

    def __init__(
        self,
        grid: Grid,
        coils: CoilMaps,
        psfs: dict,
        pattern: SamplingPattern,
        slider: SliderEncoding | None = None,
        phases: dict | None = None,
        shots=None,
        rfs=None,
    ):
        self.grid = grid
        self.coils = coils
        self.pattern = pattern
        self.slider = slider if slider is not None else SliderEncoding.identity(1)
        self.phases = phases
        if coils.grid.shape != grid.shape:
            raise ValueError("coil maps do not match the image grid")
        n_thin_total = pattern.nz_slabs * self.slider.n_thin
        if n_thin_total != grid.nz:
            raise ValueError(
                f"pattern slabs ({pattern.nz_slabs}) x slider thin slices "
                f"({self.slider.n_thin}) != grid nz ({grid.nz})"
            )
        if pattern.ny != grid.ny:
            raise ValueError("pattern ny does not match the grid")
        self.psfs = dict(psfs)
        for pol in POLARITIES:
            psf_y, psf_z = self.psfs[pol]
            if psf_y.nx != grid.nx or psf_z.nx != grid.nx:
                raise ValueError("PSF length does not match readout size nx")
        self.shots = tuple(shots) if shots is not None else tuple(range(pattern.n_shots))
        self.rfs = tuple(rfs) if rfs is not None else tuple(range(self.slider.n_rf))

        y = grid.coords("y")
        z = grid.coords("z")
        self._mult = {}
        for pol in POLARITIES:
            psf_y, psf_z = self.psfs[pol]
            phase = (
                psf_y.phase_slope[:, None, None] * y[None, :, None]
                + psf_z.phase_slope[:, None, None] * z[None, None, :]
            )
            self._mult[pol] = np.exp(-1j * phase)  # (nx, ny, nz_thin)

        # slab position of every slab inside its SMS group, and ramps
        self._ramps = np.empty((pattern.nz_slabs, grid.ny), dtype=np.complex128)
        for group in pattern.slice_groups:
            for pos, slab in enumerate(group):
                self._ramps[slab] = pattern.caipi_ramp(pos)
        self._line_split = {
            s: split_by_polarity(pattern, s) for s in range(pattern.n_shots)
        }

    # -- restriction helpers -------------------------------------------------

    def for_shot(self, shot: int) -> "EncodingOperator":
        return EncodingOperator(
            self.grid, self.coils, self.psfs, self.pattern,
            self.slider, self.phases, shots=(shot,), rfs=self.rfs,
        )

    def block_keys(self):
        return [
            (s, r, pol)
            for s in self.shots
            for r in self.rfs
            for pol in POLARITIES
        ]

    def _phase(self, s: int, r: int):
        if self.phases is None:
            return None
        return self.phases[(s, r)]

    # -- forward -------------------------------------------------------------

    def encode(self, img: np.ndarray) -> ShotDataSet:
        img = np.asarray(img, dtype=np.complex128)
        if img.shape != self.grid.shape:
            raise ValueError(f"image shape {img.shape} != grid {self.grid.shape}")
        pat = self.pattern
        n_thin = self.slider.n_thin
        blocks = {}
        for s in self.shots:
            for r in self.rfs:
                phase = self._phase(s, r)
                v = img if phase is None else img * phase
                vc = self.coils.maps * v[None]  # (nc, nx, ny, nzt)
                hybrid = dft_array(vc, 1, "forward")
                for pol in POLARITIES:
                    hp = hybrid * self._mult[pol][None]
                    # collapse thin slices to slabs with the rf weights
                    hp = hp.reshape(hp.shape[:3] + (pat.nz_slabs, n_thin))
                    slabs = np.tensordot(hp, self.slider.matrix[r], axes=([4], [0]))
                    ksp = dft_array(slabs, 2, "forward")  # (nc, nx, ky, nslab)
                    ksp = ksp * self._ramps.T[None, None]
                    grouped = np.stack(
                        [ksp[..., list(g)].sum(axis=-1) for g in pat.slice_groups],
                        axis=-1,
                    )
                    lines = self._line_split[s][0 if pol == "positive" else 1]
                    blocks[(s, r, pol)] = grouped[:, :, lines, :]
        return ShotDataSet(blocks=blocks, pattern=pat)

    # -- adjoint -------------------------------------------------------------

    def adjoint(self, data: ShotDataSet) -> np.ndarray:
        pat = self.pattern
        nc = self.coils.ncoils
        nx, ny, nzt = self.grid.shape
        n_thin = self.slider.n_thin
        out = np.zeros((nx, ny, nzt), dtype=np.complex128)
        for s in self.shots:
            for r in self.rfs:
                hybrid = np.zeros((nc, nx, ny, nzt), dtype=np.complex128)
                for pol in POLARITIES:
                    block = data.blocks[(s, r, pol)]
                    lines = self._line_split[s][0 if pol == "positive" else 1]
                    grouped = np.zeros((nc, nx, ny, pat.n_groups), dtype=np.complex128)
                    grouped[:, :, lines, :] = block
                    ksp = np.zeros((nc, nx, ny, pat.nz_slabs), dtype=np.complex128)
                    for gi, g in enumerate(pat.slice_groups):
                        for slab in g:
                            ksp[..., slab] = grouped[..., gi]
                    ksp = ksp * self._ramps.T.conj()[None, None]
                    slabs = dft_array(ksp, 2, "inverse")
                    hp = slabs[..., None] * self.slider.matrix[r].conj()[None, None, None, None, :]
                    hp = hp.reshape((nc, nx, ny, nzt))
                    hybrid += hp * self._mult[pol].conj()[None]
                vc = dft_array(hybrid, 1, "inverse")
                v = np.sum(self.coils.maps.conj() * vc, axis=0)
                phase = self._phase(s, r)
                out += v if phase is None else v * phase.conj()
        return out

    def normal(self, img: np.ndarray) -> np.ndarray:
        return self.adjoint(self.encode(img))


def dense_operator_matrix(op: EncodingOperator) -> np.ndarray:
    """Assemble A column by column (samples x voxels, block keys in
    sorted order). Intended for small grids: oracles, condition-number
    studies, and direct least-squares reconstructions."""
    n = int(np.prod(op.grid.shape))
    e = np.zeros(op.grid.shape, dtype=np.complex128)
    cols = []
    for i in range(n):
        e.flat[i] = 1.0
        d = op.encode(e)
        cols.append(np.concatenate([d.blocks[k].ravel() for k in d.keys()]))
        e.flat[i] = 0.0
    return np.array(cols).T


def lipschitz_estimate(op: EncodingOperator, iters: int = 20, seed: int = 0) -> float:
    """Largest eigenvalue of A^H A by power iteration."""
    if iters < 10:
        raise ValueError("need at least 10 power iterations")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(op.grid.shape) + 1j * rng.standard_normal(op.grid.shape)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = op.normal(v)
        lam = float(np.vdot(v, w).real)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
    return lam
