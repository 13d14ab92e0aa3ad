"""Wave-PSF calibration from simulated dual-polarity reference scans.

Reference data live on a (typically y-coarse) calibration grid where
the hybrid-domain identity S_wave = F_y [P . F_y^-1 S_ref] holds
exactly, so noiseless estimates recover the generating phase slopes to
machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grids import Grid, dft_array
from .phantom import CoilMaps
from .waveform import (
    Psf,
    SparseFreqCoeffs,
    WaveformSpec,
    default_basis_freqs_khz,
    identity_psf,
    make_psf,
    phase_slope_from_coeffs,
    psf_from_coeffs,
    sample_times_ms,
)

POLARITIES = ("positive", "negative")


@dataclass(frozen=True)
class Imperfection:
    """Per-polarity gradient timing delay and amplitude scale applied to
    the wave waveforms before PSF construction."""

    delay_positive_ms: float = 0.0
    delay_negative_ms: float = 0.0
    scale_positive: float = 1.0
    scale_negative: float = 1.0

    def delay(self, polarity: str) -> float:
        return self.delay_positive_ms if polarity == "positive" else self.delay_negative_ms

    def scale(self, polarity: str) -> float:
        return self.scale_positive if polarity == "positive" else self.scale_negative


def reference_psfs(
    spec_y: WaveformSpec, spec_z: WaveformSpec, nx: int, imperfection: Imperfection
) -> dict:
    """The four (axis x polarity) PSFs of the imperfection-perturbed
    waveforms; this is the ground truth the estimators try to recover."""
    return {
        pol: make_psf(
            spec_y, spec_z, nx, pol,
            delay_ms=imperfection.delay(pol), scale=imperfection.scale(pol),
        )
        for pol in POLARITIES
    }


def simulate_reference(
    img,
    coils: CoilMaps,
    spec_y: WaveformSpec,
    spec_z: WaveformSpec,
    imperfection: Imperfection = Imperfection(),
    sigma: float = 0.0,
    seed: int = 0,
) -> dict:
    """Fully sampled dual-polarity reference scans with and without wave.

    `img` and `coils` live on the calibration grid (low y resolution by
    convention). Returns {"ref": {pol: k-space}, "wave": {pol: k-space}}
    with arrays of shape (ncoils, nx, ny, nz); k-space along x and y,
    image domain along z.
    """
    grid = coils.grid
    data = np.asarray(getattr(img, "data", img), dtype=np.complex128)
    vc = coils.maps * data[None]
    hybrid = dft_array(vc, 1, "forward")
    y = grid.coords("y")
    z = grid.coords("z")
    rng = np.random.default_rng(seed)

    def _noise(shape):
        if sigma == 0:
            return 0.0
        return sigma * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))

    out = {"ref": {}, "wave": {}}
    psfs = reference_psfs(spec_y, spec_z, grid.nx, imperfection)
    for pol in POLARITIES:
        psf_y, psf_z = psfs[pol]
        phase = (
            psf_y.phase_slope[:, None, None] * y[None, :, None]
            + psf_z.phase_slope[:, None, None] * z[None, None, :]
        )
        out["ref"][pol] = dft_array(hybrid, 2, "forward")
        waved = hybrid * np.exp(-1j * phase)[None]
        out["wave"][pol] = dft_array(waved, 2, "forward")
    for kind in ("ref", "wave"):
        for pol in POLARITIES:
            out[kind][pol] = out[kind][pol] + _noise(out[kind][pol].shape)
    return out


def _hybrid(kspace: np.ndarray) -> np.ndarray:
    """Back to the (coil, kx, y, z) hybrid domain."""
    return dft_array(kspace, 2, "inverse")


def estimate_psf_direct(s_wave: np.ndarray, s_ref: np.ndarray, grid: Grid) -> dict:
    """Direct per-kx phase-difference PSF estimate for one polarity.

    Works on the wrap-robust product of adjacent hybrid-domain samples:
    along y, R(y+dy) conj(R(y)) with R = H_w conj(H_r) has phase
    -psi_y * dy independent of y, z and coil, so an |H_r|^2-weighted
    complex sum gives the slope per kx. Same along z. Returns
    {"y": (slope, weight), "z": (slope, weight)} with zero weight
    flagging unreliable kx columns (and axes of length 1).
    """
    if s_wave.shape != s_ref.shape:
        raise ValueError("wave and reference scans must share geometry")
    ratio = _hybrid(s_wave) * np.conj(_hybrid(s_ref))  # (nc, kx, y, z)
    out = {}
    for axis, ai, step in (("y", 2, grid.dy), ("z", 3, grid.dz)):
        n = ratio.shape[ai]
        if n < 2:
            out[axis] = (np.zeros(grid.nx), np.zeros(grid.nx))
            continue
        lead = np.take(ratio, np.arange(1, n), axis=ai)
        lag = np.take(ratio, np.arange(0, n - 1), axis=ai)
        prod = lead * np.conj(lag)
        summed = prod.sum(axis=tuple(i for i in range(prod.ndim) if i != 1))
        # the per-voxel phase step can exceed pi at strong wave amounts;
        # the slope is continuous in kx and starts small, so unwrap there
        slope = -np.unwrap(np.angle(summed)) / step
        weight = np.abs(summed)
        slope[weight == 0] = 0.0
        out[axis] = (slope, weight)
    return out


def coeffs_from_slope(
    slope: np.ndarray,
    weight: np.ndarray,
    freqs_khz: np.ndarray,
    t_readout_ms: float,
    axis: str,
    polarity: str,
    low_kx_fraction: float = 1.0,
) -> SparseFreqCoeffs:
    """Weighted linear projection of a per-kx slope onto the sparse
    frequency basis.

    By default the full kx range enters the fit; the weights already
    suppress low-SNR columns. Restricting to a central band (fraction
    < 1) makes the DC/fundamental/harmonic basis nearly collinear over
    the shortened time window and can blow up the coefficients."""
    nx = slope.shape[0]
    t = sample_times_ms(t_readout_ms, nx)
    half = int(round(low_kx_fraction * nx / 2))
    center = nx // 2
    sel = slice(max(0, center - half), min(nx, center + half + 1))
    # psi(t) = sum_m Re(q_m) cos(2 pi f t) - Im(q_m) sin(2 pi f t)
    cols = []
    for f in freqs_khz:
        cols.append(np.cos(2 * np.pi * f * t))
        cols.append(-np.sin(2 * np.pi * f * t))
    design = np.stack(cols, axis=1)
    w = np.sqrt(weight[sel])
    sol, *_ = np.linalg.lstsq(design[sel] * w[:, None], slope[sel] * w, rcond=None)
    q = sol[0::2] + 1j * sol[1::2]
    return SparseFreqCoeffs(axis=axis, polarity=polarity, freqs_khz=freqs_khz, coeffs=q)


class AutoPsfDivergence(RuntimeError):
    def __init__(self, trace):
        super().__init__(f"auto-PSF fit diverged after {len(trace)} iterations")
        self.trace = trace


def estimate_psf_auto(
    s_wave: np.ndarray,
    s_ref: np.ndarray,
    grid: Grid,
    t_readout_ms: float,
    polarity: str,
    freqs_y_khz: np.ndarray,
    freqs_z_khz: np.ndarray,
    init_y: SparseFreqCoeffs | None = None,
    init_z: SparseFreqCoeffs | None = None,
    max_iters: int = 100,
    rel_tol: float = 1e-10,
) -> tuple[SparseFreqCoeffs, SparseFreqCoeffs, dict]:
    """Sparse-frequency PSF fit for one polarity by damped Gauss-Newton.

    Minimizes || P(q) . H_ref - H_wave ||^2 in the hybrid domain over
    the complex coefficients of both wave axes jointly (both gradients
    phase the same reference data, so the two axes share one residual).
    Damping halves after an accepted step and doubles on rejection; the
    residual is non-increasing across accepted steps by construction.
    """
    freqs_y_khz = np.asarray(freqs_y_khz, dtype=float)
    freqs_z_khz = np.asarray(freqs_z_khz, dtype=float)
    if freqs_y_khz.size == 0 or freqs_z_khz.size == 0:
        raise ValueError("frequency basis must be non-empty")
    href = _hybrid(s_ref)
    hwave = _hybrid(s_wave)
    nx = grid.nx
    t = sample_times_ms(t_readout_ms, nx)
    y = grid.coords("y")
    z = grid.coords("z")

    # real parameter vector: [Re/Im interleaved for y coeffs, then z]
    ny_c, nz_c = freqs_y_khz.size, freqs_z_khz.size
    theta = np.zeros(2 * (ny_c + nz_c))
    if init_y is not None:
        theta[0 : 2 * ny_c : 2] = init_y.coeffs.real
        theta[1 : 2 * ny_c : 2] = init_y.coeffs.imag
    if init_z is not None:
        theta[2 * ny_c :: 2] = init_z.coeffs.real
        theta[2 * ny_c + 1 :: 2] = init_z.coeffs.imag

    # d psi(t) / d theta columns, per axis: cos/-sin at each frequency
    def _basis(freqs):
        cols = []
        for f in freqs:
            cols.append(np.cos(2 * np.pi * f * t))
            cols.append(-np.sin(2 * np.pi * f * t))
        return np.stack(cols, axis=1)  # (nx, 2*nfreq)

    basis_y = _basis(freqs_y_khz)
    basis_z = _basis(freqs_z_khz)

    def _phase(th):
        psi_y = basis_y @ th[: 2 * ny_c]
        psi_z = basis_z @ th[2 * ny_c :]
        return (
            psi_y[:, None, None] * y[None, :, None]
            + psi_z[:, None, None] * z[None, None, :]
        )

    def _residual(th):
        model = np.exp(-1j * _phase(th))[None] * href
        return model - hwave, model

    res, model = _residual(theta)
    cost = float(np.vdot(res, res).real)
    trace = [cost]
    damping = 1e-3
    for _ in range(max_iters):
        if not np.isfinite(cost):
            raise AutoPsfDivergence(trace)
        # J[..., k] = -i * u_axis * dpsi/dtheta_k * model
        n_par = theta.size
        jac = np.empty(res.shape + (n_par,), dtype=np.complex128)
        for k in range(2 * ny_c):
            jac[..., k] = (-1j) * (basis_y[:, k][None, :, None, None] * y[None, None, :, None]) * model
        for k in range(2 * nz_c):
            jac[..., 2 * ny_c + k] = (-1j) * (basis_z[:, k][None, :, None, None] * z[None, None, None, :]) * model
        jmat = jac.reshape(-1, n_par)
        rvec = res.reshape(-1)
        jtj = (jmat.conj().T @ jmat).real
        jtr = (jmat.conj().T @ rvec).real
        accepted = False
        for _attempt in range(60):
            try:
                delta = np.linalg.solve(jtj + damping * np.diag(np.diag(jtj) + 1e-30), -jtr)
            except np.linalg.LinAlgError:
                damping *= 2
                continue
            cand = theta + delta
            cres, cmodel = _residual(cand)
            ccost = float(np.vdot(cres, cres).real)
            if np.isfinite(ccost) and ccost <= cost:
                theta, res, model = cand, cres, cmodel
                rel_drop = (cost - ccost) / cost if cost > 0 else 0.0
                cost = ccost
                trace.append(cost)
                damping = max(damping / 2, 1e-12)
                accepted = True
                break
            damping *= 2
        if not accepted or cost == 0 or (len(trace) > 1 and rel_drop < rel_tol):
            break
    if not np.isfinite(cost):
        raise AutoPsfDivergence(trace)

    qy = theta[0 : 2 * ny_c : 2] + 1j * theta[1 : 2 * ny_c : 2]
    qz = theta[2 * ny_c :: 2] + 1j * theta[2 * ny_c + 1 :: 2]
    coeffs_y = SparseFreqCoeffs("y", polarity, freqs_y_khz, qy)
    coeffs_z = SparseFreqCoeffs("z", polarity, freqs_z_khz, qz)
    return coeffs_y, coeffs_z, {"cost_trace": trace, "iterations": len(trace) - 1}


def calibrate(
    reference: dict,
    grid: Grid,
    spec_y: WaveformSpec,
    spec_z: WaveformSpec,
) -> dict:
    """Full calibration pipeline on a simulate_reference() output:
    direct estimate for initialization, auto-PSF refinement, returning
    {"coeffs": {(axis, pol): SparseFreqCoeffs},
     "direct": {(axis, pol): (slope, weight)}, "info": {pol: fit info}}.
    """
    freqs_y = default_basis_freqs_khz(spec_y)
    freqs_z = default_basis_freqs_khz(spec_z)
    t_read = spec_y.t_readout_ms
    coeffs, direct, info = {}, {}, {}
    for pol in POLARITIES:
        d = estimate_psf_direct(reference["wave"][pol], reference["ref"][pol], grid)
        direct[("y", pol)] = d["y"]
        direct[("z", pol)] = d["z"]
        init_y = coeffs_from_slope(*d["y"], freqs_y, t_read, "y", pol)
        init_z = coeffs_from_slope(*d["z"], freqs_z, t_read, "z", pol)
        cy, cz, fit_info = estimate_psf_auto(
            reference["wave"][pol], reference["ref"][pol], grid, t_read, pol,
            freqs_y, freqs_z, init_y, init_z,
        )
        coeffs[("y", pol)] = cy
        coeffs[("z", pol)] = cz
        info[pol] = fit_info
    return {"coeffs": coeffs, "direct": direct, "info": info}


def build_dual_psfs(coeffs: dict, nx: int, t_readout_ms: float) -> dict:
    """Materialize the four PSFs from per-(axis, polarity) coefficients.

    Missing or None entries yield identity PSFs. Returns the operator's
    {polarity: (Psf_y, Psf_z)} layout.
    """
    out = {}
    for pol in POLARITIES:
        pair = []
        for axis in ("y", "z"):
            c = coeffs.get((axis, pol))
            if c is None:
                pair.append(identity_psf(axis, pol, nx))
            else:
                pair.append(psf_from_coeffs(c, nx, t_readout_ms))
        out[pol] = tuple(pair)
    return out
