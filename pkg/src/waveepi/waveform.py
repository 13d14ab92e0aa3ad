"""Sinusoidal wave-encoding gradients, slew limits and hybrid-space PSFs.

Units: gradient amplitudes in mT/m, durations in ms, slew rates in
T/m/s, positions in mm, accrued phase slopes in rad/mm.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import cumulative_trapezoid

GAMMA_RAD_PER_S_PER_T = 2 * np.pi * 42.577e6

# (mT/m * ms) integral of gradient -> T*s/mm, then times gamma -> rad/mm
_MOMENT_TO_RAD_PER_MM = GAMMA_RAD_PER_S_PER_T * 1e-9


@dataclass(frozen=True)
class WaveformSpec:
    """One sinusoidal wave gradient played during the flat-top readout."""

    axis: str  # "y" or "z"
    shape: str  # "cosine" or "sine"
    g_wave_mT_m: float  # amplitude G_w; 0 means "no wave"
    n_cycles: float  # cycles per readout window, may be 0.5
    t_readout_ms: float  # flat-top duration T_r
    g_read_mT_m: float  # readout gradient amplitude G_x
    slew_max_T_m_s: float = 200.0  # hardware slew limit R_max

    def __post_init__(self):
        if self.axis not in ("y", "z"):
            raise ValueError("wave axis must be 'y' or 'z'")
        if self.shape not in ("cosine", "sine"):
            raise ValueError("waveform shape must be 'cosine' or 'sine'")
        if self.g_wave_mT_m < 0:
            raise ValueError("G_w must be >= 0")
        if self.n_cycles <= 0:
            raise ValueError("n_c must be > 0")
        if self.t_readout_ms <= 0:
            raise ValueError("T_r must be > 0")
        if self.g_read_mT_m <= 0:
            raise ValueError("G_x must be > 0")


def no_wave(axis: str, t_readout_ms: float, g_read_mT_m: float) -> WaveformSpec:
    return WaveformSpec(axis, "cosine", 0.0, 1.0, t_readout_ms, g_read_mT_m)


def sample_times_ms(t_readout_ms: float, nx: int) -> np.ndarray:
    """Dwell-centered sample times t_j = (j + 0.5) * T_r / nx."""
    dt = t_readout_ms / nx
    return (np.arange(nx) + 0.5) * dt


def gradient_at(spec: WaveformSpec, t_ms) -> np.ndarray:
    """Gradient value in mT/m at time t (ms from readout start)."""
    u = 2 * np.pi * spec.n_cycles * np.asarray(t_ms, dtype=float) / spec.t_readout_ms
    if spec.shape == "cosine":
        return spec.g_wave_mT_m * np.cos(u)
    return spec.g_wave_mT_m * np.sin(u)


def make_waveform(spec: WaveformSpec, nx: int) -> np.ndarray:
    """Gradient samples (mT/m) at the nx dwell-centered times."""
    if nx < 2:
        raise ValueError("need at least 2 readout samples")
    return gradient_at(spec, sample_times_ms(spec.t_readout_ms, nx))


def check_slew(spec: WaveformSpec) -> tuple[bool, float]:
    """Slew-limit check: returns (ok, max allowed G_w in mT/m).

    The peak slew of G_w*sin/cos(2*pi*n_c*t/T_r) is G_w*2*pi*n_c/T_r,
    so the allowed amplitude is R_max*T_r/(2*pi*n_c).
    """
    max_gw = spec.slew_max_T_m_s * (spec.t_readout_ms * 1e-3) / (2 * np.pi * spec.n_cycles)
    max_gw_mT_m = max_gw * 1e3
    ok = spec.g_wave_mT_m <= max_gw_mT_m * (1 + 1e-9)
    return ok, max_gw_mT_m


def displacement(spec: WaveformSpec, t_ms: float, y_mm: float) -> float:
    """Readout-direction signal displacement (mm) of a point at offset
    y_mm, at time t into the readout, for a cosine wave gradient.

    d = y * (G_w / G_x) * sin(u) / u with u = 2*pi*n_c*t/T_r, i.e. the
    accrued wave moment divided by the k-space distance traversed.
    t = 0 takes the continuous limit sin(u)/u -> 1.
    """
    if spec.shape != "cosine":
        raise ValueError("displacement closed form is for the cosine waveform")
    if t_ms < 0 or t_ms > spec.t_readout_ms:
        raise ValueError("t must lie in [0, T_r]")
    u = 2 * np.pi * spec.n_cycles * t_ms / spec.t_readout_ms
    sinc = 1.0 if u == 0 else np.sin(u) / u
    return y_mm * (spec.g_wave_mT_m / spec.g_read_mT_m) * sinc


def max_spreading_bound(spec: WaveformSpec) -> float:
    """Slew-limited displacement bound in mm per mm of off-center
    distance: displacement at t -> 0 with G_w at the slew limit."""
    _, max_gw = check_slew(spec)
    return max_gw / spec.g_read_mT_m


@dataclass(frozen=True)
class Psf:
    """Hybrid-space wave phase: multiplier exp(-i*phase_slope[j]*u) at
    readout (kx) index j and coordinate u (mm) along `axis`."""

    axis: str
    polarity: str  # "positive" or "negative"
    phase_slope: np.ndarray  # (nx,) rad/mm

    def __post_init__(self):
        object.__setattr__(self, "phase_slope", np.asarray(self.phase_slope, dtype=float))
        if self.polarity not in ("positive", "negative"):
            raise ValueError("polarity must be 'positive' or 'negative'")
        if not np.all(np.isfinite(self.phase_slope)):
            raise ValueError("phase slope must be finite")

    @property
    def nx(self) -> int:
        return self.phase_slope.shape[0]

    def multiplier(self, coords_mm: np.ndarray) -> np.ndarray:
        """(nx, len(coords)) unit-modulus multiplier table."""
        return np.exp(-1j * np.outer(self.phase_slope, np.asarray(coords_mm)))


def identity_psf(axis: str, polarity: str, nx: int) -> Psf:
    return Psf(axis, polarity, np.zeros(nx))


def phase_slope_from_waveform(
    spec: WaveformSpec, nx: int, delay_ms: float = 0.0, scale: float = 1.0
) -> np.ndarray:
    """Accrued phase slope (rad/mm) at the nx sample times via a
    cumulative trapezoid of the (optionally delayed/scaled) gradient."""
    times = sample_times_ms(spec.t_readout_ms, nx)
    pts = np.concatenate(([0.0], times))
    g = scale * gradient_at(spec, pts - delay_ms)
    moment = cumulative_trapezoid(g, pts)  # mT/m * ms at the sample times
    return _MOMENT_TO_RAD_PER_MM * moment


def make_psf(
    spec_y: WaveformSpec,
    spec_z: WaveformSpec,
    nx: int,
    polarity: str,
    delay_ms: float = 0.0,
    scale: float = 1.0,
) -> tuple[Psf, Psf]:
    """Build the (y, z) PSF pair for one readout polarity.

    Positive lines map sample j to kx index j. Negative lines play the
    sign-flipped wave gradients and traverse kx in reverse; storing them
    in logical kx order conjugates the accrued phase relative to that
    axis, so the negative slope at kx index k is -psi_neg(t[nx-1-k]).
    For the ideal zero-net-area waveforms used here the two polarities
    coincide; injected delay/scale imperfections break the symmetry.
    """
    if polarity not in ("positive", "negative"):
        raise ValueError("polarity must be 'positive' or 'negative'")
    if spec_y.t_readout_ms != spec_z.t_readout_ms:
        raise ValueError("y and z waveforms must share the readout duration T_r")
    if nx < 2:
        raise ValueError("need at least 2 readout samples")
    psfs = []
    for spec in (spec_y, spec_z):
        if spec.g_wave_mT_m == 0:
            psfs.append(identity_psf(spec.axis, polarity, nx))
            continue
        if polarity == "positive":
            slope = phase_slope_from_waveform(spec, nx, delay_ms, scale)
        else:
            slope = -phase_slope_from_waveform(spec, nx, delay_ms, -scale)[::-1]
        psfs.append(Psf(spec.axis, polarity, slope))
    return psfs[0], psfs[1]


@dataclass(frozen=True)
class SparseFreqCoeffs:
    """Sparse-frequency parameterization of a PSF phase slope:
    psi(t) = sum_m Re(q_m * exp(i*2*pi*f_m*t)), f_m in kHz, t in ms."""

    axis: str
    polarity: str
    freqs_khz: np.ndarray
    coeffs: np.ndarray  # complex, same length as freqs_khz

    def __post_init__(self):
        object.__setattr__(self, "freqs_khz", np.asarray(self.freqs_khz, dtype=float))
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=np.complex128))
        if self.freqs_khz.shape != self.coeffs.shape or self.freqs_khz.size < 1:
            raise ValueError("need >= 1 frequency with matching coefficients")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("coefficients must be finite")


def default_basis_freqs_khz(spec: WaveformSpec) -> np.ndarray:
    """Sparse frequency basis for the waveform's accrued phase, in kHz.

    The integral of a sine carries a DC offset plus the fundamental.
    The integral of a cosine is a pure sinusoid at the waveform
    frequency, but timing delays shift it and reintroduce a DC term,
    and eddy currents add harmonic content, so the cosine basis keeps
    DC, the fundamental, and the second harmonic.
    """
    f0 = spec.n_cycles / spec.t_readout_ms
    if spec.shape == "sine":
        return np.array([0.0, f0])
    return np.array([0.0, f0, 2 * f0])


def phase_slope_from_coeffs(
    coeffs: SparseFreqCoeffs, nx: int, t_readout_ms: float
) -> np.ndarray:
    """Materialize psi(t_j) (rad/mm) on the nx readout sample grid."""
    t = sample_times_ms(t_readout_ms, nx)
    basis = np.exp(1j * 2 * np.pi * np.outer(t, coeffs.freqs_khz))
    return np.real(basis @ coeffs.coeffs)


def psf_from_coeffs(coeffs: SparseFreqCoeffs, nx: int, t_readout_ms: float) -> Psf:
    return Psf(coeffs.axis, coeffs.polarity, phase_slope_from_coeffs(coeffs, nx, t_readout_ms))
