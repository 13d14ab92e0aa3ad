"""Simulation and reconstruction workbench for wave-encoded echo-planar
MRI: sinusoidal wave gradients, blipped simultaneous-multi-slice EPI
sampling, an exact-adjoint encoding operator, PSF calibration, iterative
reconstructions, and noise/resolution analysis tools."""

from .grids import ComplexVolume, Grid, adjoint_dot_test, dft_array
from .phantom import (
    CoilMaps,
    Ellipsoid,
    PhantomSpec,
    add_noise,
    default_head_spec,
    make_coil_maps,
    make_phantom,
    make_random_coil_maps,
)
from .waveform import (
    Psf,
    SparseFreqCoeffs,
    WaveformSpec,
    check_slew,
    default_basis_freqs_khz,
    displacement,
    identity_psf,
    make_psf,
    make_waveform,
    max_spreading_bound,
    no_wave,
    phase_slope_from_coeffs,
    phase_slope_from_waveform,
    psf_from_coeffs,
    sample_times_ms,
)
from .sampling import ALLOWED_PARTIAL_FOURIER, SamplingPattern, make_pattern, split_by_polarity
from .forward import (
    EncodingOperator,
    ShotDataSet,
    SliderEncoding,
    dense_operator_matrix,
    lipschitz_estimate,
    synth_shot_phases,
)
from .calibration import (
    Imperfection,
    build_dual_psfs,
    calibrate,
    coeffs_from_slope,
    estimate_psf_auto,
    estimate_psf_direct,
    reference_psfs,
    simulate_reference,
)
from .recon import (
    LowRankConfig,
    SolverDivergence,
    cg_normal,
    estimate_shot_phase,
    estimate_shot_phases,
    gslider_init,
    gslider_joint_cg,
    hankel_project,
    multishot_fista,
    sense_cg,
)
from .metrics import (
    effective_acceleration,
    gfactor_pseudo_replica,
    ghost_energy,
    nrmse,
    psf_profile,
)
from .volio import VolumeFormatError, read_volume, write_pgm, write_volume
from .config import (
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

__version__ = "0.1.0"
