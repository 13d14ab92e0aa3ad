import numpy as np
import pytest

from waveepi import ALLOWED_PARTIAL_FOURIER, SamplingPattern, make_pattern, split_by_polarity
from waveepi.metrics import effective_acceleration


def test_basic_pattern_lines():
    p = make_pattern(16, 4, r_in=2, r_sms=2)
    assert p.n_shots == 1
    assert p.lines(0) == list(range(0, 16, 2))
    # strictly alternating polarity starting positive
    pols = [pol for _, pol in p.shots[0]]
    assert pols[0] == "positive"
    assert all(a != b for a, b in zip(pols, pols[1:]))


def test_partial_fourier_cutoff():
    p = make_pattern(16, 4, 2, 1, partial_fourier=6 / 8)
    assert max(p.lines(0)) < 12
    with pytest.raises(ValueError):
        make_pattern(16, 4, 2, 1, partial_fourier=0.7)
    assert set(ALLOWED_PARTIAL_FOURIER) == {1.0, 7 / 8, 6 / 8}


def test_multishot_interleave():
    p = make_pattern(24, 4, r_in=6, r_sms=2, n_shots=2)
    # offsets s * (r_in / n_shots) = 0, 3
    assert p.lines(0)[:2] == [0, 6]
    assert p.lines(1)[:2] == [3, 9]
    # shots are disjoint and jointly stride r_in/n_shots
    assert not set(p.lines(0)) & set(p.lines(1))


def test_multishot_fallback_offsets():
    p = make_pattern(24, 4, r_in=3, r_sms=2, n_shots=2)
    assert p.lines(0)[0] == 0 and p.lines(1)[0] == 1
    with pytest.raises(ValueError):
        make_pattern(24, 4, r_in=2, r_sms=2, n_shots=3)


def test_slice_groups_interleaved():
    p = make_pattern(8, 6, 1, 3)
    assert p.n_groups == 2
    assert p.slice_groups == ((0, 2, 4), (1, 3, 5))
    with pytest.raises(ValueError):
        make_pattern(8, 5, 1, 3)


def test_caipi_shift_reduced_fov():
    # blips advance per acquired line: realized shift is FOV/denominator
    # of the reduced FOV, i.e. ny/(denominator*r_in) full-FOV voxels
    p = make_pattern(12, 4, r_in=3, r_sms=2)
    assert p.caipi_denominator == 2
    assert p.caipi_shift_vox(0) == 0.0
    assert p.caipi_shift_vox(1) == pytest.approx(12 / (2 * 3))


def test_caipi_ramp_is_shift_on_acquired_lines():
    # the ramp restricted to acquired ky lines must NOT be constant,
    # otherwise SMS unaliasing is rank-deficient
    p = make_pattern(12, 4, r_in=3, r_sms=2)
    ramp = p.caipi_ramp(1)
    acquired = ramp[p.lines(0)]
    assert np.abs(acquired - acquired[0]).max() > 0.5
    assert np.allclose(np.abs(ramp), 1.0)


def test_caipi_ramp_full_fov_shift_property():
    # applying the ramp in ky shifts an image by shift_vox along y
    ny = 12
    p = make_pattern(ny, 2, r_in=1, r_sms=2)
    shift = p.caipi_shift_vox(1)
    assert shift == pytest.approx(ny / 2)
    rng = np.random.default_rng(0)
    img = rng.standard_normal(ny) + 1j * rng.standard_normal(ny)
    from waveepi import dft_array

    ksp = dft_array(img, 0, "forward") * p.caipi_ramp(1)
    shifted = dft_array(ksp, 0, "inverse")
    assert np.abs(shifted - np.roll(img, int(round(shift)))).max() < 1e-12


def test_split_by_polarity():
    p = make_pattern(16, 2, 2, 1)
    pos, neg = split_by_polarity(p, 0)
    assert pos == p.lines(0)[0::2]
    assert neg == p.lines(0)[1::2]
    with pytest.raises(ValueError):
        split_by_polarity(p, 1)


def test_acquired_fraction_and_effective_acceleration():
    p = make_pattern(16, 4, r_in=2, r_sms=2)
    assert p.acquired_fraction() == pytest.approx(1 / 4)
    assert effective_acceleration(p) == pytest.approx(4.0)
    p2 = make_pattern(16, 4, 2, 2, n_shots=2, partial_fourier=6 / 8)
    # 2 shots jointly acquire more samples; pf trims the top of ky
    assert effective_acceleration(p2) == pytest.approx(
        16 * 4 / (sum(len(s) for s in p2.shots) * p2.n_groups)
    )


def test_dict_round_trip():
    p = make_pattern(16, 4, 2, 2, n_shots=2, partial_fourier=7 / 8)
    q = SamplingPattern.from_dict(p.to_dict())
    assert q == p


def test_validation_errors():
    with pytest.raises(ValueError):
        make_pattern(16, 4, 0, 1)
    with pytest.raises(ValueError):
        make_pattern(16, 4, 2, 1, n_shots=3)
