"""Per-shot EPI sampling patterns: in-plane acceleration, multi-shot
interleaving, partial Fourier, readout polarity tags, and SMS slice
grouping with blipped-CAIPI phase ramps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ALLOWED_PARTIAL_FOURIER = (1.0, 7 / 8, 6 / 8)


@dataclass(frozen=True)
class SamplingPattern:
    ny: int
    nz_slabs: int
    r_in: int
    r_sms: int
    n_shots: int
    partial_fourier: float
    caipi_denominator: int
    # per shot: ordered (ky index, polarity) with strictly alternating polarity
    shots: tuple[tuple[tuple[int, str], ...], ...]
    # SMS groups: tuple per group of the slab indices collapsed together
    slice_groups: tuple[tuple[int, ...], ...]

    @property
    def n_groups(self) -> int:
        return len(self.slice_groups)

    def lines(self, shot: int) -> list[int]:
        return [ky for ky, _ in self.shots[shot]]

    def caipi_shift_vox(self, position_in_group: int) -> float:
        """Image-domain y shift (in voxels) applied to a slab at the
        given position within its SMS group.

        The gradient blips advance the slab phase once per acquired ky
        line (stride r_in), so the realized shift is FOV/denominator in
        the reduced FOV, i.e. ny / (denominator * r_in) full-FOV voxels
        per position step. A shift defined on the full FOV would be
        invisible on the acquired lines whenever denominator == r_in.
        """
        return position_in_group * self.ny / (self.caipi_denominator * self.r_in)

    def caipi_ramp(self, position_in_group: int) -> np.ndarray:
        """(ny,) unit-modulus ky-linear phase ramp implementing the
        per-slab CAIPI shift; ky indices are centered at ny // 2."""
        ky = np.arange(self.ny) - self.ny // 2
        shift = self.caipi_shift_vox(position_in_group)
        return np.exp(-2j * np.pi * ky * shift / self.ny)

    def acquired_fraction(self) -> float:
        """Acquired ky samples per shot over the full ky grid, times
        the SMS collapse: the effective undersampling is its inverse."""
        per_shot = len(self.shots[0]) / self.ny
        return per_shot / self.r_sms

    @staticmethod
    def from_dict(d: dict) -> "SamplingPattern":
        return SamplingPattern(
            ny=d["ny"],
            nz_slabs=d["nz_slabs"],
            r_in=d["r_in"],
            r_sms=d["r_sms"],
            n_shots=d["n_shots"],
            partial_fourier=d["partial_fourier"],
            caipi_denominator=d["caipi_denominator"],
            shots=tuple(tuple((ky, pol) for ky, pol in shot) for shot in d["shots"]),
            slice_groups=tuple(tuple(g) for g in d["slice_groups"]),
        )

    def to_dict(self) -> dict:
        return {
            "ny": self.ny,
            "nz_slabs": self.nz_slabs,
            "r_in": self.r_in,
            "r_sms": self.r_sms,
            "n_shots": self.n_shots,
            "partial_fourier": self.partial_fourier,
            "caipi_denominator": self.caipi_denominator,
            "shots": [[[ky, pol] for ky, pol in shot] for shot in self.shots],
            "slice_groups": [list(g) for g in self.slice_groups],
        }


def _shot_offsets(r_in: int, n_shots: int) -> list[int]:
    """ky offsets of each shot: s * (r_in / n_shots) when that divides
    evenly, otherwise consecutive offsets s * 1."""
    if r_in % n_shots == 0:
        step = r_in // n_shots
    else:
        step = 1
    offsets = [s * step for s in range(n_shots)]
    if len(set(o % r_in for o in offsets)) != n_shots:
        raise ValueError(
            f"shot interleave offsets collide for R_in={r_in}, n_shots={n_shots}"
        )
    return offsets


def make_pattern(
    ny: int,
    nz_slabs: int,
    r_in: int,
    r_sms: int,
    n_shots: int = 1,
    partial_fourier: float = 1.0,
    caipi_shift_denominator: int | None = None,
) -> SamplingPattern:
    """Build the acquisition pattern.

    Shot s acquires ky indices {offset_s + m * r_in} below the partial
    Fourier cutoff, with strictly alternating polarity starting
    positive. SMS groups interleave slabs at maximal separation; the
    CAIPI denominator defaults to r_sms (FOV/2 shift for MB2, FOV/3
    for MB3, realized in the reduced FOV of the accelerated scan).
    """
    if r_in < 1 or n_shots < 1 or r_sms < 1:
        raise ValueError("R_in, R_sms and n_shots must be >= 1")
    if nz_slabs % r_sms != 0:
        raise ValueError(f"R_sms={r_sms} must divide the slab count {nz_slabs}")
    if not any(abs(partial_fourier - pf) < 1e-12 for pf in ALLOWED_PARTIAL_FOURIER):
        raise ValueError(f"partial Fourier must be one of {ALLOWED_PARTIAL_FOURIER}")
    if n_shots > r_in:
        raise ValueError("n_shots must not exceed R_in")
    if caipi_shift_denominator is None:
        caipi_shift_denominator = r_sms

    ky_max = int(round(partial_fourier * ny))  # indices >= ky_max are skipped
    shots = []
    for offset in _shot_offsets(r_in, n_shots):
        lines = [ky for ky in range(offset, ky_max, r_in)]
        tagged = tuple(
            (ky, "positive" if i % 2 == 0 else "negative") for i, ky in enumerate(lines)
        )
        shots.append(tagged)

    n_groups = nz_slabs // r_sms
    slice_groups = tuple(
        tuple(g + n_groups * m for m in range(r_sms)) for g in range(n_groups)
    )
    return SamplingPattern(
        ny=ny,
        nz_slabs=nz_slabs,
        r_in=r_in,
        r_sms=r_sms,
        n_shots=n_shots,
        partial_fourier=partial_fourier,
        caipi_denominator=caipi_shift_denominator,
        shots=tuple(shots),
        slice_groups=slice_groups,
    )


def split_by_polarity(pattern: SamplingPattern, shot: int) -> tuple[list[int], list[int]]:
    """The shot's acquired ky indices split into (positive, negative)
    lists, preserving acquisition order."""
    if shot >= pattern.n_shots:
        raise ValueError(f"shot {shot} out of range (n_shots={pattern.n_shots})")
    pos = [ky for ky, pol in pattern.shots[shot] if pol == "positive"]
    neg = [ky for ky, pol in pattern.shots[shot] if pol == "negative"]
    return pos, neg
