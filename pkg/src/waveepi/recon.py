"""Reconstruction solvers: dual-PSF SENSE by conjugate gradient,
multi-shot structured low-rank completion with FISTA, shot-phase
estimation, and joint thin-slice RF-slab-encoded reconstruction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .forward import EncodingOperator, ShotDataSet, SliderEncoding
from .grids import dft_array


class SolverDivergence(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


@dataclass(frozen=True)
class LowRankConfig:
    kernel: tuple[int, int] = (7, 7)
    keep_fraction: float = 0.375
    fista_iters: int = 50
    cg_inner_iters: int = 10

    def __post_init__(self):
        if not (0 < self.keep_fraction <= 1):
            raise ValueError("keep_fraction must lie in (0, 1]")
        if min(self.kernel) < 1:
            raise ValueError("kernel must be at least 1x1")


# -- conjugate gradient on the normal equations -------------------------------

def cg_normal(
    op: EncodingOperator,
    data: ShotDataSet,
    tol: float = 1e-6,
    max_iters: int = 50,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, dict]:
    """CG for A^H A x = A^H d. Returns (x, info) where info carries the
    normal-equation residual history and the data-consistency cost
    ||A x - d||^2 per iteration (monotone, since CG minimizes it over
    expanding Krylov subspaces)."""
    b = op.adjoint(data)
    d2 = data.norm2()
    x = np.zeros_like(b) if x0 is None else np.asarray(x0, dtype=np.complex128).copy()
    r = b - (op.normal(x) if x0 is not None else np.zeros_like(b))
    if x0 is None:
        r = b.copy()
    p = r.copy()
    rs = float(np.vdot(r, r).real)
    b_norm = np.sqrt(float(np.vdot(b, b).real)) or 1.0
    residuals = [np.sqrt(rs) / b_norm]
    costs = [_quadratic_cost(x, b, r, d2)]
    for _ in range(max_iters):
        if residuals[-1] < tol:
            break
        mp = op.normal(p)
        denom = float(np.vdot(p, mp).real)
        if denom <= 0 or not np.isfinite(denom):
            raise SolverDivergence("CG curvature became non-positive", residuals)
        alpha = rs / denom
        x = x + alpha * p
        r = r - alpha * mp
        rs_new = float(np.vdot(r, r).real)
        if not np.isfinite(rs_new):
            raise SolverDivergence("CG residual became non-finite", residuals)
        p = r + (rs_new / rs) * p
        rs = rs_new
        residuals.append(np.sqrt(rs) / b_norm)
        costs.append(_quadratic_cost(x, b, r, d2))
    return x, {"residuals": residuals, "costs": costs, "iterations": len(residuals) - 1}


def _quadratic_cost(x, b, r, d2):
    # ||Ax - d||^2 via A^H A x = b - r
    mx = b - r
    return float((np.vdot(x, mx) - 2 * np.vdot(x, b)).real + d2)


def sense_cg(
    data: ShotDataSet,
    op: EncodingOperator,
    tol: float = 1e-6,
    max_iters: int = 50,
) -> tuple[np.ndarray, dict]:
    """Dual-PSF SENSE: least-squares fit of a single image to the
    polarity-split wave-EPI data, from a zero initial guess."""
    return cg_normal(op, data, tol=tol, max_iters=max_iters)


# -- block-Hankel low-rank projection -----------------------------------------

def hankel_lift(kspaces: np.ndarray, kernel: tuple[int, int]) -> np.ndarray:
    """Stack sliding kernel-size patches of each shot's 2D k-space;
    rows are patch positions, columns are patch entries concatenated
    across shots."""
    s, nx, ny = kspaces.shape
    kx, ky = kernel
    if kx > nx or ky > ny:
        raise ValueError("kernel does not fit inside the k-space array")
    wins = sliding_window_view(kspaces, (kx, ky), axis=(1, 2))  # (s, rx, ry, kx, ky)
    rx, ry = wins.shape[1], wins.shape[2]
    return wins.transpose(1, 2, 0, 3, 4).reshape(rx * ry, s * kx * ky)


def hankel_delift(mat: np.ndarray, shape: tuple, kernel: tuple[int, int]) -> np.ndarray:
    """Adjoint-average de-lifting: overlapping patch entries are
    averaged back onto the k-space grid (Moore-Penrose of the lift)."""
    s, nx, ny = shape
    kx, ky = kernel
    rx, ry = nx - kx + 1, ny - ky + 1
    wins = mat.reshape(rx, ry, s, kx, ky)
    acc = np.zeros(shape, dtype=np.complex128)
    cnt = np.zeros((nx, ny))
    for i in range(kx):
        for j in range(ky):
            acc[:, i : i + rx, j : j + ry] += wins[:, :, :, i, j].transpose(2, 0, 1)
            cnt[i : i + rx, j : j + ry] += 1
    return acc / cnt[None]


def hankel_rank_keep(cfg: LowRankConfig, n_singular: int) -> int:
    return int(np.ceil(cfg.keep_fraction * n_singular))


def hankel_project(shot_kspaces: np.ndarray, cfg: LowRankConfig) -> np.ndarray:
    """Project per-slice shot k-spaces toward low block-Hankel rank by
    hard SVD truncation, keeping ceil(keep_fraction * count) values.

    Accepts (n_shots, nx, ny) or (n_shots, nx, ny, nz); slices along z
    are projected independently. All-zero input is returned unchanged.
    """
    arr = np.asarray(shot_kspaces, dtype=np.complex128)
    squeeze = arr.ndim == 3
    if squeeze:
        arr = arr[..., None]
    if arr.shape[0] < 2:
        raise ValueError("low-rank coupling needs at least 2 shots")
    out = np.empty_like(arr)
    for iz in range(arr.shape[3]):
        block = arr[..., iz]
        if not np.any(block):
            out[..., iz] = block
            continue
        lifted = hankel_lift(block, cfg.kernel)
        u, sv, vh = np.linalg.svd(lifted, full_matrices=False)
        keep = hankel_rank_keep(cfg, sv.size)
        sv[keep:] = 0.0
        out[..., iz] = hankel_delift((u * sv) @ vh, block.shape, cfg.kernel)
    return out[..., 0] if squeeze else out


# -- multi-shot FISTA ----------------------------------------------------------

def _image_to_kspace(img: np.ndarray) -> np.ndarray:
    return dft_array(dft_array(img, 0, "forward"), 1, "forward")


def _kspace_to_image(ksp: np.ndarray) -> np.ndarray:
    return dft_array(dft_array(ksp, 0, "inverse"), 1, "inverse")


def multishot_fista(
    data: ShotDataSet,
    op: EncodingOperator,
    cfg: LowRankConfig,
    lipschitz: float | None = None,
    seed: int = 0,
) -> tuple[np.ndarray, dict]:
    """MUSSELS-style multi-shot recovery: FISTA gradient steps on the
    per-shot data consistency, with a block-Hankel SVD-truncation
    projection across shots after every step.

    Returns (shot_images, info); shot_images has shape
    (n_shots, nx, ny, n_slabs) and info carries the per-iteration
    data-consistency cost.
    """
    from .forward import lipschitz_estimate

    n_shots = op.pattern.n_shots
    if n_shots < 2:
        raise ValueError("multi-shot reconstruction needs >= 2 shots")
    shot_ops = [op.for_shot(s) for s in range(n_shots)]
    shot_data = [
        data.replace_blocks({k: data.blocks[k] for k in data.blocks if k[0] == s})
        for s in range(n_shots)
    ]
    if lipschitz is None:
        lipschitz = max(lipschitz_estimate(o, iters=15, seed=seed) for o in shot_ops)
    step = 1.0 / (lipschitz * 1.01)

    shape = (n_shots,) + op.grid.shape
    x = np.zeros(shape, dtype=np.complex128)
    y = x.copy()
    t = 1.0
    costs = []
    for _ in range(cfg.fista_iters):
        cost = 0.0
        grad = np.empty_like(x)
        for s in range(n_shots):
            resid = shot_ops[s].encode(y[s]) - shot_data[s]
            cost += resid.norm2()
            grad[s] = shot_ops[s].adjoint(resid)
        if not np.isfinite(cost):
            raise SolverDivergence("FISTA cost became non-finite", costs)
        costs.append(cost)
        z = y - step * grad
        ksp = np.stack([_image_to_kspace(z[s]) for s in range(n_shots)])
        ksp = hankel_project(ksp, cfg)
        x_new = np.stack([_kspace_to_image(ksp[s]) for s in range(n_shots)])
        t_new = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = x_new + ((t - 1) / t_new) * (x_new - x)
        x, t = x_new, t_new
    final_cost = sum(
        (shot_ops[s].encode(x[s]) - shot_data[s]).norm2() for s in range(n_shots)
    )
    costs.append(final_cost)
    return x, {"costs": costs, "lipschitz": lipschitz}


# -- shot phase estimation and g-Slider reconstruction -------------------------

def estimate_shot_phase(image: np.ndarray, lowpass_fraction: float = 0.25) -> np.ndarray:
    """Unit-modulus smooth phase of an interim image: Hamming-windowed
    low-pass over the central fraction of in-plane k-space, then
    normalized to magnitude one (zero-magnitude voxels get phase 0)."""
    img = np.asarray(image, dtype=np.complex128)
    nx, ny = img.shape[:2]
    ksp = _image_to_kspace(img)
    win = np.zeros((nx, ny))
    cx = max(2, int(round(lowpass_fraction * nx)))
    cy = max(2, int(round(lowpass_fraction * ny)))
    wx = np.hamming(cx)
    wy = np.hamming(cy)
    x0, y0 = nx // 2 - cx // 2, ny // 2 - cy // 2
    win[x0 : x0 + cx, y0 : y0 + cy] = np.outer(wx, wy)
    low = _kspace_to_image(ksp * win.reshape((nx, ny) + (1,) * (img.ndim - 2)))
    mag = np.abs(low)
    phase = np.where(mag > 0, low / np.where(mag > 0, mag, 1.0), 1.0)
    return phase


def estimate_shot_phases(interim: dict, lowpass_fraction: float = 0.25) -> dict:
    """Apply estimate_shot_phase to every interim (shot, rf) image."""
    return {k: estimate_shot_phase(v, lowpass_fraction) for k, v in interim.items()}


def gslider_init(
    interim: dict,
    phases: dict,
    slider: SliderEncoding,
) -> np.ndarray:
    """Direct inversion initial guess for the joint reconstruction:
    remove estimated shot phases, average shots, and apply the slab-wise
    inverse of the RF encoding matrix to stack thin slices.

    `interim` maps (shot, rf) to slab-resolution volumes of shape
    (nx, ny, n_slabs); the result has n_slabs * n_thin thin slices.
    """
    inv = slider.inverse()  # raises for singular or non-square matrices
    keys = sorted(interim)
    shots = sorted({s for s, _ in keys})
    rfs = sorted({r for _, r in keys})
    sample = interim[keys[0]]
    nx, ny, n_slabs = sample.shape
    m = np.zeros((slider.n_rf, nx, ny, n_slabs), dtype=np.complex128)
    for r in rfs:
        acc = np.zeros((nx, ny, n_slabs), dtype=np.complex128)
        for s in shots:
            acc += interim[(s, r)] * np.conj(phases[(s, r)])
        m[r] = acc / len(shots)
    thin = np.einsum("hr,rxys->xysh", inv, m)  # (nx, ny, n_slabs, n_thin)
    return thin.reshape(nx, ny, n_slabs * slider.n_thin)


def gslider_joint_cg(
    data: ShotDataSet,
    op: EncodingOperator,
    tol: float = 1e-6,
    max_iters: int = 50,
    x0: np.ndarray | None = None,
) -> tuple[np.ndarray, dict]:
    """Joint thin-slice reconstruction over all shots and RF encodings
    with pre-estimated shot phases baked into the operator."""
    return cg_normal(op, data, tol=tol, max_iters=max_iters, x0=x0)
