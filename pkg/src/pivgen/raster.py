"""Rendering: Gaussian splatting, post-processing, and a brute-force oracle.

A particle with peak intensity I0, spreads (sigma_x, sigma_y) and
correlation rho centered at (x0, y0) contributes

    I0 * exp(-1/(2(1-rho^2)) * ((x-x0)^2/sigma_x^2
                                - 2 rho (x-x0)(y-y0)/(sigma_x sigma_y)
                                + (y-y0)^2/sigma_y^2))

to pixel (x, y). The splatter restricts each particle to a square patch
window centered at the nearest pixel; the window side is the smallest odd
integer >= multiplier * max(diameter) + 1, so the truncated tail mass is
negligible (< e^-18 of the peak at the window edge for the default
sigma = d/4, side ~ 3d).
"""

from __future__ import annotations

import math
from concurrent.futures import Executor

import numpy as np

from .backend import splat_accumulate
from .config import NoiseConfig
from .particles import Appearance, ParticleSet
from .rng import RngKey


def patch_side(max_diameter: float, multiplier: float = 3.0) -> int:
    """Smallest odd window side >= multiplier * max_diameter + 1.

    Odd so the window has a center pixel to anchor at.
    """
    side = math.ceil(round(multiplier * max_diameter + 1.0, 9))
    if side % 2 == 0:
        side += 1
    return max(side, 1)


def eval_particle(i0: float, sigma_x: float, sigma_y: float, rho: float,
                  center: tuple[float, float], at: tuple[float, float]) -> float:
    """Single-particle contribution at a point (float64 reference form)."""
    dx = at[0] - center[0]
    dy = at[1] - center[1]
    q = 1.0 - rho * rho
    expo = (dx * dx / (sigma_x * sigma_x)
            - 2.0 * rho * dx * dy / (sigma_x * sigma_y)
            + dy * dy / (sigma_y * sigma_y)) / (2.0 * q)
    return i0 * math.exp(-expo)


def kernel_patch(i0: float, sigma_x: float, sigma_y: float, rho: float,
                 center: tuple[float, float], side: int) -> tuple[np.ndarray, tuple[int, int]]:
    """The side x side patch of one particle and its anchor pixel.

    The anchor is the pixel nearest to the sub-pixel center; the center
    itself is never snapped.
    """
    ax = math.floor(center[0] + 0.5)
    ay = math.floor(center[1] + 0.5)
    half = side // 2
    values = np.empty((side, side), dtype=np.float64)
    for r in range(side):
        for c in range(side):
            values[r, c] = eval_particle(
                i0, sigma_x, sigma_y, rho, center,
                (ax - half + c, ay - half + r))
    return values, (ax, ay)


def _frame_arrays(pset: ParticleSet, frame: int) -> tuple[np.ndarray, Appearance, np.ndarray]:
    if frame == 1:
        pos, app, visible = pset.pos1, pset.app1, pset.visible1
    elif frame == 2:
        pos, app, visible = pset.pos2, pset.app2, pset.visible2
    else:
        raise ValueError(f"frame must be 1 or 2, got {frame}")
    if pos is None or app is None:
        raise ValueError(f"particle set is incomplete for frame {frame}")
    if visible is None:
        visible = pset.active
    return pos, app, visible


def contribution_mask(pset: ParticleSet, frame: int) -> np.ndarray:
    pos, app, visible = _frame_arrays(pset, frame)
    return (pset.active & visible & (app.i0 > 0)).astype(np.uint8)


def band_ranges(height: int, bands: int) -> list[tuple[int, int]]:
    """Split image rows into contiguous disjoint bands."""
    bands = max(1, min(bands, height))
    edges = np.linspace(0, height, bands + 1, dtype=int)
    return [(int(edges[i]), int(edges[i + 1])) for i in range(bands)
            if edges[i + 1] > edges[i]]


def splat_band(pset: ParticleSet, frame: int, out: np.ndarray,
               side: int, row_start: int, row_stop: int) -> None:
    """Accumulate one frame's contributions into rows [row_start, row_stop)."""
    pos, app, _ = _frame_arrays(pset, frame)
    mask = contribution_mask(pset, frame)
    splat_accumulate(pos, app.i0, app.sigma_x, app.sigma_y, app.rho,
                     mask, side, out, row_start, row_stop)


def splat(pset: ParticleSet, frame: int, height: int, width: int, side: int,
          pool: Executor | None = None, bands: int = 1) -> np.ndarray:
    """Raw accumulation image (float32, >= 0, not yet clamped).

    Patches are clipped to disjoint row bands; each band receives its
    contributions in particle-index order, so the result is bit-identical
    for any band count or thread pool.
    """
    out = np.zeros((height, width), dtype=np.float32)
    ranges = band_ranges(height, bands)
    if pool is None or len(ranges) == 1:
        for span in ranges:
            splat_band(pset, frame, out, side, span[0], span[1])
    else:
        futures = [pool.submit(splat_band, pset, frame, out, side,
                               span[0], span[1]) for span in ranges]
        for fut in futures:
            fut.result()
    return out


def render_oracle(pset: ParticleSet, frame: int, height: int, width: int) -> np.ndarray:
    """Full-image reference renderer: no patch truncation, O(N * H * W).

    Deliberately slow and independent of the kernel backends; used to bound
    the splatter's truncation error.
    """
    pos, app, _ = _frame_arrays(pset, frame)
    mask = contribution_mask(pset, frame).astype(bool)
    xs = np.arange(width, dtype=np.float64)
    ys = np.arange(height, dtype=np.float64)
    out = np.zeros((height, width), dtype=np.float64)
    for p in np.flatnonzero(mask):
        dx = xs - pos[p, 0]
        dy = ys - pos[p, 1]
        sx = float(app.sigma_x[p])
        sy = float(app.sigma_y[p])
        r = float(app.rho[p])
        q = 1.0 - r * r
        expo = ((dx * dx)[None, :] / (sx * sx)
                - 2.0 * r * dy[:, None] * dx[None, :] / (sx * sy)
                + (dy * dy)[:, None] / (sy * sy)) / (2.0 * q)
        out += float(app.i0[p]) * np.exp(-expo)
    return out.astype(np.float32)


def finalize(raw: np.ndarray, noise: NoiseConfig, key: RngKey) -> np.ndarray:
    """Background offset + per-pixel Gaussian noise, clamped to [0, 1]."""
    img = raw.astype(np.float64, copy=True)
    if noise.background_offset != 0.0:
        img += noise.background_offset
    if noise.gaussian_std > 0.0:
        img += key.normal(img.size, noise.gaussian_std).reshape(img.shape)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def match_histogram(img: np.ndarray, target) -> np.ndarray:
    """Classical histogram specification on 256 intensity levels.

    Uses the midpoint-CDF convention (source quantile of level L is the CDF
    halfway through bin L), which maps a constant image to the target median
    and is the identity when the target equals the image's own histogram (up
    to the 1/255 quantization step). The mapping is monotone in intensity.
    """
    hist = np.asarray(target, dtype=np.float64)
    if hist.shape != (256,):
        raise ValueError(f"target histogram must have 256 bins, got {hist.shape}")
    if (hist < 0).any() or not np.isfinite(hist).all() or hist.sum() <= 0:
        raise ValueError("target histogram must be non-negative with positive sum")

    levels = np.clip(np.rint(img * 255.0), 0, 255).astype(np.int64)
    counts = np.bincount(levels.reshape(-1), minlength=256).astype(np.float64)
    total = counts.sum()
    cum = np.cumsum(counts)
    source_quantile = (cum - 0.5 * counts) / total
    target_cdf = np.cumsum(hist) / hist.sum()

    mapping = np.searchsorted(target_cdf, source_quantile, side="left")
    mapping = np.clip(mapping, 0, 255)
    return (mapping[levels] / 255.0).astype(np.float32)


def render_pair(pset: ParticleSet, height: int, width: int, side: int,
                noise: NoiseConfig, target_histogram, key: RngKey,
                pool: Executor | None = None,
                bands: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Full per-pair pipeline: splat, noise, optional histogram adjustment."""
    from .rng import STREAM_NOISE

    images = []
    for frame in (1, 2):
        raw = splat(pset, frame, height, width, side, pool=pool, bands=bands)
        img = finalize(raw, noise, key.with_stream(STREAM_NOISE, lane=frame))
        if target_histogram is not None:
            img = match_histogram(img, target_histogram)
        images.append(img)
    return images[0], images[1]
