"""Particle sampling, frame-2 perturbation, advection, and visibility masking.

The allocated particle count N = ceil(ppp_max * H * W) is constant for a
given config; the realized density only decides how many of the N slots are
active. Masked slots keep zero intensity, which lets every downstream buffer
keep a fixed shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import GeneratorConfig
from .flowfield import FlowField, sample_flow
from .rng import (RngKey, STREAM_APPEARANCE, STREAM_HIDE, STREAM_PERTURB,
                  STREAM_POSITION)

SIGMA_FLOOR = 1e-3
RHO_CLAMP = 1.0 - 1e-3


@dataclass
class Appearance:
    """Per-particle Gaussian parameters for one frame (arrays of length N)."""

    i0: np.ndarray        # peak intensity in [0, 1]; 0 encodes a masked slot
    sigma_x: np.ndarray   # spread along x, pixels, > 0
    sigma_y: np.ndarray
    rho: np.ndarray       # correlation, |rho| < 1

    def copy(self) -> "Appearance":
        return Appearance(self.i0.copy(), self.sigma_x.copy(),
                          self.sigma_y.copy(), self.rho.copy())


@dataclass
class ParticleSet:
    count: int
    pos1: np.ndarray              # (N, 2) float64 frame-1 positions
    app1: Appearance
    active: np.ndarray            # (N,) bool, density mask
    pos2: np.ndarray | None = None
    app2: Appearance | None = None
    visible1: np.ndarray | None = None
    visible2: np.ndarray | None = None


@dataclass
class PairParams:
    """Realized generation parameters of one image pair."""

    seeding_density: float
    diameters: np.ndarray          # (N,) sampled diameters, pixels
    peak_intensities: np.ndarray   # (N,) frame-1 I0 after density masking
    rhos: np.ndarray               # (N,)
    active_count: int


def sample_particles(key: RngKey, cfg: GeneratorConfig) -> tuple[ParticleSet, PairParams]:
    """Draw frame-1 positions and appearances; deterministic in ``key``.

    Positions are uniform on [0, W) x [0, H). The realized density is
    uniform on the configured range, and the first M = round(ppp * H * W)
    slots are active (positions are i.i.d., so leading-slot masking is
    distributionally identical to random-subset masking).
    """
    height, width = cfg.image_height, cfg.image_width
    n = cfg.particle_capacity()

    pos_key = key.with_stream(STREAM_POSITION)
    coords = pos_key.uniform(2 * n)
    pos1 = np.empty((n, 2), dtype=np.float64)
    pos1[:, 0] = coords[:n] * width
    pos1[:, 1] = coords[n:] * height

    app_key = key.with_stream(STREAM_APPEARANCE)
    ppp_min, ppp_max = cfg.seeding_density_range
    ppp = float(app_key.with_lane(0).uniform(1, ppp_min, ppp_max)[0])
    m = int(round(ppp * height * width))
    m = min(max(m, 0), n)
    active = np.arange(n) < m

    i0 = app_key.with_lane(1).uniform(n, *cfg.peak_intensity_range)
    diam = app_key.with_lane(2).uniform(n, *cfg.diameter_range)
    rho = app_key.with_lane(3).uniform(n, *cfg.rho_range)

    i0 = np.where(active, i0, 0.0).astype(np.float32)
    sigma = (diam / cfg.diameter_sigma_ratio).astype(np.float32)
    app1 = Appearance(i0=i0, sigma_x=sigma, sigma_y=sigma.copy(),
                      rho=rho.astype(np.float32))

    params = PairParams(
        seeding_density=ppp,
        diameters=diam.astype(np.float32),
        peak_intensities=i0.copy(),
        rhos=app1.rho.copy(),
        active_count=m,
    )
    return ParticleSet(count=n, pos1=pos1, app1=app1, active=active), params


def perturb_frame2(key: RngKey, app1: Appearance, cfg: GeneratorConfig) -> Appearance:
    """Frame-2 appearances: frame-1 values plus zero-mean Gaussian jitter.

    Spreads are floored at SIGMA_FLOOR, intensity clamped to [0, 1], rho
    clamped inside (-1, 1); masked slots (i0 == 0) stay masked.
    """
    n = app1.i0.shape[0]
    pk = key.with_stream(STREAM_PERTURB)
    out = app1.copy()

    if cfg.frame2_sigma_std > 0.0:
        jit_x = pk.with_lane(1).normal(n, cfg.frame2_sigma_std)
        jit_y = pk.with_lane(2).normal(n, cfg.frame2_sigma_std)
        out.sigma_x = np.maximum(app1.sigma_x + jit_x, SIGMA_FLOOR).astype(np.float32)
        out.sigma_y = np.maximum(app1.sigma_y + jit_y, SIGMA_FLOOR).astype(np.float32)
    if cfg.frame2_intensity_std > 0.0:
        jit = pk.with_lane(3).normal(n, cfg.frame2_intensity_std)
        i0 = np.clip(app1.i0 + jit, 0.0, 1.0)
        out.i0 = np.where(app1.i0 == 0.0, 0.0, i0).astype(np.float32)
    if cfg.frame2_rho_std > 0.0:
        jit = pk.with_lane(4).normal(n, cfg.frame2_rho_std)
        out.rho = np.clip(app1.rho + jit, -RHO_CLAMP, RHO_CLAMP).astype(np.float32)
    return out


def advect(pset: ParticleSet, field: FlowField) -> ParticleSet:
    """Fill pos2 via the forward mapping (x, y) -> (x + u(x,y), y + v(x,y)).

    One forward-Euler step at frame-1 positions; particles may leave the
    image bounds and then simply render no visible energy.
    """
    pset.pos2 = pset.pos1 + sample_flow(field, pset.pos1)
    return pset


def apply_hiding(key: RngKey, pset: ParticleSet, hide_probability: float) -> ParticleSet:
    """Independent per-frame visibility masks; inactive slots stay hidden."""
    n = pset.count
    hk = key.with_stream(STREAM_HIDE)
    vis1 = hk.with_lane(1).uniform(n) >= hide_probability
    vis2 = hk.with_lane(2).uniform(n) >= hide_probability
    pset.visible1 = vis1 & pset.active
    pset.visible2 = vis2 & pset.active
    return pset
