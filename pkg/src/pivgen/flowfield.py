"""Ground-truth displacement fields: representation, file I/O, sampling.

Grid convention: sample (row j, column i) sits at position (x=i, y=j), y
grows downward, displacements are in pixels per frame interval. Fields are
stored as float32 and are immutable after construction.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from typing import Callable, Sequence

import h5py
import numpy as np

FLO_MAGIC = 202021.25  # float32 little-endian spells "PIEH"
_FLO_HEADER = struct.Struct("<fii")


class FlowFieldError(ValueError):
    """Malformed flow-field source (bad bytes, bad grid, non-finite data)."""


@dataclass(frozen=True, eq=False)
class FlowField:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        for name in ("u", "v"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float32)
            if arr.ndim != 2:
                raise FlowFieldError(f"{name} must be a 2-D grid, got rank {arr.ndim}")
            if not np.isfinite(arr).all():
                raise FlowFieldError(f"{name} contains non-finite values")
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.u.shape != self.v.shape:
            raise FlowFieldError(
                f"u and v shapes differ: {self.u.shape} vs {self.v.shape}")
        if self.u.size == 0:
            raise FlowFieldError("field must contain at least one sample")

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    def scaled(self, factor: float) -> "FlowField":
        if factor == 1.0:
            return self
        return FlowField(self.u * np.float32(factor), self.v * np.float32(factor))

    def equals(self, other: "FlowField") -> bool:
        return (self.u.shape == other.u.shape
                and np.array_equal(self.u, other.u)
                and np.array_equal(self.v, other.v))


# ---------------------------------------------------------------------------
# .flo (Middlebury layout: magic, width, height, interleaved u/v float32 LE)
# ---------------------------------------------------------------------------

def load_flo(data: bytes) -> FlowField:
    if len(data) < _FLO_HEADER.size:
        raise FlowFieldError(
            f"flo: truncated header ({len(data)} bytes, need {_FLO_HEADER.size})")
    magic, width, height = _FLO_HEADER.unpack_from(data)
    if magic != FLO_MAGIC:
        raise FlowFieldError(f"flo: bad magic {magic!r} (expected {FLO_MAGIC})")
    if width <= 0 or height <= 0:
        raise FlowFieldError(f"flo: non-positive dimensions {width}x{height}")
    expected = _FLO_HEADER.size + 8 * width * height
    if len(data) != expected:
        raise FlowFieldError(
            f"flo: payload is {len(data)} bytes, expected {expected} "
            f"for {width}x{height}")
    plane = np.frombuffer(data, dtype="<f4", offset=_FLO_HEADER.size)
    plane = plane.reshape(height, width, 2)
    return FlowField(plane[:, :, 0], plane[:, :, 1])


def write_flo(field: FlowField) -> bytes:
    header = _FLO_HEADER.pack(FLO_MAGIC, field.width, field.height)
    plane = np.empty((field.height, field.width, 2), dtype="<f4")
    plane[:, :, 0] = field.u
    plane[:, :, 1] = field.v
    return header + plane.tobytes()


def load_flo_file(path: str) -> FlowField:
    with open(path, "rb") as fh:
        return load_flo(fh.read())


def write_flo_file(path: str, field: FlowField) -> None:
    with open(path, "wb") as fh:
        fh.write(write_flo(field))


# ---------------------------------------------------------------------------
# .npy with rows (x, y, u, v) on a complete regular grid
# ---------------------------------------------------------------------------

def _grid_axis(values: np.ndarray, name: str) -> np.ndarray:
    axis = np.unique(values)
    if axis.size > 1:
        steps = np.diff(axis)
        mean = steps.mean()
        if np.abs(steps - mean).max() > 1e-6 * max(abs(mean), 1e-30):
            raise FlowFieldError(
                f"npy: non-uniform {name} spacing beyond 1e-6 relative tolerance")
    return axis


def load_npy_xyuv(data: bytes) -> FlowField:
    try:
        arr = np.load(io.BytesIO(data), allow_pickle=False)
    except Exception as exc:
        raise FlowFieldError(f"npy: malformed container: {exc}") from exc
    if arr.ndim != 2 or arr.shape[1] != 4:
        raise FlowFieldError(
            f"npy: expected an Nx4 array of (x, y, u, v) rows, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.floating):
        raise FlowFieldError(f"npy: expected float32/float64 data, got {arr.dtype}")
    arr = arr.astype(np.float64, copy=False)
    if not np.isfinite(arr).all():
        raise FlowFieldError("npy: non-finite values")

    xs = _grid_axis(arr[:, 0], "x")
    ys = _grid_axis(arr[:, 1], "y")
    height, width = ys.size, xs.size
    if arr.shape[0] != height * width:
        raise FlowFieldError(
            f"npy: {arr.shape[0]} rows do not form a complete {height}x{width} grid")

    ix = np.searchsorted(xs, arr[:, 0])
    iy = np.searchsorted(ys, arr[:, 1])
    if np.unique(iy * width + ix).size != arr.shape[0]:
        raise FlowFieldError("npy: duplicate grid cells")
    u = np.empty((height, width), dtype=np.float32)
    v = np.empty((height, width), dtype=np.float32)
    u[iy, ix] = arr[:, 2]
    v[iy, ix] = arr[:, 3]
    return FlowField(u, v)


# ---------------------------------------------------------------------------
# HDF5 (dataset names configurable; turbulence-database layouts vary)
# ---------------------------------------------------------------------------

def load_hdf5(path: str, u_dataset: str = "u", v_dataset: str = "v") -> FlowField:
    with h5py.File(path, "r") as fh:
        grids = []
        for name in (u_dataset, v_dataset):
            if name not in fh:
                raise FlowFieldError(f"hdf5: missing dataset {name!r}")
            ds = fh[name]
            if ds.ndim != 2:
                raise FlowFieldError(
                    f"hdf5: dataset {name!r} has rank {ds.ndim}, expected 2")
            grids.append(np.asarray(ds, dtype=np.float32))
    if grids[0].shape != grids[1].shape:
        raise FlowFieldError(
            f"hdf5: shape mismatch {grids[0].shape} vs {grids[1].shape}")
    return FlowField(grids[0], grids[1])


# ---------------------------------------------------------------------------
# Callable-defined fields
# ---------------------------------------------------------------------------

def from_function(fn: Callable, height: int, width: int) -> FlowField:
    """Sample fn(x, y) -> (u, v) at every grid node.

    fn may be vectorized (accepting 2-D x/y arrays); scalar callables are
    evaluated node by node.
    """
    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    try:
        u, v = fn(xs, ys)
        u = np.broadcast_to(np.asarray(u, dtype=np.float64), (height, width))
        v = np.broadcast_to(np.asarray(v, dtype=np.float64), (height, width))
    except FlowFieldError:
        raise
    except Exception:
        u = np.empty((height, width))
        v = np.empty((height, width))
        for j in range(height):
            for i in range(width):
                u[j, i], v[j, i] = fn(float(i), float(j))
    if not (np.isfinite(u).all() and np.isfinite(v).all()):
        raise FlowFieldError("function produced non-finite displacement")
    return FlowField(u, v)


# ---------------------------------------------------------------------------
# Sub-pixel evaluation
# ---------------------------------------------------------------------------

def sample_flow(field: FlowField, positions: Sequence) -> np.ndarray:
    """Bilinear (u, v) at sub-pixel positions, edge-clamped outside the grid.

    Returns an (N, 2) float64 array; exact at integer grid nodes.
    """
    pos = np.atleast_2d(np.asarray(positions, dtype=np.float64))
    if pos.shape[-1] != 2:
        raise ValueError(f"positions must be (N, 2), got {pos.shape}")
    height, width = field.height, field.width

    x = np.clip(pos[:, 0], 0.0, width - 1.0)
    y = np.clip(pos[:, 1], 0.0, height - 1.0)
    x0 = np.clip(np.floor(x), 0, max(width - 2, 0)).astype(np.intp)
    y0 = np.clip(np.floor(y), 0, max(height - 2, 0)).astype(np.intp)
    x1 = np.minimum(x0 + 1, width - 1)
    y1 = np.minimum(y0 + 1, height - 1)
    fx = x - x0
    fy = y - y0

    out = np.empty((pos.shape[0], 2), dtype=np.float64)
    for col, grid in enumerate((field.u, field.v)):
        g = grid.astype(np.float64, copy=False)
        top = (1.0 - fx) * g[y0, x0] + fx * g[y0, x1]
        bottom = (1.0 - fx) * g[y1, x0] + fx * g[y1, x1]
        out[:, col] = (1.0 - fy) * top + fy * bottom
    return out
