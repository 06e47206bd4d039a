"""Pure-numpy splatting kernel, used when the compiled extension is absent.

Same contract as pivgen._native.splat_accumulate: contributions are added
per pixel in particle-index order, so output does not depend on how rows are
banded across calls or threads.
"""

from __future__ import annotations

import numpy as np

# Bounds the (chunk x side x side) scratch arrays to a few MB.
_CHUNK = 4096


def splat_accumulate(pos, i0, sigma_x, sigma_y, rho, mask, side, out,
                     row_start, row_stop):
    height, width = out.shape
    half = side // 2
    sel = np.flatnonzero(mask)
    if sel.size == 0:
        return

    offs = np.arange(side, dtype=np.int64) - half
    flat = out.reshape(-1)

    for lo in range(0, sel.size, _CHUNK):
        idx = sel[lo:lo + _CHUNK]
        x0 = pos[idx, 0]
        y0 = pos[idx, 1]
        ax = np.floor(x0 + 0.5).astype(np.int64)
        ay = np.floor(y0 + 0.5).astype(np.int64)

        rows = ay[:, None] + offs[None, :]            # (m, side)
        cols = ax[:, None] + offs[None, :]
        dy = rows.astype(np.float64) - y0[:, None]
        dx = cols.astype(np.float64) - x0[:, None]

        sx = sigma_x[idx].astype(np.float64)
        sy = sigma_y[idx].astype(np.float64)
        r = rho[idx].astype(np.float64)
        q = 1.0 - r * r
        a = 1.0 / (2.0 * q * sx * sx)
        b = r / (q * sx * sy)
        c = 1.0 / (2.0 * q * sy * sy)

        # exponent[m, row, col]
        expo = (a[:, None, None] * (dx * dx)[:, None, :]
                - b[:, None, None] * dy[:, :, None] * dx[:, None, :]
                + c[:, None, None] * (dy * dy)[:, :, None])
        vals = (i0[idx].astype(np.float64)[:, None, None]
                * np.exp(-expo)).astype(np.float32)

        ok = ((rows >= row_start) & (rows < row_stop))[:, :, None] \
            & ((cols >= 0) & (cols < width))[:, None, :]
        lin = rows[:, :, None] * width + cols[:, None, :]
        np.add.at(flat, lin[ok], vals[ok])
