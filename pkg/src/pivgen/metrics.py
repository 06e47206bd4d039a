"""Flow evaluation metrics: end-point error and relative discrepancy.

The EPE of an image set is the mean over images of

    (1 / |I|) * sqrt( sum over pixels of ||estimate - reference||^2 )

with |I| the pixel count of the image. Note the square root spans the whole
per-image sum; this per-image-normalized form is NOT the per-pixel-mean EPE
common elsewhere, and it is not a metric (no triangle inequality).

The relative discrepancy of two estimate sets u1, u2 against a reference is
|EPE(u1) - EPE(u2)| / L1(u1), where L1 is the mean absolute error over
pixels and both flow components, averaged over images. The L1 normalizer
scales the magnitude of the discrepancy, so its definition matters when
comparing reported values.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .flowfield import FlowField


class MetricError(ValueError):
    """Ill-posed metric evaluation (empty sets, shape mismatch, zero norm)."""


def _check_pair(estimate: FlowField, reference: FlowField) -> None:
    if (estimate.height, estimate.width) != (reference.height, reference.width):
        raise MetricError(
            f"shape mismatch: {estimate.height}x{estimate.width} vs "
            f"{reference.height}x{reference.width}")


def _check_lists(a: Sequence[FlowField], b: Sequence[FlowField]) -> None:
    if len(a) == 0:
        raise MetricError("empty flow list")
    if len(a) != len(b):
        raise MetricError(f"list lengths differ: {len(a)} vs {len(b)}")
    for est, ref in zip(a, b):
        _check_pair(est, ref)


def image_epe(estimate: FlowField, reference: FlowField) -> float:
    """Per-image term: sqrt of the summed squared error over the pixel count."""
    _check_pair(estimate, reference)
    du = estimate.u.astype(np.float64) - reference.u.astype(np.float64)
    dv = estimate.v.astype(np.float64) - reference.v.astype(np.float64)
    total = np.sum(du * du + dv * dv)
    return float(np.sqrt(total) / (estimate.height * estimate.width))


def epe(estimates: Sequence[FlowField], references: Sequence[FlowField]) -> float:
    """Mean of the per-image EPE terms over an image set."""
    _check_lists(estimates, references)
    return float(np.mean([image_epe(e, r) for e, r in zip(estimates, references)]))


def l1_error(estimate: FlowField, reference: FlowField) -> float:
    """Mean absolute error over pixels and both components."""
    _check_pair(estimate, reference)
    du = np.abs(estimate.u.astype(np.float64) - reference.u.astype(np.float64))
    dv = np.abs(estimate.v.astype(np.float64) - reference.v.astype(np.float64))
    return float((du.sum() + dv.sum()) / (2 * estimate.height * estimate.width))


def relative_discrepancy(u1: Sequence[FlowField], u2: Sequence[FlowField],
                         reference: Sequence[FlowField]) -> float:
    """|EPE(u1, ref) - EPE(u2, ref)| normalized by the mean L1 of u1 vs ref."""
    _check_lists(u1, reference)
    _check_lists(u2, reference)
    denom = float(np.mean([l1_error(e, r) for e, r in zip(u1, reference)]))
    if denom == 0.0:
        raise MetricError("relative discrepancy undefined: u1 matches the "
                          "reference exactly (zero L1 normalizer)")
    return abs(epe(u1, reference) - epe(u2, reference)) / denom
