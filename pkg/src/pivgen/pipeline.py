"""Batched generation: flow-source rotation, prefetching, and rendering.

A batch of B pairs uses a window of F flow fields (pair i gets field
i // (B/F)); the window advances every R batches, cycling through the
configured source list. A producer thread decodes upcoming fields into a
bounded queue so disk latency overlaps generation.

Every batch is a pure function of (config, seed, source contents): particle
and noise draws are counter-keyed by (seed, stream, batch, pair), and the
splatter is order-deterministic, so thread count and queue capacity never
change an emitted byte.
"""

from __future__ import annotations

import logging
import math
import os
import queue
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .config import FlowSource, GeneratorConfig
from .flowfield import (FlowField, FlowFieldError, from_function,
                        load_flo_file, load_hdf5, load_npy_xyuv)
from .particles import (PairParams, ParticleSet, advect, apply_hiding,
                        perturb_frame2, sample_particles)
from .raster import (band_ranges, finalize, match_histogram, patch_side,
                     splat_band)
from .rng import STREAM_NOISE, pair_key

logger = logging.getLogger(__name__)

_GET_TIMEOUT = 300.0  # hard cap so a dead producer surfaces as an error


class GenerationError(RuntimeError):
    """Generation cannot proceed (bad sources, broken pipeline state)."""


class SourcesExhausted(GenerationError):
    """Every configured flow source failed to load."""


# ---------------------------------------------------------------------------
# Flow sources
# ---------------------------------------------------------------------------

_FLOW_FUNCTIONS: dict[str, Callable] = {}
_registry_lock = threading.Lock()


def register_flow_function(name: str, fn: Callable | None = None):
    """Register a callable (x, y) -> (u, v) usable as a flow source.

    Usable directly or as a decorator::

        @register_flow_function("shear")
        def shear(x, y):
            return 0.1 * y, 0.0 * x
    """
    def add(f: Callable) -> Callable:
        with _registry_lock:
            _FLOW_FUNCTIONS[name] = f
        return f

    return add if fn is None else add(fn)


def unregister_flow_function(name: str) -> None:
    with _registry_lock:
        _FLOW_FUNCTIONS.pop(name, None)


def load_source(source: FlowSource, cfg: GeneratorConfig) -> FlowField:
    """Decode one flow source into a FlowField matching the image grid."""
    fmt = source.resolved_format()
    if fmt == "function":
        with _registry_lock:
            fn = _FLOW_FUNCTIONS.get(source.function)
        if fn is None:
            raise FlowFieldError(
                f"flow function {source.function!r} is not registered")
        field = from_function(fn, cfg.image_height, cfg.image_width)
    elif fmt == "flo":
        field = load_flo_file(source.path)
    elif fmt == "npy_xyuv":
        with open(source.path, "rb") as fh:
            field = load_npy_xyuv(fh.read())
    elif fmt == "hdf5":
        field = load_hdf5(source.path, source.u_dataset, source.v_dataset)
    else:  # pragma: no cover - formats are validated by config
        raise FlowFieldError(f"unsupported source format {fmt!r}")

    if (field.height, field.width) != (cfg.image_height, cfg.image_width):
        raise FlowFieldError(
            f"field is {field.height}x{field.width} but images are "
            f"{cfg.image_height}x{cfg.image_width}")
    return field.scaled(source.scale)


# ---------------------------------------------------------------------------
# Prefetch queue
# ---------------------------------------------------------------------------

class PrefetchQueue:
    """Bounded FIFO between the loader thread and the consumer."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._q: queue.Queue = queue.Queue(maxsize=capacity)

    def put(self, item, stop: threading.Event) -> bool:
        """Blocking put that aborts when ``stop`` is set."""
        while not stop.is_set():
            try:
                self._q.put(item, timeout=0.1)
                return True
            except queue.Full:
                continue
        return False

    def get(self, timeout: float):
        return self._q.get(timeout=timeout)

    def drain(self) -> None:
        while True:
            try:
                self._q.get_nowait()
            except queue.Empty:
                return


_EXHAUSTED = object()


# ---------------------------------------------------------------------------
# Batches
# ---------------------------------------------------------------------------

@dataclass
class ImagePairBatch:
    images1: np.ndarray            # (B, H, W) float32 in [0, 1]
    images2: np.ndarray
    flow_fields: list[FlowField]   # one reference per pair, F distinct
    params: list[PairParams]
    batch_index: int


class Sampler:
    """Iterator over deterministic image-pair batches.

    Single consumer only: concurrent ``next_batch`` calls raise. Use as a
    context manager or call ``close()`` to stop the prefetch thread.
    """

    def __init__(self, cfg: GeneratorConfig, *, start_batch: int = 0,
                 max_batches: int | None = None,
                 prefetch_capacity: int | None = None):
        if not cfg.flow_sources:
            raise GenerationError("flow_sources is empty; nothing to generate")
        if start_batch < 0:
            raise GenerationError("start_batch must be non-negative")

        self.config = cfg
        self.skipped_sources: list[str] = []
        self._max_batches = max_batches
        self._start_batch = start_batch
        self._batch_index = start_batch

        fields_per_window = cfg.flow_fields_per_batch
        capacity = prefetch_capacity if prefetch_capacity is not None \
            else max(2, fields_per_window)
        self._queue = PrefetchQueue(capacity)
        self._stop = threading.Event()
        self._consumer_lock = threading.Lock()

        self._window: list[FlowField] = []
        self._window_index = start_batch // cfg.batches_per_flow_field - 1

        n_sources = len(cfg.flow_sources)
        first_index = ((start_batch // cfg.batches_per_flow_field)
                       * fields_per_window) % n_sources
        # Fail fast: the stream's first source must load.
        first_field = load_source(cfg.flow_sources[first_index], cfg)

        self.threads = cfg.threads if cfg.threads > 0 else (os.cpu_count() or 1)
        self._pool = (ThreadPoolExecutor(max_workers=self.threads,
                                         thread_name_prefix="pivgen-render")
                      if self.threads > 1 else None)
        self._bands = max(1, math.ceil(self.threads / (2 * cfg.batch_size)))

        self._producer = threading.Thread(
            target=self._produce, args=(first_index, first_field),
            name="pivgen-prefetch", daemon=True)
        self._producer.start()

    # -- producer ----------------------------------------------------------

    def _produce(self, first_index: int, first_field: FlowField | None) -> None:
        cfg = self.config
        sources = cfg.flow_sources
        n_sources = len(sources)
        idx = first_index
        consecutive_failures = 0
        try:
            while not self._stop.is_set():
                if first_field is not None:
                    field, first_field = first_field, None
                else:
                    source = sources[idx % n_sources]
                    try:
                        field = load_source(source, cfg)
                    except Exception as exc:
                        label = source.path or source.function or "?"
                        message = f"skipping flow source {label!r}: {exc}"
                        logger.warning(message)
                        self.skipped_sources.append(message)
                        consecutive_failures += 1
                        idx += 1
                        if consecutive_failures >= n_sources:
                            self._queue.put(_EXHAUSTED, self._stop)
                            return
                        continue
                    consecutive_failures = 0
                idx += 1
                if not self._queue.put(field, self._stop):
                    return
        except BaseException:  # pragma: no cover - defensive
            logger.exception("prefetch thread crashed")
            self._queue.put(_EXHAUSTED, self._stop)
            raise

    def _next_field(self) -> FlowField:
        try:
            item = self._queue.get(timeout=_GET_TIMEOUT)
        except queue.Empty:
            raise GenerationError("prefetch queue stalled") from None
        if item is _EXHAUSTED:
            detail = "; ".join(self.skipped_sources[-len(self.config.flow_sources):])
            raise SourcesExhausted(f"all flow sources failed: {detail}")
        return item

    def _window_for(self, batch_index: int) -> list[FlowField]:
        target = batch_index // self.config.batches_per_flow_field
        while self._window_index < target:
            self._window = [self._next_field()
                            for _ in range(self.config.flow_fields_per_batch)]
            self._window_index += 1
        return self._window

    # -- consumer ----------------------------------------------------------

    def next_batch(self) -> ImagePairBatch:
        if not self._consumer_lock.acquire(blocking=False):
            raise RuntimeError("Sampler is single-consumer: concurrent "
                               "next_batch calls are not allowed")
        try:
            if self._stop.is_set():
                raise GenerationError("sampler is closed")
            if (self._max_batches is not None
                    and self._batch_index - self._start_batch >= self._max_batches):
                raise StopIteration
            batch_index = self._batch_index
            window = self._window_for(batch_index)
            batch = self._render_batch(batch_index, window)
            self._batch_index += 1
            return batch
        finally:
            self._consumer_lock.release()

    def _render_batch(self, batch_index: int, window: list[FlowField]) -> ImagePairBatch:
        cfg = self.config
        batch_size = cfg.batch_size
        height, width = cfg.image_height, cfg.image_width
        pairs_per_field = cfg.pairs_per_field

        preps = []
        for i in range(batch_size):
            field = window[i // pairs_per_field]
            key = pair_key(cfg.seed, batch_index, i)
            pset, params = sample_particles(key, cfg)
            advect(pset, field)
            pset.app2 = perturb_frame2(key, pset.app1, cfg)
            apply_hiding(key, pset, cfg.hide_probability)
            active_diam = params.diameters[:params.active_count]
            d_max = float(active_diam.max()) if params.active_count else cfg.diameter_range[1]
            side = patch_side(d_max, cfg.patch_multiplier)
            preps.append((pset, params, field, side, key))

        images1 = np.zeros((batch_size, height, width), dtype=np.float32)
        images2 = np.zeros((batch_size, height, width), dtype=np.float32)
        spans = band_ranges(height, self._bands)

        jobs = []
        for i, (pset, _, _, side, _) in enumerate(preps):
            for frame, stack in ((1, images1), (2, images2)):
                for span in spans:
                    jobs.append((pset, frame, stack[i], side, span))

        if self._pool is None:
            for job in jobs:
                self._run_job(*job)
        else:
            futures = [self._pool.submit(self._run_job, *job) for job in jobs]
            for fut in futures:
                fut.result()

        for i, (pset, params, field, side, key) in enumerate(preps):
            for frame, stack in ((1, images1), (2, images2)):
                img = finalize(stack[i], cfg.noise,
                               key.with_stream(STREAM_NOISE, lane=frame))
                if cfg.target_histogram is not None:
                    img = match_histogram(img, cfg.target_histogram)
                stack[i] = img

        return ImagePairBatch(
            images1=images1,
            images2=images2,
            flow_fields=[window[i // pairs_per_field] for i in range(batch_size)],
            params=[p[1] for p in preps],
            batch_index=batch_index,
        )

    @staticmethod
    def _run_job(pset: ParticleSet, frame: int, out: np.ndarray, side: int,
                 span: tuple[int, int]) -> None:
        splat_band(pset, frame, out, side, span[0], span[1])

    # -- iterator / lifecycle ----------------------------------------------

    def __iter__(self) -> Iterator[ImagePairBatch]:
        return self

    def __next__(self) -> ImagePairBatch:
        return self.next_batch()

    def close(self) -> None:
        self._stop.set()
        self._queue.drain()
        if self._producer.is_alive():
            self._producer.join(timeout=5.0)
        if self._pool is not None:
            self._pool.shutdown(wait=True)

    def __enter__(self) -> "Sampler":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def __del__(self) -> None:  # pragma: no cover - GC timing dependent
        try:
            self._stop.set()
        except AttributeError:
            pass


def make_sampler(cfg: GeneratorConfig, **kwargs) -> Sampler:
    """Build a ready Sampler; fails fast on an empty or unloadable source list."""
    return Sampler(cfg, **kwargs)
