"""Deterministic parallel generator of synthetic PIV image pairs.

Typical use::

    import pivgen

    sampler = pivgen.make("/path/to/config.yaml")
    batch = next(sampler)
    images1 = batch.images1   # (B, H, W) float32
    images2 = batch.images2
    flows = batch.flow_fields # one ground-truth field per pair
    params = batch.params
"""

from .backend import active_backend
from .config import (ConfigError, FlowSource, GeneratorConfig, NoiseConfig,
                     OutputConfig, default_config, load_config, parse_config,
                     render_config, with_updates)
from .flowfield import (FlowField, FlowFieldError, from_function, load_flo,
                        load_flo_file, load_hdf5, load_npy_xyuv, sample_flow,
                        write_flo, write_flo_file)
from .metrics import MetricError, epe, l1_error, relative_discrepancy
from .particles import (Appearance, PairParams, ParticleSet, advect,
                        apply_hiding, perturb_frame2, sample_particles)
from .pipeline import (GenerationError, ImagePairBatch, Sampler,
                       SourcesExhausted, make_sampler, register_flow_function,
                       unregister_flow_function)
from .raster import (eval_particle, finalize, kernel_patch, match_histogram,
                     patch_side, render_oracle, render_pair, splat)
from .rng import RngKey, pair_key

__version__ = "0.1.0"


def make(config_path: str, **kwargs) -> Sampler:
    """Build a batch sampler from a configuration file path."""
    return make_sampler(load_config(config_path), **kwargs)
