import os

import numpy as np
import pytest

from pivgen.config import FlowSource, GeneratorConfig
from pivgen.flowfield import FlowField, write_flo_file


def constant_field(height, width, u, v):
    return FlowField(np.full((height, width), u, np.float32),
                     np.full((height, width), v, np.float32))


def write_constant_flo(path, height, width, u, v):
    write_flo_file(path, constant_field(height, width, u, v))
    return path


@pytest.fixture
def flo_dir(tmp_path):
    """Directory factory for .flo fixtures matched to a given image size."""
    def build(height, width, flows=((2.0, -1.0),)):
        d = tmp_path / f"flows_{height}x{width}"
        d.mkdir(exist_ok=True)
        paths = []
        for i, (u, v) in enumerate(flows):
            paths.append(write_constant_flo(
                str(d / f"src_{i:02d}.flo"), height, width, u, v))
        return paths
    return build


def small_config(source_paths, height=64, width=64, **overrides):
    defaults = dict(
        image_height=height,
        image_width=width,
        batch_size=2,
        flow_fields_per_batch=1,
        seeding_density_range=(0.02, 0.02),
        diameter_range=(0.8, 1.2),
        peak_intensity_range=(0.6, 1.0),
        flow_sources=tuple(FlowSource(path=p) for p in source_paths),
        seed=11,
        threads=1,
    )
    defaults.update(overrides)
    return GeneratorConfig(**defaults)


@pytest.fixture
def make_config(flo_dir):
    def build(height=64, width=64, flows=((2.0, -1.0),), **overrides):
        paths = flo_dir(height, width, flows)
        return small_config(paths, height, width, **overrides)
    return build


def assert_trees_identical(dir_a, dir_b):
    names_a = sorted(os.listdir(dir_a))
    names_b = sorted(os.listdir(dir_b))
    assert names_a == names_b
    for name in names_a:
        with open(os.path.join(dir_a, name), "rb") as fa, \
                open(os.path.join(dir_b, name), "rb") as fb:
            assert fa.read() == fb.read(), f"{name} differs"
