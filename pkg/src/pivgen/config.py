"""Generation recipe: parsing, validation, and serialization.

The configuration is a flat, typed YAML document (one documented key per
field, two small nested sections for noise and output). Every optional key
has a documented default; the defaults reproduce the standard ablation
baseline: 512x512 images, batch of 64, seeding density 0.06, diameters in
[0.8, 1.2], one flow field per batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable

import yaml

# rho_range is kept strictly inside (-1, 1) with this margin so the frame-2
# clamp (which guards the 1 - rho^2 denominator) never alters valid values.
RHO_LIMIT = 1.0 - 1e-3

OUTPUT_FORMATS = ("png16", "raw_f32")
SOURCE_FORMATS = ("flo", "npy_xyuv", "hdf5", "function")

_EXT_FORMATS = {
    ".flo": "flo",
    ".npy": "npy_xyuv",
    ".h5": "hdf5",
    ".hdf5": "hdf5",
}


class ConfigError(ValueError):
    """Invalid configuration document or field value."""


@dataclass(frozen=True)
class FlowSource:
    """One entry of ``flow_sources``: a file path or a registered function.

    ``scale`` multiplies the loaded displacements (escape hatch for sources
    whose units are not pixels per frame interval).
    """

    path: str | None = None
    format: str | None = None
    function: str | None = None
    u_dataset: str = "u"
    v_dataset: str = "v"
    scale: float = 1.0

    def resolved_format(self) -> str:
        if self.format is not None:
            return self.format
        if self.function is not None:
            return "function"
        assert self.path is not None
        for ext, fmt in _EXT_FORMATS.items():
            if self.path.lower().endswith(ext):
                return fmt
        raise ConfigError(
            f"flow_sources: cannot infer format from path {self.path!r}; "
            "set 'format' explicitly"
        )


@dataclass(frozen=True)
class NoiseConfig:
    background_offset: float = 0.0
    gaussian_std: float = 0.0

    @property
    def enabled(self) -> bool:
        return self.background_offset != 0.0 or self.gaussian_std != 0.0


@dataclass(frozen=True)
class OutputConfig:
    format: str = "png16"
    directory: str = "out"


@dataclass(frozen=True)
class GeneratorConfig:
    """Fully validated generation recipe. Immutable and thread-safe."""

    image_height: int = 512
    image_width: int = 512
    batch_size: int = 64
    flow_fields_per_batch: int = 1
    batches_per_flow_field: int = 1
    seeding_density_range: tuple[float, float] = (0.06, 0.06)
    diameter_range: tuple[float, float] = (0.8, 1.2)
    peak_intensity_range: tuple[float, float] = (1.0, 1.0)
    rho_range: tuple[float, float] = (0.0, 0.0)
    frame2_sigma_std: float = 0.0
    frame2_rho_std: float = 0.0
    frame2_intensity_std: float = 0.0
    hide_probability: float = 0.0
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    target_histogram: tuple[float, ...] | None = None
    flow_sources: tuple[FlowSource, ...] = ()
    seed: int = 0
    threads: int = 0
    output: OutputConfig = field(default_factory=OutputConfig)
    device: str = "cpu"
    diameter_sigma_ratio: float = 4.0
    patch_multiplier: float = 3.0

    def __post_init__(self) -> None:
        self._normalize()
        validate_config(self)

    def _normalize(self) -> None:
        # Accept ints/lists from direct construction; the canonical form is
        # float tuples (render/parse round-trips rely on it).
        def num(x: Any) -> Any:
            return float(x) if isinstance(x, int) and not isinstance(x, bool) else x

        for name in ("seeding_density_range", "diameter_range",
                     "peak_intensity_range", "rho_range"):
            rng = getattr(self, name)
            if isinstance(rng, (list, tuple)) and len(rng) == 2:
                object.__setattr__(self, name, (num(rng[0]), num(rng[1])))
        for name in ("frame2_sigma_std", "frame2_rho_std",
                     "frame2_intensity_std", "hide_probability",
                     "diameter_sigma_ratio", "patch_multiplier"):
            object.__setattr__(self, name, num(getattr(self, name)))
        if self.target_histogram is not None:
            object.__setattr__(self, "target_histogram",
                               tuple(num(x) for x in self.target_histogram))
        if not isinstance(self.flow_sources, tuple):
            object.__setattr__(self, "flow_sources", tuple(self.flow_sources))

    @property
    def pairs_per_field(self) -> int:
        return self.batch_size // self.flow_fields_per_batch

    def particle_capacity(self) -> int:
        """Allocated particle count N = ceil(ppp_max * H * W).

        The 9-digit rounding guard keeps products that are integers in
        decimal (e.g. 0.1 * 100) from ceiling one too high.
        """
        raw = self.seeding_density_range[1] * self.image_height * self.image_width
        return math.ceil(round(raw, 9))


def _check(cond: bool, name: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{name}: {message}")


def validate_config(cfg: GeneratorConfig) -> None:
    """Raise ConfigError naming the offending field; total on any input."""
    for name in ("image_height", "image_width", "batch_size",
                 "flow_fields_per_batch", "batches_per_flow_field"):
        value = getattr(cfg, name)
        _check(isinstance(value, int) and value > 0, name,
               f"must be a positive integer, got {value!r}")

    _check(cfg.batch_size % cfg.flow_fields_per_batch == 0,
           "flow_fields_per_batch",
           f"must divide batch_size ({cfg.flow_fields_per_batch} does not "
           f"divide {cfg.batch_size})")

    def check_range(name: str, lo_bound: float, hi_bound: float,
                    lo_open: bool = False, hi_open: bool = False) -> None:
        rng = getattr(cfg, name)
        _check(isinstance(rng, tuple) and len(rng) == 2, name,
               "must be a [min, max] pair")
        lo, hi = rng
        _check(all(isinstance(x, float) and math.isfinite(x) for x in rng),
               name, "bounds must be finite numbers")
        _check(lo <= hi, name, f"min {lo} exceeds max {hi}")
        _check(lo > lo_bound if lo_open else lo >= lo_bound, name,
               f"min {lo} out of bounds")
        _check(hi < hi_bound if hi_open else hi <= hi_bound, name,
               f"max {hi} out of bounds")

    check_range("seeding_density_range", 0.0, math.inf, lo_open=True, hi_open=True)
    check_range("diameter_range", 0.0, math.inf, lo_open=True, hi_open=True)
    check_range("peak_intensity_range", 0.0, 1.0)
    check_range("rho_range", -RHO_LIMIT, RHO_LIMIT)

    _check(cfg.particle_capacity() >= 1, "seeding_density_range",
           "ppp_max * height * width must allow at least one particle")

    for name in ("frame2_sigma_std", "frame2_rho_std", "frame2_intensity_std"):
        value = getattr(cfg, name)
        _check(isinstance(value, float) and math.isfinite(value) and value >= 0.0,
               name, f"must be a non-negative number, got {value!r}")

    _check(isinstance(cfg.hide_probability, float)
           and 0.0 <= cfg.hide_probability < 1.0,
           "hide_probability", f"must lie in [0, 1), got {cfg.hide_probability!r}")

    _check(isinstance(cfg.noise, NoiseConfig), "noise", "must be a mapping")
    _check(0.0 <= cfg.noise.background_offset < 1.0, "noise.background_offset",
           f"must lie in [0, 1), got {cfg.noise.background_offset!r}")
    _check(cfg.noise.gaussian_std >= 0.0, "noise.gaussian_std",
           f"must be non-negative, got {cfg.noise.gaussian_std!r}")

    if cfg.target_histogram is not None:
        hist = cfg.target_histogram
        _check(len(hist) == 256, "target_histogram",
               f"must have exactly 256 bins, got {len(hist)}")
        _check(all(math.isfinite(x) and x >= 0.0 for x in hist),
               "target_histogram", "bins must be finite and non-negative")
        _check(sum(hist) > 0.0, "target_histogram", "must have a positive sum")

    for i, src in enumerate(cfg.flow_sources):
        name = f"flow_sources[{i}]"
        _check(isinstance(src, FlowSource), name, "must be a mapping")
        _check((src.path is None) != (src.function is None), name,
               "exactly one of 'path' or 'function' is required")
        if src.format is not None:
            _check(src.format in SOURCE_FORMATS, name,
                   f"unknown format {src.format!r}; expected one of {SOURCE_FORMATS}")
            _check((src.format == "function") == (src.function is not None), name,
                   "'function' entries must use format 'function' and vice versa")
        src.resolved_format()
        _check(math.isfinite(src.scale) and src.scale != 0.0, f"{name}.scale",
               f"must be finite and non-zero, got {src.scale!r}")

    _check(isinstance(cfg.seed, int) and 0 <= cfg.seed < 2 ** 64, "seed",
           f"must be a 64-bit unsigned integer, got {cfg.seed!r}")
    _check(isinstance(cfg.threads, int) and cfg.threads >= 0, "threads",
           f"must be 0 (auto) or a positive integer, got {cfg.threads!r}")

    _check(cfg.output.format in OUTPUT_FORMATS, "output.format",
           f"must be one of {OUTPUT_FORMATS}, got {cfg.output.format!r}")
    _check(bool(cfg.output.directory), "output.directory", "must be non-empty")

    _check(cfg.device == "cpu", "device",
           f"only 'cpu' is supported in this version, got {cfg.device!r}")

    for name in ("diameter_sigma_ratio", "patch_multiplier"):
        value = getattr(cfg, name)
        _check(isinstance(value, float) and math.isfinite(value) and value > 0.0,
               name, f"must be a positive number, got {value!r}")


def default_config() -> GeneratorConfig:
    """The documented baseline configuration (see module docstring)."""
    return GeneratorConfig()


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _as_int(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{name}: expected an integer, got {value!r}")
    return value


def _as_float(value: Any, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    return float(value)


def _as_str(value: Any, name: str) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"{name}: expected a string, got {value!r}")
    return value


def _as_pair(value: Any, name: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError(f"{name}: expected a [min, max] pair, got {value!r}")
    return (_as_float(value[0], name), _as_float(value[1], name))


def _as_mapping(value: Any, name: str, allowed: set[str]) -> dict[str, Any]:
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: expected a mapping, got {value!r}")
    unknown = set(value) - allowed
    if unknown:
        raise ConfigError(f"{name}: unknown key(s) {sorted(unknown)}")
    return value


def _parse_source(entry: Any, name: str) -> FlowSource:
    data = _as_mapping(entry, name, {"path", "format", "function",
                                     "u_dataset", "v_dataset", "scale"})
    kwargs: dict[str, Any] = {}
    if "path" in data:
        kwargs["path"] = _as_str(data["path"], f"{name}.path")
    if "format" in data:
        kwargs["format"] = _as_str(data["format"], f"{name}.format")
    if "function" in data:
        kwargs["function"] = _as_str(data["function"], f"{name}.function")
    if "u_dataset" in data:
        kwargs["u_dataset"] = _as_str(data["u_dataset"], f"{name}.u_dataset")
    if "v_dataset" in data:
        kwargs["v_dataset"] = _as_str(data["v_dataset"], f"{name}.v_dataset")
    if "scale" in data:
        kwargs["scale"] = _as_float(data["scale"], f"{name}.scale")
    if "path" not in data and "function" not in data:
        raise ConfigError(f"{name}: requires 'path' or 'function'")
    return FlowSource(**kwargs)


_SCALAR_PARSERS: dict[str, Callable[[Any, str], Any]] = {
    "image_height": _as_int,
    "image_width": _as_int,
    "batch_size": _as_int,
    "flow_fields_per_batch": _as_int,
    "batches_per_flow_field": _as_int,
    "seeding_density_range": _as_pair,
    "diameter_range": _as_pair,
    "peak_intensity_range": _as_pair,
    "rho_range": _as_pair,
    "frame2_sigma_std": _as_float,
    "frame2_rho_std": _as_float,
    "frame2_intensity_std": _as_float,
    "hide_probability": _as_float,
    "seed": _as_int,
    "threads": _as_int,
    "device": _as_str,
    "diameter_sigma_ratio": _as_float,
    "patch_multiplier": _as_float,
}

_ALL_KEYS = set(_SCALAR_PARSERS) | {"noise", "target_histogram",
                                    "flow_sources", "output"}


def parse_config(text: str) -> GeneratorConfig:
    """Parse a configuration document into a validated GeneratorConfig.

    Errors carry the YAML line number for syntax problems and the field name
    for type or invariant violations.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"syntax error{where}: {exc}") from exc

    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("document must be a key/value mapping")

    unknown = set(data) - _ALL_KEYS
    if unknown:
        raise ConfigError(f"unknown key(s): {sorted(unknown)}")

    kwargs: dict[str, Any] = {}
    for key, parser in _SCALAR_PARSERS.items():
        if key in data:
            kwargs[key] = parser(data[key], key)

    if "noise" in data:
        noise = _as_mapping(data["noise"], "noise",
                            {"background_offset", "gaussian_std"})
        kwargs["noise"] = NoiseConfig(
            background_offset=_as_float(noise.get("background_offset", 0.0),
                                        "noise.background_offset"),
            gaussian_std=_as_float(noise.get("gaussian_std", 0.0),
                                   "noise.gaussian_std"),
        )

    if "target_histogram" in data:
        hist = data["target_histogram"]
        if hist in (None, []):
            kwargs["target_histogram"] = None
        elif isinstance(hist, list):
            kwargs["target_histogram"] = tuple(
                _as_float(x, "target_histogram") for x in hist)
        else:
            raise ConfigError(
                f"target_histogram: expected a list of 256 bins, got {hist!r}")

    if "flow_sources" in data:
        sources = data["flow_sources"]
        if not isinstance(sources, list):
            raise ConfigError(
                f"flow_sources: expected a list, got {sources!r}")
        kwargs["flow_sources"] = tuple(
            _parse_source(entry, f"flow_sources[{i}]")
            for i, entry in enumerate(sources))

    if "output" in data:
        out = _as_mapping(data["output"], "output", {"format", "directory"})
        kwargs["output"] = OutputConfig(
            format=_as_str(out.get("format", "png16"), "output.format"),
            directory=_as_str(out.get("directory", "out"), "output.directory"),
        )

    return GeneratorConfig(**kwargs)


def load_config(path: str) -> GeneratorConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def render_config(cfg: GeneratorConfig) -> str:
    """Serialize a config to the documented YAML form.

    Round-trip identity: ``parse_config(render_config(cfg)) == cfg``.
    """
    doc: dict[str, Any] = {
        "image_height": cfg.image_height,
        "image_width": cfg.image_width,
        "batch_size": cfg.batch_size,
        "flow_fields_per_batch": cfg.flow_fields_per_batch,
        "batches_per_flow_field": cfg.batches_per_flow_field,
        "seeding_density_range": list(cfg.seeding_density_range),
        "diameter_range": list(cfg.diameter_range),
        "peak_intensity_range": list(cfg.peak_intensity_range),
        "rho_range": list(cfg.rho_range),
        "frame2_sigma_std": cfg.frame2_sigma_std,
        "frame2_rho_std": cfg.frame2_rho_std,
        "frame2_intensity_std": cfg.frame2_intensity_std,
        "hide_probability": cfg.hide_probability,
        "noise": {
            "background_offset": cfg.noise.background_offset,
            "gaussian_std": cfg.noise.gaussian_std,
        },
        "seed": cfg.seed,
        "threads": cfg.threads,
        "output": {
            "format": cfg.output.format,
            "directory": cfg.output.directory,
        },
        "device": cfg.device,
        "diameter_sigma_ratio": cfg.diameter_sigma_ratio,
        "patch_multiplier": cfg.patch_multiplier,
    }
    if cfg.target_histogram is not None:
        doc["target_histogram"] = list(cfg.target_histogram)
    if cfg.flow_sources:
        entries = []
        for src in cfg.flow_sources:
            entry: dict[str, Any] = {}
            if src.path is not None:
                entry["path"] = src.path
            if src.function is not None:
                entry["function"] = src.function
            if src.format is not None:
                entry["format"] = src.format
            if src.u_dataset != "u":
                entry["u_dataset"] = src.u_dataset
            if src.v_dataset != "v":
                entry["v_dataset"] = src.v_dataset
            if src.scale != 1.0:
                entry["scale"] = src.scale
            entries.append(entry)
        doc["flow_sources"] = entries
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)


def with_updates(cfg: GeneratorConfig, **changes: Any) -> GeneratorConfig:
    """replace() wrapper that re-runs validation (dataclass __post_init__)."""
    return replace(cfg, **changes)
