"""Experiment configuration: one JSON document, strictly validated."""
from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..neural.model import (ARCHITECTURES, AblationConfig, EncoderConfig, FusionConfig, HeadConfig,
                            InvalidConfigError, ModelConfig)
from ..sampler import SamplerConfig
from ..scenegen.dataset import GenConfig

CONFIG_VERSION = 1
SEPARATE_VARIANTS = {"sep": "full", "sep_no": "no_trans"}


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass
class TrainingConfig:
    steps: int = 500
    lr: float = 1e-3
    batch_views: int = 1
    seed: int = 0

    def validate(self):
        if self.steps < 0 or self.batch_views < 1:
            raise ConfigError("training needs steps >= 0 and batch_views >= 1")
        if not self.lr >= 0:
            raise ConfigError("learning rate must be >= 0")


@dataclass
class MetricConfig:
    n_samples: int = 10000
    tau: float | None = None
    iou_resolution: int = 128
    p2s_direction: str = "pred_to_gt"

    def validate(self):
        if self.n_samples < 1 or self.iou_resolution < 2:
            raise ConfigError("metrics need n_samples >= 1 and iou_resolution >= 2")
        if self.tau is not None and not self.tau > 0:
            raise ConfigError("tau must be positive")
        if self.p2s_direction not in ("pred_to_gt", "gt_to_pred"):
            raise ConfigError(f"unknown p2s_direction {self.p2s_direction!r}")


@dataclass
class Variant:
    """A named ablation row.  ``separate`` trains one model per entity."""
    name: str
    ablation: AblationConfig
    separate: bool = False

    @classmethod
    def parse(cls, spec, base):
        """``spec`` is an architecture name, ``sep``/``sep_no``, or an object
        with a ``name`` plus ablation fields overriding ``base``."""
        if isinstance(spec, str):
            spec = {"name": spec}
        if not isinstance(spec, dict) or "name" not in spec:
            raise ConfigError(f"variant must be a name or an object with a name: {spec!r}")
        spec = dict(spec)
        name = spec.pop("name")
        separate = name in SEPARATE_VARIANTS
        flags = asdict(base)
        if name in ARCHITECTURES:
            flags["architecture"] = name
        elif separate:
            flags["architecture"] = SEPARATE_VARIANTS[name]
        elif "architecture" not in spec:
            known = sorted(ARCHITECTURES) + sorted(SEPARATE_VARIANTS)
            raise ConfigError(f"unknown variant {name!r}; use one of {known} or give an architecture")
        unknown = set(spec) - set(flags)
        if unknown:
            raise ConfigError(f"variant {name!r}: unknown keys {sorted(unknown)}")
        flags.update(spec)
        if flags["architecture"] not in ARCHITECTURES:
            raise ConfigError(f"variant {name!r}: unknown architecture {flags['architecture']!r}")
        ab = AblationConfig(**flags)
        return cls(name, ab, separate)


SECTIONS = {
    "generate": GenConfig, "sampler": SamplerConfig, "encoder": EncoderConfig, "fusion": FusionConfig,
    "head": HeadConfig, "ablation": AblationConfig, "training": TrainingConfig, "metrics": MetricConfig,
}
TOP_LEVEL = {"version", "dataset", "output", "generate_seed", "prior_scale", "grid_resolution",
             "inpainter", "variants", *SECTIONS}


@dataclass
class ExperimentConfig:
    dataset: str
    output: str = "runs/default"
    generate_seed: int = 0
    generate: GenConfig = field(default_factory=GenConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    head: HeadConfig = field(default_factory=HeadConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    prior_scale: tuple = (50.0, 1.0, 1.0)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    grid_resolution: int = 64
    metrics: MetricConfig = field(default_factory=MetricConfig)
    inpainter: str = "oracle"
    variants: list = field(default_factory=lambda: ["full"])
    base_dir: Path = field(default=Path("."), repr=False, compare=False)

    # -- paths ------------------------------------------------------------------
    def resolve(self, p):
        p = Path(p)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def dataset_dir(self):
        return self.resolve(self.dataset)

    @property
    def output_dir(self):
        return self.resolve(self.output)

    # -- checks -----------------------------------------------------------------
    def model_config(self, ablation=None):
        return ModelConfig(copy.deepcopy(ablation or self.ablation), copy.deepcopy(self.encoder),
                           copy.deepcopy(self.fusion), copy.deepcopy(self.head), tuple(self.prior_scale))

    def parsed_variants(self):
        out = [Variant.parse(v, self.ablation) for v in self.variants]
        names = [v.name for v in out]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate variant names in {names}")
        return out

    def validate(self, need_dataset=True):
        """Check every section.  ``need_dataset`` also requires the dataset to exist."""
        try:
            self.generate.validate()
            self.sampler.validate()
            self.training.validate()
            self.metrics.validate()
            if self.grid_resolution < 4:
                raise ConfigError("grid_resolution must be >= 4")
            self.model_config().validate()
            for v in self.parsed_variants():
                self.model_config(v.ablation).validate()
        except InvalidConfigError as e:
            raise ConfigError(str(e)) from e
        except ConfigError:
            raise
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if not (self.inpainter == "oracle" or (self.inpainter.startswith("external:")
                                               and self.inpainter[len("external:"):].strip())):
            raise ConfigError(f"inpainter must be 'oracle' or 'external:<command>', got {self.inpainter!r}")
        if need_dataset and not (self.dataset_dir / "dataset.json").is_file():
            raise ConfigError(f"dataset not found: {self.dataset_dir}/dataset.json")
        return self

    # -- (de)serialisation ------------------------------------------------------
    def to_dict(self):
        d = {"version": CONFIG_VERSION}
        for f in fields(self):
            if f.name == "base_dir":
                continue
            v = getattr(self, f.name)
            d[f.name] = asdict(v) if f.name in SECTIONS else v
        d["prior_scale"] = list(self.prior_scale)
        return d

    @classmethod
    def from_dict(cls, d, base_dir="."):
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        if d.get("version") != CONFIG_VERSION:
            raise ConfigError(f"config version must be {CONFIG_VERSION}, got {d.get('version')!r}")
        unknown = set(d) - TOP_LEVEL
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "dataset" not in d:
            raise ConfigError("config needs a 'dataset' path")
        kw = {}
        for key, value in d.items():
            if key == "version":
                continue
            if key in SECTIONS:
                kw[key] = _section(SECTIONS[key], key, value)
            elif key == "prior_scale":
                kw[key] = tuple(float(x) for x in value)
            else:
                kw[key] = value
        try:
            return cls(base_dir=Path(base_dir), **kw)
        except TypeError as e:
            raise ConfigError(str(e)) from e


def _section(kind, key, value):
    if not isinstance(value, dict):
        raise ConfigError(f"section {key!r} must be an object")
    names = {f.name for f in fields(kind)}
    unknown = set(value) - names
    if unknown:
        raise ConfigError(f"section {key!r}: unknown keys {sorted(unknown)}")
    value = {k: tuple(v) if isinstance(v, list) else v for k, v in value.items()}
    try:
        return kind(**value)
    except TypeError as e:
        raise ConfigError(f"section {key!r}: {e}") from e


def load_config(path, need_dataset=True):
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e
    return ExperimentConfig.from_dict(d, path.parent).validate(need_dataset)
