"""Configuration, training/evaluation stages, the inpainter boundary and the CLI."""
from .config import ConfigError, ExperimentConfig, Variant, load_config
from .data import ViewContext, load_context, point_inputs, prepare_scene, split_views, training_sample
from .inpaint import (BadOutputShape, InpaintError, InpaintExitError, InpaintTimeout, TouchedPixelsError,
                      external_inpaint, make_inpainter)
from .runner import data_hash, run_ablation_matrix

__all__ = [
    "ConfigError", "ExperimentConfig", "Variant", "load_config",
    "ViewContext", "load_context", "point_inputs", "prepare_scene", "split_views", "training_sample",
    "BadOutputShape", "InpaintError", "InpaintExitError", "InpaintTimeout", "TouchedPixelsError",
    "external_inpaint", "make_inpainter", "data_hash", "run_ablation_matrix",
]
