"""From-scratch autodiff, encoders, attention fusion and occupancy heads."""
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import Encoder, FusionEncoder, Head, MultiHead, attention
from .model import (ARCHITECTURES, AblationConfig, EncoderConfig, FusionConfig, HeadConfig, InvalidConfigError,
                    Model, ModelConfig, PointInputs, build_model, legal_ablations, loss)
from .tensor import Tensor, no_grad
from .train import Adam, StepRecord, ViewSample, forward_batch, train_step

__all__ = [
    "load_checkpoint", "save_checkpoint", "Encoder", "FusionEncoder", "Head", "MultiHead", "attention",
    "ARCHITECTURES", "AblationConfig", "EncoderConfig", "FusionConfig", "HeadConfig", "InvalidConfigError",
    "Model", "ModelConfig", "PointInputs", "build_model", "legal_ablations", "loss",
    "Tensor", "no_grad", "Adam", "StepRecord", "ViewSample", "forward_batch", "train_step",
]
