from .config import VARIANTS, ModelConfig, param_shapes
from .model import (
    ActivationCache,
    Batch,
    ModelParams,
    ablation_variant,
    backward,
    cross_attention,
    encoder_block,
    forward,
    forward_train,
    init_params,
    loss_mse,
    mhsa,
    multimodal_attn,
    patch_embed,
    ts_embed,
)

__all__ = [
    "VARIANTS",
    "ActivationCache",
    "Batch",
    "ModelConfig",
    "ModelParams",
    "ablation_variant",
    "backward",
    "cross_attention",
    "encoder_block",
    "forward",
    "forward_train",
    "init_params",
    "loss_mse",
    "mhsa",
    "multimodal_attn",
    "param_shapes",
    "patch_embed",
    "ts_embed",
]
