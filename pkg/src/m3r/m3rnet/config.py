from __future__ import annotations

from dataclasses import dataclass, fields

from ..errors import ConfigError

VARIANTS = ("full", "no_decoder", "ts_only")


@dataclass(frozen=True)
class ModelConfig:
    T_in: int = 4
    H: int = 100
    W: int = 100
    C: int = 1
    D: int = 20
    P: int = 10
    d_model: int = 128
    n_heads_enc: int = 4
    d_head_enc: int = 64
    n_heads_dec: int = 6
    d_head_dec: int = 128
    mlp_dim: int = 512
    L_enc: int = 2
    L_mm: int = 2
    L_ts: int = 2
    L_dec: int = 2
    horizon: int = 4
    variant: str = "full"
    # False: one positional table per patch, shared by every frame
    pe_per_token: bool = False

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type == "int" and (not isinstance(v, int) or v < 1):
                raise ConfigError(f"{f.name} must be a positive integer, got {v!r}")
        if self.H % self.P or self.W % self.P:
            raise ConfigError(f"H={self.H} and W={self.W} must be divisible by P={self.P}")
        if self.horizon != self.T_in:
            raise ConfigError("each input position predicts one future step, so horizon must equal T_in")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")

    @property
    def n_patches(self) -> int:
        return (self.H // self.P) * (self.W // self.P)

    @property
    def patch_dim(self) -> int:
        return self.C * self.P * self.P

    @property
    def uses_radar(self) -> bool:
        return self.variant != "ts_only"

    @property
    def uses_decoder(self) -> bool:
        return self.variant == "full"

    def replace(self, **kw) -> "ModelConfig":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(kw)
        return ModelConfig(**data)


def block_shapes(d_model: int, heads: int, d_head: int, mlp_dim: int, self_attn: bool = True) -> dict:
    inner = heads * d_head
    shapes = {
        "Wq": (d_model, inner),
        "Wk": (d_model, inner),
        "Wv": (d_model, inner),
        "Wo": (inner, d_model),
    }
    if self_attn:
        shapes["ln1_g"] = (d_model,)
        shapes["ln1_b"] = (d_model,)
    shapes.update(
        {
            "ln2_g": (d_model,),
            "ln2_b": (d_model,),
            "W1": (d_model, mlp_dim),
            "b1": (mlp_dim,),
            "W2": (mlp_dim, d_model),
            "b2": (d_model,),
        }
    )
    return shapes


def param_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    """Every learnable array of the wiring selected by ``cfg.variant``, in a fixed order."""
    d = cfg.d_model
    shapes: dict[str, tuple] = {}
    if cfg.uses_radar:
        shapes["W_patch"] = (cfg.patch_dim, d)
        shapes["b_patch"] = (d,)
        n_pe = cfg.T_in * cfg.n_patches if cfg.pe_per_token else cfg.n_patches
        shapes["PE_ctx"] = (n_pe, d)
    shapes["W_ts"] = (cfg.D, d)
    shapes["b_ts"] = (d,)
    shapes["PE_ts"] = (cfg.T_in, d)
    stacks = []
    if cfg.uses_radar:
        stacks.append(("vis", cfg.L_enc, cfg.n_heads_enc, cfg.d_head_enc, True))
    stacks.append(("ts", cfg.L_ts, cfg.n_heads_enc, cfg.d_head_enc, True))
    if cfg.uses_radar:
        stacks.append(("mm", cfg.L_mm, cfg.n_heads_enc, cfg.d_head_enc, False))
    if cfg.uses_decoder:
        stacks.append(("dec", cfg.L_dec, cfg.n_heads_dec, cfg.d_head_dec, True))
    for name, n_layers, heads, d_head, self_attn in stacks:
        for layer in range(n_layers):
            for key, shape in block_shapes(d, heads, d_head, cfg.mlp_dim, self_attn).items():
                shapes[f"{name}.{layer}.{key}"] = shape
    shapes["W_out"] = (d, 1)
    shapes["b_out"] = (1,)
    return shapes
