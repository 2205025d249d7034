"""M3R network: radar patch + station embeddings, encoders, fusion, decoder, head."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import NoCache, ShapeMismatch
from . import layers as L
from .config import ModelConfig, param_shapes

INIT_STD = 0.02


@dataclass
class ModelParams:
    config: ModelConfig
    arrays: dict[str, np.ndarray]
    grads: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        expected = param_shapes(self.config)
        if list(self.arrays) != list(expected):
            missing = set(expected) ^ set(self.arrays)
            raise ShapeMismatch(f"parameter names do not match config: {sorted(missing)[:5]}")
        for name, shape in expected.items():
            if self.arrays[name].shape != shape:
                raise ShapeMismatch(f"{name}: shape {self.arrays[name].shape}, expected {shape}")
        if not self.grads:
            self.zero_grad()

    @property
    def dtype(self):
        return self.arrays["W_out"].dtype

    def zero_grad(self) -> None:
        self.grads = {k: np.zeros_like(v) for k, v in self.arrays.items()}

    def count(self) -> int:
        return sum(v.size for v in self.arrays.values())

    def layer(self, prefix: str) -> dict[str, np.ndarray]:
        n = len(prefix) + 1
        return {k[n:]: v for k, v in self.arrays.items() if k.startswith(prefix + ".")}

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.arrays.items()})

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.config, {k: v.astype(dtype) for k, v in self.arrays.items()})


@dataclass
class Batch:
    radar: np.ndarray  # [B, T_in, H, W, C] in [0, 1]
    met: np.ndarray  # [B, T_in, D] standardized
    target: np.ndarray | None = None  # [B, horizon] mm/hr

    def __len__(self) -> int:
        return self.met.shape[0]

    def subset(self, idx) -> "Batch":
        return Batch(self.radar[idx], self.met[idx], None if self.target is None else self.target[idx])


def _truncated_normal(rng, shape, std):
    x = rng.standard_normal(shape)
    bad = np.abs(x) > 2.0
    while bad.any():
        x[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(x) > 2.0
    return x * std


def init_params(config: ModelConfig, seed: int = 0, dtype=np.float32) -> ModelParams:
    """Truncated-normal (std 0.02) projections, unit LN gains, zero biases and positional tables."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in param_shapes(config).items():
        key = name.rsplit(".", 1)[-1]
        if key.endswith("_g"):
            a = np.ones(shape)
        elif key.startswith("b") or key.endswith("_b") or key.startswith("PE"):
            a = np.zeros(shape)
        else:
            a = _truncated_normal(rng, shape, INIT_STD)
        arrays[name] = a.astype(dtype)
    return ModelParams(config, arrays)


def ablation_variant(kind: str, config: ModelConfig) -> ModelConfig:
    """Config wired as ``full``, ``no_decoder`` (head on the fused tokens) or ``ts_only``."""
    return config.replace(variant=kind)


# --- embeddings -----------------------------------------------------------------------

def patchify(radar: np.ndarray, P: int) -> np.ndarray:
    """[B, T, H, W, C] -> [B, T * n_patches, P*P*C]; patches row-major, pixels row-major, channel minor."""
    B, T, H, W, C = radar.shape
    if H % P or W % P:
        raise ShapeMismatch(f"frame {H}x{W} not divisible by patch size {P}")
    x = radar.reshape(B, T, H // P, P, W // P, P, C).transpose(0, 1, 2, 4, 3, 5, 6)
    return x.reshape(B, T * (H // P) * (W // P), P * P * C)


def _pe_ctx(params: ModelParams) -> np.ndarray:
    cfg = params.config
    pe = params.arrays["PE_ctx"]
    return pe if cfg.pe_per_token else np.tile(pe, (cfg.T_in, 1))


def patch_embed(radar: np.ndarray, params: ModelParams) -> np.ndarray:
    """Radar frames to context tokens; accepts [T, H, W, C] or a leading batch axis."""
    cfg = params.config
    single = radar.ndim == 4
    x = radar[None] if single else radar
    if x.shape[1:] != (cfg.T_in, cfg.H, cfg.W, cfg.C):
        raise ShapeMismatch(f"radar shape {x.shape[1:]} does not match config {(cfg.T_in, cfg.H, cfg.W, cfg.C)}")
    a = params.arrays
    e = patchify(x.astype(params.dtype, copy=False), cfg.P) @ a["W_patch"] + a["b_patch"] + _pe_ctx(params)
    return e[0] if single else e


def ts_embed(met: np.ndarray, params: ModelParams) -> np.ndarray:
    cfg = params.config
    single = met.ndim == 2
    x = met[None] if single else met
    if x.shape[1:] != (cfg.T_in, cfg.D):
        raise ShapeMismatch(f"met shape {x.shape[1:]} does not match config {(cfg.T_in, cfg.D)}")
    a = params.arrays
    e = x.astype(params.dtype, copy=False) @ a["W_ts"] + a["b_ts"] + a["PE_ts"]
    return e[0] if single else e


# --- single-block entry points (unbatched [N, d] or batched [B, N, d]) ---------------

def _batched(fn, *xs):
    single = xs[0].ndim == 2
    out = fn(*(x[None] if single else x for x in xs))
    return out[0] if single else out


def mhsa(h: np.ndarray, layer: dict, heads: int) -> np.ndarray:
    return _batched(lambda x: L.attention_fwd(x, x, layer, heads)[0], h)


def cross_attention(h_src: np.ndarray, h_tgt: np.ndarray, layer: dict, heads: int) -> np.ndarray:
    return _batched(lambda s, t: L.attention_fwd(t, s, layer, heads)[0], h_src, h_tgt)


def encoder_block(h: np.ndarray, layer: dict, heads: int) -> np.ndarray:
    return _batched(lambda x: L.encoder_block_fwd(x, layer, heads)[0], h)


def multimodal_attn(h_src: np.ndarray, h_tgt: np.ndarray, layer: dict, heads: int) -> np.ndarray:
    return _batched(lambda s, t: L.multimodal_block_fwd(s, t, layer, heads)[0], h_src, h_tgt)


# --- full model -----------------------------------------------------------------------

@dataclass
class ActivationCache:
    batch: Batch
    pred: np.ndarray
    steps: list = field(default_factory=list)
    head_input: np.ndarray | None = None
    patches: np.ndarray | None = None


def _check_batch(batch: Batch, cfg: ModelConfig) -> None:
    if batch.met.ndim != 3 or batch.met.shape[1:] != (cfg.T_in, cfg.D):
        raise ShapeMismatch(f"met batch shape {batch.met.shape} does not match config")
    if cfg.uses_radar and batch.radar.shape[1:] != (cfg.T_in, cfg.H, cfg.W, cfg.C):
        raise ShapeMismatch(f"radar batch shape {batch.radar.shape} does not match config")
    if batch.radar.shape[0] != batch.met.shape[0]:
        raise ShapeMismatch("radar and met batch sizes differ")


def _run(batch: Batch, params: ModelParams, record: bool):
    cfg = params.config
    _check_batch(batch, cfg)
    a = params.arrays
    steps = []
    patches = None
    h_ctx = None
    if cfg.uses_radar:
        patches = patchify(batch.radar.astype(params.dtype, copy=False), cfg.P)
        h_ctx = patches @ a["W_patch"] + a["b_patch"] + _pe_ctx(params)
        for l in range(cfg.L_enc):
            h_ctx, c = L.encoder_block_fwd(h_ctx, params.layer(f"vis.{l}"), cfg.n_heads_enc)
            steps.append(("vis", l, c))
    h = batch.met.astype(params.dtype, copy=False) @ a["W_ts"] + a["b_ts"] + a["PE_ts"]
    for l in range(cfg.L_ts):
        h, c = L.encoder_block_fwd(h, params.layer(f"ts.{l}"), cfg.n_heads_enc)
        steps.append(("ts", l, c))
    if cfg.uses_radar:
        for l in range(cfg.L_mm):
            h, c = L.multimodal_block_fwd(h_ctx, h, params.layer(f"mm.{l}"), cfg.n_heads_enc)
            steps.append(("mm", l, c))
    if cfg.uses_decoder:
        for l in range(cfg.L_dec):
            h, c = L.encoder_block_fwd(h, params.layer(f"dec.{l}"), cfg.n_heads_dec)
            steps.append(("dec", l, c))
    pred = (h @ a["W_out"])[..., 0] + a["b_out"][0]
    if not record:
        return pred, None
    return pred, ActivationCache(batch, pred, steps, h, patches)


def forward(batch: Batch, params: ModelParams) -> np.ndarray:
    """Predictions [B, horizon]; position t of the fused sequence predicts step t."""
    return _run(batch, params, record=False)[0]


def forward_train(batch: Batch, params: ModelParams) -> tuple[np.ndarray, ActivationCache]:
    return _run(batch, params, record=True)


def loss_mse(pred: np.ndarray, target: np.ndarray) -> float:
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs target {target.shape}")
    e = pred - target
    return float(np.mean(e * e))


def backward(cache: ActivationCache | None, params: ModelParams) -> dict[str, np.ndarray]:
    """Exact gradient of :func:`loss_mse` for the recorded batch; written into ``params.grads``."""
    if cache is None:
        raise NoCache("backward needs the cache returned by forward_train")
    target = cache.batch.target
    if target is None or target.shape != cache.pred.shape:
        raise ShapeMismatch("recorded batch has no target of prediction shape")
    cfg = params.config
    a = params.arrays
    g = {k: np.zeros_like(v) for k, v in a.items()}

    dpred = (2.0 / cache.pred.size) * (cache.pred - target.astype(params.dtype))
    g["b_out"][0] = dpred.sum()
    g["W_out"][:, 0] = L._flat(cache.head_input).T @ dpred.reshape(-1)
    dh = dpred[..., None] * a["W_out"][:, 0]
    dctx = None

    for name, l, c in reversed(cache.steps):
        prefix = f"{name}.{l}"
        p = params.layer(prefix)
        if name == "mm":
            dsrc, dh, gl = L.multimodal_block_bwd(dh, c, p)
            dctx = dsrc if dctx is None else dctx + dsrc
        elif name == "vis":  # reached after every mm step, so dctx is complete
            dctx, gl = L.encoder_block_bwd(dctx, c, p)
        else:
            dh, gl = L.encoder_block_bwd(dh, c, p)
        for k, v in gl.items():
            g[f"{prefix}.{k}"] += v

    met = cache.batch.met.astype(params.dtype, copy=False)
    g["W_ts"] = L._flat(met).T @ L._flat(dh)
    g["b_ts"] = L._flat(dh).sum(axis=0)
    g["PE_ts"] = dh.sum(axis=0)
    if cfg.uses_radar:
        g["W_patch"] = L._flat(cache.patches).T @ L._flat(dctx)
        g["b_patch"] = L._flat(dctx).sum(axis=0)
        dpe = dctx.sum(axis=0)
        if not cfg.pe_per_token:
            dpe = dpe.reshape(cfg.T_in, cfg.n_patches, cfg.d_model).sum(axis=0)
        g["PE_ctx"] = dpe
    params.grads = g
    return g
