"""Tiny-network fixtures, a straight-line forward oracle and a finite-difference gradient check."""

import numpy as np

from oracles import attention_dense, layernorm_dense, mlp_dense
from m3r.m3rnet import Batch, ModelConfig, backward, forward, forward_train, init_params, loss_mse

TINY = ModelConfig(
    T_in=2, H=4, W=4, C=1, D=5, P=2, d_model=8,
    n_heads_enc=2, d_head_enc=4, n_heads_dec=3, d_head_dec=4, mlp_dim=16,
    L_enc=1, L_mm=1, L_ts=1, L_dec=1, horizon=2,
)  # fmt: skip


def tiny_batch(cfg=TINY, b=3, seed=0):
    rng = np.random.default_rng(seed)
    return Batch(
        rng.random((b, cfg.T_in, cfg.H, cfg.W, cfg.C)),
        rng.normal(size=(b, cfg.T_in, cfg.D)),
        rng.normal(size=(b, cfg.horizon)),
    )


def perturbed_params(cfg=TINY, seed=0, scale=0.3):
    """float64 params with every array (LN gains, biases, PE included) moved off its init value."""
    params = init_params(cfg, seed, np.float64)
    rng = np.random.default_rng(seed + 1)
    for a in params.arrays.values():
        a += rng.normal(0, scale, a.shape)
    return params


def fd_gradient_errors(params, batch, eps=1e-4):
    """Per-array max |analytic - central difference| / max magnitude of either."""
    _, cache = forward_train(batch, params)
    analytic = {k: v.copy() for k, v in backward(cache, params).items()}
    errors = {}
    for name, arr in params.arrays.items():
        numeric = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + eps
            up = loss_mse(forward(batch, params), batch.target)
            arr[idx] = old - eps
            down = loss_mse(forward(batch, params), batch.target)
            arr[idx] = old
            numeric[idx] = (up - down) / (2 * eps)
        scale = max(np.abs(analytic[name]).max(), np.abs(numeric).max(), 1e-12)
        errors[name] = float(np.abs(analytic[name] - numeric).max() / scale)
    return errors


def _layer(arrays, prefix):
    n = len(prefix) + 1
    return {k[n:]: v for k, v in arrays.items() if k.startswith(prefix + ".")}


def encoder_block_dense(x, p, heads):
    a = layernorm_dense(x, p["ln1_g"], p["ln1_b"])
    h1 = x + attention_dense(a, a, p["Wq"], p["Wk"], p["Wv"], p["Wo"], heads)
    c = layernorm_dense(h1, p["ln2_g"], p["ln2_b"])
    return h1 + mlp_dense(c, p["W1"], p["b1"], p["W2"], p["b2"])


def multimodal_block_dense(src, tgt, p, heads):
    h1 = tgt + attention_dense(tgt, src, p["Wq"], p["Wk"], p["Wv"], p["Wo"], heads)
    c = layernorm_dense(h1, p["ln2_g"], p["ln2_b"])
    return h1 + mlp_dense(c, p["W1"], p["b1"], p["W2"], p["b2"])


def forward_oracle(radar, met, params):
    """One sample, written out step by step with explicit patch loops."""
    cfg = params.config
    a = params.arrays
    P = cfg.P
    n_row, n_col = cfg.H // P, cfg.W // P
    h = np.array([met[t] @ a["W_ts"] + a["b_ts"] + a["PE_ts"][t] for t in range(cfg.T_in)])
    if cfg.uses_radar:
        ctx = []
        for t in range(cfg.T_in):
            for pr in range(n_row):
                for pc in range(n_col):
                    vec = []
                    for y in range(P):
                        for x in range(P):
                            for ch in range(cfg.C):
                                vec.append(radar[t, pr * P + y, pc * P + x, ch])
                    k = pr * n_col + pc
                    pe = a["PE_ctx"][t * cfg.n_patches + k] if cfg.pe_per_token else a["PE_ctx"][k]
                    ctx.append(np.array(vec) @ a["W_patch"] + a["b_patch"] + pe)
        hc = np.array(ctx)
        for l in range(cfg.L_enc):
            hc = encoder_block_dense(hc, _layer(a, f"vis.{l}"), cfg.n_heads_enc)
    for l in range(cfg.L_ts):
        h = encoder_block_dense(h, _layer(a, f"ts.{l}"), cfg.n_heads_enc)
    if cfg.uses_radar:
        for l in range(cfg.L_mm):
            h = multimodal_block_dense(hc, h, _layer(a, f"mm.{l}"), cfg.n_heads_enc)
    if cfg.uses_decoder:
        for l in range(cfg.L_dec):
            h = encoder_block_dense(h, _layer(a, f"dec.{l}"), cfg.n_heads_dec)
    return np.array([h[t] @ a["W_out"][:, 0] + a["b_out"][0] for t in range(cfg.T_in)])
