"""Forward/backward pairs for the transformer building blocks.

Every ``*_fwd`` returns ``(out, cache)``; the matching ``*_bwd`` takes the
upstream gradient and the cache and returns input gradients plus a dict of
parameter gradients keyed like the parameter dict it was given. Activations are
``[B, N, d]``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

LN_EPS = 1e-5
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _flat(x):
    return x.reshape(-1, x.shape[-1])


def linear_fwd(x, W, b=None):
    y = x @ W
    if b is not None:
        y = y + b
    return y


def linear_bwd(dy, x, W, with_bias=True):
    dW = _flat(x).T @ _flat(dy)
    dx = dy @ W.T
    db = _flat(dy).sum(axis=0) if with_bias else None
    return dx, dW, db


def layernorm_fwd(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd, g)


def layernorm_bwd(dy, cache):
    xhat, rstd, g = cache
    dg = _flat(dy * xhat).sum(axis=0)
    db = _flat(dy).sum(axis=0)
    dxhat = dy * g
    dx = rstd * (
        dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def gelu(x):
    return 0.5 * x * (1.0 + erf(x * _INV_SQRT2))


def gelu_grad(x):
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
    return cdf + x * pdf


def softmax(s):
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def _split_heads(x, heads):
    B, N, _ = x.shape
    return x.reshape(B, N, heads, -1).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, h, N, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, N, h * dh)


def attention_fwd(xq, xkv, p, heads):
    """Multi-head attention: queries from ``xq``, keys/values from ``xkv``.

    ``p`` holds Wq, Wk, Wv [d, h*dh] and Wo [h*dh, d]; no projection biases.
    """
    dh = p["Wq"].shape[1] // heads
    scale = 1.0 / math.sqrt(dh)
    Q = _split_heads(xq @ p["Wq"], heads)
    K = _split_heads(xkv @ p["Wk"], heads)
    V = _split_heads(xkv @ p["Wv"], heads)
    A = softmax((Q @ K.transpose(0, 1, 3, 2)) * scale)
    Oc = _merge_heads(A @ V)
    out = Oc @ p["Wo"]
    return out, (xq, xkv, Q, K, V, A, Oc, scale, heads)


def attention_bwd(dout, cache, p):
    xq, xkv, Q, K, V, A, Oc, scale, heads = cache
    g = {"Wo": _flat(Oc).T @ _flat(dout)}
    dO = _split_heads(dout @ p["Wo"].T, heads)
    dA = dO @ V.transpose(0, 1, 3, 2)
    dV = A.transpose(0, 1, 3, 2) @ dO
    dS = A * (dA - (dA * A).sum(axis=-1, keepdims=True)) * scale
    dQ = _merge_heads(dS @ K)
    dK = _merge_heads(dS.transpose(0, 1, 3, 2) @ Q)
    dV = _merge_heads(dV)
    g["Wq"] = _flat(xq).T @ _flat(dQ)
    g["Wk"] = _flat(xkv).T @ _flat(dK)
    g["Wv"] = _flat(xkv).T @ _flat(dV)
    dxq = dQ @ p["Wq"].T
    dxkv = dK @ p["Wk"].T + dV @ p["Wv"].T
    return dxq, dxkv, g


def mlp_fwd(x, p):
    pre = linear_fwd(x, p["W1"], p["b1"])
    act = gelu(pre)
    return linear_fwd(act, p["W2"], p["b2"]), (x, pre, act)


def mlp_bwd(dy, cache, p):
    x, pre, act = cache
    dact, dW2, db2 = linear_bwd(dy, act, p["W2"])
    dpre = dact * gelu_grad(pre)
    dx, dW1, db1 = linear_bwd(dpre, x, p["W1"])
    return dx, {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}


def encoder_block_fwd(x, p, heads):
    """Pre-norm block: x + MHSA(LN(x)), then + MLP(LN(.))."""
    a, ln1 = layernorm_fwd(x, p["ln1_g"], p["ln1_b"])
    m, att = attention_fwd(a, a, p, heads)
    h1 = x + m
    c, ln2 = layernorm_fwd(h1, p["ln2_g"], p["ln2_b"])
    f, mlp = mlp_fwd(c, p)
    return h1 + f, (ln1, att, ln2, mlp)


def encoder_block_bwd(dout, cache, p):
    ln1, att, ln2, mlp = cache
    dc, g = mlp_bwd(dout, mlp, p)
    dh1_ln, g["ln2_g"], g["ln2_b"] = layernorm_bwd(dc, ln2)
    dh1 = dout + dh1_ln
    dq, dkv, ga = attention_bwd(dh1, att, p)
    g.update(ga)
    dx_ln, g["ln1_g"], g["ln1_b"] = layernorm_bwd(dq + dkv, ln1)
    return dh1 + dx_ln, g


def multimodal_block_fwd(src, tgt, p, heads):
    """Cross-attention block: tgt + Attn(q=tgt, kv=src), then + MLP(LN(.)).

    The attention sub-layer has no pre-norm, matching the fusion equations.
    """
    m, att = attention_fwd(tgt, src, p, heads)
    h1 = tgt + m
    c, ln2 = layernorm_fwd(h1, p["ln2_g"], p["ln2_b"])
    f, mlp = mlp_fwd(c, p)
    return h1 + f, (att, ln2, mlp)


def multimodal_block_bwd(dout, cache, p):
    """Returns (d_src, d_tgt, param grads)."""
    att, ln2, mlp = cache
    dc, g = mlp_bwd(dout, mlp, p)
    dh1_ln, g["ln2_g"], g["ln2_b"] = layernorm_bwd(dc, ln2)
    dh1 = dout + dh1_ln
    dq, dkv, ga = attention_bwd(dh1, att, p)
    g.update(ga)
    return dkv, dh1 + dq, g
