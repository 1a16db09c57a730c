"""Forward/backward pairs for the building blocks.

Every ``*_forward`` returns ``(output, cache)``; the matching ``*_backward``
takes the upstream gradient and the cache and returns input and parameter
gradients. Arrays are float64 and batched over leading axes.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

LN_EPS = 1e-5
_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def gelu(x):
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x):
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


# -- LSTM -------------------------------------------------------------------


def lstm_layer_forward(x, w_ih, w_hh, b):
    """Run one gated recurrent layer over ``x`` of shape ``(T, n_in)`` from zero state.

    Gate column blocks are ordered input, forget, candidate, output.
    """
    steps = len(x)
    hid = w_hh.shape[0]
    xw = x @ w_ih + b
    hs = np.zeros((steps, hid))
    cs = np.zeros((steps, hid))
    gates = np.zeros((steps, 4 * hid))
    h = np.zeros(hid)
    c = np.zeros(hid)
    for t in range(steps):
        z = xw[t] + h @ w_hh
        g = gates[t]
        g[: 2 * hid] = sigmoid(z[: 2 * hid])
        g[2 * hid : 3 * hid] = np.tanh(z[2 * hid : 3 * hid])
        g[3 * hid :] = sigmoid(z[3 * hid :])
        c = g[hid : 2 * hid] * c + g[:hid] * g[2 * hid : 3 * hid]
        h = g[3 * hid :] * np.tanh(c)
        cs[t] = c
        hs[t] = h
    return hs, (x, w_ih, w_hh, hs, cs, gates)


def lstm_layer_backward(dhs, cache):
    x, w_ih, w_hh, hs, cs, gates = cache
    steps, hid = hs.shape
    dz = np.zeros((steps, 4 * hid))
    dh_next = np.zeros(hid)
    dc_next = np.zeros(hid)
    for t in range(steps - 1, -1, -1):
        g = gates[t]
        i, f, gg, o = g[:hid], g[hid : 2 * hid], g[2 * hid : 3 * hid], g[3 * hid :]
        tc = np.tanh(cs[t])
        dh = dhs[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        c_prev = cs[t - 1] if t > 0 else 0.0
        row = dz[t]
        row[:hid] = dc * gg * i * (1.0 - i)
        row[hid : 2 * hid] = dc * c_prev * f * (1.0 - f)
        row[2 * hid : 3 * hid] = dc * i * (1.0 - gg * gg)
        row[3 * hid :] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = row @ w_hh.T
    h_prev = np.vstack([np.zeros((1, hid)), hs[:-1]])
    return dz @ w_ih.T, x.T @ dz, h_prev.T @ dz, dz.sum(axis=0)


class LSTMStepper:
    """Incremental multi-layer recurrence: consumes one frame at a time."""

    def __init__(self, layers):
        self.layers = layers  # list of (w_ih, w_hh, b)
        hid = layers[0][1].shape[0]
        self.h = [np.zeros(hid) for _ in layers]
        self.c = [np.zeros(hid) for _ in layers]
        self.consumed = 0

    def step(self, m):
        inp = m
        for k, (w_ih, w_hh, b) in enumerate(self.layers):
            hid = w_hh.shape[0]
            z = inp @ w_ih + b + self.h[k] @ w_hh
            i = sigmoid(z[:hid])
            f = sigmoid(z[hid : 2 * hid])
            g = np.tanh(z[2 * hid : 3 * hid])
            o = sigmoid(z[3 * hid :])
            self.c[k] = f * self.c[k] + i * g
            self.h[k] = o * np.tanh(self.c[k])
            inp = self.h[k]
        self.consumed += 1
        return inp


# -- layer norm -------------------------------------------------------------


def layer_norm_forward(x, gain, bias):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return xhat * gain + bias, (xhat, inv, gain)


def layer_norm_backward(dout, cache):
    xhat, inv, gain = cache
    axes = tuple(range(dout.ndim - 1))
    dgain = (dout * xhat).sum(axis=axes)
    dbias = dout.sum(axis=axes)
    dxhat = dout * gain
    dx = inv * (
        dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dgain, dbias


# -- affine -----------------------------------------------------------------


def affine_backward(dout, x, w):
    """Gradients of ``x @ w + b`` for ``x`` of any leading shape."""
    flat_x = x.reshape(-1, x.shape[-1])
    flat_d = dout.reshape(-1, dout.shape[-1])
    return dout @ w.T, flat_x.T @ flat_d, flat_d.sum(axis=0)


# -- multi-head self-attention ------------------------------------------------


def mhsa_forward(u, p, prefix, heads):
    """Self-attention over the token axis of ``u`` with shape ``(n, L, d)``."""
    n, length, d = u.shape
    dh = d // heads
    q = u @ p[prefix + "wq"] + p[prefix + "bq"]
    k = u @ p[prefix + "wk"] + p[prefix + "bk"]
    v = u @ p[prefix + "wv"] + p[prefix + "bv"]

    def split(t):
        return t.reshape(n, length, heads, dh).transpose(0, 2, 1, 3)

    qh, kh, vh = split(q), split(k), split(v)
    scores = qh @ kh.transpose(0, 1, 3, 2) / np.sqrt(dh)
    scores = scores - scores.max(axis=-1, keepdims=True)
    attn = np.exp(scores)
    attn /= attn.sum(axis=-1, keepdims=True)
    ctx = (attn @ vh).transpose(0, 2, 1, 3).reshape(n, length, d)
    out = ctx @ p[prefix + "wo"] + p[prefix + "bo"]
    return out, (u, qh, kh, vh, attn, ctx)


def mhsa_backward(dout, cache, p, prefix, heads, grads):
    u, qh, kh, vh, attn, ctx = cache
    n, length, d = u.shape
    dh = d // heads
    dctx, dwo, dbo = affine_backward(dout, ctx, p[prefix + "wo"])
    grads[prefix + "wo"] += dwo
    grads[prefix + "bo"] += dbo
    dctx_h = dctx.reshape(n, length, heads, dh).transpose(0, 2, 1, 3)
    dattn = dctx_h @ vh.transpose(0, 1, 3, 2)
    dvh = attn.transpose(0, 1, 3, 2) @ dctx_h
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True)) / np.sqrt(dh)
    dqh = dscores @ kh
    dkh = dscores.transpose(0, 1, 3, 2) @ qh

    def merge(t):
        return t.transpose(0, 2, 1, 3).reshape(n, length, d)

    du = np.zeros_like(u)
    for name, dproj in (("q", merge(dqh)), ("k", merge(dkh)), ("v", merge(dvh))):
        dx, dw, db = affine_backward(dproj, u, p[prefix + "w" + name])
        du += dx
        grads[prefix + "w" + name] += dw
        grads[prefix + "b" + name] += db
    return du


# -- feed-forward -----------------------------------------------------------


def ffn_forward(v, p, prefix):
    pre = v @ p[prefix + "w1"] + p[prefix + "b1"]
    act = gelu(pre)
    return act @ p[prefix + "w2"] + p[prefix + "b2"], (v, pre, act)


def ffn_backward(dout, cache, p, prefix, grads):
    v, pre, act = cache
    dact, dw2, db2 = affine_backward(dout, act, p[prefix + "w2"])
    grads[prefix + "w2"] += dw2
    grads[prefix + "b2"] += db2
    dpre = dact * gelu_grad(pre)
    dv, dw1, db1 = affine_backward(dpre, v, p[prefix + "w1"])
    grads[prefix + "w1"] += dw1
    grads[prefix + "b1"] += db1
    return dv
