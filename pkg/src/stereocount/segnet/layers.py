"""Forward/backward primitives on (N, C, H, W) tensors.

3x3 convolutions are computed as nine shifted channel contractions over a
zero-padded input; the backward passes are exact adjoints, which the
finite-difference suite verifies end to end.
"""

from __future__ import annotations

import numpy as np

PROB_EPS = 1e-7


def conv3_forward(x, w, b):
    n, c, h, wd = x.shape
    out_ch = w.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.broadcast_to(b[None, :, None, None], (n, out_ch, h, wd)).copy()
    for ky in range(3):
        for kx in range(3):
            out += np.einsum(
                "nchw,oc->nohw", xp[:, :, ky : ky + h, kx : kx + wd], w[:, :, ky, kx],
                optimize=True,
            )
    return out, (xp, w, x.shape)


def conv3_backward(dout, cache):
    xp, w, x_shape = cache
    _, _, h, wd = x_shape
    db = dout.sum(axis=(0, 2, 3))
    dw = np.empty_like(w)
    dxp = np.zeros_like(xp)
    for ky in range(3):
        for kx in range(3):
            xs = xp[:, :, ky : ky + h, kx : kx + wd]
            dw[:, :, ky, kx] = np.einsum("nohw,nchw->oc", dout, xs, optimize=True)
            dxp[:, :, ky : ky + h, kx : kx + wd] += np.einsum(
                "nohw,oc->nchw", dout, w[:, :, ky, kx], optimize=True
            )
    return dxp[:, :, 1:-1, 1:-1], dw, db


def conv1_forward(x, w, b):
    out = np.einsum("nchw,oc->nohw", x, w[:, :, 0, 0], optimize=True)
    out += b[None, :, None, None]
    return out, (x, w)


def conv1_backward(dout, cache):
    x, w = cache
    db = dout.sum(axis=(0, 2, 3))
    dw = np.einsum("nohw,nchw->oc", dout, x, optimize=True)[:, :, None, None]
    dx = np.einsum("nohw,oc->nchw", dout, w[:, :, 0, 0], optimize=True)
    return dx, dw, db


def relu_forward(x):
    return np.maximum(x, 0.0), (x > 0)


def relu_backward(dout, cache):
    return dout * cache


def maxpool2_forward(x):
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"maxpool needs even dims, got {h}x{w}")
    windows = (
        x.reshape(n, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // 2, w // 2, 4)
    )
    idx = windows.argmax(axis=-1)  # first maximum wins ties
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def maxpool2_backward(dout, cache):
    idx, (n, c, h, w) = cache
    dwin = np.zeros((n, c, h // 2, w // 2, 4), dtype=dout.dtype)
    np.put_along_axis(dwin, idx[..., None], dout[..., None], axis=-1)
    return (
        dwin.reshape(n, c, h // 2, w // 2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h, w)
    )


def upsample2_forward(x):
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample2_backward(dout):
    n, c, h, w = dout.shape
    return dout.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_loss(probs, target):
    """Mean binary cross-entropy with probabilities clamped away from {0, 1}."""
    p = np.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    t = target
    return float(-np.mean(t * np.log(p) + (1.0 - t) * np.log1p(-p)))


def bce_sigmoid_grad(probs, target):
    """Gradient of the clamped mean BCE w.r.t. the pre-sigmoid logits."""
    p = np.clip(probs, PROB_EPS, 1.0 - PROB_EPS)
    inside = (probs > PROB_EPS) & (probs < 1.0 - PROB_EPS)
    dp = (p - target) / (p * (1.0 - p)) * inside / probs.size
    return dp * probs * (1.0 - probs)
