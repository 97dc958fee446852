"""Independent oracle implementations used only by the tests.

Everything here is deliberately written as straight-line scalar loops (or
textbook formulas) so it shares no code path with the package. Slow but
unambiguous.
"""

from __future__ import annotations

import math

import numpy as np


def conv2d_scalar(x, weight, bias, stride=1, padding=0):
    """Plain-loop 2-D convolution. x: (C, H, W); weight: (O, C, kh, kw)."""
    c_in, h, w = x.shape
    c_out, _, kh, kw = weight.shape
    h_out = (h + 2 * padding - kh) // stride + 1
    w_out = (w + 2 * padding - kw) // stride + 1
    out = np.zeros((c_out, h_out, w_out), dtype=np.float64)
    for o in range(c_out):
        for oy in range(h_out):
            for ox in range(w_out):
                acc = bias[o]
                for c in range(c_in):
                    for ky in range(kh):
                        for kx in range(kw):
                            iy = oy * stride + ky - padding
                            ix = ox * stride + kx - padding
                            if 0 <= iy < h and 0 <= ix < w:
                                acc += weight[o, c, ky, kx] * x[c, iy, ix]
                out[o, oy, ox] = acc
    return out


def sigmoid_scalar(x):
    return 1.0 / (1.0 + np.exp(-x))


def cba_scalar(x, squeeze_w, squeeze_b, excite_w, excite_b, spatial_w, spatial_b):
    """Channel+spatial attention block on a single (C, H, W) item.

    Returns (output, channel_map (C,), spatial_map (H, W)).
    """
    c, h, w = x.shape
    descriptor = np.array([x[ci].mean() for ci in range(c)])
    hidden = conv2d_scalar(
        descriptor.reshape(c, 1, 1), squeeze_w, squeeze_b
    ).reshape(-1)
    channel_logits = conv2d_scalar(
        hidden.reshape(-1, 1, 1), excite_w, excite_b
    ).reshape(-1)
    channel_map = sigmoid_scalar(channel_logits)

    attended = np.zeros_like(x)
    for ci in range(c):
        attended[ci] = channel_map[ci] * x[ci]

    pooled = np.zeros((2, h, w))
    for y in range(h):
        for xx in range(w):
            column = attended[:, y, xx]
            pooled[0, y, xx] = column.max()
            pooled[1, y, xx] = column.mean()
    spatial_logits = conv2d_scalar(pooled, spatial_w, spatial_b, padding=2)[0]
    spatial_map = sigmoid_scalar(spatial_logits)

    out = np.zeros_like(x)
    for ci in range(c):
        out[ci] = spatial_map * attended[ci] + attended[ci]
    return out, channel_map, spatial_map


def aba_scalar(v, onehot, gamma_w, gamma_b, beta_w, beta_b, out_w, out_b, eps):
    """Attribute block on a batch: BN over (N, H, W), denormalize, 3x3 conv.

    v: (N, C, H, W); onehot: (N, A, H, W) already at feature resolution.
    """
    n, c, h, w = v.shape
    normalized = np.zeros_like(v)
    for ci in range(c):
        values = v[:, ci].reshape(-1)
        mu = values.mean()
        var = (values**2).mean() - mu**2
        normalized[:, ci] = (v[:, ci] - mu) / math.sqrt(var + eps)
    out = np.zeros_like(v)
    for ni in range(n):
        gamma = conv2d_scalar(onehot[ni], gamma_w, gamma_b, padding=1)
        beta = conv2d_scalar(onehot[ni], beta_w, beta_b, padding=1)
        activated = gamma * normalized[ni] + beta
        out[ni] = conv2d_scalar(activated, out_w, out_b, padding=1)
    return out


def spearman_bruteforce(a, b):
    """Rank both vectors with explicit midranks, then textbook Pearson."""
    return pearson_bruteforce(ranks_bruteforce(a), ranks_bruteforce(b))


def ranks_bruteforce(values):
    n = len(values)
    ranks = [0.0] * n
    for i in range(n):
        less = sum(1 for v in values if v < values[i])
        equal = sum(1 for v in values if v == values[i])
        # midrank: average of positions occupied by the tie group
        ranks[i] = less + (equal + 1) / 2.0
    return ranks


def pearson_bruteforce(a, b):
    n = len(a)
    mean_a = sum(a) / n
    mean_b = sum(b) / n
    cov = sum((a[i] - mean_a) * (b[i] - mean_b) for i in range(n))
    var_a = sum((x - mean_a) ** 2 for x in a)
    var_b = sum((x - mean_b) ** 2 for x in b)
    if var_a == 0 or var_b == 0:
        return float("nan")
    return cov / math.sqrt(var_a * var_b)


def gradient_energy(img):
    """Mean squared forward difference; an independent sharpness measure."""
    img = np.asarray(img, dtype=np.float64)
    dx = img[:, 1:] - img[:, :-1]
    dy = img[1:, :] - img[:-1, :]
    return float((dx**2).mean() + (dy**2).mean())


def finite_difference_grads(fn, params, eps=1e-5):
    """Central finite differences of a scalar function of a list of arrays."""
    grads = []
    for p in params:
        g = np.zeros_like(p, dtype=np.float64)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = fn()
            flat[i] = orig - eps
            lo = fn()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * eps)
        grads.append(g)
    return grads
