"""Array primitives for the small models: conv, pooling, dense, LSTM, losses.

Everything is plain numpy with explicit backward passes. Layouts: images are
(batch, height, width, channels); sequences are (batch, time, coeffs); weights
for conv are (kh, kw, in_channels, filters). Backward functions consume the
cache returned by the matching forward.
"""

from __future__ import annotations

import numpy as np


class ShapeMismatch(ValueError):
    pass


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch and its gradient w.r.t. logits."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1))
    batch = logits.shape[0]
    loss = float(np.mean(log_z - shifted[np.arange(batch), labels]))
    dlogits = softmax(logits)
    dlogits[np.arange(batch), labels] -= 1.0
    return loss, dlogits / batch


def im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """(B,H,W,C) -> (B*OH*OW, kh*kw*C) patch matrix, valid positions, stride 1.

    Built by kh*kw strided block-column writes; one pass over the data per
    kernel offset keeps the gather cheap at these feature-map sizes.
    """
    bsz, h, w, cin = x.shape
    oh, ow = h - kh + 1, w - kw + 1
    cols = np.empty((bsz * oh * ow, kh * kw * cin), dtype=x.dtype)
    view = cols.reshape(bsz, oh, ow, kh * kw * cin)
    col = 0
    for i in range(kh):
        for j in range(kw):
            view[..., col : col + cin] = x[:, i : i + oh, j : j + ow, :]
            col += cin
    return cols


def col2im_add(dcols: np.ndarray, dx: np.ndarray, kh: int, kw: int) -> None:
    """Scatter-add patch-matrix gradients back onto the input gradient."""
    bsz, h, w, cin = dx.shape
    oh, ow = h - kh + 1, w - kw + 1
    view = dcols.reshape(bsz, oh, ow, kh * kw * cin)
    col = 0
    for i in range(kh):
        for j in range(kw):
            dx[:, i : i + oh, j : j + ow, :] += view[..., col : col + cin]
            col += cin


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Valid convolution, stride 1. w is (kh, kw, cin, filters)."""
    kh, kw, cin, filters = w.shape
    if x.shape[3] != cin:
        raise ShapeMismatch(f"conv input channels {x.shape[3]} != {cin}")
    bsz, h, width, _ = x.shape
    oh, ow = h - kh + 1, width - kw + 1
    if oh < 1 or ow < 1:
        raise ShapeMismatch(f"input {x.shape} smaller than kernel {kh}x{kw}")
    cols = im2col(x, kh, kw)
    y = cols @ w.reshape(-1, filters) + b
    return y.reshape(bsz, oh, ow, filters), (cols, w, x.shape)


def conv2d_backward(dy: np.ndarray, cache):
    cols, w, x_shape = cache
    kh, kw, cin, filters = w.shape
    dy_flat = dy.reshape(-1, filters)
    dw = (cols.T @ dy_flat).reshape(w.shape)
    db = dy_flat.sum(axis=0)
    dcols = dy_flat @ w.reshape(-1, filters).T
    dx = np.zeros(x_shape, dtype=dy.dtype)
    col2im_add(dcols, dx, kh, kw)
    return dx, dw, db


def maxpool2_forward(x: np.ndarray):
    """2x2 max pooling, stride 2; trailing odd rows/columns are dropped."""
    b, h, w, c = x.shape
    h2, w2 = h // 2, w // 2
    quads = tuple(np.ascontiguousarray(x[:, di : h2 * 2 : 2, dj : w2 * 2 : 2, :])
                  for di, dj in ((0, 0), (0, 1), (1, 0), (1, 1)))
    y = np.maximum(np.maximum(quads[0], quads[1]), np.maximum(quads[2], quads[3]))
    # ties resolve to the first position in row-major window order
    idx = np.full(y.shape, 3, dtype=np.int8)
    idx[quads[2] == y] = 2
    idx[quads[1] == y] = 1
    idx[quads[0] == y] = 0
    return y, (x.shape, idx)


def maxpool2_backward(dy: np.ndarray, cache):
    x_shape, idx = cache
    b, h, w, c = x_shape
    h2, w2 = h // 2, w // 2
    dx = np.zeros(x_shape, dtype=dy.dtype)
    for k, (di, dj) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        dx[:, di : h2 * 2 : 2, dj : w2 * 2 : 2, :] += dy * (idx == k)
    return dx


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    if x.shape[1] != w.shape[0]:
        raise ShapeMismatch(f"dense input width {x.shape[1]} != {w.shape[0]}")
    return x @ w + b, (x, w)


def dense_backward(dy: np.ndarray, cache):
    x, w = cache
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


def dropout_forward(x: np.ndarray, p: float, train: bool, rng: np.random.Generator):
    """Inverted dropout; the mask is recorded so backward matches exactly."""
    if not train or p <= 0.0:
        return x, None
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    mask = mask.astype(x.dtype)
    return x * mask, mask


def dropout_backward(dy: np.ndarray, mask):
    return dy if mask is None else dy * mask


def lstm_forward(x: np.ndarray, wx: np.ndarray, wh: np.ndarray, b: np.ndarray):
    """Single-layer LSTM over (B, T, D); returns the final hidden state.

    Gate layout along the 4H axis is [input, forget, candidate, output].
    """
    bsz, steps, dim = x.shape
    hidden = wh.shape[0]
    if wx.shape != (dim, 4 * hidden):
        raise ShapeMismatch(f"lstm wx shape {wx.shape} != {(dim, 4 * hidden)}")
    zx = (x.reshape(-1, dim) @ wx).reshape(bsz, steps, 4 * hidden)
    h = np.zeros((bsz, hidden), dtype=x.dtype)
    c = np.zeros((bsz, hidden), dtype=x.dtype)
    gates, cells, tanh_cells, h_prevs = [], [], [], []
    for t in range(steps):
        z = zx[:, t] + h @ wh + b
        i = sigmoid(z[:, :hidden])
        f = sigmoid(z[:, hidden : 2 * hidden])
        g = np.tanh(z[:, 2 * hidden : 3 * hidden])
        o = sigmoid(z[:, 3 * hidden :])
        h_prevs.append(h)
        cells.append(c)
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        gates.append((i, f, g, o))
        tanh_cells.append(tc)
    cache = (x, wx, wh, gates, cells, tanh_cells, h_prevs)
    return h, cache


def lstm_backward(dh_last: np.ndarray, cache):
    x, wx, wh, gates, cells, tanh_cells, h_prevs = cache
    bsz, steps, dim = x.shape
    hidden = wh.shape[0]
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * hidden, dtype=x.dtype)
    dzx = np.empty((bsz, steps, 4 * hidden), dtype=x.dtype)
    dh = dh_last
    dc = np.zeros((bsz, hidden), dtype=x.dtype)
    for t in range(steps - 1, -1, -1):
        i, f, g, o = gates[t]
        tc = tanh_cells[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        df = dc * cells[t]
        dg = dc * i
        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ], axis=1)
        dzx[:, t] = dz
        dwh += h_prevs[t].T @ dz
        db += dz.sum(axis=0)
        dh = dz @ wh.T
        dc = dc * f
    flat = dzx.reshape(-1, 4 * hidden)
    dwx = x.reshape(-1, dim).T @ flat
    dx = (flat @ wx.T).reshape(x.shape)
    return dx, dwx, dwh, db
