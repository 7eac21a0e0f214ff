"""Pure-numpy fallback kernels for convolution and 2x2 max pooling.

Same call signatures as the compiled extension; selected at import by
``pdmm.nn.backend`` when the extension is unavailable or forced off.
"""
import numpy as np


def _im2col(x, kh, kw, stride):
    c = x.shape[0]
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(1, 2))
    win = win[:, ::stride, ::stride]  # (C, Ho, Wo, kh, kw)
    ho, wo = win.shape[1], win.shape[2]
    cols = win.transpose(0, 3, 4, 1, 2).reshape(c * kh * kw, ho * wo)
    return cols, ho, wo


def conv2d_forward(x, kernel, bias, stride):
    o, c, kh, kw = kernel.shape
    cols, ho, wo = _im2col(x, kh, kw, stride)
    y = (kernel.reshape(o, -1) @ cols).reshape(o, ho, wo)
    y += bias[:, None, None]
    return y


def conv2d_backward(x, kernel, stride, dy):
    o, c, kh, kw = kernel.shape
    ho, wo = dy.shape[1], dy.shape[2]
    cols, _, _ = _im2col(x, kh, kw, stride)
    dy_flat = dy.reshape(o, -1)
    dk = (dy_flat @ cols.T).reshape(kernel.shape)
    db = dy_flat.sum(axis=1)
    dcols = (kernel.reshape(o, -1).T @ dy_flat).reshape(c, kh, kw, ho, wo)
    dx = np.zeros_like(x)
    for u in range(kh):
        for v in range(kw):
            dx[:, u : u + ho * stride : stride, v : v + wo * stride : stride] += dcols[:, u, v]
    return dx, dk, db


def maxpool2_forward(x):
    c, h, w = x.shape
    ho, wo = h // 2, w // 2
    win = (
        x[:, : 2 * ho, : 2 * wo]
        .reshape(c, ho, 2, wo, 2)
        .transpose(0, 1, 3, 2, 4)
        .reshape(c, ho, wo, 4)
    )
    arg = win.argmax(axis=3).astype(np.int64)  # first occurrence, row-major window order
    y = np.take_along_axis(win, arg[..., None], axis=3)[..., 0]
    return np.ascontiguousarray(y), arg


def maxpool2_backward(x_shape, arg, dy):
    c, h, w = x_shape
    ho, wo = arg.shape[1], arg.shape[2]
    dx = np.zeros(x_shape, dtype=np.float64)
    ci, ri, wi = np.meshgrid(np.arange(c), np.arange(ho), np.arange(wo), indexing="ij")
    rows = 2 * ri + arg // 2
    cols = 2 * wi + arg % 2
    np.add.at(dx, (ci, rows, cols), dy)
    return dx
