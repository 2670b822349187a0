"""Pure-NumPy convolution/pooling kernels (fallback backend).

Convolutions are lowered to batched BLAS matmuls through an explicit im2col
buffer; pooling uses block reshapes. Same call contract as the compiled
backend.

Contract notes shared by both backends:
  * kernels are square, size 1 or 3, stride 1, zero padding k//2 (spatial
    extents are preserved);
  * max-pool gradient routes to the first maximum in row-major block order.
"""

import numpy as np

NAME = "numpy"


def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    B, C, H, W = x.shape
    out = np.zeros((B, C, H + 2 * pad, W + 2 * pad), dtype=x.dtype)
    out[:, :, pad:-pad, pad:-pad] = x
    return out


def _im2col(xp: np.ndarray, k: int, H: int, W: int) -> np.ndarray:
    """(B, C, Hp, Wp) padded input -> (B, C*k*k, H*W) patch matrix."""
    B, C = xp.shape[:2]
    cols = np.empty((B, C, k, k, H, W), dtype=xp.dtype)
    for ky in range(k):
        for kx in range(k):
            cols[:, :, ky, kx] = xp[:, :, ky:ky + H, kx:kx + W]
    return cols.reshape(B, C * k * k, H * W)


def _col2im(gcols: np.ndarray, k: int, shape, pad: int) -> np.ndarray:
    B, C, H, W = shape
    gxp = np.zeros((B, C, H + 2 * pad, W + 2 * pad), dtype=gcols.dtype)
    g6 = gcols.reshape(B, C, k, k, H, W)
    for ky in range(k):
        for kx in range(k):
            gxp[:, :, ky:ky + H, kx:kx + W] += g6[:, :, ky, kx]
    if pad == 0:
        return gxp
    return np.ascontiguousarray(gxp[:, :, pad:pad + H, pad:pad + W])


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    k = w.shape[2]
    B, C, H, W = x.shape
    O = w.shape[0]
    cols = _im2col(_pad(x, k // 2), k, H, W)
    y = w.reshape(O, -1) @ cols  # (B, O, H*W) batched GEMM
    y += b[:, None]
    return np.ascontiguousarray(y.reshape(B, O, H, W))


def conv2d_backward(x: np.ndarray, w: np.ndarray, gy: np.ndarray):
    k = w.shape[2]
    pad = k // 2
    B, C, H, W = x.shape
    O = w.shape[0]
    cols = _im2col(_pad(x, pad), k, H, W)
    gy2 = np.ascontiguousarray(gy.reshape(B, O, H * W))

    gb = gy.sum(axis=(0, 2, 3))
    gw = (gy2 @ cols.transpose(0, 2, 1)).sum(axis=0).reshape(O, C, k, k)
    gcols = w.reshape(O, -1).T @ gy2  # (B, C*k*k, H*W)
    gx = _col2im(gcols, k, x.shape, pad)
    return gx, np.ascontiguousarray(gw), gb


def maxpool2_forward(x: np.ndarray):
    B, C, H, W = x.shape
    blocks = x.reshape(B, C, H // 2, 2, W // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    blocks = np.ascontiguousarray(blocks.reshape(B, C, H // 2, W // 2, 4))
    # argmax returns the first maximum, i.e. row-major order inside the block
    idx = blocks.argmax(axis=4).astype(np.uint8)
    y = np.take_along_axis(blocks, idx[..., None].astype(np.intp), axis=4)[..., 0]
    return np.ascontiguousarray(y), idx


def maxpool2_backward(idx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    B, C, h, w = gy.shape
    gblocks = np.zeros((B, C, h, w, 4), dtype=gy.dtype)
    np.put_along_axis(gblocks, idx[..., None].astype(np.intp), gy[..., None], axis=4)
    gx = gblocks.reshape(B, C, h, w, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return np.ascontiguousarray(gx.reshape(B, C, 2 * h, 2 * w))
