"""Vectorized convolution kernels (pure numpy).

All three entry points operate on a pre-padded input ``xp`` of shape
(C_in, Hp, Wp) and a kernel of shape (C_out, C_in, kh, kw); "convolution"
here means cross-correlation. The forward and the kernel gradient are one
tensordot each over a sliding-window view, so the heavy lifting lands in
BLAS. The input gradient is a per-tap scatter-add of a single tensordot.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_forward(xp: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Valid cross-correlation of ``xp`` with ``k`` -> (C_out, Ho, Wo)."""
    win = sliding_window_view(xp, (k.shape[2], k.shape[3]), axis=(1, 2))
    # win: (C_in, Ho, Wo, kh, kw); contract C_in, kh, kw
    return np.tensordot(k, win, axes=([1, 2, 3], [0, 3, 4]))


def conv_grad_kernel(xp: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the kernel given output gradient ``g`` (C_out, Ho, Wo)."""
    win = sliding_window_view(xp, (g.shape[1], g.shape[2]), axis=(1, 2))
    # win: (C_in, kh, kw, Ho, Wo); contract the output plane
    return np.tensordot(g, win, axes=([1, 2], [3, 4]))


def conv_grad_input(g: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the padded input, shape (C_in, Ho+kh-1, Wo+kw-1)."""
    cout, cin, kh, kw = k.shape
    ho, wo = g.shape[1], g.shape[2]
    gxp = np.zeros((cin, ho + kh - 1, wo + kw - 1), dtype=g.dtype)
    # taps: (C_in, kh, kw, Ho, Wo)
    taps = np.tensordot(k, g, axes=(0, 0))
    for ky in range(kh):
        for kx in range(kw):
            gxp[:, ky:ky + ho, kx:kx + wo] += taps[:, ky, kx]
    return gxp
