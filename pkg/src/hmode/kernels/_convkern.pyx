# cython: boundscheck=False, wraparound=False, cdivision=True
"""Direct convolution kernels (compiled; float32 and float64).

Same contract as conv_numpy: inputs are pre-padded, "convolution" means
cross-correlation, and the input gradient is returned at padded size.
Loop order keeps the innermost stride contiguous; accumulation order is
fixed, so results are deterministic for a given dtype.
"""

import numpy as np

ctypedef fused floating:
    float
    double


def conv_forward(floating[:, :, ::1] xp, floating[:, :, :, ::1] k):
    cdef Py_ssize_t cout = k.shape[0], cin = k.shape[1]
    cdef Py_ssize_t kh = k.shape[2], kw = k.shape[3]
    cdef Py_ssize_t ho = xp.shape[1] - kh + 1, wo = xp.shape[2] - kw + 1
    cdef Py_ssize_t co, ci, ky, kx, y, x
    cdef floating w
    if floating is float:
        out_arr = np.zeros((cout, ho, wo), dtype=np.float32)
    else:
        out_arr = np.zeros((cout, ho, wo), dtype=np.float64)
    cdef floating[:, :, ::1] out = out_arr
    with nogil:
        for co in range(cout):
            for ci in range(cin):
                for ky in range(kh):
                    for kx in range(kw):
                        w = k[co, ci, ky, kx]
                        for y in range(ho):
                            for x in range(wo):
                                out[co, y, x] += w * xp[ci, y + ky, x + kx]
    return out_arr


def conv_grad_kernel(floating[:, :, ::1] xp, floating[:, :, ::1] g):
    cdef Py_ssize_t cout = g.shape[0], ho = g.shape[1], wo = g.shape[2]
    cdef Py_ssize_t cin = xp.shape[0]
    cdef Py_ssize_t kh = xp.shape[1] - ho + 1, kw = xp.shape[2] - wo + 1
    cdef Py_ssize_t co, ci, ky, kx, y, x
    cdef floating acc
    if floating is float:
        gk_arr = np.zeros((cout, cin, kh, kw), dtype=np.float32)
    else:
        gk_arr = np.zeros((cout, cin, kh, kw), dtype=np.float64)
    cdef floating[:, :, :, ::1] gk = gk_arr
    with nogil:
        for co in range(cout):
            for ci in range(cin):
                for ky in range(kh):
                    for kx in range(kw):
                        acc = 0
                        for y in range(ho):
                            for x in range(wo):
                                acc += g[co, y, x] * xp[ci, y + ky, x + kx]
                        gk[co, ci, ky, kx] = acc
    return gk_arr


def conv_grad_input(floating[:, :, ::1] g, floating[:, :, :, ::1] k):
    cdef Py_ssize_t cout = k.shape[0], cin = k.shape[1]
    cdef Py_ssize_t kh = k.shape[2], kw = k.shape[3]
    cdef Py_ssize_t ho = g.shape[1], wo = g.shape[2]
    cdef Py_ssize_t co, ci, ky, kx, y, x
    cdef floating w
    if floating is float:
        gxp_arr = np.zeros((cin, ho + kh - 1, wo + kw - 1), dtype=np.float32)
    else:
        gxp_arr = np.zeros((cin, ho + kh - 1, wo + kw - 1), dtype=np.float64)
    cdef floating[:, :, ::1] gxp = gxp_arr
    with nogil:
        for ci in range(cin):
            for co in range(cout):
                for ky in range(kh):
                    for kx in range(kw):
                        w = k[co, ci, ky, kx]
                        for y in range(ho):
                            for x in range(wo):
                                gxp[ci, y + ky, x + kx] += w * g[co, y, x]
    return gxp_arr
