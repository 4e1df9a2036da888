# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled per-sample hot kernels.

Same contracts as `oda._kernels_py`; see the docstrings there. The fused
update runs in a single pass over the codebook with no temporaries, which
is what makes long online training runs cheap.
"""

from libc.math cimport exp, log

BACKEND_NAME = "cython"


cdef inline double _row_divergence(int kind_code, double floor,
                                   const double[::1] x,
                                   const double[:, ::1] mu,
                                   Py_ssize_t i) nogil:
    cdef Py_ssize_t j, d = x.shape[0]
    cdef double acc = 0.0, diff, xc, yc
    if kind_code == 0:
        for j in range(d):
            diff = x[j] - mu[i, j]
            acc += diff * diff
    else:
        for j in range(d):
            xc = x[j] if x[j] > floor else floor
            yc = mu[i, j] if mu[i, j] > floor else floor
            acc += xc * (log(xc) - log(yc)) - xc + yc
    return acc


def divergence_row(int kind_code, double floor,
                   const double[::1] x, const double[:, ::1] mu,
                   double[::1] out):
    cdef Py_ssize_t i
    for i in range(mu.shape[0]):
        out[i] = _row_divergence(kind_code, floor, x, mu, i)


def gibbs_weights(const double[::1] div, const double[::1] rho,
                  double temperature, double[::1] out):
    cdef Py_ssize_t i, k = div.shape[0]
    cdef double m, total = 0.0
    m = -div[0]
    for i in range(1, k):
        if -div[i] > m:
            m = -div[i]
    for i in range(k):
        out[i] = rho[i] * exp((-div[i] - m) / temperature)
        total += out[i]
    if total > 0.0:
        for i in range(k):
            out[i] /= total
    return total


def sa_update(int kind_code, double floor,
              const double[::1] x, double[:, ::1] mu,
              double[::1] rho, double[:, ::1] sigma,
              const double[::1] smask,
              double temperature, double alpha,
              double[::1] work):
    cdef Py_ssize_t i, j, k = mu.shape[0], d = x.shape[0]
    cdef double m, total = 0.0, gain, keep = 1.0 - alpha
    for i in range(k):
        work[i] = _row_divergence(kind_code, floor, x, mu, i)
    m = -work[0]
    for i in range(1, k):
        if -work[i] > m:
            m = -work[i]
    for i in range(k):
        work[i] = rho[i] * exp((-work[i] - m) / temperature)
        total += work[i]
    if total <= 0.0:
        return 0.0
    for i in range(k):
        gain = alpha * smask[i] * (work[i] / total)
        rho[i] = keep * rho[i] + gain
        for j in range(d):
            sigma[i, j] = keep * sigma[i, j] + gain * x[j]
        if rho[i] > 0.0:
            for j in range(d):
                mu[i, j] = sigma[i, j] / rho[i]
    return total
