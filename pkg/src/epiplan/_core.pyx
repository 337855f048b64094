# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled transition-build kernel.

Mirrors epiplan._kernels_py.transition_cols exactly; the pure-Python
module documents the contract.  Keep the floating-point operation order
in sync between the two files: backend parity is asserted bit-for-bit.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor

BACKEND = "compiled"


cdef inline Py_ssize_t _upper_bound(const double* arr, Py_ssize_t n, double v) noexcept nogil:
    # first index with arr[idx] > v (numpy searchsorted side="right")
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if arr[mid] <= v:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline Py_ssize_t _bin_of(const double* edges, Py_ssize_t n_edges,
                               Py_ssize_t n_bins, double v) noexcept nogil:
    cdef Py_ssize_t b = _upper_bound(edges, n_edges, v) - 1
    if b < 0:
        b = 0
    elif b > n_bins - 1:
        b = n_bins - 1
    return b


def transition_cols(double[::1] s_rep, double[::1] i_pow,
                    double[::1] s_edges, double[::1] i_edges,
                    double[::1] beta, double[::1] births,
                    double n_pop, double mu, double[::1] eps):
    """See epiplan._kernels_py.transition_cols."""
    cdef Py_ssize_t s_bins = s_rep.shape[0]
    cdef Py_ssize_t i_bins = i_pow.shape[0]
    cdef Py_ssize_t n_tau = beta.shape[0]
    cdef Py_ssize_t nq = eps.shape[0]
    cdef Py_ssize_t n_cells = s_bins * i_bins * n_tau

    out_arr = np.empty(n_cells * nq, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr

    cdef Py_ssize_t sb, ib, tau, j, pos, dest_s, dest_i
    cdef Py_ssize_t tau_next
    cdef double s_val, base, cap, i_next, s_next, one_minus_mu
    one_minus_mu = 1.0 - mu

    with nogil:
        pos = 0
        for sb in range(s_bins):
            s_val = s_rep[sb]
            for ib in range(i_bins):
                for tau in range(n_tau):
                    base = beta[tau] * i_pow[ib] * s_val
                    cap = s_val + births[tau]
                    tau_next = tau + 1
                    if tau_next == n_tau:
                        tau_next = 0
                    for j in range(nq):
                        i_next = floor(base * eps[j] + 0.5)
                        if i_next < 0.0:
                            i_next = 0.0
                        elif i_next > cap:
                            i_next = cap
                        s_next = floor(one_minus_mu * (births[tau] + s_val - i_next) + 0.5)
                        if s_next < 0.0:
                            s_next = 0.0
                        elif s_next > n_pop:
                            s_next = n_pop
                        dest_s = _bin_of(&s_edges[0], s_edges.shape[0], s_bins, s_next)
                        dest_i = _bin_of(&i_edges[0], i_edges.shape[0], i_bins, i_next)
                        out[pos] = (dest_s * i_bins + dest_i) * n_tau + tau_next
                        pos += 1
    return out_arr
