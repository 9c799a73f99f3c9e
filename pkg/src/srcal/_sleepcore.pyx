# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled replay kernel: leaky integrate-and-fire dynamics plus the signed
Hebbian update, bit-identical to the numpy fallback in sleep.py."""

import numpy as np


def run_sleep(list weights, const unsigned char[:, ::1] input_spikes,
              const double[::1] scales, const double[::1] thresholds,
              double lam, double inc, double dec):
    """Run all replay steps in place on the given head weight matrices."""
    cdef Py_ssize_t n_layers = len(weights)
    cdef Py_ssize_t n_steps = input_spikes.shape[0]
    cdef Py_ssize_t n_in0 = input_spikes.shape[1]

    volts_arrs = [np.zeros(w.shape[0]) for w in weights]
    spike_arrs = [np.zeros(n_in0, dtype=np.uint8)]
    spike_arrs += [np.zeros(w.shape[0], dtype=np.uint8) for w in weights]

    cdef double[:, ::1] W
    cdef double[::1] v
    cdef unsigned char[::1] s_pre, s_post, s_in
    cdef Py_ssize_t t, l, i, j, n_out, n_in
    cdef double acc, alpha, beta

    s_in = spike_arrs[0]
    for t in range(n_steps):
        for i in range(n_in0):
            s_in[i] = input_spikes[t, i]
        # dynamics pass, ascending layers
        for l in range(n_layers):
            W = weights[l]
            v = volts_arrs[l]
            s_pre = spike_arrs[l]
            s_post = spike_arrs[l + 1]
            alpha = scales[l]
            beta = thresholds[l]
            n_out = W.shape[0]
            n_in = W.shape[1]
            for j in range(n_out):
                acc = 0.0
                for i in range(n_in):
                    if s_pre[i]:
                        acc += W[j, i]
                v[j] = lam * v[j] + alpha * acc
                if v[j] > beta:
                    s_post[j] = 1
                    v[j] = 0.0
                else:
                    s_post[j] = 0
        # plasticity pass
        for l in range(n_layers):
            W = weights[l]
            s_pre = spike_arrs[l]
            s_post = spike_arrs[l + 1]
            n_out = W.shape[0]
            n_in = W.shape[1]
            for j in range(n_out):
                if s_post[j]:
                    for i in range(n_in):
                        if s_pre[i]:
                            W[j, i] += inc
                        else:
                            W[j, i] += dec
