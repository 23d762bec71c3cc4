# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled SIC chain kernel.

For each trial the K nearest SBSs are found by insertion into a small sorted
buffer, the interference of every other SBS is summed once, and the per-layer
interference is then built back-to-front so no large sum is ever formed by
subtraction.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef inline double _power(double d2, double fade, double half_alpha) nogil:
    if half_alpha == 2.0:
        return fade / (d2 * d2)
    return fade * exp(-half_alpha * log(d2))


cdef void _one_trial(const double[:] d2, const double[:] fading, Py_ssize_t start,
                     Py_ssize_t stop, double half_alpha, int K, double[:] out,
                     Py_ssize_t* buf) nogil:
    cdef Py_ssize_t i, j, pos, count = 0
    cdef Py_ssize_t npts = stop - start
    cdef int kk = K if K < npts else <int>npts
    cdef double kth, tail, interf, p

    for i in range(start, stop):
        if count < kk:
            pos = count
            count += 1
        elif d2[i] < d2[buf[kk - 1]]:
            pos = kk - 1
        else:
            continue
        while pos > 0 and d2[buf[pos - 1]] > d2[i]:
            buf[pos] = buf[pos - 1]
            pos -= 1
        buf[pos] = i

    tail = 0.0
    if kk > 0:
        kth = d2[buf[kk - 1]]
        for i in range(start, stop):
            if d2[i] > kth:
                tail += _power(d2[i], fading[i], half_alpha)
            elif d2[i] == kth:
                # exact distance tie with the K-th nearest: count it only if it
                # is not one of the buffered layers
                for j in range(kk):
                    if buf[j] == i:
                        break
                else:
                    tail += _power(d2[i], fading[i], half_alpha)

    for j in range(kk, K):
        out[j] = INFINITY
    interf = tail
    for j in range(kk - 1, -1, -1):
        p = _power(d2[buf[j]], fading[buf[j]], half_alpha)
        if interf > 0.0:
            out[j] = p / interf
        else:
            out[j] = INFINITY
        interf += p


def sir_layers_batch(const double[:] d2, const double[:] fading,
                     const long long[:] offsets, double alpha, int K):
    """SIR of layers ``1..K`` for every trial packed in ``d2``/``fading``.

    Trial ``t`` owns entries ``offsets[t]:offsets[t+1]``. Returns an array of
    shape ``(trials, K)``; layers without any farther interferer get ``inf``.
    """
    cdef Py_ssize_t T = offsets.shape[0] - 1
    cdef Py_ssize_t t
    cdef double half_alpha = 0.5 * alpha
    result = np.empty((T, K), dtype=np.float64)
    cdef double[:, :] res = result
    cdef Py_ssize_t* buf = <Py_ssize_t*> malloc((K + 1) * sizeof(Py_ssize_t))
    if buf == NULL:
        raise MemoryError()
    try:
        with nogil:
            for t in range(T):
                _one_trial(d2, fading, offsets[t], offsets[t + 1], half_alpha, K,
                           res[t], buf)
    finally:
        free(buf)
    return result
