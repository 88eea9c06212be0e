# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled site-overlap Gram kernel.

M[i, j] = prod over sites n of <a[i, n, :], b[j, n, :]> with the usual
conjugate-linear-in-the-first-slot inner product on C^(d+1).  This triple
loop dominates every norm and overlap computation on multi-term states.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def site_product_gram(const double complex[:, :, ::1] a,
                      const double complex[:, :, ::1] b):
    cdef Py_ssize_t k1 = a.shape[0], k2 = b.shape[0]
    cdef Py_ssize_t n = a.shape[1], c = a.shape[2]
    cdef Py_ssize_t i, j, m, q
    cdef double complex acc, s
    out_arr = np.empty((k1, k2), dtype=np.complex128)
    cdef double complex[:, ::1] out = out_arr
    for i in range(k1):
        for j in range(k2):
            acc = 1.0 + 0.0j
            for m in range(n):
                s = 0.0 + 0.0j
                for q in range(c):
                    s = s + a[i, m, q].conjugate() * b[j, m, q]
                acc = acc * s
                if acc == 0:
                    break
            out[i, j] = acc
    return out_arr
