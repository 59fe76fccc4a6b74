# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled density-matrix kernels (same contract as ``_kernels_py``)."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef double complex cplx


cdef inline cplx _conj(cplx z) nogil:
    return z.real - 1j * z.imag


def apply_1q(rho_in, u_in, int t, int n):
    cdef cnp.ndarray[cplx, ndim=2] rho = np.array(rho_in, dtype=np.complex128, order="C")
    cdef cnp.ndarray[cplx, ndim=2] u = np.ascontiguousarray(u_in, dtype=np.complex128)
    cdef int d = rho.shape[0]
    cdef int mask = 1 << (n - 1 - t)
    cdef cplx u00 = u[0, 0], u01 = u[0, 1], u10 = u[1, 0], u11 = u[1, 1]
    cdef cplx a, b
    cdef int i0, i1, c, r
    with nogil:
        for i0 in range(d):
            if i0 & mask:
                continue
            i1 = i0 | mask
            for c in range(d):
                a = rho[i0, c]
                b = rho[i1, c]
                rho[i0, c] = u00 * a + u01 * b
                rho[i1, c] = u10 * a + u11 * b
        for i0 in range(d):
            if i0 & mask:
                continue
            i1 = i0 | mask
            for r in range(d):
                a = rho[r, i0]
                b = rho[r, i1]
                rho[r, i0] = a * _conj(u00) + b * _conj(u01)
                rho[r, i1] = a * _conj(u10) + b * _conj(u11)
    return rho


def apply_2q(rho_in, u_in, int t0, int t1, int n):
    cdef cnp.ndarray[cplx, ndim=2] rho = np.array(rho_in, dtype=np.complex128, order="C")
    cdef cnp.ndarray[cplx, ndim=2] u = np.ascontiguousarray(u_in, dtype=np.complex128)
    cdef int d = rho.shape[0]
    cdef int m0 = 1 << (n - 1 - t0)
    cdef int m1 = 1 << (n - 1 - t1)
    cdef int base, k, l, c, r
    cdef int idx[4]
    cdef cplx v[4]
    cdef cplx acc
    with nogil:
        for base in range(d):
            if (base & m0) or (base & m1):
                continue
            idx[0] = base
            idx[1] = base | m1
            idx[2] = base | m0
            idx[3] = base | m0 | m1
            for c in range(d):
                for k in range(4):
                    v[k] = rho[idx[k], c]
                for k in range(4):
                    acc = 0
                    for l in range(4):
                        acc = acc + u[k, l] * v[l]
                    rho[idx[k], c] = acc
            for r in range(d):
                for k in range(4):
                    v[k] = rho[r, idx[k]]
                for k in range(4):
                    acc = 0
                    for l in range(4):
                        acc = acc + v[l] * _conj(u[k, l])
                    rho[r, idx[k]] = acc
    return rho


def depolarize(rho_in, double lam, int t, int n):
    cdef cnp.ndarray[cplx, ndim=2] rho = np.ascontiguousarray(rho_in, dtype=np.complex128)
    cdef int d = rho.shape[0]
    cdef cnp.ndarray[cplx, ndim=2] out = np.empty((d, d), dtype=np.complex128)
    cdef int mask = 1 << (n - 1 - t)
    cdef int i, j, i0, j0
    cdef double keep = 1.0 - lam
    cdef cplx avg
    with nogil:
        for i in range(d):
            for j in range(d):
                if (i & mask) != (j & mask):
                    out[i, j] = keep * rho[i, j]
                else:
                    i0 = i & ~mask
                    j0 = j & ~mask
                    avg = 0.5 * (rho[i0, j0] + rho[i0 | mask, j0 | mask])
                    out[i, j] = keep * rho[i, j] + lam * avg
    return out


def dephase(rho_in, double p, int t, int n):
    cdef cnp.ndarray[cplx, ndim=2] out = np.array(rho_in, dtype=np.complex128, order="C")
    cdef int d = out.shape[0]
    cdef int mask = 1 << (n - 1 - t)
    cdef double f = 1.0 - 2.0 * p
    cdef int i, j
    with nogil:
        for i in range(d):
            for j in range(d):
                if (i & mask) != (j & mask):
                    out[i, j] = f * out[i, j]
    return out


cdef inline int _insert_bit(int x, int pos, int bit) nogil:
    # pos counts from the least significant end
    cdef int low = x & ((1 << pos) - 1)
    cdef int high = (x >> pos) << (pos + 1)
    return high | (bit << pos) | low


def project(rho_in, v_in, int t, int n):
    cdef cnp.ndarray[cplx, ndim=2] rho = np.ascontiguousarray(rho_in, dtype=np.complex128)
    cdef cnp.ndarray[cplx, ndim=1] v = np.ascontiguousarray(v_in, dtype=np.complex128)
    cdef int d = rho.shape[0] // 2
    cdef cnp.ndarray[cplx, ndim=2] out = np.empty((d, d), dtype=np.complex128)
    cdef int pos = n - 1 - t
    cdef int i, j, a, b
    cdef cplx acc
    cdef double tr = 0.0
    with nogil:
        for i in range(d):
            for j in range(d):
                acc = 0
                for a in range(2):
                    for b in range(2):
                        acc = acc + _conj(v[a]) * rho[_insert_bit(i, pos, a), _insert_bit(j, pos, b)] * v[b]
                out[i, j] = acc
            tr += out[i, i].real
    return tr, out


def partial_trace(rho_in, keep, int n):
    cdef cnp.ndarray[cplx, ndim=2] rho = np.ascontiguousarray(rho_in, dtype=np.complex128)
    keep = list(keep)
    cdef int k = len(keep)
    cdef int dk = 1 << k
    cdef int dd = 1 << (n - k)
    drop = [i for i in range(n) if i not in keep]
    cdef cnp.ndarray[cnp.int64_t, ndim=1] kpos = np.array([n - 1 - q for q in keep], dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] dpos = np.array([n - 1 - q for q in drop], dtype=np.int64)
    cdef cnp.ndarray[cplx, ndim=2] out = np.zeros((dk, dk), dtype=np.complex128)
    cdef int i, j, e, s, row, col, m
    cdef int nd = n - k
    with nogil:
        for i in range(dk):
            for j in range(dk):
                for e in range(dd):
                    row = 0
                    col = 0
                    for s in range(k):
                        m = 1 << kpos[s]
                        if (i >> (k - 1 - s)) & 1:
                            row = row | m
                        if (j >> (k - 1 - s)) & 1:
                            col = col | m
                    for s in range(nd):
                        if (e >> (nd - 1 - s)) & 1:
                            row = row | (1 << dpos[s])
                            col = col | (1 << dpos[s])
                    out[i, j] = out[i, j] + rho[row, col]
    return out
