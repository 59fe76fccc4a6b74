"""Pure-Python (numpy) density-matrix kernels.

Reference implementation of the hot kernels; the Cython module
``_kernels_c`` implements the same functions with identical signatures.
Qubit 0 is the most significant bit (``kron(q0, q1, ...)`` ordering).
"""

import numpy as np


def _as_tensor(rho, n):
    return rho.reshape((2,) * (2 * n))


def apply_1q(rho, u, t, n):
    r = _as_tensor(rho, n)
    r = np.moveaxis(np.tensordot(u, r, axes=([1], [t])), 0, t)
    r = np.moveaxis(np.tensordot(r, u.conj(), axes=([n + t], [1])), -1, n + t)
    return np.ascontiguousarray(r.reshape(rho.shape))


def apply_2q(rho, u, t0, t1, n):
    u4 = u.reshape(2, 2, 2, 2)
    r = _as_tensor(rho, n)
    r = np.tensordot(u4, r, axes=([2, 3], [t0, t1]))
    r = np.moveaxis(r, [0, 1], [t0, t1])
    r = np.tensordot(r, u4.conj(), axes=([n + t0, n + t1], [2, 3]))
    r = np.moveaxis(r, [-2, -1], [n + t0, n + t1])
    return np.ascontiguousarray(r.reshape(rho.shape))


def depolarize(rho, lam, t, n):
    r = _as_tensor(rho, n)
    reduced = np.trace(r, axis1=t, axis2=n + t)
    mixed = np.multiply.outer(np.eye(2) / 2.0, reduced)
    # outer() puts the traced pair first; move it back into place
    mixed = np.moveaxis(mixed, [0, 1], [t, n + t])
    out = (1.0 - lam) * r + lam * mixed
    return np.ascontiguousarray(out.reshape(rho.shape))


def dephase(rho, p, t, n):
    mask = 1 << (n - 1 - t)
    idx = np.arange(rho.shape[0])
    differ = ((idx[:, None] & mask) != 0) != ((idx[None, :] & mask) != 0)
    out = rho.copy()
    out[differ] *= 1.0 - 2.0 * p
    return out


def project(rho, v, t, n):
    """Return (prob, reduced) for <v|_t rho |v>_t; ``reduced`` is unnormalised."""
    r = _as_tensor(rho, n)
    r = np.tensordot(v.conj(), r, axes=([0], [t]))
    # row axis t removed, so the column axis of t now sits at n - 1 + t
    r = np.tensordot(r, v, axes=([n - 1 + t], [0]))
    d = rho.shape[0] // 2
    reduced = np.ascontiguousarray(r.reshape(d, d))
    return float(np.real(np.trace(reduced))), reduced


def partial_trace(rho, keep, n):
    keep = list(keep)
    drop = [i for i in range(n) if i not in keep]
    r = _as_tensor(rho, n)
    letters = "abcdefghijklmnop"
    rows = list(letters[:n])
    cols = list(letters[n:2 * n])
    for i in drop:
        cols[i] = rows[i]
    out = "".join(rows[i] for i in keep) + "".join(cols[i] for i in keep)
    res = np.einsum("".join(rows) + "".join(cols) + "->" + out, r)
    d = 2 ** len(keep)
    return np.ascontiguousarray(res.reshape(d, d))
