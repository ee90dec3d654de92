"""Hot loops of the numeric layer, compiled with numba when available.

Set ``KDVCARLEMAN_NO_NUMBA=1`` to force the pure-numpy implementations
(useful for debugging and for the benchmark in ``benchmarks/``).  Both
paths compute the same sums in the same order up to floating point
reassociation.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["USE_NUMBA", "backend", "poly_on_grid", "gram_contract",
           "poly_on_grid_numpy", "gram_contract_numpy"]


def _numba_requested() -> bool:
    return os.environ.get("KDVCARLEMAN_NO_NUMBA", "").strip().lower() not in ("1", "true", "yes", "on")


try:
    if not _numba_requested():
        raise ImportError("disabled by KDVCARLEMAN_NO_NUMBA")
    from numba import njit
    USE_NUMBA = True
except ImportError:
    USE_NUMBA = False


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


def _power_tables(axes, max_exp):
    n = max(len(a) for a in axes)
    tab = np.zeros((len(axes), max_exp + 1, n), dtype=np.float64)
    for k, a in enumerate(axes):
        tab[k, 0, : len(a)] = 1.0
        for e in range(1, max_exp + 1):
            tab[k, e, : len(a)] = tab[k, e - 1, : len(a)] * a
    return tab


def poly_on_grid_numpy(axes, exps, coeffs):
    """Evaluate ``sum_m c_m prod_k x_k^{m_k}`` on the tensor grid spanned by ``axes``."""
    shape = tuple(len(a) for a in axes)
    out = np.zeros(shape, dtype=np.complex128)
    if len(coeffs) == 0:
        return out
    tab = _power_tables(axes, int(exps.max()) if exps.size else 0)
    for m, c in zip(exps, coeffs):
        term = np.array(c, dtype=np.complex128)
        for k, n in enumerate(shape):
            term = np.multiply.outer(term, tab[k, m[k], :n])
        out += term
    return out


def gram_contract_numpy(U, idx, w, grp, npow):
    """Grouped quadratic form ``H[p,q] = sum w_r conj(w_s) prod_k U[k, idx[r,k], idx[s,k]]``.

    Rows ``r`` with ``grp[r] == p`` contribute to block ``p``.
    """
    P = np.ones((len(w), len(w)), dtype=np.complex128)
    for k in range(U.shape[0]):
        col = idx[:, k]
        P *= U[k][col[:, None], col[None, :]]
    E = np.zeros((npow, len(w)), dtype=np.complex128)
    E[grp, np.arange(len(w))] = w
    return E @ P @ E.conj().T


if USE_NUMBA:

    @njit(cache=True)
    def _poly_flat(tab, shape, exps, coeffs):
        # odometer over all but the last axis with cached prefix products;
        # the innermost loop is then one multiply-add per monomial
        dim = len(shape)
        T = len(coeffs)
        last = shape[dim - 1]
        outer = 1
        for k in range(dim - 1):
            outer *= shape[k]
        out = np.zeros(outer * last, dtype=np.complex128)
        pref = np.empty((dim, T), dtype=np.complex128)
        for t in range(T):
            pref[0, t] = coeffs[t]
        pos = np.zeros(dim, dtype=np.int64)
        start = 0
        for o in range(outer):
            for k in range(start, dim - 1):
                for t in range(T):
                    pref[k + 1, t] = pref[k, t] * tab[k, exps[t, k], pos[k]]
            base = o * last
            for j in range(last):
                acc = 0j
                for t in range(T):
                    acc += pref[dim - 1, t] * tab[dim - 1, exps[t, dim - 1], j]
                out[base + j] = acc
            # advance the odometer; ``start`` is the first axis whose prefix changed
            k = dim - 2
            while k >= 0:
                pos[k] += 1
                if pos[k] < shape[k]:
                    break
                pos[k] = 0
                k -= 1
            start = max(k, 0)
        return out

    @njit(cache=True)
    def _gram(U, idx, w, grp, npow):
        R = len(w)
        dim = U.shape[0]
        H = np.zeros((npow, npow), dtype=np.complex128)
        for r in range(R):
            wr = w[r]
            pr = grp[r]
            for s in range(R):
                v = wr * np.conj(w[s])
                for k in range(dim):
                    v *= U[k, idx[r, k], idx[s, k]]
                H[pr, grp[s]] += v
        return H

    def poly_on_grid(axes, exps, coeffs):
        shape = tuple(len(a) for a in axes)
        if len(coeffs) == 0:
            return np.zeros(shape, dtype=np.complex128)
        tab = _power_tables(axes, int(exps.max()) if exps.size else 0)
        flat = _poly_flat(tab, np.array(shape, dtype=np.int64),
                          np.ascontiguousarray(exps, dtype=np.int64),
                          np.ascontiguousarray(coeffs, dtype=np.complex128))
        return flat.reshape(shape)

    def gram_contract(U, idx, w, grp, npow):
        return _gram(np.ascontiguousarray(U, dtype=np.complex128),
                     np.ascontiguousarray(idx, dtype=np.int64),
                     np.ascontiguousarray(w, dtype=np.complex128),
                     np.ascontiguousarray(grp, dtype=np.int64), int(npow))

else:
    poly_on_grid = poly_on_grid_numpy
    gram_contract = gram_contract_numpy
