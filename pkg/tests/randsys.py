"""Random polynomial objects for property tests."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from kdvcarleman.catalog import _heisenberg_basis, _structure_from_brackets
from kdvcarleman.operators import DiffOp, SystemSpec, VectorField, apply
from kdvcarleman.symbolic import GaussianRational, ScalarExpr


def rand_coeff(rng, complex_=True, lo=-3, hi=3):
    re = Fraction(int(rng.integers(lo, hi + 1)), int(rng.integers(1, 3)))
    im = Fraction(int(rng.integers(lo, hi + 1)), int(rng.integers(1, 3))) if complex_ else 0
    return GaussianRational(re, im)


def rand_expr(rng, dim, max_deg=3, terms=3, real=False, nonzero=False):
    while True:
        out = {}
        for _ in range(int(rng.integers(1, terms + 1))):
            deg = int(rng.integers(0, max_deg + 1))
            m = [0] * dim
            for _ in range(deg):
                m[int(rng.integers(0, dim))] += 1
            out[tuple(m)] = rand_coeff(rng, not real)
        e = ScalarExpr(dim, out)
        if not nonzero or not e.is_zero():
            return e


def rand_diffop(rng, dim, max_order=3, max_deg=3, terms=3):
    out = {}
    for _ in range(int(rng.integers(1, terms + 1))):
        order = int(rng.integers(0, max_order + 1))
        a = [0] * dim
        for _ in range(order):
            a[int(rng.integers(0, dim))] += 1
        out[tuple(a)] = rand_expr(rng, dim, max_deg, 2)
    return DiffOp(dim, out)


def rand_field(rng, dim, max_deg=2, real=True):
    return VectorField([rand_expr(rng, dim, max_deg, 2, real=real) for _ in range(dim)])


def _mix(fields, structure, M):
    """Constant change of frame X'_a = sum_j M[a][j] X_j, with transformed structure."""
    N = len(fields)
    dim = fields[0].dim
    Mf = [[Fraction(int(x)) for x in row] for row in M]
    Minv = _inverse(Mf)
    new_fields = []
    for a in range(N):
        acc = VectorField.zero(dim)
        for j in range(N):
            if Mf[a][j]:
                acc = acc + fields[j].scale(ScalarExpr.const(dim, Mf[a][j]))
        new_fields.append(acc)
    new_sc = {}
    for a in range(N):
        for b in range(a + 1, N):
            coeffs = [ScalarExpr.zero(dim) for _ in range(N)]
            for j in range(N):
                for k in range(N):
                    w = Mf[a][j] * Mf[b][k]
                    if not w:
                        continue
                    for l in range(N):
                        c = structure.get((j + 1, k + 1))
                        if c is None:
                            c = structure.get((k + 1, j + 1))
                            c = None if c is None else tuple(-x for x in c)
                        if c is None or c[l].is_zero():
                            continue
                        for ap in range(N):
                            if Minv[l][ap]:
                                coeffs[ap] = coeffs[ap] + c[l] * (w * Minv[l][ap])
            new_sc[(a + 1, b + 1)] = tuple(coeffs)
    return new_fields, new_sc


def _inverse(M):
    n = len(M)
    A = [row[:] + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(M)]
    for c in range(n):
        p = next(r for r in range(c, n) if A[r][c] != 0)
        A[c], A[p] = A[p], A[c]
        piv = A[c][c]
        A[c] = [x / piv for x in A[c]]
        for r in range(n):
            if r != c and A[r][c] != 0:
                f = A[r][c]
                A[r] = [x - f * y for x, y in zip(A[r], A[c])]
    return [row[n:] for row in A]


def _unimodular(rng, n):
    """Random integer matrix with determinant +-1 (product of elementary moves)."""
    M = np.eye(n, dtype=int)
    for _ in range(2 * n):
        i, j = rng.choice(n, size=2, replace=False) if n > 1 else (0, 0)
        if i != j:
            M[i] += int(rng.integers(-1, 2)) * M[j]
    return M


def random_system(rng, max_dim=4) -> SystemSpec:
    """Involutive system with structure coefficients.

    A base frame (mixed coordinate fields or Heisenberg fields, optionally
    padded with extra axes) is re-mixed by a unimodular matrix and then
    multiplied by a common real polynomial ``g``:
    ``[gX_j, gX_k] = (X_j g) gX_k - (X_k g) gX_j + g [X_j, X_k]``.
    """
    kind = int(rng.integers(0, 3))
    if kind == 2 and max_dim >= 3:
        fields, brackets = _heisenberg_basis(1)
        dim, N = 3, 3
        if max_dim >= 4 and rng.integers(0, 2):
            fields = [X.embed(4, [2, 3, 4]) for X in fields]
            dim = 4
        structure = _structure_from_brackets(brackets, [0, 1, 2], 3, dim)
        fields = list(fields)
    else:
        dim = int(rng.integers(2, max_dim + 1))
        N = int(rng.integers(1, dim + 1))
        fields = [VectorField.coordinate(dim, k) for k in range(1, dim + 1)][:N]
        structure = {}
    M = _unimodular(rng, N)
    fields, structure = _mix(fields, structure, M)
    g = ScalarExpr.const(dim, 1)
    if rng.integers(0, 3):
        g = g + rand_expr(rng, dim, 1, 2, real=True)
    sc = {}
    for (j, k), cs in structure.items():
        new = [g * c for c in cs]
        new[k - 1] = new[k - 1] + apply(fields[j - 1], g)
        new[j - 1] = new[j - 1] - apply(fields[k - 1], g)
        sc[(j, k)] = tuple(new)
    for j in range(1, N + 1):
        for k in range(j + 1, N + 1):
            if (j, k) not in sc:
                new = [ScalarExpr.zero(dim) for _ in range(N)]
                new[k - 1] = apply(fields[j - 1], g)
                new[j - 1] = -apply(fields[k - 1], g)
                sc[(j, k)] = tuple(new)
    fields = [X.scale(g) for X in fields]
    x0 = rand_field(rng, dim, 1)
    return SystemSpec(dim - 1, N, x0, tuple(fields), sc, name="random")


def random_weight(rng, dim, max_deg=2) -> ScalarExpr:
    return rand_expr(rng, dim, max_deg, 3, real=True, nonzero=True)
