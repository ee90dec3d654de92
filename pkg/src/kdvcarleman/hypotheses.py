"""Checks of the standing assumptions on a system of vector fields.

* involutivity of X_1..X_N (exactly, from supplied structure coefficients,
  or pointwise by least squares on a sample grid),
* nondegeneracy of X_1 on a box,
* the Hormander bracket-generating rank at a point.

Failures are report states carrying a witness point, never exceptions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .operators import SystemSpec, VectorField, commutator
from .symbolic import ScalarExpr

__all__ = [
    "Region",
    "InvolutivityResult",
    "NondegeneracyResult",
    "HypothesisReport",
    "verify_involutivity",
    "check_nondegeneracy",
    "hormander_rank",
    "real_bracket",
    "bracket_levels",
    "check_system",
    "INVOLUTIVITY_TOL",
    "NONDEGENERACY_THRESHOLD",
    "RANK_TOL",
]

INVOLUTIVITY_TOL = 1e-8
NONDEGENERACY_THRESHOLD = 1e-9
RANK_TOL = 1e-9

EXACT = "verified-exact"
NUMERIC = "verified-numeric"
FAILED = "failed"


@dataclass(frozen=True)
class Region:
    """Axis-aligned box ``[lo, hi]`` with ``sample_density`` points per axis."""

    lo: tuple
    hi: tuple
    sample_density: int = 5

    def __post_init__(self):
        lo = tuple(Fraction(x) if not isinstance(x, float) else Fraction(x).limit_denominator(10**12)
                   for x in self.lo)
        hi = tuple(Fraction(x) if not isinstance(x, float) else Fraction(x).limit_denominator(10**12)
                   for x in self.hi)
        if len(lo) != len(hi) or not lo:
            raise ValueError("lo and hi must have the same positive length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("need lo < hi on every axis")
        if self.sample_density < 2:
            raise ValueError("sample_density must be >= 2")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, dim: int, half_width=1, sample_density: int = 5) -> "Region":
        return cls((-Fraction(half_width),) * dim, (Fraction(half_width),) * dim, sample_density)

    @classmethod
    def from_flat(cls, values: Sequence, sample_density: int = 5) -> "Region":
        """Parse ``lo1, hi1, lo2, hi2, ...``."""
        values = list(values)
        if len(values) % 2 or not values:
            raise ValueError("box needs an even number of values lo1,hi1,lo2,hi2,...")
        return cls(tuple(values[0::2]), tuple(values[1::2]), sample_density)

    @property
    def dim(self) -> int:
        return len(self.lo)

    def width(self) -> np.ndarray:
        return np.array([float(b - a) for a, b in zip(self.lo, self.hi)])

    def axis_samples(self) -> list[list[Fraction]]:
        n = self.sample_density
        return [[a + (b - a) * Fraction(i, n - 1) for i in range(n)] for a, b in zip(self.lo, self.hi)]

    def sample_array(self) -> np.ndarray:
        """All sample points, shape (count, dim), as floats."""
        axes = [np.array([float(v) for v in ax]) for ax in self.axis_samples()]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def contains(self, other: "Region") -> bool:
        return all(a <= c and d <= b for a, b, c, d in zip(self.lo, self.hi, other.lo, other.hi))

    def to_list(self) -> list[float]:
        out = []
        for a, b in zip(self.lo, self.hi):
            out += [float(a), float(b)]
        return out


def _eval_many(e: ScalarExpr, pts: np.ndarray) -> np.ndarray:
    """Evaluate a polynomial at many float points (rows of ``pts``)."""
    if e.is_zero():
        return np.zeros(len(pts), dtype=complex)
    exps, coeffs = e.monomials()
    out = np.zeros(len(pts), dtype=complex)
    for m, c in zip(exps, coeffs):
        out += c * np.prod(pts ** m, axis=1)
    return out


def _field_values(X: VectorField, pts: np.ndarray) -> np.ndarray:
    """Coefficient vectors at the points, shape (count, dim)."""
    return np.stack([_eval_many(c, pts) for c in X.coeffs], axis=1)


@dataclass
class InvolutivityResult:
    status: str
    max_residual: float = 0.0
    witness: tuple | None = None
    pair: tuple[int, int] | None = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status in (EXACT, NUMERIC)

    def to_dict(self):
        return {
            "status": self.status,
            "max_residual": self.max_residual,
            "witness": None if self.witness is None else [float(x) for x in self.witness],
            "pair": None if self.pair is None else list(self.pair),
            "detail": self.detail,
        }

    def __str__(self):
        s = self.status
        if self.status == NUMERIC:
            s += f" (max residual {self.max_residual:.3e})"
        if self.status == FAILED:
            s += f" at pair {self.pair}, witness {tuple(float(x) for x in self.witness)}, residual {self.max_residual:.3e}"
        return s


def verify_involutivity(S: SystemSpec, region: Region | None = None,
                        tol: float = INVOLUTIVITY_TOL) -> InvolutivityResult:
    """Check ``[X_j, X_k] = sum_l c^{jk}_l X_l`` for all pairs.

    With structure coefficients the residual fields are computed exactly.
    Without them, pointwise least-squares coefficients are fitted at every
    sample of ``region`` (default ``[-1, 1]^dim``); note that this can only
    see failures at sampled points.
    """
    region = region or Region.cube(S.dim)
    pts = region.sample_array()
    N = S.N
    if S.has_structure():
        worst = None
        brackets = {}
        for j, k in itertools.product(range(1, N + 1), repeat=2):
            if (k, j) in brackets:
                br = -brackets[(k, j)]
            else:
                br = commutator(S.field(j), S.field(k))
            brackets[(j, k)] = br
            cs = S.structure_vector(j, k)
            res = br
            for l in range(1, N + 1):
                if not cs[l - 1].is_zero():
                    res = res - S.field(l).scale(cs[l - 1])
            if res.is_zero():
                continue
            vals = np.linalg.norm(_field_values(res, pts), axis=1)
            i = int(np.argmax(vals))
            cand = (float(vals[i]), (j, k), tuple(pts[i]))
            if vals[i] == 0.0:
                # residual vanishes on every sample; search a finer random set
                rng = np.random.default_rng(0)
                lo = np.array([float(a) for a in region.lo])
                hi = np.array([float(b) for b in region.hi])
                extra = lo + (hi - lo) * rng.random((256, S.dim))
                v2 = np.linalg.norm(_field_values(res, extra), axis=1)
                i2 = int(np.argmax(v2))
                cand = (float(v2[i2]), (j, k), tuple(extra[i2]))
            if worst is None or cand[0] > worst[0]:
                worst = cand
        if worst is None:
            return InvolutivityResult(EXACT)
        return InvolutivityResult(FAILED, worst[0], worst[2], worst[1],
                                  "commutator minus claimed combination is not identically zero")

    fields = np.stack([_field_values(S.field(l), pts) for l in range(1, N + 1)], axis=2)  # (P, dim, N)
    worst = (0.0, None, None)
    for j, k in itertools.combinations(range(1, N + 1), 2):
        br = _field_values(commutator(S.field(j), S.field(k)), pts)
        for p in range(len(pts)):
            A, b = fields[p], br[p]
            if not np.any(b):
                continue
            c, *_ = np.linalg.lstsq(A, b, rcond=None)
            r = float(np.linalg.norm(A @ c - b))
            if r > worst[0]:
                worst = (r, (j, k), tuple(pts[p]))
    if worst[0] <= tol:
        return InvolutivityResult(NUMERIC, worst[0])
    return InvolutivityResult(FAILED, worst[0], worst[2], worst[1],
                              "commutator is not a pointwise combination of the fields")


@dataclass
class NondegeneracyResult:
    min_norm: float
    threshold: float
    argmin: tuple
    exact: bool = False
    lipschitz_margin: float = 0.0

    @property
    def ok(self) -> bool:
        return self.min_norm >= self.threshold

    def to_dict(self):
        return {
            "min_norm": self.min_norm,
            "threshold": self.threshold,
            "argmin": [float(x) for x in self.argmin],
            "exact": self.exact,
            "lipschitz_margin": self.lipschitz_margin,
            "nondegenerate": self.ok,
        }

    def __str__(self):
        verdict = "nondegenerate" if self.ok else "degenerate"
        how = "exact" if self.exact else f"sampled, margin {self.lipschitz_margin:.3e}"
        return f"{verdict}: min |X| = {self.min_norm:.6g} at {tuple(float(x) for x in self.argmin)} ({how})"


def check_nondegeneracy(X: VectorField, K: Region,
                        threshold: float = NONDEGENERACY_THRESHOLD) -> NondegeneracyResult:
    """Minimum Euclidean norm of the coefficient vector of ``X`` over samples of K.

    Sampling is not a proof: ``lipschitz_margin`` estimates how far the true
    minimum may sit below the sampled one (gradient bound times half the
    sample spacing).
    """
    if X.dim != K.dim:
        raise ValueError("dimension mismatch between field and region")
    if all(c.is_constant() for c in X.coeffs):
        v = np.array([complex(c.constant_value()) for c in X.coeffs])
        return NondegeneracyResult(float(np.linalg.norm(v)), threshold, tuple(float(a) for a in K.lo), True)
    pts = K.sample_array()
    vals = _field_values(X, pts)
    norms = np.linalg.norm(vals, axis=1)
    i = int(np.argmin(norms))
    grads = np.zeros(len(pts))
    for c in X.coeffs:
        g2 = np.zeros(len(pts))
        for k in range(1, X.dim + 1):
            g2 += np.abs(_eval_many(c.diff(k), pts)) ** 2
        grads += g2
    L = float(np.sqrt(grads.max()))
    h = K.width() / (K.sample_density - 1)
    margin = L * float(np.linalg.norm(h)) / 2
    return NondegeneracyResult(float(norms[i]), threshold, tuple(pts[i]), False, margin)


def real_bracket(V: Sequence[ScalarExpr], W: Sequence[ScalarExpr]) -> tuple[ScalarExpr, ...]:
    """Lie bracket of real fields given by d/dx coefficient lists."""
    dim = len(V)
    out = []
    for k in range(dim):
        acc = ScalarExpr.zero(V[0].dim)
        for l in range(dim):
            if not V[l].is_zero():
                acc = acc + V[l] * W[k].diff(l + 1)
            if not W[l].is_zero():
                acc = acc - W[l] * V[k].diff(l + 1)
        out.append(acc)
    return tuple(out)


def _exact_rank(rows: list[list[Fraction]]) -> int:
    m = [list(r) for r in rows]
    rank = 0
    ncols = len(m[0]) if m else 0
    for col in range(ncols):
        piv = next((r for r in range(rank, len(m)) if m[r][col] != 0), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        for r in range(len(m)):
            if r != rank and m[r][col] != 0:
                f = m[r][col] / m[rank][col]
                m[r] = [a - f * b for a, b in zip(m[r], m[rank])]
        rank += 1
    return rank


def _rank_at(vectors, p) -> int:
    if not vectors:
        return 0
    exact = all(isinstance(x, (int, Fraction)) and not isinstance(x, bool) for x in p)
    if exact:
        rows = []
        for V in vectors:
            row = []
            for c in V:
                g = c.eval(p)
                row.append(g.re)  # real fields: imaginary parts are zero
            rows.append(row)
        return _exact_rank(rows)
    pts = np.array([[float(x) for x in p]])
    M = np.array([[ _eval_many(c, pts)[0].real for c in V] for V in vectors])
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > RANK_TOL * max(1.0, s[0])))


def bracket_levels(fields: Sequence[VectorField], max_len: int,
                   max_brackets: int = 4096) -> list[list[tuple[ScalarExpr, ...]]]:
    """Real coefficient vectors of the fields (level 1) and their brackets up to ``max_len``.

    Works with the real fields iX_j, whose d/dx coefficients are the
    D-coefficients of X_j.  Level m holds ``[X_i, B]`` for B in level m - 1;
    identically zero and repeated brackets are dropped.
    """
    base = [tuple(F.coeffs) for F in fields]
    levels = [[V for V in base if not all(c.is_zero() for c in V)]]
    seen = set(levels[0])
    for _ in range(2, max_len + 1):
        nxt = []
        for V in base:
            for B in levels[-1]:
                C = real_bracket(V, B)
                if all(c.is_zero() for c in C) or C in seen or tuple(-c for c in C) in seen:
                    continue
                seen.add(C)
                nxt.append(C)
                if len(seen) > max_brackets:
                    break
        levels.append(nxt)
        if not nxt:
            break
    return levels


def _rank_from_levels(levels, p, dim) -> int | None:
    span = []
    for r, level in enumerate(levels, start=1):
        span.extend(level)
        if span and _rank_at(span, p) == dim:
            return r
    return None


def hormander_rank(source: SystemSpec | Sequence[VectorField], p: Sequence,
                   max_len: int = 4) -> int | None:
    """Smallest bracket length r <= max_len at which the fields span R^dim at ``p``.

    Exact rank when every coordinate of ``p`` is an int or Fraction,
    singular-value threshold otherwise.  ``None`` if the span stays short.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    fields = list(source.fields) if isinstance(source, SystemSpec) else list(source)
    dim = fields[0].dim
    if len(p) != dim:
        raise ValueError("point has the wrong dimension")
    return _rank_from_levels(bracket_levels(fields, max_len), p, dim)


def _ranks_on_samples(fields, pts: np.ndarray, max_len: int) -> list[int | None]:
    dim = fields[0].dim
    levels = bracket_levels(fields, max_len)
    vals = [np.stack([np.stack([_eval_many(c, pts).real for c in V], axis=1) for V in level], axis=1)
            if level else np.zeros((len(pts), 0, dim)) for level in levels]
    out = []
    for i in range(len(pts)):
        found = None
        rows = np.zeros((0, dim))
        for r, v in enumerate(vals, start=1):
            rows = np.vstack([rows, v[i]])
            if len(rows):
                s = np.linalg.svd(rows, compute_uv=False)
                if int(np.sum(s > RANK_TOL * max(1.0, s[0]))) == dim:
                    found = r
                    break
        out.append(found)
    return out


@dataclass
class HypothesisReport:
    involutive: InvolutivityResult
    nondegenerate: NondegeneracyResult
    hormander_rank: int | None
    max_len: int
    rank_points: int = 1
    notes: list[str] = field(default_factory=list)

    def passed(self, require_rank: int | None = None) -> bool:
        ok = self.involutive.ok and self.nondegenerate.ok
        if require_rank is not None:
            ok = ok and self.hormander_rank == require_rank
        return ok

    def to_dict(self):
        return {
            "involutive": self.involutive.to_dict(),
            "nondegenerate": self.nondegenerate.to_dict(),
            "hormander_rank": self.hormander_rank,
            "hormander_rank_text": (str(self.hormander_rank) if self.hormander_rank is not None
                                    else f"not satisfied up to length {self.max_len}"),
            "notes": list(self.notes),
        }

    def render(self) -> str:
        rank = (str(self.hormander_rank) if self.hormander_rank is not None
                else f"not satisfied up to length {self.max_len}")
        lines = [
            f"involutivity:   {self.involutive}",
            f"nondegeneracy:  {self.nondegenerate}",
            f"hormander rank: {rank} (checked at {self.rank_points} point(s))",
        ]
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines)


def check_system(S: SystemSpec, K: Region | None = None, max_len: int = 4,
                 tol: float = INVOLUTIVITY_TOL, threshold: float = NONDEGENERACY_THRESHOLD) -> HypothesisReport:
    """Run all three checks; the rank is the worst (largest or None) over K's samples."""
    K = K or Region.cube(S.dim)
    inv = verify_involutivity(S, K, tol)
    nd = check_nondegeneracy(S.field(1), K, threshold)
    ranks = _ranks_on_samples(list(S.fields), K.sample_array(), max_len)
    if any(r is None for r in ranks):
        rank = None
    else:
        rank = max(ranks)
    rep = HypothesisReport(inv, nd, rank, max_len, len(ranks))
    if inv.ok and rank is not None and rank > 1:
        rep.notes.append("involutive system whose brackets enlarge the pointwise span")
    return rep
