"""Vector fields and normal-form differential operators.

Conventions
-----------
* ``D_k = -i d/dx_k``.  A vector field is ``X = sum_k a_k D_k``; the real
  field is ``iX = sum_k a_k d/dx_k``, so ``iX`` is real iff every ``a_k`` is.
* A :class:`DiffOp` is stored in normal form ``sum_alpha c_alpha(x) D^alpha``
  with every coefficient to the left of the derivatives.
* Functions applied by an operator are written ``(A g)`` in the formulas
  below: the zeroth-order result of letting ``A`` act on the function ``g``
  (see :meth:`DiffOp.apply_to`).
* Structure coefficients ``c^{jk}_l`` are defined by
  ``[X_j, X_k] = sum_l c^{jk}_l X_l`` with 1-based ``j, k, l``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb
from typing import Mapping, Sequence

from .symbolic import (
    IMAGINARY,
    REAL,
    ZERO,
    GaussianRational,
    ScalarExpr,
    classify_reality,
)

__all__ = [
    "VectorField",
    "DiffOp",
    "LambdaOp",
    "SystemSpec",
    "CarlemanDecomposition",
    "MissingStructureCoefficients",
    "NonRealWeightError",
    "apply",
    "divergence_term",
    "adjoint",
    "compose",
    "commutator",
    "op_commutator",
    "build_p1",
    "build_p1_star",
    "conjugate",
    "weighted_conjugate",
    "carleman_decomposition",
    "build_cprime",
    "build_cdoubleprime",
    "build_qj",
    "build_qj_prime",
    "build_qj_prime_expanded",
]

I = GaussianRational(0, 1)
MINUS_I = GaussianRational(0, -1)
HALF_I = GaussianRational(0, Fraction(1, 2))


class MissingStructureCoefficients(ValueError):
    """A construction needed c^{jk}_l for a pair the system does not supply."""


class NonRealWeightError(ValueError):
    """The Carleman weight must be a real-valued polynomial."""


def _check_dim(a: int, b: int):
    if a != b:
        raise ValueError(f"dimension mismatch: {a} vs {b}")


# ---------------------------------------------------------------------------
# vector fields
# ---------------------------------------------------------------------------


class VectorField:
    """First-order field ``sum_k a_k D_k``."""

    __slots__ = ("dim", "coeffs")

    def __init__(self, coeffs: Sequence[ScalarExpr | int]):
        coeffs = list(coeffs)
        if not coeffs:
            raise ValueError("a vector field needs at least one coefficient")
        dims = {c.dim for c in coeffs if isinstance(c, ScalarExpr)}
        if len(dims) > 1:
            raise ValueError(f"coefficients live in different dimensions: {sorted(dims)}")
        dim = dims.pop() if dims else len(coeffs)
        if dim != len(coeffs):
            raise ValueError(f"{len(coeffs)} coefficients for dimension {dim}")
        self.dim = dim
        self.coeffs = tuple(c if isinstance(c, ScalarExpr) else ScalarExpr.const(dim, c)
                            for c in coeffs)

    @classmethod
    def zero(cls, dim: int) -> "VectorField":
        return cls([ScalarExpr.zero(dim)] * dim)

    @classmethod
    def coordinate(cls, dim: int, k: int) -> "VectorField":
        """The constant field ``D_k``."""
        return cls([ScalarExpr.const(dim, 1 if i == k else 0) for i in range(1, dim + 1)])

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.coeffs)

    def is_real(self) -> bool:
        return all(classify_reality(c) in (REAL, ZERO) for c in self.coeffs)

    def as_diffop(self) -> "DiffOp":
        terms = {}
        for k, c in enumerate(self.coeffs):
            if not c.is_zero():
                alpha = tuple(1 if i == k else 0 for i in range(self.dim))
                terms[alpha] = c
        return DiffOp(self.dim, terms)

    def adjoint_op(self) -> "DiffOp":
        """``X* = X + d`` for real fields; computed as a formal adjoint in general."""
        return adjoint(self.as_diffop())

    def __add__(self, other: "VectorField") -> "VectorField":
        _check_dim(self.dim, other.dim)
        return VectorField([a + b for a, b in zip(self.coeffs, other.coeffs)])

    def __sub__(self, other: "VectorField") -> "VectorField":
        _check_dim(self.dim, other.dim)
        return VectorField([a - b for a, b in zip(self.coeffs, other.coeffs)])

    def __neg__(self):
        return VectorField([-a for a in self.coeffs])

    def scale(self, g) -> "VectorField":
        """Pointwise multiple ``g X`` (g a ScalarExpr or number)."""
        return VectorField([c * g for c in self.coeffs])

    def embed(self, dim: int, axes: Sequence[int]) -> "VectorField":
        out = [ScalarExpr.zero(dim) for _ in range(dim)]
        for c, a in zip(self.coeffs, axes):
            out[a - 1] = c.embed(dim, axes) if c.dim != dim else c
        return VectorField(out)

    def __eq__(self, other):
        if not isinstance(other, VectorField):
            return NotImplemented
        return self.coeffs == other.coeffs

    def __hash__(self):
        return hash(self.coeffs)

    def __repr__(self):
        return "VectorField(" + ", ".join(str(c) for c in self.coeffs) + ")"


def apply(X: VectorField, e: ScalarExpr) -> ScalarExpr:
    """``X e = sum_k a_k (-i) d e/dx_k``."""
    _check_dim(X.dim, e.dim)
    total = ScalarExpr.zero(e.dim)
    for k, a in enumerate(X.coeffs, start=1):
        if not a.is_zero():
            de = e.diff(k)
            if not de.is_zero():
                total = total + a * de
    return total * MINUS_I


def divergence_term(X: VectorField) -> ScalarExpr:
    """``d = sum_k D_k a_k``, so that ``X* = X + d`` for real fields."""
    total = ScalarExpr.zero(X.dim)
    for k, a in enumerate(X.coeffs, start=1):
        total = total + a.diff(k)
    return total * MINUS_I


def commutator(X: VectorField, Y: VectorField) -> VectorField:
    """``[X, Y] = XY - YX`` as a vector field, computed through normal-form composition."""
    _check_dim(X.dim, Y.dim)
    A, B = X.as_diffop(), Y.as_diffop()
    C = compose(A, B) - compose(B, A)
    if C.order() > 1:
        raise AssertionError("second-order part of a vector-field commutator did not cancel")
    zero_alpha = (0,) * X.dim
    if not C.terms.get(zero_alpha, ScalarExpr.zero(X.dim)).is_zero():
        raise AssertionError("zeroth-order part of a vector-field commutator did not cancel")
    coeffs = []
    for k in range(X.dim):
        alpha = tuple(1 if i == k else 0 for i in range(X.dim))
        coeffs.append(C.terms.get(alpha, ScalarExpr.zero(X.dim)))
    return VectorField(coeffs)


# ---------------------------------------------------------------------------
# differential operators
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _sub_indices(alpha: tuple[int, ...]):
    """All (gamma, multinomial(alpha, gamma)) with gamma <= alpha."""
    out = [((), 1)]
    for a in alpha:
        out = [(g + (c,), w * comb(a, c)) for g, w in out for c in range(a + 1)]
    return tuple(out)


_NEG_I_POW = (GaussianRational(1), MINUS_I, GaussianRational(-1), I)


def _d_alpha(e: ScalarExpr, gamma: tuple[int, ...]) -> ScalarExpr:
    """``D^gamma e`` with ``D = -i d``."""
    out = e
    for k, g in enumerate(gamma, start=1):
        for _ in range(g):
            out = out.diff(k)
            if out.is_zero():
                return out
    return out * _NEG_I_POW[sum(gamma) % 4]


class DiffOp:
    """Normal-form operator ``sum_alpha c_alpha(x) D^alpha``.

    ``A @ B`` composes, ``+``/``-`` add, ``g * A`` multiplies by a function
    on the left.  Values are immutable; equality is term-map equality.
    """

    __slots__ = ("dim", "_terms", "_hash")

    def __init__(self, dim: int, terms: Mapping[Sequence[int], ScalarExpr] | None = None):
        self.dim = int(dim)
        clean: dict[tuple[int, ...], ScalarExpr] = {}
        for alpha, c in (terms or {}).items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != dim or any(a < 0 for a in alpha):
                raise ValueError(f"bad derivative multi-index {alpha}")
            if not isinstance(c, ScalarExpr):
                c = ScalarExpr.const(dim, c)
            _check_dim(c.dim, dim)
            if alpha in clean:
                c = clean[alpha] + c
            if c.is_zero():
                clean.pop(alpha, None)
            else:
                clean[alpha] = c
        self._terms = clean
        self._hash = None

    @classmethod
    def _raw(cls, dim, terms):
        obj = cls.__new__(cls)
        obj.dim = dim
        obj._terms = terms
        obj._hash = None
        return obj

    @classmethod
    def zero(cls, dim: int) -> "DiffOp":
        return cls._raw(dim, {})

    @classmethod
    def identity(cls, dim: int) -> "DiffOp":
        return cls.multiplication(ScalarExpr.const(dim, 1))

    @classmethod
    def multiplication(cls, g: ScalarExpr) -> "DiffOp":
        return cls(g.dim, {(0,) * g.dim: g})

    @classmethod
    def derivative(cls, dim: int, alpha: Sequence[int]) -> "DiffOp":
        """The constant-coefficient monomial ``D^alpha``."""
        return cls(dim, {tuple(alpha): ScalarExpr.const(dim, 1)})

    @property
    def terms(self) -> dict[tuple[int, ...], ScalarExpr]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self):
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def order(self) -> int:
        return max((sum(a) for a in self._terms), default=-1)

    def term_count(self) -> int:
        """Number of (alpha, monomial) pairs; used to size residual reports."""
        return sum(len(c) for c in self._terms.values())

    def _coerce(self, other) -> "DiffOp":
        if isinstance(other, DiffOp):
            _check_dim(self.dim, other.dim)
            return other
        if isinstance(other, VectorField):
            return other.as_diffop()
        if isinstance(other, ScalarExpr):
            return DiffOp.multiplication(other)
        return DiffOp.multiplication(ScalarExpr.const(self.dim, other))

    def __add__(self, other):
        o = self._coerce(other)
        out = dict(self._terms)
        for a, c in o._terms.items():
            s = out.get(a)
            s = c if s is None else s + c
            if s.is_zero():
                out.pop(a, None)
            else:
                out[a] = s
        return DiffOp._raw(self.dim, out)

    __radd__ = __add__

    def __neg__(self):
        return DiffOp._raw(self.dim, {a: -c for a, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __rmul__(self, g):
        """Left multiplication by a function or constant: ``(g * A) u = g (A u)``."""
        if isinstance(g, ScalarExpr):
            _check_dim(g.dim, self.dim)
        out = {}
        for a, c in self._terms.items():
            p = c * g
            if not p.is_zero():
                out[a] = p
        return DiffOp._raw(self.dim, out)

    def __mul__(self, g):
        # A * g with g a scalar constant only; composition is ``@``
        if isinstance(g, ScalarExpr):
            raise TypeError("use `A @ DiffOp.multiplication(g)` to compose with a function")
        return self.__rmul__(g)

    def __matmul__(self, other):
        return compose(self, self._coerce(other))

    def __rmatmul__(self, other):
        return compose(self._coerce(other), self)

    def __eq__(self, other):
        if not isinstance(other, DiffOp):
            return NotImplemented
        return self.dim == other.dim and self._terms == other._terms

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.dim, frozenset(self._terms.items())))
        return self._hash

    def apply_to(self, e: ScalarExpr) -> ScalarExpr:
        """Let the operator act on the polynomial ``e``."""
        _check_dim(self.dim, e.dim)
        total = ScalarExpr.zero(self.dim)
        for alpha, c in self._terms.items():
            de = _d_alpha(e, alpha)
            if not de.is_zero():
                total = total + c * de
        return total

    def adjoint(self) -> "DiffOp":
        return adjoint(self)

    def coefficient(self, alpha: Sequence[int]) -> ScalarExpr:
        return self._terms.get(tuple(alpha), ScalarExpr.zero(self.dim))

    def graded(self) -> dict[int, "DiffOp"]:
        """Split by homogeneous order ``|alpha|``."""
        out: dict[int, dict] = {}
        for a, c in self._terms.items():
            out.setdefault(sum(a), {})[a] = c
        return {k: DiffOp._raw(self.dim, v) for k, v in sorted(out.items())}

    def __repr__(self):
        return f"DiffOp({self.dim}, {str(self)!r})"

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for alpha in sorted(self._terms, key=lambda a: (-sum(a), tuple(-x for x in a))):
            c = self._terms[alpha]
            d = "*".join(f"D{k + 1}" if e == 1 else f"D{k + 1}^{e}" for k, e in enumerate(alpha) if e)
            cs = str(c)
            if not d:
                parts.append(cs if len(c) == 1 else f"({cs})")
            elif cs == "1":
                parts.append(d)
            else:
                parts.append(f"({cs})*{d}")
        return " + ".join(parts)


def compose(A: DiffOp, B: DiffOp) -> DiffOp:
    """Normal form of ``A o B`` via the Leibniz rule

    ``D^alpha (b D^beta) = sum_{gamma <= alpha} C(alpha, gamma) (D^gamma b) D^(alpha - gamma + beta)``.
    """
    _check_dim(A.dim, B.dim)
    dim = A.dim
    acc: dict[tuple[int, ...], ScalarExpr] = {}
    dcache: dict[tuple, ScalarExpr] = {}
    for alpha, a in A.items():
        subs = _sub_indices(alpha)
        for beta, b in B.items():
            for gamma, w in subs:
                key = (beta, gamma)
                db = dcache.get(key)
                if db is None:
                    db = _d_alpha(b, gamma)
                    dcache[key] = db
                if db.is_zero():
                    continue
                res = tuple(x - g + y for x, g, y in zip(alpha, gamma, beta))
                term = a * db
                if w != 1:
                    term = term * w
                prev = acc.get(res)
                acc[res] = term if prev is None else prev + term
    return DiffOp._raw(dim, {k: v for k, v in acc.items() if not v.is_zero()})


def adjoint(A: DiffOp) -> DiffOp:
    """Formal adjoint for the pairing ``(u, v) = int u conj(v)``.

    ``(c D^alpha)* = D^alpha o conj(c)``, expanded into normal form.
    """
    out = DiffOp.zero(A.dim)
    for alpha, c in A.items():
        out = out + compose(DiffOp.derivative(A.dim, alpha), DiffOp.multiplication(c.conjugate()))
    return out


def op_commutator(A: DiffOp, B: DiffOp) -> DiffOp:
    return compose(A, B) - compose(B, A)


# ---------------------------------------------------------------------------
# lambda-polynomials of operators
# ---------------------------------------------------------------------------


class LambdaOp:
    """``sum_p lambda^p A_p`` with ``A_p`` differential operators.

    ``lambda`` is a formal symbol, so identities can be compared one power at
    a time.
    """

    __slots__ = ("dim", "coeff_ops")

    def __init__(self, coeff_ops: Sequence[DiffOp], dim: int | None = None):
        ops = list(coeff_ops)
        if dim is None:
            if not ops:
                raise ValueError("need dim for an empty LambdaOp")
            dim = ops[0].dim
        for op in ops:
            _check_dim(op.dim, dim)
        while ops and ops[-1].is_zero():
            ops.pop()
        self.dim = dim
        self.coeff_ops = tuple(ops)

    @classmethod
    def constant(cls, A: DiffOp) -> "LambdaOp":
        return cls([A], A.dim)

    @classmethod
    def monomial(cls, A: DiffOp, power: int) -> "LambdaOp":
        """``lambda^power * A``."""
        return cls([DiffOp.zero(A.dim)] * power + [A], A.dim)

    @classmethod
    def zero(cls, dim: int) -> "LambdaOp":
        return cls([], dim)

    def degree(self) -> int:
        return len(self.coeff_ops) - 1

    def order(self) -> int:
        return max((A.order() for A in self.coeff_ops), default=-1)

    def at_power(self, p: int) -> DiffOp:
        if 0 <= p < len(self.coeff_ops):
            return self.coeff_ops[p]
        return DiffOp.zero(self.dim)

    def is_zero(self) -> bool:
        return not self.coeff_ops

    def _coerce(self, other) -> "LambdaOp":
        if isinstance(other, LambdaOp):
            _check_dim(self.dim, other.dim)
            return other
        if isinstance(other, DiffOp):
            return LambdaOp.constant(other)
        raise TypeError(f"cannot combine LambdaOp with {type(other).__name__}")

    def __add__(self, other):
        o = self._coerce(other)
        n = max(len(self.coeff_ops), len(o.coeff_ops))
        return LambdaOp([self.at_power(p) + o.at_power(p) for p in range(n)], self.dim)

    __radd__ = __add__

    def __neg__(self):
        return LambdaOp([-A for A in self.coeff_ops], self.dim)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __rmul__(self, g):
        """Left multiplication by a function or constant (lambda-independent)."""
        return LambdaOp([g * A for A in self.coeff_ops], self.dim)

    def times_lambda(self, k: int = 1) -> "LambdaOp":
        return LambdaOp([DiffOp.zero(self.dim)] * k + list(self.coeff_ops), self.dim)

    def __matmul__(self, other):
        o = self._coerce(other)
        if self.is_zero() or o.is_zero():
            return LambdaOp.zero(self.dim)
        out = [DiffOp.zero(self.dim)] * (len(self.coeff_ops) + len(o.coeff_ops) - 1)
        for p, A in enumerate(self.coeff_ops):
            if A.is_zero():
                continue
            for q, B in enumerate(o.coeff_ops):
                if not B.is_zero():
                    out[p + q] = out[p + q] + compose(A, B)
        return LambdaOp(out, self.dim)

    def __rmatmul__(self, other):
        return self._coerce(other) @ self

    def at(self, lam) -> DiffOp:
        """Substitute a number for lambda (exact for rationals)."""
        out = DiffOp.zero(self.dim)
        g = GaussianRational.coerce(lam)
        w = GaussianRational(1)
        for A in self.coeff_ops:
            out = out + w * A
            w = w * g
        return out

    def __eq__(self, other):
        if isinstance(other, DiffOp):
            other = LambdaOp.constant(other)
        if not isinstance(other, LambdaOp):
            return NotImplemented
        return self.dim == other.dim and self.coeff_ops == other.coeff_ops

    def __hash__(self):
        return hash(self.coeff_ops)

    def __repr__(self):
        return f"LambdaOp({str(self)!r})"

    def __str__(self):
        if self.is_zero():
            return "0"
        parts = []
        for p, A in enumerate(self.coeff_ops):
            if A.is_zero():
                continue
            lam = "" if p == 0 else ("lambda*" if p == 1 else f"lambda^{p}*")
            parts.append(f"{lam}[{A}]")
        return " + ".join(parts)


# ---------------------------------------------------------------------------
# systems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SystemSpec:
    """The data ``(n, N, X_0, X_1..X_N, c^{jk}_l)`` of one operator instance.

    ``structure_coeffs`` maps 1-based pairs ``(j, k)`` to the N coefficients
    of ``[X_j, X_k]`` in the basis ``X_1..X_N``.  Missing pairs are filled by
    antisymmetry when the reversed pair is present, and ``(j, j)`` is zero.
    """

    n: int
    N: int
    x0: VectorField
    fields: tuple[VectorField, ...]
    structure_coeffs: Mapping[tuple[int, int], tuple[ScalarExpr, ...]] | None = None
    name: str = ""
    axis_labels: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        dim = self.n + 1
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 1 <= self.N <= dim:
            raise ValueError(f"need 1 <= N <= n+1, got N={self.N}, n+1={dim}")
        if len(self.fields) != self.N:
            raise ValueError(f"expected {self.N} fields, got {len(self.fields)}")
        for j, X in enumerate((self.x0,) + self.fields):
            if X.dim != dim:
                raise ValueError(f"X{j} has dimension {X.dim}, expected {dim}")
            if not X.is_real():
                raise ValueError(f"iX{j} is not a real vector field")
        if self.structure_coeffs is not None:
            sc = {}
            for (j, k), cs in self.structure_coeffs.items():
                if not (1 <= j <= self.N and 1 <= k <= self.N):
                    raise ValueError(f"structure pair ({j},{k}) out of range")
                cs = tuple(c if isinstance(c, ScalarExpr) else ScalarExpr.const(dim, c) for c in cs)
                if len(cs) != self.N:
                    raise ValueError(f"pair ({j},{k}) needs {self.N} coefficients")
                for c in cs:
                    if classify_reality(c) not in (IMAGINARY, ZERO):
                        raise ValueError(f"structure coefficient of ({j},{k}) is not imaginary-valued: {c}")
                sc[(j, k)] = cs
            object.__setattr__(self, "structure_coeffs", sc)
        if not self.axis_labels:
            object.__setattr__(self, "axis_labels", tuple(f"x{k}" for k in range(1, dim + 1)))

    @property
    def dim(self) -> int:
        return self.n + 1

    def field(self, j: int) -> VectorField:
        """X_j with X_0 the first-order term."""
        return self.x0 if j == 0 else self.fields[j - 1]

    def d(self, j: int) -> ScalarExpr:
        return divergence_term(self.field(j))

    def star(self, j: int) -> DiffOp:
        """``X_j* = X_j + d_j``."""
        return self.field(j).as_diffop() + DiffOp.multiplication(self.d(j))

    def op(self, j: int) -> DiffOp:
        return self.field(j).as_diffop()

    def has_structure(self) -> bool:
        return self.structure_coeffs is not None

    def c(self, j: int, k: int, l: int) -> ScalarExpr:
        """``c^{jk}_l``."""
        return self.structure_vector(j, k)[l - 1]

    def structure_vector(self, j: int, k: int) -> tuple[ScalarExpr, ...]:
        if self.structure_coeffs is None:
            raise MissingStructureCoefficients(
                f"system {self.name or '<unnamed>'} has no structure coefficients")
        sc = self.structure_coeffs
        if (j, k) in sc:
            return sc[(j, k)]
        if (k, j) in sc:
            return tuple(-c for c in sc[(k, j)])
        if j == k:
            return tuple(ScalarExpr.zero(self.dim) for _ in range(self.N))
        raise MissingStructureCoefficients(f"missing structure coefficients for pair ({j},{k})")

    def with_x0(self, x0: VectorField) -> "SystemSpec":
        return SystemSpec(self.n, self.N, x0, self.fields, self.structure_coeffs,
                          self.name, self.axis_labels)


# ---------------------------------------------------------------------------
# builders for the named operators
# ---------------------------------------------------------------------------


def _fn(A: DiffOp | VectorField, g: ScalarExpr) -> ScalarExpr:
    """``(A g)``: the function obtained by letting A act on g."""
    if isinstance(A, VectorField):
        return apply(A, g)
    return A.apply_to(g)


def _mul(g: ScalarExpr) -> DiffOp:
    return DiffOp.multiplication(g)


def _sum_sq(S: SystemSpec) -> DiffOp:
    total = DiffOp.zero(S.dim)
    for j in range(1, S.N + 1):
        total = total + S.star(j) @ S.op(j)
    return total


def build_p1(S: SystemSpec) -> DiffOp:
    """``P1 = X_1 sum_j X_j* X_j + X_0``."""
    return S.op(1) @ _sum_sq(S) + S.op(0)


def build_p1_star(S: SystemSpec) -> DiffOp:
    """``P1* = sum_j X_j* X_j X_1* + X_0*``, built from the factors (not via :func:`adjoint`)."""
    return _sum_sq(S) @ S.star(1) + S.star(0)


def _require_real(f: ScalarExpr):
    if classify_reality(f) not in (REAL, ZERO):
        raise NonRealWeightError(f"weight must be real-valued, got {f}")


def conjugate(A: DiffOp, f: ScalarExpr) -> LambdaOp:
    """``A(x, D + lambda Df)`` as an exact lambda-polynomial.

    Each ``D_k`` is replaced by ``D_k + lambda (D_k f)``.  This is the
    operator ``e^{-lambda f} A e^{lambda f}``; the Carleman weight
    ``e^{lambda f} A e^{-lambda f}`` is :func:`weighted_conjugate`.
    """
    _check_dim(A.dim, f.dim)
    _require_real(f)
    dim = A.dim
    factors = []
    for k in range(1, dim + 1):
        Dk = DiffOp.derivative(dim, tuple(1 if i == k else 0 for i in range(1, dim + 1)))
        gk = f.diff(k) * MINUS_I
        factors.append(LambdaOp([Dk, _mul(gk)], dim))
    powers: dict[tuple[int, int], LambdaOp] = {}

    def fpow(k, e):
        if e == 0:
            return LambdaOp.constant(DiffOp.identity(dim))
        key = (k, e)
        if key not in powers:
            powers[key] = fpow(k, e - 1) @ factors[k]
        return powers[key]

    total = LambdaOp.zero(dim)
    for alpha, c in A.items():
        term = LambdaOp.constant(_mul(c))
        for k, e in enumerate(alpha):
            if e:
                term = term @ fpow(k, e)
        total = total + term
    return total


def weighted_conjugate(A: DiffOp, f: ScalarExpr) -> LambdaOp:
    """``e^{lambda f} A e^{-lambda f} = A(x, D - lambda Df)``."""
    return conjugate(A, -f)


@dataclass(frozen=True)
class CarlemanDecomposition:
    base: DiffOp
    l2: LambdaOp
    l1: LambdaOp
    l0: LambdaOp

    def total(self) -> LambdaOp:
        return LambdaOp.constant(self.base) + self.l2 + self.l1 + self.l0


def carleman_decomposition(S: SystemSpec, f: ScalarExpr) -> CarlemanDecomposition:
    """``L_2, L_1, L_0`` transcribed term by term from their displayed formulas.

    L_2 = lam (X_1 f) sum_j X_j* X_j
    L_1 = sum_j [lam d_j (X_j f) + lam (X_j^2 f) - lam^2 (X_j f)^2] X_1
    L_0 = sum_j [lam (X_1 d_j)(X_j f) + lam d_j (X_1 X_j f) + lam (X_1 X_j^2 f)
                 - 2 lam^2 (X_j f)(X_1 X_j f)
                 + (X_1 f)(lam^2 d_j (X_j f) + lam^2 (X_j^2 f) + lam^3 (i X_j f)^2)]
          + lam (X_0 f)

    No attempt is made to check that these add up to the conjugated
    operator; see :mod:`kdvcarleman.identities`.
    """
    _check_dim(S.dim, f.dim)
    _require_real(f)
    dim = S.dim
    X1 = S.field(1)
    x1f = apply(X1, f)
    zero = DiffOp.zero(dim)

    l2 = LambdaOp([zero, x1f * _sum_sq(S)], dim)

    l1_1 = ScalarExpr.zero(dim)
    l1_2 = ScalarExpr.zero(dim)
    l0 = [ScalarExpr.zero(dim) for _ in range(4)]
    for j in range(1, S.N + 1):
        Xj = S.field(j)
        dj = S.d(j)
        xjf = apply(Xj, f)
        xj2f = apply(Xj, xjf)
        l1_1 = l1_1 + dj * xjf + xj2f
        l1_2 = l1_2 - xjf * xjf
        l0[1] = l0[1] + apply(X1, dj) * xjf + dj * apply(X1, xjf) + apply(X1, xj2f)
        l0[2] = l0[2] - 2 * xjf * apply(X1, xjf) + x1f * (dj * xjf + xj2f)
        ixjf = xjf * I
        l0[3] = l0[3] + x1f * ixjf * ixjf
    l0[1] = l0[1] + apply(S.x0, f)
    X1op = S.op(1)
    l1 = LambdaOp([zero, l1_1 * X1op, l1_2 * X1op], dim)
    l0op = LambdaOp([_mul(g) for g in l0], dim)
    return CarlemanDecomposition(build_p1(S), l2, l1, l0op)


def _require_structure(S: SystemSpec):
    if not S.has_structure():
        raise MissingStructureCoefficients(
            f"system {S.name or '<unnamed>'}: structure coefficients required")


def build_cprime(S: SystemSpec, j: int) -> ScalarExpr:
    """``c'_j = sum_k (sum_l c^{lk}_j + (X_k c^{k1}_j) + d_k c^{k1}_j - 2 d_k c^{j1}_k)``.

    ``c^{lk}_j`` is read as the X_j-coefficient of ``[X_l, X_k]``.
    """
    _require_structure(S)
    total = ScalarExpr.zero(S.dim)
    for k in range(1, S.N + 1):
        for l in range(1, S.N + 1):
            total = total + S.c(l, k, j)
        ck1j = S.c(k, 1, j)
        total = total + apply(S.field(k), ck1j) + S.d(k) * ck1j - 2 * S.d(k) * S.c(j, 1, k)
    return total


def build_cdoubleprime(S: SystemSpec, j: int) -> ScalarExpr:
    """``c''_j = sum_k ((X_k c^{j1}_k) + (X_k* c^{j1}_k) + (X_k c^{k1}_j) + (X_k* c^{k1}_j))``."""
    _require_structure(S)
    total = ScalarExpr.zero(S.dim)
    for k in range(1, S.N + 1):
        Xk, Xks = S.field(k), S.star(k)
        a, b = S.c(j, 1, k), S.c(k, 1, j)
        total = total + apply(Xk, a) + Xks.apply_to(a) + apply(Xk, b) + Xks.apply_to(b)
    return total


def _qj_tail(S: SystemSpec, j: int, cp: ScalarExpr) -> ScalarExpr:
    """``c - (X_1 d_j) + 2 (X_j d_1) + d_1 d_j`` for the supplied leading scalar c."""
    d1, dj = S.d(1), S.d(j)
    return cp - apply(S.field(1), dj) + 2 * apply(S.field(j), d1) + d1 * dj


def build_qj(S: SystemSpec, f: ScalarExpr, j: int) -> LambdaOp:
    """``Q_j`` exactly as displayed::

        (lam(-i X_1 f) + i d_1/2) X_j* X_j + sum_k i c^{j1}_k X_k* X_j
        - i lam (X_j X_1 f) X_j + i/2 (c'_j - (X_1 d_j) + 2 (X_j d_1) + d_1 d_j) X_j
    """
    _require_structure(S)
    _require_real(f)
    dim = S.dim
    Xj, Xjs = S.op(j), S.star(j)
    x1f = apply(S.field(1), f)
    d1 = S.d(1)
    sq = Xjs @ Xj

    p0 = (d1 * HALF_I) * sq
    for k in range(1, S.N + 1):
        p0 = p0 + (S.c(j, 1, k) * I) * (S.star(k) @ Xj)
    p0 = p0 + (_qj_tail(S, j, build_cprime(S, j)) * HALF_I) * Xj

    p1 = (x1f * MINUS_I) * sq - (apply(S.field(j), x1f) * I) * Xj
    return LambdaOp([p0, p1], dim)


def build_qj_prime(S: SystemSpec, f: ScalarExpr, j: int) -> LambdaOp:
    """``Q'_j = Q_j - i sum_k c^{j1}_k (X_j* X_k + X_k* X_j) - i c''_j X_j``."""
    Q = build_qj(S, f, j)
    Xj, Xjs = S.op(j), S.star(j)
    corr = DiffOp.zero(S.dim)
    for k in range(1, S.N + 1):
        corr = corr + (S.c(j, 1, k) * I) * (Xjs @ S.op(k) + S.star(k) @ Xj)
    corr = corr + (build_cdoubleprime(S, j) * I) * Xj
    return Q - LambdaOp.constant(corr)


def build_qj_prime_expanded(S: SystemSpec, f: ScalarExpr, j: int) -> LambdaOp:
    """The second, expanded display of ``Q'_j``::

        (lam(-i X_1 f) + i d_1/2) X_j* X_j - sum_k i c^{j1}_k X_j* X_k
        - i lam (X_j X_1 f) X_j + i/2 (c'_j - c''_j - (X_1 d_j) + 2 (X_j d_1) + d_1 d_j) X_j
    """
    _require_structure(S)
    _require_real(f)
    Xj, Xjs = S.op(j), S.star(j)
    x1f = apply(S.field(1), f)
    sq = Xjs @ Xj
    p0 = (S.d(1) * HALF_I) * sq
    for k in range(1, S.N + 1):
        p0 = p0 - (S.c(j, 1, k) * I) * (Xjs @ S.op(k))
    tail = _qj_tail(S, j, build_cprime(S, j) - build_cdoubleprime(S, j))
    p0 = p0 + (tail * HALF_I) * Xj
    p1 = (x1f * MINUS_I) * sq - (apply(S.field(j), x1f) * I) * Xj
    return LambdaOp([p0, p1], S.dim)
