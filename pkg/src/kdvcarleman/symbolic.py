"""Exact polynomials with Gaussian-rational coefficients.

Every coefficient function in this package (vector-field coefficients,
weights, divergence terms, structure coefficients) is a polynomial in the
ambient coordinates x1..x_dim.  Keeping them exact means every operator
identity downstream is checked by canonical-form equality, not tolerance.
"""

from __future__ import annotations

import numbers
import re
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

__all__ = [
    "GaussianRational",
    "ScalarExpr",
    "ExponentCapError",
    "ParseError",
    "REAL",
    "IMAGINARY",
    "MIXED",
    "ZERO",
    "MAX_EXPONENT",
    "set_exponent_cap",
    "diff",
    "evaluate",
    "classify_reality",
    "parse_expr",
]

REAL = "real-valued"
IMAGINARY = "imaginary-valued"
MIXED = "mixed"
ZERO = "zero"

MAX_EXPONENT = 64


class ExponentCapError(ValueError):
    """Raised when a monomial exponent exceeds the configured cap."""


def set_exponent_cap(cap: int) -> int:
    """Set the per-variable exponent cap; returns the previous value."""
    global MAX_EXPONENT
    if cap < 1:
        raise ValueError("exponent cap must be positive")
    old, MAX_EXPONENT = MAX_EXPONENT, int(cap)
    return old


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        # floats only enter through user literals; keep them exact
        return Fraction(x)
    return Fraction(x)


class GaussianRational:
    """A number re + i*im with both parts rational."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = _frac(re)
        self.im = _frac(im)

    @classmethod
    def coerce(cls, x) -> "GaussianRational":
        if isinstance(x, GaussianRational):
            return x
        if isinstance(x, complex):
            return cls(Fraction(x.real), Fraction(x.imag))
        if isinstance(x, numbers.Rational) or isinstance(x, (int, float)):
            return cls(x, 0)
        raise TypeError(f"cannot convert {type(x).__name__} to GaussianRational")

    def __add__(self, other):
        try:
            o = GaussianRational.coerce(other)
        except TypeError:
            return NotImplemented
        return GaussianRational(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __sub__(self, other):
        try:
            o = GaussianRational.coerce(other)
        except TypeError:
            return NotImplemented
        return GaussianRational(self.re - o.re, self.im - o.im)

    def __rsub__(self, other):
        return GaussianRational.coerce(other) - self

    def __mul__(self, other):
        try:
            o = GaussianRational.coerce(other)
        except TypeError:
            return NotImplemented
        return GaussianRational(self.re * o.re - self.im * o.im,
                                self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, other):
        try:
            o = GaussianRational.coerce(other)
        except TypeError:
            return NotImplemented
        den = o.re * o.re + o.im * o.im
        if den == 0:
            raise ZeroDivisionError("division by zero")
        return GaussianRational((self.re * o.re + self.im * o.im) / den,
                                (self.im * o.re - self.re * o.im) / den)

    def __rtruediv__(self, other):
        return GaussianRational.coerce(other) / self

    def __neg__(self):
        return GaussianRational(-self.re, -self.im)

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers")
        out = GaussianRational(1)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def conjugate(self) -> "GaussianRational":
        return GaussianRational(self.re, -self.im)

    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __eq__(self, other):
        try:
            o = GaussianRational.coerce(other)
        except TypeError:
            return NotImplemented
        return self.re == o.re and self.im == o.im

    def __hash__(self):
        return hash((self.re, self.im))

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def __repr__(self):
        return f"GaussianRational({self.re}, {self.im})"

    def __str__(self):
        if not self.im:
            return str(self.re)
        if not self.re:
            return _imag_str(self.im)
        sign = "+" if self.im > 0 else "-"
        return f"({self.re} {sign} {_imag_str(abs(self.im))})"


def _imag_str(q: Fraction) -> str:
    if q == 1:
        return "i"
    if q == -1:
        return "-i"
    return f"{q}*i"


_ONE = GaussianRational(1)
_I = GaussianRational(0, 1)
_MINUS_I = GaussianRational(0, -1)


class ScalarExpr:
    """Polynomial in ``dim`` real variables with Gaussian-rational coefficients.

    ``terms`` maps exponent tuples to non-zero coefficients.  Instances are
    treated as immutable; every operation returns a new canonical value, so
    equality is plain term-map equality.
    """

    __slots__ = ("dim", "_terms", "_hash")

    def __init__(self, dim: int, terms: Mapping[Sequence[int], object] | None = None):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = int(dim)
        clean: dict[tuple[int, ...], GaussianRational] = {}
        for mono, c in (terms or {}).items():
            mono = tuple(int(e) for e in mono)
            if len(mono) != dim:
                raise ValueError(f"exponent {mono} has wrong length for dim {dim}")
            if any(e < 0 for e in mono):
                raise ValueError("exponents must be non-negative")
            if any(e > MAX_EXPONENT for e in mono):
                raise ExponentCapError(f"exponent {max(mono)} exceeds cap {MAX_EXPONENT}")
            c = GaussianRational.coerce(c)
            if c:
                if mono in clean:
                    c = clean[mono] + c
                    if not c:
                        del clean[mono]
                        continue
                clean[mono] = c
        self._terms = clean
        self._hash = None

    @classmethod
    def _raw(cls, dim: int, terms: dict) -> "ScalarExpr":
        # caller guarantees canonical terms
        obj = cls.__new__(cls)
        obj.dim = dim
        obj._terms = terms
        obj._hash = None
        return obj

    @classmethod
    def const(cls, dim: int, value=1) -> "ScalarExpr":
        return cls(dim, {(0,) * dim: value})

    @classmethod
    def zero(cls, dim: int) -> "ScalarExpr":
        return cls._raw(dim, {})

    @classmethod
    def var(cls, dim: int, k: int) -> "ScalarExpr":
        """The coordinate x_k (1-based)."""
        if not 1 <= k <= dim:
            raise IndexError(f"axis {k} out of range 1..{dim}")
        mono = [0] * dim
        mono[k - 1] = 1
        return cls(dim, {tuple(mono): 1})

    @property
    def terms(self) -> dict[tuple[int, ...], GaussianRational]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self):
        return len(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def is_constant(self) -> bool:
        return all(not any(m) for m in self._terms)

    def constant_value(self) -> GaussianRational:
        return self._terms.get((0,) * self.dim, GaussianRational(0))

    def degree(self) -> int:
        return max((sum(m) for m in self._terms), default=-1)

    def _coerce(self, other) -> "ScalarExpr":
        if isinstance(other, ScalarExpr):
            if other.dim != self.dim:
                raise ValueError(f"dimension mismatch: {self.dim} vs {other.dim}")
            return other
        return ScalarExpr.const(self.dim, GaussianRational.coerce(other))

    def __add__(self, other):
        try:
            o = self._coerce(other)
        except TypeError:
            return NotImplemented
        out = dict(self._terms)
        for m, c in o._terms.items():
            s = out.get(m)
            if s is None:
                out[m] = c
            else:
                s = s + c
                if s:
                    out[m] = s
                else:
                    del out[m]
        return ScalarExpr._raw(self.dim, out)

    __radd__ = __add__

    def __neg__(self):
        return ScalarExpr._raw(self.dim, {m: -c for m, c in self._terms.items()})

    def __sub__(self, other):
        try:
            o = self._coerce(other)
        except TypeError:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, ScalarExpr):
            try:
                g = GaussianRational.coerce(other)
            except TypeError:
                return NotImplemented
            if not g:
                return ScalarExpr.zero(self.dim)
            return ScalarExpr._raw(self.dim, {m: c * g for m, c in self._terms.items()})
        o = self._coerce(other)
        out: dict[tuple[int, ...], GaussianRational] = {}
        cap = MAX_EXPONENT
        for m1, c1 in self._terms.items():
            for m2, c2 in o._terms.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                c = c1 * c2
                s = out.get(m)
                out[m] = c if s is None else s + c
        for m in list(out):
            if not out[m]:
                del out[m]
            elif max(m, default=0) > cap:
                raise ExponentCapError(f"exponent {max(m)} exceeds cap {cap}")
        return ScalarExpr._raw(self.dim, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if not isinstance(k, int) or k < 0:
            raise ValueError("only non-negative integer powers")
        out = ScalarExpr.const(self.dim, 1)
        base = self
        while k:
            if k & 1:
                out = out * base
            k >>= 1
            if k:
                base = base * base
        return out

    def __eq__(self, other):
        if isinstance(other, ScalarExpr):
            return self.dim == other.dim and self._terms == other._terms
        if isinstance(other, (int, float, complex, Fraction, GaussianRational)):
            return self._terms == ScalarExpr.const(self.dim, other)._terms
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.dim, frozenset(self._terms.items())))
        return self._hash

    def conjugate(self) -> "ScalarExpr":
        """Complex conjugate; the variables are real so only coefficients change."""
        return ScalarExpr._raw(self.dim, {m: c.conjugate() for m, c in self._terms.items()})

    def real_part(self) -> "ScalarExpr":
        return ScalarExpr(self.dim, {m: c.re for m, c in self._terms.items()})

    def imag_part(self) -> "ScalarExpr":
        return ScalarExpr(self.dim, {m: c.im for m, c in self._terms.items()})

    def diff(self, k: int) -> "ScalarExpr":
        """Partial derivative with respect to x_k (1-based)."""
        if not 1 <= k <= self.dim:
            raise IndexError(f"axis {k} out of range 1..{self.dim}")
        i = k - 1
        out = {}
        for m, c in self._terms.items():
            e = m[i]
            if e:
                nm = m[:i] + (e - 1,) + m[i + 1:]
                out[nm] = c * e
        return ScalarExpr._raw(self.dim, out)

    def eval(self, point: Sequence):
        return evaluate(self, point)

    def embed(self, dim: int, axes: Sequence[int]) -> "ScalarExpr":
        """Re-home into ``dim`` variables; variable k goes to axis ``axes[k-1]``."""
        if len(axes) != self.dim:
            raise ValueError("need one target axis per variable")
        out = {}
        for m, c in self._terms.items():
            nm = [0] * dim
            for e, a in zip(m, axes):
                nm[a - 1] += e
            out[tuple(nm)] = c
        return ScalarExpr(dim, out)

    def monomials(self):
        """Return (exponent matrix, complex coefficient vector) for numeric kernels."""
        import numpy as np

        keys = sorted(self._terms)
        exps = np.array(keys, dtype=np.int64).reshape(len(keys), self.dim)
        coeffs = np.array([complex(self._terms[k]) for k in keys], dtype=np.complex128)
        return exps, coeffs

    def __repr__(self):
        return f"ScalarExpr({self.dim}, {str(self)!r})"

    def __str__(self):
        if not self._terms:
            return "0"
        parts = []
        for m in sorted(self._terms, key=lambda m: (-sum(m), tuple(-e for e in m))):
            c = self._terms[m]
            mono = "*".join(
                f"x{k + 1}" if e == 1 else f"x{k + 1}^{e}" for k, e in enumerate(m) if e
            )
            parts.append(_term_str(c, mono))
        s = " + ".join(parts)
        return s.replace("+ -", "- ")


def _term_str(c: GaussianRational, mono: str) -> str:
    if not mono:
        if c.re and c.im:
            return f"({_coef_str(c)})"
        return _coef_str(c)
    if c == _ONE:
        return mono
    if c == -_ONE:
        return "-" + mono
    if c.re and c.im:
        return f"({_coef_str(c)})*{mono}"
    return f"{_coef_str(c)}*{mono}"


def _coef_str(c: GaussianRational) -> str:
    if not c.im:
        return str(c.re)
    if not c.re:
        return _imag_str(c.im)
    sign = "+" if c.im > 0 else "-"
    return f"{c.re} {sign} {_imag_str(abs(c.im))}"


def diff(e: ScalarExpr, k: int) -> ScalarExpr:
    return e.diff(k)


def evaluate(e: ScalarExpr, point: Sequence):
    """Evaluate at a point.

    Exact (a :class:`GaussianRational`) when every coordinate is an int or
    Fraction, otherwise a Python complex.
    """
    point = tuple(point)
    if len(point) != e.dim:
        raise ValueError(f"point has {len(point)} coordinates, expression has dim {e.dim}")
    exact = all(isinstance(p, (int, Fraction)) and not isinstance(p, bool) for p in point)
    if exact:
        total = GaussianRational(0)
        for m, c in e.items():
            v = Fraction(1)
            for p, k in zip(point, m):
                if k:
                    v *= Fraction(p) ** k
            total = total + c * v
        return total
    pt = [complex(p) for p in point]
    total = 0j
    for m, c in e.items():
        v = complex(c)
        for p, k in zip(pt, m):
            if k:
                v *= p ** k
        total += v
    return total


def classify_reality(e: ScalarExpr) -> str:
    if e.is_zero():
        return ZERO
    coeffs = [c for _, c in e.items()]
    if all(not c.im for c in coeffs):
        return REAL
    if all(not c.re for c in coeffs):
        return IMAGINARY
    return MIXED


# ---------------------------------------------------------------------------
# text syntax
# ---------------------------------------------------------------------------


class ParseError(ValueError):
    """Syntax error with 1-based line/column of the offending token."""

    def __init__(self, message: str, text: str = "", pos: int = 0, line: int = 1, col_offset: int = 0):
        self.line = line
        self.column = col_offset + pos + 1
        self.text = text
        super().__init__(f"line {self.line}, column {self.column}: {message}")


_TOKEN = re.compile(r"\s*(?:(\d+(?:\.\d+)?)|([A-Za-z_][A-Za-z_0-9]*)|(\*\*|[-+*/^()]))")


def _tokenize(text: str, line: int, col_offset: int):
    pos = 0
    out = []
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            bad = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[bad]!r}", text, bad, line, col_offset)
        start = m.start(m.lastindex)
        if m.group(1):
            out.append(("num", m.group(1), start))
        elif m.group(2):
            out.append(("name", m.group(2), start))
        else:
            op = m.group(3)
            out.append(("op", "^" if op == "**" else op, start))
        pos = m.end()
    out.append(("end", "", n))
    return out


class _Parser:
    def __init__(self, text, dim, names, line, col_offset):
        self.text = text
        self.dim = dim
        self.names = names
        self.line = line
        self.col = col_offset
        self.toks = _tokenize(text, line, col_offset)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def fail(self, msg, tok=None):
        tok = tok or self.peek()
        raise ParseError(msg, self.text, tok[2], self.line, self.col)

    def parse(self):
        if self.peek()[0] == "end":
            self.fail("empty expression")
        e = self.expr()
        if self.peek()[0] != "end":
            self.fail(f"unexpected token {self.peek()[1]!r}")
        return e

    def expr(self):
        e = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            rhs = self.term()
            e = e + rhs if op == "+" else e - rhs
        return e

    def term(self):
        e = self.unary()
        while True:
            t = self.peek()
            if t[0] == "op" and t[1] in "*/":
                self.take()
                rhs = self.unary()
                if t[1] == "*":
                    e = e * rhs
                else:
                    if not rhs.is_constant() or rhs.is_zero():
                        self.fail("division only by a non-zero constant", t)
                    e = e * (GaussianRational(1) / rhs.constant_value())
            elif t[0] in ("num", "name") or (t[0] == "op" and t[1] == "("):
                # implicit multiplication, e.g. "2x1" or "2 i"
                e = e * self.unary()
            else:
                return e

    def unary(self):
        t = self.peek()
        if t[0] == "op" and t[1] in "+-":
            self.take()
            e = self.unary()
            return -e if t[1] == "-" else e
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            t = self.peek()
            if t[0] != "num" or "." in t[1]:
                self.fail("exponent must be a non-negative integer literal")
            self.take()
            return base ** int(t[1])
        return base

    def atom(self):
        t = self.take()
        if t[0] == "num":
            return ScalarExpr.const(self.dim, Fraction(t[1]))
        if t[0] == "name":
            name = t[1]
            if name == "i":
                return ScalarExpr.const(self.dim, _I)
            if name in self.names:
                return ScalarExpr.var(self.dim, self.names[name])
            self.fail(f"unknown variable {name!r}", t)
        if t[0] == "op" and t[1] == "(":
            e = self.expr()
            if not (self.peek()[0] == "op" and self.peek()[1] == ")"):
                self.fail("expected ')'")
            self.take()
            return e
        self.fail(f"unexpected token {t[1]!r}" if t[1] else "unexpected end of expression", t)


def parse_expr(text: str, dim: int, names: Mapping[str, int] | None = None, *,
               line: int = 1, col_offset: int = 0) -> ScalarExpr:
    """Parse ``text`` into a canonical :class:`ScalarExpr`.

    Variables are ``x1``..``x{dim}`` unless ``names`` maps identifiers to
    1-based axes.  ``i`` is the imaginary unit; ``^`` (or ``**``) takes a
    non-negative integer exponent; ``/`` divides by a constant only.

    >>> str(parse_expr("-x2/2", 3))
    '-1/2*x2'
    """
    if names is None:
        names = {f"x{k}": k for k in range(1, min(dim, 9) + 1)}
    for k in names.values():
        if not 1 <= k <= dim:
            raise ValueError(f"variable axis {k} outside 1..{dim}")
    return _Parser(text, dim, dict(names), line, col_offset).parse()


def sum_exprs(dim: int, items: Iterable[ScalarExpr]) -> ScalarExpr:
    total = ScalarExpr.zero(dim)
    for e in items:
        total = total + e
    return total
