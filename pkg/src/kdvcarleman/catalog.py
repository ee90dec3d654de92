"""Built-in example systems.

Axis convention: when a system has a time variable it is axis 1 (``x1``)
and the space axes follow.  Reports echo ``SystemSpec.axis_labels`` so the
convention is always visible.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .operators import SystemSpec, VectorField
from .symbolic import REAL, ZERO, GaussianRational, ScalarExpr, classify_reality, parse_expr

__all__ = [
    "CatalogEntry",
    "NotInvolutiveError",
    "kdv_1d",
    "zk_2d",
    "heisenberg",
    "heisenberg_embedded",
    "non_kdv",
    "CATALOG",
    "get_entry",
    "build",
    "default_weight",
]


class NotInvolutiveError(ValueError):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


def _const(dim, v):
    return ScalarExpr.const(dim, v)


def _dt(dim: int) -> VectorField:
    return VectorField.coordinate(dim, 1)


def kdv_1d(a: ScalarExpr | str | int = 1) -> SystemSpec:
    """Variable-coefficient KdV: ``X_0 = D_t``, ``X_1 = a(x) D_x`` on (t, x).

    ``a`` may be given in one variable (the space variable, written ``x``
    or ``x1`` in text) or already in the two variables ``(t, x)``.
    """
    if isinstance(a, str):
        a = parse_expr(a, 1, {"x": 1, "x1": 1})
    elif not isinstance(a, ScalarExpr):
        a = ScalarExpr.const(1, a)
    if a.dim == 1:
        a = a.embed(2, [2])
    elif a.dim != 2:
        raise ValueError("a must be a function of x (dim 1) or of (t, x) (dim 2)")
    if classify_reality(a) not in (REAL, ZERO):
        raise ValueError(f"KdV coefficient must be real-valued, got {a}")
    X1 = VectorField([ScalarExpr.zero(2), a])
    return SystemSpec(1, 1, _dt(2), (X1,), {(1, 1): (ScalarExpr.zero(2),)},
                      name=f"kdv[a={_short(a, ('t', 'x'))}]", axis_labels=("t", "x"))


def _short(e: ScalarExpr, labels) -> str:
    s = str(e)
    for k in range(len(labels), 0, -1):
        s = s.replace(f"x{k}", labels[k - 1])
    return s


def _space_field(X: VectorField | Sequence, space_dim: int) -> VectorField:
    if not isinstance(X, VectorField):
        X = VectorField([c if isinstance(c, ScalarExpr) else _const(space_dim, c) for c in X])
    if X.dim == space_dim:
        return X.embed(space_dim + 1, list(range(2, space_dim + 2)))
    if X.dim == space_dim + 1:
        if not X.coeffs[0].is_zero():
            raise ValueError("fields must not have a time component")
        return X
    raise ValueError(f"field has dimension {X.dim}")


def zk_2d(X1, X2, c: Mapping[tuple[int, int], Sequence] | None = None) -> SystemSpec:
    """ZK-type system on (t, x1, x2) from two space fields.

    ``c`` holds the structure coefficients of ``[X_1, X_2]`` (pair ``(1, 2)``);
    they may be given in the space variables or in (t, x1, x2).  The system
    is only returned if involutivity verifies exactly.
    """
    from .hypotheses import verify_involutivity

    F1, F2 = _space_field(X1, 2), _space_field(X2, 2)
    sc = {}
    for pair, vals in (c or {(1, 2): (0, 0)}).items():
        out = []
        for v in vals:
            if isinstance(v, ScalarExpr):
                v = v.embed(3, [2, 3]) if v.dim == 2 else v
            else:
                v = _const(3, GaussianRational.coerce(v))
            out.append(v)
        sc[pair] = tuple(out)
    S = SystemSpec(2, 2, _dt(3), (F1, F2), sc, name="zk", axis_labels=("t", "x1", "x2"))
    rep = verify_involutivity(S)
    if not rep.ok:
        raise NotInvolutiveError(f"fields are not involutive with the supplied coefficients: {rep}", rep)
    return S


def _heisenberg_basis(k: int):
    """Real fields of H^k on R^{2k+1} with coordinates (x_1..x_k, y_1..y_k, z).

    iX_j = d_{x_j} - (y_j/2) d_z,  iY_j = d_{y_j} + (x_j/2) d_z,  iZ = d_z.
    Returns the fields in order X_1..X_k, Y_1..Y_k, Z and the non-zero
    brackets as {(a, b): (c, l)} meaning [F_a, F_b] = c F_l (0-based).
    """
    dim = 2 * k + 1
    z = dim
    half = GaussianRational(1) / 2
    fields = []
    for j in range(1, k + 1):
        co = [ScalarExpr.zero(dim) for _ in range(dim)]
        co[j - 1] = _const(dim, 1)
        co[z - 1] = ScalarExpr.var(dim, k + j) * (-half)
        fields.append(VectorField(co))
    for j in range(1, k + 1):
        co = [ScalarExpr.zero(dim) for _ in range(dim)]
        co[k + j - 1] = _const(dim, 1)
        co[z - 1] = ScalarExpr.var(dim, j) * half
        fields.append(VectorField(co))
    fields.append(VectorField.coordinate(dim, z))
    # [X_j, Y_j] = -[iX_j, iY_j] = -i Z  in the D-convention
    brackets = {}
    for j in range(k):
        brackets[(j, k + j)] = (GaussianRational(0, -1), 2 * k)
        brackets[(k + j, j)] = (GaussianRational(0, 1), 2 * k)
    return fields, brackets


def _structure_from_brackets(brackets, order, N, dim):
    """Structure coefficients after relabelling: new slot s holds old field order[s]."""
    pos = {old: new for new, old in enumerate(order)}
    sc = {}
    for j in range(N):
        for kk in range(N):
            vals = [ScalarExpr.zero(dim) for _ in range(N)]
            b = brackets.get((order[j], order[kk]))
            if b is not None:
                coef, l_old = b
                vals[pos[l_old]] = _const(dim, coef)
            sc[(j + 1, kk + 1)] = tuple(vals)
    return sc


def heisenberg(k: int = 1, j0: int = 1, with_time: bool = True) -> SystemSpec:
    """The H^k basis fields, with field ``j0`` moved into the X_1 slot.

    With ``with_time`` the space is (t, x) with ``X_0 = D_t``; otherwise
    ``X_0 = 0`` on the bare R^{2k+1}.
    """
    if k < 1:
        raise ValueError("k must be positive")
    N = 2 * k + 1
    if not 1 <= j0 <= N:
        raise ValueError(f"j0 must be in 1..{N}")
    fields, brackets = _heisenberg_basis(k)
    order = list(range(N))
    order[0], order[j0 - 1] = order[j0 - 1], order[0]
    space_labels = tuple([f"x{j}" for j in range(1, N + 1)])
    if with_time:
        dim = N + 1
        fs = [fields[o].embed(dim, list(range(2, dim + 1))) for o in order]
        x0 = _dt(dim)
        labels = ("t",) + space_labels
    else:
        dim = N
        fs = [fields[o] for o in order]
        x0 = VectorField.zero(dim)
        labels = space_labels
    sc = _structure_from_brackets(brackets, order, N, dim)
    name = f"heisenberg{k}[j0={j0}{',t' if with_time else ''}]"
    return SystemSpec(dim - 1, N, x0, tuple(fs), sc, name=name, axis_labels=labels)


def heisenberg_embedded(k: int = 1, extra_axes: int = 1) -> SystemSpec:
    """H^k fields on R_t x R^{2k+1}_x x R^m_y, extended by zero on the y axes."""
    if extra_axes < 1:
        raise ValueError("need at least one extra axis")
    N = 2 * k + 1
    fields, brackets = _heisenberg_basis(k)
    dim = 1 + N + extra_axes
    fs = [F.embed(dim, list(range(2, N + 2))) for F in fields]
    sc = _structure_from_brackets(brackets, list(range(N)), N, dim)
    labels = ("t",) + tuple(f"x{j}" for j in range(1, N + 1)) + tuple(
        f"y{j}" for j in range(1, extra_axes + 1))
    return SystemSpec(dim - 1, N, _dt(dim), tuple(fs), sc,
                      name=f"heisenberg{k}-embedded[m={extra_axes}]", axis_labels=labels)


def non_kdv(S: SystemSpec) -> SystemSpec:
    """Same fields with the first-order term ``X_0`` removed."""
    out = S.with_x0(VectorField.zero(S.dim))
    object.__setattr__(out, "name", f"nonkdv({S.name})")
    return out


def default_weight(S: SystemSpec) -> ScalarExpr:
    """Affine weight ``f = -x_m`` with ``m`` the axis of X_1's dominant constant coefficient.

    For the catalog systems this gives ``-i X_1 f = a_m`` and in particular
    ``-i X_1 f == 1`` whenever that coefficient is the constant 1.
    """
    X1 = S.field(1)
    best, best_val = None, None
    for m, c in enumerate(X1.coeffs, start=1):
        if c.is_constant() and not c.is_zero():
            v = abs(complex(c.constant_value()))
            if best_val is None or v > best_val:
                best, best_val = m, v
    if best is None:
        # fall back to the first axis with a non-zero coefficient
        best = next(m for m, c in enumerate(X1.coeffs, start=1) if not c.is_zero())
    return -ScalarExpr.var(S.dim, best)


@dataclass(frozen=True)
class CatalogEntry:
    id: str
    description: str
    factory: Callable[[], SystemSpec]
    params: Mapping[str, object] = field(default_factory=dict)
    involutive: bool = True
    nondegenerate: bool = True
    rank: int | None = None  # Hormander rank of X_1..X_N at the origin, None if never spanning
    hormander_fields: tuple[int, ...] | None = None  # subset used for the rank check

    def build(self) -> SystemSpec:
        return self.factory()


def _zk_const():
    return zk_2d([1, 0], [0, 1])


def _zk_oblique():
    return zk_2d([1, 0], [1, 1])


CATALOG: dict[str, CatalogEntry] = {
    e.id: e
    for e in [
        CatalogEntry("kdv", "constant-coefficient KdV, X0 = Dt, X1 = Dx", lambda: kdv_1d(1),
                     {"a": "1"}, rank=None),
        CatalogEntry("kdv-var", "variable KdV with a(x) = 1 + x^2", lambda: kdv_1d("1+x^2"),
                     {"a": "1+x^2"}, rank=None),
        CatalogEntry("zk", "constant-coefficient ZK on (t, x1, x2)", _zk_const, rank=None),
        CatalogEntry("zk-oblique", "ZK with the non-orthogonal frame D1, D1 + D2", _zk_oblique,
                     rank=None),
        CatalogEntry("heisenberg1", "H^1 KdV-type operator on R^4 (t, x1, x2, x3), j0 = 1",
                     lambda: heisenberg(1, 1, True), {"k": 1, "j0": 1}, rank=None),
        CatalogEntry("heisenberg1-j2", "H^1 KdV-type operator with X2 in the X1 slot",
                     lambda: heisenberg(1, 2, True), {"k": 1, "j0": 2}, rank=None),
        CatalogEntry("heisenberg1-space", "H^1 fields on R^3 without time (X0 = 0)",
                     lambda: heisenberg(1, 1, False), {"k": 1, "j0": 1}, rank=1),
        CatalogEntry("heisenberg2", "H^2 KdV-type operator on R^6", lambda: heisenberg(2, 1, True),
                     {"k": 2, "j0": 1}, rank=None),
        CatalogEntry("heisenberg1-embedded", "H^1 fields on R_t x R^3 x R^2 (zero on y axes)",
                     lambda: heisenberg_embedded(1, 2), {"k": 1, "m": 2}, rank=None),
        CatalogEntry("heisenberg1-nonkdv", "H^1 operator with X0 = 0 (no time evolution)",
                     lambda: non_kdv(heisenberg(1, 1, True)), {"k": 1}, rank=None),
    ]
}


def get_entry(entry_id: str) -> CatalogEntry:
    try:
        return CATALOG[entry_id]
    except KeyError:
        raise KeyError(f"unknown catalog entry {entry_id!r}; known: {', '.join(CATALOG)}") from None


def build(entry_id: str) -> SystemSpec:
    return get_entry(entry_id).build()
