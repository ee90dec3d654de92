"""Exact checks of the operator identities behind the Carleman computation.

Every check builds the printed right-hand side term by term, computes the
left-hand side from first principles (composition, formal adjoint,
conjugation) and compares canonical forms.  A mismatch is reported as the
residual operator ``lhs - rhs``; formulas are never corrected here.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .operators import (
    DiffOp,
    LambdaOp,
    SystemSpec,
    adjoint,
    apply,
    build_p1,
    build_p1_star,
    build_cdoubleprime,
    build_qj_prime,
    build_qj_prime_expanded,
    carleman_decomposition,
    conjugate,
    op_commutator,
    MissingStructureCoefficients,
    HALF_I,
)
from .symbolic import ScalarExpr

__all__ = [
    "IdentityReport",
    "EXACT_MATCH",
    "RESIDUAL",
    "verify_conjugation",
    "verify_adjoint_expansion",
    "verify_skew_part",
    "verify_qj_consistency",
    "verify_all",
    "conjugation_defect",
    "adjoint_expansion_defect",
    "skew_part_defect",
    "qj_consistency_defect",
    "render_text",
    "to_records",
]

EXACT_MATCH = "exact-match"
RESIDUAL = "residual"


def _as_lambda(A) -> LambdaOp:
    return A if isinstance(A, LambdaOp) else LambdaOp.constant(A)


@dataclass
class IdentityReport:
    """Outcome of one identity check.

    ``residuals`` maps a part label ('' for single identities, ``j=2`` for
    per-index families) to the non-zero operator ``lhs - rhs``.
    """

    name: str
    status: str
    residuals: dict[str, LambdaOp] = field(default_factory=dict)
    notes: dict[str, str] = field(default_factory=dict)

    @property
    def exact(self) -> bool:
        return self.status == EXACT_MATCH

    @property
    def residual(self) -> LambdaOp | None:
        if not self.residuals:
            return None
        return next(iter(self.residuals.values())) if len(self.residuals) == 1 else None

    def residual_term_count(self) -> int:
        return sum(A.term_count() for R in self.residuals.values() for A in R.coeff_ops)

    def grades(self) -> list[dict]:
        """Residual broken down by (part, lambda power, operator order)."""
        out = []
        for label, R in self.residuals.items():
            for p, A in enumerate(R.coeff_ops):
                for order, part in A.graded().items():
                    out.append({"part": label, "lambda_power": p, "order": order,
                                "terms": part.term_count(), "operator": str(part)})
        return out

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "status": self.status,
            "residual_terms": self.residual_term_count(),
            "grades": self.grades(),
            "notes": dict(self.notes),
        }


def _report(name: str, parts: dict[str, tuple], notes: dict[str, str]) -> IdentityReport:
    residuals = {}
    for label, (lhs, rhs) in parts.items():
        r = _as_lambda(lhs) - _as_lambda(rhs)
        if not r.is_zero():
            residuals[label] = r
    return IdentityReport(name, RESIDUAL if residuals else EXACT_MATCH, residuals, notes)


def verify_conjugation(S: SystemSpec, f: ScalarExpr) -> IdentityReport:
    """``P_1(x, D + lam Df)`` against ``P_1 + L_2 + L_1 + L_0`` per power of lambda."""
    lhs = conjugate(build_p1(S), f)
    rhs = carleman_decomposition(S, f).total()
    return _report("conjugation", {"": (lhs, rhs)}, {
        "lhs": "P1(x, D + lambda Df) by substitution D_k -> D_k + lambda (D_k f)",
        "rhs": "P1 + L2 + L1 + L0 transcribed from the displayed formulas",
        "weight": str(f),
    })


def conjugation_defect(S: SystemSpec, f: ScalarExpr) -> LambdaOp:
    """Hand-derived value of the conjugation residual.

    Under ``D -> D + lam Df`` the factor ``X_j*`` becomes ``X_j* + lam (X_j f)``,
    while the displayed expansion uses ``X_j* - lam (X_j f)`` (the adjoint of
    the conjugated ``X_j``).  The two expansions then differ by

        sum_j (X_1 + lam (X_1 f)) o 2 lam (X_j f) (X_j + lam (X_j f)),

    which is what :func:`verify_conjugation` should report.
    """
    dim = S.dim
    x1f = apply(S.field(1), f)
    left = LambdaOp([S.op(1), DiffOp.multiplication(x1f)], dim)
    total = LambdaOp.zero(dim)
    for j in range(1, S.N + 1):
        xjf = apply(S.field(j), f)
        inner = LambdaOp([DiffOp.zero(dim), 2 * xjf * S.op(j),
                          DiffOp.multiplication(2 * xjf * xjf)], dim)
        total = total + left @ inner
    return total


def adjoint_expansion_defect(S: SystemSpec) -> DiffOp:
    """Hand-derived value of the adjoint-expansion residual.

    Expanding ``sum_j X_j* X_j X_1* - X_1 sum_j X_j* X_j`` directly gives
    ``(X_k c^{k1}_j) X_j`` where the display has ``(X_k* c^{k1}_j) X_j``, a
    first-order term ``2 (X_j d_1) X_j`` that the display omits, and the
    zeroth-order term ``X_j X_j d_1`` where the display has ``X_j* X_1 d_1``.
    Hence

        sum_j [2 (X_j d_1) - sum_k d_k c^{k1}_j] X_j + X_j X_j d_1 - X_j* X_1 d_1.
    """
    d1 = S.d(1)
    x1d1 = apply(S.field(1), d1)
    out = DiffOp.zero(S.dim)
    for j in range(1, S.N + 1):
        Xj = S.field(j)
        xjd1 = apply(Xj, d1)
        coef = 2 * xjd1
        for k in range(1, S.N + 1):
            coef = coef - S.d(k) * S.c(k, 1, j)
        out = out + coef * S.op(j) + DiffOp.multiplication(apply(Xj, xjd1) - S.star(j).apply_to(x1d1))
    return out


def skew_part_defect(S: SystemSpec) -> DiffOp:
    """Hand-derived value of the skew-part residual.

    The ``d_1`` block of the display subtracts ``d_1 d_j X_j + (X_j d_1) d_j``,
    terms that do not survive a direct expansion, so the residual is
    ``sum_j d_1 d_j X_j + d_j (X_j d_1)``.  It vanishes when ``d_1 = 0``.
    """
    d1 = S.d(1)
    out = DiffOp.zero(S.dim)
    for j in range(1, S.N + 1):
        dj = S.d(j)
        out = out + (d1 * dj) * S.op(j) + DiffOp.multiplication(dj * apply(S.field(j), d1))
    return out


def qj_consistency_defect(S: SystemSpec, j: int) -> DiffOp:
    """Hand-derived ``Q'_j`` residual: ``-(i/2) c''_j X_j``.

    The subtraction form removes ``i c''_j X_j`` while the expanded display
    only removes half of it inside the ``i/2 (...)`` bracket.
    """
    return (build_cdoubleprime(S, j) * -HALF_I) * S.op(j)


def _require_structure(S: SystemSpec):
    if not S.has_structure():
        raise MissingStructureCoefficients(
            f"system {S.name or '<unnamed>'}: structure coefficients required")


def verify_adjoint_expansion(S: SystemSpec) -> IdentityReport:
    """First-principles ``adjoint(P_1)`` against the printed expansion

    P_1 + d_1 sum_j X_j* X_j
        + sum_{j,k} { c^{j1}_k (X_j* X_k + X_k* X_j) - c^{j1}_k d_k X_j + (X_k* c^{k1}_j) X_j }
        - sum_j (X_1 d_j) X_j + sum_j ((X_j d_1) d_j + (X_j* X_1 d_1)) + d_0.
    """
    _require_structure(S)
    N = S.N
    d1 = S.d(1)
    rhs = build_p1(S)
    for j in range(1, N + 1):
        Xj = S.op(j)
        rhs = rhs + d1 * (S.star(j) @ Xj)
        for k in range(1, N + 1):
            c = S.c(j, 1, k)
            rhs = rhs + c * (S.star(j) @ S.op(k) + S.star(k) @ Xj)
            rhs = rhs - (c * S.d(k)) * Xj
            rhs = rhs + S.star(k).apply_to(S.c(k, 1, j)) * Xj
        rhs = rhs - apply(S.field(1), S.d(j)) * Xj
        x1d1 = apply(S.field(1), d1)
        rhs = rhs + DiffOp.multiplication(apply(S.field(j), d1) * S.d(j) + S.star(j).apply_to(x1d1))
    rhs = rhs + DiffOp.multiplication(S.d(0))
    return _report("adjoint_expansion", {"": (adjoint(build_p1(S)), rhs)}, {
        "lhs": "formal adjoint of P1 in normal form",
        "rhs": "printed expansion of P1*, literal (including the (X_j* X_1 d_1) term)",
    })


def verify_skew_part(S: SystemSpec) -> IdentityReport:
    """``P_1 - P_1*`` against the commutator expansion

    - sum_j (2 [X_j, X_1] X_j + [X_j, [X_j, X_1]] + d_j [X_j, X_1] - (X_1 d_j) X_j)
    - sum_j (d_1 X_j* X_j + 2 (X_j d_1) X_j + d_1 d_j X_j + (X_j* X_j d_1) + (X_j d_1) d_j)
    - d_0.
    """
    _require_structure(S)
    X1 = S.op(1)
    d1 = S.d(1)
    rhs = DiffOp.zero(S.dim)
    for j in range(1, S.N + 1):
        Xj, dj = S.op(j), S.d(j)
        br = op_commutator(Xj, X1)
        rhs = rhs - (2 * (br @ Xj) + op_commutator(Xj, br) + dj * br - apply(S.field(1), dj) * Xj)
        xjd1 = apply(S.field(j), d1)
        block = (d1 * (S.star(j) @ Xj) + (2 * xjd1) * Xj + (d1 * dj) * Xj
                 + DiffOp.multiplication(S.star(j).apply_to(xjd1) + xjd1 * dj))
        rhs = rhs - block
    rhs = rhs - DiffOp.multiplication(S.d(0))
    return _report("skew_part", {"": (build_p1(S) - build_p1_star(S), rhs)}, {
        "lhs": "P1 - P1* from the two factorizations",
        "rhs": "commutator expansion with the d_1 block and d_0",
    })


def verify_qj_consistency(S: SystemSpec, f: ScalarExpr) -> IdentityReport:
    """The subtraction form of ``Q'_j`` against its expanded display, for every j."""
    _require_structure(S)
    parts = {f"j={j}": (build_qj_prime(S, f, j), build_qj_prime_expanded(S, f, j))
             for j in range(1, S.N + 1)}
    return _report("qj_prime_consistency", parts, {
        "lhs": "Q_j - i sum_k c^{j1}_k (X_j* X_k + X_k* X_j) - i c''_j X_j",
        "rhs": "expanded display with c'_j - c''_j",
        "weight": str(f),
    })


def verify_all(S: SystemSpec, f: ScalarExpr) -> list[IdentityReport]:
    """All four checks in a fixed order."""
    return [verify_conjugation(S, f), verify_adjoint_expansion(S), verify_skew_part(S),
            verify_qj_consistency(S, f)]


def render_text(reports: list[IdentityReport], header: str = "") -> str:
    lines = [header] if header else []
    for r in reports:
        lines.append(f"[{r.status}] {r.name}")
        for k, v in r.notes.items():
            lines.append(f"    {k}: {v}")
        for label, R in r.residuals.items():
            tag = f" ({label})" if label else ""
            lines.append(f"    residual{tag}, {R.degree() + 1} lambda grade(s):")
            for p, A in enumerate(R.coeff_ops):
                for order, part in A.graded().items():
                    lines.append(f"      lambda^{p}, order {order}: {part}")
    return "\n".join(lines) + "\n"


def to_records(reports: list[IdentityReport]) -> str:
    """Machine-readable form: one JSON record per identity."""
    return json.dumps([r.to_record() for r in reports], indent=2, sort_keys=True) + "\n"
