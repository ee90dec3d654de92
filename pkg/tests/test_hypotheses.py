from fractions import Fraction

import numpy as np
import pytest

from kdvcarleman import catalog
from kdvcarleman.hypotheses import (
    EXACT,
    FAILED,
    Region,
    check_nondegeneracy,
    check_system,
    hormander_rank,
    real_bracket,
    verify_involutivity,
)
from kdvcarleman.operators import SystemSpec, VectorField
from kdvcarleman.symbolic import ScalarExpr, parse_expr

from randsys import random_system


def V(*texts, dim):
    return VectorField([parse_expr(t, dim) for t in texts])


def zeros(dim, n):
    return tuple(ScalarExpr.zero(dim) for _ in range(n))


def test_commuting_constant_fields_exact():
    S = SystemSpec(1, 2, VectorField.zero(2), (V("1", "0", dim=2), V("1", "1", dim=2)),
                   {(1, 2): zeros(2, 2)})
    assert verify_involutivity(S).status == EXACT


def test_heisenberg_structure_exact():
    S = catalog.build("heisenberg1-space")
    assert S.c(1, 2, 3) == ScalarExpr.const(3, -1j) or str(S.c(1, 2, 3)) == "-i"
    assert str(S.c(2, 1, 3)) == "i"
    assert verify_involutivity(S).status == EXACT


def test_non_involutive_witness():
    # [D1, x1 D2] = -i D2, which is not in the span of D1 and x1 D2 at x1 = 0
    S = SystemSpec(1, 2, VectorField.zero(2), (V("1", "0", dim=2), V("0", "x1", dim=2)))
    res = verify_involutivity(S, Region.cube(2, 1, 5))
    assert res.status == FAILED
    assert abs(res.witness[0]) < 1e-12
    # a wrong polynomial claim is also rejected
    S2 = SystemSpec(1, 2, VectorField.zero(2), S.fields,
                    {(1, 2): (ScalarExpr.zero(2), parse_expr("i*x1", 2))})
    assert verify_involutivity(S2).status == FAILED


def test_nondegeneracy_examples():
    K = Region.cube(1, 1)
    assert check_nondegeneracy(V("1", dim=1), K).min_norm == 1
    deg = check_nondegeneracy(V("x1", dim=1), K)
    assert not deg.ok and deg.min_norm == 0
    h = check_nondegeneracy(catalog.build("heisenberg1-space").field(1), Region.cube(3, 1))
    assert h.ok and h.min_norm == pytest.approx(1.0)


def test_rank_examples():
    grad = [VectorField.coordinate(3, k) for k in (1, 2, 3)]
    assert hormander_rank(grad, (0, 0, 0)) == 1
    S = catalog.build("heisenberg1-space")
    assert hormander_rank(S.fields[:2], (0, 0, 0)) == 2
    E = catalog.heisenberg(1, 1, True)
    for L in (1, 3, 6):
        assert hormander_rank(E, (0, 0, 0, 0), max_len=L) is None


def test_rank_exact_at_rational_points():
    S = catalog.build("heisenberg1-space")
    for p in [(Fraction(1, 3), Fraction(-2, 7), 5), (1, 1, 1)]:
        assert hormander_rank(S.fields[:2], p) == 2


def test_real_bracket_heisenberg():
    # real fields iX_1 and iX_2 have bracket iX_3 = d_3
    x1 = [parse_expr(t, 3) for t in ("1", "0", "-x2/2")]
    x2 = [parse_expr(t, 3) for t in ("0", "1", "x1/2")]
    assert real_bracket(x1, x2) == tuple(parse_expr(t, 3) for t in ("0", "0", "1"))


def test_random_systems_involutive(rng):
    for _ in range(20):
        S = random_system(rng)
        assert verify_involutivity(S).status == EXACT


def test_numeric_fallback_without_structure():
    S = catalog.build("heisenberg1-space")
    bare = SystemSpec(S.n, S.N, S.x0, S.fields)
    res = verify_involutivity(bare, Region.cube(3, 1, 4))
    assert res.ok and res.max_residual < 1e-8


def test_check_system_report():
    rep = check_system(catalog.build("heisenberg1-space"))
    assert rep.passed() and rep.passed(require_rank=1)
    assert not rep.passed(require_rank=2)
    d = rep.to_dict()
    assert d["involutive"]["status"] == EXACT
    assert "hormander rank" in rep.render()


def test_region_contract():
    with pytest.raises(ValueError):
        Region((1,), (0,))
    K = Region.from_flat([-1, 1, 0, 2])
    assert K.contains(Region((-0.5, 0.5), (0.5, 1.5)))
    assert np.allclose(K.width(), [2, 2])
