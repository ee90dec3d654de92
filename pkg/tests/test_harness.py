import json
import math

import numpy as np
import pytest

from kdvcarleman import catalog
from kdvcarleman.grid import Grid, GridError, GridFunction, inner
from kdvcarleman.harness import (
    FRAMING,
    HypothesisFailure,
    SweepConfig,
    WeightError,
    WeightSpec,
    bump_profile,
    carleman_ratio,
    conjugated_ratio_on_grid,
    direct_ratio,
    emit_report,
    fit_constants,
    fit_growth,
    gen_test_functions,
    modulated_bump,
    read_csv,
    rothschild_stein_check,
    run_sweep,
    solvability_ratio,
)
from kdvcarleman.hypotheses import Region
from kdvcarleman.operators import SystemSpec, VectorField, build_p1
from kdvcarleman.symbolic import parse_expr

from configs import make_config, refined


def plain(u):
    return GridFunction(u.grid, u.values)


def test_bump_profile_is_compact():
    t = np.linspace(-1.5, 1.5, 301)
    b = bump_profile(t)
    assert np.all(b[np.abs(t) >= 1] == 0)
    assert b[150] == 1.0


def test_test_function_contract():
    K = Region.cube(2, 1)
    g = Grid.around(K, 64)
    a = gen_test_functions(K, g, 1, 42)[0]
    b = gen_test_functions(K, g, 1, 42)[0]
    assert np.array_equal(a.values, b.values)
    assert abs(inner(plain(a), plain(a)).real - 1) <= 1e-10
    for u in gen_test_functions(K, g, 20, 1):
        assert u.support_leak() <= 1e-12
    c = gen_test_functions(K, g, 1, 43)[0]
    assert math.sqrt(inner(plain(a) - plain(c), plain(a) - plain(c)).real) > 0.1


def test_test_functions_need_resolution():
    K = Region.cube(2, 1)
    with pytest.raises(GridError):
        gen_test_functions(K, Grid.around(K, 8), 1, 0)


def test_ratio_grows_for_mid_frequency_bump():
    S = catalog.build("kdv")
    K = Region.cube(2, 1)
    g = Grid.around(K, 128)
    v = modulated_bump(K, g, (0.0, 6.0))
    f = catalog.default_weight(S)
    A = build_p1(S)
    assert conjugated_ratio_on_grid(A, f, v, 16) > conjugated_ratio_on_grid(A, f, v, 1)


# The direct path multiplies spectral-derivative error by exp(lam * range(f)), so
# the weight axis needs a fine grid; the other axes can stay coarse.
@pytest.mark.parametrize("key,shape", [("kdv", (32, 256)), ("kdv-var", (32, 256)), ("zk-oblique", (16, 256, 24)),
                                       ("heisenberg1", (12, 256, 12, 12)), ("heisenberg1-j2", (12, 12, 256, 12))])
def test_two_path_consistency(key, shape):
    S = catalog.build(key)
    K = Region.cube(S.dim, 1)
    g = Grid.around(K, shape)
    f = catalog.default_weight(S)
    v = plain(gen_test_functions(K, g, 1, 5)[0])
    A = build_p1(S)
    for lam in (1, 2, 4):
        a, b = conjugated_ratio_on_grid(A, f, v, lam), direct_ratio(A, f, v, lam)
        assert abs(a - b) <= 1e-6 * abs(b)


def test_gram_ratio_matches_grid_ratio():
    cfg = make_config("zk", 24, count=3)
    fam_u = gen_test_functions(cfg.weight.K, cfg.grid, 3, cfg.seed)
    for i in range(3):
        for lam in (1.0, 8.0):
            ref = conjugated_ratio_on_grid(cfg.operator(), cfg.weight.f, plain(fam_u[i]), lam)
            assert carleman_ratio(cfg, i, lam) == pytest.approx(ref, rel=1e-9)


def test_config_invariants():
    with pytest.raises(ValueError):
        make_config("kdv", 64, lambdas=(0.5, 1, 2))
    with pytest.raises(ValueError):
        make_config("kdv", 64, lambdas=(2, 1))
    with pytest.raises(ValueError):
        make_config("kdv", 64, target="P2")
    cfg = make_config("kdv", 64)
    with pytest.raises(ValueError):
        SweepConfig(cfg.system, WeightSpec(cfg.weight.f, Region.cube(2, 0.5)), cfg.grid)


def test_weight_claim():
    S = catalog.build("kdv")
    K = Region.cube(2, 1)
    assert WeightSpec(parse_expr("-x2", 2), K, 1.0).validate(S) == pytest.approx(1.0)
    with pytest.raises(WeightError):
        WeightSpec(parse_expr("-x2", 2), K, 2.0).validate(S)
    with pytest.raises(WeightError):
        WeightSpec(parse_expr("i*x2", 2), K, 1.0).validate(S)


def test_heisenberg_sweep_example():
    rep = run_sweep(make_config("heisenberg1", 32))
    assert rep.positive and rep.slope >= 0.9
    star = run_sweep(make_config("heisenberg1", 32, target="P1*"))
    assert star.positive


def test_degenerate_config_aborts():
    X1 = VectorField([parse_expr("0", 2), parse_expr("x2", 2)])
    S = SystemSpec(1, 1, VectorField.coordinate(2, 1), (X1,), {(1, 1): (parse_expr("0", 2),)})
    K = Region.cube(2, 1)
    cfg = SweepConfig(S, WeightSpec(parse_expr("-x2", 2), K, 1e-3), Grid.around(K, 32), (1, 2), 2)
    with pytest.raises(HypothesisFailure) as err:
        run_sweep(cfg)
    assert "degenerate" in str(err.value)
    assert err.value.report is not None


def test_fitting_rules():
    lam = [1, 2, 4, 8, 16, 32, 64]
    r = [5.0, 3.0, 2.0, 4.0, 8.0, 16.0, 32.0]
    assert fit_growth(lam, r) == pytest.approx(1.0)
    assert fit_constants(lam, r) == (2.0, 4.0)
    assert fit_constants([1, 2], [1.0, 2.0]) == (1.0, 1.0)


def test_solvability_examples():
    S = catalog.build("kdv")
    K = Region.cube(2, 1)
    g = Grid.around(K, 64)
    u = modulated_bump(K, g, (0.0, 4.0))
    r = solvability_ratio(S, u, 0.0)
    assert r > 0
    assert solvability_ratio(S, plain(u) * 2, 0.0) == pytest.approx(solvability_ratio(S, plain(u), 0.0), rel=1e-12)
    assert solvability_ratio(S, plain(u), 1.0) >= solvability_ratio(S, plain(u), 0.0)
    assert solvability_ratio(S, u, 0.0) == pytest.approx(solvability_ratio(S, plain(u), 0.0), rel=1e-10)
    with pytest.raises(ValueError):
        solvability_ratio(S, plain(u) * 0, 0.0)


def test_rothschild_stein():
    K = Region.cube(2, 1)
    g = Grid.around(K, 64)
    grad = [VectorField.coordinate(2, 1), VectorField.coordinate(2, 2)]
    fam = gen_test_functions(K, g, 10, 3)
    rep = rothschild_stein_check(grad, K, g, 1, fam)
    assert rep.C > 0
    with pytest.raises(ValueError):
        rothschild_stein_check(grad, K, g, 1, [])
    with pytest.raises(HypothesisFailure):
        rothschild_stein_check(grad[:1], K, g, 1, fam)
    # high-frequency localized wave: sum |xi|^2 / (1 + |xi|^2) -> 1
    ratios = [rothschild_stein_check(grad, K, Grid.around(K, 128), 1,
                                     [modulated_bump(K, Grid.around(K, 128), (w, 0.0))]).C for w in (4, 16, 40)]
    assert ratios[0] < ratios[1] < ratios[2] < 1
    assert ratios[2] > 0.99


def test_report_files(tmp_path):
    cfg = make_config("kdv", 64, count=5)
    rep = run_sweep(cfg)
    csv_path, json_path = emit_report(rep, tmp_path / "a")
    text = open(csv_path).read()
    assert text.splitlines()[0] == "lambda,inf_ratio,median_ratio"
    back = read_csv(csv_path)
    assert back["inf_ratio"] == rep.inf_ratio and back["lambda"] == rep.lambdas
    summary = json.load(open(json_path))
    assert summary["framing"] == FRAMING
    assert summary["config"]["seed"] == 7 and summary["config"]["weight"] == "-x"
    assert "version" in summary
    emit_report(run_sweep(make_config("kdv", 64, count=5)), tmp_path / "b")
    for name in ("sweep.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_refinement_is_stable_for_kdv():
    cfg = make_config("kdv", 64, count=10)
    a, b = run_sweep(cfg), run_sweep(refined(cfg))
    assert max(abs(x - y) / x for x, y in zip(a.inf_ratio, b.inf_ratio)) < 0.02
