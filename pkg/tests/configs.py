"""Standard sweep configurations shared by the harness and acceptance tests."""

from kdvcarleman import catalog
from kdvcarleman.grid import Grid
from kdvcarleman.harness import SweepConfig, WeightSpec
from kdvcarleman.hypotheses import Region

# dimension -> points per axis of the base grid
BASE_SHAPE = {2: 256, 3: 64, 4: 32}


def make_config(key, shape=None, target="P1", count=50, seed=7, lambdas=(1, 2, 4, 8, 16, 32, 64)):
    S = catalog.build(key)
    K = Region.cube(S.dim, 1)
    f = catalog.default_weight(S)
    g = Grid.around(K, shape or BASE_SHAPE[S.dim])
    return SweepConfig(S, WeightSpec(f, K, 1.0), g, lambdas, count, seed, 0.0, target)


def refined(cfg):
    return SweepConfig(cfg.system, cfg.weight, cfg.grid.refined(2), cfg.lambdas, cfg.num_test_functions,
                       cfg.seed, cfg.sobolev_s, cfg.target, cfg.max_len)
