"""
The lsmcport convenience API

These functions run one cell of a run configuration (the first horizon,
gamma, mesh and maximizer mode unless told otherwise), using the module
configuration from :func:`lsmcport.config.get_config` when none is
given.
"""
from lsmcport import bench
from lsmcport.config import get_config
from lsmcport.evaluation import UniformRandomPolicy, replay_policy
from lsmcport.market import calibrate_var, log_returns
from lsmcport.solver import solve
from lsmcport.util import parse_mesh, read_price_csv


def calibrate(prices_csv):
    """
    Calibrate a VAR(1) market model on the log-returns of a price CSV.

    :param str prices_csv: price table, one column per series
    :rtype: lsmcport.market.VarModel
    """
    return calibrate_var(log_returns(read_price_csv(prices_csv)))


def cell_spec(config=None, horizon=None, gamma=None, mesh=None, mode=None):
    """
    The problem of one configuration cell.

    :rtype: lsmcport.solver.ProblemSpec
    """
    config = config or get_config()
    market, assets = config.resolve_market()
    return config.problem(
        market, assets,
        horizon if horizon is not None else config.horizons[0],
        gamma if gamma is not None else config.gammas[0],
        parse_mesh(mesh) if mesh is not None else config.meshes[0],
        mode if mode is not None else config.modes[0],
    )


def solve_cell(config=None, **cell):
    return solve(cell_spec(config, **cell))

solve_cell.__doc__ = solve.__doc__


def evaluate(policy, config=None, random_baseline=False, **cell):
    """
    Replay ``policy`` (or, with ``random_baseline``, the uniform random
    policy) on the evaluation seed of the configuration.

    :rtype: lsmcport.evaluation.EvalReport
    """
    config = config or get_config()
    spec = cell_spec(config, **cell)
    if random_baseline:
        policy = UniformRandomPolicy(spec.d, config.n_eval_paths,
                                     spec.horizon, config.eval_seed)
    return replay_policy(policy, spec, config.eval_seed, config.n_eval_paths)


def bench_regression(config=None, budget_secs=None, parallel=False):
    sweep = bench.RegressionBench(config or get_config(), budget_secs,
                                  parallel)
    return sweep.perform()

bench_regression.__doc__ = bench.RegressionBench.__doc__


def bench_mesh(config=None, budget_secs=None, parallel=False):
    sweep = bench.MeshBench(config or get_config(), budget_secs, parallel)
    return sweep.perform()

bench_mesh.__doc__ = bench.MeshBench.__doc__
