"""
Small markets, problems and policies with known answers for unit testing.

- ``degenerate_market``: every return is exactly zero
- ``deterministic_market``: constant per-period simple returns, no noise
- ``lognormal_market``: a single asset with i.i.d. lognormal returns
- ``AllCashPolicy``: a stand-in policy that never holds a risky asset
"""
import numpy as np

from lsmcport.costs import NO_COSTS
from lsmcport.evaluation import UtilitySpec
from lsmcport.market import VarModel
from lsmcport.solver import Maximizer, ProblemSpec


def degenerate_market(n_assets=1):
    dim = n_assets
    return VarModel(
        intercept=np.zeros(dim),
        coeff=np.zeros((dim, dim)),
        resid_cov=np.zeros((dim, dim)),
        names=tuple('ZERO{}'.format(i + 1) for i in range(dim)),
    )


def deterministic_market(returns):
    """Series whose simple return every period is ``returns[i]``."""
    returns = np.atleast_1d(np.asarray(returns, dtype=float))
    dim = returns.size
    return VarModel(
        intercept=np.log1p(returns),
        coeff=np.zeros((dim, dim)),
        resid_cov=np.zeros((dim, dim)),
        names=tuple('FIXED{}'.format(i + 1) for i in range(dim)),
    )


def lognormal_market(mu=0.03, sigma=0.2):
    """One asset with log-return ``N(mu, sigma**2)`` each period."""
    return VarModel(
        intercept=[mu],
        coeff=[[0.0]],
        resid_cov=[[sigma * sigma]],
        names=('RISKY',),
    )


def small_spec(market, horizon=1, gamma=10.0, mesh=0.25, n_paths=2000,
               seed=7, mode='local_adaptive', costs=NO_COSTS, **kwargs):
    return ProblemSpec(
        market=market,
        horizon=horizon,
        utility=UtilitySpec(gamma),
        mesh=mesh,
        n_paths=n_paths,
        seed=seed,
        costs=costs,
        maximizer=Maximizer.parse(mode),
        **kwargs
    )


class AllCashPolicy:
    """Keeps all wealth in the risk-free account."""
    maximizer = 'all_cash'

    def __init__(self, d):
        self.d = d

    def check_compatible(self, spec):
        pass

    def act(self, n, z, w):
        return np.zeros(self.d)

    def act_many(self, n, z, w):
        return np.zeros((len(w), self.d))


def write_price_csv(path, prices, names=None, start='2020-01-31'):
    """Write a month-end price table with one column per series."""
    prices = np.atleast_2d(np.asarray(prices, dtype=float))
    if names is None:
        names = ['S{}'.format(i + 1) for i in range(prices.shape[1])]
    dates = np.arange(prices.shape[0])
    with open(path, 'w') as f:
        f.write(','.join(['date'] + list(names)) + '\n')
        for i, row in zip(dates, prices):
            f.write('{}+{},'.format(start, i)
                    + ','.join(repr(float(v)) for v in row) + '\n')
    return path


def price_history(n_obs=240, seed=11):
    """Prices of a bond, an equity and a signal from a known VAR."""
    rng = np.random.default_rng(seed)
    coeff = np.array([[0.1, 0.0, 0.0],
                      [0.0, 0.05, 0.5],
                      [0.0, 0.0, 0.6]])
    intercept = np.array([0.004, 0.006, 0.0])
    sd = np.array([0.01, 0.04, 0.01])
    x = np.zeros((n_obs, 3))
    for t in range(1, n_obs):
        x[t] = intercept + coeff @ x[t - 1] + sd * rng.standard_normal(3)
    return 100.0 * np.exp(np.cumsum(x, axis=0))
