"""
Utility functions, certainty-equivalent returns and out-of-sample policy
replay.
"""
import json
import logging
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np
import pandas as pd

from lsmcport.costs import step_wealth
from lsmcport.errors import UsageError, UtilityDomainError
from lsmcport.market import (
    RANDOM_POLICY_STREAM,
    draw_control_panel,
    simulate_paths,
)


logger = logging.getLogger(__name__)

BASIS_POINTS = 1e4

REPORT_COLUMNS = (
    'mode', 'mesh', 'gamma', 'horizon', 'cer_bp', 'cer_se_bp',
    'mean_wealth', 'std_wealth', 'n_eval_paths', 'seed',
    'floor_activations', 'cash_weight',
)


def _check_wealth(w):
    w = np.asarray(w, dtype=float)
    if np.any(~(w > 0.0)):
        raise UtilityDomainError('Utility is only defined for wealth > 0')
    return w


def crra_utility(w, gamma):
    """
    ``w**(1 - gamma) / (1 - gamma)``.

    :raises UtilityDomainError: if any ``w <= 0``
    :raises UsageError: unless ``gamma > 0`` and ``gamma != 1``
    """
    if not gamma > 0.0 or gamma == 1.0:
        raise UsageError('CRRA utility needs gamma > 0 and gamma != 1, '
                         'use log utility for gamma == 1')
    w = _check_wealth(w)
    return np.power(w, 1.0 - gamma) / (1.0 - gamma)


def log_utility(w):
    return np.log(_check_wealth(w))


@dataclass(frozen=True)
class UtilitySpec:
    """Relative risk aversion, with ``log_utility`` selecting ``log(w)``."""
    gamma: float
    log_utility: bool = False

    def __post_init__(self):
        if not self.gamma > 0.0:
            raise UsageError('gamma must be positive')
        if self.gamma == 1.0 and not self.log_utility:
            raise UsageError('gamma == 1 requires log_utility')

    def __call__(self, w):
        if self.log_utility:
            return log_utility(w)
        return crra_utility(w, self.gamma)

    def inverse(self, u):
        u = np.asarray(u, dtype=float)
        if self.log_utility:
            return np.exp(u)
        return np.power((1.0 - self.gamma) * u, 1.0 / (1.0 - self.gamma))

    def marginal(self, w):
        """``U'(w)``, which is ``w**-gamma`` (or ``1/w`` for log)."""
        w = np.asarray(w, dtype=float)
        if self.log_utility:
            return 1.0 / w
        return np.power(w, -self.gamma)

    def to_dict(self):
        return {'gamma': self.gamma, 'log_utility': self.log_utility}


def cer_estimate(terminal_wealths, utility, periods):
    """
    Certainty-equivalent return per period and its delta-method standard
    error, both in basis points.

    :param terminal_wealths: sample of terminal wealth, initial wealth 1
    :param UtilitySpec utility: the investor's utility
    :param int periods: number of periods T
    :rtype: tuple(float, float)
    :raises UsageError: on an empty sample
    """
    sample = np.asarray(terminal_wealths, dtype=float).reshape(-1)
    if sample.size == 0:
        raise UsageError('Cannot compute a CER from an empty sample')
    if periods < 1:
        raise UsageError('periods must be at least 1')
    utils = utility(sample)
    mean_u = float(np.mean(utils))
    equivalent = float(utility.inverse(mean_u))
    cer_bp = (equivalent ** (1.0 / periods) - 1.0) * BASIS_POINTS

    if sample.size < 2:
        return cer_bp, 0.0
    se_u = float(np.std(utils, ddof=1)) / np.sqrt(sample.size)
    slope = (equivalent ** (1.0 / periods - 1.0) / periods
             / float(utility.marginal(equivalent)))
    return cer_bp, abs(slope) * se_u * BASIS_POINTS


def cer(terminal_wealths, gamma, periods, log=False):
    """
    ``U^-1(mean U(W_T))**(1/T) - 1`` in basis points per period.

    :raises UsageError: on an empty sample
    """
    return cer_estimate(terminal_wealths, UtilitySpec(gamma, log), periods)[0]


@dataclass(frozen=True)
class EvalReport:
    """Out-of-sample performance of a policy."""
    cer_bp: float
    cer_se_bp: float
    mean_wealth: float
    std_wealth: float
    n_eval_paths: int
    initial_allocation: Tuple[float, ...]
    seed: int
    floor_activations: int = 0
    mode: str = ''
    mesh: float = float('nan')
    gamma: float = float('nan')
    horizon: int = 0
    asset_names: Tuple[str, ...] = field(default=())

    @property
    def cash_weight(self):
        return 1.0 - sum(self.initial_allocation)

    def to_dict(self):
        return {
            'cer_bp': self.cer_bp,
            'cer_se_bp': self.cer_se_bp,
            'mean_wealth': self.mean_wealth,
            'std_wealth': self.std_wealth,
            'n_eval_paths': self.n_eval_paths,
            'initial_allocation': dict(zip(self.allocation_labels(),
                                           self.initial_allocation)),
            'cash_weight': self.cash_weight,
            'seed': self.seed,
            'floor_activations': self.floor_activations,
            'mode': self.mode,
            'mesh': self.mesh,
            'gamma': self.gamma,
            'horizon': self.horizon,
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n'

    def allocation_labels(self):
        names = self.asset_names or tuple(
            'asset{}'.format(i + 1)
            for i in range(len(self.initial_allocation))
        )
        return tuple('weight_{}'.format(name) for name in names)

    def to_row(self):
        """One CSV row: the fixed columns, then one weight per asset."""
        row = {column: getattr(self, column) for column in REPORT_COLUMNS}
        row.update(zip(self.allocation_labels(), self.initial_allocation))
        return row

    def to_frame(self):
        return pd.DataFrame([self.to_row()])


class UniformRandomPolicy:
    """
    Baseline policy drawing weights uniformly from the admissible set,
    independently per path and step.
    """
    def __init__(self, d, n_paths, n_steps, seed):
        self.d = d
        self.panel = draw_control_panel(
            d, n_paths, n_steps, seed, stream=RANDOM_POLICY_STREAM
        )
        self.maximizer = 'uniform_random'

    def check_compatible(self, spec):
        if spec.d != self.d:
            raise UsageError('Random policy has {} assets, problem has {}'
                             .format(self.d, spec.d))

    def act(self, n, z, w):
        return self.panel[0, n].copy()

    def act_many(self, n, z, w):
        if len(w) != self.panel.shape[0]:
            raise UsageError('Random policy was drawn for {} paths'
                             .format(self.panel.shape[0]))
        return self.panel[:, n]


def replay_policy(policy, spec, eval_seed, n_eval_paths):
    """
    Replay ``policy`` on freshly simulated paths with full costs and report
    the CER of terminal wealth, a lower bound on the optimum in
    expectation.

    :param policy: a solved ``Policy`` or a :class:`UniformRandomPolicy`
    :param spec: the ``ProblemSpec`` the policy was solved for
    :param int eval_seed: simulation seed, distinct from ``spec.seed``
    :param int n_eval_paths: number of evaluation paths
    :rtype: EvalReport
    :raises UsageError: on an incompatible policy or a reused seed
    """
    if eval_seed == spec.seed:
        raise UsageError('The evaluation seed must differ from the solve '
                         'seed {}'.format(spec.seed))
    policy.check_compatible(spec)

    panels = simulate_paths(spec.market, spec.s0, n_eval_paths,
                            spec.horizon, eval_seed, assets=spec.assets)
    wealth = np.full(n_eval_paths, spec.w0)
    positions = np.zeros((n_eval_paths, spec.d))
    trade_prices = panels.prices[:, 0]
    floored = 0

    for n in range(spec.horizon):
        alpha = policy.act_many(n, panels.predictors[:, n], wealth)
        step = step_wealth(
            wealth, alpha, trade_prices, panels.returns[:, n + 1],
            spec.r_f, spec.costs, positions, spec.wealth_floor
        )
        floored += int(np.count_nonzero(step.floored))
        wealth = step.w_next
        positions = step.positions
        trade_prices = step.post_prices * (1.0 + panels.returns[:, n + 1])

    if floored:
        logger.warning('Wealth floor hit %d times during replay', floored)

    start = spec.market.start_state()
    initial = np.asarray(policy.act(0, start, spec.w0), dtype=float)
    relative = wealth / spec.w0
    cer_bp, cer_se_bp = cer_estimate(relative, spec.utility, spec.horizon)
    report = EvalReport(
        cer_bp=cer_bp,
        cer_se_bp=cer_se_bp,
        mean_wealth=float(np.mean(relative)),
        std_wealth=float(np.std(relative)),
        n_eval_paths=n_eval_paths,
        initial_allocation=tuple(float(a) for a in initial),
        seed=eval_seed,
        floor_activations=floored,
        mode=str(policy.maximizer),
        mesh=getattr(policy, 'mesh', float('nan')),
        gamma=spec.utility.gamma,
        horizon=spec.horizon,
        asset_names=spec.asset_names,
    )
    logger.info('Replayed %s policy on %d paths: CER %.2f bp',
                report.mode, n_eval_paths, cer_bp)
    return report
