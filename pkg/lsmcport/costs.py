"""
Trading costs and the wealth transition.

Three cost components apply to a rebalancing trade ``dq`` (units per
asset): a transaction cost proportional to turnover, a liquidity cost
given by the displacement integral of the marginal supply-demand curve
(MSDC), and a permanent price impact equal to a fraction of the
temporary MSDC peak.

All functions are vectorized over numpy arrays and pure.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from lsmcport.errors import InputError


COST_TIMINGS = ('pre', 'post')
SERIES_CUTOFF = 1.0
SERIES_TERMS = 30


@dataclass(frozen=True)
class CostModel:
    """
    Cost parameters. ``rel_spread`` sets ``S_A = S (1 + rel_spread / 2)``
    and ``S_B = S (1 - rel_spread / 2)``; zero means ``S_B = S_A``.
    ``cost_timing`` is ``pre`` (costs paid from cash before the period's
    returns accrue) or ``post`` (deducted after).
    """
    tc_rate: float = 0.003
    k: float = 8e-6
    perm_impact_frac: float = 2.0 / 3.0
    rel_spread: float = 0.0
    enabled: bool = True
    cost_timing: str = 'pre'

    def __post_init__(self):
        if not self.tc_rate >= 0.0:
            raise InputError('tc_rate must be nonnegative')
        if not self.k >= 0.0:
            raise InputError('k must be nonnegative')
        if not 0.0 <= self.perm_impact_frac <= 1.0:
            raise InputError('perm_impact_frac must lie in [0, 1]')
        if not 0.0 <= self.rel_spread < 2.0:
            raise InputError('rel_spread must lie in [0, 2)')
        if self.cost_timing not in COST_TIMINGS:
            raise InputError('cost_timing must be one of {}'
                             .format(', '.join(COST_TIMINGS)))

    @property
    def bid_ask_equal(self):
        return self.rel_spread == 0.0

    def quotes(self, s):
        """Ask and bid prices around the mid price ``s``."""
        half = 0.5 * self.rel_spread
        return s * (1.0 + half), s * (1.0 - half)

    def to_dict(self):
        return {
            'tc_rate': self.tc_rate,
            'k': self.k,
            'perm_impact_frac': self.perm_impact_frac,
            'rel_spread': self.rel_spread,
            'enabled': self.enabled,
            'cost_timing': self.cost_timing,
        }


NO_COSTS = CostModel(enabled=False)


@dataclass(frozen=True)
class TradePlan:
    """Positions before and after a rebalancing trade."""
    pre_prices: np.ndarray
    pre_positions: np.ndarray
    post_positions: np.ndarray

    @property
    def delta(self):
        return self.post_positions - self.pre_positions

    def turnover_value(self):
        return np.sum(np.abs(self.delta) * self.pre_prices, axis=-1)


class WealthStep(NamedTuple):
    """Outcome of one wealth transition."""
    w_next: np.ndarray
    positions: np.ndarray
    post_prices: np.ndarray
    floored: np.ndarray


def msdc_price(dq, s_a, s_b, k):
    """
    Marginal supply-demand curve: ``s_a * exp(k sqrt|dq|)`` for purchases,
    ``s_b * exp(-k sqrt|dq|)`` for sales and ``s_a`` at ``dq == 0``.
    """
    dq = np.asarray(dq, dtype=float)
    root = k * np.sqrt(np.abs(dq))
    return np.where(dq < 0.0, s_b * np.exp(-root), s_a * np.exp(root))


def _excess_integral(y):
    """
    ``1 + exp(y) (y - 1) - y**2 / 2``, summed as its power series
    ``sum_{m>=3} (m - 1) y**m / m!`` where ``|y| < 1``.
    """
    y = np.asarray(y, dtype=float)
    with np.errstate(over='ignore', invalid='ignore'):
        term = 0.5 * y * y
        series = np.zeros_like(y)
        for m in range(3, SERIES_TERMS + 3):
            term = term * y / m
            series = series + (m - 1) * term
        closed = 1.0 + np.exp(y) * (y - 1.0) - 0.5 * y * y
    return np.where(np.abs(y) < SERIES_CUTOFF, series, closed)


def liquidity_cost(dq, s_a, s_b, k):
    """
    Liquidity cost of a trade, the MSDC displacement integral
    ``int_0^|dq| |MSDC(+-u) - S| du``. Written with
    ``lambda(dq) = int_0^|dq| exp(sign(dq) k sqrt(u)) du
    = (2 / k**2) (1 + exp(x) (x - 1))``, ``x = sign(dq) k sqrt|dq|``, it is
    ``s_a (lambda - dq)`` for purchases and ``s_b (|dq| - lambda)`` for
    sales.

    :returns: nonnegative cost per element of ``dq``
    :raises InputError: on non-finite input
    """
    dq = np.asarray(dq, dtype=float)
    s_a = np.asarray(s_a, dtype=float)
    s_b = np.asarray(s_b, dtype=float)
    if not (np.all(np.isfinite(dq)) and np.all(np.isfinite(s_a))
            and np.all(np.isfinite(s_b)) and np.isfinite(k)):
        raise InputError('liquidity_cost inputs must be finite')
    if k == 0.0:
        return np.zeros(np.broadcast(dq, s_a, s_b).shape)

    sign = np.sign(dq)
    x = k * np.sqrt(np.abs(dq))
    excess = sign * _excess_integral(sign * x) * (2.0 / (k * k))
    cost = np.where(dq > 0.0, s_a, s_b) * excess
    return np.where(dq == 0.0, 0.0, np.maximum(cost, 0.0))


def transaction_cost(turnover_value, tc_rate):
    """Proportional cost ``tc_rate * turnover_value``."""
    return tc_rate * np.asarray(turnover_value, dtype=float)


def permanent_impact(dq, s_pre, k, frac, rel_spread=0.0):
    """
    Post-trade price ``s_pre + frac * (MSDC(dq) - s_pre)``; untouched where
    ``dq == 0``.
    """
    dq = np.asarray(dq, dtype=float)
    s_pre = np.asarray(s_pre, dtype=float)
    half = 0.5 * rel_spread
    peak = msdc_price(dq, s_pre * (1.0 + half), s_pre * (1.0 - half), k)
    return np.where(dq == 0.0, s_pre, s_pre + frac * (peak - s_pre))


def trade_costs(plan, costs):
    """
    Transaction and liquidity cost of a trade, summed over assets.

    :rtype: tuple(numpy.ndarray, numpy.ndarray)
    """
    s_a, s_b = costs.quotes(plan.pre_prices)
    tc = transaction_cost(plan.turnover_value(), costs.tc_rate)
    lc = np.sum(liquidity_cost(plan.delta, s_a, s_b, costs.k), axis=-1)
    return tc, lc


def step_wealth(w, alpha, s, r_next, r_f, costs, prev_positions,
                wealth_floor=1e-8):
    """
    One-period wealth transition. Positions are ``alpha * w / s`` and cash
    is ``(1 - sum(alpha)) * w``. Trading costs against ``prev_positions``
    are deducted, permanent impact moves the prices at which the period's
    returns accrue, and

        ``W_next = W + q_f r_f + q . (S' * r_next)``

    which is the frictionless wealth equation when costs are disabled.

    With ``cost_timing='pre'`` the cost ``c`` is paid out of cash before
    the period opens, so it also forgoes the risk-free accrual and the
    wealth is reduced by ``c * (1 + r_f)``. With ``'post'`` the cost is
    settled at the end of the period and reduces wealth by ``c`` only.

    :param w: wealth, shape (M,) or scalar
    :param alpha: risky weights, shape (M, d) or (d,)
    :param s: pre-trade prices, shape (M, d) or (d,)
    :param r_next: simple returns over the period, shape (M, d) or (d,)
    :param float r_f: per-period risk-free return
    :param CostModel costs: cost parameters
    :param prev_positions: units held before the trade
    :param float wealth_floor: lower bound applied to the new wealth
    :rtype: WealthStep
    """
    w = np.asarray(w, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    s = np.asarray(s, dtype=float)
    r_next = np.asarray(r_next, dtype=float)

    positions = alpha * (w[..., None] / s)
    cash = (1.0 - alpha.sum(axis=-1)) * w

    if costs.enabled:
        plan = TradePlan(s, np.asarray(prev_positions, dtype=float),
                         positions)
        tc, lc = trade_costs(plan, costs)
        cost = tc + lc
        post_prices = permanent_impact(
            plan.delta, s, costs.k, costs.perm_impact_frac, costs.rel_spread
        )
    else:
        cost = 0.0
        post_prices = np.broadcast_to(s, positions.shape).copy()

    gains = np.sum(positions * post_prices * r_next, axis=-1)
    if costs.enabled and costs.cost_timing == 'pre':
        w_next = (w - cost) + (cash - cost) * r_f + gains
    else:
        w_next = w + cash * r_f + gains - cost

    floored = w_next < wealth_floor
    w_next = np.where(floored, wealth_floor, w_next)
    return WealthStep(w_next, positions, post_prices, floored)
