"""
Tests for transaction, liquidity and impact costs and the wealth
transition
"""
import numpy as np
import pytest
from scipy import integrate

from lsmcport.costs import (
    NO_COSTS,
    CostModel,
    TradePlan,
    liquidity_cost,
    msdc_price,
    permanent_impact,
    step_wealth,
    trade_costs,
    transaction_cost,
)
from lsmcport.errors import InputError


K = 8e-6
S = 100.0


def displacement_integral(dq, s, k):
    """Numerical ``int_0^|dq| |MSDC(+-u) - S| du``."""
    if dq > 0:
        integrand = lambda u: s * np.expm1(k * np.sqrt(u))
    else:
        integrand = lambda u: -s * np.expm1(-k * np.sqrt(u))
    value, _ = integrate.quad(integrand, 0.0, abs(dq), epsabs=0.0,
                              epsrel=1e-10, limit=200)
    return value


class TestCostModel:
    """
    Tests for cost parameter validation
    """
    def test_defaults(self):
        costs = CostModel()
        assert costs.tc_rate == 0.003
        assert costs.k == 8e-6
        assert costs.perm_impact_frac == pytest.approx(2.0 / 3.0)
        assert costs.bid_ask_equal

    def test_quotes(self):
        ask, bid = CostModel(rel_spread=0.02).quotes(100.0)
        assert ask == pytest.approx(101.0)
        assert bid == pytest.approx(99.0)

    @pytest.mark.parametrize('field,value', [
        ('tc_rate', -0.1),
        ('k', -1.0),
        ('perm_impact_frac', 1.5),
        ('rel_spread', 2.0),
        ('cost_timing', 'later'),
    ])
    def test_invalid(self, field, value):
        with pytest.raises(InputError):
            CostModel(**{field: value})


class TestMsdcPrice:
    """
    Tests for the marginal supply-demand curve
    """
    def test_no_trade(self):
        assert msdc_price(0.0, 101.0, 99.0, K) == 101.0

    def test_buy_and_sell(self):
        assert msdc_price(1e4, S, S, K) == pytest.approx(S * np.exp(K * 100))
        assert msdc_price(-1e4, S, S, K) == pytest.approx(
            S * np.exp(-K * 100)
        )


class TestLiquidityCost:
    """
    Tests for the MSDC displacement integral
    """
    @pytest.mark.parametrize('dq', [
        1e3, -1e3, 1e4, -1e4, 1e5, -1e5, 1e6, -1e6,
    ])
    def test_matches_quadrature(self, dq):
        expected = displacement_integral(dq, S, K)
        assert liquidity_cost(dq, S, S, K) == pytest.approx(expected,
                                                            rel=1e-6)

    @pytest.mark.parametrize('dq', [2e10, -2e10])
    def test_closed_form_branch(self, dq):
        expected = displacement_integral(dq, S, K)
        assert liquidity_cost(dq, S, S, K) == pytest.approx(expected,
                                                            rel=1e-6)

    def test_zero_trade(self):
        assert liquidity_cost(0.0, S, S, K) == 0.0

    def test_zero_depth(self):
        assert np.all(liquidity_cost([10.0, -5.0], S, S, 0.0) == 0.0)

    def test_small_trade_asymptotics(self):
        expected = S * 2.0 / 3.0 * K
        assert liquidity_cost(1.0, S, S, K) == pytest.approx(expected,
                                                             rel=1e-5)

    def test_buying_costs_more_than_selling(self):
        assert liquidity_cost(5e5, S, S, K) > liquidity_cost(-5e5, S, S, K)

    def test_nonnegative_and_vectorized(self):
        dq = np.linspace(-1e6, 1e6, 101)
        cost = liquidity_cost(dq, S, S, K)
        assert cost.shape == dq.shape
        assert np.all(cost >= 0.0)

    def test_non_finite(self):
        with pytest.raises(InputError):
            liquidity_cost(np.inf, S, S, K)


class TestTransactionCost:
    """
    Tests for proportional transaction costs
    """
    def test_rate(self):
        assert transaction_cost(1000.0, 0.003) == pytest.approx(3.0)

    def test_turnover(self):
        plan = TradePlan(np.array([100.0, 50.0]), np.array([1.0, 2.0]),
                         np.array([3.0, 0.0]))
        assert plan.turnover_value() == pytest.approx(300.0)
        tc, lc = trade_costs(plan, CostModel(k=0.0))
        assert tc == pytest.approx(0.9)
        assert lc == 0.0


class TestPermanentImpact:
    """
    Tests for the permanent price impact
    """
    def test_no_trade(self):
        assert permanent_impact(0.0, S, K, 2.0 / 3.0) == S

    def test_buy_raises_price(self):
        dq = 1e6
        expected = S * (1.0 + 2.0 / 3.0 * np.expm1(K * 1e3))
        assert permanent_impact(dq, S, K, 2.0 / 3.0) == pytest.approx(
            expected
        )

    def test_sell_lowers_price(self):
        assert permanent_impact(-1e6, S, K, 2.0 / 3.0) < S


class TestStepWealth:
    """
    Tests for the one-period wealth transition
    """
    def test_frictionless(self):
        w = np.array([1.0, 2.0])
        alpha = np.array([[0.5, 0.25], [0.0, 1.0]])
        r = np.array([[0.02, -0.01], [0.03, 0.05]])
        step = step_wealth(w, alpha, np.full((2, 2), 100.0), r, 0.004,
                           NO_COSTS, np.zeros((2, 2)))
        expected = w * (1.0 + np.sum(alpha * r, axis=1)
                        + (1.0 - alpha.sum(axis=1)) * 0.004)
        assert np.allclose(step.w_next, expected, rtol=1e-14)
        assert np.allclose(step.positions, alpha * w[:, None] / 100.0)
        assert not np.any(step.floored)

    def test_all_cash_without_trading(self):
        step = step_wealth(np.array([1.0]), np.zeros((1, 2)),
                           np.full((1, 2), 100.0), np.full((1, 2), 0.5),
                           0.00375, CostModel(), np.zeros((1, 2)))
        assert step.w_next[0] == pytest.approx(1.00375, rel=1e-14)

    def test_costs_reduce_wealth(self):
        args = (np.array([1e5]), np.array([[0.6]]), np.array([[100.0]]),
                np.array([[0.01]]), 0.00375)
        free = step_wealth(*args, NO_COSTS, np.zeros((1, 1)))
        costly = step_wealth(*args, CostModel(), np.zeros((1, 1)))
        assert costly.w_next[0] < free.w_next[0]

    def test_cost_timing(self):
        args = (np.array([1e5]), np.array([[0.6]]), np.array([[100.0]]),
                np.array([[0.01]]), 0.00375)
        prior = np.zeros((1, 1))
        pre = step_wealth(*args, CostModel(perm_impact_frac=0.0), prior)
        post = step_wealth(*args, CostModel(perm_impact_frac=0.0,
                                            cost_timing='post'), prior)
        plan = TradePlan(np.array([[100.0]]), prior, pre.positions)
        cost = sum(trade_costs(plan, CostModel()))
        assert post.w_next[0] - pre.w_next[0] == pytest.approx(
            cost[0] * 0.00375, rel=1e-6
        )

    @pytest.mark.parametrize('timing,factor', [('pre', 1.02),
                                               ('post', 1.0)])
    def test_cost_against_frictionless(self, timing, factor):
        args = (np.array([1e5]), np.array([[0.6]]), np.array([[100.0]]),
                np.array([[0.01]]), 0.02)
        prior = np.zeros((1, 1))
        costs = CostModel(perm_impact_frac=0.0, cost_timing=timing)
        free = step_wealth(*args, NO_COSTS, prior)
        costly = step_wealth(*args, costs, prior)
        plan = TradePlan(np.array([[100.0]]), prior, costly.positions)
        cost = sum(trade_costs(plan, costs))
        assert free.w_next[0] - costly.w_next[0] == pytest.approx(
            cost[0] * factor, rel=1e-9
        )

    def test_wealth_floor(self):
        step = step_wealth(np.array([1.0, 1.0]), np.array([[1.0], [0.0]]),
                           np.array([[100.0], [100.0]]),
                           np.array([[-1.0], [-1.0]]), 0.0, NO_COSTS,
                           np.zeros((2, 1)), wealth_floor=1e-8)
        assert step.w_next[0] == 1e-8
        assert step.floored.tolist() == [True, False]
        assert step.w_next[1] == 1.0

    def test_broadcast_over_nodes(self):
        w = np.array([1.0, 3.0])
        nodes = np.array([[0.0], [0.5], [1.0]])
        prices = np.array([[[100.0]], [[120.0]]])
        returns = np.array([[[0.02]], [[-0.01]]])
        prior = np.array([[[0.001]], [[0.02]]])
        costs = CostModel(k=1e-3)

        grid_step = step_wealth(w[:, None], nodes, prices, returns, 0.003,
                                costs, prior)

        assert grid_step.w_next.shape == (2, 3)
        for m in range(2):
            for j in range(3):
                single = step_wealth(w[m:m + 1], nodes[j][None, :],
                                     prices[m], returns[m], 0.003, costs,
                                     prior[m])
                assert grid_step.w_next[m, j] == pytest.approx(
                    single.w_next[0], rel=1e-14
                )
