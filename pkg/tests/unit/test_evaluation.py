"""
Tests for utility functions, certainty-equivalent returns and policy
replay
"""
import json

import numpy as np
import pytest

from lsmcport.costs import CostModel
from lsmcport.errors import UsageError, UtilityDomainError
from lsmcport.evaluation import (
    REPORT_COLUMNS,
    EvalReport,
    UniformRandomPolicy,
    UtilitySpec,
    cer,
    cer_estimate,
    crra_utility,
    log_utility,
    replay_policy,
)
from lsmcport.market import load_pinned_market
from lsmcport.solver import solve

from tests.assets.markets import AllCashPolicy, lognormal_market, small_spec


class TestCrraUtility:
    """
    Tests for power and log utility
    """
    def test_values(self):
        assert crra_utility(1.0, 10.0) == pytest.approx(-1.0 / 9.0)
        assert crra_utility(1.0, 5.0) == pytest.approx(-0.25)
        assert crra_utility(2.0, 0.5) == pytest.approx(2.0 * np.sqrt(2.0))

    def test_increasing_and_concave(self):
        u = crra_utility(np.linspace(0.5, 2.0, 50), 10.0)
        assert np.all(np.diff(u) > 0.0)
        assert np.all(np.diff(u, 2) < 0.0)

    @pytest.mark.parametrize('w', [0.0, -1.0])
    def test_domain(self, w):
        with pytest.raises(UtilityDomainError):
            crra_utility(w, 10.0)
        with pytest.raises(UtilityDomainError):
            log_utility(w)

    @pytest.mark.parametrize('gamma', [1.0, 0.0, -2.0])
    def test_gamma(self, gamma):
        with pytest.raises(UsageError):
            crra_utility(1.0, gamma)


class TestUtilitySpec:
    """
    Tests for the investor utility
    """
    @pytest.mark.parametrize('utility', [
        UtilitySpec(10.0), UtilitySpec(5.0), UtilitySpec(1.0, True),
    ])
    def test_inverse(self, utility):
        w = np.array([0.5, 1.0, 1.7])
        assert np.allclose(utility.inverse(utility(w)), w, rtol=1e-12)

    def test_gamma_one_needs_log(self):
        with pytest.raises(UsageError):
            UtilitySpec(1.0)

    def test_marginal(self):
        assert UtilitySpec(10.0).marginal(2.0) == pytest.approx(2.0 ** -10)
        assert UtilitySpec(1.0, True).marginal(4.0) == pytest.approx(0.25)


class TestCer:
    """
    Tests for certainty-equivalent returns
    """
    @pytest.mark.parametrize('gamma', [2.0, 5.0, 10.0, 15.0])
    def test_riskless(self, gamma):
        assert cer(np.full(100, 1.005 ** 6), gamma, 6) == pytest.approx(
            50.0, rel=1e-9
        )

    def test_no_growth(self):
        assert cer(np.ones(10), 10.0, 3) == pytest.approx(0.0, abs=1e-9)

    def test_two_point(self):
        w = np.array([0.9, 1.1])
        expected = (np.mean(w ** -9.0) ** (-1.0 / 9.0) - 1.0) * 1e4
        assert cer(w, 10.0, 1) == pytest.approx(expected, rel=1e-12)

    def test_spread_lowers_cer(self):
        assert cer([0.95, 1.05], 5.0, 1) < cer([1.0, 1.0], 5.0, 1)

    def test_log_utility(self):
        w = np.array([0.9, 1.2])
        expected = (np.exp(np.mean(np.log(w))) - 1.0) * 1e4
        assert cer(w, 1.0, 1, log=True) == pytest.approx(expected)

    def test_empty(self):
        with pytest.raises(UsageError):
            cer([], 10.0, 1)

    def test_standard_error(self):
        utility = UtilitySpec(10.0)
        assert cer_estimate(np.full(50, 1.01), utility, 2)[1] == 0.0
        rng = np.random.default_rng(0)
        small = rng.lognormal(0.0, 0.05, 1000)
        large = rng.lognormal(0.0, 0.05, 100000)
        assert cer_estimate(small, utility, 1)[1] > \
            cer_estimate(large, utility, 1)[1] > 0.0


class TestEvalReport:
    """
    Tests for evaluation reports
    """
    @pytest.fixture
    def report(self):
        return EvalReport(
            cer_bp=42.0, cer_se_bp=1.5, mean_wealth=1.05, std_wealth=0.02,
            n_eval_paths=1000, initial_allocation=(0.25, 0.5), seed=2,
            mode='local_adaptive', mesh=0.125, gamma=10.0, horizon=6,
            asset_names=('BOND', 'EQUITY'),
        )

    def test_cash_weight(self, report):
        assert report.cash_weight == pytest.approx(0.25)

    def test_row_order(self, report):
        row = report.to_row()
        assert list(row) == list(REPORT_COLUMNS) + \
            ['weight_BOND', 'weight_EQUITY']
        assert list(report.to_frame().columns) == list(row)

    def test_json(self, report):
        doc = json.loads(report.dumps())
        assert doc['initial_allocation'] == {'weight_BOND': 0.25,
                                             'weight_EQUITY': 0.5}
        assert doc['cer_bp'] == 42.0


class TestReplayPolicy:
    """
    Tests for out-of-sample replay
    """
    def test_all_cash_earns_risk_free(self):
        spec = small_spec(load_pinned_market(), horizon=6, assets=(0, 1),
                          costs=CostModel())
        report = replay_policy(AllCashPolicy(2), spec, 99, 500)
        assert report.cer_bp == pytest.approx(37.5, rel=1e-9)
        assert report.cash_weight == 1.0
        assert report.floor_activations == 0
        assert report.mode == 'all_cash'

    def test_reused_seed(self):
        spec = small_spec(lognormal_market())
        with pytest.raises(UsageError):
            replay_policy(AllCashPolicy(1), spec, spec.seed, 100)

    def test_reproducible(self):
        spec = small_spec(lognormal_market(), horizon=2, n_paths=500)
        policy = solve(spec)
        first = replay_policy(policy, spec, 3, 500)
        second = replay_policy(policy, spec, 3, 500)
        assert first.dumps() == second.dumps()
        assert first.mesh == 0.25
        assert first.asset_names == ('RISKY',)

    def test_incompatible_policy(self):
        spec = small_spec(lognormal_market(), n_paths=100)
        policy = solve(spec)
        other = small_spec(lognormal_market(), n_paths=100, gamma=5.0)
        with pytest.raises(UsageError):
            replay_policy(policy, other, 3, 100)

    def test_random_policy(self):
        spec = small_spec(load_pinned_market(), horizon=3, assets=(0, 1))
        policy = UniformRandomPolicy(2, 400, 3, seed=5)
        assert np.all(policy.panel >= 0.0)
        assert np.all(policy.panel.sum(axis=2) <= 1.0)
        report = replay_policy(policy, spec, 5, 400)
        assert report.mode == 'uniform_random'
        assert np.isfinite(report.cer_bp)

    def test_random_policy_path_count(self):
        spec = small_spec(lognormal_market(), horizon=2)
        policy = UniformRandomPolicy(1, 10, 2, seed=5)
        with pytest.raises(UsageError):
            replay_policy(policy, spec, 5, 20)

    def test_solved_beats_random(self):
        spec = small_spec(lognormal_market(0.02, 0.1), gamma=5.0,
                          n_paths=5000)
        policy = solve(spec)
        solved = replay_policy(policy, spec, 3, 5000)
        random = replay_policy(UniformRandomPolicy(1, 5000, 1, 3), spec, 3,
                               5000)
        assert solved.cer_bp > random.cer_bp
