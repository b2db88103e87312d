"""
Long-running end to end checks of the solver against brute-force and
analytic answers. Deselected by default, run with ``pytest -m slow``.
"""
from time import perf_counter

import numpy as np
import pytest

from lsmcport.config import RunConfig
from lsmcport.evaluation import (
    UniformRandomPolicy,
    crra_utility,
    replay_policy,
)
from lsmcport.grid import build_simplex_grid
from lsmcport.solver import (
    Maximizer,
    extraction_profile,
    forward_simulate,
    search_controls,
    solve,
)

from tests.assets.markets import lognormal_market, small_spec


pytestmark = pytest.mark.slow

NOISE = 1e-3


def pinned_cell(horizon, mesh, mode, n_paths=10000, gamma=10.0):
    config = RunConfig(n_paths=n_paths, n_eval_paths=n_paths)
    model, assets = config.resolve_market()
    spec = config.problem(model, assets, horizon, gamma, mesh, mode)
    return config, spec


class TestMaximizerOracle:
    """
    The local adaptive maximizer against exhaustive search on a fine
    lattice
    """
    @pytest.mark.parametrize('d,low,high', [(1, 0.15, 0.85), (2, 0.15, 0.4)])
    def test_noisy_quadratics(self, d, low, high):
        rng = np.random.default_rng(2024 + d)
        grid = build_simplex_grid(d, 0.25)
        fine = build_simplex_grid(d, 2.0 ** -10)
        targets = rng.uniform(low, high, size=(100, d))

        cv = -((grid.nodes[None, :, :] - targets[:, None, :]) ** 2).sum(-1)
        cv += NOISE * rng.standard_normal(cv.shape)

        tick = perf_counter()
        found = search_controls(cv, grid, Maximizer('local_adaptive'), 5)
        assert perf_counter() - tick < 10.0

        for alpha, target in zip(found.alpha, targets):
            surface = -((fine.nodes - target) ** 2).sum(axis=1)
            best = fine.nodes[np.argmax(surface)]
            assert np.max(np.abs(alpha - best)) <= 1 / 128 + 2 * NOISE


class TestOnePeriodOracle:
    """
    One-period allocation against a sampled expected utility maximized
    on a fine grid
    """
    def test_lognormal(self):
        market = lognormal_market(0.03, 0.1)
        spec = small_spec(market, horizon=1, gamma=10.0, mesh=0.125,
                          n_paths=100000, seed=3)
        policy = solve(spec)
        chosen = policy.act(0, market.start_state(), spec.w0)[0]

        rng = np.random.default_rng(17)
        excess = np.expm1(rng.normal(0.03, 0.1, size=1000000)) - spec.r_f
        weights = np.arange(1025) / 1024.0
        expected = np.empty_like(weights)
        for start in range(0, weights.size, 8):
            block = weights[start:start + 8, None]
            wealth = spec.w0 * (1.0 + spec.r_f + block * excess[None, :])
            expected[start:start + 8] = \
                crra_utility(wealth, 10.0).mean(axis=1)
        best = weights[np.argmax(expected)]

        assert 0.2 < best < 0.45
        assert chosen == pytest.approx(best, abs=0.02)


class TestSyntheticMarket:
    """
    Adaptive extraction on a coarse grid against exhaustive search on a
    fine one
    """
    def test_coarse_adaptive_matches_fine_grid(self):
        config = RunConfig(source='synthetic', n_synthetic_assets=2,
                           n_paths=10000)
        model, assets = config.resolve_market()
        coarse = config.problem(model, assets, 3, 10.0, 0.125,
                                'local_adaptive')
        fine = config.problem(model, assets, 3, 10.0, 1 / 32, 'grid_only')

        start = model.start_state()
        coarse_alpha = solve(coarse).act(0, start, coarse.w0)
        fine_alpha = solve(fine).act(0, start, fine.w0)
        assert np.all(np.abs(coarse_alpha - fine_alpha) <= 0.04)


class TestPinnedMarket:
    """
    Mesh stability, efficiency, determinism and dominance on the shipped
    market
    """
    def test_mesh_stability(self):
        config, coarse = pinned_cell(6, 0.125, 'local_adaptive')
        _, fine = pinned_cell(6, 1 / 32, 'grid_only')

        coarse_report = replay_policy(solve(coarse), coarse,
                                      config.eval_seed, config.n_eval_paths)
        fine_report = replay_policy(solve(fine), fine, config.eval_seed,
                                    config.n_eval_paths)
        assert abs(coarse_report.cer_bp - fine_report.cer_bp) <= 1.0

    def test_local_extraction_is_faster(self):
        _, spec = pinned_cell(6, 0.125, 'grid_only')
        policy = solve(spec)
        paths = forward_simulate(spec)

        def extraction_seconds(mode):
            timed = policy.with_maximizer(mode)
            return min(
                sum(extraction_profile(timed, paths)['extraction_seconds'])
                for _ in range(3)
            )

        assert extraction_seconds('local_adaptive') <= \
            extraction_seconds('global_adaptive:4')

    def test_deterministic_files(self):
        config, spec = pinned_cell(3, 0.125, 'local_adaptive',
                                   n_paths=5000)
        runs = []
        for _ in range(2):
            policy = solve(spec)
            report = replay_policy(policy, spec, config.eval_seed,
                                   config.n_eval_paths)
            runs.append((policy.dumps(), report.dumps()))
        assert runs[0] == runs[1]

    def test_beats_random(self):
        config, spec = pinned_cell(6, 0.125, 'local_adaptive')
        solved = replay_policy(solve(spec), spec, config.eval_seed,
                               config.n_eval_paths)
        baseline = UniformRandomPolicy(spec.d, config.n_eval_paths,
                                       spec.horizon, config.eval_seed)
        random = replay_policy(baseline, spec, config.eval_seed,
                               config.n_eval_paths)
        assert solved.cer_bp - random.cer_bp > 5.0
