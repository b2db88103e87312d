"""
Least squares Monte Carlo engine.

The forward pass simulates the market with randomized portfolio weights,
the backward pass regresses, for every node of the discrete control grid,
next-period value on the current state, and policies are extracted from
the fitted continuation values either by a plain grid argmax or by a
local (or global) polynomial fit over controls refined on shrinking
adaptive grids.
"""
import json
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from math import comb
from time import perf_counter
from typing import NamedTuple, Optional, Tuple

import numpy as np

from lsmcport.costs import CostModel, step_wealth
from lsmcport.errors import ConfigurationError, InputError, UsageError
from lsmcport.evaluation import UtilitySpec
from lsmcport.grid import ControlGrid, mesh_exponent, refine_candidates
from lsmcport.market import (
    PathSet,
    VarModel,
    draw_control_panel,
    simulate_paths,
)
from lsmcport.regression import (
    FeatureMap,
    LinearFit,
    fit_ols,
    fit_ridge,
    last_input_coefficients,
)
from lsmcport.util import digest


logger = logging.getLogger(__name__)

MODES = ('grid_only', 'local_adaptive', 'global_adaptive')
GLOBAL_DEGREES = (2, 3, 4)
LOCAL_DEGREE = 2
RIDGE_FACTOR = 1e-6
CHUNK_CELLS = 2 ** 22
POLICY_FORMAT = 1


@dataclass(frozen=True)
class Maximizer:
    """Policy extraction mode, ``degree`` only matters for global fits."""
    mode: str = 'local_adaptive'
    degree: int = LOCAL_DEGREE

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(
                'Unknown maximizer mode "{}", expected one of {}'
                .format(self.mode, ', '.join(MODES))
            )
        if self.mode == 'global_adaptive' and \
                self.degree not in GLOBAL_DEGREES:
            raise ConfigurationError(
                'Global control regression degree must be 2, 3 or 4'
            )

    @classmethod
    def parse(cls, text):
        """
        Parse ``grid_only``, ``local_adaptive`` or ``global_adaptive:<deg>``.

        :raises ConfigurationError: on anything else
        """
        mode, _, degree = str(text).strip().partition(':')
        if mode != 'global_adaptive':
            if degree:
                raise ConfigurationError(
                    'Maximizer mode "{}" takes no degree'.format(mode)
                )
            return cls(mode)
        try:
            return cls(mode, int(degree))
        except ValueError:
            raise ConfigurationError(
                'Expected global_adaptive:<degree>, got "{}"'.format(text)
            ) from None

    def __str__(self):
        if self.mode == 'global_adaptive':
            return '{}:{}'.format(self.mode, self.degree)
        return self.mode


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """
    A finite-horizon allocation problem: market, costs, utility and the
    numerical settings of its solution.
    """
    market: VarModel
    horizon: int
    utility: UtilitySpec
    mesh: float
    n_paths: int
    seed: int
    costs: CostModel = CostModel()
    assets: Optional[Tuple[int, ...]] = None
    s0: float = 100.0
    r_f: float = 0.045 / 12
    w0: float = 1.0
    refinements: int = 5
    maximizer: Maximizer = Maximizer()
    state_degree: int = 2
    ridge_factor: float = RIDGE_FACTOR
    wealth_floor_frac: float = 1e-8

    def __post_init__(self):
        assets = self.assets
        if assets is None:
            assets = range(self.market.dim)
        assets = tuple(int(i) for i in assets)
        if not assets or any(not 0 <= i < self.market.dim for i in assets):
            raise UsageError('Tradable assets must be series of the market')
        object.__setattr__(self, 'assets', assets)

        for label in ('r_f', 'w0', 's0', 'mesh', 'ridge_factor',
                      'wealth_floor_frac'):
            if not np.isfinite(getattr(self, label)):
                raise InputError('{} must be finite'.format(label))
        if self.horizon < 1:
            raise UsageError('horizon must be at least 1')
        if self.w0 <= 0.0 or self.s0 <= 0.0:
            raise UsageError('w0 and s0 must be positive')
        if self.refinements < 0:
            raise UsageError('refinements must be nonnegative')
        mesh_exponent(self.mesh)
        if self.n_paths < self.n_state_features:
            raise UsageError(
                'n_paths {} is below the {} state regression features'
                .format(self.n_paths, self.n_state_features)
            )

    @property
    def d(self):
        return len(self.assets)

    @property
    def asset_names(self):
        return tuple(self.market.names[i] for i in self.assets)

    @property
    def n_state_features(self):
        return comb(self.market.dim + 1 + self.state_degree,
                    self.state_degree)

    @property
    def wealth_floor(self):
        return self.wealth_floor_frac * self.w0

    @cached_property
    def grid(self):
        return ControlGrid(self.d, self.mesh)

    def with_maximizer(self, maximizer, refinements=None):
        if isinstance(maximizer, str):
            maximizer = Maximizer.parse(maximizer)
        if refinements is None:
            refinements = self.refinements
        return replace(self, maximizer=maximizer, refinements=refinements)

    def to_dict(self):
        return {
            'market': self.market.to_dict(),
            'horizon': self.horizon,
            'utility': self.utility.to_dict(),
            'mesh': self.mesh,
            'n_paths': self.n_paths,
            'seed': self.seed,
            'costs': self.costs.to_dict(),
            'assets': list(self.assets),
            's0': self.s0,
            'r_f': self.r_f,
            'w0': self.w0,
            'refinements': self.refinements,
            'maximizer': str(self.maximizer),
            'state_degree': self.state_degree,
            'ridge_factor': self.ridge_factor,
            'wealth_floor_frac': self.wealth_floor_frac,
        }

    def digest(self):
        """Fingerprint of everything but the extraction settings."""
        doc = self.to_dict()
        del doc['maximizer'], doc['refinements']
        return digest(doc)


def state_inputs(z, w):
    """Regression inputs ``(z, w)`` per row."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    w = np.broadcast_to(np.asarray(w, dtype=float), (z.shape[0],))
    return np.column_stack([z, w])


def forward_simulate(spec, controls=None):
    """
    Simulate market paths and roll randomized wealth forward from ``w0``
    under uniform random admissible weights.

    :param ProblemSpec spec: the problem
    :param controls: optional (M, N, d) weights replacing the random draws
    :rtype: PathSet
    """
    panels = simulate_paths(spec.market, spec.s0, spec.n_paths, spec.horizon,
                            spec.seed, assets=spec.assets)
    if controls is None:
        controls = draw_control_panel(spec.d, spec.n_paths, spec.horizon,
                                      spec.seed)
    controls = np.asarray(controls, dtype=float)

    m, n_steps = spec.n_paths, spec.horizon
    wealth = np.empty((m, n_steps + 1))
    wealth[:, 0] = spec.w0
    positions = np.empty((m, n_steps, spec.d))
    trade_prices = np.empty((m, n_steps + 1, spec.d))
    trade_prices[:, 0] = panels.prices[:, 0]
    held = np.zeros((m, spec.d))
    floored = 0

    for n in range(n_steps):
        step = step_wealth(
            wealth[:, n], controls[:, n], trade_prices[:, n],
            panels.returns[:, n + 1], spec.r_f, spec.costs, held,
            spec.wealth_floor
        )
        wealth[:, n + 1] = step.w_next
        positions[:, n] = held = step.positions
        trade_prices[:, n + 1] = step.post_prices * \
            (1.0 + panels.returns[:, n + 1])
        floored += int(np.count_nonzero(step.floored))

    if floored:
        logger.warning('Wealth floor hit %d times in the forward pass',
                       floored)
    return PathSet(
        predictors=panels.predictors,
        returns=panels.returns,
        prices=panels.prices,
        rand_controls=controls,
        rand_wealth=wealth,
        rand_positions=positions,
        trade_prices=trade_prices,
        floor_activations=floored,
    )


class TerminalValue:
    """Value at the horizon, the utility of wealth."""
    def __init__(self, utility):
        self.utility = utility

    def __call__(self, z, w):
        return self.utility(w)


class FittedValue:
    """
    Value implied by a step's continuation fits,
    ``max_j CV_j(z, w)`` clipped below at ``floor_value``.
    """
    def __init__(self, fit, floor_value):
        self.fit = fit
        self.floor_value = floor_value

    def __call__(self, z, w):
        """
        :param z: predictor states (M, dim_z)
        :param w: wealth (M,) or (M, Q), several candidates per state
        :returns: values shaped like ``w``
        """
        w = np.asarray(w, dtype=float)
        single = w.ndim == 1
        w = w.reshape(w.shape[0], -1)
        fmap = self.fit.feature_map
        poly = last_input_coefficients(self.fit, z)
        scaled = (w - fmap.shift[-1]) / fmap.scale[-1]
        powers = np.arange(fmap.degree + 1)

        n_nodes = poly.shape[2]
        chunk = max(1, CHUNK_CELLS // (w.shape[1] * n_nodes))
        out = np.empty(w.shape)
        for start in range(0, w.shape[0], chunk):
            rows = slice(start, start + chunk)
            basis = scaled[rows, :, None] ** powers
            out[rows] = np.max(basis @ poly[rows], axis=2)
        out = np.maximum(out, self.floor_value)
        return out[:, 0] if single else out


def backward_step(n, paths, next_value, grid, spec):
    """
    Continuation-value regressions of step ``n``, one target column per
    grid node: wealth is recomputed with each node's weights from the
    randomized state, valued by ``next_value`` and regressed on the state
    features of ``(Z_n, W_n)``.

    :param int n: time step
    :param PathSet paths: forward sample
    :param next_value: callable ``(z, w) -> value`` for step ``n + 1``
    :param ControlGrid grid: discrete controls
    :param ProblemSpec spec: the problem
    :returns: fit with coefficients (K, J)
    :rtype: LinearFit
    """
    z = paths.predictors[:, n]
    w = paths.rand_wealth[:, n]
    inputs = state_inputs(z, w)
    fmap = FeatureMap.fit(inputs, 'state_poly', spec.state_degree)

    prior = paths.prior_positions(n)[:, None, :]
    prices = paths.trade_prices[:, n, None, :]
    returns = paths.returns[:, n + 1, None, :]
    outcomes = np.empty((paths.n_paths, len(grid)))
    chunk = max(1, CHUNK_CELLS // (paths.n_paths * grid.d))
    for start in range(0, len(grid), chunk):
        nodes = slice(start, start + chunk)
        outcomes[:, nodes] = step_wealth(
            w[:, None], grid.nodes[nodes], prices, returns, spec.r_f,
            spec.costs, prior, spec.wealth_floor
        ).w_next

    targets = next_value(paths.predictors[:, n + 1], outcomes)
    return fit_ols(fmap.transform(inputs), targets, feature_map=fmap)


class ControlSearch(NamedTuple):
    """Batched extraction result."""
    alpha: np.ndarray
    trace: np.ndarray
    evaluations: np.ndarray
    underdetermined: int


class _FittedSurface:
    """Per-query polynomial over controls, ``phi(a) = psi(u(a)) . beta``."""
    def __init__(self, fmap, betas, origin=None, unit=1.0):
        self.fmap = fmap
        self.betas = betas
        self.origin = origin
        self.unit = unit

    def evaluate(self, points):
        """values (M, Q) at points (M, Q, d)"""
        if self.origin is not None:
            points = (points - self.origin[:, None, :]) / self.unit
        m, q, d = points.shape
        feats = self.fmap.transform(points.reshape(m * q, d))
        return np.einsum('mqk,mk->mq', feats.reshape(m, q, -1), self.betas)


def _local_surface(cv, best, grid, ridge_factor):
    """
    Degree-2 Ridge fits over each query's patch, in lattice units around
    the patch center.
    """
    fmap = FeatureMap('control_poly', LOCAL_DEGREE, np.zeros(grid.d),
                      np.ones(grid.d))
    betas = np.empty((cv.shape[0], fmap.dim_out))
    centers = np.unique(best)
    patches = {j: grid.local_patch(grid.nodes[j]) for j in centers}

    shapes = {}
    for j in centers:
        shapes.setdefault(patches[j].offsets.tobytes(), []).append(j)

    fit_points = np.empty(cv.shape[0], dtype=int)
    underdetermined = 0
    for members in shapes.values():
        rows = np.flatnonzero(np.isin(best, members))
        offsets = patches[members[0]].offsets
        ids = np.stack([patches[j].node_ids for j in members])
        ids = ids[np.searchsorted(members, best[rows])]
        values = np.take_along_axis(cv[rows], ids, axis=1)

        n_points = offsets.shape[0]
        fit = fit_ridge(fmap.transform(offsets), values.T,
                        ridge_factor * n_points)
        betas[rows] = fit.coeffs.T
        fit_points[rows] = n_points
        if n_points < fmap.dim_out:
            underdetermined += rows.size

    if underdetermined:
        logger.debug('%d local control fits have fewer patch nodes than '
                     'basis terms', underdetermined)
    surface = _FittedSurface(fmap, betas, grid.nodes[best], grid.mesh)
    return surface, fit_points, underdetermined


@lru_cache(maxsize=32)
def _global_design(d, mesh, degree):
    nodes = ControlGrid(d, mesh).nodes
    fmap = FeatureMap.fit(nodes, 'control_poly', degree)
    return fmap, fmap.transform(nodes)


def _global_surface(cv, grid, degree):
    fmap, design = _global_design(grid.d, grid.mesh, degree)
    fit = fit_ols(design, cv.T)
    betas = np.asarray(fit.coeffs).T
    underdetermined = cv.shape[0] if fit.diagnostics['underdetermined'] \
        else 0
    fit_points = np.full(cv.shape[0], len(grid))
    return _FittedSurface(fmap, betas), fit_points, underdetermined


def _adaptive_refine(surface, alpha, lower, upper, mesh, refinements):
    """
    Adaptive grid search on the fitted surface: at level ``p`` the
    incumbent moves to the best point of the level's refinement grid
    (itself and its axis neighbours at distance ``mesh / 2**p`` inside
    the box). Ties keep the lexicographically first point.
    """
    m = alpha.shape[0]
    rows = np.arange(m)
    value = surface.evaluate(alpha[:, None, :])[:, 0]
    trace = [value]
    evaluations = np.zeros(m, dtype=int)

    for level in range(1, refinements + 1):
        candidates, inside, center = refine_candidates(alpha, mesh, level,
                                                       lower, upper)
        values = surface.evaluate(candidates)
        values[:, center] = value
        values[~inside] = -np.inf
        evaluations += inside.sum(axis=1) - 1
        pick = np.argmax(values, axis=1)
        alpha = candidates[rows, pick]
        value = values[rows, pick]
        trace.append(value)

    return alpha, np.column_stack(trace), evaluations


def search_controls(cv, grid, maximizer, refinements=5,
                    ridge_factor=RIDGE_FACTOR):
    """
    Maximize continuation values over controls for a batch of query
    states.

    ``grid_only`` returns the discrete argmax. ``local_adaptive`` fits a
    degree-2 Ridge regression over the argmax's patch and refines on
    adaptive grids inside the patch box. ``global_adaptive`` fits one
    polynomial of the given degree over all grid nodes and refines the
    same way.

    :param cv: continuation values (M, J), one row per query state
    :param ControlGrid grid: the grid the values belong to
    :param Maximizer maximizer: extraction mode
    :param int refinements: number of refinement levels P
    :param float ridge_factor: Ridge penalty per fitted point
    :rtype: ControlSearch
    """
    cv = np.atleast_2d(np.asarray(cv, dtype=float))
    if cv.shape[1] != len(grid):
        raise UsageError('Expected {} continuation values per query, got {}'
                         .format(len(grid), cv.shape[1]))
    if not np.all(np.isfinite(cv)):
        raise InputError('Continuation values must be finite')

    best = grid.argmax(cv)
    alpha = grid.nodes[best].copy()
    if maximizer.mode == 'grid_only' or refinements == 0:
        trace = cv[np.arange(cv.shape[0]), best][:, None]
        return ControlSearch(alpha, trace, np.zeros(cv.shape[0], dtype=int),
                             0)

    if maximizer.mode == 'local_adaptive':
        surface, fit_points, flagged = _local_surface(cv, best, grid,
                                                      ridge_factor)
    else:
        surface, fit_points, flagged = _global_surface(cv, grid,
                                                       maximizer.degree)

    lower = np.maximum(alpha - grid.mesh, 0.0)
    upper = np.minimum(alpha + grid.mesh, 1.0)
    alpha, trace, evaluations = _adaptive_refine(
        surface, alpha, lower, upper, grid.mesh, refinements
    )
    return ControlSearch(alpha, trace, fit_points + evaluations, flagged)


def search_control(cv, grid, maximizer, refinements=5,
                   ridge_factor=RIDGE_FACTOR):
    """
    Single-query :func:`search_controls`.

    :returns: weights, fitted value after each refinement level and the
        number of fitted-surface evaluations
    """
    found = search_controls(np.asarray(cv, dtype=float)[None, :], grid,
                            maximizer, refinements, ridge_factor)
    return found.alpha[0], found.trace[0], int(found.evaluations[0])


def extract_control(cv, grid, maximizer, refinements=5,
                    ridge_factor=RIDGE_FACTOR):
    """The weight vector chosen from one state's continuation values."""
    return search_control(cv, grid, maximizer, refinements, ridge_factor)[0]


@dataclass(frozen=True, eq=False)
class Policy:
    """
    Solved policy: per-step continuation-value fits over state features
    (one coefficient column per grid node) plus the extraction settings.
    """
    fits: Tuple[LinearFit, ...]
    grid: ControlGrid
    maximizer: Maximizer
    refinements: int
    ridge_factor: float
    spec_digest: str
    asset_names: Tuple[str, ...] = ()
    diagnostics: dict = field(default_factory=dict)

    @property
    def horizon(self):
        return len(self.fits)

    @property
    def mesh(self):
        return self.grid.mesh

    def value_fit(self, n, j):
        """Continuation-value fit of node ``j`` at step ``n``."""
        return self.fits[n].column(j)

    def continuation_values(self, n, z, w):
        return self.fits[n].predict(state_inputs(z, w))

    def search(self, n, z, w):
        return search_controls(
            self.continuation_values(n, z, w), self.grid, self.maximizer,
            self.refinements, self.ridge_factor
        )

    def act_many(self, n, z, w):
        """Weights (M, d) for predictor states (M, dim_z) and wealth (M,)."""
        return self.search(n, z, w).alpha

    def act(self, n, z, w):
        return self.act_many(n, np.asarray(z, dtype=float)[None, :], w)[0]

    def with_maximizer(self, maximizer, refinements=None):
        if isinstance(maximizer, str):
            maximizer = Maximizer.parse(maximizer)
        if refinements is None:
            refinements = self.refinements
        return replace(self, maximizer=maximizer, refinements=refinements,
                       diagnostics={})

    def check_compatible(self, spec):
        if spec.digest() != self.spec_digest:
            raise UsageError('Policy was solved for a different problem '
                             '(digest {})'.format(self.spec_digest[:12]))

    def to_dict(self):
        return {
            'format': POLICY_FORMAT,
            'spec_digest': self.spec_digest,
            'grid': self.grid.to_dict(),
            'maximizer': str(self.maximizer),
            'refinements': self.refinements,
            'ridge_factor': self.ridge_factor,
            'asset_names': list(self.asset_names),
            'steps': [fit.to_dict() for fit in self.fits],
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n'

    @classmethod
    def from_dict(cls, doc):
        try:
            if doc['format'] != POLICY_FORMAT:
                raise InputError('Unsupported policy format {}'
                                 .format(doc['format']))
            return cls(
                fits=tuple(LinearFit.from_dict(s) for s in doc['steps']),
                grid=ControlGrid(doc['grid']['d'], doc['grid']['mesh']),
                maximizer=Maximizer.parse(doc['maximizer']),
                refinements=int(doc['refinements']),
                ridge_factor=float(doc['ridge_factor']),
                spec_digest=doc['spec_digest'],
                asset_names=tuple(doc.get('asset_names', ())),
            )
        except KeyError as err:
            raise InputError('Policy document is missing field {}'
                             .format(err.args[0])) from None

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def extraction_profile(policy, paths):
    """
    Extract the policy on every simulated state of ``paths``, timing each
    step.

    :returns: seconds and mean weights per step, and the number of
        under-determined control fits
    :rtype: dict
    """
    seconds = []
    mean_allocation = []
    underdetermined = 0
    for n in range(paths.n_steps):
        tick = perf_counter()
        found = policy.search(n, paths.predictors[:, n],
                              paths.rand_wealth[:, n])
        seconds.append(perf_counter() - tick)
        mean_allocation.append(found.alpha.mean(axis=0).tolist())
        underdetermined += found.underdetermined
    return {
        'extraction_seconds': seconds,
        'mean_allocation': mean_allocation,
        'underdetermined_control_fits': underdetermined,
    }


def solve(spec):
    """
    Solve ``spec`` by least squares Monte Carlo.

    The value recursion always uses the discrete grid maximum; the
    maximizer mode only shapes the returned policy. Run diagnostics
    (timings, fallbacks, floor activations, mean extracted weights on the
    simulated states) are attached as ``policy.diagnostics``.

    :param ProblemSpec spec: the problem
    :rtype: Policy
    """
    started = perf_counter()
    paths = forward_simulate(spec)
    forward_seconds = perf_counter() - started

    grid = spec.grid
    floor_value = float(spec.utility(spec.wealth_floor))
    value = TerminalValue(spec.utility)
    fits = [None] * spec.horizon
    backward_seconds = [0.0] * spec.horizon
    fallbacks = [False] * spec.horizon

    for n in reversed(range(spec.horizon)):
        tick = perf_counter()
        fit = backward_step(n, paths, value, grid, spec)
        fits[n] = fit
        value = FittedValue(fit, floor_value)
        backward_seconds[n] = perf_counter() - tick
        fallbacks[n] = bool(fit.diagnostics['rank_deficient'])
        if fallbacks[n] and n > 0:
            logger.warning('Step %d regression is rank deficient, using the '
                           'minimum-norm solution', n)
        logger.info('Backward step %d of %d done (%d nodes, %.2fs)',
                    n, spec.horizon, len(grid), backward_seconds[n])

    policy = Policy(
        fits=tuple(fits),
        grid=grid,
        maximizer=spec.maximizer,
        refinements=spec.refinements,
        ridge_factor=spec.ridge_factor,
        spec_digest=spec.digest(),
        asset_names=spec.asset_names,
    )

    profile = extraction_profile(policy, paths)
    initial_cv = policy.continuation_values(
        0, spec.market.start_state(), spec.w0
    )[0]
    policy.diagnostics.update(profile)
    policy.diagnostics.update({
        'forward_seconds': forward_seconds,
        'backward_seconds': backward_seconds,
        'total_seconds': perf_counter() - started,
        'regression_fallbacks': fallbacks,
        'floor_activations': paths.floor_activations,
        'initial_value': float(np.max(initial_cv)),
        'grid_size': len(grid),
        'maximizer': str(spec.maximizer),
    })
    logger.info('Solved %d-step problem on %d nodes in %.2fs',
                spec.horizon, len(grid), policy.diagnostics['total_seconds'])
    return policy
