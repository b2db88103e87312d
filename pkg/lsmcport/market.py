"""
Market model: calibration and simulation of a first-order vector
autoregression on log-returns, asset price evolution and uniform draws
of admissible portfolio weights.

Random numbers are drawn from per-path substreams keyed by
``(seed, stream, path)`` so that a panel is a pure function of its
arguments, whatever order (or process) the paths are produced in.
"""
import json
import logging
from dataclasses import dataclass
from importlib import resources
from typing import NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import linalg

from lsmcport.errors import CalibrationError, InputError


logger = logging.getLogger(__name__)

INNOVATION_STREAM = 0
CONTROL_STREAM = 1
RANDOM_POLICY_STREAM = 2

COV_TOL = 1e-10
JITTER_SCALE = 1e-12
JITTER_RETRIES = 3


@dataclass(frozen=True, eq=False)
class VarModel:
    """
    Calibrated VAR(1) ``x_t = intercept + coeff @ x_{t-1} + e_t`` with
    ``e_t ~ N(0, resid_cov)`` and ``resid_factor @ resid_factor.T ==
    resid_cov``.
    """
    intercept: np.ndarray
    coeff: np.ndarray
    resid_cov: np.ndarray
    resid_factor: np.ndarray = None
    names: Tuple[str, ...] = ()
    initial_state: Optional[np.ndarray] = None
    n_obs: int = 0

    def __post_init__(self):
        intercept = np.array(self.intercept, dtype=float).reshape(-1)
        dim = intercept.size
        coeff = np.array(self.coeff, dtype=float).reshape(dim, dim)
        cov = np.array(self.resid_cov, dtype=float).reshape(dim, dim)
        for label, arr in (('intercept', intercept), ('coeff', coeff),
                           ('resid_cov', cov)):
            if not np.all(np.isfinite(arr)):
                raise InputError('VAR {} contains non-finite values'
                                 .format(label))
        if not np.allclose(cov, cov.T, rtol=0.0, atol=COV_TOL):
            raise InputError('VAR resid_cov is not symmetric')
        cov = 0.5 * (cov + cov.T)
        factor = self.resid_factor
        if factor is None:
            factor = factor_covariance(cov)
        names = tuple(self.names) or tuple(
            'x{}'.format(i) for i in range(dim)
        )
        if len(names) != dim:
            raise InputError('VAR has {} series but {} names'
                             .format(dim, len(names)))
        state = self.initial_state
        if state is not None:
            state = np.asarray(state, dtype=float).reshape(dim)

        object.__setattr__(self, 'intercept', intercept)
        object.__setattr__(self, 'coeff', coeff)
        object.__setattr__(self, 'resid_cov', cov)
        object.__setattr__(self, 'resid_factor',
                           np.array(factor, dtype=float))
        object.__setattr__(self, 'names', names)
        object.__setattr__(self, 'initial_state', state)
        for arr in (intercept, coeff, cov, self.resid_factor):
            arr.setflags(write=False)

    @property
    def dim(self):
        return self.intercept.size

    def spectral_radius(self):
        return float(np.max(np.abs(np.linalg.eigvals(self.coeff))))

    def stationary_mean(self):
        """
        Unconditional mean ``(I - coeff)^-1 intercept`` of a stable model.

        :raises InputError: if the model is not stable
        """
        if self.spectral_radius() >= 1.0:
            raise InputError('VAR is not stable, no stationary mean')
        return np.linalg.solve(np.eye(self.dim) - self.coeff, self.intercept)

    def start_state(self):
        """Initial log-return vector used by simulations."""
        if self.initial_state is not None:
            return self.initial_state.copy()
        if self.spectral_radius() < 1.0:
            return self.stationary_mean()
        return self.intercept.copy()

    def index_of(self, names):
        """Positions of the named series."""
        lookup = {name: i for i, name in enumerate(self.names)}
        try:
            return [lookup[name] for name in names]
        except KeyError as err:
            raise InputError('Unknown series {}'.format(err.args[0])) from None

    def to_dict(self):
        doc = {
            'dim': self.dim,
            'intercept': self.intercept.tolist(),
            'coeff': self.coeff.tolist(),
            'resid_cov': self.resid_cov.tolist(),
            'names': list(self.names),
        }
        if self.initial_state is not None:
            doc['initial_state'] = self.initial_state.tolist()
        if self.n_obs:
            doc['n_obs'] = self.n_obs
        return doc

    @classmethod
    def from_dict(cls, doc):
        try:
            model = cls(
                intercept=doc['intercept'],
                coeff=doc['coeff'],
                resid_cov=doc['resid_cov'],
                names=tuple(doc.get('names', ())),
                initial_state=doc.get('initial_state'),
                n_obs=int(doc.get('n_obs', 0)),
            )
        except KeyError as err:
            raise InputError('VAR document is missing field {}'
                             .format(err.args[0])) from None
        if 'dim' in doc and int(doc['dim']) != model.dim:
            raise InputError('VAR document dim {} does not match its arrays'
                             .format(doc['dim']))
        return model

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n'

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


class MarketPanels(NamedTuple):
    """Predictor, return and price panels of a simulation."""
    predictors: np.ndarray
    returns: np.ndarray
    prices: np.ndarray


@dataclass(frozen=True, eq=False)
class PathSet:
    """
    Forward-simulated Monte Carlo sample with randomized controls.

    Shapes: predictors (M, N+1, dim_z), returns and prices (M, N+1, d),
    rand_controls and rand_positions (M, N, d), rand_wealth (M, N+1),
    trade_prices (M, N+1, d).
    """
    predictors: np.ndarray
    returns: np.ndarray
    prices: np.ndarray
    rand_controls: np.ndarray
    rand_wealth: np.ndarray
    rand_positions: np.ndarray
    trade_prices: np.ndarray
    floor_activations: int = 0

    @property
    def n_paths(self):
        return self.predictors.shape[0]

    @property
    def n_steps(self):
        return self.predictors.shape[1] - 1

    @property
    def n_assets(self):
        return self.returns.shape[2]

    def prior_positions(self, n):
        """Units held going into the trade at step ``n``."""
        if n == 0:
            return np.zeros((self.n_paths, self.n_assets))
        return self.rand_positions[:, n - 1]


def factor_covariance(cov):
    """
    Lower-triangular factor ``L`` with ``L @ L.T == cov``. On failure the
    diagonal is jittered by ``1e-12 * trace(cov) / dim`` (cumulatively) up
    to three times.

    :raises CalibrationError: if the matrix still cannot be factorized
    """
    cov = np.asarray(cov, dtype=float)
    dim = cov.shape[0]
    if not np.any(cov):
        return np.zeros_like(cov)

    jitter = JITTER_SCALE * np.trace(cov) / dim
    attempt = cov
    for retry in range(JITTER_RETRIES + 1):
        try:
            return linalg.cholesky(attempt, lower=True)
        except linalg.LinAlgError:
            if retry == JITTER_RETRIES or jitter <= 0.0:
                break
            logger.warning(
                'Covariance factorization failed, adding diagonal jitter %g',
                jitter
            )
            attempt = attempt + jitter * np.eye(dim)

    raise CalibrationError(
        'Residual covariance is not positive semi-definite and could not '
        'be factorized'
    )


def log_returns(prices):
    """
    Log-returns ``log S_t - log S_{t-1}`` of a price frame.

    :param pandas.DataFrame prices: one column per series, ascending dates
    :rtype: pandas.DataFrame
    """
    values = prices.to_numpy(dtype=float)
    if not np.all(np.isfinite(values)) or np.any(values <= 0.0):
        raise InputError('Prices must be finite and strictly positive')
    return np.log(prices).diff().iloc[1:]


def calibrate_var(data, names=None):
    """
    Calibrate a VAR(1) by equation-by-equation ordinary least squares of
    ``x_t`` on ``[1, x_{t-1}]``.

    The residual covariance uses the degrees-of-freedom corrected
    denominator ``T_obs - 1 - (dim + 1)``.

    :param data: (T_obs, dim) log-return matrix or DataFrame
    :param names: series names, taken from the DataFrame columns if omitted
    :rtype: VarModel
    :raises InputError: on non-finite or too short input
    :raises CalibrationError: on a singular regressor cross-moment matrix
    """
    if isinstance(data, pd.DataFrame):
        if names is None:
            names = [str(c) for c in data.columns]
        data = data.to_numpy(dtype=float)
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n_obs, dim = x.shape
    if names is None:
        names = ['x{}'.format(i) for i in range(dim)]
    if not np.all(np.isfinite(x)):
        raise InputError('Log-returns contain missing or non-finite values')
    if n_obs < dim + 2:
        raise InputError(
            'Need at least {} observations to calibrate {} series, got {}'
            .format(dim + 2, dim, n_obs)
        )

    regressors = np.column_stack([np.ones(n_obs - 1), x[:-1]])
    targets = x[1:]
    _check_regressor_rank(regressors, names)

    gram = regressors.T @ regressors
    try:
        beta = linalg.cho_solve(
            linalg.cho_factor(gram), regressors.T @ targets
        )
    except linalg.LinAlgError:
        raise CalibrationError(
            'Regressor cross-moment matrix is singular'
        ) from None

    resid = targets - regressors @ beta
    dof = max(n_obs - 1 - (dim + 1), 1)
    cov = resid.T @ resid / dof

    model = VarModel(
        intercept=beta[0],
        coeff=beta[1:].T,
        resid_cov=cov,
        names=tuple(names),
        initial_state=x[-1],
        n_obs=n_obs,
    )
    logger.info(
        'Calibrated VAR(1) on %d series from %d observations, '
        'spectral radius %.4f', dim, n_obs, model.spectral_radius()
    )
    return model


def _check_regressor_rank(regressors, names):
    """raise a CalibrationError naming a linearly dependent regressor"""
    _, r, pivot = linalg.qr(regressors, mode='economic', pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(regressors.shape) * np.finfo(float).eps * diag[0]
    rank = int(np.sum(diag > tol))
    if rank < regressors.shape[1]:
        column = pivot[rank]
        label = 'constant' if column == 0 else names[column - 1]
        raise CalibrationError(
            'Singular regressor cross-moment matrix: lagged series "{}" is '
            'linearly dependent on the other regressors'.format(label)
        )


def path_generators(seed, n_paths, stream):
    """
    One independent ``numpy.random.Generator`` per path, keyed by
    ``(seed, stream, path)``.
    """
    return [
        np.random.default_rng(
            np.random.SeedSequence(seed, spawn_key=(stream, m))
        )
        for m in range(n_paths)
    ]


def simulate_paths(model, s0, n_paths, n_steps, seed, assets=None, x0=None):
    """
    Simulate the VAR forward and derive simple returns ``exp(x) - 1`` and
    prices ``S_{n+1} = S_n * (1 + r_{n+1})`` for the tradable series.

    :param VarModel model: market dynamics
    :param s0: initial prices of the tradable series (scalar broadcasts)
    :param int n_paths: number of Monte Carlo paths M
    :param int n_steps: number of periods N
    :param int seed: simulation seed
    :param assets: indices of the tradable series, all series if None
    :param x0: initial log-return state, ``model.start_state()`` if None
    :rtype: MarketPanels
    """
    if n_paths < 1 or n_steps < 1:
        raise InputError('n_paths and n_steps must be positive')
    if assets is None:
        assets = list(range(model.dim))
    assets = list(assets)
    s0 = np.broadcast_to(np.asarray(s0, dtype=float), (len(assets),))
    if not np.all(np.isfinite(s0)) or np.any(s0 <= 0.0):
        raise InputError('Initial prices must be strictly positive')
    x0 = model.start_state() if x0 is None else np.asarray(x0, dtype=float)

    shocks = np.stack([
        rng.standard_normal((n_steps, model.dim))
        for rng in path_generators(seed, n_paths, INNOVATION_STREAM)
    ])

    states = np.empty((n_paths, n_steps + 1, model.dim))
    states[:, 0] = x0
    for n in range(n_steps):
        states[:, n + 1] = (
            model.intercept
            + states[:, n] @ model.coeff.T
            + shocks[:, n] @ model.resid_factor.T
        )

    returns = np.expm1(states[:, :, assets])
    prices = np.empty_like(returns)
    prices[:, 0] = s0
    for n in range(n_steps):
        prices[:, n + 1] = prices[:, n] * (1.0 + returns[:, n + 1])

    return MarketPanels(states, returns, prices)


def draw_admissible_control(d, rng):
    """
    Draw a weight vector uniformly from ``{a >= 0, sum(a) <= 1}`` as the
    first ``d`` coordinates of a flat Dirichlet on ``d + 1`` components.

    :param int d: number of risky assets
    :param numpy.random.Generator rng: random source
    """
    return _onto_simplex(rng.dirichlet(np.ones(d + 1))[:d])


def draw_control_panel(d, n_paths, n_steps, seed, stream=CONTROL_STREAM):
    """Uniform admissible weights for every path and step, (M, N, d)."""
    panel = np.stack([
        rng.dirichlet(np.ones(d + 1), size=n_steps)[:, :d]
        for rng in path_generators(seed, n_paths, stream)
    ])
    return _onto_simplex(panel)


def _onto_simplex(alpha):
    """rescale draws whose rounded sum exceeds one"""
    total = alpha.sum(axis=-1, keepdims=True)
    return np.where(total > 1.0, alpha / total, alpha)


def synthetic_model(n_assets, predictor_ar=0.6, asset_ar=0.05):
    """
    Deterministic stable VAR(1) market with ``n_assets`` tradable series
    ordered from bond-like to equity-like and one mean-zero return
    predictor (last series) that forecasts the riskier assets.

    :param int n_assets: number of tradable series (>= 1)
    :rtype: VarModel
    """
    if n_assets < 1:
        raise InputError('A synthetic market needs at least one asset')
    tilt = np.linspace(0.0, 1.0, n_assets) if n_assets > 1 else np.ones(1)
    mean = 0.0045 + 0.0025 * tilt
    vol = 0.01 + 0.035 * tilt
    loading = 0.6 * tilt

    dim = n_assets + 1
    coeff = np.zeros((dim, dim))
    coeff[np.arange(n_assets), np.arange(n_assets)] = asset_ar
    coeff[:n_assets, -1] = loading
    coeff[-1, -1] = predictor_ar
    intercept = np.append(mean * (1.0 - asset_ar), 0.0)

    corr = np.full((dim, dim), 0.2)
    corr[:n_assets, -1] = corr[-1, :n_assets] = -0.3 * tilt
    np.fill_diagonal(corr, 1.0)
    sd = np.append(vol, 0.01)
    cov = corr * np.outer(sd, sd)

    names = tuple('ASSET{}'.format(i + 1) for i in range(n_assets))
    return VarModel(intercept, coeff, cov, names=names + ('SIGNAL',))


def load_pinned_market():
    """The shipped two-asset acceptance market."""
    text = resources.files('lsmcport.data').joinpath(
        'pinned_market.json'
    ).read_text()
    return VarModel.from_dict(json.loads(text))
