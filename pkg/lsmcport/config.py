"""
Run configuration: loading and validation of the TOML run description
and construction of markets and problems from it.

When no file is named the configuration is looked up in the working
directory, the user's home, ``/etc`` and finally the example shipped with
the package.
"""
import logging
import os.path
from dataclasses import dataclass, replace
from importlib import resources
from typing import Optional, Tuple

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from lsmcport.costs import COST_TIMINGS, CostModel
from lsmcport.errors import ConfigurationError, LSMCError
from lsmcport.evaluation import UtilitySpec
from lsmcport.market import (
    VarModel,
    calibrate_var,
    load_pinned_market,
    log_returns,
    synthetic_model,
)
from lsmcport.solver import Maximizer, ProblemSpec
from lsmcport.util import expand_mesh_list, read_price_csv


logger = logging.getLogger(__name__)

CONFIG_SEARCH_PATH = (
    'lsmcport.toml',
    '~/.lsmcport.toml',
    '/etc/lsmcport.toml',
)
MARKET_SOURCES = ('pinned', 'synthetic', 'csv', 'model')
DEFAULT_PREDICTORS = ('SIGNAL',)

SCHEMA = {
    'market': {'source', 'csv_path', 'model_json', 'assets', 'predictors',
               's0', 'n_synthetic_assets'},
    'problem': {'horizons', 'gammas', 'meshes', 'modes', 'refinements',
                'n_paths', 'n_eval_paths', 'initial_wealth', 'annual_rate',
                'periods_per_year', 'state_degree', 'ridge_factor',
                'log_utility'},
    'costs': {'enabled', 'tc_rate', 'k', 'perm_impact_frac', 'rel_spread',
              'cost_timing', 'wealth_floor_frac'},
    'seeds': {'solve', 'evaluate'},
    'bench': {'budget_secs', 'dimensions', 'regression_modes'},
    'output': {'directory'},
}

run_config = None


@dataclass(frozen=True)
class RunConfig:
    """Validated run description."""
    source: str = 'pinned'
    csv_path: Optional[str] = None
    model_json: Optional[str] = None
    assets: Tuple[str, ...] = ()
    predictors: Optional[Tuple[str, ...]] = None
    s0: float = 100.0
    n_synthetic_assets: int = 2
    horizons: Tuple[int, ...] = (6,)
    gammas: Tuple[float, ...] = (10.0,)
    meshes: Tuple[float, ...] = (0.125,)
    modes: Tuple[Maximizer, ...] = (Maximizer('local_adaptive'),)
    refinements: int = 5
    n_paths: int = 10000
    n_eval_paths: int = 10000
    initial_wealth: float = 1.0
    annual_rate: float = 0.045
    periods_per_year: int = 12
    state_degree: int = 2
    ridge_factor: float = 1e-6
    log_utility: bool = False
    costs: CostModel = CostModel()
    wealth_floor_frac: float = 1e-8
    solve_seed: int = 1
    eval_seed: int = 2
    budget_secs: float = 3600.0
    dimensions: Tuple[int, ...] = (2, 3)
    regression_modes: Tuple[Maximizer, ...] = (
        Maximizer('local_adaptive'),
        Maximizer('global_adaptive', 2),
        Maximizer('global_adaptive', 3),
        Maximizer('global_adaptive', 4),
    )
    output_dir: str = 'runs'
    path: Optional[str] = None

    @property
    def r_f(self):
        """Per-period risk-free return, the annual rate divided evenly."""
        return self.annual_rate / self.periods_per_year

    def with_overrides(self, seed=None, out=None, budget_secs=None):
        changes = {}
        if seed is not None:
            changes['solve_seed'] = seed
            if seed == self.eval_seed:
                changes['eval_seed'] = seed + 1
        if out is not None:
            changes['output_dir'] = out
        if budget_secs is not None:
            if budget_secs <= 0:
                raise ConfigurationError(['--budget-secs must be positive'])
            changes['budget_secs'] = budget_secs
        return replace(self, **changes)

    def resolve_market(self):
        """
        Build or load the market and pick its tradable series.

        :returns: the model and the indices of the tradable series
        :rtype: tuple(VarModel, tuple(int))
        """
        if self.source == 'pinned':
            model = load_pinned_market()
        elif self.source == 'synthetic':
            model = synthetic_model(self.n_synthetic_assets)
        elif self.source == 'csv':
            model = calibrate_var(log_returns(read_price_csv(self.csv_path)))
        else:
            model = VarModel.load(self.model_json)
        return model, self.tradable(model)

    def tradable(self, model):
        """Indices of the tradable series of ``model``."""
        if self.assets:
            return tuple(model.index_of(self.assets))
        if self.predictors is None:
            excluded = set(DEFAULT_PREDICTORS)
        else:
            model.index_of(self.predictors)
            excluded = set(self.predictors)
        picked = tuple(i for i, name in enumerate(model.names)
                       if name not in excluded)
        if not picked:
            raise ConfigurationError(
                ['market: no tradable series left after removing predictors']
            )
        return picked

    def problem(self, market, assets, horizon, gamma, mesh, mode):
        """The :class:`ProblemSpec` of one sweep cell."""
        if isinstance(mode, str):
            mode = Maximizer.parse(mode)
        return ProblemSpec(
            market=market,
            horizon=int(horizon),
            utility=UtilitySpec(float(gamma), self.log_utility),
            mesh=float(mesh),
            n_paths=self.n_paths,
            seed=self.solve_seed,
            costs=self.costs,
            assets=tuple(assets),
            s0=self.s0,
            r_f=self.r_f,
            w0=self.initial_wealth,
            refinements=self.refinements,
            maximizer=mode,
            state_degree=self.state_degree,
            ridge_factor=self.ridge_factor,
            wealth_floor_frac=self.wealth_floor_frac,
        )


def configure(path=None, **overrides):
    """
    Set the module run configuration from ``path`` (searched for when
    omitted) with optional field overrides.

    :rtype: RunConfig
    """
    global run_config
    config = load_config(path)
    if overrides:
        config = replace(config, **overrides)
    run_config = config
    return config


def get_config():
    _maybe_set_configuration()
    return run_config


def _maybe_set_configuration():
    """
    Load the configuration from the search path if none has been set.
    """
    global run_config
    if run_config is not None:
        return
    run_config = load_config()


def find_config_file():
    """First existing file of the search path, or None."""
    for candidate in CONFIG_SEARCH_PATH:
        candidate = os.path.expanduser(candidate)
        if os.path.isfile(candidate):
            return candidate
    return None


def load_config(path=None):
    """
    Load and validate a run configuration.

    :param str path: TOML file; the search path and then the shipped
        example are used when omitted
    :rtype: RunConfig
    :raises ConfigurationError: listing every invalid field
    """
    if path is None:
        path = find_config_file()
    if path is None:
        logger.info('No configuration file found, using the shipped example')
        text = resources.files('lsmcport.data').joinpath(
            'example.toml'
        ).read_text()
        return parse_config(text, origin='<example>')

    try:
        with open(path) as f:
            text = f.read()
    except OSError as err:
        raise ConfigurationError(
            ['cannot read config file {}: {}'.format(path, err.strerror)]
        ) from None
    base = os.path.dirname(os.path.abspath(path))
    return parse_config(text, origin=path, base_dir=base)


def parse_config(text, origin='<string>', base_dir=None):
    """
    Validate a TOML document against the run configuration schema.

    Relative file paths are resolved against ``base_dir``.

    :rtype: RunConfig
    :raises ConfigurationError: listing every invalid field
    """
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigurationError(
            ['{} is not valid TOML: {}'.format(origin, err)]
        ) from None
    return _Validator(doc, base_dir).build(origin)


class _Validator:
    """collects every field-level problem before giving up"""
    def __init__(self, doc, base_dir):
        self.doc = doc
        self.base_dir = base_dir
        self.errors = []

    def build(self, origin):
        for section, body in self.doc.items():
            if section not in SCHEMA:
                self.errors.append('unknown section [{}]'.format(section))
                continue
            if not isinstance(body, dict):
                self.errors.append('{} must be a table'.format(section))
                continue
            for key in sorted(set(body) - SCHEMA[section]):
                self.errors.append('{}.{}: unknown key'.format(section, key))

        fields = {'path': origin}
        fields.update(self._market())
        fields.update(self._problem())
        fields.update(self._costs())
        fields.update(self._seeds())
        fields.update(self._bench())
        fields['output_dir'] = self._get('output', 'directory', 'runs', str)

        if self.errors:
            raise ConfigurationError(self.errors)
        return RunConfig(**fields)

    def _get(self, section, key, default, kind, check=None, message=''):
        body = self.doc.get(section, {})
        if not isinstance(body, dict) or key not in body:
            return default
        value = body[key]
        label = '{}.{}'.format(section, key)
        if kind is float and isinstance(value, int) and \
                not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, kind) or (
                kind in (int, float) and isinstance(value, bool)):
            self.errors.append('{}: expected {}, got {!r}'
                               .format(label, kind.__name__, value))
            return default
        if check is not None and not check(value):
            self.errors.append('{}: {}'.format(label, message))
            return default
        return value

    def _list(self, section, key, default, kind, check=None, message=''):
        body = self.doc.get(section, {})
        if not isinstance(body, dict) or key not in body:
            return default
        value = body[key]
        label = '{}.{}'.format(section, key)
        if not isinstance(value, list) or not value:
            self.errors.append('{}: expected a non-empty list'.format(label))
            return default
        items = []
        for item in value:
            if kind is float and isinstance(item, int) and \
                    not isinstance(item, bool):
                item = float(item)
            if not isinstance(item, kind) or isinstance(item, bool):
                self.errors.append('{}: expected {} entries, got {!r}'
                                   .format(label, kind.__name__, item))
                return default
            if check is not None and not check(item):
                self.errors.append('{}: {} ({!r})'
                                   .format(label, message, item))
                return default
            items.append(item)
        return tuple(items)

    def _path(self, section, key):
        raw = self._get(section, key, None, str)
        if raw is None:
            return None
        path = os.path.expanduser(raw)
        if self.base_dir and not os.path.isabs(path):
            path = os.path.join(self.base_dir, path)
        return path

    def _market(self):
        source = self._get('market', 'source', 'pinned', str,
                           lambda v: v in MARKET_SOURCES,
                           'must be one of ' + ', '.join(MARKET_SOURCES))
        csv_path = self._path('market', 'csv_path')
        model_json = self._path('market', 'model_json')
        required = {'csv': ('csv_path', csv_path),
                    'model': ('model_json', model_json)}.get(source)
        if required:
            key, path = required
            if path is None:
                self.errors.append('market.{}: required for source "{}"'
                                   .format(key, source))
            elif not os.path.isfile(path):
                self.errors.append('market.{}: file {} does not exist'
                                   .format(key, path))
        predictors = self._list('market', 'predictors', None, str)
        return {
            'source': source,
            'csv_path': csv_path,
            'model_json': model_json,
            'assets': self._list('market', 'assets', (), str),
            'predictors': predictors,
            's0': self._get('market', 's0', 100.0, float, lambda v: v > 0,
                            'must be positive'),
            'n_synthetic_assets': self._get(
                'market', 'n_synthetic_assets', 2, int, lambda v: v >= 1,
                'must be at least 1'
            ),
        }

    def _meshes(self, default):
        body = self.doc.get('problem', {})
        if not isinstance(body, dict) or 'meshes' not in body:
            return default
        raw = body['meshes']
        if not isinstance(raw, list) or not raw:
            self.errors.append('problem.meshes: expected a non-empty list')
            return default
        try:
            return tuple(expand_mesh_list(raw))
        except ConfigurationError as err:
            self.errors.extend('problem.meshes: ' + m for m in err.messages)
            return default

    def _modes(self, section, key, default):
        body = self.doc.get(section, {})
        if not isinstance(body, dict) or key not in body:
            return default
        raw = body[key]
        if not isinstance(raw, list) or not raw:
            self.errors.append('{}.{}: expected a non-empty list'
                               .format(section, key))
            return default
        modes = []
        for item in raw:
            try:
                modes.append(Maximizer.parse(item))
            except ConfigurationError as err:
                self.errors.extend('{}.{}: {}'.format(section, key, m)
                                   for m in err.messages)
                return default
        return tuple(modes)

    def _problem(self):
        fields = {
            'horizons': self._list('problem', 'horizons', (6,), int,
                                   lambda v: v >= 1, 'must be at least 1'),
            'gammas': self._list('problem', 'gammas', (10.0,), float,
                                 lambda v: v > 0, 'must be positive'),
            'meshes': self._meshes((0.125,)),
            'modes': self._modes('problem', 'modes',
                                 (Maximizer('local_adaptive'),)),
            'refinements': self._get('problem', 'refinements', 5, int,
                                     lambda v: v >= 0, 'must be >= 0'),
            'n_paths': self._get('problem', 'n_paths', 10000, int,
                                 lambda v: v >= 1, 'must be positive'),
            'n_eval_paths': self._get('problem', 'n_eval_paths', 10000, int,
                                      lambda v: v >= 1, 'must be positive'),
            'initial_wealth': self._get('problem', 'initial_wealth', 1.0,
                                        float, lambda v: v > 0,
                                        'must be positive'),
            'annual_rate': self._get('problem', 'annual_rate', 0.045, float,
                                     lambda v: v > -1.0, 'must exceed -1'),
            'periods_per_year': self._get('problem', 'periods_per_year', 12,
                                          int, lambda v: v >= 1,
                                          'must be positive'),
            'state_degree': self._get('problem', 'state_degree', 2, int,
                                      lambda v: 1 <= v <= 4,
                                      'must lie in 1..4'),
            'ridge_factor': self._get('problem', 'ridge_factor', 1e-6, float,
                                      lambda v: v >= 0, 'must be >= 0'),
            'log_utility': self._get('problem', 'log_utility', False, bool),
        }
        if not fields['log_utility'] and 1.0 in fields['gammas']:
            self.errors.append('problem.gammas: gamma = 1 requires '
                               'problem.log_utility = true')
        return fields

    def _costs(self):
        values = {
            'enabled': self._get('costs', 'enabled', True, bool),
            'tc_rate': self._get('costs', 'tc_rate', 0.003, float),
            'k': self._get('costs', 'k', 8e-6, float),
            'perm_impact_frac': self._get('costs', 'perm_impact_frac',
                                          2.0 / 3.0, float),
            'rel_spread': self._get('costs', 'rel_spread', 0.0, float),
            'cost_timing': self._get(
                'costs', 'cost_timing', 'pre', str,
                lambda v: v in COST_TIMINGS,
                'must be one of ' + ', '.join(COST_TIMINGS)
            ),
        }
        try:
            costs = CostModel(**values)
        except LSMCError as err:
            self.errors.append('costs: {}'.format(err))
            costs = CostModel()
        floor = self._get('costs', 'wealth_floor_frac', 1e-8, float,
                          lambda v: v > 0, 'must be positive')
        return {'costs': costs, 'wealth_floor_frac': floor}

    def _seeds(self):
        solve = self._get('seeds', 'solve', 1, int, lambda v: v >= 0,
                          'must be nonnegative')
        evaluate = self._get('seeds', 'evaluate', 2, int, lambda v: v >= 0,
                             'must be nonnegative')
        if solve == evaluate:
            self.errors.append('seeds.evaluate: must differ from seeds.solve')
        return {'solve_seed': solve, 'eval_seed': evaluate}

    def _bench(self):
        return {
            'budget_secs': self._get('bench', 'budget_secs', 3600.0, float,
                                     lambda v: v > 0, 'must be positive'),
            'dimensions': self._list('bench', 'dimensions', (2, 3), int,
                                     lambda v: v >= 1, 'must be positive'),
            'regression_modes': self._modes(
                'bench', 'regression_modes', RunConfig.regression_modes
            ),
        }
