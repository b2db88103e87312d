"""
Benchmark sweeps run a grid of solve-and-replay cells and assemble one
table row per result.

Every sweep returns a dict with three fields: a ``result`` field with a
value of ``OK``, ``Partial`` or ``Error``; a ``table`` field holding a
``pandas.DataFrame`` with the sweep's fixed columns, and an ``errors``
field listing the cells that failed or ran out of budget. Failed cells
still produce rows, with ``NA`` in every measured column.

Each cell runs in its own worker process when a wall-clock budget is set,
and is terminated once the budget is spent.
"""
import logging
import multiprocessing
from time import monotonic, perf_counter
from typing import NamedTuple

import numpy as np
import pandas as pd

from lsmcport.errors import LSMCError
from lsmcport.evaluation import replay_policy
from lsmcport.market import synthetic_model
from lsmcport.solver import extraction_profile, forward_simulate, solve
from lsmcport.util import format_mesh


logger = logging.getLogger(__name__)

REGRESSION_COLUMNS = (
    'mesh', 'mode', 'gamma', 'horizon', 'cer_bp', 'cer_se_bp',
    'solve_seconds', 'extraction_seconds', 'seconds', 'relative_runtime',
    'status',
)
MESH_COLUMNS = (
    'sweep', 'd', 'mesh', 'horizon', 'gamma', 'mode', 'cer_bp', 'cer_se_bp',
    'cash_weight', 'seconds', 'status',
)
POLL_SECS = 0.05


class Cell(NamedTuple):
    """One unit of sweep work, picklable for worker processes."""
    kind: str
    config: object
    params: dict


def run_cell(cell):
    """
    Run a cell and report ``('ok', rows)`` or ``('failed', message)``.
    """
    try:
        if cell.kind == 'regression':
            rows = _regression_cell(cell.config, **cell.params)
        else:
            rows = _mesh_cell(cell.config, **cell.params)
        return 'ok', rows
    except (LSMCError, ArithmeticError, np.linalg.LinAlgError,
            MemoryError) as err:
        return 'failed', '{}: {}'.format(type(err).__name__, err)


def _regression_cell(config, mesh):
    """
    Solve once at ``mesh`` (the value recursion does not depend on the
    maximizer) and time policy extraction and replay per maximizer mode.
    """
    market, assets = config.resolve_market()
    first = config.regression_modes[0]
    spec = config.problem(market, assets, config.horizons[0],
                          config.gammas[0], mesh, first)
    policy = solve(spec)
    solve_seconds = policy.diagnostics['forward_seconds'] + \
        sum(policy.diagnostics['backward_seconds'])
    paths = forward_simulate(spec)

    rows = []
    for mode in config.regression_modes:
        moded = policy.with_maximizer(mode)
        profile = extraction_profile(moded, paths)
        extraction = sum(profile['extraction_seconds'])
        report = replay_policy(moded, spec.with_maximizer(mode),
                               config.eval_seed, config.n_eval_paths)
        rows.append({
            'mesh': format_mesh(mesh),
            'mode': str(mode),
            'gamma': spec.utility.gamma,
            'horizon': spec.horizon,
            'cer_bp': report.cer_bp,
            'cer_se_bp': report.cer_se_bp,
            'solve_seconds': solve_seconds,
            'extraction_seconds': extraction,
            'seconds': solve_seconds + extraction,
            'status': 'ok',
        })
    return rows


def _mesh_cell(config, sweep, mesh, horizon, gamma, d=None):
    if d is None:
        market, assets = config.resolve_market()
    else:
        market = synthetic_model(d)
        assets = tuple(range(d))
    mode = config.modes[0]
    spec = config.problem(market, assets, horizon, gamma, mesh, mode)

    tick = perf_counter()
    policy = solve(spec)
    seconds = perf_counter() - tick
    report = replay_policy(policy, spec, config.eval_seed,
                           config.n_eval_paths)
    row = {
        'sweep': sweep,
        'd': spec.d,
        'mesh': format_mesh(mesh),
        'horizon': horizon,
        'gamma': gamma,
        'mode': str(mode),
        'cer_bp': report.cer_bp,
        'cer_se_bp': report.cer_se_bp,
        'cash_weight': report.cash_weight,
        'seconds': seconds,
        'status': 'ok',
    }
    row.update(zip(report.allocation_labels(), report.initial_allocation))
    return [row]


def _run_inline(cells):
    for cell in cells:
        yield run_cell(cell)


def _run_in_workers(cells, budget_secs, processes):
    """
    Run cells in worker processes, at most ``processes`` at a time, each
    stopped once it has run for ``budget_secs``.
    """
    outcomes = [None] * len(cells)
    pending = list(enumerate(cells))
    running = []
    while pending or running:
        while pending and len(running) < processes:
            i, cell = pending.pop(0)
            pool = multiprocessing.Pool(processes=1)
            result = pool.apply_async(run_cell, (cell,))
            running.append((i, pool, result, monotonic() + budget_secs))

        still_running = []
        for i, pool, result, deadline in running:
            if result.ready():
                try:
                    outcomes[i] = result.get()
                except Exception as err:
                    outcomes[i] = ('failed', '{}: {}'.format(
                        type(err).__name__, err))
                pool.close()
                pool.join()
            elif monotonic() >= deadline:
                outcomes[i] = ('budget', 'wall-clock budget of {}s exceeded'
                               .format(budget_secs))
                pool.terminate()
                pool.join()
            else:
                still_running.append((i, pool, result, deadline))
                continue
            yield i, outcomes[i]
        running = still_running
        if running:
            running[0][2].wait(POLL_SECS)


class Sweep:
    """
    Base class for all sweeps setting up the row and error lists and
    making the final report.

    Sweeps are performed by calling the ``perform`` method, which runs the
    cells returned by ``cells`` and returns the result of ``_complete``.
    """
    columns = ()

    def __init__(self, config, budget_secs=None, parallel=False):
        """
        :param RunConfig config: run configuration
        :param float budget_secs: wall-clock budget per cell, None runs
            cells in this process without a budget
        :param bool parallel: run cells concurrently, one worker per CPU
        """
        self.config = config
        self.budget_secs = budget_secs
        self.parallel = parallel
        self.rows = []
        self.errors = []

    def cells(self):
        """
        The sweep's cells. This method should be overridden in
        subclasses.
        """
        return []

    def perform(self):
        """
        Run every cell and collect its rows.

        :returns: Sweep report
        :rtype: dict
        """
        cells = self.cells()
        if self.budget_secs is None and not self.parallel:
            outcomes = enumerate(_run_inline(cells))
        else:
            budget = self.budget_secs or float('inf')
            processes = multiprocessing.cpu_count() if self.parallel else 1
            outcomes = _run_in_workers(cells, budget, processes)

        collected = {}
        for i, outcome in outcomes:
            collected[i] = outcome
            status, _ = outcome
            logger.info('Sweep cell %s finished: %s', cells[i].params, status)
        for i, cell in enumerate(cells):
            self._collect(cell, collected[i])
        return self._complete()

    def _collect(self, cell, outcome):
        status, payload = outcome
        if status == 'ok':
            self.rows.extend(payload)
            return
        if status == 'budget':
            logger.warning('Sweep cell %s exceeded its budget', cell.params)
        self.errors.append('{}: {}'.format(_describe(cell.params), payload))
        self.rows.extend(self.na_rows(cell, status))

    def na_rows(self, cell, status):
        row = {key: _label(key, value) for key, value in cell.params.items()}
        row['status'] = status
        return [row]

    def _complete(self):
        """
        Compile a result dict from the rows and errors lists
        """
        table = pd.DataFrame(self.rows)
        extra = [c for c in table.columns if c not in self.columns]
        table = table.reindex(columns=list(self.columns) + extra)

        result = {}
        if not self.errors:
            result['result'] = 'OK'
        elif (table['status'] == 'ok').any():
            result['result'] = 'Partial'
        else:
            result['result'] = 'Error'
        result['table'] = table
        result['errors'] = self.errors
        return result


def _label(key, value):
    return format_mesh(value) if key == 'mesh' else value


def _describe(params):
    return ', '.join('{}={}'.format(k, _label(k, v))
                     for k, v in params.items())


class RegressionBench(Sweep):
    """
    Compare control regression methods: every mesh of the configuration
    against every regression mode, reporting CER, wall time and the
    runtime as a multiple of the fastest mode at the same mesh.
    """
    columns = REGRESSION_COLUMNS

    def cells(self):
        return [Cell('regression', self.config, {'mesh': mesh})
                for mesh in self.config.meshes]

    def na_rows(self, cell, status):
        return [
            {'mesh': format_mesh(cell.params['mesh']), 'mode': str(mode),
             'gamma': self.config.gammas[0],
             'horizon': self.config.horizons[0], 'status': status}
            for mode in self.config.regression_modes
        ]

    def _complete(self):
        result = super()._complete()
        table = result['table']
        fastest = table.groupby('mesh')['seconds'].transform('min')
        table['relative_runtime'] = table['seconds'] / fastest
        return result


class MeshBench(Sweep):
    """
    Mesh and dimension scaling: mesh x horizon x gamma on the configured
    market, then mesh x dimension on synthetic markets at the first
    horizon and gamma.
    """
    columns = MESH_COLUMNS

    def cells(self):
        config = self.config
        cells = [
            Cell('mesh', config, {'sweep': 'horizon', 'mesh': mesh,
                                  'horizon': horizon, 'gamma': gamma})
            for mesh in config.meshes
            for horizon in config.horizons
            for gamma in config.gammas
        ]
        cells.extend(
            Cell('mesh', config, {'sweep': 'dimension', 'mesh': mesh,
                                  'horizon': config.horizons[0],
                                  'gamma': config.gammas[0], 'd': d})
            for d in config.dimensions
            for mesh in config.meshes
        )
        return cells
