"""
CLI entry point for the least squares Monte Carlo portfolio solver
"""
import argparse
import json
import logging
import os
import sys

from lsmcport import api
from lsmcport.config import load_config
from lsmcport.errors import ConfigurationError, LSMCError
from lsmcport.solver import Maximizer, Policy, solve as solve_problem
from lsmcport.util import atomic_write
from lsmcport.__version__ import __version__


CONFIG_ERROR_MSG = """\
The run configuration is invalid. Check the file given with --config, or
./lsmcport.toml, ~/.lsmcport.toml and /etc/lsmcport.toml in that order.
Problems found:
"""


def _config(args):
    config = load_config(args.config)
    return config.with_overrides(seed=args.seed, out=args.out,
                                 budget_secs=args.budget_secs)


def _cell(args):
    return {
        'horizon': args.horizon,
        'gamma': args.gamma,
        'mesh': args.mesh,
        'mode': args.mode,
    }


def _cell_name(spec):
    return 'N{}-gamma{:g}-mesh{}-{}'.format(
        spec.horizon, spec.utility.gamma, int(round(1 / spec.mesh)),
        str(spec.maximizer).replace(':', '')
    )


def _output_dir(config):
    os.makedirs(config.output_dir, exist_ok=True)
    return config.output_dir


def _weights(names, alpha):
    return ', '.join('{} {:.4f}'.format(n, a) for n, a in zip(names, alpha))


def calibrate(args):
    """
    Calibrates a VAR(1) market model on the log-returns of a price CSV
    (header row of series names, dates in the first column) and writes the
    model as JSON.
    """
    model = api.calibrate(args.prices)
    atomic_write(args.model, model.dumps())
    print('Calibrated VAR(1): {} series, {} observations, spectral radius '
          '{:.4f}'.format(model.dim, model.n_obs, model.spectral_radius()))
    print('Wrote {}'.format(args.model))
    sys.exit(0)


def solve(args):
    """
    Solves one cell of the run configuration (first horizon, gamma, mesh
    and mode unless given) and writes the policy and its run diagnostics.
    """
    config = _config(args)
    spec = api.cell_spec(config, **_cell(args))
    policy = solve_problem(spec)

    out = _output_dir(config)
    name = _cell_name(spec)
    policy_path = os.path.join(out, 'policy-{}.json'.format(name))
    diag_path = os.path.join(out, 'diagnostics-{}.json'.format(name))
    atomic_write(policy_path, policy.dumps())
    atomic_write(diag_path, json.dumps(policy.diagnostics, indent=2,
                                       sort_keys=True) + '\n')

    alpha = policy.act(0, spec.market.start_state(), spec.w0)
    print('Solved {} in {:.2f}s'.format(name,
                                        policy.diagnostics['total_seconds']))
    print('Initial allocation: {}, cash {:.4f}'.format(
        _weights(spec.asset_names, alpha), 1.0 - alpha.sum()))
    print('Wrote {}'.format(policy_path))
    print('Wrote {}'.format(diag_path))
    sys.exit(0)


def evaluate(args):
    """
    Replays a solved policy (or the uniform random policy with
    ``--random``) on fresh paths drawn with the evaluation seed and
    writes the certainty-equivalent return report as JSON and CSV.
    """
    config = _config(args)
    if args.random:
        policy = None
    elif args.policy:
        policy = Policy.load(args.policy)
        if args.mode:
            policy = policy.with_maximizer(args.mode)
    else:
        raise ConfigurationError('evaluate needs a policy file or --random')

    cell = _cell(args)
    if policy is not None:
        cell['mode'] = str(policy.maximizer)
        if args.mesh is None:
            cell['mesh'] = policy.mesh
        if args.horizon is None:
            cell['horizon'] = policy.horizon
    report = api.evaluate(policy, config, random_baseline=args.random,
                          **cell)

    out = _output_dir(config)
    stem = 'report-random' if args.random else 'report-{}'.format(
        os.path.splitext(os.path.basename(args.policy))[0]
    )
    json_path = os.path.join(out, stem + '.json')
    csv_path = os.path.join(out, stem + '.csv')
    atomic_write(json_path, report.dumps())
    atomic_write(csv_path, report.to_frame().to_csv(index=False,
                                                    na_rep='NA'))
    print('CER {:.2f} bp per period (se {:.2f}) over {} paths'.format(
        report.cer_bp, report.cer_se_bp, report.n_eval_paths))
    print('Wrote {}'.format(json_path))
    print('Wrote {}'.format(csv_path))
    sys.exit(0)


def _bench(args, runner, filename):
    config = _config(args)
    report = runner(config, budget_secs=config.budget_secs,
                    parallel=args.parallel)

    path = os.path.join(_output_dir(config), filename)
    atomic_write(path, report['table'].to_csv(index=False, na_rep='NA'))
    print('Sweep result: {} ({} rows)'.format(report['result'],
                                              len(report['table'])))
    for error in report['errors']:
        print('NA: {}'.format(error))
    print('Wrote {}'.format(path))
    sys.exit(0)


def bench_regression(args):
    """
    Compares control regression methods (local degree 2, global degrees
    2 to 4) across the configured meshes, reporting CER, wall time and
    runtime relative to the fastest method.
    """
    _bench(args, api.bench_regression, 'bench_regression.csv')


def bench_mesh(args):
    """
    Sweeps mesh x horizon x gamma and mesh x dimension, reporting CER,
    initial weights and wall time; cells over budget are reported as NA.
    """
    _bench(args, api.bench_mesh, 'bench_mesh.csv')


def _mode(text):
    try:
        return str(Maximizer.parse(text))
    except ConfigurationError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def main(argv=None):
    parser = argparse.ArgumentParser(prog='lsmcport')

    parser.add_argument(
        '-v', '--version',
        action='store_true',
        help='Print the version of lsmcport'
    )

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=str, help='TOML run configuration')
    common.add_argument('--seed', type=int, help='Override the solve seed')
    common.add_argument('--out', type=str, help='Output directory')
    common.add_argument(
        '--budget-secs', type=float,
        help='Wall-clock budget per sweep cell'
    )
    common.add_argument(
        '--parallel',
        action='store_true',
        help='Run sweep cells concurrently (timings become noisier)'
    )
    common.add_argument('--verbose', action='store_true',
                        help='Log progress')
    common.add_argument('--debug', action='store_true',
                        help='Log numerical details')

    cell = argparse.ArgumentParser(add_help=False)
    cell.add_argument('--horizon', type=int, help='Number of periods')
    cell.add_argument('--gamma', type=float, help='Relative risk aversion')
    cell.add_argument('--mesh', type=str, help='Grid mesh, e.g. 1/8')
    cell.add_argument(
        '--mode', type=_mode,
        help='grid_only, local_adaptive or global_adaptive:<degree>'
    )

    subparsers = parser.add_subparsers()

    parser_calibrate = subparsers.add_parser(
        'calibrate', help=calibrate.__doc__, parents=[common]
    )
    parser_calibrate.add_argument('prices', type=str)
    parser_calibrate.add_argument('model', type=str)
    parser_calibrate.set_defaults(func=calibrate)

    parser_solve = subparsers.add_parser(
        'solve', help=solve.__doc__, parents=[common, cell]
    )
    parser_solve.set_defaults(func=solve)

    parser_evaluate = subparsers.add_parser(
        'evaluate', help=evaluate.__doc__, parents=[common, cell]
    )
    parser_evaluate.add_argument('policy', type=str, nargs='?')
    parser_evaluate.add_argument(
        '-r', '--random',
        action='store_true',
        help='Evaluate the uniform random policy instead'
    )
    parser_evaluate.set_defaults(func=evaluate)

    parser_bench_regression = subparsers.add_parser(
        'bench-regression', help=bench_regression.__doc__, parents=[common]
    )
    parser_bench_regression.set_defaults(func=bench_regression)

    parser_bench_mesh = subparsers.add_parser(
        'bench-mesh', help=bench_mesh.__doc__, parents=[common]
    )
    parser_bench_mesh.set_defaults(func=bench_mesh)

    args = parser.parse_args(argv)

    if args.version:
        print('lsmcport version {0}'.format(__version__))
        sys.exit(0)

    if not hasattr(args, 'func') or not args.func:
        parser.print_help()
        sys.exit(1)

    level = logging.WARNING
    if args.debug:
        level = logging.DEBUG
    elif args.verbose:
        level = logging.INFO
    logging.basicConfig(
        level=level, format='%(asctime)s %(levelname)s %(name)s: %(message)s'
    )

    try:
        args.func(args)
    except ConfigurationError as err:
        print(CONFIG_ERROR_MSG + ''.join(
            '  - {}\n'.format(m) for m in err.messages))
        sys.exit(1)
    except LSMCError as err:
        print('Error: {}'.format(err))
        sys.exit(1)


if __name__ == '__main__':
    main()
