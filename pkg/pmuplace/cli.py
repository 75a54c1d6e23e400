# cli.py - a cli client class module
#
# Copyright (C) 2011 Red Hat Inc.
#
# This program is free software; you can redistribute it and/or modify it
# under the terms of the GNU General Public License as published by the
# Free Software Foundation; either version 2 of the License, or (at your
# option) any later version.  See http://www.gnu.org/copyleft/gpl.html for
# the full text of the license.

import argparse
import configparser
import logging
import os
import re
import sys

import pmuplace.utils as utils

from pmuplace import Commands, ExperimentConfig, OBJECTIVES, TABLE_CASES
from pmuplace.algorithms import ALGORITHMS, MIN_PMU_ITERATIVE, PENALIZED_MMSE
from pmuplace.casestore import ENV_DATA_DIR
from pmuplace.convex import MU_PRESETS
from pmuplace.errors import ConfigError
from pmuplace.observability import COMPLETE, DEPTH_ONE, KINDS

RANGE_PATTERN = re.compile(r'^\s*(?P<first>\d+)\s*(?:\.\.|:|-)\s*(?P<last>\d+)\s*$')


def budget_range(value):
    """Parse an inclusive S-range such as 10..16 or 10:16"""
    m = RANGE_PATTERN.match(value)
    if m is None:
        raise argparse.ArgumentTypeError('%s is not a range like 10..16' % value)
    return range(int(m.group('first')), int(m.group('last')) + 1)


def mu_value(value):
    if value == 'auto':
        return value
    try:
        return float(value)
    except ValueError:
        raise argparse.ArgumentTypeError('%s is neither a number nor auto' % value)


class cliClient(object):
    """This is a client class for pmuplace clients."""

    DEFAULT_CLI_NAME = 'pmuplace'

    def __init__(self, config, name=None):
        """This requires a ConfigParser object

        Name of the app can optionally set, or discovered from exe name
        """

        self.config = config
        self._name = name
        # Property holders, set to none
        self._cmd = None
        # Setup the base argparser
        self.setup_argparser()
        # Add a subparser
        self.subparsers = self.parser.add_subparsers(
            title='Targets',
            description='These are valid commands you can ask %s to do'
                        % self.name)
        # Register all the commands
        self.setup_subparsers()

    @property
    def name(self):
        """Property used to identify prog name and key in config file"""

        if not self._name:
            self._name = self.get_name()
        return self._name

    def get_name(self):
        name = os.path.basename(sys.argv[0])
        if not name or '__main__.py' in name:
            name = self.DEFAULT_CLI_NAME
        return name

    # Define some properties here, for lazy loading
    @property
    def cmd(self):
        """This is a property for the command attribute"""

        if not self._cmd:
            self.load_cmd()
        return self._cmd

    def _get_opt(self, getter, opt, default, kind):
        try:
            return getter(self.name, opt)
        except ValueError:
            raise ConfigError('%s option must be %s' % (opt, kind))
        except (configparser.NoOptionError, configparser.NoSectionError):
            return default

    def _get_bool_opt(self, opt, default=False):
        return self._get_opt(self.config.getboolean, opt, default, 'a boolean')

    def _get_int_opt(self, opt, default=None):
        return self._get_opt(self.config.getint, opt, default, 'an integer')

    def _get_float_opt(self, opt, default=None):
        return self._get_opt(self.config.getfloat, opt, default, 'a number')

    def _items(self):
        if not self.config.has_section(self.name):
            return {}
        return dict(self.config.items(self.name, raw=True))

    def load_cmd(self):
        """This sets up the cmd object"""

        # load items from the config file
        items = self._items()

        data_dir = (getattr(self.args, 'data_dir', None) or
                    os.environ.get(ENV_DATA_DIR) or
                    items.get('data_dir'))
        workers = self.args.workers or self._get_int_opt('workers', 1)
        node_limit = getattr(self.args, 'node_limit', None) or \
            self._get_int_opt('node_limit', 200000)

        self._cmd = Commands(data_dir=data_dir and os.path.expanduser(data_dir),
                             output_dir=items.get('output_dir', os.curdir),
                             workers=workers,
                             node_limit=node_limit,
                             deterministic=self._get_bool_opt('deterministic', True))

    def setup_argparser(self):
        """Setup the argument parser and register some basic commands."""

        self.parser = argparse.ArgumentParser(
            prog=self.name,
            epilog='For detailed help pass --help to a target')
        # Add some basic arguments that should be used by all.
        # Add a config file
        self.parser.add_argument('--config', '-C',
                                 default=None,
                                 help='Specify a config file to use')
        # Let the user override where exported cases live
        self.parser.add_argument('--data-dir', default=None,
                                 help='Directory of exported cases (defaults '
                                      'to $%s or data_dir from the config)'
                                      % ENV_DATA_DIR)
        self.parser.add_argument('--workers', type=int, default=None,
                                 help='Number of worker threads')
        # Verbosity
        self.parser.add_argument('--verbose', '-v', dest='v',
                                 action='store_true',
                                 help='Show the iterations of the placement algorithms')
        self.parser.add_argument('--debug', '-d', dest='debug',
                                 action='store_true',
                                 help='Run with debug output')
        self.parser.add_argument('-q', action='store_true',
                                 help='Run quietly only displaying errors')

    def setup_subparsers(self):
        """Setup basic subparsers that all clients should use"""

        # help command
        self.register_help()

        # Add a common parser
        self.register_experiment_common()

        # Other targets
        self.register_export_cases()
        self.register_min_pmu()
        self.register_montecarlo()
        self.register_solve()
        self.register_sweep()
        self.register_table1()
        self.register_verify_cases()

    # All the register functions go here.
    def register_help(self):
        """Register the help command."""

        help_parser = self.subparsers.add_parser('help', help='Show usage')
        help_parser.set_defaults(command=self.parser.print_help)

    # Setup a common parser to save code duplication
    def register_experiment_common(self):
        """Create a common experiment parser to use in other commands"""

        self.experiment_parser_common = argparse.ArgumentParser(
            'experiment_common', add_help=False)
        self.experiment_parser_common.add_argument(
            '--case', required=True,
            help='Bundled case (%s), MATPOWER file or JSON snapshot'
                 % ', '.join(TABLE_CASES))
        self.experiment_parser_common.add_argument(
            '--objective', choices=OBJECTIVES, default='mse',
            help='Objective to optimize (default: mse)')
        self.experiment_parser_common.add_argument(
            '--constraint', choices=KINDS, default=COMPLETE,
            help='Observability constraint (default: complete)')
        self.experiment_parser_common.add_argument(
            '--voltage-noise', type=float, default=None,
            help='Variance r of the voltage phasor noise')
        self.experiment_parser_common.add_argument(
            '--branch-noise', type=float, default=None,
            help='Variance rho of the branch current noise')
        self.experiment_parser_common.add_argument(
            '--injection-scale', type=float, default=None,
            help='Scale from MW to the injection unit (default: 1/baseMVA)')
        self.experiment_parser_common.add_argument(
            '--exponent', type=float, default=None,
            help='Exponent L of the penalty, in (1, 2]')
        self.experiment_parser_common.add_argument(
            '--mu', type=mu_value, default=None,
            help='Penalty weight, auto or a number such as %s'
                 % ', '.join('%g' % m for m in MU_PRESETS))
        self.experiment_parser_common.add_argument(
            '--seed', type=int, default=None, help='Random seed')
        self.experiment_parser_common.add_argument(
            '--max-iterations', type=int, default=None,
            help='Iteration cap of the iterative algorithms')
        self.experiment_parser_common.add_argument(
            '--output-dir', default=None,
            help='Directory for reports (defaults to output_dir from the config)')

    def register_export_cases(self):
        """Register the export-cases target"""

        export_parser = self.subparsers.add_parser(
            'export-cases', help='Write the bundled cases and their checksums',
            description='Write the bundled IEEE cases as MATPOWER text into '
                        'the data directory and record their checksums in a '
                        'sources manifest.')
        export_parser.add_argument(
            'names', nargs='*', help='Cases to export (default: all)')
        export_parser.add_argument(
            '--output-dir', default=None,
            help='Directory to write into (defaults to the data directory)')
        export_parser.set_defaults(command=self.export_cases)

    def register_min_pmu(self):
        """Register the min-pmu target"""

        min_pmu_parser = self.subparsers.add_parser(
            'min-pmu', help='Smallest placement meeting an observability condition',
            description='Solve the minimum PMU problem exactly with branch '
                        'and bound and print the witness placement.')
        min_pmu_parser.add_argument('--case', required=True, help='Case to solve')
        min_pmu_parser.add_argument(
            '--constraint', choices=(COMPLETE, DEPTH_ONE), default=COMPLETE,
            help='Observability condition (default: complete)')
        min_pmu_parser.add_argument('--node-limit', type=int, default=None,
                                    help='Branch and bound node budget')
        min_pmu_parser.add_argument('--output', default=None,
                                    help='Also write the record to this JSON file')
        min_pmu_parser.set_defaults(command=self.min_pmu)

    def register_montecarlo(self):
        """Register the montecarlo target"""

        montecarlo_parser = self.subparsers.add_parser(
            'montecarlo', parents=[self.experiment_parser_common],
            help='Check the MSE of a placement by simulation',
            description='Compare the theoretical MSE of a placement with the '
                        'empirical error of the MMSE estimate over simulated '
                        'states. The placement is either given with --support '
                        'or computed by --alg at budget --S.')
        montecarlo_parser.add_argument(
            '--alg', choices=ALGORITHMS, default=PENALIZED_MMSE,
            help='Algorithm producing the placement')
        montecarlo_parser.add_argument('--S', type=int, dest='budget',
                                       default=None, help='Number of PMUs')
        montecarlo_parser.add_argument(
            '--support', type=int, nargs='+', default=None,
            help='Bus numbers carrying a PMU')
        montecarlo_parser.add_argument('--samples', type=int, default=10000,
                                       help='Number of simulated states')
        montecarlo_parser.set_defaults(command=self.montecarlo)

    def register_solve(self):
        """Register the solve target"""

        solve_parser = self.subparsers.add_parser(
            'solve', parents=[self.experiment_parser_common],
            help='Run a placement algorithm',
            description='Run a placement algorithm and write its JSON report '
                        'and iteration trace.')
        solve_parser.add_argument('--alg', choices=ALGORITHMS, default=PENALIZED_MMSE,
                                  help='Algorithm to run')
        group = solve_parser.add_mutually_exclusive_group(required=True)
        group.add_argument('--S', type=int, dest='budget', default=None,
                           help='Number of PMUs')
        group.add_argument('--tolerance', type=float, default=None,
                           help='MSE tolerance of %s' % MIN_PMU_ITERATIVE)
        solve_parser.add_argument(
            '--start-S', type=int, dest='start_budget', default=None,
            help='Starting budget of %s' % MIN_PMU_ITERATIVE)
        solve_parser.add_argument(
            '--bisection', action='store_true',
            help='Bisect the budget range instead of stepping by one')
        solve_parser.add_argument(
            '--debug-trace', action='store_true',
            help='Keep the Newton trace of every subproblem in the report')
        solve_parser.set_defaults(command=self.solve)

    def register_sweep(self):
        """Register the sweep target"""

        sweep_parser = self.subparsers.add_parser(
            'sweep', parents=[self.experiment_parser_common],
            help='Run algorithms over a range of budgets',
            description='Run every algorithm at every budget of the range. '
                        'The summary CSV has the columns S, algorithm, '
                        'objective, value, unobserved, wall_ms and status.')
        sweep_parser.add_argument('--alg', choices=ALGORITHMS, nargs='+',
                                  default=[PENALIZED_MMSE],
                                  help='Algorithms to run')
        sweep_parser.add_argument('--S-range', type=budget_range, dest='budget_range',
                                  required=True, help='Inclusive range such as 10..16')
        sweep_parser.set_defaults(command=self.sweep)

    def register_table1(self):
        """Register the table1 target"""

        table1_parser = self.subparsers.add_parser(
            'table1', help='Minimum PMU counts of the IEEE cases',
            description='Solve the minimum PMU problem of the IEEE 30, 39, '
                        '57 and 118 bus cases for both observability '
                        'conditions.')
        table1_parser.add_argument('--node-limit', type=int, default=None,
                                   help='Branch and bound node budget')
        table1_parser.add_argument('--output-dir', default=None,
                                   help='Also write table1.csv into this directory')
        table1_parser.set_defaults(command=self.table1)

    def register_verify_cases(self):
        """Register the verify-cases target"""

        verify_parser = self.subparsers.add_parser(
            'verify-cases', help='Check exported cases against their manifest')
        verify_parser.set_defaults(command=self.verify_cases)

    # All the command functions go here
    def experiment_config(self):
        """Merge the command line with the config file into an ExperimentConfig"""

        items = self._items()
        args = self.args

        def pick(value, opt, getter, default):
            if value is not None:
                return value
            return getter(opt, default)

        mu = args.mu
        if mu is None:
            mu = mu_value(items.get('penalty', 'auto'))
        scale = args.injection_scale
        if scale is None and items.get('injection_scale', 'auto') != 'auto':
            scale = self._get_float_opt('injection_scale')
        algorithms = args.alg if isinstance(args.alg, list) else [args.alg]

        config = ExperimentConfig(
            args.case,
            algorithms=algorithms,
            objective=args.objective,
            constraint=args.constraint,
            budget=getattr(args, 'budget', None),
            budget_range=getattr(args, 'budget_range', None),
            tolerance=getattr(args, 'tolerance', None),
            start_budget=getattr(args, 'start_budget', None),
            voltage_noise=pick(args.voltage_noise, 'voltage_noise', self._get_float_opt, 0.01),
            branch_noise=pick(args.branch_noise, 'branch_noise', self._get_float_opt, 0.02),
            injection_scale=scale,
            variance_ratio=self._get_float_opt('variance_ratio', 0.1),
            variance_floor=self._get_float_opt('variance_floor', 1e-4),
            exponent=pick(args.exponent, 'exponent', self._get_float_opt, 1.5),
            mu=mu,
            seed=pick(args.seed, 'seed', self._get_int_opt, 0),
            output_dir=args.output_dir or self.cmd.output_dir,
            max_iterations=pick(args.max_iterations, 'max_iterations',
                                self._get_int_opt, 500),
            bisection=getattr(args, 'bisection', False),
            debug_trace=getattr(args, 'debug_trace', False))
        return config

    def export_cases(self):
        for filename in self.cmd.export_cases(self.args.output_dir, self.args.names):
            print(filename)

    def min_pmu(self):
        result = self.cmd.min_pmu(self.args.case, self.args.constraint)
        if self.args.output:
            utils.write_json(result, self.args.output)
        utils.log_result(self.log.info, result)

    def montecarlo(self):
        config = self.experiment_config()
        result = self.cmd.montecarlo(config, self.args.samples, self.args.support)
        utils.log_result(self.log.info, result)

    def solve(self):
        config = self.experiment_config()
        if config.tolerance is not None and config.algorithms[0] != MIN_PMU_ITERATIVE:
            raise ConfigError('--tolerance only applies to %s' % MIN_PMU_ITERATIVE)
        if config.tolerance is None and config.algorithms[0] == MIN_PMU_ITERATIVE:
            raise ConfigError('%s needs --tolerance' % MIN_PMU_ITERATIVE)
        report, report_path, trace_path = self.cmd.solve(config)
        metrics = report.final_metrics
        summary = {'algorithm': report.algorithm,
                   'S': report.final_placement.budget,
                   'support': report.bus_ids,
                   'f_e': metrics.get('f_e'),
                   'f_mi': metrics.get('f_mi'),
                   'unobserved': metrics.get('unobserved_count'),
                   'report': report_path,
                   'trace': trace_path}
        utils.log_result(self.log.info, summary)

    def sweep(self):
        config = self.experiment_config()
        rows, path = self.cmd.sweep(config)
        failed = [row for row in rows if row['status'] != 'ok']
        print(path)
        if failed:
            self.log.warning('%d of %d sweep points failed', len(failed), len(rows))

    def table1(self):
        rows = self.cmd.table1(output_dir=self.args.output_dir)
        print('case, branches, complete, depth_one')
        for row in rows:
            print('%s-bus, %d, %d, %d%s' % (
                row['case'].replace('ieee', ''), row['n_branches'], row['complete'],
                row['depth_one'], '' if row['certified'] else ' (not certified)'))

    def verify_cases(self):
        results = self.cmd.verify_cases()
        for filename, status in results:
            print('%s: %s' % (filename, status))
        bad = [f for f, status in results if status != 'ok']
        if bad:
            raise ConfigError('%d case file(s) failed verification: %s'
                              % (len(bad), ', '.join(bad)))

    def setupLogging(self, log):
        """Setup the various logging stuff."""

        # Assign the log object to self
        self.log = log

        # Add a log filter class
        class StdoutFilter(logging.Filter):

            def filter(self, record):
                # If the record level is 20 (INFO) or lower, let it through
                return record.levelno <= logging.INFO

        # have to create a filter for the stdout stream to filter out WARN+
        myfilt = StdoutFilter()
        # Simple format
        formatter = logging.Formatter('%(message)s')
        stdouthandler = logging.StreamHandler(sys.stdout)
        stdouthandler.addFilter(myfilt)
        stdouthandler.setFormatter(formatter)
        stderrhandler = logging.StreamHandler()
        stderrhandler.setLevel(logging.WARNING)
        stderrhandler.setFormatter(formatter)
        self.log.addHandler(stdouthandler)
        self.log.addHandler(stderrhandler)

    def parse_cmdline(self):
        """Parse the commandline"""

        # Parse the args
        self.args = self.parser.parse_args()
