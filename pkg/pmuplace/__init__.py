# pmuplace - a Python library for PMU placement
#
# Copyright (C) 2011 Red Hat Inc.
#
# This program is free software; you can redistribute it and/or modify it
# under the terms of the GNU General Public License as published by the
# Free Software Foundation; either version 2 of the License, or (at your
# option) any later version.  See http://www.gnu.org/copyleft/gpl.html for
# the full text of the license.

import csv
import logging
import os
from multiprocessing.dummy import Pool as ThreadPool

from pmuplace import algorithms as alg
from pmuplace.casestore import CaseStore
from pmuplace.convex import DEFAULT_EXPONENT
from pmuplace.errors import ConfigError, pmuError
from pmuplace.estimation import EstimationProblem, Placement, monte_carlo_mse
from pmuplace.observability import KINDS, ObservabilityConstraint, min_pmu_blp


class NullHandler(logging.Handler):
    """Null logger to avoid spurious messages, add a handler in app code"""
    def emit(self, record):
        pass


h = NullHandler()
# This is our log object, clients of this library can use this object to
# define their own logging needs
log = logging.getLogger(__name__)
# Add the null handler
log.addHandler(h)

OBJECTIVES = ('mse', 'mi')
SWEEP_COLUMNS = ['S', 'algorithm', 'objective', 'value', 'unobserved',
                 'wall_ms', 'status']
TABLE_CASES = ('ieee30', 'ieee39', 'ieee57', 'ieee118')


class ExperimentConfig(object):
    """Everything one experiment needs

    Exactly one of ``budget``, ``budget_range`` and ``tolerance`` is set.
    ``algorithms`` may hold several names for a sweep; the other commands
    use the first one.
    """

    def __init__(self, case, algorithms=(alg.PENALIZED_MMSE,),
                 objective='mse', constraint='complete', budget=None,
                 budget_range=None, tolerance=None, start_budget=None,
                 voltage_noise=0.01, branch_noise=0.02, injection_scale=None,
                 variance_ratio=0.1, variance_floor=1e-4,
                 exponent=DEFAULT_EXPONENT, mu='auto',
                 seed=0, output_dir='.', max_iterations=500, bisection=False,
                 debug_trace=False):
        if isinstance(algorithms, str):
            algorithms = (algorithms,)
        self.case = case
        self.algorithms = tuple(algorithms)
        self.objective = objective
        self.constraint = constraint
        self.budget = budget
        self.budget_range = budget_range
        self.tolerance = tolerance
        self.start_budget = start_budget
        self.voltage_noise = voltage_noise
        self.branch_noise = branch_noise
        self.injection_scale = injection_scale
        self.variance_ratio = variance_ratio
        self.variance_floor = variance_floor
        self.exponent = exponent
        self.mu = mu
        self.seed = seed
        self.output_dir = output_dir
        self.max_iterations = max_iterations
        self.bisection = bisection
        self.debug_trace = debug_trace

    @property
    def algorithm(self):
        return self.algorithms[0]

    @property
    def budgets(self):
        if self.budget_range is not None:
            return list(self.budget_range)
        return [self.budget]

    def validate(self, n_buses=None):
        """Check the settings, against a network size when given

        Raises:
            ConfigError: A setting is out of range.
        """
        for name in self.algorithms:
            if name not in alg.ALGORITHMS:
                raise ConfigError('Unknown algorithm %s' % name)
        if self.objective not in OBJECTIVES:
            raise ConfigError('Unknown objective %s' % self.objective)
        if self.constraint not in KINDS:
            raise ConfigError('Unknown constraint %s' % self.constraint)
        given = [v is not None for v in (self.budget, self.budget_range, self.tolerance)]
        if sum(given) != 1:
            raise ConfigError('Exactly one of S, S-range and tolerance must be given')
        if self.budget_range is not None and not len(self.budget_range):
            raise ConfigError('Empty S-range')
        if self.voltage_noise <= 0 or self.branch_noise <= 0:
            raise ConfigError('Noise variances must be positive')
        if not 1 < self.exponent <= 2:
            raise ConfigError('Penalty exponent must lie in (1, 2]')
        if self.mu != 'auto' and float(self.mu) <= 0:
            raise ConfigError('Penalty weight must be positive')
        if self.tolerance is not None and self.tolerance <= 0:
            raise ConfigError('Tolerance must be positive')
        if self.budget is not None or self.budget_range is not None:
            upper = n_buses if n_buses is not None else float('inf')
            for budget in self.budgets:
                if not 1 <= budget <= upper:
                    raise ConfigError('S=%s outside [1, %s]' % (budget, n_buses or 'N'))

    def snapshot(self):
        data = dict(self.__dict__)
        data['algorithms'] = list(self.algorithms)
        if self.budget_range is not None:
            data['budget_range'] = list(self.budget_range)
        return data


class Commands(object):
    """This is a class to hold all the commands that will be called
    by clients
    """

    def __init__(self, data_dir=None, output_dir='.', workers=1,
                 node_limit=200000, deterministic=True):
        """Init the object and some configuration details."""

        # Where exported cases and their manifest live
        self.data_dir = data_dir
        # Default directory of reports
        self.output_dir = output_dir
        # Thread pool size for sweeps and neighborhood scans
        self.workers = workers
        # Branch and bound node budget
        self.node_limit = node_limit
        # Sequential branch and bound, reproducible witnesses
        self.deterministic = deterministic
        self.log = log

    # Define properties here

    @property
    def cases(self):
        """A helper to locate networks

        Built on every access so a changed ``data_dir`` is honored.
        """
        return CaseStore(self.data_dir)

    def load_grid(self, case):
        return self.cases.load(case)

    def build_problem(self, model, config):
        return EstimationProblem.from_grid(
            model, config.voltage_noise, config.branch_noise,
            config.injection_scale, config.variance_ratio,
            config.variance_floor)

    def _output_dir(self, config):
        directory = config.output_dir or self.output_dir
        if not os.path.isdir(directory):
            os.makedirs(directory)
        return directory

    def run_algorithm(self, problem, config, algorithm, budget=None):
        """Run one algorithm and return its RunReport"""
        if algorithm in (alg.PENALIZED_MMSE, alg.PENALIZED_MI):
            kind = 'mse' if algorithm == alg.PENALIZED_MMSE else 'mi'
            report = alg.penalized(
                problem, kind, budget, config.constraint,
                exponent=config.exponent, mu=config.mu,
                max_iterations=config.max_iterations,
                record_trace=config.debug_trace)
        elif algorithm == alg.LOCAL_SEARCH:
            report = alg.local_search(
                problem, budget, config.objective, workers=self.workers)
        elif algorithm == alg.MIN_PMU_ITERATIVE:
            report = alg.min_pmu_iterative(
                problem, config.tolerance, start_budget=config.start_budget,
                bisection=config.bisection, workers=self.workers)
        elif algorithm == alg.BOX_RELAX:
            report = alg.box_relax_round(
                problem, budget, config.objective, config.max_iterations)
        else:
            raise ConfigError('Unknown algorithm %s' % algorithm)
        report.config_snapshot.update(config.snapshot())
        return report

    def solve(self, config):
        """Run the configured algorithm and write its report and trace

        Returns:
            tuple: The RunReport and the paths of the JSON report and the
            trace CSV.
        """
        model = self.load_grid(config.case)
        config.validate(model.n_buses)
        if config.algorithm == alg.MIN_PMU_ITERATIVE and config.tolerance is None:
            raise ConfigError('%s needs a tolerance' % config.algorithm)
        problem = self.build_problem(model, config)
        report = self.run_algorithm(problem, config, config.algorithm, config.budget)

        directory = self._output_dir(config)
        stem = '%s-%s-S%s' % (model.name or 'case', config.algorithm, report.budget)
        report_path = os.path.join(directory, stem + '.json')
        trace_path = os.path.join(directory, stem + '-trace.csv')
        report.write_json(report_path)
        report.write_trace(trace_path)
        self.log.debug('Wrote %s and %s', report_path, trace_path)
        return report, report_path, trace_path

    def _sweep_point(self, problem, config, algorithm, budget, directory, name):
        row = {'S': budget, 'algorithm': algorithm, 'objective': config.objective,
               'value': '', 'unobserved': '', 'wall_ms': 0, 'status': 'ok'}
        try:
            report = self.run_algorithm(problem, config, algorithm, budget)
        except pmuError as e:
            self.log.error('S=%d %s failed: %s', budget, algorithm, e)
            row['status'] = type(e).__name__
            return row
        metrics = report.final_metrics
        row['value'] = metrics['f_e'] if config.objective == 'mse' else metrics['f_mi']
        row['unobserved'] = metrics.get('unobserved_count', '')
        row['wall_ms'] = int(round(report.wall_time * 1000))
        report.write_json(os.path.join(
            directory, '%s-%s-S%d.json' % (name, algorithm, budget)))
        return row

    def sweep(self, config):
        """Run every algorithm at every budget of the range

        Points run on a thread pool; each writes its own report and the
        summary CSV is written once all of them are done. Failed points are
        kept as rows with a status other than 'ok'.

        Returns:
            tuple: The rows and the path of the summary CSV.
        """
        if config.budget_range is None:
            raise ConfigError('A sweep needs an S-range')
        model = self.load_grid(config.case)
        config.validate(model.n_buses)
        problem = self.build_problem(model, config)
        directory = self._output_dir(config)
        name = model.name or 'case'
        points = [(algorithm, budget) for budget in config.budgets
                  for algorithm in config.algorithms]

        def run(point):
            return self._sweep_point(problem, config, point[0], point[1],
                                     directory, name)

        if self.workers > 1:
            pool = ThreadPool(self.workers)
            try:
                rows = pool.map(run, points)
            finally:
                pool.close()
        else:
            rows = [run(point) for point in points]

        path = os.path.join(directory, 'sweep-%s-%s.csv' % (name, config.objective))
        with open(path, 'w') as f:
            writer = csv.DictWriter(f, SWEEP_COLUMNS, lineterminator='\n')
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
        return rows, path

    def min_pmu(self, case, kind):
        """Smallest placement meeting an observability constraint"""
        model = self.load_grid(case)
        constraint = ObservabilityConstraint.build(kind, model.incidence)
        result = min_pmu_blp(constraint, node_limit=self.node_limit,
                             deterministic=self.deterministic,
                             workers=max(self.workers, 1))
        if not constraint.check(Placement(result.x)).satisfied:
            raise pmuError('Witness violates the %s constraint' % kind)
        return result.to_dict(network=model.name, bus_ids=model.bus_ids)

    def table1(self, names=TABLE_CASES, output_dir=None):
        """Minimum PMU counts of the IEEE cases for both constraints

        Returns:
            list: One dict per case with the bus and branch counts, both
            minima and whether every search closed its gap.
        """
        rows = []
        for name in names:
            model = self.load_grid(name)
            row = {'case': name, 'n_buses': model.n_buses,
                   'n_branches': model.incidence.n_branches}
            certified = True
            for kind in ('complete', 'depth_one'):
                result = self.min_pmu(name, kind)
                row[kind] = result['S_min']
                certified = certified and result['optimal']
            row['certified'] = certified
            if not certified:
                self.log.warning('%s: node budget exhausted, row is not certified', name)
            rows.append(row)

        if output_dir:
            if not os.path.isdir(output_dir):
                os.makedirs(output_dir)
            with open(os.path.join(output_dir, 'table1.csv'), 'w') as f:
                writer = csv.DictWriter(
                    f, ['case', 'n_buses', 'n_branches', 'complete', 'depth_one',
                        'certified'], lineterminator='\n')
                writer.writeheader()
                for row in rows:
                    writer.writerow(row)
        return rows

    def montecarlo(self, config, n_samples=10000, support=None):
        """Compare the theoretical MSE of a placement with a simulation

        Args:
            config (ExperimentConfig): Case, noise and the algorithm used when
                no placement is given.
            n_samples (int): Number of simulated states.
            support (list, optional): External bus numbers of the placement.

        Returns:
            dict: theoretical and empirical MSE, standard error and z-score.
        """
        model = self.load_grid(config.case)
        problem = self.build_problem(model, config)
        if support is not None:
            index = dict((bus_id, k) for k, bus_id in enumerate(model.bus_ids))
            try:
                placement = Placement.from_support([index[b] for b in support],
                                                   model.n_buses)
            except KeyError as e:
                raise ConfigError('Unknown bus %s' % e)
        else:
            config.validate(model.n_buses)
            placement = self.run_algorithm(problem, config, config.algorithm,
                                           config.budget).final_placement
        theoretical = problem.f_e(placement.x)
        empirical, stderr = monte_carlo_mse(problem.prior, problem.meas, placement,
                                            n_samples, config.seed, self.workers)
        return {'case': model.name,
                'support': model.external_ids(placement.support),
                'n_samples': n_samples,
                'seed': config.seed,
                'theoretical': theoretical,
                'empirical': empirical,
                'stderr': stderr,
                'z_score': (empirical - theoretical) / stderr if stderr > 0 else 0.0}

    def export_cases(self, output_dir=None, names=None):
        directory = output_dir or self.data_dir
        if not directory:
            raise ConfigError('No data directory to export to')
        return self.cases.export(directory, names)

    def verify_cases(self, directory=None):
        return self.cases.verify(directory or self.data_dir)

