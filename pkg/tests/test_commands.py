# -*- coding: utf-8 -*-

import csv
import json
import os
import unittest

from mock import patch

from pmuplace import Commands, ExperimentConfig, algorithms
from pmuplace.errors import ConfigError

import utils

case_file = os.path.join(utils.fixtures_dir, 'case4.m')


class ExperimentConfigTestCase(unittest.TestCase):

    def test_valid(self):
        ExperimentConfig(case_file, budget=2).validate(4)
        ExperimentConfig(case_file, budget_range=range(1, 5)).validate(4)
        ExperimentConfig(case_file, algorithms='min-pmu-iterative',
                         tolerance=0.1).validate(4)

    def test_exactly_one_budget_setting(self):
        self.assertRaises(ConfigError, ExperimentConfig(case_file).validate)
        self.assertRaises(ConfigError,
                          ExperimentConfig(case_file, budget=2, tolerance=0.1).validate)

    def test_out_of_range(self):
        settings = [{'budget': 5}, {'budget': 0}, {'budget_range': range(3, 6)},
                    {'budget_range': range(3, 3)}, {'budget': 2, 'exponent': 1.0},
                    {'budget': 2, 'exponent': 2.5}, {'budget': 2, 'mu': 0.0},
                    {'budget': 2, 'voltage_noise': 0.0}, {'tolerance': -1.0},
                    {'budget': 2, 'algorithms': ['annealing']},
                    {'budget': 2, 'objective': 'entropy'},
                    {'budget': 2, 'constraint': 'partial'}]
        for kwargs in settings:
            config = ExperimentConfig(case_file, **kwargs)
            self.assertRaises(ConfigError, config.validate, 4)

    def test_snapshot_is_json(self):
        config = ExperimentConfig(case_file, algorithms=('local-search', 'box-relax'),
                                  budget_range=range(1, 3))
        data = json.loads(json.dumps(config.snapshot()))
        self.assertEqual([1, 2], data['budget_range'])
        self.assertEqual(['local-search', 'box-relax'], data['algorithms'])
        self.assertEqual('local-search', config.algorithm)


class CommandsTestCase(utils.TempDirTestCase):

    def setUp(self):
        super(CommandsTestCase, self).setUp()
        self.cmd = Commands(output_dir=self.workdir)

    def config(self, **kwargs):
        kwargs.setdefault('output_dir', self.workdir)
        return ExperimentConfig(case_file, **kwargs)

    def test_solve_min_pmu_iterative(self):
        model = self.cmd.load_grid(case_file)
        problem = self.cmd.build_problem(model, self.config(budget=1))
        tolerance = 0.5 * (problem.f_e(utils.indicator([0, 1, 2, 3], 4)) +
                           problem.f_e(utils.indicator([], 4)))
        report, report_path, trace_path = self.cmd.solve(
            self.config(algorithms='min-pmu-iterative', tolerance=tolerance))
        self.assertLessEqual(report.final_metrics['f_e'], tolerance)
        self.assertEqual(os.path.join(self.workdir, 'case4-min-pmu-iterative-S%d.json'
                                      % report.budget), report_path)
        self.assertTrue(os.path.exists(trace_path))

    def test_solve_needs_a_tolerance(self):
        self.assertRaises(ConfigError, self.cmd.solve,
                          self.config(algorithms='min-pmu-iterative', budget=2))

    def test_sweep_keeps_failed_points(self):
        config = self.config(algorithms=('penalized-mmse', 'local-search'),
                             budget_range=range(1, 3), constraint='complete')
        rows, path = self.cmd.sweep(config)
        status = dict(((row['algorithm'], row['S']), row['status']) for row in rows)
        self.assertEqual('FeasibilityError', status[('penalized-mmse', 1)])
        self.assertEqual('ok', status[('local-search', 1)])
        self.assertEqual('ok', status[('local-search', 2)])
        with open(path) as f:
            self.assertEqual(4, len(list(csv.DictReader(f))))
        self.assertFilesExist(['case4-local-search-S1.json', 'case4-local-search-S2.json'])

    def test_threaded_sweep(self):
        self.cmd.workers = 3
        rows, _ = self.cmd.sweep(self.config(algorithms='box-relax',
                                             budget_range=range(1, 4),
                                             constraint='none'))
        self.assertEqual([1, 2, 3], [row['S'] for row in rows])
        self.assertEqual(['ok'] * 3, [row['status'] for row in rows])
        self.assertFilesExist(['case4-box-relax-S%d.json' % s for s in (1, 2, 3)])

    def test_sweep_needs_a_range(self):
        self.assertRaises(ConfigError, self.cmd.sweep, self.config(budget=2))

    def test_min_pmu_uses_external_bus_numbers(self):
        result = self.cmd.min_pmu(case_file, 'complete')
        self.assertEqual(2, result['S_min'])
        self.assertTrue(set(result['witness']) <= set([1, 2, 3, 7]))
        self.assertTrue(result['optimal'])
        self.assertEqual('case4', result['network'])

    def test_table1_writes_csv(self):
        rows = self.cmd.table1(names=('ieee30',), output_dir=self.workdir)
        self.assertEqual([{'case': 'ieee30', 'n_buses': 30, 'n_branches': 41,
                           'complete': 10, 'depth_one': 4, 'certified': True}], rows)
        with open(os.path.join(self.workdir, 'table1.csv')) as f:
            self.assertEqual('case,n_buses,n_branches,complete,depth_one,certified\n'
                             'ieee30,30,41,10,4,True\n', f.read())

    def test_montecarlo_with_given_support(self):
        result = self.cmd.montecarlo(self.config(seed=3), n_samples=2000, support=[2, 7])
        self.assertEqual([2, 7], result['support'])
        self.assertEqual(2000, result['n_samples'])
        self.assertLess(abs(result['z_score']), 5.0)

    def test_montecarlo_unknown_bus(self):
        self.assertRaises(ConfigError, self.cmd.montecarlo, self.config(), 1000, [5])

    def test_montecarlo_runs_the_algorithm(self):
        with patch('pmuplace.algorithms.local_search',
                   wraps=algorithms.local_search) as search:
            result = self.cmd.montecarlo(self.config(algorithms='local-search', budget=2),
                                         n_samples=1000)
        self.assertTrue(search.called)
        self.assertEqual(2, len(result['support']))

    def test_export_needs_a_directory(self):
        self.assertRaises(ConfigError, self.cmd.export_cases)

    def test_export_and_verify(self):
        self.cmd.data_dir = self.workdir
        self.cmd.export_cases(names=['ieee39'])
        self.assertEqual([('ieee39.m', 'ok')], self.cmd.verify_cases())


if __name__ == '__main__':
    unittest.main()
