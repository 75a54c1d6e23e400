import unittest

import numpy as np

from pmuplace import observability
from pmuplace.casestore import CaseStore
from pmuplace.errors import ContractError, FeasibilityError
from pmuplace.estimation import Placement
from pmuplace.observability import (COMPLETE, DEPTH_ONE, NONE,
                                    ObservabilityConstraint, count_unobserved,
                                    greedy_cover, min_pmu_blp, packing_lp)

import utils


def cycle_grid(n):
    return utils.grid_from_edges(n, [(k, (k + 1) % n) for k in range(n)])


class ConstraintTestCase(unittest.TestCase):

    def setUp(self):
        self.pair = utils.path_grid(4).incidence

    def test_complete_uses_bus_to_bus(self):
        constraint = ObservabilityConstraint.build(COMPLETE, self.pair)
        np.testing.assert_array_equal(self.pair.bus_to_bus, constraint.matrix)
        self.assertEqual(4, constraint.n_rows)

    def test_depth_one_rows_follow_branches(self):
        constraint = ObservabilityConstraint.build(DEPTH_ONE, self.pair)
        self.assertEqual((3, 4), constraint.matrix.shape)
        np.testing.assert_array_equal([2, 2, 1, 0], constraint.matrix[0])

    def test_none_is_always_satisfied(self):
        constraint = ObservabilityConstraint.build(NONE, self.pair)
        self.assertEqual(0, constraint.n_rows)
        self.assertTrue(constraint.check(np.zeros(4)).satisfied)

    def test_check_reports_violated_rows(self):
        constraint = ObservabilityConstraint.build(COMPLETE, self.pair)
        result = observability.check(Placement.from_support([1], 4), constraint)
        self.assertFalse(result.satisfied)
        self.assertEqual([3], result.violated_rows)
        self.assertTrue(constraint.check(utils.indicator([1, 2], 4)).satisfied)

    def test_depth_one_allows_isolated_unobserved_bus(self):
        constraint = ObservabilityConstraint.build(DEPTH_ONE, self.pair)
        self.assertTrue(constraint.check(utils.indicator([1], 4)).satisfied)
        self.assertFalse(constraint.check(utils.indicator([0], 4)).satisfied)

    def test_fractional_placement(self):
        constraint = ObservabilityConstraint.build(COMPLETE, self.pair)
        self.assertTrue(constraint.check([0.5, 0.5, 0.5, 0.5]).satisfied)
        self.assertFalse(constraint.check([0.9, 0.05, 0.05, 1.0]).satisfied)

    def test_unknown_kind(self):
        self.assertRaises(ContractError, ObservabilityConstraint.build, 'partial', self.pair)

    def test_count_unobserved(self):
        self.assertEqual(1, count_unobserved(utils.indicator([1], 4), self.pair.bus_to_bus))
        self.assertEqual(4, count_unobserved(np.zeros(4), self.pair.bus_to_bus))
        self.assertEqual(0, count_unobserved(utils.indicator([0, 3], 4), self.pair.bus_to_bus))


class GreedyCoverTestCase(unittest.TestCase):

    def test_cover_is_feasible_and_irredundant(self):
        for seed in range(5):
            matrix = utils.random_connected_grid(12, seed).incidence.bus_to_bus
            columns = greedy_cover(matrix)
            self.assertTrue(np.all(matrix[:, columns].sum(axis=1) >= 1))
            for j in columns:
                rest = [c for c in columns if c != j]
                self.assertFalse(np.all(matrix[:, rest].sum(axis=1) >= 1))

    def test_star(self):
        self.assertEqual([0], greedy_cover(utils.star_grid(6).incidence.bus_to_bus))

    def test_uncoverable_row(self):
        matrix = np.array([[1, 0], [0, 0]])
        self.assertRaises(FeasibilityError, greedy_cover, matrix)


class PackingLpTestCase(unittest.TestCase):

    def test_cycle_of_five(self):
        cover = cycle_grid(5).incidence.bus_to_bus > 0
        value, x, optimal = packing_lp(cover)
        self.assertTrue(optimal)
        self.assertAlmostEqual(5.0 / 3.0, value)
        self.assertAlmostEqual(value, x.sum())
        self.assertTrue(np.all(cover.dot(x) >= 1 - 1e-9))

    def test_pivot_cap(self):
        cover = cycle_grid(7).incidence.bus_to_bus > 0
        value, x, optimal = packing_lp(cover, max_pivots=1)
        self.assertFalse(optimal)
        self.assertIsNone(x)
        self.assertLessEqual(value, 7.0 / 3.0 + 1e-9)


class MinPmuTestCase(unittest.TestCase):

    def _check(self, model, kind, **kwargs):
        constraint = ObservabilityConstraint.build(kind, model.incidence)
        result = min_pmu_blp(constraint, **kwargs)
        self.assertTrue(result.optimal)
        self.assertEqual(0, result.gap)
        self.assertTrue(constraint.check(result.x).satisfied)
        self.assertEqual(utils.brute_force_min_cover(constraint.matrix), result.s_min)
        return result

    def test_random_graphs_match_brute_force(self):
        for seed in range(10):
            model = utils.random_connected_grid(10, seed)
            self._check(model, COMPLETE)
            self._check(model, DEPTH_ONE)

    def test_path(self):
        result = self._check(utils.path_grid(6), COMPLETE)
        self.assertEqual(2, result.s_min)
        self.assertEqual([1, 4], result.witness)

    def test_parallel_search_finds_the_same_minimum(self):
        for seed in range(3):
            model = utils.random_connected_grid(12, seed)
            constraint = ObservabilityConstraint.build(COMPLETE, model.incidence)
            sequential = min_pmu_blp(constraint)
            parallel = min_pmu_blp(constraint, deterministic=False, workers=3)
            self.assertEqual(sequential.s_min, parallel.s_min)
            self.assertTrue(constraint.check(parallel.x).satisfied)

    def test_none_needs_no_pmu(self):
        model = utils.path_grid(4)
        result = min_pmu_blp(ObservabilityConstraint.build(NONE, model.incidence))
        self.assertEqual(0, result.s_min)

    def test_uncoverable_row(self):
        constraint = ObservabilityConstraint(COMPLETE, np.array([[1, 1], [0, 0]]))
        self.assertRaises(FeasibilityError, min_pmu_blp, constraint)

    def test_node_budget(self):
        model = utils.random_connected_grid(14, 5)
        constraint = ObservabilityConstraint.build(COMPLETE, model.incidence)
        with self.assertLogs('pmuplace.observability', 'WARNING'):
            result = min_pmu_blp(constraint, node_limit=0)
        self.assertFalse(result.optimal)
        self.assertLessEqual(result.lower_bound, result.s_min)
        self.assertTrue(constraint.check(result.x).satisfied)

    def test_to_dict_uses_external_numbers(self):
        model = utils.path_grid(6)
        constraint = ObservabilityConstraint.build(COMPLETE, model.incidence)
        record = min_pmu_blp(constraint).to_dict(network='path', bus_ids=model.bus_ids)
        self.assertEqual([2, 5], record['witness'])
        self.assertEqual('path', record['network'])
        self.assertEqual(2, record['S_min'])


class MinimumCountsOfIeeeCasesTestCase(unittest.TestCase):
    """Known minimum PMU counts for complete and depth-one observability"""

    expected = {'ieee30': (10, 4), 'ieee39': (13, 7), 'ieee57': (17, 11),
                'ieee118': (32, 18)}

    def test_counts(self):
        store = CaseStore(data_dir=None)
        for name, counts in sorted(self.expected.items()):
            model = store.load(name)
            found = []
            for kind in (COMPLETE, DEPTH_ONE):
                constraint = ObservabilityConstraint.build(kind, model.incidence)
                result = min_pmu_blp(constraint)
                self.assertTrue(result.optimal, '%s %s' % (name, kind))
                self.assertTrue(constraint.check(result.x).satisfied)
                found.append(result.s_min)
            self.assertEqual(counts, tuple(found), name)


if __name__ == '__main__':
    unittest.main()
