import json
import os
import unittest

import numpy as np

from pmuplace import grid
from pmuplace.casestore import CaseStore, bundled_case
from pmuplace.errors import (DataError, ParseError, TopologyError,
                             ValidationError)
from pmuplace.grid import Branch, GridModel

import utils


def read_fixture(name):
    with open(os.path.join(utils.fixtures_dir, name)) as f:
        return f.read()


def complex_admittance_imag(ppc):
    """Imaginary part of the bus admittance matrix, assembled with complex numbers"""
    bus = np.asarray(ppc['bus'], dtype=float)
    branch = np.asarray(ppc['branch'], dtype=float)
    index = dict((int(b), k) for k, b in enumerate(bus[:, 0]))
    n = len(index)
    admittance = np.zeros((n, n), dtype=complex)
    for row in branch:
        if row[10] <= 0:
            continue
        f, t = index[int(row[0])], index[int(row[1])]
        series = 1.0 / complex(row[2], row[3])
        charging = 0.5j * row[4]
        admittance[f, f] += series + charging
        admittance[t, t] += series + charging
        admittance[f, t] -= series
        admittance[t, f] -= series
    admittance[np.diag_indices(n)] += 1j * bus[:, 5] / ppc['baseMVA']
    return admittance.imag


class ParseCaseTestCase(unittest.TestCase):

    def setUp(self):
        self.model = grid.parse_case(read_fixture('case4.m'), name='case4')

    def test_buses_keep_external_numbers(self):
        self.assertEqual([1, 2, 3, 7], self.model.bus_ids)
        self.assertEqual(4, self.model.n_buses)
        self.assertEqual(100.0, self.model.base_mva)

    def test_out_of_service_branch_is_dropped(self):
        self.assertEqual(3, len(self.model.branches))
        self.assertEqual([(0, 1), (1, 2), (2, 3)],
                         [(b.from_bus, b.to_bus) for b in self.model.branches])

    def test_net_injection_uses_in_service_generators(self):
        np.testing.assert_allclose([80.0, -40.0, -60.0, 30.0], self.model.net_injection)

    def test_susceptance_entries(self):
        b = self.model.susceptance
        series = 0.1 / (0.01 ** 2 + 0.1 ** 2)
        self.assertAlmostEqual(series, b[0, 1])
        self.assertAlmostEqual(0.01 - series, b[0, 0])
        self.assertAlmostEqual(0.01 - series - 5.0 + 0.02, b[1, 1])
        self.assertEqual(0.0, b[0, 3])
        np.testing.assert_array_equal(b, b.T)
        self.assertEqual(0.0, self.model.regularization)

    def test_comments_are_ignored(self):
        text = read_fixture('case4.m').replace('0.9;  % heavy load', '0.9;  % 1 2 3 ]')
        model = grid.parse_case(text)
        self.assertEqual(4, model.n_buses)

    def test_invalid_number_reports_line(self):
        lines = read_fixture('case4.m').splitlines()
        lineno = [k for k, line in enumerate(lines, 1) if line.startswith('\t2\t3\t0')][0]
        lines[lineno - 1] = lines[lineno - 1].replace('0.2', '0.2x')
        with self.assertRaises(ParseError) as cm:
            grid.parse_case('\n'.join(lines))
        self.assertEqual(lineno, cm.exception.lineno)
        self.assertTrue(str(cm.exception).startswith('line %d:' % lineno))

    def test_inconsistent_width_reports_line(self):
        text = 'mpc.bus = [\n1 3 0;\n2 1 0 0;\n];\nmpc.branch = [1 2 0 0.1];\n'
        with self.assertRaises(ParseError) as cm:
            grid.parse_case(text)
        self.assertEqual(3, cm.exception.lineno)

    def test_unterminated_table(self):
        text = 'mpc.bus = [\n1 3 0;\n2 1 0;\n'
        with self.assertRaises(ParseError) as cm:
            grid.parse_case(text)
        self.assertEqual(1, cm.exception.lineno)

    def test_missing_branch_table(self):
        self.assertRaises(ParseError, grid.parse_case, 'mpc.bus = [1 3 0; 2 1 0];\n')

    def test_unknown_branch_endpoint(self):
        text = 'mpc.bus = [1 3 0; 2 1 0];\nmpc.branch = [1 5 0 0.1];\n'
        self.assertRaises(ValidationError, grid.parse_case, text)

    def test_duplicate_bus(self):
        text = 'mpc.bus = [1 3 0; 1 1 0];\nmpc.branch = [1 1 0 0.1];\n'
        self.assertRaises(ValidationError, grid.parse_case, text)


class GridModelTestCase(unittest.TestCase):

    def test_self_loop(self):
        self.assertRaises(ValidationError, GridModel, [1, 2],
                          [Branch(0, 1, 0.1, 0, 0), Branch(1, 1, 0.1, 0, 0)])

    def test_endpoint_out_of_range(self):
        self.assertRaises(ValidationError, GridModel, [1, 2], [Branch(0, 2, 0.1, 0, 0)])

    def test_disconnected(self):
        self.assertRaises(TopologyError, utils.grid_from_edges, 4, [(0, 1), (2, 3)])

    def test_zero_impedance(self):
        model = GridModel([1, 2], [Branch(0, 1, 0.0, 0.0, 0.0)])
        self.assertRaises(DataError, lambda: model.susceptance)

    def test_regularization_of_singular_matrix(self):
        model = utils.path_grid(5, shunt=0.0)
        with self.assertLogs('pmuplace.grid', 'WARNING'):
            b = model.susceptance
        self.assertGreater(model.regularization, 0.0)
        self.assertAlmostEqual(1e-6 * 10.0 * 2, model.regularization)
        unregularized = grid.build_susceptance(model, regularize=False)
        np.testing.assert_allclose(b - unregularized,
                                   model.regularization * np.eye(5))

    def test_adjacency_is_sorted(self):
        model = utils.star_grid(4)
        self.assertEqual([(1, 2, 3), (0,), (0,), (0,)], model.adjacency)

    def test_incidence_of_path(self):
        pair = utils.path_grid(4).incidence
        expected = np.array([[1, 1, 0, 0],
                             [1, 1, 1, 0],
                             [0, 1, 1, 1],
                             [0, 0, 1, 1]])
        np.testing.assert_array_equal(expected, pair.bus_to_bus)
        self.assertEqual((3, 4), pair.branch_to_bus.shape)
        np.testing.assert_array_equal([2, 2, 2], pair.branch_to_bus.sum(axis=1))

    def test_parallel_branches_share_one_adjacency_entry(self):
        model = GridModel([1, 2], [Branch(0, 1, 0.1, 0, 0), Branch(0, 1, 0.2, 0, 0)],
                          bus_shunts=[5.0, 5.0])
        self.assertEqual(2, model.incidence.n_branches)
        self.assertEqual(4, model.incidence.bus_to_bus.sum())
        self.assertAlmostEqual(15.0, model.susceptance[0, 1])

    def test_snapshot_round_trip_is_exact(self):
        model = utils.random_connected_grid(8, seed=3)
        data = json.loads(json.dumps(model.to_snapshot()))
        copy = GridModel.from_snapshot(data)
        self.assertEqual(model.bus_ids, copy.bus_ids)
        self.assertTrue(np.array_equal(model.susceptance, copy.susceptance))
        self.assertEqual(model.regularization, copy.regularization)
        np.testing.assert_array_equal(model.net_injection, copy.net_injection)

    def test_invalid_snapshot(self):
        self.assertRaises(ValidationError, GridModel.from_snapshot, {'buses': []})

    def test_relabeling_permutes_the_susceptance(self):
        model = utils.random_connected_grid(9, seed=5)
        perm = np.random.default_rng(2).permutation(9)
        bus_ids, shunts, injections = [None] * 9, np.zeros(9), np.zeros(9)
        for old, new in enumerate(perm):
            bus_ids[new] = model.bus_ids[old]
            shunts[new] = model.bus_shunts[old]
            injections[new] = model.net_injection[old]
        branches = [b._replace(from_bus=int(perm[b.from_bus]), to_bus=int(perm[b.to_bus]))
                    for b in model.branches]
        relabeled = GridModel(bus_ids, branches, model.base_mva, shunts, injections)
        np.testing.assert_allclose(model.susceptance,
                                   relabeled.susceptance[np.ix_(perm, perm)], rtol=1e-12)
        self.assertEqual(model.bus_ids, relabeled.external_ids(list(perm)))


class SnapshotFileTestCase(utils.TempDirTestCase):

    def test_save_and_load(self):
        model = utils.path_grid(3)
        filename = os.path.join(self.workdir, 'path.json')
        grid.save_snapshot(model, filename)
        loaded = grid.load_snapshot(filename)
        self.assertTrue(np.array_equal(model.susceptance, loaded.susceptance))
        self.assertEqual('toy', loaded.name)


class IeeeCaseTestCase(unittest.TestCase):

    def test_branch_counts(self):
        store = CaseStore(data_dir=None)
        counts = dict((name, store.load(name).incidence.n_branches)
                      for name in ('ieee30', 'ieee39', 'ieee57', 'ieee118'))
        self.assertEqual({'ieee30': 41, 'ieee39': 46, 'ieee57': 80, 'ieee118': 186},
                         counts)

    def test_susceptance_matches_complex_admittance(self):
        ppc = bundled_case('ieee30')
        model = GridModel.from_ppc(ppc, name='ieee30')
        self.assertEqual(0.0, model.regularization)
        np.testing.assert_allclose(complex_admittance_imag(ppc), model.susceptance,
                                   rtol=1e-12, atol=1e-12)

    def test_bus_to_bus_row_sums(self):
        # No parallel branches in this case, so every branch adds two entries
        model = CaseStore(data_dir=None).load('ieee30')
        pair = model.incidence
        self.assertEqual(model.n_buses + 2 * pair.n_branches, pair.bus_to_bus.sum())

    def test_format_case_round_trip(self):
        ppc = bundled_case('ieee39')
        model = grid.parse_case(grid.format_case(ppc, name='ieee39'))
        np.testing.assert_allclose(GridModel.from_ppc(ppc).susceptance,
                                   model.susceptance, rtol=1e-12)
        self.assertEqual(39, model.n_buses)


if __name__ == '__main__':
    unittest.main()
