# Copyright (c) 2015 - Red Hat Inc.
#
# This program is free software; you can redistribute it and/or modify it
# under the terms of the GNU General Public License as published by the
# Free Software Foundation; either version 2 of the License, or (at your
# option) any later version.  See http://www.gnu.org/copyleft/gpl.html for
# the full text of the license.


"""Network model

Parse MATPOWER plain-text cases, assemble the DC susceptance matrix and the
bus-to-bus and branch-to-bus incidence matrices used by the observability
constraints.

Buses are indexed internally with dense 0-based indices in the order they
appear in the bus table. External bus numbers are kept for reporting only.
"""


import collections
import json
import logging
import re

import numpy as np
from scipy.linalg import svdvals
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DataError, ParseError, TopologyError, ValidationError
from .utils import cached_property

log = logging.getLogger(__name__)

# Column positions in the MATPOWER tables
BUS_I, PD, GS, BS = 0, 2, 4, 5
GEN_BUS, PG, GEN_STATUS = 0, 1, 7
F_BUS, T_BUS, BR_R, BR_X, BR_B, BR_STATUS = 0, 1, 2, 3, 4, 10

# Minimum number of columns for a row to be usable
MIN_COLUMNS = {'bus': 1, 'gen': 2, 'branch': 4}

TABLE_START = re.compile(r'^\s*mpc\.(?P<name>\w+)\s*=\s*\[(?P<rest>.*)$')
BASE_MVA = re.compile(r'^\s*mpc\.baseMVA\s*=\s*(?P<value>[^;]+?)\s*;')

SINGULARITY_RATIO = 1e-8
REGULARIZATION_SCALE = 1e-6


class Branch(collections.namedtuple(
        'Branch', 'from_bus to_bus reactance resistance shunt_susceptance')):
    """An in-service branch between two internal bus indices"""
    __slots__ = ()


class IncidencePair(object):
    """Bus-to-bus and branch-to-bus incidence matrices of a network"""

    def __init__(self, bus_to_bus, branch_to_bus):
        self.bus_to_bus = bus_to_bus
        self.branch_to_bus = branch_to_bus

    @property
    def n_branches(self):
        return self.branch_to_bus.shape[0]


class GridModel(object):
    """A connected power network

    Instances are immutable after construction: matrices are computed lazily
    once and shared read-only afterwards.
    """

    def __init__(self, bus_ids, branches, base_mva=100.0, bus_shunts=None,
                 net_injection=None, name=None):
        """Constructor

        Args:
            bus_ids (list): External bus numbers, in internal index order.
            branches (list): In-service branches as :class:`Branch` tuples
                using internal indices.
            base_mva (float): The system MVA base.
            bus_shunts (list, optional): Shunt susceptance of each bus in MVAr
                at 1 p.u. voltage. Defaults to zeros.
            net_injection (list, optional): Generation minus load of each
                bus in MW. Defaults to zeros.
            name (str, optional): A label used in reports.
        """
        self.name = name
        self.bus_ids = list(bus_ids)
        self.n_buses = len(self.bus_ids)
        self.base_mva = float(base_mva)
        self.branches = [Branch(*b) for b in branches]

        self.bus_index = {}
        for idx, bus_id in enumerate(self.bus_ids):
            if bus_id in self.bus_index:
                raise ValidationError('Duplicate bus id %s' % bus_id)
            self.bus_index[bus_id] = idx

        if bus_shunts is None:
            bus_shunts = np.zeros(self.n_buses)
        if net_injection is None:
            net_injection = np.zeros(self.n_buses)
        self.bus_shunts = np.asarray(bus_shunts, dtype=float)
        self.net_injection = np.asarray(net_injection, dtype=float)
        if self.bus_shunts.shape != (self.n_buses,) or \
                self.net_injection.shape != (self.n_buses,):
            raise ValidationError('Bus data must have one entry per bus')

        self._validate()

    def __repr__(self):
        return '<GridModel %s: %d buses, %d branches>' % (
            self.name or 'unnamed', self.n_buses, len(self.branches))

    def _validate(self):
        if self.n_buses == 0:
            raise ValidationError('Network has no buses')
        for branch in self.branches:
            for end in (branch.from_bus, branch.to_bus):
                if not 0 <= end < self.n_buses:
                    raise ValidationError(
                        'Branch %s refers to a bus outside 0..%d'
                        % (tuple(branch[:2]), self.n_buses - 1))
            if branch.from_bus == branch.to_bus:
                raise ValidationError(
                    'Branch at bus %s is a self loop'
                    % self.bus_ids[branch.from_bus])

        if self.n_buses > 1:
            rows = [b.from_bus for b in self.branches]
            cols = [b.to_bus for b in self.branches]
            graph = coo_matrix((np.ones(len(rows)), (rows, cols)),
                               shape=(self.n_buses, self.n_buses))
            count, labels = connected_components(graph, directed=False)
            if count > 1:
                isolated = [self.bus_ids[k] for k in np.flatnonzero(labels != labels[0])]
                raise TopologyError(
                    'Network is split in %d islands; buses not connected to '
                    'bus %s: %s' % (count, self.bus_ids[0], isolated[:10]))

    @cached_property
    def adjacency(self):
        """Sorted neighbor tuples of every bus"""
        neighbors = [set() for _ in range(self.n_buses)]
        for branch in self.branches:
            neighbors[branch.from_bus].add(branch.to_bus)
            neighbors[branch.to_bus].add(branch.from_bus)
        return [tuple(sorted(n)) for n in neighbors]

    @cached_property
    def susceptance_info(self):
        matrix = assemble_susceptance(self)
        shift = singularity_shift(matrix)
        if shift:
            log.warning('Susceptance matrix of %s is numerically singular, '
                        'adding %g on the diagonal', self.name or 'network', shift)
            matrix = matrix + shift * np.eye(self.n_buses)
        return matrix, shift

    @property
    def susceptance(self):
        return self.susceptance_info[0]

    @property
    def regularization(self):
        """Diagonal shift added to make B invertible, 0 when none was needed"""
        return self.susceptance_info[1]

    @cached_property
    def incidence(self):
        return incidence_matrices(self)

    def external_ids(self, indices):
        return [self.bus_ids[k] for k in indices]

    @classmethod
    def from_ppc(cls, ppc, name=None):
        """Build a model from a PYPOWER/MATPOWER case dict

        Args:
            ppc (dict): Must contain ``bus`` and ``branch`` arrays and may
                contain ``gen`` and ``baseMVA``.
            name (str, optional): A label used in reports.
        """
        tables = {'bus': np.atleast_2d(np.asarray(ppc['bus'], dtype=float)),
                  'branch': np.atleast_2d(np.asarray(ppc['branch'], dtype=float))}
        if ppc.get('gen') is not None and len(ppc['gen']):
            tables['gen'] = np.atleast_2d(np.asarray(ppc['gen'], dtype=float))
        return _model_from_tables(tables, ppc.get('baseMVA', 100.0), name)

    def to_snapshot(self):
        """Return the JSON-serializable snapshot of this model"""
        return {
            'name': self.name,
            'base_mva': self.base_mva,
            'buses': [{'id': bus_id,
                       'shunt_susceptance': float(self.bus_shunts[k]),
                       'net_injection': float(self.net_injection[k])}
                      for k, bus_id in enumerate(self.bus_ids)],
            'branches': [{'from': self.bus_ids[b.from_bus],
                          'to': self.bus_ids[b.to_bus],
                          'reactance': b.reactance,
                          'resistance': b.resistance,
                          'shunt_susceptance': b.shunt_susceptance}
                         for b in self.branches],
            'susceptance': self.susceptance.ravel().tolist(),
            'regularization': self.regularization,
        }

    @classmethod
    def from_snapshot(cls, data):
        """Rebuild a model from :meth:`to_snapshot` output

        The stored matrix is reused as is, so a round trip is bit-for-bit.
        """
        try:
            bus_ids = [b['id'] for b in data['buses']]
            index = dict((bus_id, k) for k, bus_id in enumerate(bus_ids))
            branches = [Branch(index[b['from']], index[b['to']], b['reactance'],
                               b['resistance'], b['shunt_susceptance'])
                        for b in data['branches']]
            model = cls(bus_ids, branches,
                        base_mva=data['base_mva'],
                        bus_shunts=[b['shunt_susceptance'] for b in data['buses']],
                        net_injection=[b['net_injection'] for b in data['buses']],
                        name=data.get('name'))
            n = model.n_buses
            matrix = np.array(data['susceptance'], dtype=float).reshape(n, n)
            shift = float(data.get('regularization', 0.0))
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError('Invalid network snapshot: %s' % e)
        model._susceptance_info = (matrix, shift)
        return model


def save_snapshot(model, filename):
    with open(filename, 'w') as f:
        json.dump(model.to_snapshot(), f, indent=1)
        f.write('\n')


def load_snapshot(filename):
    with open(filename) as f:
        return GridModel.from_snapshot(json.load(f))


def _parse_row(segment, lineno):
    tokens = segment.replace(',', ' ').split()
    try:
        return [float(t) for t in tokens]
    except ValueError:
        bad = [t for t in tokens if not _is_number(t)][0]
        raise ParseError('Invalid number %r in table' % bad, lineno)


def _is_number(token):
    try:
        float(token)
    except ValueError:
        return False
    return True


def read_tables(text):
    """Read the numeric tables of a MATPOWER case

    Returns:
        tuple: A dict mapping table name to a list of ``(lineno, row)``
        pairs, and the base MVA (None when absent).
    """
    tables = {}
    base_mva = None
    current = None
    start_lineno = None

    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split('%', 1)[0]

        if current is None:
            m = BASE_MVA.match(line)
            if m is not None:
                try:
                    base_mva = float(m.group('value'))
                except ValueError:
                    raise ParseError('Invalid baseMVA %r' % m.group('value'), lineno)
                continue

            m = TABLE_START.match(line)
            if m is None:
                continue
            current = m.group('name')
            start_lineno = lineno
            tables[current] = []
            line = m.group('rest')

        body, closed, _ = line.partition(']')
        if current in MIN_COLUMNS:
            for segment in body.split(';'):
                row = _parse_row(segment, lineno)
                if row:
                    tables[current].append((lineno, row))
        if closed:
            current = None

    if current is not None:
        raise ParseError('Table mpc.%s is not terminated' % current, start_lineno)

    for name, rows in tables.items():
        if name not in MIN_COLUMNS or not rows:
            continue
        width = len(rows[0][1])
        for lineno, row in rows:
            if len(row) != width:
                raise ParseError('Row of mpc.%s has %d columns, expected %d'
                                 % (name, len(row), width), lineno)
            if len(row) < MIN_COLUMNS[name]:
                raise ParseError('Row of mpc.%s needs at least %d columns'
                                 % (name, MIN_COLUMNS[name]), lineno)
    return tables, base_mva


def parse_case(text, name=None):
    """Parse a MATPOWER plain-text case

    Args:
        text (str): The case file contents.
        name (str, optional): A label used in reports.

    Returns:
        GridModel: The network with in-service branches only.
    """
    tables, base_mva = read_tables(text)
    for required in ('bus', 'branch'):
        if not tables.get(required):
            raise ParseError('Case has no mpc.%s table' % required)

    arrays = dict((key, np.array([row for _, row in rows]))
                  for key, rows in tables.items()
                  if key in MIN_COLUMNS and rows)
    return _model_from_tables(arrays, base_mva or 100.0, name)


def _column(table, idx, default):
    if table.shape[1] > idx:
        return table[:, idx]
    return np.full(table.shape[0], default, dtype=float)


def _model_from_tables(tables, base_mva, name):
    bus = tables['bus']
    bus_ids = []
    for value in bus[:, BUS_I]:
        if value != int(value):
            raise ValidationError('Bus id %s is not an integer' % value)
        bus_ids.append(int(value))
    seen = set()
    for bus_id in bus_ids:
        if bus_id in seen:
            raise ValidationError('Duplicate bus id %d' % bus_id)
        seen.add(bus_id)
    index = dict((bus_id, k) for k, bus_id in enumerate(bus_ids))

    injection = -_column(bus, PD, 0.0)
    gen = tables.get('gen')
    if gen is not None:
        in_service = _column(gen, GEN_STATUS, 1.0) > 0
        for row in gen[in_service]:
            bus_id = int(row[GEN_BUS])
            if bus_id not in index:
                raise ValidationError('Generator at unknown bus %d' % bus_id)
            injection[index[bus_id]] += row[PG]

    branch = tables['branch']
    branches = []
    status = _column(branch, BR_STATUS, 1.0)
    charging = _column(branch, BR_B, 0.0)
    for k, row in enumerate(branch):
        if status[k] <= 0:
            continue
        ends = []
        for value in (row[F_BUS], row[T_BUS]):
            if int(value) not in index:
                raise ValidationError('Branch refers to unknown bus %d' % int(value))
            ends.append(index[int(value)])
        branches.append(Branch(ends[0], ends[1], float(row[BR_X]),
                               float(row[BR_R]), float(charging[k])))

    return GridModel(bus_ids, branches, base_mva=base_mva,
                     bus_shunts=_column(bus, BS, 0.0),
                     net_injection=injection, name=name)


def assemble_susceptance(model):
    """Imaginary part of the bus admittance matrix, without regularization

    Series admittance 1/(r + jx), half the line charging at each end and the
    bus shunts are included. Tap ratios and phase shifts are ignored.
    """
    n = model.n_buses
    matrix = np.zeros((n, n))
    if model.branches:
        data = np.array([b[:] for b in model.branches], dtype=float)
        f = data[:, 0].astype(int)
        t = data[:, 1].astype(int)
        x, r, b = data[:, 2], data[:, 3], data[:, 4]
        z2 = r ** 2 + x ** 2
        if np.any(z2 == 0):
            k = int(np.flatnonzero(z2 == 0)[0])
            raise DataError('Branch %d-%d has zero series impedance' % (
                model.bus_ids[f[k]], model.bus_ids[t[k]]))
        series = x / z2
        np.add.at(matrix, (f, t), series)
        np.add.at(matrix, (t, f), series)
        np.add.at(matrix, (f, f), b / 2.0 - series)
        np.add.at(matrix, (t, t), b / 2.0 - series)
    matrix[np.diag_indices(n)] += model.bus_shunts / model.base_mva
    return matrix


def singularity_shift(matrix):
    """Diagonal shift needed to make the matrix safely invertible, or 0"""
    sv = svdvals(matrix)
    if sv[-1] < SINGULARITY_RATIO * sv[0]:
        return REGULARIZATION_SCALE * float(np.abs(matrix).max())
    return 0.0


def build_susceptance(model, regularize=True):
    """Return the susceptance matrix B of the model

    Args:
        model (GridModel): The network.
        regularize (bool): Whether to apply the diagonal shift when B is
            numerically singular. The shift actually applied is available as
            ``model.regularization``.

    Returns:
        numpy.ndarray: Symmetric N x N matrix.
    """
    if regularize:
        return model.susceptance.copy()
    return assemble_susceptance(model)


def incidence_matrices(model):
    """Build the bus-to-bus and branch-to-bus incidence matrices

    Parallel branches give one row each in the branch-to-bus matrix but a
    single adjacency entry in the bus-to-bus matrix.
    """
    n = model.n_buses
    bus_to_bus = np.eye(n, dtype=int)
    branch_to_bus = np.zeros((len(model.branches), n), dtype=int)
    for row, branch in enumerate(model.branches):
        bus_to_bus[branch.from_bus, branch.to_bus] = 1
        bus_to_bus[branch.to_bus, branch.from_bus] = 1
        branch_to_bus[row, branch.from_bus] = 1
        branch_to_bus[row, branch.to_bus] = 1
    return IncidencePair(bus_to_bus, branch_to_bus)


def _format_value(value):
    value = float(value)
    if value.is_integer():
        return '%d' % value
    return repr(value)


def format_case(ppc, name='case'):
    """Write a PYPOWER case dict as MATPOWER text

    Only the bus, gen and branch tables and the base MVA are written.
    """
    lines = ['function mpc = %s' % name,
             "mpc.version = '2';",
             '',
             'mpc.baseMVA = %s;' % _format_value(ppc.get('baseMVA', 100.0))]
    for table in ('bus', 'gen', 'branch'):
        rows = ppc.get(table)
        if rows is None:
            continue
        lines.append('')
        lines.append('mpc.%s = [' % table)
        for row in np.atleast_2d(rows):
            lines.append('\t' + '\t'.join(_format_value(v) for v in row) + ';')
        lines.append('];')
    return '\n'.join(lines) + '\n'
