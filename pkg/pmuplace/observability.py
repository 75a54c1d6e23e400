# Copyright (c) 2015 - Red Hat Inc.
#
# This program is free software; you can redistribute it and/or modify it
# under the terms of the GNU General Public License as published by the
# Free Software Foundation; either version 2 of the License, or (at your
# option) any later version.  See http://www.gnu.org/copyleft/gpl.html for
# the full text of the license.


"""Observability constraints and the minimum-PMU problem

A placement is completely observable when every bus carries a PMU or is
adjacent to one, i.e. A x >= 1 with A the bus-to-bus incidence matrix. It has
depth-of-one unobservability when no branch joins two unobserved buses, i.e.
BA x >= 1 with B the branch-to-bus incidence matrix.

The smallest observable placement is a set cover problem, solved exactly by
branch and bound. Bounds come from the LP relaxation, solved through its dual
packing problem whose slack basis is always feasible.
"""


import collections
import logging
import math
import threading
import time
from multiprocessing.dummy import Pool as ThreadPool

import numpy as np

from .errors import ContractError, FeasibilityError
from .estimation import as_vector, binary_support

log = logging.getLogger(__name__)

COMPLETE = 'complete'
DEPTH_ONE = 'depth_one'
NONE = 'none'
KINDS = (COMPLETE, DEPTH_ONE, NONE)

FEASIBILITY_TOLERANCE = 1e-9
LP_TOLERANCE = 1e-9
DEGENERATE_STREAK = 50

CheckResult = collections.namedtuple('CheckResult', 'satisfied violated_rows')


class ObservabilityConstraint(object):
    """Covering constraint matrix x >= rhs of an observability kind"""

    def __init__(self, kind, matrix):
        if kind not in KINDS:
            raise ContractError('Unknown constraint kind %r' % kind)
        self.kind = kind
        self.matrix = np.asarray(matrix, dtype=int)
        self.rhs = np.ones(self.matrix.shape[0])

    def __repr__(self):
        return '<ObservabilityConstraint %s: %d rows>' % (self.kind, self.n_rows)

    @classmethod
    def build(cls, kind, incidence):
        """Constraint of the given kind for an :class:`IncidencePair`"""
        n = incidence.bus_to_bus.shape[0]
        if kind == COMPLETE:
            matrix = incidence.bus_to_bus
        elif kind == DEPTH_ONE:
            matrix = incidence.branch_to_bus.dot(incidence.bus_to_bus)
        elif kind == NONE:
            matrix = np.zeros((0, n), dtype=int)
        else:
            raise ContractError('Unknown constraint kind %r' % kind)
        return cls(kind, matrix)

    @property
    def n_rows(self):
        return self.matrix.shape[0]

    @property
    def n_buses(self):
        return self.matrix.shape[1]

    @property
    def cover(self):
        """Boolean support of the matrix, equivalent for binary placements"""
        return self.matrix > 0

    def check(self, placement):
        x = as_vector(placement, self.n_buses)
        lhs = self.matrix.dot(x)
        violated = np.flatnonzero(lhs < self.rhs - FEASIBILITY_TOLERANCE)
        return CheckResult(not violated.size, [int(k) for k in violated])


def check(placement, constraint):
    return constraint.check(placement)


def count_unobserved(placement, bus_to_bus):
    """Number of buses with neither a PMU nor a neighbor carrying one"""
    bus_to_bus = np.asarray(bus_to_bus)
    support = binary_support(placement, bus_to_bus.shape[1])
    if not support:
        return bus_to_bus.shape[0]
    observed = bus_to_bus[:, support].sum(axis=1) > 0
    return int(np.count_nonzero(~observed))


def _uncoverable(cover):
    empty = np.flatnonzero(~cover.any(axis=1))
    if empty.size:
        raise FeasibilityError('Constraint row %d cannot be covered by any bus'
                               % empty[0])


def greedy_cover(matrix):
    """Greedy set cover: repeatedly take the column covering most open rows

    Columns made redundant by later picks are removed afterwards.

    Returns:
        list: Sorted column indices.
    """
    cover = np.asarray(matrix) > 0
    _uncoverable(cover)
    open_rows = np.ones(cover.shape[0], dtype=bool)
    chosen = []
    while open_rows.any():
        gains = cover[open_rows].sum(axis=0)
        j = int(np.argmax(gains))
        chosen.append(j)
        open_rows &= ~cover[:, j]

    for j in reversed(list(chosen)):
        rest = [c for c in chosen if c != j]
        if rest and cover[:, rest].any(axis=1).all():
            chosen = rest
    return sorted(chosen)


def packing_lp(cover, max_pivots=5000):
    """Solve the LP relaxation of a set cover through its dual

    The dual is max 1'y subject to cover' y <= 1, y >= 0. A dense tableau
    simplex starts from the slack basis; Dantzig pricing switches to Bland's
    rule after a streak of degenerate pivots. Any dual feasible y bounds the
    cover from below, so the value is usable even when the pivot cap is hit.

    Args:
        cover (numpy.ndarray): Boolean rows x columns matrix.
        max_pivots (int): Pivot cap.

    Returns:
        tuple: ``(value, x, optimal)`` where ``x`` is the primal LP solution
        over the columns when ``optimal`` is true, and None otherwise.
    """
    n_rows, n_cols = cover.shape
    tableau = np.zeros((n_cols + 1, n_rows + n_cols + 1))
    tableau[:n_cols, :n_rows] = cover.T
    tableau[:n_cols, n_rows:n_rows + n_cols] = np.eye(n_cols)
    tableau[:n_cols, -1] = 1.0
    tableau[n_cols, :n_rows] = -1.0
    basis = np.arange(n_rows, n_rows + n_cols)

    bland = False
    streak = 0
    for _ in range(max_pivots):
        costs = tableau[n_cols, :-1]
        if bland:
            candidates = np.flatnonzero(costs < -LP_TOLERANCE)
            if not candidates.size:
                break
            enter = candidates[0]
        else:
            enter = int(np.argmin(costs))
            if costs[enter] >= -LP_TOLERANCE:
                break

        column = tableau[:n_cols, enter]
        positive = column > LP_TOLERANCE
        ratios = np.full(n_cols, np.inf)
        ratios[positive] = np.maximum(tableau[:n_cols, -1][positive], 0.0) / column[positive]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + LP_TOLERANCE)
        leave = ties[np.argmin(basis[ties])]

        tableau[leave] /= tableau[leave, enter]
        pivot_column = tableau[:, enter].copy()
        pivot_column[leave] = 0.0
        tableau -= np.outer(pivot_column, tableau[leave])
        basis[leave] = enter

        streak = streak + 1 if best <= LP_TOLERANCE else 0
        if streak > DEGENERATE_STREAK:
            bland = True
    else:
        return float(tableau[n_cols, -1]), None, False

    x = np.clip(tableau[n_cols, n_rows:n_rows + n_cols], 0.0, None)
    return float(tableau[n_cols, -1]), x, True


class BlpResult(object):
    """Outcome of the minimum-PMU search

    Attributes:
        witness (list): Internal indices of one smallest placement found.
        lower_bound (int): Proven lower bound on the minimum.
        optimal (bool): Whether the search completed, closing the gap.
    """

    def __init__(self, kind, witness, n_buses, lower_bound, nodes_explored,
                 optimal, wall_time):
        self.kind = kind
        self.witness = sorted(witness)
        self.n_buses = n_buses
        self.lower_bound = lower_bound
        self.nodes_explored = nodes_explored
        self.optimal = optimal
        self.wall_time = wall_time

    @property
    def s_min(self):
        return len(self.witness)

    @property
    def gap(self):
        return self.s_min - self.lower_bound

    @property
    def x(self):
        x = np.zeros(self.n_buses)
        x[self.witness] = 1.0
        return x

    def to_dict(self, network=None, bus_ids=None):
        witness = self.witness
        if bus_ids is not None:
            witness = [bus_ids[k] for k in witness]
        return {'network': network,
                'kind': self.kind,
                'S_min': self.s_min,
                'witness': witness,
                'lower_bound': self.lower_bound,
                'gap': self.gap,
                'optimal': self.optimal,
                'nodes_explored': self.nodes_explored,
                'wall_time': self.wall_time}


class CoverSearch(object):
    """Depth-first branch and bound over a boolean cover matrix"""

    def __init__(self, cover, node_limit=200000, max_pivots=5000):
        self.cover = cover
        self.node_limit = node_limit
        self.max_pivots = max_pivots
        self.best = None
        self.best_size = cover.shape[1] + 1
        self.nodes = 0
        self.exhausted = False
        self._lock = threading.Lock()

    def offer(self, columns):
        columns = sorted(int(c) for c in columns)
        with self._lock:
            if len(columns) < self.best_size or \
                    (len(columns) == self.best_size and columns < self.best):
                self.best = columns
                self.best_size = len(columns)

    def reduce(self, rows, cols, chosen):
        """Apply essential column, dominated row and dominated column rules

        Returns:
            The reduced ``(rows, cols, chosen)``, or None when some row can
            no longer be covered.
        """
        chosen = list(chosen)
        while rows.size:
            sub = self.cover[np.ix_(rows, cols)]
            counts = sub.sum(axis=1)
            if np.any(counts == 0):
                return None

            single = np.flatnonzero(counts == 1)
            if single.size:
                essential = np.unique(np.argmax(sub[single], axis=1))
                chosen.extend(int(c) for c in cols[essential])
                covered = sub[:, essential].any(axis=1)
                rows = rows[~covered]
                cols = np.delete(cols, essential)
                continue

            dense = sub.astype(float)
            subset = dense.dot(dense.T) == counts[:, None]
            np.fill_diagonal(subset, False)
            equal = subset & subset.T
            drop = (subset & ~equal).any(axis=0) | np.triu(equal, 1).any(axis=0)
            if drop.any():
                rows = rows[~drop]
                continue

            sizes = sub.sum(axis=0)
            within = dense.T.dot(dense) == sizes[:, None]
            np.fill_diagonal(within, False)
            equal = within & within.T
            drop = (within & ~equal).any(axis=1) | np.tril(equal, -1).any(axis=1)
            if drop.any():
                cols = cols[~drop]
                continue
            break
        return rows, cols, chosen

    def bound(self, rows, cols):
        sub = self.cover[np.ix_(rows, cols)]
        combinatorial = int(math.ceil(len(rows) / float(sub.sum(axis=0).max())))
        value, x, optimal = packing_lp(sub, self.max_pivots)
        lower = max(combinatorial, int(math.ceil(value - 1e-7)))
        return lower, x

    def expand(self, node):
        """Process one node and return its children, best branch first"""
        rows, cols, chosen = node
        with self._lock:
            self.nodes += 1
            if self.nodes > self.node_limit:
                self.exhausted = True
        if self.exhausted:
            return []

        reduced = self.reduce(rows, cols, chosen)
        if reduced is None:
            return []
        rows, cols, chosen = reduced
        if not rows.size:
            self.offer(chosen)
            return []
        if len(chosen) + 1 >= self.best_size:
            return []

        lower, x = self.bound(rows, cols)
        if len(chosen) + lower >= self.best_size:
            return []
        sub = self.cover[np.ix_(rows, cols)]
        self.offer(chosen + [int(cols[c]) for c in greedy_cover(sub)])
        if len(chosen) + lower >= self.best_size:
            return []

        coverage = sub.sum(axis=0)
        if x is None:
            pick = int(np.argmax(coverage))
        else:
            fraction = np.minimum(x, 1.0 - x)
            if fraction.max() < LP_TOLERANCE:
                self.offer(chosen + [int(c) for c in cols[x > 0.5]])
                return []
            # most fractional, then highest coverage, then lowest index
            order = np.lexsort((np.arange(cols.size), -coverage, -np.round(fraction, 9)))
            pick = int(order[0])

        column = int(cols[pick])
        remaining = np.delete(cols, pick)
        take = (rows[~sub[:, pick]], remaining, chosen + [column])
        skip = (rows, remaining, chosen)
        return [take, skip]

    def dfs(self, node):
        stack = [node]
        while stack:
            children = self.expand(stack.pop())
            stack.extend(reversed(children))


def min_pmu_blp(constraint, node_limit=200000, deterministic=True, workers=4,
                max_pivots=5000):
    """Smallest placement satisfying an observability constraint

    Args:
        constraint (ObservabilityConstraint): The covering constraint.
        node_limit (int): Branch and bound node budget. When it is exhausted
            the best placement found is returned with ``optimal`` false.
        deterministic (bool): Sequential depth-first search. When false the
            first levels of the tree are split over a thread pool; the
            minimum is the same but the witness may differ between runs.
        workers (int): Pool size when not deterministic.
        max_pivots (int): Simplex pivot cap per bound.

    Returns:
        BlpResult
    """
    start = time.time()
    cover = constraint.cover
    n_rows, n_cols = cover.shape
    if n_rows == 0:
        return BlpResult(constraint.kind, [], n_cols, 0, 0, True, time.time() - start)
    _uncoverable(cover)

    search = CoverSearch(cover, node_limit=node_limit, max_pivots=max_pivots)
    root = (np.arange(n_rows), np.arange(n_cols), [])
    reduced = search.reduce(*root)
    root_bound = search.bound(reduced[0], reduced[1])[0] + len(reduced[2]) \
        if reduced[0].size else len(reduced[2])
    search.offer(greedy_cover(cover))

    if deterministic or workers <= 1:
        search.dfs(root)
    else:
        frontier = [root]
        while frontier and len(frontier) < 2 * workers:
            children = []
            for node in frontier:
                children.extend(search.expand(node))
            frontier = children
        pool = ThreadPool(workers)
        try:
            pool.map(search.dfs, frontier)
        finally:
            pool.close()

    if search.exhausted:
        log.warning('Node budget of %d exhausted for %s observability, '
                    'returning bound only', node_limit, constraint.kind)
        lower = min(root_bound, search.best_size)
    else:
        lower = search.best_size

    return BlpResult(constraint.kind, search.best, n_cols, lower,
                     min(search.nodes, node_limit), not search.exhausted,
                     time.time() - start)
