# -*- coding: utf-8 -*-

import itertools
import os
import shutil
import tempfile
import unittest

import numpy as np

from pmuplace.estimation import EstimationProblem
from pmuplace.grid import Branch, GridModel

fixtures_dir = os.path.join(os.path.dirname(__file__), 'fixtures')

# Shunt of every toy bus, in MVAr. It keeps the susceptance matrix invertible
# without regularization.
toy_shunt = 5.0


def grid_from_edges(n, edges, reactance=0.1, shunt=toy_shunt, injections=None,
                    name='toy'):
    """A toy network with buses numbered 1..n

    Args:
        n (int): Number of buses.
        edges (list): Pairs of 0-based bus indices.
        reactance: A value for every branch or one value per branch.
        shunt (float): Shunt susceptance of every bus in MVAr.
        injections (list, optional): Net injection of every bus in MW.
    """
    reactances = np.broadcast_to(np.asarray(reactance, dtype=float), (len(edges),))
    branches = [Branch(f, t, float(x), 0.0, 0.0)
                for (f, t), x in zip(edges, reactances)]
    if injections is None:
        injections = np.linspace(-40.0, 50.0, n)
    return GridModel(list(range(1, n + 1)), branches, base_mva=100.0,
                     bus_shunts=np.full(n, shunt), net_injection=injections,
                     name=name)


def path_grid(n, **kwargs):
    return grid_from_edges(n, [(k, k + 1) for k in range(n - 1)], **kwargs)


def star_grid(n, **kwargs):
    return grid_from_edges(n, [(0, k) for k in range(1, n)], **kwargs)


def random_connected_grid(n, seed, extra=None, **kwargs):
    """A random spanning tree plus ``extra`` random chords"""
    rng = np.random.default_rng(seed)
    edges = [(int(rng.integers(0, k)), k) for k in range(1, n)]
    existing = set(edges)
    extra = n // 2 if extra is None else extra
    while extra > 0:
        f, t = sorted(int(v) for v in rng.choice(n, size=2, replace=False))
        if (f, t) in existing:
            continue
        existing.add((f, t))
        edges.append((f, t))
        extra -= 1
    kwargs.setdefault('reactance', rng.uniform(0.05, 0.3, size=len(edges)))
    kwargs.setdefault('injections', rng.uniform(-60.0, 80.0, size=n))
    return grid_from_edges(n, edges, name='random%d' % seed, **kwargs)


def toy_problem(model, **kwargs):
    return EstimationProblem.from_grid(model, **kwargs)


def indicator(support, n):
    x = np.zeros(n)
    x[list(support)] = 1.0
    return x


def enumerate_best(function, n, budget):
    """Exhaustive minimum of a function over placements of ``budget`` buses

    Returns:
        tuple: The minimum and the first support reaching it.
    """
    best = None
    for support in itertools.combinations(range(n), budget):
        value = function(indicator(support, n))
        if best is None or value < best[0]:
            best = (value, list(support))
    return best


def brute_force_min_cover(matrix):
    """Smallest number of columns covering every row of a 0/1 matrix"""
    matrix = np.asarray(matrix)
    n = matrix.shape[1]
    if matrix.shape[0] == 0:
        return 0
    for size in range(1, n + 1):
        for support in itertools.combinations(range(n), size):
            if np.all(matrix[:, list(support)].sum(axis=1) >= 1):
                return size


def brute_force_min_budget(problem, tolerance):
    """Smallest budget whose best placement has an MSE within the tolerance"""
    n = problem.n_buses
    for budget in range(1, n + 1):
        if enumerate_best(problem.f_e, n, budget)[0] <= tolerance:
            return budget


class TempDirTestCase(unittest.TestCase):
    """Test case with a fresh working directory"""

    def setUp(self):
        self.workdir = tempfile.mkdtemp(prefix='pmuplace-tests.')

    def tearDown(self):
        shutil.rmtree(self.workdir)

    def assertFilesExist(self, filenames, search_dir=None):
        """Assert existence of files within the working directory"""
        assert isinstance(filenames, (tuple, list))
        for filename in filenames:
            path = os.path.join(search_dir or self.workdir, filename)
            self.assertTrue(os.path.exists(path),
                            'Failure because {0} does not exist'.format(filename))
