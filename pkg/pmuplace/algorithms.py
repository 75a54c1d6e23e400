# Copyright (c) 2015 - Red Hat Inc.
#
# This program is free software; you can redistribute it and/or modify it
# under the terms of the GNU General Public License as published by the
# Free Software Foundation; either version 2 of the License, or (at your
# option) any later version.  See http://www.gnu.org/copyleft/gpl.html for
# the full text of the license.


"""Placement algorithms

* penalized majorization-minimization for the MSE and for the information
  (``penalized_mmse``, ``penalized_mi``),
* best-improvement swap local search over binary placements
  (``local_search``),
* smallest budget meeting an MSE tolerance (``min_pmu_iterative``),
* the relax-and-round baseline (``box_relax_round``).

Every algorithm returns a :class:`RunReport`.
"""


import collections
import csv
import itertools
import logging
import time
from multiprocessing.dummy import Pool as ThreadPool

import numpy as np
from scipy.linalg import cho_solve, solve

from .cholesky import rank_update
from .convex import (DEFAULT_EXPONENT, PenaltyState, analytic_center,
                     epsilon_select, g_tilde, select_mu, solve_subproblem,
                     surrogate)
from .errors import ContractError, ConvergenceError, FeasibilityError
from .estimation import Placement
from .observability import NONE, ObservabilityConstraint, count_unobserved
from .utils import project_capped_simplex, write_json

log = logging.getLogger(__name__)

PENALIZED_MMSE = 'penalized-mmse'
PENALIZED_MI = 'penalized-mi'
LOCAL_SEARCH = 'local-search'
MIN_PMU_ITERATIVE = 'min-pmu-iterative'
BOX_RELAX = 'box-relax'
ALGORITHMS = (PENALIZED_MMSE, PENALIZED_MI, LOCAL_SEARCH, MIN_PMU_ITERATIVE,
              BOX_RELAX)

CONVERGENCE_TOLERANCE = 1e-6
PENALTY_TOLERANCE = 1e-6
ROUNDING_TOLERANCE = 1e-4
MAX_ESCALATIONS = 3
IMPROVEMENT = 1e-12


IterationRecord = collections.namedtuple(
    'IterationRecord', 'kappa objective g_tilde step time_ms mu')


class RunReport(object):
    """Trace and outcome of one algorithm run

    For penalized runs each record carries the penalty weight mu it was
    computed with. Raising mu adds an 'escalate mu' record that re-evaluates
    the current point under the new weight, so the objective trace is
    strictly decreasing within each mu segment (see :meth:`segments`), not
    across them.
    """

    def __init__(self, algorithm, objective, constraint_kind, budget=None,
                 config=None):
        self.algorithm = algorithm
        self.objective = objective
        self.constraint_kind = constraint_kind
        self.budget = budget
        self.config_snapshot = dict(config or {})
        self.iterations = []
        self.final_placement = None
        self.bus_ids = None
        self.final_metrics = {}
        self.details = {}
        self.status = 'ok'
        self.wall_time = None
        self._start = time.time()

    def record(self, kappa, objective, penalty=0.0, step='', mu=None):
        elapsed = int(round((time.time() - self._start) * 1000))
        self.iterations.append(
            IterationRecord(kappa, float(objective), float(penalty), step, elapsed, mu))
        log.debug('%s %d: objective=%.12g g_tilde=%.3g %s', self.algorithm,
                  kappa, objective, penalty, step)

    def finish(self, placement, problem=None, constraint=None):
        self.final_placement = placement
        self.wall_time = time.time() - self._start
        metrics = {}
        if problem is not None:
            x = placement.x
            metrics['f_e'] = problem.f_e(x)
            metrics['f_mi'] = problem.f_mi(x)
            metrics['mi_bits'] = problem.mutual_information(x)
            metrics['normalized_mi'] = problem.normalized_mi(x)
            if problem.grid is not None:
                self.bus_ids = problem.grid.external_ids(placement.support)
                metrics['unobserved_count'] = count_unobserved(
                    placement, problem.grid.incidence.bus_to_bus)
        if constraint is not None:
            metrics['constraint_satisfied'] = constraint.check(placement).satisfied
        self.final_metrics = metrics
        return self

    @property
    def trace(self):
        return [r.objective for r in self.iterations]

    def segments(self):
        """Objective values grouped by consecutive records with one mu"""
        groups = []
        for mu, records in itertools.groupby(self.iterations, key=lambda r: r.mu):
            groups.append((mu, [r.objective for r in records]))
        return groups

    def to_dict(self):
        placement = None
        if self.final_placement is not None:
            placement = {'x': [int(round(v)) for v in self.final_placement.x],
                         'S': self.final_placement.budget,
                         'support': self.final_placement.support,
                         'buses': self.bus_ids}
        return {'algorithm': self.algorithm,
                'objective': self.objective,
                'constraint': self.constraint_kind,
                'budget': self.budget,
                'status': self.status,
                'iterations': [r._asdict() for r in self.iterations],
                'final_placement': placement,
                'final_metrics': self.final_metrics,
                'details': self.details,
                'wall_time': self.wall_time,
                'config': self.config_snapshot}

    def write_json(self, filename):
        write_json(self.to_dict(), filename)

    def write_trace(self, filename):
        with open(filename, 'w') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(['kappa', 'objective', 'g_tilde', 'time_ms'])
            for r in self.iterations:
                writer.writerow([r.kappa, repr(r.objective), repr(r.g_tilde), r.time_ms])


def resolve_constraint(problem, constraint):
    if isinstance(constraint, ObservabilityConstraint) or constraint is None:
        return constraint
    if constraint == NONE:
        return ObservabilityConstraint(NONE, np.zeros((0, problem.n_buses), dtype=int))
    if problem.grid is None:
        raise ContractError('A network is needed for the %s constraint' % constraint)
    return ObservabilityConstraint.build(constraint, problem.grid.incidence)


def _check_budget(budget, n):
    if not 1 <= budget <= n:
        raise ContractError('Budget %r outside 1..%d' % (budget, n))


def round_placement(x, budget):
    """Round at 0.5, then repair the budget using the entries nearest 0.5

    Returns:
        tuple: The binary vector and the largest change of an entry.
    """
    binary = (x >= 0.5).astype(float)
    excess = int(binary.sum()) - budget
    if excess > 0:
        ones = np.flatnonzero(binary)
        binary[ones[np.argsort(x[ones], kind='stable')[:excess]]] = 0.0
    elif excess < 0:
        zeros = np.flatnonzero(binary == 0)
        binary[zeros[np.argsort(-x[zeros], kind='stable')[:-excess]]] = 1.0
    return binary, float(np.abs(x - binary).max())


def _near_binary(x):
    return float(np.minimum(x, 1.0 - x).max()) <= ROUNDING_TOLERANCE


def penalized(problem, kind, budget, constraint='complete',
              exponent=DEFAULT_EXPONENT, mu='auto', max_iterations=500,
              record_trace=False):
    """Penalized majorization-minimization

    Args:
        problem (EstimationProblem): Objectives of the network.
        kind (str): 'mse' to minimize the MSE, 'mi' to maximize the
            information.
        budget (int): Number of PMUs S.
        constraint: Observability kind or :class:`ObservabilityConstraint`.
        exponent (float): L of the penalty, in (1, 2].
        mu: Penalty weight or 'auto'.
        max_iterations (int): Majorization iteration cap.
        record_trace (bool): Keep Newton traces of every subproblem.

    Returns:
        RunReport
    """
    n = problem.n_buses
    _check_budget(budget, n)
    constraint = resolve_constraint(problem, constraint)
    algorithm = PENALIZED_MMSE if kind == 'mse' else PENALIZED_MI
    report = RunReport(algorithm, kind, constraint.kind, budget,
                       {'exponent': exponent, 'mu': mu,
                        'max_iterations': max_iterations})
    objective = problem.objective(kind)

    if budget == n:
        report.record(0, objective(np.ones(n)), 0.0, 'full placement')
        return report.finish(Placement(np.ones(n)), problem, constraint)

    x = analytic_center(constraint, budget, n)
    epsilon = epsilon_select(problem.prior, problem.meas)
    if mu == 'auto':
        mu = select_mu(problem, kind, x, budget, exponent)
    mu = float(mu)
    report.details.update({'epsilon': epsilon, 'mu': mu, 'escalations': 0})
    penalty = g_tilde(x, budget, exponent)
    value = objective(x) + mu * penalty
    report.record(0, value, penalty, 'analytic center', mu)
    subproblems = []

    for kappa in range(1, max_iterations + 1):
        coeffs = surrogate(kind, x, epsilon, problem)
        state = PenaltyState(x, budget, exponent, mu)
        result = solve_subproblem(coeffs, state, constraint, budget, start=x,
                                  record_trace=record_trace)
        if record_trace:
            subproblems.append({'kappa': kappa, 'kkt_residual': result.kkt_residual,
                                'newton': result.trace})

        new_penalty = g_tilde(result.x, budget, exponent)
        new_value = objective(result.x) + mu * new_penalty
        change = 0.0
        if new_value < value:
            change = value - new_value
            x, value, penalty = result.x, new_value, new_penalty
            step = 'trust region halved' if result.trust_region_active else 'majorize'
            report.record(kappa, value, penalty, step, mu)

        if change > CONVERGENCE_TOLERANCE * max(1.0, abs(value)):
            continue
        if penalty <= PENALTY_TOLERANCE and _near_binary(x):
            break
        if report.details['escalations'] >= MAX_ESCALATIONS:
            raise ConvergenceError(
                'Penalized run stalled at a fractional point',
                {'kappa': kappa, 'mu': mu, 'g_tilde': penalty,
                 'objective': value,
                 'fractional_entries': int(np.count_nonzero(
                     np.minimum(x, 1.0 - x) > ROUNDING_TOLERANCE))})
        mu *= 10.0
        report.details['escalations'] += 1
        value = objective(x) + mu * penalty
        log.warning('Penalized run stalled with g_tilde=%.3g, raising mu to %g',
                    penalty, mu)
        report.record(kappa, value, penalty, 'escalate mu', mu)
    else:
        raise ConvergenceError('Penalized run did not converge in %d iterations'
                               % max_iterations,
                               {'mu': mu, 'g_tilde': penalty, 'objective': value})

    binary, change = round_placement(x, budget)
    if change > ROUNDING_TOLERANCE:
        raise ConvergenceError('Rounding moved an entry by %g' % change,
                               {'g_tilde': penalty})
    placement = Placement(binary, budget)
    if not constraint.check(placement).satisfied:
        raise ConvergenceError('Rounded placement violates the %s constraint'
                               % constraint.kind)
    report.details['mu_final'] = mu
    report.details['rounding_change'] = change
    report.details['g_tilde'] = penalty
    if record_trace:
        report.details['subproblems'] = subproblems
    return report.finish(placement, problem, constraint)


def penalized_mmse(problem, budget, constraint='complete', **kwargs):
    return penalized(problem, 'mse', budget, constraint, **kwargs)


def penalized_mi(problem, budget, constraint='complete', **kwargs):
    return penalized(problem, 'mi', budget, constraint, **kwargs)


class VertexNeighborhood(object):
    """Binary placements reachable by swapping one placed bus"""

    def __init__(self, support, n_buses):
        self.support = sorted(int(k) for k in support)
        self.n_buses = n_buses
        inside = set(self.support)
        self.outside = [k for k in range(n_buses) if k not in inside]

    def __len__(self):
        return len(self.support) * len(self.outside)

    def __iter__(self):
        """Swaps as (added, removed) pairs in increasing index order"""
        for added in self.outside:
            for removed in self.support:
                yield added, removed

    def neighbor(self, added, removed):
        return sorted([k for k in self.support if k != removed] + [added])


class SwapEvaluator(object):
    """Objective of placements one swap away from the current one

    The Cholesky factor of the current information matrix is kept up to date
    with rank-one updates as moves are accepted. Swaps are scored with the
    Woodbury identity: with U the whitened rows of the added and removed
    buses, J' = J + U' C U and only a small capacitance matrix is solved.
    """

    REFACTOR_EVERY = 25

    def __init__(self, problem, kind, support):
        if kind not in ('mse', 'mi'):
            raise ContractError('Unknown objective %r' % kind)
        self.problem = problem
        self.kind = kind
        self.rows = problem.meas.whitened
        self.slices = problem.meas.row_slices
        self.support = sorted(support)
        self.moves = 0
        self.factor = problem.cholesky(self._vector(self.support))
        self._prepare()

    def _vector(self, support):
        x = np.zeros(self.problem.n_buses)
        x[list(support)] = 1.0
        return x

    def _prepare(self):
        n = self.problem.n_buses
        cov = cho_solve((self.factor, True), np.eye(n))
        cov = 0.5 * (cov + cov.T)
        if self.kind == 'mse':
            self.value = float(np.trace(cov))
        else:
            self.value = -2.0 * float(np.sum(np.log(np.diag(self.factor))))
        projected = cov.dot(self.rows.T)
        self.gram = self.rows.dot(projected)
        self.gram2 = projected.T.dot(projected)

    def _indices(self, bus):
        s = self.slices[bus]
        return np.arange(s.start, s.stop)

    def evaluate(self, added, removed=None):
        """Objective after adding a bus and optionally removing another"""
        idx = [self._indices(added)]
        signs = [np.ones(idx[0].size)]
        if removed is not None:
            idx.append(self._indices(removed))
            signs.append(-np.ones(idx[1].size))
        idx = np.concatenate(idx)
        signs = np.concatenate(signs)
        block = np.ix_(idx, idx)
        capacitance = np.diag(signs) + self.gram[block]
        if self.kind == 'mse':
            return self.value - float(np.trace(solve(capacitance, self.gram2[block])))
        _, logdet = np.linalg.slogdet(capacitance)
        return self.value - logdet

    def move(self, added, removed=None):
        rank_update(self.factor, self.rows[self.slices[added]], 1)
        support = set(self.support)
        support.add(added)
        if removed is not None:
            rank_update(self.factor, self.rows[self.slices[removed]], -1)
            support.discard(removed)
        self.support = sorted(support)
        self.moves += 1
        if self.moves % self.REFACTOR_EVERY == 0:
            self.factor = self.problem.cholesky(self._vector(self.support))
        self._prepare()


class _ScratchEvaluator(object):
    """Same interface as SwapEvaluator for an arbitrary objective callable"""

    def __init__(self, function, n_buses, support):
        self.function = function
        self.n_buses = n_buses
        self.support = sorted(support)
        self.value = self._call(self.support)

    def _call(self, support):
        x = np.zeros(self.n_buses)
        x[list(support)] = 1.0
        return float(self.function(x))

    def evaluate(self, added, removed=None):
        support = [k for k in self.support if k != removed] + [added]
        return self._call(support)

    def move(self, added, removed=None):
        support = [k for k in self.support if k != removed] + [added]
        self.support = sorted(support)
        self.value = self._call(self.support)


def _evaluator(problem, objective, n_buses, support):
    if callable(objective):
        return _ScratchEvaluator(objective, n_buses, support)
    return SwapEvaluator(problem, objective, support)


def greedy_seed(problem, budget, objective='mse', n_buses=None):
    """Add buses one at a time by best marginal gain, lowest index on ties"""
    n = n_buses if n_buses is not None else problem.n_buses
    evaluator = _evaluator(problem, objective, n, [])
    for _ in range(budget):
        best = None
        for bus in range(n):
            if bus in evaluator.support:
                continue
            value = evaluator.evaluate(bus)
            if best is None or value < best[0]:
                best = (value, bus)
        evaluator.move(best[1])
    return evaluator.support


def _best_swap(evaluator, neighborhood, workers):
    def scan(added):
        best = None
        for removed in neighborhood.support:
            value = evaluator.evaluate(added, removed)
            if best is None or value < best[0]:
                best = (value, added, removed)
        return best

    if workers > 1:
        pool = ThreadPool(workers)
        try:
            candidates = pool.map(scan, neighborhood.outside)
        finally:
            pool.close()
    else:
        candidates = [scan(added) for added in neighborhood.outside]

    best = None
    for candidate in candidates:
        if candidate is not None and (best is None or candidate[0] < best[0]):
            best = candidate
    return best


def local_search(problem, budget, objective='mse', start=None, workers=1,
                 n_buses=None):
    """Best-improvement swap search over binary placements

    Args:
        problem (EstimationProblem): Objectives of the network. May be None
            when ``objective`` is a callable and ``n_buses`` is given.
        budget (int): Number of PMUs S.
        objective: 'mse', 'mi' or a callable taking a 0/1 vector, minimized.
        start (list, optional): Initial support. Defaults to the greedy seed.
        workers (int): Threads scanning the neighborhood.
        n_buses (int, optional): Network size when ``problem`` is None.

    Returns:
        RunReport: The final placement has no improving neighbor.
    """
    n = n_buses if n_buses is not None else problem.n_buses
    _check_budget(budget, n)
    kind = 'custom' if callable(objective) else objective
    report = RunReport(LOCAL_SEARCH, kind, NONE, budget, {'workers': workers})

    if start is None:
        start = greedy_seed(problem, budget, objective, n)
    start = sorted(int(k) for k in start)
    if len(set(start)) != budget:
        raise ContractError('Initial placement must select %d buses' % budget)
    report.details['start'] = start

    evaluator = _evaluator(problem, objective, n, start)
    report.record(0, evaluator.value, 0.0, 'start')
    evaluations = 0
    kappa = 0
    while budget < n:
        neighborhood = VertexNeighborhood(evaluator.support, n)
        best = _best_swap(evaluator, neighborhood, workers)
        evaluations += len(neighborhood)
        if best[0] >= evaluator.value - IMPROVEMENT * max(1.0, abs(evaluator.value)):
            break
        kappa += 1
        evaluator.move(best[1], best[2])
        report.record(kappa, evaluator.value, 0.0,
                      'add %d remove %d' % (best[1], best[2]))

    report.details['moves'] = kappa
    report.details['neighbor_evaluations'] = evaluations
    placement = Placement.from_support(evaluator.support, n)
    return report.finish(placement, problem if not callable(objective) else None)


def min_pmu_iterative(problem, tolerance, start_budget=None, bisection=False,
                      workers=1):
    """Smallest budget whose local-search MSE meets the tolerance

    The budget moves by one from ``start_budget`` until it reaches S with
    f(S) <= tolerance < f(S - 1). With ``bisection`` the budget range is
    halved instead, which assumes the MSE decreases with S.
    """
    n = problem.n_buses
    full = problem.f_e(np.ones(n))
    if tolerance <= full:
        raise FeasibilityError('Tolerance %g is below the MSE %g of a PMU at '
                               'every bus' % (tolerance, full))
    report = RunReport(MIN_PMU_ITERATIVE, 'mse', NONE, None,
                       {'tolerance': tolerance, 'bisection': bisection})
    results = {}

    def run(budget):
        if budget not in results:
            if budget == n:
                results[budget] = (full, list(range(n)))
            else:
                run_report = local_search(problem, budget, 'mse', workers=workers)
                results[budget] = (run_report.final_metrics['f_e'],
                                   run_report.final_placement.support)
            report.record(len(report.iterations), results[budget][0], 0.0,
                          'S=%d' % budget)
        return results[budget][0]

    if bisection:
        low, high = 0, n
        while high - low > 1:
            middle = (low + high) // 2
            if run(middle) <= tolerance:
                high = middle
            else:
                low = middle
        budget = high
        run(budget)
    else:
        if start_budget is None:
            start_budget = max(1, n // 2)
        budget = min(max(1, int(start_budget)), n)
        visits = collections.Counter()
        while True:
            visits[budget] += 1
            if visits[budget] > 2:
                budget = min(s for s, r in results.items() if r[0] <= tolerance)
                log.warning('Budget search oscillates, keeping S=%d', budget)
                break
            if run(budget) <= tolerance:
                if budget == 1 or (budget - 1 in results and results[budget - 1][0] > tolerance):
                    break
                budget -= 1
            else:
                if budget + 1 in results and results[budget + 1][0] <= tolerance:
                    budget += 1
                    break
                budget += 1

    report.budget = budget
    report.details['evaluated'] = dict((s, r[0]) for s, r in sorted(results.items()))
    placement = Placement.from_support(results[budget][1], n)
    return report.finish(placement, problem)


def box_relax_round(problem, budget, objective='mse', max_iterations=500):
    """Relax to the polytope, run projected gradient, keep the S largest"""
    n = problem.n_buses
    _check_budget(budget, n)
    report = RunReport(BOX_RELAX, objective, NONE, budget,
                       {'max_iterations': max_iterations})
    function = problem.objective(objective)
    gradient = problem.gradient(objective)

    x = np.full(n, float(budget) / n)
    value = function(x)
    report.record(0, value, 0.0, 'uniform')
    step = None
    for kappa in range(1, max_iterations + 1):
        grad = gradient(x)
        if step is None:
            step = 1.0 / max(float(np.abs(grad).max()), 1e-12)
        else:
            step *= 2.0
        while True:
            candidate = project_capped_simplex(x - step * grad, budget)
            delta = candidate - x
            bound = value + float(np.dot(grad, delta)) + np.dot(delta, delta) / (2.0 * step)
            candidate_value = function(candidate)
            if candidate_value <= bound or step < 1e-20:
                break
            step *= 0.5
        if np.abs(delta).max() < 1e-9:
            break
        x, value = candidate, candidate_value
        report.record(kappa, value, 0.0, 'projected gradient')

    order = np.argsort(-x, kind='stable')
    binary = np.zeros(n)
    binary[order[:budget]] = 1.0
    report.details['relaxed_value'] = value
    report.details['relaxed_point'] = x.tolist()
    return report.finish(Placement(binary, budget), problem)
