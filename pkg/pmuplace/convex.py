# Copyright (c) 2015 - Red Hat Inc.
#
# This program is free software; you can redistribute it and/or modify it
# under the terms of the GNU General Public License as published by the
# Free Software Foundation; either version 2 of the License, or (at your
# option) any later version.  See http://www.gnu.org/copyleft/gpl.html for
# the full text of the license.


"""Penalty, surrogate bounds and the inner convex solver

Binary placements with budget S are the points of the polytope
{0 <= x <= 1, sum(x) = S} where g(x) = sum(x_k ** L) reaches S, so the
penalty 1/g(x) - 1/S is nonnegative on the polytope and vanishes exactly on
binary points. The penalized objective is minimized by majorization:

* g is convex, so its tangent g_lin at the current point is an affine
  minorant and mu / g_lin majorizes mu / g;
* after shifting x by epsilon, the MSE is bounded above and the log-det
  information is bounded below by separable sums of c_k / (x_k + epsilon).

Each majorized subproblem is convex and is solved by a log-barrier interior
point method with equality constrained Newton steps.
"""


import collections
import logging
import warnings

import numpy as np
from scipy.linalg import (LinAlgError, LinAlgWarning, cho_factor, cho_solve,
                          cholesky, eigh, solve)

from .errors import ContractError, FeasibilityError, NumericalError
from .estimation import as_vector
from .observability import LP_TOLERANCE, packing_lp

log = logging.getLogger(__name__)

MSE_UPPER = 'mse-upper'
MI_LOWER = 'mi-lower'

DEFAULT_EXPONENT = 1.5
TRUST_REGION_SCALE = 1e-6
MU_PRESETS = (0.1, 1.0, 10.0)


def g_value(x, exponent=DEFAULT_EXPONENT):
    return float(np.sum(np.clip(x, 0.0, None) ** exponent))


def g_tilde(x, budget, exponent=DEFAULT_EXPONENT):
    """Penalty 1/g(x) - 1/S, zero exactly at binary points of the polytope"""
    return 1.0 / g_value(x, exponent) - 1.0 / budget


def g_gradient(x, exponent=DEFAULT_EXPONENT):
    return exponent * np.clip(x, 0.0, None) ** (exponent - 1.0)


class AffineMinorant(collections.namedtuple('AffineMinorant', 'constant slopes')):
    """x -> constant + slopes . x"""
    __slots__ = ()

    def __call__(self, x):
        return self.constant + float(np.dot(self.slopes, x))


def g_linearize(point, exponent=DEFAULT_EXPONENT):
    """Tangent of g at the point, a global minorant of g on the box"""
    point = np.clip(np.asarray(point, dtype=float), 0.0, None)
    slopes = g_gradient(point, exponent)
    constant = -(exponent - 1.0) * float(np.sum(point ** exponent))
    return AffineMinorant(constant, slopes)


class PenaltyState(object):
    """Penalty term mu * (1/g - 1/S) evaluated and linearized at a point"""

    def __init__(self, point, budget, exponent=DEFAULT_EXPONENT, mu=1.0):
        if not 1.0 < exponent <= 2.0:
            raise ContractError('Penalty exponent must lie in (1, 2]')
        if mu < 0:
            raise ContractError('Penalty weight must be nonnegative')
        self.point = np.asarray(point, dtype=float)
        self.budget = budget
        self.exponent = exponent
        self.mu = mu
        self.g_value = g_value(self.point, exponent)
        self.g_tilde = 1.0 / self.g_value - 1.0 / budget
        self.g_lin = g_linearize(self.point, exponent)

    @property
    def g_lin_coeffs(self):
        return self.g_lin.constant, self.g_lin.slopes

    @property
    def trust_threshold(self):
        return TRUST_REGION_SCALE * self.budget


class SurrogateCoeffs(object):
    """Separable bound constant +/- sum(per_bus / (x + epsilon))

    For ``MSE_UPPER`` the sum is added and the bound is an upper bound of the
    MSE; for ``MI_LOWER`` it is subtracted and the bound is a lower bound of
    the log-det information. Both touch the objective at the expansion point.
    """

    def __init__(self, kind, constant, per_bus, epsilon, expansion_point):
        self.kind = kind
        self.constant = constant
        self.per_bus = per_bus
        self.epsilon = epsilon
        self.expansion_point = expansion_point

    def value(self, x):
        total = float(np.sum(self.per_bus / (np.asarray(x, dtype=float) + self.epsilon)))
        if self.kind == MSE_UPPER:
            return self.constant + total
        return self.constant - total


def epsilon_select(prior, meas):
    """Largest safe shift epsilon, halved

    epsilon must keep B' inv(Sigma_P) B - epsilon * sum(G_k) positive
    definite. Its supremum is the inverse of the largest generalized
    eigenvalue of (sum(G_k), B' inv(Sigma_P) B); half of it is returned,
    halved further until the Cholesky factorization succeeds.
    """
    terms = meas.precision_sum
    if not np.any(terms):
        return 1.0
    try:
        largest = eigh(terms, prior.information, eigvals_only=True)[-1]
    except LinAlgError:
        raise NumericalError('Prior information matrix is not positive definite')
    if largest <= 0:
        return 1.0

    epsilon = 0.5 / largest
    for _ in range(60):
        try:
            cholesky(prior.information - epsilon * terms, lower=True)
            return float(epsilon)
        except LinAlgError:
            log.debug('Shift %g fails the Cholesky test, halving it', epsilon)
            epsilon /= 2.0
    raise NumericalError('No positive shift keeps the base matrix positive definite')


def _inverse(matrix):
    try:
        factor = cho_factor(matrix, lower=True)
    except LinAlgError:
        raise NumericalError('Matrix is not positive definite')
    inverse = cho_solve(factor, np.eye(matrix.shape[0]))
    return 0.5 * (inverse + inverse.T), factor


def trace_majorant(base, terms, point):
    """Separable upper bound of y -> Trace(inv(base + sum y_k terms_k))

    The function is concave in 1/y, so its tangent there gives
    constant + sum(coeffs / y), exact at y = point.

    Args:
        base (numpy.ndarray): Positive semidefinite n x n matrix.
        terms (numpy.ndarray): Stack of positive semidefinite n x n matrices.
        point (numpy.ndarray): Positive expansion point y.

    Returns:
        tuple: ``(constant, coeffs)``
    """
    point = np.asarray(point, dtype=float)
    cov, _ = _inverse(base + np.tensordot(point, terms, axes=1))
    squared = cov.dot(cov)
    constant = float(np.sum(squared * base))
    coeffs = point ** 2 * np.einsum('ij,kij->k', squared, terms)
    return constant, coeffs


def logdet_minorant(base, terms, point):
    """Separable lower bound of y -> log det(base + sum y_k terms_k)

    The function is convex in 1/y, so its tangent there gives
    constant - sum(coeffs / y), exact at y = point.
    """
    point = np.asarray(point, dtype=float)
    information = base + np.tensordot(point, terms, axes=1)
    cov, factor = _inverse(information)
    value = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    traces = np.einsum('ij,kij->k', cov, terms)
    constant = value + float(np.dot(point, traces))
    return constant, point ** 2 * traces


def _shifted_base(prior, meas, epsilon):
    return prior.information - epsilon * meas.precision_sum


def mse_surrogate(point, epsilon, prior, meas):
    """Upper bound of the MSE touching it at the point"""
    point = as_vector(point, prior.n_buses)
    constant, per_bus = trace_majorant(_shifted_base(prior, meas, epsilon),
                                       meas.precision_terms, point + epsilon)
    if np.any(per_bus <= 0):
        raise NumericalError('Surrogate coefficients must be positive')
    return SurrogateCoeffs(MSE_UPPER, constant, per_bus, epsilon, point.copy())


def mi_surrogate(point, epsilon, prior, meas):
    """Lower bound of the log-det information touching it at the point"""
    point = as_vector(point, prior.n_buses)
    constant, per_bus = logdet_minorant(_shifted_base(prior, meas, epsilon),
                                        meas.precision_terms, point + epsilon)
    if np.any(per_bus <= 0):
        raise NumericalError('Surrogate coefficients must be positive')
    return SurrogateCoeffs(MI_LOWER, constant, per_bus, epsilon, point.copy())


def surrogate(kind, point, epsilon, problem):
    """Surrogate of an objective kind ('mse' or 'mi') for an EstimationProblem"""
    if kind == 'mse':
        return mse_surrogate(point, epsilon, problem.prior, problem.meas)
    elif kind == 'mi':
        return mi_surrogate(point, epsilon, problem.prior, problem.meas)
    raise ContractError('Unknown objective %r' % kind)


class LinearInequalities(object):
    """The strict inequalities matrix . z > rhs

    The first ``2 * box`` rows are the bounds 0 < z < 1 of the first ``box``
    variables, lower bounds first.
    """

    def __init__(self, matrix, rhs, box=0):
        self.matrix = matrix
        self.rhs = rhs
        self.box = box

    def __len__(self):
        return self.rhs.size

    def slack(self, z):
        return self.matrix.dot(z) - self.rhs


def _box(n, extra=0):
    """Rows for 0 < x < 1 on the first n of n + extra variables"""
    eye = np.eye(n, n + extra)
    return np.vstack([eye, -eye]), np.concatenate([np.zeros(n), -np.ones(n)])


class BarrierSolver(object):
    """Minimize objective(z) s.t. eq_matrix z = eq_rhs and strict inequalities

    The objective returns ``(value, gradient, hessian)``. Starting from a
    strictly feasible point satisfying the equalities, each centering step
    runs damped Newton on t * objective - sum(log(slack)) and t grows
    geometrically until the duality gap m/t is below the target.

    Newton directions come from the slack-scaled augmented system

        [ H      C'   E' ] [dz]   [-grad]
        [ C     -I    0  ] [w ] = [  0  ]
        [ E      0    0  ] [nu]   [  0  ]

    where H holds the objective and the diagonal box barrier, and C holds the
    other inequality rows divided by their slacks. Eliminating w gives the
    barrier Hessian H + C'C.
    """

    ALPHA = 0.25
    BETA = 0.5
    GROWTH = 10.0
    NEWTON_TOLERANCE = 1e-10
    STALLED_DECREMENT = 1e-6
    MAX_NEWTON = 100
    MAX_OUTER = 60

    def __init__(self, objective, inequalities, eq_matrix, record_trace=False):
        self.objective = objective
        self.inequalities = inequalities
        self.eq_matrix = eq_matrix
        self.record_trace = record_trace
        self.trace = []
        self.newton_steps = 0
        self.t = None
        self.converged = False
        self.breakdown = False

    def _barrier(self, z, t):
        slack = self.inequalities.slack(z)
        if np.any(slack <= 0):
            return np.inf
        value = self.objective(z, False)[0] if self.objective else 0.0
        return t * value - float(np.sum(np.log(slack)))

    def _newton_step(self, z, t):
        slack = self.inequalities.slack(z)
        matrix = self.inequalities.matrix
        box = self.inequalities.box
        n = z.size
        gradient = -matrix.T.dot(1.0 / slack)

        hessian = np.zeros((n, n))
        lower, upper = slack[:box], slack[box:2 * box]
        hessian[np.diag_indices(box)] = 1.0 / lower ** 2 + 1.0 / upper ** 2
        if self.objective:
            _, grad, hess = self.objective(z, True)
            gradient = gradient + t * grad
            hessian = hessian + t * hess

        scaled = matrix[2 * box:] / slack[2 * box:, None]
        rows = scaled.shape[0]
        eq = self.eq_matrix
        size = n + rows + eq.shape[0]
        system = np.zeros((size, size))
        system[:n, :n] = hessian
        system[n:n + rows, :n] = scaled
        system[:n, n:n + rows] = scaled.T
        system[n:n + rows, n:n + rows] = -np.eye(rows)
        system[n + rows:, :n] = eq
        system[:n, n + rows:] = eq.T
        rhs = np.zeros(size)
        rhs[:n] = -gradient

        try:
            with warnings.catch_warnings():
                warnings.simplefilter('ignore', LinAlgWarning)
                solution = solve(system, rhs, assume_a='sym')
        except (LinAlgError, ValueError):
            raise NumericalError('Newton system of the barrier is singular')
        direction = solution[:n]
        if not np.all(np.isfinite(direction)):
            raise NumericalError('Newton direction of the barrier is not finite')
        decrement = -float(np.dot(gradient, direction))
        return direction, decrement, gradient

    def center(self, z, t):
        """Newton iterations on the barrier problem for a fixed t

        Returns:
            tuple: The last iterate and whether it is centered. A numerical
            breakdown sets ``breakdown`` and returns the last iterate.
        """
        for _ in range(self.MAX_NEWTON):
            try:
                direction, decrement, gradient = self._newton_step(z, t)
            except NumericalError as e:
                log.debug('Barrier stopped at t=%g: %s', t, e)
                self.breakdown = True
                return z, False
            if decrement / 2.0 <= self.NEWTON_TOLERANCE:
                return z, True
            current = self._barrier(z, t)
            step = 1.0
            slope = -decrement
            for _ in range(80):
                candidate = z + step * direction
                if self._barrier(candidate, t) <= current + self.ALPHA * step * slope:
                    break
                step *= self.BETA
            else:
                # No representable decrease is left at this t
                return z, decrement / 2.0 <= self.STALLED_DECREMENT
            z = candidate
            self.newton_steps += 1
            if self.record_trace:
                self.trace.append({'t': t, 'step': step, 'decrement': decrement})
        return z, False

    def minimize(self, z, t0, gap, stop=None):
        """Follow the central path from z

        Args:
            z (numpy.ndarray): Strictly feasible start.
            t0 (float): Initial barrier parameter.
            gap (float): Target duality gap m/t.
            stop (callable, optional): Called with each centered point; a
                true result ends the path early.

        Returns:
            numpy.ndarray: The last strictly feasible iterate.
        """
        m = len(self.inequalities)
        t = t0
        for _ in range(self.MAX_OUTER):
            z, centered = self.center(z, t)
            self.t = t
            if stop is not None and stop(z):
                self.converged = True
                return z
            if self.breakdown:
                return z
            if not self.objective or m / t <= gap:
                self.converged = centered
                return z
            t *= self.GROWTH
        return z

    def stationarity(self, z, t):
        """Inf-norm of the Lagrangian gradient with central path multipliers"""
        slack = self.inequalities.slack(z)
        multipliers = 1.0 / (t * slack)
        _, grad, _ = self.objective(z, True)
        residual = grad - self.inequalities.matrix.T.dot(multipliers)
        nu = np.linalg.lstsq(self.eq_matrix.T, -residual, rcond=None)[0]
        return float(np.abs(residual + self.eq_matrix.T.dot(nu)).max())


def _covering_rows(constraint, n):
    if constraint is None or constraint.n_rows == 0:
        return np.zeros((0, n)), np.zeros(0)
    return constraint.matrix.astype(float), np.ones(constraint.n_rows)


def _check_cover_budget(constraint, cover, budget):
    """Reject budgets that leave the covering rows no strict interior

    Any x with cover x >= 1 sums to at least the fractional covering number,
    and every dual feasible value of the packing LP bounds that number from
    below, so a budget at or below it is infeasible for cover x > 1.
    """
    empty = np.flatnonzero(~cover.any(axis=1))
    if empty.size:
        raise FeasibilityError('Row %d of the %s constraint cannot be covered'
                               % (empty[0], constraint.kind))
    bound = packing_lp(cover)[0]
    if budget <= bound + LP_TOLERANCE:
        raise FeasibilityError(
            'No placement of %d PMUs strictly satisfies the %s constraint: its '
            'fractional covering number is %.6g' % (budget, constraint.kind, bound))


def analytic_center(constraint, budget, n_buses=None):
    """Analytic center of {0 < x < 1, sum(x) = S, covering rows > 1}

    A phase one problem with a slack variable u on the covering rows finds a
    strictly feasible point first when the uniform point is not one.

    Raises:
        FeasibilityError: When the region has no interior, e.g. when S is
            not above the fractional covering number.
    """
    n = n_buses if n_buses is not None else constraint.n_buses
    if not 0 < budget < n:
        raise ContractError('Budget must lie strictly between 0 and %d' % n)
    cover, ones = _covering_rows(constraint, n)
    box, box_rhs = _box(n)
    x = np.full(n, float(budget) / n)

    if cover.shape[0] and np.min(cover.dot(x) - ones) <= 0:
        _check_cover_budget(constraint, cover, budget)
        u = 1.0 - float(np.min(cover.dot(x) - ones))
        box_u, box_u_rhs = _box(n, 1)
        inequalities = LinearInequalities(
            np.vstack([box_u, np.hstack([cover, np.ones((cover.shape[0], 1))])]),
            np.concatenate([box_u_rhs, ones]), box=n)
        eq = np.concatenate([np.ones(n), [0.0]])[None, :]

        def phase_one(z, hessian):
            grad = np.zeros(n + 1)
            grad[-1] = 1.0
            return z[-1], grad, np.zeros((n + 1, n + 1))

        solver = BarrierSolver(phase_one, inequalities, eq)
        z = solver.minimize(np.concatenate([x, [u]]), 1.0, 1e-9,
                            stop=lambda z: z[-1] < -1e-6)
        if z[-1] >= 0:
            raise FeasibilityError(
                'No placement of %d PMUs strictly satisfies the %s '
                'constraint' % (budget, constraint.kind))
        x = z[:n]

    inequalities = LinearInequalities(np.vstack([box, cover]),
                                      np.concatenate([box_rhs, ones]), box=n)
    solver = BarrierSolver(None, inequalities, np.ones((1, n)))
    return solver.minimize(x, 1.0, 0.0)


class SubproblemResult(object):
    def __init__(self, x, objective, kkt_residual, newton_steps, converged,
                 trust_region_active, trace):
        self.x = x
        self.objective = objective
        self.kkt_residual = kkt_residual
        self.newton_steps = newton_steps
        self.converged = converged
        self.trust_region_active = trust_region_active
        self.trace = trace


def subproblem_objective(coeffs, penalty):
    """phi(x) = sum(c_k / (x_k + eps)) + mu / g_lin(x)"""
    c = coeffs.per_bus
    epsilon = coeffs.epsilon
    mu = penalty.mu if penalty is not None else 0.0

    def evaluate(x, hessian=True):
        shifted = x + epsilon
        value = float(np.sum(c / shifted))
        if mu:
            level = penalty.g_lin(x)
            value += mu / level
        if not hessian:
            return value, None, None
        grad = -c / shifted ** 2
        hess = np.diag(2.0 * c / shifted ** 3)
        if mu:
            slopes = penalty.g_lin.slopes
            grad = grad - mu * slopes / level ** 2
            hess = hess + (2.0 * mu / level ** 3) * np.outer(slopes, slopes)
        return value, grad, hess

    return evaluate


def solve_subproblem(coeffs, penalty, constraint, budget, start=None,
                     tolerance=1e-8, record_trace=False):
    """Minimize the majorized penalized objective over the feasible region

    The region is {0 <= x <= 1, sum(x) = S, covering rows >= 1,
    g_lin(x) >= 1e-6 S}, the last constraint being the trust region of the
    penalty linearization. MI coefficients are handled the same way since
    maximizing the lower bound minimizes sum(alpha_k / (x_k + eps)).

    Args:
        coeffs (SurrogateCoeffs): Separable part of the objective.
        penalty (PenaltyState): Linearized penalty, or None for mu = 0 and
            no trust region.
        constraint (ObservabilityConstraint): Covering rows, or None.
        budget (int): S.
        start (numpy.ndarray, optional): Strictly feasible start. Defaults
            to the expansion point of the coefficients when it is strictly
            feasible, and to the analytic center otherwise.
        tolerance (float): Target duality gap relative to the objective.
        record_trace (bool): Keep per Newton step records.

    Returns:
        SubproblemResult
    """
    n = coeffs.per_bus.size
    cover, ones = _covering_rows(constraint, n)
    box, box_rhs = _box(n)
    rows = [box, cover]
    rhs = [box_rhs, ones]
    if penalty is not None:
        rows.append(penalty.g_lin.slopes[None, :])
        rhs.append([penalty.trust_threshold - penalty.g_lin.constant])
    inequalities = LinearInequalities(np.vstack(rows), np.concatenate(rhs), box=n)

    if start is None:
        start = coeffs.expansion_point
    start = np.asarray(start, dtype=float)
    if np.any(inequalities.slack(start) <= 0) or abs(start.sum() - budget) > 1e-9:
        start = analytic_center(constraint, budget, n)
        if np.any(inequalities.slack(start) <= 0):
            raise FeasibilityError('Trust region excludes every feasible point')

    objective = subproblem_objective(coeffs, penalty)
    start_value = objective(start, False)[0]
    solver = BarrierSolver(objective, inequalities, np.ones((1, n)),
                           record_trace=record_trace)
    m = len(inequalities)
    scale = max(abs(start_value), np.finfo(float).tiny)
    x = solver.minimize(start, 100.0 * m / scale, tolerance * scale)
    value = objective(x, False)[0]
    residual = max(solver.stationarity(x, solver.t) / max(1.0, np.abs(objective(x)[1]).max()),
                   m / solver.t / scale)

    trust_active = False
    if penalty is not None and penalty.mu:
        trust_active = penalty.g_lin(x) <= 2.0 * penalty.trust_threshold
        if trust_active:
            log.debug('Trust region active, halving the step')
            x = start + 0.5 * (x - start)
            value = objective(x, False)[0]

    if value > start_value:
        x, value = start, start_value
    return SubproblemResult(x, value, residual, solver.newton_steps,
                            solver.converged, trust_active, solver.trace)


def select_mu(problem, kind, start, budget, exponent=DEFAULT_EXPONENT):
    """Penalty weight giving objective and penalty similar magnitudes

    The ratio is snapped to the nearest power of ten. For the information
    objective the magnitude of the information gain over the prior is used,
    the log-det of the prior itself being an offset.
    """
    if kind == 'mse':
        magnitude = abs(problem.f_e(start))
    else:
        magnitude = abs(problem.f_mi(start) - problem.f_mi(np.zeros(problem.n_buses)))
    ratio = magnitude / max(g_tilde(start, budget, exponent), 1e-12)
    if ratio <= 0:
        return 1.0
    return float(10.0 ** np.round(np.log10(ratio)))


