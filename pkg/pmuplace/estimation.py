# Copyright (c) 2015 - Red Hat Inc.
#
# This program is free software; you can redistribute it and/or modify it
# under the terms of the GNU General Public License as published by the
# Free Software Foundation; either version 2 of the License, or (at your
# option) any later version.  See http://www.gnu.org/copyleft/gpl.html for
# the full text of the license.


"""Gaussian state estimation with PMU measurements

The phase angles follow the DC model P = B theta with Gaussian injections, so
the angles have a Gaussian prior. A PMU at bus k measures the bus angle and
the angle differences across every incident branch. Given a placement x, the
error covariance of the conditional-mean estimate is the inverse of the
information matrix

    J(x) = B' inv(Sigma_P) B + sum_k x_k G_k,    G_k = H_k' inv(R_k) H_k

All SPD solves go through Cholesky factors.
"""


import logging
import math
from multiprocessing.dummy import Pool as ThreadPool

import numpy as np
from scipy.linalg import (LinAlgError, cho_factor, cho_solve, cholesky,
                          lu_factor, lu_solve, solve_triangular, svdvals)

from .errors import ContractError, NumericalError
from .grid import GridModel

log = logging.getLogger(__name__)

BINARY_TOLERANCE = 1e-9
MIN_SAMPLES = 100
SAMPLE_CHUNK = 1000


class StatePrior(object):
    """Gaussian prior of the phase angles"""

    def __init__(self, mean, covariance, injection_mean, injection_cov,
                 information):
        self.mean = mean
        self.covariance = covariance
        self.injection_mean = injection_mean
        self.injection_cov = injection_cov
        # B' inv(Sigma_P) B
        self.information = information

    @property
    def n_buses(self):
        return self.mean.size


class MeasurementModel(object):
    """PMU regression matrices and noise of every bus

    Rows of H_k are the unit vector of bus k followed by e_k - e_m for the
    neighbors m in increasing order. The whitened rows R_k^(-1/2) H_k of all
    buses are stacked in ``whitened``, ``row_slices[k]`` selecting those of
    bus k.
    """

    def __init__(self, regressions, noise_variances):
        self.regressions = regressions
        self.noise_variances = noise_variances
        self.row_counts = [h.shape[0] for h in regressions]

        offsets = np.concatenate([[0], np.cumsum(self.row_counts)])
        self.row_slices = [slice(int(offsets[k]), int(offsets[k + 1]))
                           for k in range(len(regressions))]
        self.whitened = np.vstack([h / np.sqrt(v)[:, None]
                                   for h, v in zip(regressions, noise_variances)])
        self.precision_terms = np.array(
            [self.whitened[s].T.dot(self.whitened[s]) for s in self.row_slices])
        self.precision_sum = self.precision_terms.sum(axis=0)

    @property
    def n_buses(self):
        return len(self.regressions)

    def stacked(self, support):
        """Stacked regression matrix and noise variances of the given buses"""
        n = self.n_buses
        support = sorted(support)
        if not support:
            return np.zeros((0, n)), np.zeros(0)
        regression = np.vstack([self.regressions[k] for k in support])
        noise = np.concatenate([self.noise_variances[k] for k in support])
        return regression, noise


class Placement(object):
    """A selection of buses, binary or fractional

    Attributes:
        x (numpy.ndarray): Entries in [0, 1].
        budget (int): The number of PMUs, equal to sum(x).
    """

    def __init__(self, x, budget=None):
        x = np.asarray(x, dtype=float).ravel()
        if x.size and (x.min() < -BINARY_TOLERANCE or x.max() > 1 + BINARY_TOLERANCE):
            raise ContractError('Placement entries must lie in [0, 1]')
        self.x = np.clip(x, 0.0, 1.0)
        total = self.x.sum()
        if budget is None:
            budget = int(round(total))
        if abs(total - budget) > BINARY_TOLERANCE * max(1.0, budget):
            raise ContractError('Placement sums to %r, expected %d' % (total, budget))
        self.budget = int(budget)

    def __len__(self):
        return self.x.size

    def __repr__(self):
        return '<Placement S=%d of %d%s>' % (
            self.budget, self.x.size, '' if self.is_binary else ', fractional')

    @classmethod
    def from_support(cls, support, n_buses):
        x = np.zeros(n_buses)
        x[list(support)] = 1.0
        return cls(x)

    @property
    def is_binary(self):
        return bool(np.all(np.minimum(self.x, 1.0 - self.x) <= BINARY_TOLERANCE))

    @property
    def support(self):
        return [int(k) for k in np.flatnonzero(self.x > 0.5)]

    def to_dict(self, problem=None, constraint=None):
        """JSON record of the placement, with metrics when a problem is given"""
        record = {'x': [int(round(v)) if self.is_binary else float(v) for v in self.x],
                  'S': self.budget}
        if problem is not None:
            record['f_e'] = problem.f_e(self.x)
            record['f_mi'] = problem.f_mi(self.x)
        if constraint is not None:
            result = constraint.check(self)
            record['observability_status'] = {
                'kind': constraint.kind,
                'satisfied': result.satisfied,
                'violated_rows': result.violated_rows}
        return record


def as_vector(placement, n_buses=None):
    if isinstance(placement, Placement):
        x = placement.x
    else:
        x = np.asarray(placement, dtype=float).ravel()
    if n_buses is not None and x.size != n_buses:
        raise ContractError('Placement has %d entries, network has %d buses'
                            % (x.size, n_buses))
    return x


def binary_support(placement, n_buses):
    x = as_vector(placement, n_buses)
    if np.any(np.minimum(np.abs(x), np.abs(1.0 - x)) > BINARY_TOLERANCE):
        raise ContractError('A binary placement is required')
    return [int(k) for k in np.flatnonzero(x > 0.5)]


def injection_statistics(model, scale=None, variance_ratio=0.1, floor=1e-4):
    """Mean and variance of the per-unit power injections

    Args:
        model (GridModel): Network with net injections in MW.
        scale (float, optional): Factor from MW to per-unit. Defaults to
            1/baseMVA.
        variance_ratio (float): Variance as a fraction of the mean injection.
        floor (float): Added to the variance of buses whose mean injection is
            not positive, so every variance stays positive.

    Returns:
        tuple: ``(u_p, sigma_p)`` vectors.
    """
    if scale is None:
        scale = 1.0 / model.base_mva
    u_p = model.net_injection * scale
    sigma_p = np.where(u_p > 0, variance_ratio * u_p,
                       variance_ratio * np.abs(u_p) + floor)
    return u_p, sigma_p


def _diagonal(sigma_p, n):
    sigma_p = np.asarray(sigma_p, dtype=float)
    if sigma_p.ndim == 2:
        if sigma_p.shape != (n, n):
            raise ContractError('Injection covariance must be %d x %d' % (n, n))
        if np.any(sigma_p - np.diag(np.diag(sigma_p))):
            raise ContractError('Injection covariance must be diagonal')
        sigma_p = np.diag(sigma_p)
    if sigma_p.shape != (n,):
        raise ContractError('Injection covariance must have %d entries' % n)
    if np.any(sigma_p < 0):
        raise ContractError('Injection variances must be nonnegative')
    return sigma_p.copy()


def state_prior(model, u_p, sigma_p):
    """Prior of the angles implied by the injection statistics

    Args:
        model: A :class:`GridModel` or a susceptance matrix.
        u_p: Mean injections, per-unit.
        sigma_p: Injection variances, as a vector or a diagonal matrix.

    Returns:
        StatePrior
    """
    if isinstance(model, GridModel):
        susceptance = model.susceptance
    else:
        susceptance = np.atleast_2d(np.asarray(model, dtype=float))
    n = susceptance.shape[0]
    u_p = np.asarray(u_p, dtype=float).ravel()
    if u_p.shape != (n,):
        raise ContractError('Injection mean must have %d entries' % n)
    variances = _diagonal(sigma_p, n)

    sv = svdvals(susceptance)
    if sv[-1] <= np.finfo(float).eps * sv[0] * n:
        raise NumericalError('Susceptance matrix is singular')
    if np.any(variances == 0):
        raise NumericalError('Injection variances must be positive for an '
                             'invertible prior covariance')

    lu = lu_factor(susceptance)
    mean = lu_solve(lu, u_p)
    inverse = lu_solve(lu, np.eye(n))
    covariance = (inverse * variances).dot(inverse.T)
    covariance = 0.5 * (covariance + covariance.T)
    try:
        cholesky(covariance, lower=True)
    except LinAlgError:
        raise NumericalError('Prior covariance is not positive definite')

    information = susceptance.T.dot(susceptance / variances[:, None])
    information = 0.5 * (information + information.T)
    return StatePrior(mean, covariance, u_p, np.diag(variances), information)


def _per_bus(value, n, what):
    value = np.broadcast_to(np.asarray(value, dtype=float), (n,))
    if np.any(value <= 0):
        raise ContractError('%s must be positive' % what)
    return value


def measurement_model(model, r=0.01, rho=0.02):
    """PMU measurement model of every bus

    Args:
        model (GridModel): The network.
        r: Variance of the bus angle measurement, scalar or per bus.
        rho: Variance of the branch angle-difference measurements, scalar or
            per bus.
    """
    n = model.n_buses
    r = _per_bus(r, n, 'Voltage noise')
    rho = _per_bus(rho, n, 'Branch noise')
    regressions = []
    variances = []
    for k, neighbors in enumerate(model.adjacency):
        h = np.zeros((len(neighbors) + 1, n))
        h[0, k] = 1.0
        for row, m in enumerate(neighbors, 1):
            h[row, k] = 1.0
            h[row, m] = -1.0
        regressions.append(h)
        variances.append(np.concatenate([[r[k]], np.full(len(neighbors), rho[k])]))
    return MeasurementModel(regressions, variances)


class EstimationProblem(object):
    """Objectives of a placement for a fixed prior and measurement model"""

    def __init__(self, prior, meas, grid=None):
        if prior.n_buses != meas.n_buses:
            raise ContractError('Prior and measurement model sizes differ')
        self.prior = prior
        self.meas = meas
        self.grid = grid

    @classmethod
    def from_grid(cls, model, voltage_noise=0.01, branch_noise=0.02,
                  scale=None, variance_ratio=0.1, variance_floor=1e-4):
        u_p, sigma_p = injection_statistics(model, scale, variance_ratio,
                                            variance_floor)
        prior = state_prior(model, u_p, sigma_p)
        meas = measurement_model(model, voltage_noise, branch_noise)
        return cls(prior, meas, grid=model)

    @property
    def n_buses(self):
        return self.prior.n_buses

    def information(self, placement):
        x = as_vector(placement, self.n_buses)
        return self.prior.information + np.tensordot(x, self.meas.precision_terms, axes=1)

    def cholesky(self, placement):
        """Lower Cholesky factor of the information matrix"""
        try:
            return cholesky(self.information(placement), lower=True)
        except LinAlgError:
            raise NumericalError('Information matrix is not positive definite')

    def error_covariance(self, placement):
        factor = self.cholesky(placement)
        cov = cho_solve((factor, True), np.eye(self.n_buses))
        return 0.5 * (cov + cov.T)

    def f_e(self, placement):
        """Trace of the error covariance"""
        inverse = solve_triangular(self.cholesky(placement), np.eye(self.n_buses),
                                   lower=True)
        return float(np.sum(inverse ** 2))

    def f_mi(self, placement):
        """Log-determinant of the information matrix"""
        return float(2.0 * np.sum(np.log(np.diag(self.cholesky(placement)))))

    def gradient_f_e(self, placement):
        cov = self.error_covariance(placement)
        return -np.einsum('ij,kij->k', cov.dot(cov), self.meas.precision_terms)

    def gradient_f_mi(self, placement):
        cov = self.error_covariance(placement)
        return np.einsum('ij,kij->k', cov, self.meas.precision_terms)

    def mutual_information(self, placement):
        """Mutual information between state and measurements, in bits"""
        return (self.f_mi(placement) - self.f_mi(np.zeros(self.n_buses))) / (2 * math.log(2))

    def normalized_mi(self, placement):
        low = self.f_mi(np.zeros(self.n_buses))
        high = self.f_mi(np.ones(self.n_buses))
        return (self.f_mi(placement) - low) / (high - low)

    def objective(self, kind):
        """The function to minimize for an objective kind"""
        if kind == 'mse':
            return self.f_e
        elif kind == 'mi':
            return lambda x: -self.f_mi(x)
        raise ContractError('Unknown objective %r' % kind)

    def gradient(self, kind):
        if kind == 'mse':
            return self.gradient_f_e
        elif kind == 'mi':
            return lambda x: -self.gradient_f_mi(x)
        raise ContractError('Unknown objective %r' % kind)


def error_covariance(prior, meas, placement):
    return EstimationProblem(prior, meas).error_covariance(placement)


def f_e(prior, meas, placement):
    return EstimationProblem(prior, meas).f_e(placement)


def f_mi(prior, meas, placement):
    return EstimationProblem(prior, meas).f_mi(placement)


def _gain(prior, regression, noise):
    """Kalman gain of the stacked measurements"""
    cov_h = prior.covariance.dot(regression.T)
    innovation = regression.dot(cov_h) + np.diag(noise)
    try:
        factor = cho_factor(innovation, lower=True)
    except LinAlgError:
        raise NumericalError('Innovation covariance is not positive definite')
    return cho_solve(factor, cov_h.T).T


def mmse_estimate(prior, meas, placement, z):
    """Conditional mean of the angles given the PMU outputs

    Args:
        prior (StatePrior): The angle prior.
        meas (MeasurementModel): The measurement model.
        placement: Binary placement.
        z: Measurements of the placed PMUs stacked in increasing bus order.
    """
    support = binary_support(placement, prior.n_buses)
    regression, noise = meas.stacked(support)
    z = np.asarray(z, dtype=float).ravel()
    if z.size != regression.shape[0]:
        raise ContractError('Expected %d measurements, got %d'
                            % (regression.shape[0], z.size))
    if not support:
        return prior.mean.copy()
    gain = _gain(prior, regression, noise)
    return prior.mean + gain.dot(z - regression.dot(prior.mean))


def monte_carlo_mse(prior, meas, placement, n_samples=10000, seed=0, workers=1):
    """Empirical squared error of the MMSE estimate

    Samples are drawn in fixed-size chunks, each with its own child seed, so
    the result only depends on the seed and not on the worker count.

    Returns:
        tuple: ``(empirical_mse, std_error)``
    """
    if n_samples < MIN_SAMPLES:
        raise ContractError('At least %d samples are required' % MIN_SAMPLES)
    n = prior.n_buses
    support = binary_support(placement, n)
    regression, noise = meas.stacked(support)
    if support:
        gain = _gain(prior, regression, noise)
    else:
        gain = np.zeros((n, 0))
    try:
        root = cholesky(prior.covariance, lower=True)
    except LinAlgError:
        raise NumericalError('Prior covariance is not positive definite')
    noise_std = np.sqrt(noise)

    n_chunks = -(-n_samples // SAMPLE_CHUNK)
    seeds = np.random.SeedSequence(seed).spawn(n_chunks)

    def run_chunk(idx):
        size = min(SAMPLE_CHUNK, n_samples - idx * SAMPLE_CHUNK)
        rng = np.random.default_rng(seeds[idx])
        theta = prior.mean + rng.standard_normal((size, n)).dot(root.T)
        z = theta.dot(regression.T) + rng.standard_normal((size, noise.size)) * noise_std
        estimate = prior.mean + (z - regression.dot(prior.mean)).dot(gain.T)
        return np.sum((theta - estimate) ** 2, axis=1)

    if workers > 1:
        pool = ThreadPool(workers)
        try:
            chunks = pool.map(run_chunk, range(n_chunks))
        finally:
            pool.close()
    else:
        chunks = [run_chunk(idx) for idx in range(n_chunks)]
    errors = np.concatenate(chunks)
    log.debug('Drew %d samples in %d chunks', n_samples, n_chunks)
    return float(errors.mean()), float(errors.std(ddof=1) / math.sqrt(n_samples))
