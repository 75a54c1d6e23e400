# Copyright (c) 2015 - Red Hat Inc.
#
# This program is free software; you can redistribute it and/or modify it
# under the terms of the GNU General Public License as published by the
# Free Software Foundation; either version 2 of the License, or (at your
# option) any later version.  See http://www.gnu.org/copyleft/gpl.html for
# the full text of the license.


"""Low-rank modification of Cholesky factors

For a lower factor L of A, compute the factor of A + sign * v v' in O(n^2)
operations instead of refactorizing. A rank-m change is applied one row of
the m x n matrix V at a time.
"""


import math

import numpy as np

from .errors import ContractError, NumericalError


def choldate(factor, vector, sign):
    """Update (sign=+1) or downdate (sign=-1) a lower Cholesky factor in place

    Args:
        factor (numpy.ndarray): Lower triangular n x n factor, overwritten.
        vector (numpy.ndarray): The n-vector v. It is used as workspace and
            overwritten too.
        sign (int): +1 or -1.
    """
    n = factor.shape[0]
    if factor.shape != (n, n) or vector.shape != (n,):
        raise ContractError('Invalid dimensions')
    if sign not in (1, -1):
        raise ContractError('Invalid sign %r' % sign)

    for k in range(n):
        diag = factor[k, k]
        squared = diag * diag + sign * vector[k] * vector[k]
        if squared <= 0:
            raise NumericalError('Downdate makes the matrix indefinite')
        r = math.sqrt(squared)
        c = r / diag
        s = vector[k] / diag
        factor[k, k] = r
        factor[k + 1:, k] = (factor[k + 1:, k] + sign * s * vector[k + 1:]) / c
        vector[k + 1:] = c * vector[k + 1:] - s * factor[k + 1:, k]


def rank_update(factor, rows, sign):
    """Apply A + sign * V'V to the factor of A, in place

    Args:
        factor (numpy.ndarray): Lower triangular factor of A.
        rows (numpy.ndarray): The m x n matrix V.
        sign (int): +1 or -1.
    """
    for row in np.atleast_2d(rows):
        choldate(factor, np.array(row, dtype=float), sign)
