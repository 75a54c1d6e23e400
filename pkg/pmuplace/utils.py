# Copyright (c) 2015 - Red Hat Inc.
#
# This program is free software; you can redistribute it and/or modify it
# under the terms of the GNU General Public License as published by the
# Free Software Foundation; either version 2 of the License, or (at your
# option) any later version.  See http://www.gnu.org/copyleft/gpl.html for
# the full text of the license.


"""Miscellaneous utilities

This module contains a bunch of utilities used elsewhere in pmuplace.
"""


import json

import numpy as np
from scipy.optimize import brentq


class cached_property(property):
    """A property caching its return value

    This is pretty much the same as a normal Python property, except that the
    decorated function is called only once. Its return value is then saved,
    subsequent calls will return it without executing the function any more.

    Example:
        >>> class Foo(object):
        ...     @cached_property
        ...     def bar(self):
        ...         print("Executing Foo.bar...")
        ...         return 42
        ...
        >>> f = Foo()
        >>> f.bar
        Executing Foo.bar...
        42
        >>> f.bar
        42
    """
    def __get__(self, inst, type=None):
        if inst is None:
            return self
        try:
            return getattr(inst, '_%s' % self.fget.__name__)
        except AttributeError:
            v = super(cached_property, self).__get__(inst, type)
            setattr(inst, '_%s' % self.fget.__name__, v)
            return v


def _log_value(log_func, value, level, indent, suffix=''):
    offset = ' ' * level * indent
    log_func(''.join([offset, str(value), suffix]))


def log_result(log_func, result, level=0, indent=2):
    if isinstance(result, list):
        for item in result:
            log_result(log_func, item, level)
    elif isinstance(result, dict):
        for key, value in result.items():
            _log_value(log_func, key, level, indent, ':')
            log_result(log_func, value, level+1)
    else:
        _log_value(log_func, result, level, indent)


def project_capped_simplex(y, total):
    """Euclidean projection onto {x : sum(x) = total, 0 <= x <= 1}

    The projection is clip(y - tau, 0, 1) for the scalar tau that restores the
    sum, found by a bracketing root search.

    Args:
        y (numpy.ndarray): The point to project.
        total (float): The required sum, between 0 and len(y).

    Returns:
        numpy.ndarray: The projected point.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if total <= 0:
        return np.zeros(n)
    if total >= n:
        return np.ones(n)

    def excess(tau):
        return np.clip(y - tau, 0.0, 1.0).sum() - total

    tau = brentq(excess, y.min() - 1.0, y.max(), xtol=1e-14, rtol=1e-15)
    x = np.clip(y - tau, 0.0, 1.0)
    return x


def jsonable(value):
    """``default`` hook of json.dump for numpy scalars and arrays"""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError('%r is not JSON serializable' % (value,))


def write_json(data, filename):
    with open(filename, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=True, default=jsonable)
        f.write('\n')
