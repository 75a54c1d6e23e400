# Copyright (c) 2015 - Red Hat Inc.
#
# This program is free software; you can redistribute it and/or modify it
# under the terms of the GNU General Public License as published by the
# Free Software Foundation; either version 2 of the License, or (at your
# option) any later version.  See http://www.gnu.org/copyleft/gpl.html for
# the full text of the license.


"""Custom error classes"""


class pmuError(Exception):
    """Our base error class"""
    faultCode = 1000
    exit_code = 1


class ConfigError(pmuError):
    """Raised for invalid configuration or command line values"""
    faultCode = 1001


class ParseError(pmuError):
    """Raised when a case file cannot be parsed

    The line number is 1-based and refers to the case text.
    """
    faultCode = 1002

    def __init__(self, message, lineno=None):
        super(ParseError, self).__init__(message)
        self.message = message
        self.lineno = lineno

    def __str__(self):
        if self.lineno is None:
            return str(self.message)
        return 'line %d: %s' % (self.lineno, self.message)


class ValidationError(pmuError):
    """Raised when a network description is inconsistent"""
    faultCode = 1003


class TopologyError(pmuError):
    """Raised when the network graph is not connected"""
    faultCode = 1004


class DataError(pmuError):
    """Raised when branch data cannot produce a susceptance matrix"""
    faultCode = 1005


class ContractError(pmuError):
    """Raised when arguments do not have the expected shape or kind"""
    faultCode = 1006


class MalformedLineError(pmuError):
    """Raised when parsing a sources file with malformed lines"""
    faultCode = 1007


class InvalidHashType(pmuError):
    """Raised when we don't know the requested hash algorithm"""
    faultCode = 1008


class ChecksumError(pmuError):
    """Raised when a bundled case does not match its recorded checksum"""
    faultCode = 1009


class FeasibilityError(pmuError):
    """Raised when a placement problem has no feasible point"""
    faultCode = 1020
    exit_code = 2


class NumericalError(pmuError):
    """Raised when a factorization or solve breaks down"""
    faultCode = 1030
    exit_code = 3


class ConvergenceError(NumericalError):
    """Raised when an iterative method gives up

    Diagnostics are kept in a dict so the CLI can print them.
    """
    faultCode = 1031

    def __init__(self, message, diagnostics=None):
        super(ConvergenceError, self).__init__(message)
        self.message = message
        self.diagnostics = diagnostics or {}

    def __str__(self):
        return str(self.message)
