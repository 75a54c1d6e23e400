# Copyright (c) 2015 - Red Hat Inc.
#
# This program is free software; you can redistribute it and/or modify it
# under the terms of the GNU General Public License as published by the
# Free Software Foundation; either version 2 of the License, or (at your
# option) any later version.  See http://www.gnu.org/copyleft/gpl.html for
# the full text of the license.


"""Locate and load test networks

The IEEE cases come from PYPOWER. They can be exported as MATPOWER text into
a data directory together with a ``sources`` manifest holding their
checksums; a data directory is then preferred over PYPOWER and every file
read from it is checked against the manifest first.
"""


import hashlib
import importlib
import logging
import os

from . import grid
from .errors import ChecksumError, ConfigError, InvalidHashType
from .sources import MISMATCH, CaseManifest

log = logging.getLogger(__name__)

BUNDLED = {'ieee30': 'case30',
           'ieee39': 'case39',
           'ieee57': 'case57',
           'ieee118': 'case118'}
MANIFEST = 'sources'
ENV_DATA_DIR = 'PMUPLACE_DATA_DIR'
DEFAULT_HASHTYPE = 'sha256'


def hash_file(filename, hashtype=DEFAULT_HASHTYPE):
    """Compute the hash of a file

    Args:
        filename (str): The full path to the file. It is assumed to exist.
        hashtype (str, optional): The hash algorithm to use.

    Returns:
        The hash digest.
    """
    try:
        sum = hashlib.new(hashtype)

    except ValueError:
        raise InvalidHashType(hashtype)

    with open(filename, 'rb') as f:
        chunk = f.read(8192)

        while chunk:
            sum.update(chunk)
            chunk = f.read(8192)

    return sum.hexdigest()


def canonical_name(name):
    """Map 'case30' and 'IEEE30' style names to the bundled key"""
    key = name.lower()
    for bundled, module in BUNDLED.items():
        if key in (bundled, module):
            return bundled
    return key


def bundled_case(name):
    """Return the PYPOWER case dict of a bundled network"""
    key = canonical_name(name)
    if key not in BUNDLED:
        raise ConfigError('Unknown case %s. Known cases: %s'
                          % (name, ', '.join(sorted(BUNDLED))))
    module = importlib.import_module('pypower.%s' % BUNDLED[key])
    return getattr(module, BUNDLED[key])()


class CaseStore(object):
    """Load networks by name or path

    Args:
        data_dir (str, optional): Directory of exported cases. Defaults to
            the PMUPLACE_DATA_DIR environment variable.
        hashtype (str): Checksum algorithm of the manifest.
    """

    def __init__(self, data_dir=None, hashtype=DEFAULT_HASHTYPE):
        if data_dir is None:
            data_dir = os.environ.get(ENV_DATA_DIR) or None
        self.data_dir = data_dir
        self.hashtype = hashtype

    @staticmethod
    def names():
        return sorted(BUNDLED)

    def _data_file(self, key):
        if self.data_dir is None:
            return None
        filename = os.path.join(self.data_dir, '%s.m' % key)
        if os.path.exists(filename):
            return filename

    def check(self, filename):
        """Check a file of the data directory against the manifest

        Raises:
            ChecksumError: The recorded checksum differs.
        """
        manifest = CaseManifest(os.path.join(os.path.dirname(filename), MANIFEST))
        entry = manifest.get(os.path.basename(filename))
        if entry is None:
            log.warning('No checksum recorded for %s', filename)
            return
        if entry.status(os.path.dirname(filename), hash_file) == MISMATCH:
            raise ChecksumError('%s does not match its recorded checksum' % filename)
        log.debug('Checksum of %s verified', filename)

    def load(self, name_or_path):
        """Load a network

        Args:
            name_or_path (str): A bundled case name, a MATPOWER ``.m`` file or
                a JSON snapshot written by ``GridModel.to_snapshot``.

        Returns:
            GridModel
        """
        if os.path.isfile(name_or_path):
            label = os.path.splitext(os.path.basename(name_or_path))[0]
            if name_or_path.endswith('.json'):
                log.debug('Loading snapshot %s', name_or_path)
                return grid.load_snapshot(name_or_path)
            log.debug('Parsing case file %s', name_or_path)
            with open(name_or_path) as f:
                return grid.parse_case(f.read(), name=label)

        key = canonical_name(name_or_path)
        filename = self._data_file(key)
        if filename is not None:
            self.check(filename)
            log.debug('Parsing %s from the data directory', filename)
            with open(filename) as f:
                return grid.parse_case(f.read(), name=key)
        return grid.GridModel.from_ppc(bundled_case(key), name=key)

    def export(self, output_dir, names=None):
        """Write bundled cases as MATPOWER text and record their checksums

        Returns:
            list: The written file names.
        """
        names = [canonical_name(n) for n in (names or self.names())]
        if not os.path.isdir(output_dir):
            os.makedirs(output_dir)
        manifest = CaseManifest(os.path.join(output_dir, MANIFEST))
        written = []
        for key in names:
            filename = os.path.join(output_dir, '%s.m' % key)
            with open(filename, 'w') as f:
                f.write(grid.format_case(bundled_case(key), name=key))
            manifest.record(self.hashtype, os.path.basename(filename),
                               hash_file(filename, self.hashtype))
            log.info('Exported %s', filename)
            written.append(filename)
        manifest.write()
        return written

    def verify(self, directory=None):
        """Check every manifest entry of a directory

        Returns:
            list: (file name, status) pairs where status is 'ok', 'missing'
            or 'mismatch'.
        """
        directory = directory or self.data_dir
        if directory is None:
            raise ConfigError('No data directory to verify')
        manifest_path = os.path.join(directory, MANIFEST)
        if not os.path.exists(manifest_path):
            raise ConfigError('No %s manifest in %s' % (MANIFEST, directory))
        return CaseManifest(manifest_path).statuses(hash_file)
