"""
The case manifest records the checksum of every case file exported into a
data directory, one line per file, in the tagged format of
`sha256sum --tag filename`:

    SHA256 (ieee30.m) = 1f0c...

Files listed in the manifest are checked before they are parsed, and
``pmuplace verify-cases`` reports the state of each one.
"""


import os
import re

from .errors import MalformedLineError


LINE_PATTERN = re.compile(
    r'^(?P<hashtype>[^ ]+?) \((?P<file>[^ )]+?)\) = (?P<hash>[^ ]+?)$')

OK = 'ok'
MISSING = 'missing'
MISMATCH = 'mismatch'


class CaseManifest(object):
    """Checksums of the case files of one directory

    Args:
        path (str): The manifest file. It need not exist yet.
        replace (bool): Start empty even if the file exists.
    """

    def __init__(self, path, replace=False):
        self.path = path
        self.entries = []

        if replace or not os.path.exists(path):
            return

        with open(path) as f:
            for line in f:
                entry = self.parse_line(line)
                if entry and entry not in self.entries:
                    self.entries.append(entry)

    @property
    def directory(self):
        return os.path.dirname(self.path)

    def __contains__(self, filename):
        return self.get(filename) is not None

    def get(self, filename):
        for entry in self.entries:
            if entry.file == filename:
                return entry

    def parse_line(self, line):
        stripped = line.strip()
        if not stripped:
            return

        m = LINE_PATTERN.match(stripped)
        if m is None:
            raise MalformedLineError(line)
        return ManifestEntry(m.group('hashtype'), m.group('file'), m.group('hash'))

    def record(self, hashtype, file, hash):
        """Add the checksum of a file, dropping an older record of it"""
        entry = ManifestEntry(hashtype, file, hash)
        self.entries = [e for e in self.entries if e.file != file]
        self.entries.append(entry)
        return entry

    def statuses(self, hasher):
        """State of each recorded file

        Args:
            hasher (callable): ``hasher(filename, hashtype)`` returning the
                hex digest of a file.

        Returns:
            list: (file name, status) pairs in manifest order.
        """
        return [(entry.file, entry.status(self.directory, hasher))
                for entry in self.entries]

    def write(self):
        with open(self.path, 'w') as f:
            for entry in sorted(self.entries, key=lambda e: e.file):
                f.write(str(entry))


class ManifestEntry(object):
    def __init__(self, hashtype, file, hash):
        self.hashtype = hashtype.lower()
        self.hash = hash
        self.file = file

    def status(self, directory, hasher):
        filename = os.path.join(directory, self.file)
        if not os.path.exists(filename):
            return MISSING
        if hasher(filename, self.hashtype) != self.hash:
            return MISMATCH
        return OK

    def __str__(self):
        return '%s (%s) = %s\n' % (self.hashtype.upper(), self.file, self.hash)

    def __eq__(self, other):
        return ((self.hashtype, self.hash, self.file) ==
                (other.hashtype, other.hash, other.file))
