# pmuplace - a Python library for PMU placement
#
# Copyright (C) 2011 Red Hat Inc.
#
# This program is free software; you can redistribute it and/or modify it
# under the terms of the GNU General Public License as published by the
# Free Software Foundation; either version 2 of the License, or (at your
# option) any later version.  See http://www.gnu.org/copyleft/gpl.html for
# the full text of the license.

import argparse
import configparser
import logging
import os
import sys

import pmuplace
import pmuplace.utils as utils

from pmuplace.cli import cliClient
from pmuplace.errors import ConvergenceError, pmuError

DEFAULT_CONFIG = os.path.join('~', '.config', 'pmuplace', 'pmuplace.conf')


def main(argv=None):
    if argv is not None:
        sys.argv = [sys.argv[0]] + list(argv)

    # Only --config is needed before the full parser exists
    early = argparse.ArgumentParser(add_help=False)
    early.add_argument('--config', '-C', default=None)
    early_args, _ = early.parse_known_args()

    config = configparser.ConfigParser()
    path = os.path.expanduser(early_args.config or DEFAULT_CONFIG)
    if early_args.config and not os.path.exists(path):
        sys.stderr.write('Config file %s does not exist\n' % path)
        return 1
    config.read(path)

    client = cliClient(config, name='pmuplace')
    client.setupLogging(pmuplace.log)
    client.parse_cmdline()

    if client.args.debug:
        pmuplace.log.setLevel(logging.DEBUG)
    elif client.args.q:
        pmuplace.log.setLevel(logging.WARNING)
    else:
        pmuplace.log.setLevel(logging.INFO)
    # Verbose output is the iteration trace of the placement algorithms
    if client.args.v and not client.args.q:
        logging.getLogger('pmuplace.algorithms').setLevel(logging.DEBUG)

    if not hasattr(client.args, 'command'):
        client.parser.print_help()
        return 1

    try:
        client.args.command()
    except KeyboardInterrupt:
        pmuplace.log.error('Interrupted')
        return 1
    except pmuError as e:
        pmuplace.log.error('Could not execute %s: %s',
                           client.args.command.__name__, e)
        if isinstance(e, ConvergenceError) and e.diagnostics:
            utils.log_result(pmuplace.log.error, e.diagnostics)
        return e.exit_code
    return 0


if __name__ == '__main__':
    sys.exit(main())
