import hashlib
import os
import shutil
import unittest

import mock
import numpy as np

from pmuplace import casestore
from pmuplace.casestore import CaseStore
from pmuplace.errors import ChecksumError, ConfigError, InvalidHashType

import utils


class HashFileTestCase(utils.TempDirTestCase):

    def setUp(self):
        super(HashFileTestCase, self).setUp()
        self.filename = os.path.join(self.workdir, 'afile')
        with open(self.filename, 'wb') as f:
            f.write(b'mpc.baseMVA = 100;\n')

    def test_hash_file(self):
        expected = hashlib.sha256(b'mpc.baseMVA = 100;\n').hexdigest()
        self.assertEqual(expected, casestore.hash_file(self.filename))
        self.assertEqual(hashlib.md5(b'mpc.baseMVA = 100;\n').hexdigest(),
                         casestore.hash_file(self.filename, 'md5'))

    def test_invalid_hashtype(self):
        self.assertRaises(InvalidHashType, casestore.hash_file, self.filename, 'nosuchhash')


class NamesTestCase(unittest.TestCase):

    def test_canonical_name(self):
        self.assertEqual('ieee30', casestore.canonical_name('case30'))
        self.assertEqual('ieee118', casestore.canonical_name('IEEE118'))
        self.assertEqual('mygrid', casestore.canonical_name('MyGrid'))

    def test_unknown_bundled_case(self):
        self.assertRaises(ConfigError, casestore.bundled_case, 'ieee14000')

    def test_names(self):
        self.assertEqual(['ieee118', 'ieee30', 'ieee39', 'ieee57'], CaseStore.names())


class CaseStoreTestCase(utils.TempDirTestCase):

    def test_data_dir_from_environment(self):
        with mock.patch.dict('os.environ', {casestore.ENV_DATA_DIR: self.workdir}):
            self.assertEqual(self.workdir, CaseStore().data_dir)
        with mock.patch.dict('os.environ', {casestore.ENV_DATA_DIR: ''}):
            self.assertTrue(CaseStore().data_dir is None)

    def test_load_case_file(self):
        model = CaseStore().load(os.path.join(utils.fixtures_dir, 'case4.m'))
        self.assertEqual('case4', model.name)
        self.assertEqual(4, model.n_buses)

    def test_load_snapshot(self):
        model = utils.path_grid(3)
        filename = os.path.join(self.workdir, 'path.json')
        casestore.grid.save_snapshot(model, filename)
        loaded = CaseStore().load(filename)
        self.assertTrue(np.array_equal(model.susceptance, loaded.susceptance))

    def test_export_then_load_from_data_dir(self):
        store = CaseStore(data_dir=self.workdir)
        written = store.export(self.workdir, ['case30'])
        self.assertEqual([os.path.join(self.workdir, 'ieee30.m')], written)
        self.assertFilesExist(['ieee30.m', 'sources'])

        with mock.patch('pmuplace.casestore.bundled_case') as bundled:
            model = store.load('ieee30')
        self.assertFalse(bundled.called)
        self.assertEqual(30, model.n_buses)
        expected = CaseStore(data_dir=None).load('ieee30')
        np.testing.assert_allclose(expected.susceptance, model.susceptance, rtol=1e-12)

    def test_tampered_file_is_rejected(self):
        store = CaseStore(data_dir=self.workdir)
        store.export(self.workdir, ['ieee39'])
        with open(os.path.join(self.workdir, 'ieee39.m'), 'a') as f:
            f.write('% edited\n')
        self.assertRaises(ChecksumError, store.load, 'ieee39')
        self.assertEqual([('ieee39.m', 'mismatch')], store.verify())

    def test_unrecorded_file_warns(self):
        shutil.copy(os.path.join(utils.fixtures_dir, 'case4.m'),
                    os.path.join(self.workdir, 'case4.m'))
        store = CaseStore(data_dir=self.workdir)
        with self.assertLogs('pmuplace.casestore', 'WARNING'):
            model = store.load('case4')
        self.assertEqual(4, model.n_buses)

    def test_verify(self):
        store = CaseStore(data_dir=self.workdir)
        store.export(self.workdir, ['ieee30', 'ieee57'])
        os.remove(os.path.join(self.workdir, 'ieee57.m'))
        self.assertEqual([('ieee30.m', 'ok'), ('ieee57.m', 'missing')],
                         store.verify(self.workdir))

    def test_verify_without_manifest(self):
        self.assertRaises(ConfigError, CaseStore(data_dir=self.workdir).verify)
        with mock.patch.dict('os.environ', {casestore.ENV_DATA_DIR: ''}):
            self.assertRaises(ConfigError, CaseStore(data_dir=None).verify)


if __name__ == '__main__':
    unittest.main()
