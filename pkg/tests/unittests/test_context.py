import unittest

from vdreg.context import Context, parse_bool, parse_list
from vdreg.exceptions import ConfigError


class TestContext(unittest.TestCase):
    def tearDown(self):
        Context.config = {}

    def test_getters_cast_config_values(self):
        Context.config = {'iterations': '200', 'mass': 2, 'include_new_cluster': 'off',
                          'methods': 'vdreg, cc_ls'}
        self.assertEqual(Context.get_int('iterations', 5), 200)
        self.assertEqual(Context.get_float('mass', 1.0), 2.0)
        self.assertFalse(Context.get_bool('include_new_cluster', True))
        self.assertEqual(Context.get_list('methods', []), ['vdreg', 'cc_ls'])

    def test_unparsable_values_are_config_errors(self):
        Context.config = {'iterations': 'many', 'mass': 'big', 'include_new_cluster': 'maybe'}
        with self.assertRaises(ConfigError) as context:
            Context.get_int('iterations', 5)
        self.assertIn('iterations', str(context.exception))
        with self.assertRaises(ConfigError):
            Context.get_float('mass', 1.0)
        with self.assertRaises(ConfigError):
            Context.get_bool('include_new_cluster', True)

    def test_absent_or_empty_values_use_the_default(self):
        Context.config = {'thin': ''}
        self.assertEqual(Context.get_int('thin', 3), 3)
        self.assertEqual(Context.get_int('burn_in', 7), 7)

    def test_parse_helpers(self):
        self.assertTrue(parse_bool('ON'))
        self.assertFalse(parse_bool(0))
        with self.assertRaises(ValueError):
            parse_bool('maybe')
        self.assertEqual(parse_list(['a ', 'b']), ['a', 'b'])
        self.assertEqual(parse_list('a,,b'), ['a', 'b'])

    def test_registries(self):
        with self.assertRaises(ConfigError):
            Context.get_model('bart')
        with self.assertRaises(ConfigError):
            Context.get_method('bart')
        self.assertEqual(Context.get_method('cc_ls').label, 'CC-LS')
