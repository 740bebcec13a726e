import tempfile
from pathlib import Path

from django.test import SimpleTestCase, override_settings

from confinement.config import RunConfig, load_config
from confinement.exceptions import ConfigError


class RunConfigTests(SimpleTestCase):

    def test_text_round_trip_is_exact(self):
        config = RunConfig(chi=0.1 + 0.2, nx=123, box_L=5.5, scheme='heun', seed=42)
        self.assertEqual(RunConfig.from_text(config.to_text()), config)

    def test_hash_is_stable_and_sensitive(self):
        config = RunConfig()
        self.assertEqual(config.config_hash(), RunConfig().config_hash())
        self.assertEqual(len(config.config_hash()), 12)
        self.assertNotEqual(config.config_hash(), config.replace(chi=0.25).config_hash())

    def test_text_grammar(self):
        text = "# comment\n[grid]\nchi = 0.25  # trailing comment\nnx = 50\n\n[kinetic]\nscheme = euler\n"
        config = RunConfig.from_text(text, base=RunConfig())
        self.assertEqual((config.chi, config.nx, config.scheme), (0.25, 50, 'euler'))

    def test_grammar_errors(self):
        for text in ("[nowhere]\nchi = 0.5\n", "chi = 0.5\n", "[grid]\nchi 0.5\n", "[kinetic]\nchi = 0.5\n",
                     "[grid]\nnx = 3.5\n"):
            with self.assertRaises(ConfigError, msg=text):
                RunConfig.from_text(text, base=RunConfig())

    def test_validation(self):
        for changes in ({'chi': 1.2}, {'cfl': 1.5}, {'scheme': 'rk4'}, {'ic': 'delta'}, {'variant': 'other'},
                        {'nx': 2}, {'entropy_epsilon': 1.0}, {'n_jobs': 0}):
            with self.assertRaises(ConfigError, msg=str(changes)):
                RunConfig().replace(**changes)

    def test_replace_ignores_unset_overrides(self):
        config = RunConfig(chi=0.3)
        self.assertEqual(config.replace(chi=None, nx=None), config)

    @override_settings(CHEMOTAXIS={'chi': 0.2, 'nx': 64})
    def test_defaults_come_from_settings(self):
        config = RunConfig.from_settings(nx=32)
        self.assertEqual((config.chi, config.nx), (0.2, 32))

    @override_settings(CHEMOTAXIS={})
    def test_load_config_layers(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'run.cfg'
            path.write_text("[grid]\nchi = 0.4\nnx = 80\n", encoding='utf-8')
            config = load_config(path, nx=90)
        self.assertEqual((config.chi, config.nx), (0.4, 90))

    def test_missing_config_file(self):
        with self.assertRaises(ConfigError):
            load_config('/nonexistent/run.cfg')

    def test_unknown_override(self):
        with self.assertRaises(ConfigError):
            RunConfig.from_settings(gamma=1.0)
