import unittest

from src.config import RunConfig, resolve_config
from src.errors import ConfigError, PackingError
from src.hard_sphere_flow import MAX_EVENTS


class TestResolveConfig(unittest.TestCase):
    def test_defaults(self):
        cfg = resolve_config("simulate", {}, {})
        self.assertEqual(cfg.n, 20)
        self.assertEqual(cfg.dim, 2)
        self.assertEqual(cfg.max_events, MAX_EVENTS)
        self.assertTrue(cfg.to_dispersal)

    def test_precedence(self):
        cfg = resolve_config(
            "ensemble",
            {"n": 12, "seed": 3, "samples": 50},
            {"n": 8, "seed": None, "samples": None},
        )
        self.assertEqual(cfg.n, 8)
        self.assertEqual(cfg.seed, 3)
        self.assertEqual(cfg.samples, 50)

    def test_numeric_strings_are_coerced(self):
        cfg = resolve_config(
            "simulate", {"tol_time": "1e-9", "n": "4", "t_end": 2}, {}
        )
        self.assertEqual(cfg.tol_time, 1e-9)
        self.assertEqual(cfg.n, 4)
        self.assertIsInstance(cfg.t_end, float)
        self.assertFalse(cfg.to_dispersal)

    def test_s_order_scalar(self):
        cfg = resolve_config("ensemble", {"s_order": 3}, {})
        self.assertEqual(cfg.s_order, [3])

    def test_unknown_key(self):
        with self.assertRaises(ConfigError):
            resolve_config("simulate", {"particles": 4}, {})

    def test_bad_values(self):
        bad = [
            {"n": 0},
            {"dim": 1},
            {"n": "four"},
            {"samples": 2.5},
            {"velocity_law": "maxwellian"},
            {"tol_contact": 0},
            {"t_end": -1.0},
            {"t_end": 1.0, "until_dispersal": True},
        ]
        for file_config in bad:
            with self.subTest(file_config=file_config):
                with self.assertRaises(ConfigError):
                    resolve_config("simulate", file_config, {})

    def test_marginal_order_range(self):
        with self.assertRaises(ConfigError):
            resolve_config("ensemble", {"n": 5, "s_order": [6]}, {})
        with self.assertRaises(ConfigError):
            resolve_config("ensemble", {"n": 5, "s_order": [1]}, {})
        # Only ensemble mode looks at s_order
        resolve_config("verify", {"n": 5, "s_order": [6]}, {})

    def test_unknown_mode(self):
        with self.assertRaises(ConfigError):
            RunConfig(mode="replay").validate()


class TestRunConfigBuilders(unittest.TestCase):
    def test_flow_settings(self):
        cfg = RunConfig(tol_time=1e-8, max_events=50, fault_inject=True)
        settings = cfg.flow_settings()
        self.assertEqual(settings.tolerances.time, 1e-8)
        self.assertEqual(settings.max_events, 50)
        self.assertTrue(settings.fault_inject)

    def test_ensemble_packing(self):
        cfg = RunConfig(n=1000, radius=5.0)
        with self.assertRaises(PackingError):
            cfg.ensemble()

    def test_to_dict(self):
        cfg = RunConfig(n=3)
        self.assertEqual(cfg.to_dict()["n"], 3)
        self.assertIn("s_order", cfg.to_dict())


if __name__ == "__main__":
    unittest.main()
