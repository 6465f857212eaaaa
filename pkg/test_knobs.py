"""
Tests for SolverKnobs, SpectralKnobs and TrialPlan configuration.
"""
import unittest
from fractions import Fraction

from brwlab import (SolverKnobs, SpectralKnobs, TrialPlan, ExplicitFiniteLaw, BRWModel, FiniteSpace,
                    global_extinction_bracket, perron_root)


def _gw():
    law = ExplicitFiniteLaw([({0: 2}, Fraction(3, 4)), ({}, Fraction(1, 4))])
    return BRWModel(FiniteSpace([0]), {0: law})


class SolverKnobsTests(unittest.TestCase):
    """Tests for SolverKnobs configuration."""

    def test_default_knobs(self):
        """Test that default knobs carry the documented values."""
        knobs = SolverKnobs()
        self.assertEqual(knobs.tol, 1e-10)
        self.assertEqual(knobs.max_iter, 1_000_000)
        self.assertTrue(knobs.check_monotone)

    def test_invalid_values_rejected(self):
        """Test that nonpositive tolerances and iteration limits are rejected."""
        with self.assertRaises(ValueError):
            SolverKnobs(tol=0.0)
        with self.assertRaises(ValueError):
            SolverKnobs(max_iter=0)
        with self.assertRaises(ValueError):
            SolverKnobs(monotone_slack=-1.0)

    def test_iteration_limit_reported_not_raised(self):
        """Test that hitting max_iter shows up on the result instead of raising."""
        vec = global_extinction_bracket(_gw(), knobs=SolverKnobs(max_iter=3))
        self.assertFalse(vec.converged)
        self.assertLessEqual(vec.iterations[0], 3)
        self.assertLess(vec.at(0)[0], 1.0 / 3.0)

    def test_tighter_tolerance(self):
        """Test that a tighter tolerance lands closer to the fixed point."""
        loose = global_extinction_bracket(_gw(), knobs=SolverKnobs(tol=1e-4))
        tight = global_extinction_bracket(_gw(), knobs=SolverKnobs(tol=1e-13))
        self.assertLessEqual(abs(tight.at(0)[0] - 1 / 3), abs(loose.at(0)[0] - 1 / 3))
        self.assertAlmostEqual(tight.at(0)[0], 1 / 3, places=11)


class SpectralKnobsTests(unittest.TestCase):
    """Tests for SpectralKnobs configuration."""

    def test_default_knobs(self):
        """Test that default knobs carry the documented values."""
        knobs = SpectralKnobs()
        self.assertEqual(knobs.tol, 1e-12)
        self.assertEqual(knobs.tail_fraction, 0.5)
        self.assertTrue(knobs.window_perron)

    def test_invalid_tail_fraction(self):
        """Test that tail fractions outside (0, 1] are rejected."""
        with self.assertRaises(ValueError):
            SpectralKnobs(tail_fraction=0.0)
        with self.assertRaises(ValueError):
            SpectralKnobs(tail_fraction=1.5)

    def test_knobs_passed_to_perron(self):
        """Test that perron_root accepts knobs in place of explicit arguments."""
        result = perron_root([[3.0, 1.0], [1.0, 0.0]], knobs=SpectralKnobs(tol=1e-13))
        self.assertAlmostEqual(result.value, (3 + 13 ** 0.5) / 2, places=10)


class TrialPlanTests(unittest.TestCase):
    """Tests for TrialPlan validation."""

    def test_defaults(self):
        """Test the documented defaults."""
        plan = TrialPlan()
        self.assertEqual(plan.population_cap, 10 ** 7)
        self.assertIsNone(plan.truncation)
        self.assertEqual(plan.workers, 1)
        self.assertEqual(plan.local_window, 0.25)

    def test_invalid_plans(self):
        """Test that out-of-range fields raise ValueError naming the field."""
        for kwargs, field in [({"horizon": 0}, "horizon"), ({"trials": -1}, "trials"),
                              ({"truncation": 0}, "truncation"), ({"workers": 0}, "workers"),
                              ({"local_window": 0.0}, "local_window"),
                              ({"population_cap": 0}, "population_cap")]:
            with self.assertRaises(ValueError) as ctx:
                TrialPlan(**kwargs)
            self.assertIn(field, str(ctx.exception))


if __name__ == '__main__':
    unittest.main()
