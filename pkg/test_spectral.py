"""
Tests for moments, Perron roots, growth rates, series and classification.
"""
import csv
import math
import os
import shutil
import tempfile
import unittest
from fractions import Fraction

import numpy as np

from brwlab import (BRWModel, DomainError, ExplicitFiniteLaw, FiniteSpace, ReducibleMatrixError, Verdict,
                    SurvivalReport, build_example, build_moment_kernel, classify_global_FBRW,
                    classify_local_survival, collatz_wielandt_check, convergence_parameter_sequence,
                    estimate_growth_rates, geometry_diagnostics, homogeneous_tree, lattice_Zd, n_step_moments,
                    perron_root, phi_gamma_series, radial_projection, window_perron_bound)
from brwlab.spectral import export_series


def _gw(pmf=None):
    return build_example("galton-watson", **({"pmf": pmf} if pmf else {})).model


class MomentTests(unittest.TestCase):
    """Tests for n_step_moments."""

    def test_lattice_return_moments(self):
        """Test that returns to the origin of Z^1 count central binomial paths."""
        series = n_step_moments(build_moment_kernel(lattice_Zd(1, 1.0)), (0,), 12)
        for n in range(0, 13, 2):
            self.assertAlmostEqual(series.moments[n], math.comb(n, n // 2), places=6)
        for n in range(1, 13, 2):
            self.assertEqual(series.moments[n], 0.0)
        self.assertEqual(series.period, 2)
        self.assertAlmostEqual(series.totals[10], 2.0 ** 10, places=6)
        self.assertTrue(series.exact)

    def test_target_vertex(self):
        """Test moments to another vertex."""
        series = n_step_moments(build_moment_kernel(lattice_Zd(1, 1.0)), (0,), 5, target=(1,))
        self.assertEqual(series.moments[1], 1.0)
        self.assertEqual(series.moments[3], 3.0)

    def test_long_horizon_rescales(self):
        """Test that long horizons switch to rescaled logarithms instead of overflowing."""
        series = n_step_moments(build_moment_kernel(_gw()), 0, 2000)
        self.assertFalse(series.exact)
        self.assertAlmostEqual(series.log_totals[2000], 2000 * math.log(1.5), places=6)

    def test_return_moments_are_supermultiplicative(self):
        """Test m^(a+b)_xx >= m^(a)_xx m^(b)_xx on every catalog example."""
        horizons = {"galton-watson": 40, "continuous-bp": 40, "two-type-bp": 30, "strip": 12,
                    "lambda-w-attained-chain": 30, "noext-pair": 30, "drift-chain": 30,
                    "binary-drift-chain": 30, "growing-drift-chain": 30, "square-tree-fgraph": 8,
                    "zd": 20, "tree": 8, "radial-tree": 12}
        for example_id, N in horizons.items():
            model = build_example(example_id).model
            logs = n_step_moments(build_moment_kernel(model), model.space.root, N).log_moments
            for a in range(1, N):
                for b in range(1, N - a + 1):
                    product = logs[a] + logs[b]
                    if np.isfinite(product):
                        self.assertGreaterEqual(logs[a + b], product - 1e-9 * max(1.0, abs(product)),
                                                f"{example_id}: a={a}, b={b}")

    def test_negative_horizon(self):
        """Test that a negative horizon is rejected."""
        with self.assertRaises(ValueError):
            n_step_moments(build_moment_kernel(_gw()), 0, -1)


class PerronTests(unittest.TestCase):
    """Tests for perron_root and window bounds."""

    def test_square_tree_quotient(self):
        """Test the Perron root of the quotient of the square tree."""
        result = perron_root([[3, 1], [1, 0]])
        self.assertAlmostEqual(result.value, (3 + math.sqrt(13)) / 2, places=10)
        self.assertLessEqual(result.lower, result.value)
        self.assertGreaterEqual(result.upper, result.value)
        self.assertTrue(result.converged)
        self.assertLess(result.residual, 1e-9)

    def test_periodic_matrix(self):
        """Test that a periodic matrix still converges."""
        result = perron_root(np.array([[0.0, 2.0], [2.0, 0.0]]))
        self.assertAlmostEqual(result.value, 2.0, places=10)

    def test_period_three_from_ones(self):
        """Test that a weighted 3-cycle converges from the ones vector."""
        result = perron_root([[0, 2, 0], [0, 0, 3], [4, 0, 0]])
        self.assertEqual(result.period, 3)
        self.assertTrue(result.converged)
        self.assertGreater(result.iterations, 1)
        self.assertAlmostEqual(result.value, 24 ** (1 / 3), places=9)
        self.assertLessEqual(result.lower, 24 ** (1 / 3) + 1e-12)
        self.assertGreaterEqual(result.upper, 24 ** (1 / 3) - 1e-12)
        self.assertLess(result.residual, 1e-8)

    def test_cycle_permutation(self):
        """Test that a 3-cycle permutation matrix has root 1."""
        result = perron_root([[0, 1, 0], [0, 0, 1], [1, 0, 0]])
        self.assertAlmostEqual(result.value, 1.0, places=12)
        self.assertEqual(result.period, 3)

    def test_bad_matrices(self):
        """Test reducible, negative and non-square inputs."""
        with self.assertRaises(ReducibleMatrixError):
            perron_root([[1, 1], [0, 1]])
        with self.assertRaises(ValueError):
            perron_root([[1, -1], [1, 1]])
        with self.assertRaises(ValueError):
            perron_root([[1, 1, 1], [1, 1, 1]])

    def test_bracket_holds_after_few_iterations(self):
        """Test that the Collatz-Wielandt bracket is valid even when stopped early."""
        rho = (3 + math.sqrt(13)) / 2
        result = perron_root([[3, 1], [1, 0]], max_iter=1)
        self.assertLessEqual(result.lower, rho + 1e-12)
        self.assertGreaterEqual(result.upper, rho - 1e-12)

    def test_window_perron_on_radial_tree(self):
        """Test that the radial image of T_3 gives a window bound close to 2 sqrt(2)."""
        image = radial_projection(homogeneous_tree(3, 1.0)).model
        bound = window_perron_bound(build_moment_kernel(image), image.space.root, 60)
        self.assertLess(bound.lower, 2 * math.sqrt(2))
        self.assertGreater(bound.lower, 2.80)


class GrowthRateTests(unittest.TestCase):
    """Tests for estimate_growth_rates."""

    def test_finite_model_is_exact(self):
        """Test that a finite complete class gives exact growth rates."""
        ms, mw = estimate_growth_rates(build_moment_kernel(_gw()), 0, 10)
        self.assertAlmostEqual(ms.exact, 1.5, places=10)
        self.assertAlmostEqual(mw.exact, 1.5, places=10)
        self.assertEqual(ms.best, ms.exact)
        self.assertEqual(ms.to_json()["quantity"], "M_s")

    def test_lattice_bounds(self):
        """Test the certified lower bound and weak estimate on Z^1."""
        ms, mw = estimate_growth_rates(build_moment_kernel(lattice_Zd(1, 1.0)), (0,), 200)
        self.assertIsNone(ms.exact)
        self.assertLessEqual(ms.lower, 2.0 + 1e-9)
        self.assertGreater(ms.lower, 1.99)
        self.assertAlmostEqual(mw.estimate, 2.0, places=8)
        self.assertEqual(ms.period, 2)

    def test_short_horizon(self):
        """Test that horizons below 2 are rejected."""
        with self.assertRaises(ValueError):
            estimate_growth_rates(build_moment_kernel(_gw()), 0, 1)

    def test_horizon_below_twice_the_period(self):
        """Test that a 3-cycle needs a horizon of at least 6."""
        laws = {i: ExplicitFiniteLaw([({(i + 1) % 3: 2}, 1)]) for i in range(3)}
        kernel = build_moment_kernel(BRWModel(FiniteSpace([0, 1, 2]), laws))
        with self.assertRaises(ValueError):
            estimate_growth_rates(kernel, 0, 5)
        ms, _ = estimate_growth_rates(kernel, 0, 6)
        self.assertEqual(ms.period, 3)
        self.assertAlmostEqual(ms.exact, 2.0, places=9)


class SeriesTests(unittest.TestCase):
    """Tests for phi_gamma_series and export_series."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir)

    def test_gw_series(self):
        """Test that Gamma = 1/(1 - Phi) on the Galton-Watson process."""
        s = phi_gamma_series(build_moment_kernel(_gw()), 0, t=0.5, N=80)
        self.assertAlmostEqual(s.phi, 0.75, places=12)
        self.assertAlmostEqual(s.gamma, 4.0, places=6)
        self.assertLess(s.residual, 1e-6)

    def test_lattice_first_return(self):
        """Test the first-return series of Z^1 against 1 - sqrt(1 - 4t^2)."""
        t = 0.25
        s = phi_gamma_series(build_moment_kernel(lattice_Zd(1, 1.0)), (0,), t=t, N=80)
        self.assertAlmostEqual(s.phi, 1 - math.sqrt(1 - 4 * t * t), places=10)
        self.assertAlmostEqual(s.gamma, 1 / math.sqrt(1 - 4 * t * t), places=10)

    def test_stop_above(self):
        """Test that the series stops once Phi exceeds the threshold."""
        s = phi_gamma_series(build_moment_kernel(_gw()), 0, t=1.0, N=50, stop_above=1.0)
        self.assertTrue(s.stopped_early)
        self.assertEqual(s.horizon, 1)
        self.assertIsNone(s.residual)

    def test_negative_t(self):
        """Test that negative t is rejected."""
        with self.assertRaises(DomainError):
            phi_gamma_series(build_moment_kernel(_gw()), 0, t=-1.0)

    def test_export(self):
        """Test that series rows are written as n,value."""
        series = n_step_moments(build_moment_kernel(lattice_Zd(1, 1.0)), (0,), 4)
        path = os.path.join(self.temp_dir, "moments.csv")
        self.assertEqual(export_series(path, series), 5)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        self.assertEqual(rows[0], ["n", "value"])
        self.assertEqual(float(rows[3][1]), 2.0)


class ClassificationTests(unittest.TestCase):
    """Tests for the local and global classifiers."""

    def test_gw_local(self):
        """Test that a supercritical branching process survives locally."""
        report = classify_local_survival(_gw(), 0, 5)
        self.assertEqual(report.local, Verdict.SURVIVES)

    def test_subcritical_local(self):
        """Test that a complete class with Perron root below 1 dies locally."""
        report = classify_local_survival(_gw({0: Fraction(1, 2), 1: Fraction(1, 4), 2: Fraction(1, 4)}), 0, 5)
        self.assertEqual(report.local, Verdict.DIES)
        self.assertAlmostEqual(report.evidence["class_perron"], 0.75, places=10)

    def test_lattice_local(self):
        """Test local survival on Z^1 above and at its critical value."""
        above = classify_local_survival(lattice_Zd(1, 0.6), (0,), 20)
        self.assertEqual(above.local, Verdict.SURVIVES)
        at = classify_local_survival(lattice_Zd(1, 0.5), (0,), 20)
        self.assertEqual(at.local, Verdict.UNDECIDED)
        self.assertLessEqual(at.evidence["M_s_lower"], 1.0 + 1e-9)

    def test_tree_local(self):
        """Test local survival on T_3 above its local critical value."""
        report = classify_local_survival(homogeneous_tree(3, 0.5), (), 8)
        self.assertEqual(report.local, Verdict.SURVIVES)

    def test_global_tree(self):
        """Test the global critical intensity of T_3."""
        report = classify_global_FBRW(homogeneous_tree(3, 1.0), lambda x: 0)
        self.assertEqual(report.global_, Verdict.SURVIVES)
        self.assertAlmostEqual(report.critical["lambda_w"], 1 / 3, places=10)
        self.assertEqual(report.critical["at_lambda_w"], "global extinction")

    def test_global_lattice_subcritical(self):
        """Test that Z^1 below 1/2 dies out globally."""
        report = classify_global_FBRW(lattice_Zd(1, 0.4), lambda x: 0)
        self.assertEqual(report.global_, Verdict.DIES)
        self.assertAlmostEqual(report.critical["lambda_w"], 0.5, places=10)

    def test_global_square_tree(self):
        """Test lambda_w of the square tree from its two-type quotient."""
        desc = build_example("square-tree-fgraph")
        report = classify_global_FBRW(desc.model, desc.type_map, radius=4)
        self.assertAlmostEqual(report.critical["lambda_w"], 2 / (3 + math.sqrt(13)), places=9)

    def test_report_merge(self):
        """Test that decided verdicts win when merging report fragments."""
        a = SurvivalReport("x", local=Verdict.SURVIVES, evidence={"a": 1})
        b = SurvivalReport("x", global_=Verdict.DIES, evidence={"b": 2}, notes=["n"])
        merged = a.merge(b)
        self.assertEqual(merged.local, Verdict.SURVIVES)
        self.assertEqual(merged.global_, Verdict.DIES)
        self.assertEqual(merged.strong_local, Verdict.UNDECIDED)
        self.assertEqual(merged.evidence, {"a": 1, "b": 2})
        self.assertEqual(merged.to_json()["notes"], ["n"])


class WitnessTests(unittest.TestCase):
    """Tests for Collatz-Wielandt checks and convergence parameters."""

    def test_attained_chain_witness(self):
        """Test the witness of the chain whose critical intensity is attained."""
        desc = build_example("lambda-w-attained-chain")
        kernel = build_moment_kernel(desc.extras["unit_model"])
        at_one = collatz_wielandt_check(kernel, 1.0, desc.extras["witness"], radius=30)
        self.assertTrue(at_one.verified)
        self.assertAlmostEqual(at_one.slack_at(0), 0.0, places=12)
        below = collatz_wielandt_check(kernel, 0.9, desc.extras["witness"], radius=30)
        self.assertFalse(below.verified)
        self.assertIsNotNone(below.failing)

    def test_linear_form(self):
        """Test the linear inequality with the constant vector on Z^1."""
        kernel = build_moment_kernel(lattice_Zd(1, 1.0))
        check = collatz_wielandt_check(kernel, 0.5, lambda x: 1.0, n=2, radius=5, form="linear")
        self.assertTrue(check.verified)
        self.assertAlmostEqual(check.min_slack, 0.0, places=12)

    def test_bad_witness(self):
        """Test that negative or oversized witnesses are rejected."""
        kernel = build_moment_kernel(lattice_Zd(1, 1.0))
        with self.assertRaises(DomainError):
            collatz_wielandt_check(kernel, 1.0, lambda x: -0.5, radius=3)
        with self.assertRaises(DomainError):
            collatz_wielandt_check(kernel, 1.0, lambda x: 1.5, radius=3)
        with self.assertRaises(ValueError):
            collatz_wielandt_check(kernel, 1.0, lambda x: 0.5, radius=3, form="other")

    def test_convergence_parameters_on_paths(self):
        """Test that nested windows of Z^1 give 1/(2 cos(pi/(2n+2)))."""
        kernel = build_moment_kernel(lattice_Zd(1, 1.0))
        windows = [[(i,) for i in range(-n, n + 1)] for n in range(1, 8)]
        steps = convergence_parameter_sequence(kernel, (0,), windows)
        for n, step in zip(range(1, 8), steps):
            size = 2 * n + 1
            self.assertEqual(step.size, size)
            self.assertAlmostEqual(step.R, 1 / (2 * math.cos(math.pi / (size + 1))), places=9)
        self.assertTrue(all(a.R >= b.R for a, b in zip(steps, steps[1:])))

    def test_window_must_contain_start(self):
        """Test that a window without x0 is rejected."""
        kernel = build_moment_kernel(lattice_Zd(1, 1.0))
        with self.assertRaises(DomainError):
            convergence_parameter_sequence(kernel, (0,), [[(1,), (2,)]])


class GeometryTests(unittest.TestCase):
    """Tests for geometry_diagnostics."""

    def test_lattice_isoperimetry(self):
        """Test the boundary-to-volume profile of Z^2 balls."""
        report = geometry_diagnostics(lattice_Zd(2, 1.0), radius=6)
        for r, ratio in enumerate(report.isoperimetric_profile):
            self.assertAlmostEqual(ratio, (8 * r + 4) / (2 * r * r + 2 * r + 1), places=12)
        self.assertAlmostEqual(report.isoperimetric_bound, report.isoperimetric_profile[-1])
        self.assertEqual(report.ball_sizes[2], 13)
        self.assertLess(report.reversibility_residual, 1e-12)

    def test_oriented_kernel(self):
        """Test that oriented kernels skip the symmetric checks with a note."""
        report = geometry_diagnostics(build_example("strip").model, radius=5)
        self.assertIsNone(report.isoperimetric_bound)
        self.assertIsNone(report.reversibility_residual)
        self.assertTrue(report.notes)

    def test_radial_tree_uniform_growth(self):
        """Test uniform two-step growth on the radial tree with branching (1, 2)."""
        report = geometry_diagnostics(build_example("radial-tree").model, radius=8, nbar=2, eps=1.2,
                                      K_w=math.sqrt(6))
        self.assertTrue(report.uniform_growth)
        self.assertIsNotNone(report.uniform_growth_worst)
        self.assertIn("uniform_growth", report.to_json())


if __name__ == '__main__':
    unittest.main()
