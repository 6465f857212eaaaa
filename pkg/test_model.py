"""
Tests for vertex spaces, reproduction laws, balls, moment kernels and class analysis.
"""
import csv
import os
import shutil
import tempfile
import unittest
from fractions import Fraction

from brwlab import (AssumptionViolationError, BRWModel, ContinuousCounterpartLaw, ExplicitFiniteLaw,
                    FiniteOffspring, FiniteSpace, GeometricOffspring, IndependentDiffusionLaw,
                    ModelRejectedError, MomentKernel, NotLocallyIsomorphicError, OffspringConfig,
                    TruncationError, analyze_digraph, build_moment_kernel, discrete_counterpart,
                    homogeneous_tree, lattice_Zd, project_local_isomorphism, validate_model)


def _gw(p2=Fraction(3, 4)):
    law = ExplicitFiniteLaw([({"x": 2}, p2), ({}, 1 - p2)])
    return BRWModel(FiniteSpace(["x"]), {"x": law}, name="gw")


class OffspringConfigTests(unittest.TestCase):
    """Tests for OffspringConfig."""

    def test_zero_counts_dropped(self):
        """Test that zero counts do not affect equality or totals."""
        a = OffspringConfig({"a": 2, "b": 0})
        b = OffspringConfig({"a": 2})
        self.assertEqual(a, b)
        self.assertEqual(hash(a), hash(b))
        self.assertEqual(a.total, 2)

    def test_negative_count_rejected(self):
        """Test that negative and fractional counts are rejected."""
        with self.assertRaises(ModelRejectedError):
            OffspringConfig({"a": -1})
        with self.assertRaises(ModelRejectedError):
            OffspringConfig({"a": 1.5})

    def test_mapped_merges_fibers(self):
        """Test that mapping along a fiber map adds counts landing on one image."""
        cfg = OffspringConfig({"a": 1, "b": 2, "c": 1}).mapped(lambda y: "ab" if y in "ab" else y)
        self.assertEqual(cfg.get("ab"), 3)
        self.assertEqual(cfg.get("c"), 1)
        self.assertEqual(cfg.inside({"ab"}), 3)


class OffspringLawTests(unittest.TestCase):
    """Tests for offspring-count laws."""

    def test_finite_offspring_parses_fractions(self):
        """Test that rational strings stay exact."""
        law = FiniteOffspring({0: "1/4", 2: "3/4"})
        self.assertEqual(law.mean, Fraction(3, 2))
        self.assertEqual(law.pgf(Fraction(1, 3)), Fraction(1, 3))
        self.assertEqual(law.normalization_error(), 0.0)

    def test_finite_offspring_rejects_bad_input(self):
        """Test that negative probabilities and empty laws are rejected."""
        with self.assertRaises(ModelRejectedError):
            FiniteOffspring({0: -0.1, 1: 1.1})
        with self.assertRaises(ModelRejectedError):
            FiniteOffspring({})

    def test_geometric_offspring(self):
        """Test the geometric law by its mean."""
        law = GeometricOffspring(2)
        self.assertEqual(law.ratio, Fraction(2, 3))
        self.assertEqual(law.pmf(0), Fraction(1, 3))
        self.assertEqual(law.pgf(1), 1)
        with self.assertRaises(ModelRejectedError):
            GeometricOffspring(-1)

    def test_prob_one_inside_agrees(self):
        """Test the closed form for one child inside against a direct sum."""
        law = GeometricOffspring(Fraction(3, 2))
        a = 0.3
        r = float(law.ratio)
        direct = sum((1 - r) * r ** k * k * a * (1 - a) ** (k - 1) for k in range(1, 400))
        self.assertAlmostEqual(law.prob_one_inside(a), direct, places=12)


class ReproductionLawTests(unittest.TestCase):
    """Tests for the reproduction law families."""

    def test_explicit_law_generating_function_is_exact(self):
        """Test that G is exact on rational inputs."""
        law = ExplicitFiniteLaw([({"x": 2}, Fraction(3, 4)), ({}, Fraction(1, 4))])
        self.assertEqual(law.G(lambda y: Fraction(1, 3)), Fraction(1, 3))
        self.assertEqual(law.mean_row(), {"x": 1.5})
        self.assertEqual(law.support(), ("x",))

    def test_explicit_law_merges_duplicates(self):
        """Test that repeated configurations add their probabilities."""
        law = ExplicitFiniteLaw([({"x": 1}, 0.25), ({"x": 1}, 0.25), ({}, 0.5)])
        self.assertEqual(len(law.configs), 2)
        self.assertAlmostEqual(law.prob_one_child_in({"x"}), 0.5)

    def test_independent_diffusion_law(self):
        """Test moments and pushforward of an independently diffusing law."""
        law = IndependentDiffusionLaw(FiniteOffspring({2: 1}), {"a": "1/2", "b": "1/2"})
        self.assertEqual(law.mean_row(), {"a": 1.0, "b": 1.0})
        self.assertEqual(law.G(lambda y: 1), 1)
        pushed = law.pushforward(lambda y: 0)
        self.assertEqual(pushed.mean_row(), {0: 2.0})
        self.assertTrue(pushed.matches(IndependentDiffusionLaw(FiniteOffspring({2: 1}), {0: 1}), 1e-12))

    def test_continuous_counterpart_first_event_shares_fixed_point(self):
        """Test that G and the first-event function H agree at the fixed point."""
        law = ContinuousCounterpartLaw({"x": 2}, 1)
        half = Fraction(1, 2)
        self.assertEqual(law.G(lambda y: half), half)
        self.assertEqual(law.H(lambda y: half, "x"), half)
        self.assertEqual(law.mean_row(), {"x": 2.0})

    def test_continuous_counterpart_rejects_bad_input(self):
        """Test that a nonpositive intensity or a negative rate is rejected."""
        with self.assertRaises(ModelRejectedError):
            ContinuousCounterpartLaw({"x": 1}, 0)
        with self.assertRaises(ModelRejectedError):
            ContinuousCounterpartLaw({"x": -1}, 1)


class ModelTests(unittest.TestCase):
    """Tests for BRWModel, balls and the moment kernel."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir)

    def test_finite_space_validation(self):
        """Test that empty spaces, duplicates and foreign roots are rejected."""
        with self.assertRaises(ModelRejectedError):
            FiniteSpace([])
        with self.assertRaises(ModelRejectedError):
            FiniteSpace(["a", "a"])
        with self.assertRaises(ModelRejectedError):
            FiniteSpace(["a"], root="b")

    def test_missing_law_is_null_on_finite_space(self):
        """Test that vertices without a law on a finite space have no children."""
        model = BRWModel(FiniteSpace(["a", "b"]), {"a": ExplicitFiniteLaw([({"b": 1}, 1)])})
        self.assertEqual(model.out_neighbors("b"), ())
        with self.assertRaises(ModelRejectedError):
            model.law("c")

    def test_truncation_must_be_positive(self):
        """Test that a truncation of zero particles per site is rejected."""
        with self.assertRaises(ModelRejectedError):
            BRWModel(FiniteSpace(["x"]), {}, truncation=0)

    def test_ball_on_lattice(self):
        """Test the breadth-first ball of Z^1 and its leaky boundary."""
        model = lattice_Zd(1, 1.0)
        ball = model.ball(None, 3)
        self.assertEqual(len(ball), 7)
        self.assertEqual(ball.labels[0], (0,))
        self.assertEqual(int(ball.dist.max()), 3)
        leaky = {ball.labels[i] for i in range(len(ball)) if ball.leaky[i]}
        self.assertEqual(leaky, {(3,), (-3,)})
        self.assertIn((2,), ball)
        self.assertEqual(model.id_of((0,)), 0)

    def test_ball_is_cached(self):
        """Test that the same ball object is returned twice."""
        model = lattice_Zd(2, 0.5)
        self.assertIs(model.ball(None, 2), model.ball(None, 2))

    def test_ball_limits(self):
        """Test that caps and vertex budgets raise TruncationError."""
        model = lattice_Zd(1, 1.0, cap=5)
        with self.assertRaises(TruncationError):
            model.ball(None, 6)
        with self.assertRaises(TruncationError):
            lattice_Zd(2, 1.0).ball(None, 10, max_vertices=50)
        with self.assertRaises(ValueError):
            model.ball(None, -1)

    def test_moment_kernel_rows(self):
        """Test kernel rows and their sums."""
        kernel = build_moment_kernel(lattice_Zd(2, 0.5))
        self.assertEqual(kernel.row_sum((0, 0)), 2.0)
        self.assertEqual(kernel.entry((0, 0), (1, 0)), 0.5)
        self.assertEqual(kernel.entry((0, 0), (2, 0)), 0.0)

    def test_moment_kernel_shared(self):
        """Test that a model carries one kernel instance."""
        model = _gw()
        self.assertIs(build_moment_kernel(model), build_moment_kernel(model))

    def test_oversized_rows_rejected(self):
        """Test that rows above the bound are rejected."""
        model = _gw()
        kernel = MomentKernel(model, max_row_sum=1.0)
        with self.assertRaises(ModelRejectedError):
            kernel.check_rows(model.ball(None, 1))

    def test_matrix_with_outside_column(self):
        """Test that mass leaving the ball is collected in the last column."""
        model = lattice_Zd(1, 1.0)
        ball = model.ball(None, 1)
        mat = build_moment_kernel(model).matrix(ball, outside=True).toarray()
        self.assertEqual(mat.shape, (3, 4))
        self.assertEqual(mat[:, 3].sum(), 2.0)
        self.assertTrue(build_moment_kernel(model).is_non_oriented(ball))

    def test_kernel_to_csv(self):
        """Test that the kernel restriction is written with dense ids."""
        model = lattice_Zd(1, 1.0)
        path = os.path.join(self.temp_dir, "kernel.csv")
        count = build_moment_kernel(model).to_csv(path, 1)
        self.assertEqual(count, 6)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        self.assertEqual(rows[0], ["src", "dst", "value"])
        self.assertEqual(len(rows), 7)
        self.assertEqual(rows[1][0], "0")

    def test_with_dynamics_shares_laws(self):
        """Test that a truncated twin reuses the law cache."""
        model = _gw()
        twin = model.with_dynamics(truncation=5)
        self.assertEqual(twin.truncation, 5)
        self.assertIs(twin.law("x"), model.law("x"))


class DiscreteCounterpartTests(unittest.TestCase):
    """Tests for discrete_counterpart."""

    def test_finite_rates(self):
        """Test that the counterpart of a rate family has kernel lam * K."""
        model = discrete_counterpart({"x": {"x": 2}}, 1)
        self.assertEqual(model.law("x").offspring.pmf(0), Fraction(1, 3))
        self.assertEqual(build_moment_kernel(model).row("x"), {"x": 2.0})

    def test_vertex_without_rates_has_no_children(self):
        """Test that a rate target without its own row gets the null law."""
        model = discrete_counterpart({"a": {"b": 1}}, Fraction(1, 2))
        self.assertEqual(model.space.labels, ("a", "b"))
        self.assertEqual(model.law("b").G(lambda y: 0), 1)

    def test_rejections(self):
        """Test that bad intensities and lazy families without a root are rejected."""
        with self.assertRaises(ModelRejectedError):
            discrete_counterpart({"x": {"x": 1}}, 0)
        with self.assertRaises(ModelRejectedError):
            discrete_counterpart(lambda x: {x: 1}, 1)


class ClassAnalysisTests(unittest.TestCase):
    """Tests for analyze_digraph and validate_model."""

    def test_lattice_period(self):
        """Test that Z^1 restricted to a ball is one class of period 2."""
        dec = analyze_digraph(lattice_Zd(1, 1.0), 5)
        self.assertEqual([c.period for c in dec.classes], [2])
        self.assertFalse(dec.classes[0].complete)

    def test_reducible_chain(self):
        """Test classes, triviality and reachability on a reducible finite model."""
        laws = {
            "a": ExplicitFiniteLaw([({"a": 1, "b": 1}, Fraction(1, 2)), ({}, Fraction(1, 2))]),
            "b": ExplicitFiniteLaw([({"c": 2}, 1)]),
            "c": ExplicitFiniteLaw([({"c": 2}, Fraction(1, 2)), ({}, Fraction(1, 2))]),
        }
        model = BRWModel(FiniteSpace(["a", "b", "c"]), laws)
        dec = analyze_digraph(model, 3)
        self.assertEqual(len(dec.classes), 3)
        self.assertTrue(dec.class_of("b").trivial)
        self.assertEqual(dec.class_of("b").period, 0)
        self.assertEqual(dec.class_of("a").period, 1)
        self.assertTrue(all(c.complete for c in dec.classes))
        reach = dec.reachable_classes("a")
        self.assertEqual(len(reach), 3)
        self.assertEqual(dec.reachable_classes("c"), [dec.class_index["c"]])

    def test_validate_accepts_gw(self):
        """Test that a normalized supercritical process passes validation."""
        report = validate_model(_gw())
        self.assertEqual(report.vertices, 1)
        self.assertEqual(report.max_row_sum, 1.5)
        self.assertEqual(report.to_dict()["classes"], 1)

    def test_validate_rejects_unnormalized(self):
        """Test that a law with total mass below one is rejected."""
        law = ExplicitFiniteLaw([({"x": 2}, 0.5), ({}, 0.25)])
        with self.assertRaises(ModelRejectedError):
            validate_model(BRWModel(FiniteSpace(["x"]), {"x": law}))

    def test_validate_rejects_one_child_classes(self):
        """Test that a class where everyone has exactly one child inside is rejected."""
        laws = {"a": ExplicitFiniteLaw([({"b": 1}, 1)]), "b": ExplicitFiniteLaw([({"a": 1}, 1)])}
        with self.assertRaises(AssumptionViolationError) as ctx:
            validate_model(BRWModel(FiniteSpace(["a", "b"]), laws))
        self.assertEqual(set(ctx.exception.members), {"a", "b"})

    def test_validate_lazy_needs_radius(self):
        """Test that lazy spaces need an explicit radius and flag boundary classes."""
        model = lattice_Zd(1, 1.0)
        with self.assertRaises(ValueError):
            validate_model(model)
        report = validate_model(model, 4)
        self.assertEqual(report.boundary_classes, 1)
        self.assertTrue(report.notes)


class ProjectionTests(unittest.TestCase):
    """Tests for project_local_isomorphism."""

    def test_tree_onto_point(self):
        """Test that the regular tree projects onto a single vertex."""
        proj = project_local_isomorphism(homogeneous_tree(3, 1.0), lambda x: 0, 4)
        self.assertEqual(proj.model.law(0).mean_row(), {0: 3.0})
        self.assertLess(proj.residual, 1e-12)
        self.assertEqual(sum(proj.fibers.values()), len(homogeneous_tree(3, 1.0).ball(None, 4)))

    def test_mismatched_fiber(self):
        """Test that different pushforward laws in one fiber raise."""
        laws = {
            "a": ExplicitFiniteLaw([({"a": 2}, Fraction(1, 2)), ({}, Fraction(1, 2))]),
            "b": ExplicitFiniteLaw([({"b": 1}, 1)]),
        }
        model = BRWModel(FiniteSpace(["a", "b"]), laws)
        with self.assertRaises(NotLocallyIsomorphicError):
            project_local_isomorphism(model, lambda x: 0, 2)

    def test_missing_fiber_needs_larger_radius(self):
        """Test that a fiber reached only outside the ball raises TruncationError."""
        with self.assertRaises(TruncationError):
            project_local_isomorphism(lattice_Zd(1, 1.0), lambda x: x[0], 2)


if __name__ == '__main__':
    unittest.main()
