#!/usr/bin/env python3
"""
Example usage of brwlab on a few catalog models.
"""

from brwlab import (TrialPlan, build_example, build_moment_kernel, classify_local_survival,
                    estimate_growth_rates, estimate_survival, global_extinction_bracket, homogeneous_tree,
                    never_hit_bracket)


def main():
    # Galton-Watson process: 0 or 2 children with probabilities 1/4 and 3/4
    gw = build_example("galton-watson")

    print("=== Galton-Watson process ===")
    lo, hi = global_extinction_bracket(gw.model).at(0)
    print(f"Extinction probability: [{lo:.10f}, {hi:.10f}]")

    plan = TrialPlan(trials=2000, horizon=60, population_cap=2000, seed=1)
    est = estimate_survival(gw.model, 0, plan)
    print(f"Simulated survival: {est.estimate:.3f}  (95% CI {est.ci_low:.3f} - {est.ci_high:.3f})")

    # Two types alternating generation by generation
    two_type = build_example("two-type-bp")

    print("\n=== Two-type process ===")
    q = global_extinction_bracket(two_type.model)
    print(f"Extinction from type 1: {q.at(1)[0]:.6f}, from type 2: {q.at(2)[0]:.6f}")
    hit = never_hit_bracket(two_type.model, [1])
    print(f"Probability type 2 never produces a type 1 descendant: {hit.at(2)[0]:.6f}")

    # Regular tree of degree 3 between the two critical values
    print("\n=== Homogeneous tree T_3, lambda = 0.4 ===")
    tree = homogeneous_tree(3, 0.4)
    report = classify_local_survival(tree, (), N=8)
    print(f"Local survival at the root: {report.local.value}")
    strong, weak = estimate_growth_rates(build_moment_kernel(tree), (), 8)
    print(f"Growth rate lower bound: {strong.lower:.4f} (2 sqrt(2) * 0.4 = {2 * 2 ** 0.5 * 0.4:.4f})")
    print(f"Weak growth rate: {weak.estimate:.4f}")

    print("\n=== Done ===")


if __name__ == "__main__":
    main()
