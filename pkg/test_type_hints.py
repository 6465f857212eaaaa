#!/usr/bin/env python
"""
Test script to verify type hints work correctly with mypy and in IDEs.

Run ``mypy test_type_hints.py`` to type-check the public API as used here.
"""

from typing import Dict, List, Optional, Tuple

from brwlab import (BRWModel, ExtinctionVector, MomentKernel, SurvivalEstimate, SurvivalReport, TrialPlan,
                    build_example, build_moment_kernel, classify_local_survival, estimate_survival,
                    global_extinction_bracket)
from brwlab.model import Label
from brwlab.spaces import ExampleDescriptor


def test_analysis_types() -> None:
    """Test extinction and classification with type hints."""
    desc: ExampleDescriptor = build_example("two-type-bp")
    model: BRWModel = desc.model

    vec: ExtinctionVector = global_extinction_bracket(model)
    bracket: Tuple[float, float] = vec.at(1)
    print(f"Extinction bracket at 1: {bracket}")

    kernel: MomentKernel = build_moment_kernel(model)
    row: Dict[Label, float] = kernel.row(1)
    print(f"Mean row at 1: {row}")

    report: SurvivalReport = classify_local_survival(model, 1, 10)
    notes: List[str] = list(report.notes)
    print(f"Local survival: {report.local.value} ({len(notes)} notes)")


def test_simulation_types() -> None:
    """Test Monte Carlo estimates with type hints."""
    plan: TrialPlan = TrialPlan(trials=20, horizon=10, seed=1)
    estimate: SurvivalEstimate = estimate_survival(build_example("galton-watson").model, 0, plan)
    note: Optional[str] = estimate.note
    print(f"Survival estimate: {estimate.estimate:.3f} in [{estimate.ci_low:.3f}, {estimate.ci_high:.3f}]")
    if note:
        print(f"Note: {note}")


if __name__ == "__main__":
    print("Testing analysis type hints...")
    test_analysis_types()
    print("\nTesting simulation type hints...")
    test_simulation_types()
    print("\n✓ All type hints work correctly!")
