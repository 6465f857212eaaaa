#!/usr/bin/env python
"""
Example demonstrating custom configuration with SolverKnobs and SpectralKnobs.
"""

from brwlab import (SolverKnobs, SpectralKnobs, build_example, build_moment_kernel, global_extinction_bracket,
                    lattice_Zd, phi_gamma_series)


def demo_solver_knobs():
    """Demonstrate SolverKnobs customization."""
    print("=" * 60)
    print("Solver Knobs Demo")
    print("=" * 60)

    model = lattice_Zd(1, 1.0)

    print("\n1. Default Configuration:")
    default = SolverKnobs()
    vec = global_extinction_bracket(model, 6, default)
    print(f"   Tolerance: {default.tol}")
    print(f"   Bracket at the origin: {vec.at((0,))}, {vec.iterations} iterations")

    print("\n2. Loose Configuration:")
    loose = SolverKnobs(tol=1e-4, check_monotone=False)
    vec = global_extinction_bracket(model, 6, loose)
    print(f"   Tolerance: {loose.tol}")
    print(f"   Bracket at the origin: {vec.at((0,))}, {vec.iterations} iterations")

    print("\n3. Invalid Configuration:")
    try:
        SolverKnobs(tol=0.0)
    except ValueError as exc:
        print(f"   Rejected: {exc}")


def demo_spectral_knobs():
    """Demonstrate SpectralKnobs customization."""
    print("\n" + "=" * 60)
    print("Spectral Knobs Demo")
    print("=" * 60)

    kernel = build_moment_kernel(build_example("galton-watson").model)
    for knobs in (SpectralKnobs(), SpectralKnobs(tol=1e-6, max_iter=50)):
        series = phi_gamma_series(kernel, 0, 0, 0.5, 40, knobs=knobs)
        print(f"\n   tol={knobs.tol:g} max_iter={knobs.max_iter}")
        print(f"   phi(0.5) = {series.phi:.6f}, gamma(0.5) = {series.gamma:.6f}")


if __name__ == "__main__":
    demo_solver_knobs()
    demo_spectral_knobs()
