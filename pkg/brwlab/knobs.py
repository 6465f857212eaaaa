from dataclasses import dataclass


@dataclass
class SolverKnobs:
    """
    Configuration for the fixed-point solvers in ``brwlab.genfun``.

    Attributes:
        tol (float): Stop when the sup-norm residual ``||G(z) - z||`` falls
            below this value. Default: 1e-10.
        max_iter (int): Hard limit on iterations. Hitting it is reported on
            the returned vector, never raised. Default: 10**6.
        check_monotone (bool): Assert after every sweep that ascending
            iterations never decrease and descending ones never increase.
        monotone_slack (float): Rounding allowance for the monotonicity check.
        max_ball_vertices (int): Refuse truncations larger than this.

    Example:
        >>> knobs = SolverKnobs(tol=1e-12)
        >>> vec = global_extinction_bracket(model, radius=20, knobs=knobs)
    """
    tol: float = 1e-10
    max_iter: int = 1_000_000
    check_monotone: bool = True
    monotone_slack: float = 1e-13
    max_ball_vertices: int = 2_000_000

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")
        if self.monotone_slack < 0:
            raise ValueError(f"monotone_slack must be nonnegative, got {self.monotone_slack}")


@dataclass
class SpectralKnobs:
    """
    Configuration for power iterations and growth-rate estimates.

    Attributes:
        tol (float): Residual target ``||Mv - rho v|| <= tol ||v||`` for
            Perron roots. Default: 1e-12.
        max_iter (int): Iteration limit for one power iteration.
        tail_fraction (float): The weak growth rate is estimated as the
            minimum of ``(T^n)^(1/n)`` over ``n`` in ``[tail_fraction*N, N]``.
        window_perron (bool): Also bound the strong growth rate from below
            with the Perron root of the class of ``x`` inside the ball.
        window_max_iter (int): Iteration limit for that window bound.
        max_ball_vertices (int): Refuse balls larger than this.
    """
    tol: float = 1e-12
    max_iter: int = 500_000
    tail_fraction: float = 0.5
    window_perron: bool = True
    window_max_iter: int = 20_000
    max_ball_vertices: int = 2_000_000

    def __post_init__(self) -> None:
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if not 0.0 < self.tail_fraction <= 1.0:
            raise ValueError(f"tail_fraction must be in (0, 1], got {self.tail_fraction}")
        if self.max_iter < 1 or self.window_max_iter < 1:
            raise ValueError("iteration limits must be at least 1")
