"""
Moment growth, first-return series, Perron roots and survival verdicts.

Verdicts are only issued from finite certificates: a partial sum of the
first-return series above 1, or the Perron root of a class known to be
complete. Everything else is reported as a bound or as a heuristic estimate.
"""
import csv
import enum
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Deque, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .errors import DomainError, NumericalError, ReducibleMatrixError
from .knobs import SpectralKnobs
from .model import (Ball, BRWModel, ContinuousCounterpartLaw, FiniteSpace, Label, MomentKernel,
                    analyze_digraph, build_moment_kernel, project_local_isomorphism)

logger = logging.getLogger(__name__)

_RESCALE_HIGH = 1e150
_RESCALE_LOW = 1e-150


class Verdict(enum.Enum):
    SURVIVES = "survives"
    DIES = "dies"
    HOLDS = "holds"
    FAILS = "fails"
    UNDECIDED = "undecided"


# ---------------------------------------------------------------------------
# Result types
# ---------------------------------------------------------------------------

@dataclass
class MomentSeries:
    """
    ``m^(n)_{x,target}`` and ``T^n_x = sum_y m^(n)_{xy}`` for ``n = 0..N``.

    Values are kept as natural logarithms (``-inf`` for zero) so long horizons
    do not overflow. ``exact`` is False once a rescaling step happened.
    """
    x: Label
    target: Label
    horizon: int
    log_moments: np.ndarray
    log_totals: np.ndarray
    exact: bool

    @property
    def moments(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_moments)

    @property
    def totals(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_totals)

    @property
    def period(self) -> int:
        """gcd of the return times seen up to the horizon (0 if none)."""
        g = 0
        for n in np.flatnonzero(np.isfinite(self.log_moments)):
            if n:
                g = math.gcd(g, int(n))
        return g

    def roots(self) -> np.ndarray:
        """``(m^(n))^(1/n)`` for ``n >= 1`` (0 where the moment vanishes)."""
        n = np.arange(1, self.horizon + 1)
        with np.errstate(over="ignore"):
            return np.exp(self.log_moments[1:] / n)

    def rows(self) -> List[Tuple[int, float]]:
        return [(n, float(v)) for n, v in enumerate(self.moments)]


@dataclass
class PerronResult:
    """
    Perron root of a finite nonnegative matrix with a Collatz-Wielandt bracket.

    ``lower <= value <= upper`` always hold for the true root, whatever the
    number of iterations.
    """
    value: float
    lower: float
    upper: float
    vector: np.ndarray
    iterations: int
    residual: float
    converged: bool
    period: int = 1


@dataclass
class GrowthEstimate:
    """
    One growth rate at a vertex.

    Attributes:
        quantity (str): ``"M_s"`` or ``"M_w"``.
        x: Vertex.
        lower (float): Certified lower bound.
        estimate (float): Heuristic point estimate (never below ``lower``).
        exact (Optional[float]): Exact value when a finite structure gives it.
        provenance (str): How ``exact`` was obtained, or how ``lower`` was.
        horizon (int): Horizon ``N`` used.
        period (int): Period of ``x`` seen up to ``N``.
        bounds (Dict[str, float]): Individual lower bounds that were combined.
    """
    quantity: str
    x: Label
    lower: float
    estimate: float
    exact: Optional[float]
    provenance: str
    horizon: int
    period: int
    bounds: Dict[str, float] = field(default_factory=dict)

    @property
    def best(self) -> float:
        return self.exact if self.exact is not None else self.estimate

    def to_json(self) -> Dict[str, Any]:
        return {
            "quantity": self.quantity,
            "x": repr(self.x),
            "lower": self.lower,
            "estimate": self.estimate,
            "exact": self.exact,
            "provenance": self.provenance,
            "horizon": self.horizon,
            "period": self.period,
            "bounds": dict(self.bounds),
        }


@dataclass
class PhiGammaSeries:
    """
    Partial sums of the first-passage series ``Phi(x,y|t)`` and the moment
    series ``Gamma(x,y|t)``.

    ``phi_terms[n] = phi^(n)_{xy} t^n`` and ``gamma_terms[n] = m^(n)_{xy} t^n``.
    ``residual`` is ``|Gamma_N - 1/(1 - Phi_N)|`` when ``x == y`` and
    ``Phi_N < 1``, else None.
    """
    x: Label
    y: Label
    t: float
    horizon: int
    phi_terms: np.ndarray
    gamma_terms: np.ndarray
    stopped_early: bool

    @property
    def phi(self) -> float:
        return float(math.fsum(self.phi_terms))

    @property
    def gamma(self) -> float:
        return float(math.fsum(self.gamma_terms))

    @property
    def residual(self) -> Optional[float]:
        if self.x != self.y or self.phi >= 1.0:
            return None
        return abs(self.gamma - 1.0 / (1.0 - self.phi))

    def rows(self) -> List[Tuple[int, float]]:
        return [(n, float(v)) for n, v in enumerate(np.cumsum(self.phi_terms))]


@dataclass
class SurvivalReport:
    """
    Verdicts on local, global and strong local survival with their evidence.

    Fragments produced by different classifiers are combined with
    ``merge``; a decided verdict always replaces an undecided one.
    """
    x: Label
    local: Verdict = Verdict.UNDECIDED
    global_: Verdict = Verdict.UNDECIDED
    strong_local: Verdict = Verdict.UNDECIDED
    evidence: Dict[str, Any] = field(default_factory=dict)
    critical: Dict[str, Any] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    def merge(self, other: "SurvivalReport") -> "SurvivalReport":
        def pick(a: Verdict, b: Verdict) -> Verdict:
            return a if a is not Verdict.UNDECIDED else b

        return SurvivalReport(
            self.x,
            pick(self.local, other.local),
            pick(self.global_, other.global_),
            pick(self.strong_local, other.strong_local),
            {**other.evidence, **self.evidence},
            {**other.critical, **self.critical},
            self.notes + [n for n in other.notes if n not in self.notes],
        )

    def to_json(self) -> Dict[str, Any]:
        return {
            "x": repr(self.x),
            "local": self.local.value,
            "global": self.global_.value,
            "strong_local": self.strong_local.value,
            "evidence": _jsonable(self.evidence),
            "critical": _jsonable(self.critical),
            "notes": list(self.notes),
        }


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    return repr(value)


# ---------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------

def _window(kernel: MomentKernel, x: Label, radius: int, knobs: SpectralKnobs) -> Tuple[Ball, sp.csr_matrix]:
    ball = kernel.model.ball(x, radius, max_vertices=knobs.max_ball_vertices)
    return ball, kernel.matrix(ball)


def n_step_moments(kernel: MomentKernel, x: Label, N: int, target: Optional[Label] = None,
                   knobs: Optional[SpectralKnobs] = None) -> MomentSeries:
    """
    Exact ``m^(n)_{x,target}`` and ``T^n_x`` for ``n <= N``.

    Paths of length at most ``N`` never leave ``B(x, N)``, so propagating a
    row vector through the restriction of ``M`` to that ball loses nothing.

    Args:
        kernel (MomentKernel): First-moment kernel.
        x: Start vertex.
        N (int): Horizon.
        target: End vertex (default ``x``).

    Raises:
        TruncationError: The ball needs more than the space cap or the
            vertex budget.

    Example:
        >>> series = n_step_moments(build_moment_kernel(lattice_Zd(1, 1.0)), (0,), 4)
        >>> series.moments[2]
        2.0
    """
    if N < 0:
        raise ValueError(f"horizon must be nonnegative, got {N}")
    knobs = knobs if knobs is not None else SpectralKnobs()
    target = x if target is None else target
    ball, M = _window(kernel, x, N, knobs)
    MT = M.T.tocsr()
    u = np.zeros(len(ball))
    u[0] = 1.0
    j = ball.index.get(target)
    log_moments = np.full(N + 1, -np.inf)
    log_totals = np.full(N + 1, -np.inf)
    scale = 0.0
    exact = True
    for n in range(N + 1):
        if n:
            u = MT @ u
            top = float(u.max()) if len(u) else 0.0
            if top > _RESCALE_HIGH or 0.0 < top < _RESCALE_LOW:
                u /= top
                scale += math.log(top)
                exact = False
        total = float(u.sum())
        if total > 0:
            log_totals[n] = math.log(total) + scale
        if j is not None and u[j] > 0:
            log_moments[n] = math.log(u[j]) + scale
        if total == 0:
            break
    logger.debug("moments from %r up to %d on %d vertices", x, N, len(ball))
    return MomentSeries(x, target, N, log_moments, log_totals, exact)


# ---------------------------------------------------------------------------
# Perron roots
# ---------------------------------------------------------------------------

def _period(A: sp.csr_matrix) -> int:
    """gcd of cycle lengths of an irreducible matrix, from BFS levels."""
    level = csgraph.shortest_path(A, method="D", unweighted=True, indices=0)
    rows, cols = A.nonzero()
    if not len(rows):
        return 1
    gaps = np.abs(level[rows] + 1 - level[cols]).astype(np.int64)
    d = int(np.gcd.reduce(gaps))
    return d if d > 0 else 1


def perron_root(matrix: Any, tol: Optional[float] = None, max_iter: Optional[int] = None,
                knobs: Optional[SpectralKnobs] = None) -> PerronResult:
    """
    Perron root of a finite, nonnegative, irreducible matrix.

    Power iteration starts from the ones vector and runs on ``M + I``, which
    has the same Perron vector and is aperiodic. The bracket is taken on the
    mean of the last ``d`` iterates, ``d`` the period of ``M``, which damps
    the rotating components of a periodic matrix. The Collatz-Wielandt
    numbers ``min/max (Bu)_i / u_i`` of any positive ``u`` bracket the root,
    so the bracket is valid at every step.

    Args:
        matrix: Dense array, nested lists or scipy sparse matrix.
        tol (Optional[float]): Target bracket width relative to the root.
        max_iter (Optional[int]): Iteration limit.

    Returns:
        PerronResult: Root, bracket, normalized Perron vector and residual
            ``||Mv - rho v||_inf / ||v||_inf``.

    Raises:
        ReducibleMatrixError: More than one strong component.
        ValueError: Empty, non-square or negative input.

    Example:
        >>> round(perron_root([[3, 1], [1, 0]]).value, 9)
        3.302775638
    """
    knobs = knobs if knobs is not None else SpectralKnobs()
    tol = knobs.tol if tol is None else tol
    max_iter = knobs.max_iter if max_iter is None else max_iter
    A = sp.csr_matrix(matrix, dtype=float)
    A.eliminate_zeros()
    n, m = A.shape
    if n == 0 or n != m:
        raise ValueError(f"expected a nonempty square matrix, got shape {A.shape}")
    if A.nnz and A.data.min() < 0:
        raise ValueError("matrix has negative entries")
    count, _ = csgraph.connected_components(A, directed=True, connection="strong")
    if count > 1:
        raise ReducibleMatrixError(count, "decompose into classes first")
    B = (A + sp.identity(n, format="csr")).tocsr()
    d = _period(A)
    recent: Deque[np.ndarray] = deque([np.ones(n)], maxlen=d)
    v = recent[0]
    lo, hi = 0.0, float("inf")
    it = 0
    for it in range(1, max_iter + 1):
        w = B @ recent[-1]
        recent.append(w / w.max())
        v = np.mean(np.stack(recent), axis=0)
        ratios = (B @ v) / v
        lo, hi = float(ratios.min()), float(ratios.max())
        if hi - lo <= tol * max(1.0, hi):
            break
    v = v / v.max()
    value = 0.5 * (lo + hi) - 1.0
    residual = float(np.max(np.abs(A @ v - value * v)) / np.max(v))
    converged = hi - lo <= tol * max(1.0, hi)
    if not converged:
        logger.warning("power iteration stopped after %d steps with bracket [%.12g, %.12g]",
                       it, lo - 1.0, hi - 1.0)
    return PerronResult(value, max(lo - 1.0, 0.0), hi - 1.0, v, it, residual, converged, d)


def _strong_component(M: sp.csr_matrix, i: int) -> np.ndarray:
    _, labels = csgraph.connected_components(M, directed=True, connection="strong")
    return np.flatnonzero(labels == labels[i])


def _class_perron(M: sp.csr_matrix, members: np.ndarray, knobs: SpectralKnobs,
                  max_iter: Optional[int] = None) -> PerronResult:
    sub = M[members][:, members]
    if len(members) == 1 and sub.nnz == 0:
        return PerronResult(0.0, 0.0, 0.0, np.ones(1), 0, 0.0, True)
    return perron_root(sub, knobs=knobs, max_iter=max_iter)


def window_perron_bound(kernel: MomentKernel, x: Label, radius: int,
                        knobs: Optional[SpectralKnobs] = None) -> PerronResult:
    """
    Perron root of the class of ``x`` inside ``B(x, radius)``.

    Any finite irreducible principal submatrix through ``x`` has a Perron
    root no larger than the strong growth rate at ``x``, so ``.lower`` is a
    certified lower bound for it.
    """
    knobs = knobs if knobs is not None else SpectralKnobs()
    ball, M = _window(kernel, x, radius, knobs)
    members = _strong_component(M, 0)
    return _class_perron(M, members, knobs, knobs.window_max_iter)


def _window_matrix(kernel: MomentKernel, labels: Sequence[Label]) -> sp.csr_matrix:
    index = {label: i for i, label in enumerate(labels)}
    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []
    for i, label in enumerate(labels):
        for y, v in kernel.row(label).items():
            j = index.get(y)
            if j is not None:
                rows.append(i)
                cols.append(j)
                vals.append(v)
    n = len(labels)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, n), dtype=float)
    mat.sum_duplicates()
    return mat


# ---------------------------------------------------------------------------
# Growth rates
# ---------------------------------------------------------------------------

def estimate_growth_rates(kernel: MomentKernel, x: Label, N: int,
                          knobs: Optional[SpectralKnobs] = None) -> Tuple[GrowthEstimate, GrowthEstimate]:
    """
    Strong and weak growth rates at ``x`` from moments up to horizon ``N``.

    ``M_s`` is bounded below by ``max_n (m^(n)_{xx})^(1/n)`` (the sequence is
    supermultiplicative) and by the Perron root of the class of ``x`` in
    ``B(x, N)``. When that class is complete and finite its Perron root is
    the exact value. ``M_w`` is estimated by the minimum of ``(T^n_x)^(1/n)``
    over the tail window and is exact when the whole reachable set is finite.

    Returns:
        Tuple[GrowthEstimate, GrowthEstimate]: ``(M_s, M_w)``.

    Raises:
        ValueError: ``N`` is below twice the period of ``x`` (and below 2).
        TruncationError: As for ``n_step_moments``.
    """
    knobs = knobs if knobs is not None else SpectralKnobs()
    if N < 2:
        raise ValueError(f"horizon must be at least 2, got {N}")
    decomposition = analyze_digraph(kernel.model, N, center=x)
    cls = decomposition.class_of(x)
    if N < 2 * cls.period:
        raise ValueError(f"horizon {N} is below twice the period {cls.period} of {x!r}")
    series = n_step_moments(kernel, x, N, knobs=knobs)
    period = series.period
    bounds: Dict[str, float] = {}
    roots = series.roots()
    bounds["return_roots"] = float(roots.max()) if len(roots) else 0.0
    ball, M = _window(kernel, x, N, knobs)
    if knobs.window_perron:
        bounds["window_perron"] = window_perron_bound(kernel, x, N, knobs).lower
    lower = max(bounds.values())
    ratio = 0.0
    finite_n = np.flatnonzero(np.isfinite(series.log_moments))
    if period and len(finite_n) >= 2 and finite_n[-1] >= period:
        last = int(finite_n[-1])
        prev = last - period
        if np.isfinite(series.log_moments[prev]):
            ratio = math.exp((series.log_moments[last] - series.log_moments[prev]) / period)
    estimate_s = max(lower, ratio)

    exact_s: Optional[float] = None
    exact_w: Optional[float] = None
    provenance = "return roots and window Perron bound"
    if cls.complete:
        members = np.asarray([ball.index[label] for label in cls.members])
        exact_s = _class_perron(M, members, knobs).value
        provenance = f"Perron root of a complete class of {len(members)} vertices"
        estimate_s = max(exact_s, lower)
    if not ball.leaky.any():
        perrons = [0.0]
        for c in decomposition.reachable_classes(x):
            vc = decomposition.classes[c]
            if vc.trivial:
                continue
            members = np.asarray([ball.index[label] for label in vc.members])
            perrons.append(_class_perron(M, members, knobs).value)
        exact_w = max(perrons)

    start = max(1, int(math.ceil((1.0 - knobs.tail_fraction) * N)))
    n = np.arange(start, N + 1)
    tail = series.log_totals[start:N + 1] / n
    weak = float(np.exp(tail.min())) if len(tail) else 0.0
    weak = max(weak, lower)
    ms = GrowthEstimate("M_s", x, lower, estimate_s, exact_s, provenance, N, period, bounds)
    mw = GrowthEstimate("M_w", x, lower, weak, exact_w,
                        "tail-window minimum (heuristic)" if exact_w is None else "max Perron over reachable classes",
                        N, period, {"tail_min": float(np.exp(tail.min())) if len(tail) else 0.0})
    return ms, mw


# ---------------------------------------------------------------------------
# Generating series
# ---------------------------------------------------------------------------

def phi_gamma_series(kernel: MomentKernel, x: Label, y: Optional[Label] = None, t: float = 1.0,
                     N: int = 50, stop_above: Optional[float] = None,
                     knobs: Optional[SpectralKnobs] = None) -> PhiGammaSeries:
    """
    Partial sums of ``Phi(x,y|t)`` and ``Gamma(x,y|t)`` up to ``N``.

    First-passage coefficients come from the taboo recursion
    ``phi^(1)_{wy} = m_{wy}``, ``phi^(n)_{wy} = sum_{u != y} m_{wu} phi^(n-1)_{uy}``,
    evaluated backward on ``B(x, N)``; the value at ``x`` is exact.

    Args:
        stop_above (Optional[float]): Stop as soon as the partial sum of
            ``Phi`` exceeds this value.

    Example:
        >>> s = phi_gamma_series(build_moment_kernel(gw), 0, t=1.0, N=1)
        >>> s.phi
        1.5
    """
    knobs = knobs if knobs is not None else SpectralKnobs()
    y = x if y is None else y
    if t < 0:
        raise DomainError(f"t must be nonnegative, got {t}")
    ball, M = _window(kernel, x, N, knobs)
    n_vertices = len(ball)
    j = ball.index.get(y)
    phi_terms = np.zeros(N + 1)
    gamma_terms = np.zeros(N + 1)
    stopped = False
    if j is None:
        return PhiGammaSeries(x, y, t, N, phi_terms, gamma_terms, stopped)
    col = M[:, [j]].toarray().ravel()
    keep = np.ones(n_vertices)
    keep[j] = 0.0
    taboo = (M @ sp.diags(keep)).tocsr()
    MT = M.T.tocsr()
    g = t * col
    u = np.zeros(n_vertices)
    u[0] = 1.0
    gamma_terms[0] = u[j]
    partial = 0.0
    last = N
    for n in range(1, N + 1):
        if n > 1:
            g = t * (taboo @ g)
        u = t * (MT @ u)
        phi_terms[n] = g[0]
        gamma_terms[n] = u[j]
        partial += g[0]
        if not (np.isfinite(partial) and np.all(np.isfinite(u))):
            logger.warning("series from %r overflowed at n=%d", x, n)
            last = n
            stopped = True
            break
        if stop_above is not None and partial > stop_above:
            last = n
            stopped = True
            break
    return PhiGammaSeries(x, y, t, last, phi_terms[:last + 1], gamma_terms[:last + 1], stopped)


def export_series(path: str, rows: Union[Iterable[Tuple[int, float]], MomentSeries, PhiGammaSeries]) -> int:
    """Write ``n,value`` rows to ``path``; returns the number of rows."""
    if isinstance(rows, (MomentSeries, PhiGammaSeries)):
        rows = rows.rows()
    count = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "value"])
        for n, value in rows:
            writer.writerow([n, repr(float(value))])
            count += 1
    return count


# ---------------------------------------------------------------------------
# Classification
# ---------------------------------------------------------------------------

def _has_inflow(model: BRWModel, members: Sequence[Label]) -> Optional[bool]:
    inside = set(members)
    space = model.space
    if isinstance(space, FiniteSpace):
        for w in space.labels:
            if w not in inside and inside.intersection(model.out_neighbors(w)):
                return True
        return False
    for v in members:
        preds = space.predecessors(v)
        if preds is None:
            return None
        for w in preds:
            if w not in inside and v in model.out_neighbors(w):
                return True
    return False


def classify_local_survival(model: BRWModel, x: Label, N: int = 50,
                            knobs: Optional[SpectralKnobs] = None) -> SurvivalReport:
    """
    Local survival at ``x`` starting from ``x``.

    SURVIVES when a partial sum of ``Phi(x,x|1)`` exceeds 1 or a Perron
    bound of the class of ``x`` exceeds 1; DIES when the class of ``x`` is
    complete with Perron root at most 1; UNDECIDED otherwise, with the
    lower bound on the strong growth rate attached.

    Local survival at ``x`` for a process started elsewhere is not decided
    here; a note is attached when the class of ``x`` receives children from
    outside.
    """
    knobs = knobs if knobs is not None else SpectralKnobs()
    kernel = build_moment_kernel(model)
    report = SurvivalReport(x)
    series = phi_gamma_series(kernel, x, x, 1.0, N, stop_above=1.0, knobs=knobs)
    report.evidence["phi_partial_sum"] = series.phi
    report.evidence["phi_horizon"] = series.horizon
    decomposition = analyze_digraph(model, N, center=x)
    cls = decomposition.class_of(x)
    inflow = _has_inflow(model, cls.members) if cls.complete else None
    if inflow:
        report.notes.append("the class of x receives children from other classes; "
                            "local survival there from other starting vertices is not covered")
    elif inflow is None and not model.space.is_finite:
        report.notes.append("inflow into the class of x could not be checked")
    if series.phi > 1.0:
        report.local = Verdict.SURVIVES
        report.evidence["certificate"] = "phi partial sum above 1"
        return report
    if cls.complete:
        ball, M = _window(kernel, x, N, knobs)
        members = np.asarray([ball.index[label] for label in cls.members])
        perron = _class_perron(M, members, knobs)
        report.evidence["class_perron"] = perron.value
        report.evidence["class_size"] = len(members)
        if perron.lower > 1.0:
            report.local = Verdict.SURVIVES
            report.evidence["certificate"] = "Perron root of a complete class above 1"
        elif perron.upper <= 1.0 + knobs.tol:
            report.local = Verdict.DIES
            report.evidence["certificate"] = "Perron root of a complete class at most 1"
        return report
    bound = window_perron_bound(kernel, x, N, knobs) if knobs.window_perron else None
    if bound is not None:
        report.evidence["window_perron_lower"] = bound.lower
        if bound.lower > 1.0:
            report.local = Verdict.SURVIVES
            report.evidence["certificate"] = "window Perron bound above 1"
            return report
    series_m = n_step_moments(kernel, x, N, knobs=knobs)
    roots = series_m.roots()
    lower = max([float(roots.max()) if len(roots) else 0.0] + ([bound.lower] if bound else []))
    report.evidence["M_s_lower"] = lower
    return report


def _finite_growth(model: BRWModel, x: Label, knobs: SpectralKnobs) -> Tuple[float, Dict[str, float]]:
    space = model.space
    assert isinstance(space, FiniteSpace)
    decomposition = analyze_digraph(model, len(space), center=x)
    kernel = build_moment_kernel(model)
    ball = decomposition.ball
    M = kernel.matrix(ball)
    per_class: Dict[str, float] = {}
    best = 0.0
    for c in decomposition.reachable_classes(x):
        vc = decomposition.classes[c]
        if vc.trivial:
            continue
        members = np.asarray([ball.index[label] for label in vc.members])
        value = _class_perron(M, members, knobs).value
        per_class[repr(vc.members[:3])] = value
        best = max(best, value)
    return best, per_class


def classify_global_FBRW(model: BRWModel, g: Callable[[Label], Label], x: Optional[Label] = None,
                         radius: int = 4, growth_horizon: Optional[int] = None,
                         knobs: Optional[SpectralKnobs] = None) -> SurvivalReport:
    """
    Exact global classification of a BRW locally isomorphic to a finite one.

    The weak growth rate at ``x`` is the largest Perron root among classes of
    the projected model reachable from ``g(x)``; the process survives
    globally iff it exceeds 1. For continuous-time counterparts the global
    critical intensity ``lambda_w = lambda / M_w`` is reported; at
    ``lambda_w`` itself the process dies out.

    Args:
        model (BRWModel): The model on ``X``.
        g (Callable): Fiber map onto a finite set.
        x: Start vertex (default: root).
        radius (int): Ball on which the fibers are sampled and compared.
        growth_horizon (Optional[int]): When given, also bound the local
            critical intensity from moments up to this horizon.

    Raises:
        NotLocallyIsomorphicError: ``g`` is not a local isomorphism on the ball.
        TruncationError: Some fiber has no vertex in the ball.
    """
    knobs = knobs if knobs is not None else SpectralKnobs()
    x = model.space.root if x is None else x
    projection = project_local_isomorphism(model, g, radius)
    image = projection.model
    gx = g(x)
    if gx != image.space.root:
        image = BRWModel(FiniteSpace(image.space.labels, gx), {y: image.law(y) for y in image.space.labels},  # type: ignore[attr-defined]
                         name=image.name)
    mw, per_class = _finite_growth(image, gx, knobs)
    report = SurvivalReport(x)
    report.global_ = Verdict.SURVIVES if mw > 1.0 + knobs.tol else Verdict.DIES
    report.evidence.update({"M_w": mw, "class_perrons": per_class,
                            "projection_residual": projection.residual,
                            "image_size": len(image.space)})  # type: ignore[arg-type]
    lam = _common_intensity(model, x)
    if lam is not None and mw > 0:
        report.critical["lambda_w"] = lam / mw
        report.critical["K_w"] = mw / lam
        report.critical["at_lambda_w"] = "global extinction"
    if growth_horizon is not None:
        ms, _ = estimate_growth_rates(build_moment_kernel(model), x, growth_horizon, knobs)
        report.evidence["M_s_lower"] = ms.lower
        if lam is not None and ms.lower > 0:
            report.critical["lambda_s_interval"] = [lam / mw if mw > 0 else float("inf"), lam / ms.lower]
    return report


def _common_intensity(model: BRWModel, x: Label) -> Optional[float]:
    law = model.law(x)
    if isinstance(law, ContinuousCounterpartLaw):
        return float(law.lam)
    return None


# ---------------------------------------------------------------------------
# Witness checks and sequences
# ---------------------------------------------------------------------------

@dataclass
class CollatzWielandtCheck:
    """Per-coordinate slack of a Collatz-Wielandt inequality on a ball interior."""
    form: str
    lam: float
    labels: Tuple[Label, ...]
    slack: np.ndarray
    verified: bool
    failing: Optional[Label]
    excluded: Tuple[Label, ...]
    min_witness: float

    @property
    def min_slack(self) -> float:
        return float(np.min(self.slack)) if len(self.slack) else float("inf")

    def slack_at(self, label: Label) -> float:
        return float(self.slack[self.labels.index(label)])


def collatz_wielandt_check(kernel: MomentKernel, lam: float, v: Union[Mapping[Label, float], Callable[[Label], float]],
                           n: int = 1, radius: int = 10, form: str = "nonlinear",
                           tol: float = 1e-12) -> CollatzWielandtCheck:
    """
    Check ``lam K v >= v/(1 - v)`` (nonlinear) or ``lam^n K^n v >= v`` (linear).

    ``kernel`` holds ``K``: for a continuous-time family pass the kernel of
    the counterpart built at intensity 1. Coordinates are checked where the
    inequality only involves vertices of ``B(root, radius)``.

    Returns:
        CollatzWielandtCheck: Slack per checked coordinate; coordinates with
            ``v = 1`` are excluded from the nonlinear form.
    """
    if form not in ("nonlinear", "linear"):
        raise ValueError(f"form must be 'nonlinear' or 'linear', got {form!r}")
    vf = v.__getitem__ if isinstance(v, Mapping) else v
    model = kernel.model
    ball = model.ball(None, radius)
    values = np.asarray([float(vf(label)) for label in ball.labels])
    if np.any(values < 0):
        raise DomainError("witness must be nonnegative")
    M = kernel.matrix(ball)
    labels: List[Label] = []
    slack: List[float] = []
    excluded: List[Label] = []
    if form == "nonlinear":
        if np.any(values > 1):
            raise DomainError("nonlinear witness must lie in [0, 1]")
        Kv = M @ values
        for i in np.flatnonzero(ball.interior):
            label = ball.labels[i]
            if values[i] >= 1.0:
                excluded.append(label)
                continue
            labels.append(label)
            slack.append(lam * Kv[i] - values[i] / (1.0 - values[i]))
        if excluded:
            logger.warning("%d coordinates with v = 1 excluded from the check", len(excluded))
    else:
        w = values.copy()
        for _ in range(n):
            w = lam * (M @ w)
        for i in np.flatnonzero(ball.dist <= radius - n):
            labels.append(ball.labels[i])
            slack.append(w[i] - values[i])
    arr = np.asarray(slack, dtype=float)
    failing = None
    bad = np.flatnonzero(arr < -tol)
    if len(bad):
        failing = labels[int(bad[0])]
    positive = values[values > 0]
    return CollatzWielandtCheck(form, lam, tuple(labels), arr, failing is None and bool(labels),
                                failing, tuple(excluded), float(positive.min()) if len(positive) else 0.0)


@dataclass
class ConvergenceStep:
    size: int
    perron: float
    R: float


def convergence_parameter_sequence(kernel: MomentKernel, x0: Label, windows: Iterable[Sequence[Label]],
                                   knobs: Optional[SpectralKnobs] = None) -> List[ConvergenceStep]:
    """
    Convergence parameters ``1/rho`` of growing finite windows through ``x0``.

    Each window's restriction is reduced to the class of ``x0`` before its
    Perron root is taken. For nested windows the sequence cannot increase.

    Raises:
        DomainError: ``x0`` is missing from a window.
        NumericalError: The sequence increased along nested windows.
    """
    knobs = knobs if knobs is not None else SpectralKnobs()
    steps: List[ConvergenceStep] = []
    previous: Optional[set] = None
    for window in windows:
        labels = list(window)
        if x0 not in labels:
            raise DomainError(f"{x0!r} is not in the window")
        M = _window_matrix(kernel, labels)
        members = _strong_component(M, labels.index(x0))
        rho = _class_perron(M, members, knobs).value
        R = 1.0 / rho if rho > 0 else float("inf")
        current = set(labels)
        if steps and previous is not None and previous <= current and R > steps[-1].R + 1e-9 * max(1.0, R):
            raise NumericalError(f"convergence parameter increased from {steps[-1].R} to {R}")
        steps.append(ConvergenceStep(len(labels), rho, R))
        previous = current
    return steps


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

@dataclass
class GeometryReport:
    radius: int
    ball_sizes: List[int]
    isoperimetric_bound: Optional[float]
    isoperimetric_profile: List[float]
    growth_exponent: float
    reversibility_residual: Optional[float]
    uniform_growth: Optional[bool]
    uniform_growth_worst: Optional[float]
    notes: List[str] = field(default_factory=list)

    def to_json(self) -> Dict[str, Any]:
        return _jsonable(self.__dict__)


def geometry_diagnostics(model: BRWModel, x0: Optional[Label] = None, radius: int = 10,
                         nbar: Optional[int] = None, eps: Optional[float] = None,
                         K_w: Optional[float] = None) -> GeometryReport:
    """
    Geometric diagnostics on ``B(x0, radius)``.

    - isoperimetric upper bound: ``min_r sum_{x in B_r, y not in B_r} m_xy / |B_r|``
      over the nested balls ``B_r``, ``r < radius``;
    - growth exponent: least-squares slope of ``log |B_r|`` over the second
      half of the radii;
    - reversibility: a measure ``kappa`` with ``kappa(x) m_xy = kappa(y) m_yx``
      propagated along a BFS tree, and the worst relative residual;
    - uniform growth: ``max_{n <= nbar} (T^n_x)^(1/n) >= K_w - eps`` for every
      ``x`` with ``d(x0, x) <= radius - nbar``.

    The first and third items need ``m_xy > 0 <=> m_yx > 0`` and are skipped
    with a note otherwise.
    """
    x0 = model.space.root if x0 is None else x0
    kernel = build_moment_kernel(model)
    ball = model.ball(x0, radius)
    M = kernel.matrix(ball)
    sizes = [int(np.count_nonzero(ball.dist <= r)) for r in range(radius + 1)]
    notes: List[str] = []
    symmetric = kernel.is_non_oriented(ball)

    iso: Optional[float] = None
    profile: List[float] = []
    if symmetric:
        for r in range(radius):
            inside = ball.dist <= r
            mass = 0.0
            for i in np.flatnonzero(inside):
                for y, v in kernel.row(ball.labels[i]).items():
                    j = ball.index.get(y)
                    if j is None or not inside[j]:
                        mass += v
            profile.append(mass / sizes[r])
        iso = min(profile) if profile else None
    else:
        notes.append("kernel is oriented; isoperimetric and reversibility checks skipped")
        logger.warning("geometry diagnostics: oriented kernel, skipping symmetric checks")

    radii = np.arange(radius // 2, radius + 1)
    if len(radii) >= 2:
        slope = float(np.polyfit(radii, np.log([sizes[r] for r in radii]), 1)[0])
    else:
        slope = float("nan")

    residual: Optional[float] = None
    if symmetric:
        kappa = np.zeros(len(ball))
        kappa[0] = 1.0
        order = np.argsort(ball.dist, kind="stable")
        for i in order:
            if kappa[i] == 0.0:
                continue
            for y, v in kernel.row(ball.labels[i]).items():
                j = ball.index.get(y)
                if j is not None and kappa[j] == 0.0 and v > 0:
                    kappa[j] = kappa[i] * v / kernel.entry(y, ball.labels[i])
        worst = 0.0
        coo = M.tocoo()
        for i, j, v in zip(coo.row, coo.col, coo.data):
            if ball.leaky[i] or ball.leaky[j]:
                continue
            a, b = kappa[i] * v, kappa[j] * M[j, i]
            worst = max(worst, abs(a - b) / max(a, b, 1e-300))
        residual = worst

    uniform: Optional[bool] = None
    worst_growth: Optional[float] = None
    if nbar is not None and eps is not None and K_w is not None:
        w = np.ones(len(ball))
        best = np.zeros(len(ball))
        for n in range(1, nbar + 1):
            w = M @ w
            with np.errstate(divide="ignore"):
                best = np.maximum(best, w ** (1.0 / n))
        check = ball.dist <= radius - nbar
        worst_growth = float(best[check].min()) if check.any() else None
        uniform = worst_growth is not None and worst_growth >= K_w - eps
    return GeometryReport(radius, sizes, iso, profile, slope, residual, uniform, worst_growth, notes)
