"""
Generating functions and extinction probabilities on finite truncations.

Every solver works on a ball ``B(root, radius)`` and is run twice, once per
boundary policy:

- pin-0: coordinates outside the ball read 0, so emigrants count as
  surviving (or as hitting the target set);
- pin-1: coordinates outside read 1, so the progeny of emigrants is
  discarded.

The two limits bracket the quantity of the infinite process.
"""
import csv
import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, NumericalError
from .knobs import SolverKnobs
from .model import (Ball, BRWModel, ContinuousCounterpartLaw, ExplicitFiniteLaw,
                    FiniteOffspring, GeometricOffspring, IndependentDiffusionLaw,
                    Label, Number)

logger = logging.getLogger(__name__)

VectorLike = Union[Mapping[Label, Any], Callable[[Label], Any], "ExtinctionVector"]

PIN_ZERO = "pin-0"
PIN_ONE = "pin-1"


# ---------------------------------------------------------------------------
# Result types
# ---------------------------------------------------------------------------

@dataclass
class ExtinctionVector:
    """
    Bracket of an extinction-type probability on a truncation.

    Attributes:
        kind (str): ``"global"``, ``"local"`` or ``"never-hit"``.
        target (Optional[Tuple]): The set ``A``; None means the whole space.
        radius (int): Truncation radius around the root.
        labels (Tuple): Vertices of the truncation, in ball order.
        lower (np.ndarray): Pin-0 limit.
        upper (np.ndarray): Pin-1 limit.
        iterations (Tuple[int, int]): Sweeps used by each policy.
        residual (Tuple[float, float]): Final ``||G(z) - z||`` per policy.
        converged (bool): Both residuals below the tolerance.
    """
    kind: str
    target: Optional[Tuple[Label, ...]]
    radius: int
    labels: Tuple[Label, ...]
    lower: np.ndarray
    upper: np.ndarray
    iterations: Tuple[int, int]
    residual: Tuple[float, float]
    converged: bool
    index: Dict[Label, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        if not self.index:
            self.index = {label: i for i, label in enumerate(self.labels)}

    def at(self, label: Label) -> Tuple[float, float]:
        """``(lower, upper)`` at one vertex."""
        i = self.index[label]
        return float(self.lower[i]), float(self.upper[i])

    @property
    def width(self) -> float:
        return float(np.max(self.upper - self.lower)) if len(self.labels) else 0.0

    def lower_map(self) -> Dict[Label, float]:
        return {label: float(v) for label, v in zip(self.labels, self.lower)}

    def upper_map(self) -> Dict[Label, float]:
        return {label: float(v) for label, v in zip(self.labels, self.upper)}

    def to_json(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "A": None if self.target is None else [repr(a) for a in self.target],
            "radius": self.radius,
            "policy": [PIN_ZERO, PIN_ONE],
            "values": [
                {"label": repr(label), "lower": float(lo), "upper": float(hi)}
                for label, lo, hi in zip(self.labels, self.lower, self.upper)
            ],
            "residual": [float(r) for r in self.residual],
            "iterations": list(self.iterations),
            "converged": self.converged,
        }

    def to_csv(self, path: str, model: Optional[BRWModel] = None) -> None:
        """Write ``vertex,label,lower,upper`` rows."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["vertex", "label", "lower", "upper"])
            for i, label in enumerate(self.labels):
                vid = model.id_of(label) if model is not None else i
                writer.writerow([vid, repr(label), repr(float(self.lower[i])), repr(float(self.upper[i]))])


@dataclass
class Certificate:
    """
    A checked certificate with per-coordinate slack.

    Attributes:
        kind (str): ``"global-survival"``, ``"strong-local-failure"`` or
            ``"maximum-principle-witness"``.
        labels (Tuple): Coordinates the slack refers to.
        payload (Dict): Inputs needed to re-run the check.
        slack (np.ndarray): Per-coordinate margin; negative means violated.
        verified (bool): Whether the certificate holds.
        witness: Distinguished vertex (the ``x0`` of a strong-local failure,
            the violating vertex of a maximum-principle check).
        detail (Dict): Extra numbers for reports.
    """
    kind: str
    labels: Tuple[Label, ...]
    payload: Dict[str, Any]
    slack: np.ndarray
    verified: bool
    witness: Optional[Label] = None
    detail: Dict[str, Any] = field(default_factory=dict)

    @property
    def min_slack(self) -> float:
        return float(np.min(self.slack)) if len(self.slack) else float("inf")

    def recheck(self, model: BRWModel) -> "Certificate":
        """Run the check that produced this certificate again on its stored inputs."""
        p = self.payload
        if self.kind == "global-survival":
            return global_survival_certificate_check(model, p["z"], p["x0"], p["radius"], p["tol"])
        if self.kind == "strong-local-failure":
            return mv_certificate_check(model, p["A"], p["v"], p["qbar"], p["radius"], p["tol"])
        if self.kind == "maximum-principle-witness":
            return maximum_principle_check(model, p["z"], p["qbar"], p["radius"], p["tol"],
                                           enforce_precondition=p["enforce_precondition"])
        raise ValueError(f"unknown certificate kind {self.kind!r}")

    def to_json(self) -> Dict[str, Any]:
        return {
            "kind": self.kind,
            "verified": self.verified,
            "witness": None if self.witness is None else repr(self.witness),
            "min_slack": self.min_slack,
            "detail": {k: v for k, v in self.detail.items()},
        }


# ---------------------------------------------------------------------------
# Pointwise evaluation
# ---------------------------------------------------------------------------

def _as_function(v: VectorLike, which: str = "lower") -> Callable[[Label], Any]:
    if isinstance(v, ExtinctionVector):
        mapping = v.lower_map() if which == "lower" else v.upper_map()
        return mapping.__getitem__
    if isinstance(v, Mapping):
        return v.__getitem__
    if callable(v):
        return v
    raise TypeError(f"expected a mapping or a callable, got {type(v).__name__}")


def _checked(z: Callable[[Label], Any], labels: Iterable[Label]) -> None:
    for y in labels:
        value = z(y)
        if not 0 <= value <= 1:
            raise DomainError(f"z({y!r}) = {value} is outside [0, 1]")


def eval_G(model: BRWModel, z: VectorLike, x: Label) -> Number:
    """
    Generating function ``G(z|x)``.

    ``z`` must be defined on every vertex that receives children from ``x``;
    pass a callable to impose a boundary policy outside a truncation.

    Raises:
        DomainError: Some ``z(y)`` read by the law lies outside ``[0, 1]``.

    Example:
        >>> gw = galton_watson({0: Fraction(1, 4), 2: Fraction(3, 4)}).model
        >>> eval_G(gw, {0: Fraction(1, 3)}, 0)
        Fraction(1, 3)
    """
    zf = _as_function(z)
    law = model.law(x)
    _checked(zf, law.support())
    return law.G(zf)


def eval_H(model: BRWModel, z: VectorLike, x: Label) -> Number:
    """
    First-event generating function of a continuous-time counterpart.

    Its fixed points coincide with those of ``G``; used only as a cross-check.

    Raises:
        DomainError: The law at ``x`` is not a continuous-time counterpart.
    """
    law = model.law(x)
    if not isinstance(law, ContinuousCounterpartLaw):
        raise DomainError(f"law at {x!r} has no first-event form")
    zf = _as_function(z)
    _checked(zf, (*law.support(), x))
    return law.H(zf, x)


def nodeath_generating_function(model: BRWModel, qbar: VectorLike, z: VectorLike, x: Label) -> Number:
    """
    Generating function of the process conditioned on survival.

    Computes ``(G(q + z(1 - q) | x) - q(x)) / (1 - q(x))`` with ``q`` the
    global extinction vector.

    Raises:
        DomainError: ``q(x) = 1`` (the coordinate is undefined).

    Example:
        >>> third = Fraction(1, 3)
        >>> nodeath_generating_function(gw, {0: third}, {0: Fraction(1, 2)}, 0)
        Fraction(3, 8)
    """
    qf = _as_function(qbar)
    zf = _as_function(z)
    qx = qf(x)
    if qx >= 1:
        raise DomainError(f"extinction probability at {x!r} is 1; the conditioned law is undefined")
    law = model.law(x)
    _checked(zf, law.support())

    def shifted(y: Label) -> Any:
        qy = qf(y)
        return qy + zf(y) * (1 - qy)

    return (law.G(shifted) - qx) / (1 - qx)


# ---------------------------------------------------------------------------
# Vectorized truncated map
# ---------------------------------------------------------------------------

class TruncatedMap:
    """
    ``z -> G(z)`` on every vertex of a ball, with one extra coordinate standing
    for everything outside it.

    Explicit laws are evaluated as ``W exp(C log z)`` (configurations by
    vertices count matrix ``C``, probability matrix ``W``); independent
    diffusion laws as ``F_x(Pz)`` with geometric ``F`` in closed form and
    finite ``F`` by Horner's rule.
    """

    def __init__(self, model: BRWModel, ball: Ball) -> None:
        self.ball = ball
        n = len(ball)
        self.n = n
        explicit: List[int] = []
        geometric: List[int] = []
        finite: List[int] = []
        c_rows: List[int] = []
        c_cols: List[int] = []
        c_vals: List[float] = []
        w_rows: List[int] = []
        w_cols: List[int] = []
        w_vals: List[float] = []
        p_rows: List[int] = []
        p_cols: List[int] = []
        p_vals: List[float] = []
        means: List[float] = []
        pmfs: List[Dict[int, Any]] = []
        configs = 0

        def column(y: Label) -> int:
            j = ball.index.get(y)
            return n if j is None else j

        for i, label in enumerate(ball.labels):
            law = model.law(label)
            if isinstance(law, ExplicitFiniteLaw):
                row = len(explicit)
                explicit.append(i)
                for cfg, p in law.configs:
                    for y, k in cfg.items():
                        c_rows.append(configs)
                        c_cols.append(column(y))
                        c_vals.append(float(k))
                    w_rows.append(row)
                    w_cols.append(configs)
                    w_vals.append(float(p))
                    configs += 1
            elif isinstance(law, IndependentDiffusionLaw):
                for y, p in law.diffusion.items():
                    p_rows.append(i)
                    p_cols.append(column(y))
                    p_vals.append(float(p))
                if isinstance(law.offspring, GeometricOffspring):
                    geometric.append(i)
                    means.append(float(law.offspring.mean))
                elif isinstance(law.offspring, FiniteOffspring):
                    finite.append(i)
                    pmfs.append(law.offspring.pmf)
                else:
                    raise TypeError(f"unsupported offspring law {law.offspring!r}")
            else:
                raise TypeError(f"unsupported reproduction law {law!r}")

        self.explicit = np.asarray(explicit, dtype=np.int64)
        self.geometric = np.asarray(geometric, dtype=np.int64)
        self.finite = np.asarray(finite, dtype=np.int64)
        self.C = sp.csr_matrix((c_vals, (c_rows, c_cols)), shape=(configs, n + 1))
        self.C.sum_duplicates()
        self.W = sp.csr_matrix((w_vals, (w_rows, w_cols)), shape=(len(explicit), configs))
        self.P = sp.csr_matrix((p_vals, (p_rows, p_cols)), shape=(n, n + 1))
        self.P.sum_duplicates()
        self.means = np.asarray(means, dtype=float)
        width = max((max(p) for p in pmfs), default=0) + 1
        self.coeffs = np.zeros((len(pmfs), width))
        for r, pmf in enumerate(pmfs):
            for k, p in pmf.items():
                self.coeffs[r, k] = float(p)

    def __call__(self, z: np.ndarray, outside: float) -> np.ndarray:
        ext = np.empty(self.n + 1)
        ext[:-1] = z
        ext[-1] = outside
        out = np.empty(self.n)
        if len(self.explicit):
            with np.errstate(divide="ignore"):
                logs = np.log(ext)
            prods = np.exp(self.C @ logs)
            out[self.explicit] = self.W @ prods
        if len(self.geometric) or len(self.finite):
            s = self.P @ ext
            if len(self.geometric):
                out[self.geometric] = 1.0 / (1.0 + self.means * (1.0 - s[self.geometric]))
            if len(self.finite):
                sf = s[self.finite]
                val = self.coeffs[:, -1].copy()
                for k in range(self.coeffs.shape[1] - 2, -1, -1):
                    val = val * sf + self.coeffs[:, k]
                out[self.finite] = val
        return np.clip(out, 0.0, 1.0)


def _truncation(model: BRWModel, radius: Optional[int], knobs: SolverKnobs) -> Ball:
    if radius is None:
        if not model.space.is_finite:
            raise ValueError("radius is required for lazy spaces")
        radius = len(model.space)  # type: ignore[arg-type]
    if radius < 1:
        raise ValueError(f"radius must be at least 1, got {radius}")
    return model.ball(None, radius, max_vertices=knobs.max_ball_vertices)


def _iterate(step: Callable[[np.ndarray], np.ndarray], z0: np.ndarray, ascending: bool,
             knobs: SolverKnobs, what: str, first_slack: float = 0.0) -> Tuple[np.ndarray, int, float]:
    z = z0
    residual = float("inf")
    it = 0
    for it in range(1, knobs.max_iter + 1):
        nz = step(z)
        delta = nz - z
        residual = float(np.max(np.abs(delta))) if len(z) else 0.0
        if knobs.check_monotone:
            slack = knobs.monotone_slack + (first_slack if it == 1 else 0.0)
            bad = delta < -slack if ascending else delta > slack
            if np.any(bad):
                raise NumericalError(
                    f"{what}: iteration {it} is not monotone (step {float(np.min(delta) if ascending else np.max(delta)):.3g})"
                )
        z = nz
        if residual < knobs.tol:
            break
    final = float(np.max(np.abs(step(z) - z))) if len(z) else 0.0
    if final >= knobs.tol:
        logger.warning("%s did not converge in %d iterations (residual %.3g)", what, it, final)
    return z, it, final


# ---------------------------------------------------------------------------
# Solvers
# ---------------------------------------------------------------------------

def global_extinction_bracket(model: BRWModel, radius: Optional[int] = None,
                              knobs: Optional[SolverKnobs] = None) -> ExtinctionVector:
    """
    Bracket the global extinction vector ``q`` on ``B(root, radius)``.

    Both policies iterate ``z -> G(z)`` upward from 0. Pin-0 gives a lower
    bound on ``q`` (emigrants survive), pin-1 an upper bound (emigrants are
    removed). On a finite space the two coincide.

    Args:
        model (BRWModel): Model to solve.
        radius (Optional[int]): Truncation radius (default: whole finite space).
        knobs (Optional[SolverKnobs]): Tolerances.

    Returns:
        ExtinctionVector: The bracket; non-convergence is reported, not raised.

    Example:
        >>> vec = global_extinction_bracket(two_type_bp().model)
        >>> vec.at(1)
        (0.5833333333..., 0.5833333333...)
    """
    knobs = knobs if knobs is not None else SolverKnobs()
    ball = _truncation(model, radius, knobs)
    F = TruncatedMap(model, ball)
    zeros = np.zeros(len(ball))
    lower, it_lo, res_lo = _iterate(lambda z: F(z, 0.0), zeros, True, knobs, "global extinction (pin-0)")
    upper, it_hi, res_hi = _iterate(lambda z: F(z, 1.0), zeros, True, knobs, "global extinction (pin-1)")
    _check_order(lower, upper, knobs, "global extinction bracket")
    return ExtinctionVector("global", None, ball.radius, ball.labels, lower, upper,
                            (it_lo, it_hi), (res_lo, res_hi),
                            res_lo < knobs.tol and res_hi < knobs.tol, dict(ball.index))


def _check_order(lower: np.ndarray, upper: np.ndarray, knobs: SolverKnobs, what: str) -> None:
    gap = float(np.min(upper - lower)) if len(lower) else 0.0
    if gap < -max(1e-8, 100 * knobs.tol):
        raise NumericalError(f"{what}: lower exceeds upper by {-gap:.3g}")


def _target_indices(ball: Ball, A: Iterable[Label]) -> np.ndarray:
    idx = []
    for a in A:
        i = ball.index.get(a)
        if i is None:
            raise DomainError(f"target vertex {a!r} is outside the truncation")
        idx.append(i)
    if not idx:
        raise DomainError("target set is empty")
    return np.asarray(sorted(set(idx)), dtype=np.int64)


def never_hit_bracket(model: BRWModel, A: Iterable[Label], radius: Optional[int] = None,
                      knobs: Optional[SolverKnobs] = None) -> ExtinctionVector:
    """
    Bracket the probability that no particle ever occupies ``A`` at generations >= 1.

    Descends from 1 off ``A`` with ``A`` pinned to 0. Pin-1 (escapees never
    come back) gives the upper bound, pin-0 (escapees count as hits) the
    lower bound. Values reported on ``A`` are ``G`` of the pinned limit.

    Raises:
        DomainError: ``A`` is empty or leaves the truncation.
    """
    knobs = knobs if knobs is not None else SolverKnobs()
    ball = _truncation(model, radius, knobs)
    target = tuple(A)
    idx = _target_indices(ball, target)
    F = TruncatedMap(model, ball)
    start = np.ones(len(ball))
    start[idx] = 0.0

    def pinned(outside: float) -> Callable[[np.ndarray], np.ndarray]:
        def step(z: np.ndarray) -> np.ndarray:
            out = F(z, outside)
            out[idx] = 0.0
            return out
        return step

    results = []
    for outside in (0.0, 1.0):
        z, it, res = _iterate(pinned(outside), start, False, knobs, f"never-hit (outside={outside:g})")
        values = F(z, outside)
        z = z.copy()
        z[idx] = values[idx]
        results.append((z, it, res))
    (lower, it_lo, res_lo), (upper, it_hi, res_hi) = results
    _check_order(lower, upper, knobs, "never-hit bracket")
    return ExtinctionVector("never-hit", target, ball.radius, ball.labels, lower, upper,
                            (it_lo, it_hi), (res_lo, res_hi),
                            res_lo < knobs.tol and res_hi < knobs.tol, dict(ball.index))


def local_extinction_vector(model: BRWModel, A: Optional[Iterable[Label]] = None,
                            radius: Optional[int] = None, knobs: Optional[SolverKnobs] = None,
                            init: str = "never-hit", verify: bool = True) -> ExtinctionVector:
    """
    Bracket ``q(., A)``, the probability that ``A`` is visited finitely often.

    The ascending iteration starts from 0 on ``A`` and from the never-hit
    probabilities off ``A``; ``init="zero"`` starts from 0 everywhere instead,
    whose limit is the global extinction vector (kept as a cross-check).

    With ``verify`` the ordering ``q <= q(., A) <= q(., {y})`` is checked
    against the global bracket and a single target vertex.

    Raises:
        DomainError: ``A`` is empty or leaves the truncation.
        NumericalError: The ordering check fails.
    """
    knobs = knobs if knobs is not None else SolverKnobs()
    if A is None:
        vec = global_extinction_bracket(model, radius, knobs)
        vec.kind = "local"
        return vec
    target = tuple(A)
    ball = _truncation(model, radius, knobs)
    idx = _target_indices(ball, target)
    F = TruncatedMap(model, ball)
    if init == "never-hit":
        hit = never_hit_bracket(model, target, ball.radius, knobs)
        starts = [hit.lower.copy(), hit.upper.copy()]
        first_slack = 100 * knobs.tol
    elif init == "zero":
        starts = [np.zeros(len(ball)), np.zeros(len(ball))]
        first_slack = 0.0
    else:
        raise ValueError(f"init must be 'never-hit' or 'zero', got {init!r}")
    for s in starts:
        s[idx] = 0.0
    results = []
    for outside, z0 in zip((0.0, 1.0), starts):
        results.append(_iterate(lambda z, o=outside: F(z, o), z0, True, knobs,
                                f"local extinction (outside={outside:g})", first_slack))
    (lower, it_lo, res_lo), (upper, it_hi, res_hi) = results
    _check_order(lower, upper, knobs, "local extinction bracket")
    vec = ExtinctionVector("local", target, ball.radius, ball.labels, lower, upper,
                           (it_lo, it_hi), (res_lo, res_hi),
                           res_lo < knobs.tol and res_hi < knobs.tol, dict(ball.index))
    if verify and init == "never-hit":
        _verify_ordering(model, vec, ball, knobs)
    return vec


def _verify_ordering(model: BRWModel, vec: ExtinctionVector, ball: Ball, knobs: SolverKnobs) -> None:
    slack = max(1e-8, 100 * knobs.tol)
    glob = global_extinction_bracket(model, ball.radius, knobs)
    if np.any(glob.lower > vec.lower + slack) or np.any(glob.upper > vec.upper + slack):
        raise NumericalError("local extinction fell below global extinction")
    if vec.target is not None and len(vec.target) > 1:
        single = local_extinction_vector(model, vec.target[:1], ball.radius, knobs, verify=False)
        if np.any(vec.lower > single.lower + slack) or np.any(vec.upper > single.upper + slack):
            raise NumericalError("enlarging the target set increased local extinction")


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------

def _interior(ball: Ball) -> List[int]:
    return [int(i) for i in np.flatnonzero(ball.interior)]


def _hat(z: float, q: float) -> float:
    if q >= 1.0 - 1e-15:
        return 1.0
    return (z - q) / (1.0 - q)


def maximum_principle_check(model: BRWModel, z: VectorLike, qbar: VectorLike,
                            radius: Optional[int] = None, tol: float = 1e-8,
                            enforce_precondition: bool = True) -> Certificate:
    """
    Check the maximum principle for a vector with ``G(z) >= z``.

    With ``h = (z - q)/(1 - q)`` (``h = 1`` where ``q = 1``), at every interior
    vertex either ``h`` is constant over the out-neighbors and equal to
    ``h(x)``, or some out-neighbor has ``h`` strictly larger than ``h(x)``,
    both up to ``tol``. The first vertex where neither holds is returned as the
    witness.

    Raises:
        DomainError: ``enforce_precondition`` is set and ``G(z|x) < z(x) - tol``
            somewhere in the interior.
    """
    knobs = SolverKnobs()
    ball = _truncation(model, radius, knobs)
    zf = _as_function(z)
    qf = _as_function(qbar)
    labels: List[Label] = []
    slack: List[float] = []
    witness = None
    for i in _interior(ball):
        x = ball.labels[i]
        nbrs = model.out_neighbors(x)
        if not nbrs:
            continue
        if enforce_precondition:
            gx = float(model.law(x).G(zf))
            if gx < float(zf(x)) - tol:
                raise DomainError(f"G(z|{x!r}) = {gx:.6g} is below z = {float(zf(x)):.6g}")
        hx = _hat(float(zf(x)), float(qf(x)))
        hy = [_hat(float(zf(y)), float(qf(y))) for y in nbrs]
        best, worst = max(hy), min(hy)
        labels.append(x)
        slack.append(best - hx)
        if witness is None and best <= hx + tol and worst < hx - tol:
            witness = x
    payload = {"z": z, "qbar": qbar, "radius": ball.radius, "tol": tol,
               "enforce_precondition": enforce_precondition}
    return Certificate("maximum-principle-witness", tuple(labels), payload,
                       np.asarray(slack, dtype=float), witness is None, witness,
                       {"checked": len(labels)})


def mv_witness(never_hit: VectorLike, qbar: VectorLike, labels: Optional[Iterable[Label]] = None) -> Dict[Label, float]:
    """
    ``max(h, q)`` coordinatewise.

    For ``h`` a never-hit vector of ``A`` this keeps ``G(v) >= v`` off ``A``
    and puts ``v`` in ``[q, 1]``, as ``mv_certificate_check`` requires.
    """
    if labels is None:
        if isinstance(never_hit, ExtinctionVector):
            labels = never_hit.labels
        elif isinstance(never_hit, Mapping):
            labels = list(never_hit)
        else:
            raise ValueError("labels are required when never_hit is a callable")
    hf = _as_function(never_hit)
    qf = _as_function(qbar)
    return {x: max(float(hf(x)), float(qf(x))) for x in labels}


def mv_certificate_check(model: BRWModel, A: Iterable[Label], v: VectorLike, qbar: VectorLike,
                         radius: Optional[int] = None, tol: float = 1e-8) -> Certificate:
    """
    Check a certificate that strong local survival fails at ``A``.

    Conditions, on ``B(root, radius)``:

    1. ``G(v|x) >= v(x)`` for interior ``x`` outside ``A``;
    2. some ``x0`` outside ``A`` has ``t(x0) > max_A t`` where
       ``t = (v - q)/(1 - q)``, compared strictly with zero tolerance.

    Args:
        A: Finite nonempty target set inside the truncation.
        v: Candidate vector with ``q <= v <= 1``.
        qbar: Global extinction vector.

    Returns:
        Certificate: ``witness`` is ``x0``; ``slack`` holds condition 1.

    Raises:
        DomainError: ``v`` leaves ``[q, 1]`` or ``A`` is empty.
    """
    knobs = SolverKnobs()
    ball = _truncation(model, radius, knobs)
    target = tuple(A)
    _target_indices(ball, target)
    inside = set(target)
    vf = _as_function(v)
    qf = _as_function(qbar)
    for x in ball.labels:
        vx, qx = float(vf(x)), float(qf(x))
        if vx < qx - 1e-12 or vx > 1.0 + 1e-12:
            raise DomainError(f"v({x!r}) = {vx} is outside [{qx}, 1]")
    labels: List[Label] = []
    slack: List[float] = []
    failing = None
    for i in _interior(ball):
        x = ball.labels[i]
        if x in inside:
            continue
        s = float(model.law(x).G(vf)) - float(vf(x))
        labels.append(x)
        slack.append(s)
        if failing is None and s < -tol:
            failing = x
    t = {x: _hat(float(vf(x)), float(qf(x))) if float(qf(x)) < 1.0 - 1e-15 else 0.0 for x in ball.labels}
    top_a = max(t[a] for a in target)
    x0 = None
    best = top_a
    for x in ball.labels:
        if x not in inside and t[x] > best:
            best, x0 = t[x], x
    verified = failing is None and x0 is not None
    detail = {"max_on_A": top_a, "margin": best - top_a,
              "failing": None if failing is None else repr(failing)}
    payload = {"A": target, "v": v, "qbar": qbar, "radius": ball.radius, "tol": tol}
    return Certificate("strong-local-failure", tuple(labels), payload,
                       np.asarray(slack, dtype=float), verified, x0, detail)


def global_survival_certificate_check(model: BRWModel, z: VectorLike, x0: Optional[Label] = None,
                                      radius: Optional[int] = None, tol: float = 1e-10) -> Certificate:
    """
    Check ``G(z|x) <= z(x)`` on the interior together with ``z(x0) < 1``.

    Such a ``z`` bounds the extinction probability from above, so a verified
    certificate shows global survival from ``x0`` (default: the root).
    """
    knobs = SolverKnobs()
    ball = _truncation(model, radius, knobs)
    if x0 is None:
        x0 = model.space.root
    zf = _as_function(z)
    _checked(zf, ball.labels)
    labels: List[Label] = []
    slack: List[float] = []
    failing = None
    for i in _interior(ball):
        x = ball.labels[i]
        s = float(zf(x)) - float(model.law(x).G(zf))
        labels.append(x)
        slack.append(s)
        if failing is None and s < -tol:
            failing = x
    verified = failing is None and float(zf(x0)) < 1.0
    payload = {"z": z, "x0": x0, "radius": ball.radius, "tol": tol}
    return Certificate("global-survival", tuple(labels), payload, np.asarray(slack, dtype=float),
                       verified, failing if failing is not None else x0,
                       {"z_x0": float(zf(x0)), "failing": None if failing is None else repr(failing)})
