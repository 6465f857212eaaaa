"""
Concrete branching random walks with their known analytic facts.

Each catalog entry builds a model together with an ``ExampleDescriptor``
listing facts (critical values, extinction probabilities, verdicts) that the
command-line ``reproduce`` task and the test suite check against computed
values.
"""
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from .errors import DomainError, ModelRejectedError
from .model import (BRWModel, ExplicitFiniteLaw, FiniteOffspring, FiniteSpace,
                    IndependentDiffusionLaw, Label, LazySpace, Projection, ReproductionLaw,
                    discrete_counterpart, project_local_isomorphism)

logger = logging.getLogger(__name__)

Sequence_ = Callable[[int], Any]


@dataclass
class KnownFact:
    """
    One analytic fact about an example.

    Attributes:
        name (str): Short identifier, unique within the example.
        kind (str): Which checker verifies it (see ``brwlab.cli.FACT_CHECKERS``).
        expected: Expected value (number, verdict string or bool).
        tolerance (float): Allowed absolute deviation for numbers.
        reference (str): Where the fact comes from, in words.
        params (Dict): Extra inputs for the checker.
    """
    name: str
    kind: str
    expected: Any
    tolerance: float
    reference: str
    params: Dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "kind": self.kind,
            "expected": self.expected if isinstance(self.expected, (bool, int, float, str)) else repr(self.expected),
            "tolerance": self.tolerance,
            "reference": self.reference,
            "params": {k: repr(v) for k, v in self.params.items()},
        }


@dataclass
class ExampleDescriptor:
    """
    A catalog model and what is known about it.

    Attributes:
        id (str): Catalog id.
        params (Dict): Parameters the model was built with.
        facts (List[KnownFact]): Facts to check.
        model (BRWModel): The model.
        type_map (Optional[Callable]): Fiber map onto a finite model, when
            the example is locally isomorphic to one.
        section (Optional[Callable]): Representative of each fiber of a
            lazy projection.
        validation_radius (int): Ball radius used for structural checks.
        extras (Dict): Witness vectors and other inputs used by the facts.
    """
    id: str
    params: Dict[str, Any]
    facts: List[KnownFact]
    model: BRWModel
    type_map: Optional[Callable[[Label], Label]] = None
    section: Optional[Callable[[Label], Label]] = None
    validation_radius: int = 20
    extras: Dict[str, Any] = field(default_factory=dict)

    def fact(self, name: str) -> KnownFact:
        for f in self.facts:
            if f.name == name:
                return f
        raise KeyError(name)

    def to_json(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "params": {k: repr(v) for k, v in self.params.items()},
            "facts": [f.to_json() for f in self.facts],
            "validation_radius": self.validation_radius,
        }


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _smallest_root(poly: Polynomial) -> float:
    """Smallest root in [0, 1] of ``poly`` (1 is always a root of ``f(q) - q``)."""
    best = 1.0
    for r in poly.roots():
        if abs(r.imag) < 1e-12 and -1e-12 <= r.real <= 1.0:
            best = min(best, max(float(r.real), 0.0))
    return best


def _pgf_poly(pmf: Mapping[int, Any]) -> Polynomial:
    coef = np.zeros(max(pmf) + 1)
    for k, p in pmf.items():
        coef[k] += float(p)
    return Polynomial(coef)


def _complement_of_tail_product(alpha: Sequence_, n: int, terms: int = 400) -> float:
    """``1 - prod_{i >= n} (1 - alpha(i))`` for summable ``alpha``."""
    log_product = math.fsum(math.log1p(-float(alpha(i))) for i in range(n, n + terms))
    return -math.expm1(log_product)


# ---------------------------------------------------------------------------
# Lattices and trees
# ---------------------------------------------------------------------------

def lattice_Zd(d: int, lam: Any, cap: int = 10_000) -> BRWModel:
    """
    Edge-breeding BRW on ``Z^d``: every neighbor at rate 1, intensity ``lam``.

    Example:
        >>> build_moment_kernel(lattice_Zd(2, 0.5)).row_sum((0, 0))
        2.0
    """
    if d < 1:
        raise ModelRejectedError(f"dimension must be at least 1, got {d}")

    def neighbors(x: Tuple[int, ...]) -> List[Tuple[int, ...]]:
        out = []
        for i in range(d):
            for s in (1, -1):
                y = list(x)
                y[i] += s
                out.append(tuple(y))
        return out

    return discrete_counterpart(lambda x: {y: 1 for y in neighbors(x)}, lam, root=(0,) * d, cap=cap,
                                depth=lambda x: sum(abs(c) for c in x), neighbors=neighbors,
                                name=f"Z^{d}")


DECORATIONS = ("none", "loop", "clique", "halfline")


def homogeneous_tree(d: int, lam: Any, decoration: str = "none", cap: int = 10_000,
                     loop_at: Label = (), loop_rate: Any = 2, clique: int = 4) -> BRWModel:
    """
    Edge-breeding BRW on the ``d``-regular tree, optionally decorated at the root.

    Tree vertices are paths of child indices from the root ``()``. Decorations:

    - ``loop``: extra rate ``loop_rate`` from ``loop_at`` to itself;
    - ``clique``: ``clique`` extra vertices ``("c", i)`` forming a complete
      graph with the root;
    - ``halfline``: a copy of the nonnegative integers ``("h", n)`` attached
      at the root.

    Raises:
        ModelRejectedError: ``d < 3`` or an unknown decoration.
    """
    if d < 3:
        raise ModelRejectedError(f"tree degree must be at least 3, got {d}")
    if decoration not in DECORATIONS:
        raise ModelRejectedError(f"decoration must be one of {DECORATIONS}, got {decoration!r}")
    if decoration == "clique" and clique < 1:
        raise ModelRejectedError(f"clique size must be at least 1, got {clique}")
    clique_nodes = [("c", i) for i in range(1, clique + 1)] if decoration == "clique" else []

    def neighbors(x: Tuple[Any, ...]) -> List[Tuple[Any, ...]]:
        if x and isinstance(x[0], str):
            if x[0] == "c":
                return [()] + [c for c in clique_nodes if c != x]
            n = x[1]
            return [() if n == 1 else ("h", n - 1), ("h", n + 1)]
        out: List[Tuple[Any, ...]] = []
        if x:
            out.append(x[:-1])
        out.extend(x + (c,) for c in range(d if not x else d - 1))
        if not x:
            out.extend(clique_nodes)
            if decoration == "halfline":
                out.append(("h", 1))
        return out

    def rates(x: Tuple[Any, ...]) -> Dict[Tuple[Any, ...], Any]:
        row: Dict[Tuple[Any, ...], Any] = {y: 1 for y in neighbors(x)}
        if decoration == "loop" and x == loop_at:
            row[x] = row.get(x, 0) + loop_rate
        return row

    def depth(x: Tuple[Any, ...]) -> int:
        if x and isinstance(x[0], str):
            return 1 if x[0] == "c" else x[1]
        return len(x)

    return discrete_counterpart(rates, lam, root=(), cap=cap, depth=depth, neighbors=neighbors,
                                name=f"T_{d}" + ("" if decoration == "none" else f"+{decoration}"))


def radial_tree(m: Sequence[int], lam: Any, cap: int = 10_000) -> BRWModel:
    """
    Edge-breeding BRW on the radial tree where a vertex at depth ``k`` has
    ``m[k % len(m)]`` children.
    """
    m = tuple(int(v) for v in m)
    if not m or min(m) < 1:
        raise ModelRejectedError(f"branching numbers must be at least 1, got {m}")

    def neighbors(x: Tuple[int, ...]) -> List[Tuple[int, ...]]:
        out = [x[:-1]] if x else []
        out.extend(x + (c,) for c in range(m[len(x) % len(m)]))
        return out

    return discrete_counterpart(lambda x: {y: 1 for y in neighbors(x)}, lam, root=(), cap=cap,
                                depth=len, neighbors=neighbors, name=f"radial{m}")


def radial_projection(model: BRWModel, radius: int = 4,
                      section: Optional[Callable[[int], Label]] = None) -> Projection:
    """
    Project a tree model onto depths ``0, 1, 2, ...``.

    The fiber map is the space's depth function; the default section picks
    the vertex reached by always taking child 0.

    Raises:
        NotLocallyIsomorphicError: Vertices at one depth reproduce differently.
    """
    space = model.space
    if not isinstance(space, LazySpace) or space.depth(space.root) is None:
        raise DomainError("radial projection needs a lazy space with a depth function")
    section = section if section is not None else (lambda k: (0,) * k)
    return project_local_isomorphism(model, space.depth, radius, section=section)  # type: ignore[arg-type]


# ---------------------------------------------------------------------------
# Branching processes
# ---------------------------------------------------------------------------

GW_DEFAULT = {0: Fraction(1, 4), 2: Fraction(3, 4)}


def galton_watson(pmf: Optional[Mapping[int, Any]] = None) -> ExampleDescriptor:
    """Galton-Watson process as a BRW on one vertex."""
    pmf = dict(GW_DEFAULT if pmf is None else pmf)
    offspring = FiniteOffspring(pmf)
    law = ExplicitFiniteLaw(({0: k}, p) for k, p in offspring.pmf.items())
    model = BRWModel(FiniteSpace([0]), {0: law}, name="galton-watson")
    q = _smallest_root(_pgf_poly(offspring.pmf) - Polynomial([0, 1]))
    mean = float(offspring.mean)
    facts = [
        KnownFact("extinction", "extinction", q, 1e-9,
                  "smallest fixed point of the offspring generating function", {"at": 0}),
        KnownFact("local", "local_verdict", "survives" if mean > 1 else "dies", 0.0,
                  "a branching process survives iff its mean exceeds 1", {"at": 0, "N": 5}),
    ]
    if pmf == GW_DEFAULT:
        facts.append(KnownFact("survival", "survival_mc", 1.0 - q, 0.0,
                               "complement of the extinction probability",
                               {"mode": "global", "start": 0, "trials": 2000, "horizon": 60,
                                "cap": 2000, "compare": "contains", "slack": 0.02,
                                "acceptance": {"trials": 100_000, "horizon": 200, "compare": "within",
                                               "tolerance": 0.005}}))
    return ExampleDescriptor("galton-watson", {"pmf": pmf}, facts, model, lambda x: 0,
                             validation_radius=1)


def continuous_bp(lam_k: Any = 2) -> ExampleDescriptor:
    """Discrete counterpart of a one-site continuous-time BRW with ``lambda k_xx = lam_k``."""
    model = discrete_counterpart({0: {0: 1}}, lam_k, name="continuous-bp")
    q = min(1.0, 1.0 / float(lam_k))
    facts = [KnownFact("extinction", "extinction", q, 1e-9,
                       "extinction of the counterpart is min(1, 1/(lambda k))", {"at": 0})]
    return ExampleDescriptor("continuous-bp", {"lam_k": lam_k}, facts, model, lambda x: 0,
                             validation_radius=1)


def two_type_bp(pmf: Optional[Mapping[int, Any]] = None, p: Any = Fraction(4, 5)) -> ExampleDescriptor:
    """
    Two-type process: a type-1 particle has ``k`` type-2 children with
    probability ``pmf[k]``; a type-2 particle has one type-1 child with
    probability ``p``.
    """
    pmf = dict(GW_DEFAULT if pmf is None else pmf)
    p = Fraction(p) if not isinstance(p, float) else p
    if not 0 < p <= 1:
        raise ModelRejectedError(f"p must be in (0, 1], got {p}")
    offspring = FiniteOffspring(pmf)
    laws = {
        1: ExplicitFiniteLaw(({2: k}, w) for k, w in offspring.pmf.items()),
        2: ExplicitFiniteLaw([({1: 1}, p), ({}, 1 - p)]),
    }
    model = BRWModel(FiniteSpace([1, 2]), laws, name="two-type-bp")
    pf = float(p)
    inner = Polynomial([1.0 - pf, pf])
    q1 = _smallest_root(_pgf_poly(offspring.pmf)(inner) - Polynomial([0, 1]))
    q2 = 1.0 - pf + pf * q1
    verdict = "survives" if pf * float(offspring.mean) > 1 else "dies"
    facts = [
        KnownFact("q1", "extinction", q1, 1e-9, "fixed point of the composed generating function", {"at": 1}),
        KnownFact("q2", "extinction", q2, 1e-9, "fixed point of the composed generating function", {"at": 2}),
        KnownFact("period", "period", 2, 0.0, "children always change type", {"at": 1}),
        KnownFact("local", "local_verdict", verdict, 0.0,
                  "survival iff p times the mean offspring exceeds 1", {"at": 1, "N": 10}),
    ]
    return ExampleDescriptor("two-type-bp", {"pmf": pmf, "p": p}, facts, model, validation_radius=2)


# ---------------------------------------------------------------------------
# Chains on the nonnegative integers and the strip
# ---------------------------------------------------------------------------

def _chain_predecessors(x: int) -> List[int]:
    return [y for y in (x - 1, x, x + 1) if y >= 0]


def _chain_model(law: Callable[[int], ReproductionLaw], name: str, cap: int = 10_000) -> BRWModel:
    space = LazySpace(0, lambda x: law(x).support(), cap=cap, depth=lambda x: x,
                      predecessors=_chain_predecessors)
    return BRWModel(space, law, name=name)


def strip(p: Any = Fraction(9, 10), cap: int = 10_000) -> ExampleDescriptor:
    """
    Reducible BRW on ``N x {0, 1}``.

    With probability ``p``: ``(i, 0)`` places two children at ``(i+1, 0)``
    and one at ``(i, 1)``; ``(i, 1)`` places two at ``(i-1, 1)``; ``(0, 1)``
    places one at itself. Otherwise no children. Every class is a single
    vertex, yet the process started at ``(0, 0)`` visits ``(0, 1)``
    infinitely often with positive probability.

    Raises:
        ModelRejectedError: ``p <= 1/2``.
    """
    p = Fraction(p) if not isinstance(p, float) else p
    if not (Fraction(1, 2) < p <= 1):
        raise ModelRejectedError(f"strip example needs 1/2 < p <= 1, got {p}")
    rest = 1 - p

    def law(x: Tuple[int, int]) -> ReproductionLaw:
        i, j = x
        if j == 0:
            return ExplicitFiniteLaw([({(i + 1, 0): 2, (i, 1): 1}, p), ({}, rest)])
        if i == 0:
            return ExplicitFiniteLaw([({(0, 1): 1}, p), ({}, rest)])
        return ExplicitFiniteLaw([({(i - 1, 1): 2}, p), ({}, rest)])

    def predecessors(x: Tuple[int, int]) -> List[Tuple[int, int]]:
        i, j = x
        if j == 0:
            return [(i - 1, 0)] if i else []
        out = [(i, 0), (i + 1, 1)]
        if i == 0:
            out.append((0, 1))
        return out

    space = LazySpace((0, 0), lambda x: law(x).support(), cap=cap, depth=lambda x: x[0],
                      predecessors=predecessors)
    model = BRWModel(space, law, name="strip")
    facts = [
        KnownFact("dies-at-origin", "local_verdict", "dies", 0.0,
                  "every vertex is its own class with zero return moments", {"at": (0, 0), "N": 12}),
        KnownFact("dies-at-corner", "local_verdict", "dies", 0.0,
                  "the corner vertex places at most one child on itself", {"at": (0, 1), "N": 12}),
        KnownFact("local-survival-mc", "survival_mc", 0.5, 0.0,
                  "particles from the bottom row keep feeding the corner",
                  {"mode": "local", "start": (0, 0), "A": [(0, 1)], "trials": 400, "horizon": 16,
                   "cap": 200_000, "compare": "at_least", "acceptance": {"trials": 10_000}}),
    ]
    return ExampleDescriptor("strip", {"p": p}, facts, model, validation_radius=10)


def lambda_w_attained_chain(lam: Any = 1, cap: int = 10_000) -> ExampleDescriptor:
    """
    Continuous-time counterpart on ``N`` with rates ``k_01 = 2``,
    ``k_{n,n+1} = (1 + 1/n)^2`` and ``k_{n,n-1} = 3^-n``, whose global
    critical intensity 1 admits a Collatz-Wielandt witness.
    """
    def rates(n: int) -> Dict[int, Fraction]:
        if n == 0:
            return {1: Fraction(2)}
        return {n + 1: (1 + Fraction(1, n)) ** 2, n - 1: Fraction(1, 3 ** n)}

    model = discrete_counterpart(rates, lam, root=0, cap=cap, depth=lambda n: n,
                                 predecessors=_chain_predecessors, name="lambda-w-attained-chain")
    unit = discrete_counterpart(rates, 1, root=0, cap=cap, depth=lambda n: n,
                                predecessors=_chain_predecessors, name="lambda-w-attained-chain/K")

    def witness(n: int) -> float:
        return 0.5 if n == 0 else 1.0 / (n + 1)

    facts = [
        KnownFact("witness-at-1", "cw_witness", True, 0.0,
                  "v(0)=1/2, v(n)=1/(n+1) solves the inequality at intensity 1",
                  {"lam": 1.0, "radius": 30}),
        KnownFact("witness-below-1", "cw_witness", False, 0.0,
                  "no solution exists below intensity 1", {"lam": 0.9, "radius": 30}),
    ]
    return ExampleDescriptor("lambda-w-attained-chain", {"lam": lam}, facts, model, validation_radius=20,
                             extras={"witness": witness, "unit_model": unit})


def noext_pair(variant: str = "A", cap: int = 10_000) -> ExampleDescriptor:
    """
    Two BRWs on ``N`` with the same first-moment matrix and different fates.

    With ``p_i = 4^-i``: variant A places ``2 * 4^i`` children at ``i+1`` and
    one at ``i-1`` with probability ``p_i`` (dies out globally); variant B
    places 4 children at ``i+1`` with probability 1/2 and one at ``i-1``
    with probability ``p_i`` (survives). Vertex 0 places two children at 1
    (A) or four with probability 1/2 (B).
    """
    if variant not in ("A", "B"):
        raise ModelRejectedError(f"variant must be 'A' or 'B', got {variant!r}")
    half = Fraction(1, 2)

    def law(i: int) -> ReproductionLaw:
        p = Fraction(1, 4 ** i)
        if variant == "A":
            if i == 0:
                return ExplicitFiniteLaw([({1: 2}, 1)])
            return ExplicitFiniteLaw([({i + 1: 2 * 4 ** i, i - 1: 1}, p), ({}, 1 - p)])
        if i == 0:
            return ExplicitFiniteLaw([({1: 4}, half), ({}, half)])
        return ExplicitFiniteLaw([({i + 1: 4}, half), ({i - 1: 1}, p), ({}, half - p)])

    model = _chain_model(law, f"noext-{variant}", cap)
    facts = [KnownFact("kernels-equal", "kernels_equal", True, 0.0,
                       "both variants have m_{i,i+1} = 2 and m_{i,i-1} = 4^-i", {"radius": 40})]
    if variant == "A":
        facts.append(KnownFact("survival-upper", "survival_upper", 0.05, 0.0,
                               "variant A dies out globally", {"radius": 40}))
    else:
        facts.append(KnownFact("survival-mc", "survival_mc", 0.2, 0.0,
                               "variant B survives with positive probability",
                               {"mode": "global", "start": 0, "trials": 300, "horizon": 30,
                                "cap": 50_000, "compare": "at_least", "acceptance": {"trials": 10_000}}))
    return ExampleDescriptor("noext-pair", {"variant": variant}, facts, model, validation_radius=40)


def _default_drift(n: int) -> Fraction:
    return 1 - Fraction(1, 2 ** (n + 1))


def drift_chain(p: Optional[Sequence_] = None, cap: int = 10_000) -> ExampleDescriptor:
    """
    Irreducible BRW on ``N`` with row sums below 1 that survives globally.

    At ``n >= 1``: one child at ``n+1`` with probability ``p(n)``, one at
    ``n-1`` with probability ``(1 - p(n))/2``, none otherwise. At 0 the
    child that would go left stays at 0.
    """
    p = p if p is not None else _default_drift

    def law(n: int) -> ReproductionLaw:
        pn = p(n)
        back = (1 - pn) / 2
        return ExplicitFiniteLaw([({n + 1: 1}, pn), ({max(n - 1, 0): 1}, back), ({}, back)])

    def witness(n: int) -> float:
        return _complement_of_tail_product(lambda i: 1 - p(i), n)

    model = _chain_model(law, "drift-chain", cap)
    facts = [
        KnownFact("global-certificate", "global_certificate", True, 0.0,
                  "z(n) = 1 - prod_{i>=n} p_i is a supersolution below 1", {"radius": 30}),
        KnownFact("row-sums", "row_sums_below_one", True, 0.0,
                  "every particle has less than one child on average", {"radius": 30}),
    ]
    return ExampleDescriptor("drift-chain", {"p": p}, facts, model, validation_radius=20,
                             extras={"witness": witness})


def _default_binary(i: int) -> Fraction:
    if i == 1:
        return Fraction(1, 2)
    return 1 - Fraction(1, 4 ** i)


def binary_drift_chain(p: Optional[Sequence_] = None, cap: int = 10_000) -> ExampleDescriptor:
    """
    Binary branching (two children with probability 3/4) with children moving
    independently right with probability ``p(i)`` and left otherwise; 0 always
    sends right.

    Globally it is the Galton-Watson process with extinction 1/3; with the
    drift summable (``sum 2^i (1 - p_i) < inf``) strong local survival fails.

    Raises:
        ModelRejectedError: The summability condition is violated.
    """
    p = p if p is not None else _default_binary
    check = sequence_condition_check(lambda i: 1 - float(p(i)), lambda i: 2.0 ** i, horizon=200, start=2)
    if check.verdict == "diverges":
        raise ModelRejectedError("drift must satisfy sum 2^i (1 - p_i) < infinity")
    offspring = FiniteOffspring(GW_DEFAULT)

    def law(i: int) -> ReproductionLaw:
        if i == 0:
            return IndependentDiffusionLaw(offspring, {1: 1})
        pi = p(i)
        return IndependentDiffusionLaw(offspring, {i + 1: pi, i - 1: 1 - pi})

    model = _chain_model(law, "binary-drift-chain", cap)
    facts = [
        KnownFact("extinction", "extinction", 1 / 3, 1e-9,
                  "locally isomorphic to the Galton-Watson process", {"at": 0, "via": "projection"}),
        KnownFact("local", "local_verdict", "survives", 0.0,
                  "two-step return moment 1.5 * 0.75 exceeds 1", {"at": 0, "N": 6}),
        KnownFact("no-strong-local", "mv_certificate", True, 0.0,
                  "summable drift lets surviving colonies escape", {"A": [0], "radius": 30}),
        KnownFact("summable-drift", "sequence_condition", "converges", 0.0,
                  "sum 2^i (1 - p_i) is finite", {}),
    ]
    return ExampleDescriptor("binary-drift-chain", {"p": p}, facts, model, lambda x: 0,
                             validation_radius=20, extras={"sequence_check": check})


def growth_bounds(pmf: Mapping[int, Any], qbar: float, count: int) -> List[int]:
    """
    ``N_1, ..., N_count`` such that every particle at generation ``i`` has at
    most ``N_{i+1}`` children with probability above ``qbar`` overall.

    Uses ``alpha_i = ((1 + qbar)/2)^(2^-i)`` and the smallest ``N`` with
    ``P(children <= N) > alpha_{i}^(1/prod_{j<i} N_j)``.
    """
    offspring = FiniteOffspring(pmf)
    ks = sorted(offspring.pmf)
    cdf = np.cumsum([float(offspring.pmf[k]) for k in ks])
    base = math.log((1.0 + qbar) / 2.0)
    out: List[int] = []
    log_prod = 0.0
    for i in range(1, count + 1):
        threshold = math.exp(base * 2.0 ** -i / math.exp(log_prod))
        j = int(np.searchsorted(cdf, threshold, side="right"))
        N = ks[min(j, len(ks) - 1)]
        N = max(N, 1)
        out.append(N)
        log_prod += math.log(N)
    return out


def growing_drift_chain(p0: Any = Fraction(1, 4), cap: int = 10_000, levels: int = 200) -> ExampleDescriptor:
    """
    Binary branching with drift ``1 - p_i = 1/(2 (i+1)^2 prod_{j<=i} N_j)``
    and a self-loop ``1 - p0`` at 0, whose local survival at 0 does not
    make survival strong.

    Raises:
        ModelRejectedError: ``(1 - p0)`` times the mean offspring is at most 1.
    """
    p0 = Fraction(p0) if not isinstance(p0, float) else p0
    offspring = FiniteOffspring(GW_DEFAULT)
    if not (1 - p0) * offspring.mean > 1:
        raise ModelRejectedError("the self-loop at 0 must give local survival: (1 - p0) * mean > 1")
    bounds = [1] + growth_bounds(GW_DEFAULT, 1.0 / 3.0, levels)
    prods = np.cumprod([float(b) for b in bounds])

    def drift(i: int) -> Fraction:
        prod = int(prods[min(i, len(prods) - 1)])
        return 1 - Fraction(1, 2 * (i + 1) ** 2 * prod)

    def law(i: int) -> ReproductionLaw:
        if i == 0:
            return IndependentDiffusionLaw(offspring, {0: 1 - p0, 1: p0})
        pi = drift(i)
        return IndependentDiffusionLaw(offspring, {i + 1: pi, i - 1: 1 - pi})

    model = _chain_model(law, "growing-drift-chain", cap)
    facts = [
        KnownFact("extinction", "extinction", 1 / 3, 1e-9,
                  "locally isomorphic to the Galton-Watson process", {"at": 0, "via": "projection"}),
        KnownFact("local", "local_verdict", "survives", 0.0,
                  "the self-loop at 0 has mean above 1", {"at": 0, "N": 4}),
        KnownFact("no-strong-local", "mv_certificate", True, 0.0,
                  "fast drift lets surviving colonies escape", {"A": [0], "radius": 30}),
    ]
    return ExampleDescriptor("growing-drift-chain", {"p0": p0}, facts, model, lambda x: 0,
                             validation_radius=20, extras={"bounds": bounds[:10]})


# ---------------------------------------------------------------------------
# Graphs with a finite quotient
# ---------------------------------------------------------------------------

def square_tree_fgraph(lam: Any = 1, cap: int = 10_000) -> ExampleDescriptor:
    """
    A 4-cycle with a binary branch hanging from each of its vertices and a
    pendant leaf on every non-leaf vertex, with edge-breeding.

    Non-leaf vertices have three non-leaf neighbors and one leaf; the quotient
    onto {non-leaf, leaf} has rate matrix ``[[3, 1], [1, 0]]``.
    """
    def neighbors(x: Tuple[Any, ...]) -> List[Tuple[Any, ...]]:
        kind = x[0]
        if kind == "leaf":
            return [x[1]]
        if kind == "sq":
            i = x[1]
            return [("sq", (i + 1) % 4), ("sq", (i - 1) % 4), ("br", i, ()), ("leaf", x)]
        i, path = x[1], x[2]
        parent = ("sq", i) if not path else ("br", i, path[:-1])
        return [parent, ("br", i, path + (0,)), ("br", i, path + (1,)), ("leaf", x)]

    def depth(x: Tuple[Any, ...]) -> int:
        if x[0] == "leaf":
            return depth(x[1]) + 1
        return 0 if x[0] == "sq" else len(x[2]) + 1

    def g(x: Tuple[Any, ...]) -> int:
        return 1 if x[0] == "leaf" else 0

    model = discrete_counterpart(lambda x: {y: 1 for y in neighbors(x)}, lam, root=("sq", 0), cap=cap,
                                 depth=depth, neighbors=neighbors, name="square-tree")
    rho = (3 + math.sqrt(13)) / 2
    facts = [
        KnownFact("lambda_w", "lambda_w", 1 / rho, 1e-9,
                  "reciprocal Perron root of the quotient rate matrix", {"radius": 4}),
        KnownFact("quotient-perron", "perron", rho, 1e-10,
                  "largest root of t^2 - 3t - 1", {"matrix": [[3, 1], [1, 0]]}),
    ]
    return ExampleDescriptor("square-tree-fgraph", {"lam": lam}, facts, model, g, validation_radius=6)


def zd(d: int = 1, lam: Any = 1) -> ExampleDescriptor:
    model = lattice_Zd(d, lam)
    horizon = 400 if d == 1 else 40
    facts = [
        KnownFact("lambda_w", "lambda_w", 1 / (2 * d), 1e-9, "row sums are 2d", {"radius": 3}),
        KnownFact("lambda_s", "lambda_s", 1 / (2 * d), 0.02,
                  "amenable lattice: both critical values coincide", {"horizon": horizon}),
    ]
    return ExampleDescriptor("zd", {"d": d, "lam": lam}, facts, model, lambda x: 0,
                             validation_radius=10 if d <= 2 else 5)


def tree(d: int = 3, lam: Any = 1, decoration: str = "none", **kwargs: Any) -> ExampleDescriptor:
    model = homogeneous_tree(d, lam, decoration, **kwargs)
    facts: List[KnownFact] = []
    g = None
    section = None
    if decoration == "none":
        g = lambda x: 0  # noqa: E731
        section = lambda k: (0,) * k  # noqa: E731
        facts.append(KnownFact("lambda_w", "lambda_w", 1 / d, 1e-9, "regular graph of degree d", {"radius": 3}))
        facts.append(KnownFact("lambda_s", "lambda_s", 1 / (2 * math.sqrt(d - 1)), 0.01,
                               "spectral radius of the tree", {"horizon": 60, "radial": True}))
    elif decoration == "loop":
        rate = kwargs.get("loop_rate", 2)
        at = kwargs.get("loop_at", ())
        if float(lam) * float(rate) > 1:
            facts.append(KnownFact("loop-local", "local_verdict", "survives", 0.0,
                                   "lambda k_yy > 1 gives local survival at y", {"at": at, "N": 4}))
    elif decoration == "clique":
        k = kwargs.get("clique", 4)
        if float(lam) * k > 1:
            facts.append(KnownFact("clique-local", "local_verdict", "survives", 0.0,
                                   "a complete graph of degree k survives locally above 1/k",
                                   {"at": (), "N": 4}))
    return ExampleDescriptor("tree", {"d": d, "lam": lam, "decoration": decoration, **kwargs}, facts,
                             model, g, section, validation_radius=8)


def radial_tree_example(m: Sequence[int] = (1, 2), lam: Any = 1) -> ExampleDescriptor:
    model = radial_tree(m, lam)
    facts = [KnownFact("uniform-growth", "uniform_growth", True, 0.0,
                       "two-step growth is uniform over the tree",
                       {"nbar": 2, "eps": 1.2, "K_w": math.sqrt(6), "radius": 8})]
    return ExampleDescriptor("radial-tree", {"m": tuple(m), "lam": lam}, facts, model,
                             section=lambda k: (0,) * k, validation_radius=10)


CATALOG: Dict[str, Callable[..., ExampleDescriptor]] = {
    "galton-watson": galton_watson,
    "continuous-bp": continuous_bp,
    "two-type-bp": two_type_bp,
    "strip": strip,
    "lambda-w-attained-chain": lambda_w_attained_chain,
    "noext-pair": noext_pair,
    "drift-chain": drift_chain,
    "binary-drift-chain": binary_drift_chain,
    "growing-drift-chain": growing_drift_chain,
    "square-tree-fgraph": square_tree_fgraph,
    "zd": zd,
    "tree": tree,
    "radial-tree": radial_tree_example,
}


def build_example(example_id: str, **params: Any) -> ExampleDescriptor:
    """
    Build a catalog example.

    Raises:
        KeyError: Unknown id.
        ModelRejectedError: Parameters outside the example's domain.

    Example:
        >>> desc = build_example("two-type-bp")
        >>> round(desc.fact("q1").expected, 6)
        0.583333
    """
    try:
        builder = CATALOG[example_id]
    except KeyError:
        raise KeyError(f"unknown example {example_id!r}; known: {', '.join(sorted(CATALOG))}") from None
    desc = builder(**params)
    logger.debug("built example %s with %d facts", example_id, len(desc.facts))
    return desc


# ---------------------------------------------------------------------------
# Series conditions
# ---------------------------------------------------------------------------

@dataclass
class SequenceCheck:
    """
    Partial sum of ``k_i alpha_i`` and partial product of ``(1 - alpha_i)^k_i``.

    ``verdict`` is ``"converges"``, ``"diverges"`` or ``"inconclusive"``;
    the sum converges iff the product is positive (for ``k_i >= 1``
    eventually).
    """
    partial_sum: float
    log_product: float
    tail_bound: Optional[float]
    verdict: str
    horizon: int

    @property
    def product(self) -> float:
        return math.exp(self.log_product)


def sequence_condition_check(alpha: Sequence_, k: Sequence_, horizon: int = 200, start: int = 1) -> SequenceCheck:
    """
    Decide ``sum k_i alpha_i < inf`` from terms up to ``horizon``.

    The tail is classified from the last computed terms: a ratio bounded
    below 1 gives a geometric tail bound, a decay exponent above 1 gives a
    p-series bound, an exponent at most 1 means divergence.

    Raises:
        DomainError: Some ``alpha_i`` is outside ``[0, 1)``.

    Example:
        >>> sequence_condition_check(lambda i: 4.0 ** -i, lambda i: 2.0 ** i).verdict
        'converges'
    """
    if horizon < start + 20:
        raise ValueError("horizon must leave at least 20 terms")
    terms: List[float] = []
    logs: List[float] = []
    for i in range(start, horizon + 1):
        a = float(alpha(i))
        if not 0.0 <= a < 1.0:
            raise DomainError(f"alpha_{i} = {a} is outside [0, 1)")
        ki = float(k(i))
        terms.append(ki * a)
        logs.append(ki * math.log1p(-a))
    partial = math.fsum(terms)
    log_product = math.fsum(logs)
    tail = terms[-20:]
    verdict = "inconclusive"
    bound: Optional[float] = None
    if all(t == 0.0 for t in tail):
        verdict, bound = "converges", 0.0
    elif all(t > 0.0 for t in tail):
        ratios = [b / a for a, b in zip(tail, tail[1:])]
        r = max(ratios)
        if r < 0.95:
            verdict, bound = "converges", tail[-1] * r / (1.0 - r)
        else:
            n_hi = horizon
            n_lo = horizon // 2
            t_lo = terms[n_lo - start] if n_lo >= start else None
            if t_lo:
                s = -math.log(terms[-1] / t_lo) / math.log(n_hi / n_lo)
                if s > 1.05:
                    verdict, bound = "converges", terms[-1] * n_hi / (s - 1.0)
                elif s <= 1.0 + 1e-6:
                    verdict = "diverges"
    return SequenceCheck(partial, log_product, bound, verdict, horizon)
