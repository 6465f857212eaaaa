"""
Vertex spaces, reproduction laws and first-moment kernels.

A branching random walk is the couple (space, law family): ``BRWModel``
holds the vertex space and a function ``x -> ReproductionLaw``. Every other
module consumes models through the small surface defined here: laws
evaluated at a vertex, exact breadth-first balls, and the moment kernel
``m_xy`` (expected number of children sent from ``x`` to ``y``).
"""
import csv
import logging
import math
import threading
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import (Any, Callable, Dict, Hashable, Iterable, Iterator, List,
                    Mapping, Optional, Sequence, Set, Tuple, Union)

import networkx as nx
import numpy as np
import scipy.sparse as sp

from .errors import (AssumptionViolationError, ModelRejectedError,
                     NotLocallyIsomorphicError, TruncationError)

logger = logging.getLogger(__name__)

Label = Hashable
Number = Union[float, int, Fraction]
ZFunc = Callable[[Label], Number]

NORMALIZATION_TOL = 1e-12
DEFAULT_LAZY_CAP = 10_000
DEFAULT_MAX_ROW_SUM = 1e12
DEFAULT_MAX_BALL = 2_000_000
PREDECESSOR_LIMIT = 100_000


def _as_number(value: Any) -> Number:
    """Keep ints and Fractions exact, parse rational strings, coerce the rest to float."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int) and not isinstance(value, bool):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value)
    return float(value)


# ---------------------------------------------------------------------------
# Offspring configurations and count laws
# ---------------------------------------------------------------------------

class OffspringConfig:
    """
    A finitely supported assignment ``vertex -> number of children``.

    Zero counts are dropped, so two configs are equal iff they place the same
    number of children on every vertex.

    Example:
        >>> f = OffspringConfig({"a": 2, "b": 1})
        >>> f.total
        3
    """
    __slots__ = ("_items", "_key")

    def __init__(self, counts: Optional[Mapping[Label, int]] = None) -> None:
        items: List[Tuple[Label, int]] = []
        merged: Dict[Label, int] = {}
        for y, k in (counts or {}).items():
            if isinstance(k, float) and not k.is_integer():
                raise ModelRejectedError(f"offspring count at {y!r} must be an integer, got {k}")
            k = int(k)
            if k < 0:
                raise ModelRejectedError(f"offspring count at {y!r} must be nonnegative, got {k}")
            if k:
                merged[y] = merged.get(y, 0) + k
        items = list(merged.items())
        self._items: Tuple[Tuple[Label, int], ...] = tuple(items)
        self._key = frozenset(items)

    @property
    def total(self) -> int:
        return sum(k for _, k in self._items)

    def items(self) -> Tuple[Tuple[Label, int], ...]:
        return self._items

    def get(self, y: Label, default: int = 0) -> int:
        for label, k in self._items:
            if label == y:
                return k
        return default

    def inside(self, members: Set[Label]) -> int:
        return sum(k for y, k in self._items if y in members)

    def mapped(self, g: Callable[[Label], Label]) -> "OffspringConfig":
        out: Dict[Label, int] = {}
        for y, k in self._items:
            gy = g(y)
            out[gy] = out.get(gy, 0) + k
        return OffspringConfig(out)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, OffspringConfig) and self._key == other._key

    def __hash__(self) -> int:
        return hash(self._key)

    def __repr__(self) -> str:
        return f"OffspringConfig({dict(self._items)!r})"


class OffspringLaw(ABC):
    """Law of the number of children of one particle."""

    @property
    @abstractmethod
    def mean(self) -> Number:
        """Expected number of children."""

    @abstractmethod
    def pgf(self, s: Number) -> Number:
        """Probability generating function at ``s``."""

    @abstractmethod
    def normalization_error(self) -> float:
        """Distance of the total mass from 1."""

    @abstractmethod
    def prob_one_inside(self, a: float) -> float:
        """Probability that exactly one child lands in a set hit with probability ``a``."""

    @abstractmethod
    def signature(self) -> Tuple[Any, ...]:
        """Comparable description used to match laws across a fiber."""


class FiniteOffspring(OffspringLaw):
    """
    Offspring-count law with finite support.

    Args:
        pmf (Mapping[int, Number]): ``k -> P(k children)``. Rational strings
            such as ``"3/4"`` are parsed to exact fractions.
    """

    def __init__(self, pmf: Mapping[int, Any]) -> None:
        parsed: Dict[int, Number] = {}
        for k, p in pmf.items():
            k = int(k)
            p = _as_number(p)
            if k < 0:
                raise ModelRejectedError(f"offspring count {k} is negative")
            if p < 0:
                raise ModelRejectedError(f"probability of {k} children is negative: {p}")
            if p:
                parsed[k] = parsed.get(k, 0) + p
        if not parsed:
            raise ModelRejectedError("offspring law has no mass")
        self.pmf: Dict[int, Number] = dict(sorted(parsed.items()))

    @property
    def mean(self) -> Number:
        return sum(k * p for k, p in self.pmf.items())

    @property
    def max_children(self) -> int:
        return max(self.pmf)

    def pgf(self, s: Number) -> Number:
        return sum(p * s ** k for k, p in self.pmf.items())

    def normalization_error(self) -> float:
        return abs(float(sum(self.pmf.values())) - 1.0)

    def prob_one_inside(self, a: float) -> float:
        return float(sum(float(p) * k * a * (1.0 - a) ** (k - 1) for k, p in self.pmf.items() if k >= 1))

    def signature(self) -> Tuple[Any, ...]:
        return ("finite", tuple((k, float(p)) for k, p in self.pmf.items()))

    def __repr__(self) -> str:
        return f"FiniteOffspring({self.pmf!r})"


class GeometricOffspring(OffspringLaw):
    """
    Geometric offspring count ``P(i) = (1-r) r^i`` with ``r = mean/(1+mean)``.

    Stored by its mean; a mean of 0 is the law with no children.
    """

    def __init__(self, mean: Any) -> None:
        mean = _as_number(mean)
        if mean < 0:
            raise ModelRejectedError(f"geometric mean must be nonnegative, got {mean}")
        self._mean = mean

    @property
    def mean(self) -> Number:
        return self._mean

    @property
    def ratio(self) -> Number:
        return self._mean / (1 + self._mean)

    def pgf(self, s: Number) -> Number:
        return 1 / (1 + self._mean * (1 - s))

    def pmf(self, i: int) -> Number:
        r = self.ratio
        return (1 - r) * r ** i

    def normalization_error(self) -> float:
        return 0.0

    def prob_one_inside(self, a: float) -> float:
        r = float(self.ratio)
        return (1.0 - r) * a * r / (1.0 - r * (1.0 - a)) ** 2

    def signature(self) -> Tuple[Any, ...]:
        return ("geometric", float(self._mean))

    def __repr__(self) -> str:
        return f"GeometricOffspring(mean={self._mean!r})"


def _close_maps(a: Mapping[Any, Any], b: Mapping[Any, Any], tol: float) -> bool:
    if set(a) != set(b):
        return False
    return all(abs(float(a[k]) - float(b[k])) <= tol for k in a)


# ---------------------------------------------------------------------------
# Reproduction laws
# ---------------------------------------------------------------------------

class ReproductionLaw(ABC):
    """
    Law ``mu_x`` of the offspring configuration of a particle at one vertex.

    Implementations are immutable; every query is deterministic.
    """

    @abstractmethod
    def mean_row(self) -> Dict[Label, float]:
        """Row ``y -> m_xy`` of the first-moment matrix."""

    @abstractmethod
    def G(self, z: ZFunc) -> Number:
        """Generating function ``G(z|x)``; exact when ``z`` and the law are rational."""

    @abstractmethod
    def support(self) -> Tuple[Label, ...]:
        """Vertices receiving children with positive probability, in a fixed order."""

    @abstractmethod
    def normalization_error(self) -> float:
        """Largest deviation of a probability vector of this law from total mass 1."""

    @abstractmethod
    def prob_one_child_in(self, members: Set[Label]) -> float:
        """Probability of placing exactly one child inside ``members``."""

    @abstractmethod
    def pushforward(self, g: Callable[[Label], Label]) -> "ReproductionLaw":
        """The law of the configuration seen through ``g``."""

    @abstractmethod
    def matches(self, other: "ReproductionLaw", tol: float) -> bool:
        """Whether ``other`` is the same law up to ``tol``."""


class ExplicitFiniteLaw(ReproductionLaw):
    """
    Finitely many offspring configurations with their probabilities.

    Args:
        configs: Iterable of ``(config, probability)`` pairs. Configs can be
            ``OffspringConfig`` instances or plain mappings; duplicate configs
            are merged. Probabilities given as Fractions (or rational strings)
            stay exact.

    Example:
        >>> law = ExplicitFiniteLaw([({"x": 2}, Fraction(3, 4)), ({}, Fraction(1, 4))])
        >>> law.G(lambda y: Fraction(1, 3))
        Fraction(1, 3)
    """

    def __init__(self, configs: Iterable[Tuple[Any, Any]]) -> None:
        merged: Dict[OffspringConfig, Number] = {}
        for cfg, p in configs:
            if not isinstance(cfg, OffspringConfig):
                cfg = OffspringConfig(cfg)
            p = _as_number(p)
            if p < 0:
                raise ModelRejectedError(f"configuration {cfg!r} has negative probability {p}")
            if p:
                merged[cfg] = merged.get(cfg, 0) + p
        self.configs: Tuple[Tuple[OffspringConfig, Number], ...] = tuple(merged.items())
        row: Dict[Label, float] = {}
        for cfg, p in self.configs:
            for y, k in cfg.items():
                row[y] = row.get(y, 0.0) + float(p) * k
        self._row = row

    def mean_row(self) -> Dict[Label, float]:
        return dict(self._row)

    def G(self, z: ZFunc) -> Number:
        total: Number = 0
        for cfg, p in self.configs:
            term: Number = p
            for y, k in cfg.items():
                term = term * z(y) ** k
            total = total + term
        return total

    def support(self) -> Tuple[Label, ...]:
        return tuple(y for y, v in self._row.items() if v > 0)

    def normalization_error(self) -> float:
        return abs(float(sum(p for _, p in self.configs)) - 1.0)

    def prob_one_child_in(self, members: Set[Label]) -> float:
        return float(sum(p for cfg, p in self.configs if cfg.inside(members) == 1))

    def pushforward(self, g: Callable[[Label], Label]) -> "ExplicitFiniteLaw":
        return ExplicitFiniteLaw((cfg.mapped(g), p) for cfg, p in self.configs)

    def matches(self, other: ReproductionLaw, tol: float) -> bool:
        if not isinstance(other, ExplicitFiniteLaw):
            return False
        return _close_maps(dict(self.configs), dict(other.configs), tol)

    def __repr__(self) -> str:
        return f"ExplicitFiniteLaw({list(self.configs)!r})"


class IndependentDiffusionLaw(ReproductionLaw):
    """
    Random number of children, each placed independently with ``p(x, .)``.

    Args:
        offspring (OffspringLaw): Law of the number of children.
        diffusion (Mapping): Row ``y -> p(x, y)`` of a stochastic matrix.
    """

    def __init__(self, offspring: OffspringLaw, diffusion: Mapping[Label, Any]) -> None:
        self.offspring = offspring
        diff: Dict[Label, Number] = {}
        for y, p in diffusion.items():
            p = _as_number(p)
            if p < 0:
                raise ModelRejectedError(f"diffusion probability to {y!r} is negative: {p}")
            if p:
                diff[y] = diff.get(y, 0) + p
        self.diffusion = diff

    def mean_row(self) -> Dict[Label, float]:
        mean = float(self.offspring.mean)
        return {y: float(p) * mean for y, p in self.diffusion.items()}

    def G(self, z: ZFunc) -> Number:
        s: Number = 0
        for y, p in self.diffusion.items():
            s = s + p * z(y)
        if not self.diffusion:
            s = 1
        return self.offspring.pgf(s)

    def support(self) -> Tuple[Label, ...]:
        if not self.offspring.mean:
            return ()
        return tuple(self.diffusion)

    def normalization_error(self) -> float:
        err = self.offspring.normalization_error()
        if self.offspring.mean:
            err = max(err, abs(float(sum(self.diffusion.values())) - 1.0))
        return err

    def prob_one_child_in(self, members: Set[Label]) -> float:
        a = float(sum(p for y, p in self.diffusion.items() if y in members))
        if a == 0.0:
            return 0.0
        return self.offspring.prob_one_inside(a)

    def pushforward(self, g: Callable[[Label], Label]) -> "IndependentDiffusionLaw":
        out: Dict[Label, Number] = {}
        for y, p in self.diffusion.items():
            gy = g(y)
            out[gy] = out.get(gy, 0) + p
        return IndependentDiffusionLaw(self.offspring, out)

    def matches(self, other: ReproductionLaw, tol: float) -> bool:
        if not isinstance(other, IndependentDiffusionLaw) or isinstance(other, ContinuousCounterpartLaw):
            return False
        a, b = self.offspring.signature(), other.offspring.signature()
        if a[0] != b[0] or len(a[1:]) != len(b[1:]):
            return False
        if a[0] == "geometric":
            same = abs(a[1] - b[1]) <= tol
        else:
            same = _close_maps(dict(a[1]), dict(b[1]), tol)
        return same and _close_maps(self.diffusion, other.diffusion, tol)

    def __repr__(self) -> str:
        return f"IndependentDiffusionLaw({self.offspring!r}, {self.diffusion!r})"


class ContinuousCounterpartLaw(IndependentDiffusionLaw):
    """
    Discrete-time counterpart of a continuous-time BRW at one vertex.

    A particle at ``x`` breeds onto ``y`` at rate ``lam * k_xy`` and dies at
    rate 1. The number of children before death is geometric with mean
    ``lam * k(x)`` and each child goes to ``y`` with probability
    ``k_xy / k(x)``. A vertex without rates gets the law with no children.
    """

    def __init__(self, rates: Mapping[Label, Any], lam: Any) -> None:
        lam = _as_number(lam)
        if not lam > 0:
            raise ModelRejectedError(f"intensity lambda must be positive, got {lam}")
        parsed: Dict[Label, Number] = {}
        for y, k in rates.items():
            k = _as_number(k)
            if k < 0:
                raise ModelRejectedError(f"rate to {y!r} is negative: {k}")
            if k:
                parsed[y] = parsed.get(y, 0) + k
        self.rates = parsed
        self.lam = lam
        self.k = sum(parsed.values()) if parsed else 0
        diffusion = {y: r / self.k for y, r in parsed.items()} if self.k else {}
        super().__init__(GeometricOffspring(lam * self.k), diffusion)

    def mean_row(self) -> Dict[Label, float]:
        return {y: float(self.lam * r) for y, r in self.rates.items()}

    def G(self, z: ZFunc) -> Number:
        if not self.k:
            return 1
        s: Number = 0
        for y, r in self.rates.items():
            s = s + r * z(y)
        return 1 / (1 + self.lam * (self.k - s))

    def H(self, z: ZFunc, here: Label) -> Number:
        """First-event generating function; shares its fixed points with ``G``."""
        rho = self.lam * self.k
        mz: Number = 0
        for y, r in self.rates.items():
            mz = mz + self.lam * r * z(y)
        return (z(here) * mz + 1) / (1 + rho)

    def pushforward(self, g: Callable[[Label], Label]) -> "ContinuousCounterpartLaw":
        out: Dict[Label, Number] = {}
        for y, r in self.rates.items():
            gy = g(y)
            out[gy] = out.get(gy, 0) + r
        return ContinuousCounterpartLaw(out, self.lam)

    def matches(self, other: ReproductionLaw, tol: float) -> bool:
        if not isinstance(other, ContinuousCounterpartLaw):
            return False
        return abs(float(self.lam) - float(other.lam)) <= tol and _close_maps(self.rates, other.rates, tol)

    def __repr__(self) -> str:
        return f"ContinuousCounterpartLaw({self.rates!r}, lam={self.lam!r})"


NULL_LAW = ExplicitFiniteLaw([({}, 1)])


# ---------------------------------------------------------------------------
# Vertex spaces
# ---------------------------------------------------------------------------

class VertexSpace(ABC):
    """A countable vertex set with a distinguished root."""

    root: Label
    cap: Optional[int]

    @property
    @abstractmethod
    def is_finite(self) -> bool:
        pass

    def depth(self, label: Label) -> Optional[int]:
        """Distance-like index of ``label`` used to detect escapes; None if unknown."""
        return None

    def predecessors(self, label: Label) -> Optional[Iterable[Label]]:
        """Candidate in-neighbors of ``label``, or None when the space cannot list them."""
        return None


class FiniteSpace(VertexSpace):
    """
    A finite list of vertex labels. Ids are list positions.

    Args:
        labels (Sequence): Each vertex exactly once.
        root: Root label (default: first label).
    """

    def __init__(self, labels: Sequence[Label], root: Optional[Label] = None) -> None:
        self.labels: Tuple[Label, ...] = tuple(labels)
        if not self.labels:
            raise ModelRejectedError("a finite space needs at least one vertex")
        if len(set(self.labels)) != len(self.labels):
            raise ModelRejectedError("finite space lists a vertex more than once")
        self.root = self.labels[0] if root is None else root
        if self.root not in set(self.labels):
            raise ModelRejectedError(f"root {self.root!r} is not a vertex of the space")
        self.cap = None
        self._members = frozenset(self.labels)

    @property
    def is_finite(self) -> bool:
        return True

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: object) -> bool:
        return label in self._members

    def __iter__(self) -> Iterator[Label]:
        return iter(self.labels)


class LazySpace(VertexSpace):
    """
    An infinite (or very large) space generated on demand.

    Args:
        root: Root label.
        neighbors (Callable): ``label -> iterable of labels``; the geometry
            used by builders to attach rates.
        cap (int): Largest ball radius that may be requested.
        depth (Callable, optional): ``label -> int``; labels with depth above
            ``cap`` count as escaped in simulations.
        predecessors (Callable, optional): ``label -> iterable`` of every
            vertex that can send children to ``label``. Lets class analysis
            prove that a class closes up inside a ball.
    """

    def __init__(self, root: Label, neighbors: Callable[[Label], Iterable[Label]],
                 cap: int = DEFAULT_LAZY_CAP,
                 depth: Optional[Callable[[Label], int]] = None,
                 predecessors: Optional[Callable[[Label], Iterable[Label]]] = None) -> None:
        if cap < 0:
            raise ValueError(f"cap must be nonnegative, got {cap}")
        self.root = root
        self.cap = cap
        self._neighbors = neighbors
        self._depth = depth
        self._predecessors = predecessors

    @property
    def is_finite(self) -> bool:
        return False

    def neighbors(self, label: Label) -> Tuple[Label, ...]:
        return tuple(self._neighbors(label))

    def depth(self, label: Label) -> Optional[int]:
        return None if self._depth is None else self._depth(label)

    def predecessors(self, label: Label) -> Optional[Iterable[Label]]:
        return None if self._predecessors is None else self._predecessors(label)


@dataclass(frozen=True)
class Ball:
    """
    Exact out-ball ``B(center, radius)`` of the graph ``{(x, y): m_xy > 0}``.

    Vertices are listed in breadth-first order; ``leaky[i]`` marks boundary
    vertices with out-neighbors outside the ball.
    """
    center: Label
    radius: int
    labels: Tuple[Label, ...]
    dist: np.ndarray
    index: Dict[Label, int]
    leaky: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: object) -> bool:
        return label in self.index

    @property
    def interior(self) -> np.ndarray:
        """Mask of vertices whose whole out-neighborhood lies in the ball."""
        return ~self.leaky


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

LawSource = Union[Mapping[Label, ReproductionLaw], Callable[[Label], ReproductionLaw]]


class BRWModel:
    """
    A branching random walk: vertex space plus one reproduction law per vertex.

    Args:
        space (VertexSpace): Where particles live.
        laws: Mapping ``label -> law`` (finite spaces) or callable
            ``label -> law`` (lazy spaces). Laws are computed once per vertex.
        truncation (Optional[int]): At most this many particles per site
            after each step (None for no limit).
        acceptance (Optional[Callable[[int], float]]): Restrained dynamics;
            a child placed on a site already holding ``k`` accepted children
            in the current step survives with probability ``acceptance(k)``.
        name (str): Free-form identifier used in reports.

    Example:
        >>> space = FiniteSpace(["x"])
        >>> gw = BRWModel(space, {"x": ExplicitFiniteLaw([({"x": 2}, 0.75), ({}, 0.25)])})
        >>> build_moment_kernel(gw).row("x")
        {'x': 1.5}
    """

    def __init__(self, space: VertexSpace, laws: LawSource,
                 truncation: Optional[int] = None,
                 acceptance: Optional[Callable[[int], float]] = None,
                 name: str = "") -> None:
        if truncation is not None and truncation < 1:
            raise ModelRejectedError(f"truncation must be at least 1, got {truncation}")
        self.space = space
        self.truncation = truncation
        self.acceptance = acceptance
        self.name = name
        self._law_source = laws
        self._laws: Dict[Label, ReproductionLaw] = {}
        self._balls: Dict[Tuple[Label, int], Ball] = {}
        self._ids: Dict[Label, int] = {}
        self._labels: List[Label] = []
        self._lock = threading.Lock()
        self._kernel: Optional["MomentKernel"] = None
        if isinstance(space, FiniteSpace):
            for label in space.labels:
                self._register(label)

    def law(self, label: Label) -> ReproductionLaw:
        """Reproduction law at ``label`` (cached; first writer wins)."""
        law = self._laws.get(label)
        if law is not None:
            return law
        source = self._law_source
        if callable(source) and not isinstance(source, Mapping):
            law = source(label)
        else:
            law = source.get(label)  # type: ignore[union-attr]
            if law is None:
                if isinstance(self.space, FiniteSpace) and label in self.space:
                    law = NULL_LAW
                else:
                    raise ModelRejectedError(f"no reproduction law for vertex {label!r}")
        return self._laws.setdefault(label, law)

    def out_neighbors(self, label: Label) -> Tuple[Label, ...]:
        return self.law(label).support()

    def _register(self, label: Label) -> int:
        with self._lock:
            found = self._ids.get(label)
            if found is None:
                found = len(self._labels)
                self._ids[label] = found
                self._labels.append(label)
            return found

    def id_of(self, label: Label) -> int:
        """Dense integer id of ``label``; assigned in breadth-first order from the root."""
        found = self._ids.get(label)
        return found if found is not None else self._register(label)

    def label_of(self, vid: int) -> Label:
        return self._labels[vid]

    def ball(self, center: Optional[Label] = None, radius: int = 1,
             max_vertices: int = DEFAULT_MAX_BALL) -> Ball:
        """
        Exact ball of out-distance ``radius`` around ``center`` (default: root).

        Raises:
            TruncationError: If ``radius`` exceeds a lazy space's cap or the
                ball has more than ``max_vertices`` vertices.
        """
        if center is None:
            center = self.space.root
        if radius < 0:
            raise ValueError(f"radius must be nonnegative, got {radius}")
        cap = self.space.cap
        if cap is not None and radius > cap:
            raise TruncationError(f"radius {radius} exceeds the space cap {cap}")
        key = (center, radius)
        cached = self._balls.get(key)
        if cached is not None:
            return cached
        labels: List[Label] = [center]
        dist: List[int] = [0]
        index: Dict[Label, int] = {center: 0}
        queue = deque([0])
        while queue:
            i = queue.popleft()
            if dist[i] == radius:
                continue
            for y in self.out_neighbors(labels[i]):
                if y not in index:
                    index[y] = len(labels)
                    labels.append(y)
                    dist.append(dist[i] + 1)
                    queue.append(index[y])
                    if len(labels) > max_vertices:
                        raise TruncationError(
                            f"ball of radius {radius} around {center!r} exceeds "
                            f"{max_vertices} vertices"
                        )
        if isinstance(self.space, FiniteSpace) and center == self.space.root and radius >= len(self.space):
            # vertices unreachable from the root still belong to the truncation
            for label in self.space.labels:
                if label not in index:
                    index[label] = len(labels)
                    labels.append(label)
                    dist.append(radius)
        d = np.asarray(dist, dtype=np.int64)
        leaky = np.zeros(len(labels), dtype=bool)
        for i in np.flatnonzero(d == radius):
            leaky[i] = any(y not in index for y in self.out_neighbors(labels[i]))
        if center == self.space.root:
            for label in labels:
                self.id_of(label)
        ball = Ball(center, radius, tuple(labels), d, index, leaky)
        return self._balls.setdefault(key, ball)

    def with_dynamics(self, truncation: Optional[int] = None,
                      acceptance: Optional[Callable[[int], float]] = None) -> "BRWModel":
        """Same space and laws with truncated or restrained dynamics."""
        twin = BRWModel(self.space, self._law_source, truncation, acceptance, self.name)
        twin._laws = self._laws
        return twin

    def __repr__(self) -> str:
        kind = "finite" if self.space.is_finite else "lazy"
        return f"BRWModel(name={self.name!r}, space={kind}, root={self.space.root!r})"


# ---------------------------------------------------------------------------
# Moment kernels
# ---------------------------------------------------------------------------

class MomentKernel:
    """
    First-moment matrix ``M = (m_xy)`` with rows generated on demand.

    Rows are cached with first-writer-wins semantics; they are deterministic,
    so concurrent readers always agree.
    """

    def __init__(self, model: BRWModel, max_row_sum: float = DEFAULT_MAX_ROW_SUM) -> None:
        self.model = model
        self.max_row_sum = max_row_sum
        self._rows: Dict[Label, Dict[Label, float]] = {}
        self._sums: Dict[Label, float] = {}

    def row(self, label: Label) -> Dict[Label, float]:
        found = self._rows.get(label)
        if found is None:
            found = self._rows.setdefault(label, self.model.law(label).mean_row())
        return found

    def row_sum(self, label: Label) -> float:
        found = self._sums.get(label)
        if found is None:
            found = self._sums.setdefault(label, float(math.fsum(self.row(label).values())))
        return found

    def entry(self, x: Label, y: Label) -> float:
        return self.row(x).get(y, 0.0)

    def check_rows(self, ball: Ball) -> float:
        """
        Reject negative, non-finite or oversized rows on ``ball``.

        Returns:
            float: Largest row sum seen.
        """
        worst = 0.0
        for label in ball.labels:
            row = self.row(label)
            if any(v < 0 for v in row.values()):
                raise ModelRejectedError(f"row of {label!r} has a negative moment")
            total = self.row_sum(label)
            if not math.isfinite(total) or total > self.max_row_sum:
                raise ModelRejectedError(
                    f"row sum at {label!r} is {total}, above the bound {self.max_row_sum}"
                )
            worst = max(worst, total)
        return worst

    def matrix(self, ball: Ball, outside: bool = False) -> sp.csr_matrix:
        """
        Restriction of ``M`` to the ball as a CSR matrix.

        Args:
            ball (Ball): Rows and columns, in ball order.
            outside (bool): Append one column collecting all mass sent
                outside the ball.
        """
        n = len(ball)
        rows: List[int] = []
        cols: List[int] = []
        vals: List[float] = []
        for i, label in enumerate(ball.labels):
            for y, v in self.row(label).items():
                j = ball.index.get(y)
                if j is None:
                    if not outside:
                        continue
                    j = n
                rows.append(i)
                cols.append(j)
                vals.append(v)
        shape = (n, n + 1) if outside else (n, n)
        mat = sp.csr_matrix((vals, (rows, cols)), shape=shape, dtype=float)
        mat.sum_duplicates()
        return mat

    def is_non_oriented(self, ball: Ball) -> bool:
        """``m_xy > 0`` iff ``m_yx > 0`` for every edge leaving a non-boundary vertex."""
        for i, label in enumerate(ball.labels):
            if ball.dist[i] >= ball.radius:
                continue
            for y, v in self.row(label).items():
                if v > 0 and self.entry(y, label) <= 0:
                    return False
        return True

    def to_csv(self, path: str, radius: int, center: Optional[Label] = None) -> int:
        """
        Write the restriction to ``B(center, radius)`` as ``src,dst,value`` rows.

        Vertex ids are the model's dense ids. Returns the number of rows.
        """
        ball = self.model.ball(center, radius)
        count = 0
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["src", "dst", "value"])
            for label in ball.labels:
                src = self.model.id_of(label)
                for y, v in self.row(label).items():
                    writer.writerow([src, self.model.id_of(y), repr(float(v))])
                    count += 1
        return count


def build_moment_kernel(model: BRWModel, radius: Optional[int] = None) -> MomentKernel:
    """
    Return the first-moment kernel of ``model`` (one shared instance per model).

    Args:
        model (BRWModel): A validated model.
        radius (Optional[int]): When given, rows on ``B(root, radius)`` are
            checked eagerly.

    Raises:
        ModelRejectedError: A checked row is negative, infinite, or exceeds
            the kernel's row-sum bound.

    Example:
        >>> kernel = build_moment_kernel(lattice_Zd(1, 1.0))
        >>> kernel.row((0,))
        {(1,): 1.0, (-1,): 1.0}
    """
    kernel = model._kernel
    if kernel is None:
        kernel = MomentKernel(model)
        model._kernel = kernel
    if radius is not None:
        kernel.check_rows(model.ball(None, radius))
    return kernel


def discrete_counterpart(rates: Union[Mapping[Label, Mapping[Label, Any]], Callable[[Label], Mapping[Label, Any]]],
                         lam: Any, root: Optional[Label] = None, cap: int = DEFAULT_LAZY_CAP,
                         depth: Optional[Callable[[Label], int]] = None,
                         predecessors: Optional[Callable[[Label], Iterable[Label]]] = None,
                         neighbors: Optional[Callable[[Label], Iterable[Label]]] = None,
                         name: str = "") -> BRWModel:
    """
    Discrete-time counterpart of the continuous-time BRW with rates ``k_xy``.

    The result has geometric offspring of mean ``lam * k(x)`` and diffusion
    ``k_xy / k(x)``, so its moment kernel is ``lam * K``. Vertices with no
    outgoing rate get the law with no children.

    Args:
        rates: Rate rows; a mapping ``x -> {y: k_xy}`` gives a finite space,
            a callable gives a lazy space rooted at ``root``.
        lam: Intensity ``lambda > 0``.

    Raises:
        ModelRejectedError: ``lam <= 0``, a negative rate, or a lazy space
            without a root.

    Example:
        >>> m = discrete_counterpart({"x": {"x": 2}}, 1)
        >>> m.law("x").offspring.pmf(0)
        Fraction(1, 3)
    """
    lam = _as_number(lam)
    if not lam > 0:
        raise ModelRejectedError(f"intensity lambda must be positive, got {lam}")
    if isinstance(rates, Mapping):
        order: List[Label] = []
        seen: Set[Label] = set()
        for x, row in rates.items():
            for label in (x, *row.keys()):
                if label not in seen:
                    seen.add(label)
                    order.append(label)
        laws = {x: ContinuousCounterpartLaw(rates.get(x, {}), lam) for x in order}
        return BRWModel(FiniteSpace(order, root), laws, name=name)
    if root is None:
        raise ModelRejectedError("a lazy rate family needs a root vertex")
    rate_fn = rates

    def law(x: Label) -> ReproductionLaw:
        return ContinuousCounterpartLaw(rate_fn(x), lam)

    nbrs = neighbors if neighbors is not None else (lambda x: tuple(rate_fn(x)))
    space = LazySpace(root, nbrs, cap=cap, depth=depth, predecessors=predecessors)
    return BRWModel(space, law, name=name)


# ---------------------------------------------------------------------------
# Structure: classes, periods, validation
# ---------------------------------------------------------------------------

@dataclass
class VertexClass:
    """
    One strongly connected component of the support graph restricted to a ball.

    Attributes:
        members (tuple): Labels in ball order.
        period (int): gcd of cycle lengths through the class; 0 when the
            class is a single vertex without a loop.
        trivial (bool): Single vertex without a loop.
        complete (bool): The class is known to be a whole class of the
            infinite graph, not a piece cut by the ball.
    """
    members: Tuple[Label, ...]
    period: int
    trivial: bool
    complete: bool

    def __len__(self) -> int:
        return len(self.members)


@dataclass
class ClassDecomposition:
    """Classes of a ball, their reachability order and a label lookup."""
    ball: Ball
    classes: List[VertexClass]
    order: List[int]
    class_index: Dict[Label, int]
    graph: Any = field(repr=False, default=None)

    def class_of(self, label: Label) -> VertexClass:
        return self.classes[self.class_index[label]]

    def reachable_classes(self, label: Label) -> List[int]:
        """Indices of classes reachable from the class of ``label`` (itself included)."""
        start = self.class_index[label]
        return sorted({start} | nx.descendants(self.graph, start))


def _support_digraph(kernel: MomentKernel, ball: Ball) -> "nx.DiGraph":
    graph = nx.DiGraph()
    graph.add_nodes_from(range(len(ball)))
    for i, label in enumerate(ball.labels):
        for y, v in kernel.row(label).items():
            j = ball.index.get(y)
            if j is not None and v > 0:
                graph.add_edge(i, j)
    return graph


def _period(graph: "nx.DiGraph", members: List[int]) -> int:
    inside = set(members)
    start = members[0]
    level = {start: 0}
    queue = deque([start])
    g = 0
    while queue:
        u = queue.popleft()
        for v in graph.successors(u):
            if v not in inside:
                continue
            if v not in level:
                level[v] = level[u] + 1
                queue.append(v)
            else:
                g = math.gcd(g, level[u] + 1 - level[v])
    return abs(g)


def _exact_class(model: BRWModel, x: Label, limit: int = PREDECESSOR_LIMIT) -> Optional[Set[Label]]:
    """The full class of ``x`` when its ancestor set is finite and listable."""
    if model.space.is_finite:
        return None
    if model.space.predecessors(x) is None:
        return None
    ancestors: Set[Label] = {x}
    queue = deque([x])
    while queue:
        v = queue.popleft()
        for w in model.space.predecessors(v) or ():
            if w in ancestors or v not in model.law(w).support():
                continue
            ancestors.add(w)
            if len(ancestors) > limit:
                return None
            queue.append(w)
    members = {x}
    queue = deque([x])
    while queue:
        v = queue.popleft()
        for y in model.out_neighbors(v):
            if y in ancestors and y not in members:
                members.add(y)
                queue.append(y)
    return members


def analyze_digraph(model: BRWModel, radius: int, center: Optional[Label] = None) -> ClassDecomposition:
    """
    Strongly connected components of the support graph on ``B(center, radius)``.

    A class is marked complete when nothing reachable from it leaves the
    ball, or when the space can list predecessors and the class of one of
    its vertices closes up to exactly these members.

    Example:
        >>> dec = analyze_digraph(lattice_Zd(1, 1.0), 5)
        >>> [c.period for c in dec.classes]
        [2]
    """
    ball = model.ball(center, radius)
    kernel = build_moment_kernel(model)
    graph = _support_digraph(kernel, ball)
    components = sorted((sorted(c) for c in nx.strongly_connected_components(graph)), key=lambda c: c[0])
    cond = nx.condensation(graph, scc=[set(c) for c in components])
    leaky_classes = {cond.graph["mapping"][int(i)] for i in np.flatnonzero(ball.leaky)}
    tainted: Set[int] = set(leaky_classes)
    for c in leaky_classes:
        tainted |= nx.ancestors(cond, c)
    classes: List[VertexClass] = []
    class_index: Dict[Label, int] = {}
    for idx, comp in enumerate(components):
        members = tuple(ball.labels[i] for i in comp)
        trivial = len(comp) == 1 and not graph.has_edge(comp[0], comp[0])
        period = 0 if trivial else _period(graph, comp)
        complete = idx not in tainted
        if not complete:
            exact = _exact_class(model, members[0])
            complete = exact is not None and exact == set(members)
        classes.append(VertexClass(members, period, trivial, complete))
        for label in members:
            class_index[label] = idx
    order = list(nx.topological_sort(cond))
    return ClassDecomposition(ball, classes, order, class_index, cond)


@dataclass
class ValidationReport:
    """Outcome of ``validate_model`` on one ball."""
    radius: int
    vertices: int
    max_row_sum: float
    classes: int
    boundary_classes: int
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "radius": self.radius,
            "vertices": self.vertices,
            "max_row_sum": self.max_row_sum,
            "classes": self.classes,
            "boundary_classes": self.boundary_classes,
            "notes": list(self.notes),
        }


def validate_model(model: BRWModel, radius: Optional[int] = None) -> ValidationReport:
    """
    Check normalization, bounded rows and the irreducibility assumption on a ball.

    The assumption: every class must contain a vertex that places a number
    of children different from one inside the class with positive
    probability. Classes cut by the ball are flagged, not judged.

    Args:
        model (BRWModel): Model to check.
        radius (Optional[int]): Ball radius around the root; defaults to the
            size of a finite space.

    Returns:
        ValidationReport: Counts and notes.

    Raises:
        ModelRejectedError: A probability vector does not sum to 1 or a row
            is unbounded.
        AssumptionViolationError: A complete class violates the assumption.
    """
    if radius is None:
        if not model.space.is_finite:
            raise ValueError("radius is required for lazy spaces")
        radius = len(model.space)  # type: ignore[arg-type]
    ball = model.ball(None, radius)
    for label in ball.labels:
        err = model.law(label).normalization_error()
        if err > NORMALIZATION_TOL:
            raise ModelRejectedError(
                f"law at {label!r} is not normalized (total mass off by {err:.3g})"
            )
    kernel = build_moment_kernel(model)
    worst = kernel.check_rows(ball)
    decomposition = analyze_digraph(model, radius)
    flagged = 0
    for cls in decomposition.classes:
        if not cls.complete:
            flagged += 1
            continue
        if cls.trivial:
            continue
        inside = set(cls.members)
        if all(model.law(y).prob_one_child_in(inside) >= 1.0 - NORMALIZATION_TOL for y in cls.members):
            raise AssumptionViolationError(cls.members)
    notes = []
    if not model.space.is_finite:
        notes.append("row sums are bounded on the generated ball only")
    if flagged:
        notes.append(f"{flagged} classes touch the ball boundary and were not checked")
    logger.debug("validated %r on radius %d: %d vertices", model, radius, len(ball))
    return ValidationReport(radius, len(ball), worst, len(decomposition.classes), flagged, notes)


# ---------------------------------------------------------------------------
# Local isomorphisms
# ---------------------------------------------------------------------------

@dataclass
class Projection:
    """
    Result of projecting a model along a fiber map ``g``.

    Attributes:
        model (BRWModel): The projected model on ``Y``.
        residual (float): Largest ``|G_X(z o g | x) - G_Y(z | g(x))|`` seen.
        fibers (Dict): ``y -> number of sampled vertices`` in its fiber.
        g (Callable): The fiber map.
    """
    model: BRWModel
    residual: float
    fibers: Dict[Label, int]
    g: Callable[[Label], Label]


def project_local_isomorphism(model: BRWModel, g: Callable[[Label], Label], radius: int,
                              section: Optional[Callable[[Label], Label]] = None,
                              samples: int = 20, seed: int = 0,
                              tol: float = NORMALIZATION_TOL) -> Projection:
    """
    Push the laws of ``model`` forward along ``g`` and check they agree per fiber.

    Without ``section`` the image is finite and every ``y`` must have a
    sampled preimage in ``B(root, radius)``. With ``section`` (``y -> some x
    with g(x) = y``) the image is a lazy space whose laws are pushed forward
    from the representatives.

    Args:
        model (BRWModel): Source model.
        g (Callable): Fiber map on labels.
        radius (int): Ball on which fibers are sampled.
        section (Callable, optional): Representative of each fiber.
        samples (int): Number of random ``z`` used for the residual.
        seed (int): Seed for those ``z``.

    Returns:
        Projection: The projected model and the residual.

    Raises:
        NotLocallyIsomorphicError: Two sampled vertices of one fiber push
            forward to different laws.
        TruncationError: A fiber reached by some law has no sampled vertex.

    Example:
        >>> proj = project_local_isomorphism(homogeneous_tree(3, 1.0), lambda x: 0, 4)
        >>> proj.model.law(0).mean_row()
        {0: 3.0}
    """
    ball = model.ball(None, radius)
    reference: Dict[Label, Tuple[Label, ReproductionLaw]] = {}
    fibers: Dict[Label, int] = {}
    order: List[Label] = []
    targets: List[Label] = []
    for label in ball.labels:
        y = g(label)
        pushed = model.law(label).pushforward(g)
        found = reference.get(y)
        if found is None:
            reference[y] = (label, pushed)
            order.append(y)
        elif not found[1].matches(pushed, tol):
            raise NotLocallyIsomorphicError(found[0], label, y)
        fibers[y] = fibers.get(y, 0) + 1
        targets.extend(pushed.support())
    if section is None:
        missing = [y for y in targets if y not in reference]
        if missing:
            raise TruncationError(f"fiber {missing[0]!r} has no vertex in the ball; increase radius")
        laws_y = {y: reference[y][1] for y in order}
        projected = BRWModel(FiniteSpace(order, g(model.space.root)), laws_y,
                             model.truncation, model.acceptance, name=f"{model.name}/g")
    else:
        for y in order:
            if g(section(y)) != y:
                raise ModelRejectedError(f"section maps {y!r} outside its fiber")

        def law_y(y: Label) -> ReproductionLaw:
            if y in reference:
                return reference[y][1]
            return model.law(section(y)).pushforward(g)

        space = LazySpace(g(model.space.root), lambda y: law_y(y).support(),
                          cap=model.space.cap if model.space.cap is not None else DEFAULT_LAZY_CAP)
        projected = BRWModel(space, law_y, model.truncation, model.acceptance, name=f"{model.name}/g")

    rng = np.random.default_rng(seed)
    residual = 0.0
    for _ in range(samples):
        values: Dict[Label, float] = {}

        def z_y(y: Label) -> float:
            if y not in values:
                values[y] = float(rng.random())
            return values[y]

        for y in order:
            z_y(y)
        for label in ball.labels:
            lhs = float(model.law(label).G(lambda w: z_y(g(w))))
            rhs = float(projected.law(g(label)).G(z_y))
            residual = max(residual, abs(lhs - rhs))
    logger.debug("projection of %r onto %d fibers, residual %.3g", model, len(order), residual)
    return Projection(projected, residual, fibers, g)
