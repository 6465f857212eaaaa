"""
Monte Carlo simulation of plain, truncated and restrained branching random walks.

Each trial owns a Philox stream keyed by ``(seed, trial)``, so outcomes do
not depend on the number of worker threads. Truncated processes for several
values of ``m`` are driven by the offspring samples of the largest one:
the ``k``-th particle at a site reproduces identically in every process
that holds at least ``k`` particles there.
"""
import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import binomtest

from .errors import CouplingError
from .model import (BRWModel, ExplicitFiniteLaw, FiniteOffspring, GeometricOffspring,
                    IndependentDiffusionLaw, Label)

logger = logging.getLogger(__name__)

EXTINCT = "extinct"
HORIZON = "horizon"
POPULATION_CAP = "population-cap"
ESCAPED = "escaped-ball"

MODES = ("global", "local", "strong-local")


@dataclass
class TrialPlan:
    """
    Settings shared by every trial of a simulation.

    Attributes:
        trials (int): Number of independent trials.
        horizon (int): Generations per trial.
        population_cap (int): Stop a trial once it holds more particles.
        seed (int): Master seed; trial ``i`` uses the stream ``(seed, i)``.
        truncation (Optional[int]): At most ``m`` particles per site after
            each step; None keeps the model's own setting.
        acceptance (Optional[Callable[[int], float]]): Restrained dynamics;
            None keeps the model's own setting.
        target_sets (Mapping[str, Sequence]): Named vertex sets whose visits
            are counted.
        workers (int): Threads running trials.
        local_window (float): Fraction of the run at its end in which a visit
            counts as local survival.
    """
    trials: int = 1000
    horizon: int = 100
    population_cap: int = 10 ** 7
    seed: int = 0
    truncation: Optional[int] = None
    acceptance: Optional[Callable[[int], float]] = None
    target_sets: Mapping[str, Sequence[Label]] = field(default_factory=dict)
    workers: int = 1
    local_window: float = 0.25

    def __post_init__(self) -> None:
        if self.trials < 0:
            raise ValueError(f"trials must be nonnegative, got {self.trials}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be at least 1, got {self.horizon}")
        if self.population_cap < 1:
            raise ValueError(f"population_cap must be at least 1, got {self.population_cap}")
        if self.truncation is not None and self.truncation < 1:
            raise ValueError(f"truncation must be at least 1, got {self.truncation}")
        if self.workers < 1:
            raise ValueError(f"workers must be at least 1, got {self.workers}")
        if not 0.0 < self.local_window <= 1.0:
            raise ValueError(f"local_window must be in (0, 1], got {self.local_window}")


@dataclass
class Population:
    """Particle counts per vertex at one generation."""
    counts: Dict[Label, int]
    generation: int = 0

    @classmethod
    def single(cls, x: Label, count: int = 1) -> "Population":
        return cls({x: count})

    @property
    def total(self) -> int:
        return sum(self.counts.values())


@dataclass
class SimOutcome:
    """
    Summary of one trial.

    ``first_visits``/``last_visits`` hold the first and last generation
    (at least 1) with a particle in each target set, or None.
    """
    stop_reason: str
    final_generation: int
    max_population: int
    final_population: int
    first_visits: Dict[str, Optional[int]]
    last_visits: Dict[str, Optional[int]]
    total_visits: Dict[str, int]
    sizes: Tuple[int, ...]

    @property
    def alive(self) -> bool:
        return self.stop_reason != EXTINCT

    @property
    def censored(self) -> bool:
        return self.stop_reason in (POPULATION_CAP, ESCAPED)


class _Overflow(Exception):
    pass


class AliasTable:
    """
    Walker alias table for a finite categorical distribution.

    Built once in ``O(k)``; each draw costs one integer and one uniform.
    """

    def __init__(self, weights: Sequence[float]) -> None:
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or not len(w) or np.any(w < 0) or not w.sum() > 0:
            raise ValueError(f"weights must be a nonempty nonnegative vector with positive sum, got {weights!r}")
        k = len(w)
        scaled = w * (k / w.sum())
        self.prob = np.ones(k)
        self.alias = np.arange(k)
        small = [i for i in range(k) if scaled[i] < 1.0]
        large = [i for i in range(k) if scaled[i] >= 1.0]
        while small and large:
            s, g = small.pop(), large.pop()
            self.prob[s] = scaled[s]
            self.alias[s] = g
            scaled[g] -= 1.0 - scaled[s]
            (small if scaled[g] < 1.0 else large).append(g)
        # leftovers are 1 up to rounding
        for i in small + large:
            self.prob[i] = 1.0

    def __len__(self) -> int:
        return len(self.prob)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """``n`` independent category indices."""
        i = rng.integers(0, len(self.prob), size=n)
        return np.where(rng.random(n) < self.prob[i], i, self.alias[i])


class _Sampler:
    """Per-vertex offspring sampler; ``targets`` are the possible child sites."""

    def __init__(self, law: Any) -> None:
        self.kind = "none"
        self.targets: Tuple[Label, ...] = ()
        if isinstance(law, ExplicitFiniteLaw):
            support = sorted({y for cfg, _ in law.configs for y, _ in cfg.items()}, key=repr)
            if not support:
                return
            self.kind = "explicit"
            self.targets = tuple(support)
            where = {y: j for j, y in enumerate(self.targets)}
            self.C = np.zeros((len(law.configs), len(self.targets)))
            for c, (cfg, _) in enumerate(law.configs):
                for y, k in cfg.items():
                    self.C[c, where[y]] = float(k)
            self.table = AliasTable([float(p) for _, p in law.configs])
        elif isinstance(law, IndependentDiffusionLaw):
            if not law.diffusion or not law.offspring.mean:
                return
            self.targets = tuple(law.diffusion)
            self.place = AliasTable([float(p) for p in law.diffusion.values()])
            if isinstance(law.offspring, GeometricOffspring):
                self.kind = "geometric"
                self.ratio = float(law.offspring.ratio)
            elif isinstance(law.offspring, FiniteOffspring):
                self.kind = "finite"
                self.values = np.asarray(list(law.offspring.pmf), dtype=np.int64)
                self.table = AliasTable([float(p) for p in law.offspring.pmf.values()])
            else:
                raise TypeError(f"cannot sample offspring law {law.offspring!r}")
        else:
            raise TypeError(f"cannot sample reproduction law {law!r}")

    def _counts(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.kind == "geometric":
            if self.ratio <= 0.0:
                return np.zeros(n, dtype=np.int64)
            u = 1.0 - rng.random(n)
            return np.floor(np.log(u) / math.log(self.ratio)).astype(np.int64)
        return self.values[self.table.sample(rng, n)]

    def totals(self, rng: np.random.Generator, n: int, limit: int) -> np.ndarray:
        """Children per target summed over ``n`` particles."""
        if self.kind == "explicit":
            idx = self.table.sample(rng, n)
            return np.bincount(idx, minlength=len(self.table)) @ self.C
        counts = self._counts(rng, n)
        k = int(counts.sum())
        if k > limit:
            raise _Overflow
        j = self.place.sample(rng, k)
        return np.bincount(j, minlength=len(self.targets)).astype(float)

    def rows(self, rng: np.random.Generator, n: int, limit: int) -> np.ndarray:
        """Children per target for each of ``n`` particles (``n x targets``)."""
        if self.kind == "explicit":
            return self.C[self.table.sample(rng, n)]
        counts = self._counts(rng, n)
        k = int(counts.sum())
        if k > limit:
            raise _Overflow
        j = self.place.sample(rng, k)
        out = np.zeros((n, len(self.targets)))
        np.add.at(out, (np.repeat(np.arange(n), counts), j), 1.0)
        return out


class _Tracker:
    def __init__(self, targets: Mapping[str, frozenset]) -> None:
        self.targets = targets
        self.first: Dict[str, Optional[int]] = {name: None for name in targets}
        self.last: Dict[str, Optional[int]] = {name: None for name in targets}
        self.total: Dict[str, int] = {name: 0 for name in targets}
        self.sizes: List[int] = []

    def observe(self, n: int, pop: Mapping[Label, int]) -> None:
        self.sizes.append(sum(pop.values()))
        if not n:
            return
        for name, members in self.targets.items():
            inside = sum(c for y, c in pop.items() if y in members)
            if inside:
                self.total[name] += inside
                self.last[name] = n
                if self.first[name] is None:
                    self.first[name] = n

    def outcome(self, reason: str, n: int) -> SimOutcome:
        return SimOutcome(reason, n, max(self.sizes), self.sizes[-1], dict(self.first),
                          dict(self.last), dict(self.total), tuple(self.sizes))


def _add(pop: Dict[Label, int], targets: Sequence[Label], values: np.ndarray) -> int:
    added = 0
    for y, v in zip(targets, values):
        if v:
            c = int(v)
            pop[y] = pop.get(y, 0) + c
            added += c
    return added


def _truncate(pop: Dict[Label, int], m: Optional[int]) -> Dict[Label, int]:
    if m is None:
        return pop
    return {y: min(m, c) for y, c in pop.items()}


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Counter-based stream of one trial."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, trial])))


class _Engine:
    """Samplers of one model, shared by all trials of a run."""

    def __init__(self, model: BRWModel, plan: TrialPlan,
                 targets: Optional[Mapping[str, Sequence[Label]]] = None) -> None:
        self.model = model
        self.plan = plan
        sets = dict(plan.target_sets)
        sets.update(targets or {})
        self.targets = {name: frozenset(members) for name, members in sets.items()}
        self.acceptance = plan.acceptance if plan.acceptance is not None else model.acceptance
        self._samplers: Dict[Label, _Sampler] = {}

    def sampler(self, y: Label) -> _Sampler:
        found = self._samplers.get(y)
        if found is None:
            found = self._samplers.setdefault(y, _Sampler(self.model.law(y)))
        return found

    def _escaped(self, y: Label) -> bool:
        space = self.model.space
        if space.cap is None:
            return False
        depth = space.depth(y)
        return depth is not None and depth > space.cap

    def _accept(self, rng: np.random.Generator, new: Dict[Label, int], targets: Sequence[Label],
                rows: np.ndarray) -> int:
        c = self.acceptance
        assert c is not None
        added = 0
        for row in rows:
            for j in np.flatnonzero(row):
                y = targets[j]
                for _ in range(int(row[j])):
                    k = new.get(y, 0)
                    p = c(k)
                    if p >= 1.0 or (p > 0.0 and rng.random() < p):
                        new[y] = k + 1
                        added += 1
        return added

    def run(self, initial: Population, levels: Sequence[Optional[int]],
            rng: np.random.Generator) -> List[SimOutcome]:
        """Simulate one trial for every truncation level; the last level drives sampling."""
        plan = self.plan
        k = len(levels)
        coupled = k > 1
        pops = [_truncate(dict(initial.counts), m) for m in levels]
        trackers = [_Tracker(self.targets) for _ in levels]
        for tracker, pop in zip(trackers, pops):
            tracker.observe(0, pop)
        done: List[Optional[SimOutcome]] = [None] * k
        for i in range(k):
            if not pops[i]:
                done[i] = trackers[i].outcome(EXTINCT, 0)
        master_level = levels[-1]
        stop: Optional[str] = None
        n = 0
        for n in range(1, plan.horizon + 1):
            if done[-1] is not None:
                break
            new: List[Dict[Label, int]] = [{} for _ in range(k)]
            running = 0
            try:
                for y, count in pops[-1].items():
                    sampler = self.sampler(y)
                    if not sampler.targets:
                        continue
                    limit = plan.population_cap - running
                    if self.acceptance is not None and not coupled:
                        running += self._accept(rng, new[0], sampler.targets,
                                                sampler.rows(rng, count, limit))
                    elif not coupled:
                        running += _add(new[0], sampler.targets, sampler.totals(rng, count, limit))
                    else:
                        cum = np.cumsum(sampler.rows(rng, count, limit), axis=0)
                        for i in range(k):
                            c = pops[i].get(y, 0)
                            if c and done[i] is None:
                                added = _add(new[i], sampler.targets, cum[c - 1])
                                if i == k - 1:
                                    running += added
                    if master_level is None and running > plan.population_cap:
                        raise _Overflow
            except _Overflow:
                stop = POPULATION_CAP
            if stop is None:
                new = [_truncate(pop, m) for pop, m in zip(new, levels)]
                if coupled:
                    for i in range(k - 1):
                        upper = new[i + 1]
                        for y, c in new[i].items():
                            if c > upper.get(y, 0):
                                raise CouplingError(
                                    f"generation {n}: level {levels[i]} holds {c} particles at {y!r}, "
                                    f"level {levels[i + 1]} only {upper.get(y, 0)}"
                                )
                if sum(new[-1].values()) > plan.population_cap:
                    stop = POPULATION_CAP
                elif any(self._escaped(y) for y in new[-1]):
                    stop = ESCAPED
                for i in range(k):
                    if done[i] is not None:
                        continue
                    pops[i] = new[i]
                    trackers[i].observe(n, new[i])
                    if not new[i]:
                        done[i] = trackers[i].outcome(EXTINCT, n)
            if stop is not None:
                for i in range(k):
                    if done[i] is None:
                        done[i] = trackers[i].outcome(stop, n)
                break
        for i in range(k):
            if done[i] is None:
                done[i] = trackers[i].outcome(HORIZON, plan.horizon)
        return [o for o in done if o is not None]


def _levels(model: BRWModel, plan: TrialPlan) -> List[Optional[int]]:
    return [plan.truncation if plan.truncation is not None else model.truncation]


def _initial(start: Any) -> Population:
    return start if isinstance(start, Population) else Population.single(start)


def run_trial(model: BRWModel, initial: Any, plan: TrialPlan, trial: int = 0,
              targets: Optional[Mapping[str, Sequence[Label]]] = None) -> SimOutcome:
    """
    Run trial number ``trial`` of ``plan``.

    Args:
        model (BRWModel): Process to simulate.
        initial: A ``Population`` or a single start vertex.
        plan (TrialPlan): Horizon, cap, seed and dynamics.
        trial (int): Trial index selecting the random stream.

    Returns:
        SimOutcome: Stop reason, sizes and visit counters. Leaving a lazy
            space's cap is reported as ``escaped-ball``.

    Example:
        >>> out = run_trial(galton_watson({0: 1}).model, 0, TrialPlan(trials=1, horizon=5))
        >>> out.stop_reason, out.final_generation
        ('extinct', 1)
    """
    engine = _Engine(model, plan, targets)
    return engine.run(_initial(initial), _levels(model, plan), trial_rng(plan.seed, trial))[0]


def _run_all(engine: _Engine, initial: Population, levels: Sequence[Optional[int]],
             plan: TrialPlan) -> List[List[SimOutcome]]:
    def one(trial: int) -> List[SimOutcome]:
        return engine.run(initial, levels, trial_rng(plan.seed, trial))

    if plan.workers > 1:
        with ThreadPoolExecutor(max_workers=plan.workers) as pool:
            return list(pool.map(one, range(plan.trials)))
    return [one(t) for t in range(plan.trials)]


@dataclass
class SurvivalEstimate:
    """
    Fraction of successful trials with a Wilson 95% interval.

    ``estimate`` counts censored trials (population cap, escape) as
    successes; ``lower_estimate`` counts them as failures.
    """
    mode: str
    trials: int
    successes: int
    estimate: float
    ci_low: float
    ci_high: float
    censored: int
    lower_estimate: float
    note: str = ""
    outcomes: List[SimOutcome] = field(default_factory=list, repr=False)

    @property
    def std_error(self) -> float:
        if not self.trials:
            return float("nan")
        p = self.estimate
        return math.sqrt(max(p * (1.0 - p), 0.0) / self.trials)

    def to_json(self) -> Dict[str, Any]:
        return {
            "mode": self.mode,
            "trials": self.trials,
            "successes": self.successes,
            "estimate": self.estimate,
            "ci": [self.ci_low, self.ci_high],
            "censored": self.censored,
            "lower_estimate": self.lower_estimate,
            "note": self.note,
        }


def _wilson(k: int, n: int) -> Tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    ci = binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def _visited_late(outcome: SimOutcome, name: str, plan: TrialPlan) -> bool:
    last = outcome.last_visits.get(name)
    if last is None or outcome.stop_reason == EXTINCT:
        return False
    span = plan.horizon if outcome.stop_reason == HORIZON else outcome.final_generation
    return last >= math.ceil((1.0 - plan.local_window) * span)


def _summarize(mode: str, outcomes: List[SimOutcome], plan: TrialPlan, name: str = "A") -> SurvivalEstimate:
    if mode == "global":
        pool = outcomes
        hits = [o.alive for o in pool]
        note = "alive at the horizon; finite-horizon survival overestimates survival"
    else:
        pool = outcomes if mode == "local" else [o for o in outcomes if o.alive]
        hits = [_visited_late(o, name, plan) for o in pool]
        note = f"visits in the last {plan.local_window:g} of each run"
        if mode == "strong-local":
            note += "; among globally surviving trials"
    n = len(pool)
    k = sum(hits)
    censored = sum(1 for o in pool if o.censored)
    lower_hits = sum(1 for o, h in zip(pool, hits) if h and not o.censored)
    low, high = _wilson(k, n)
    return SurvivalEstimate(mode, n, k, k / n if n else float("nan"), low, high, censored,
                            lower_hits / n if n else float("nan"), note, outcomes)


def estimate_survival(model: BRWModel, start: Any, plan: TrialPlan, mode: str = "global",
                      A: Optional[Sequence[Label]] = None) -> SurvivalEstimate:
    """
    Estimate global, local or strong local survival from ``start``.

    - global: fraction of trials alive at the horizon;
    - local: fraction visiting ``A`` in the last ``local_window`` of the run;
    - strong-local: the same fraction among globally surviving trials.

    Raises:
        ValueError: ``plan.trials`` is 0, ``mode`` is unknown, or a local
            mode has no ``A``.
    """
    if plan.trials == 0:
        raise ValueError("at least one trial is required")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode != "global" and not A:
        raise ValueError(f"mode {mode!r} needs a target set")
    engine = _Engine(model, plan, {"A": tuple(A)} if A else None)
    results = _run_all(engine, _initial(start), _levels(model, plan), plan)
    outcomes = [r[0] for r in results]
    estimate = _summarize(mode, outcomes, plan)
    logger.debug("%s survival of %r: %d/%d", mode, model, estimate.successes, estimate.trials)
    return estimate


@dataclass
class SweepResult:
    """Per-level outcomes of a coupled truncation sweep."""
    levels: List[Optional[int]]
    estimates: List[SurvivalEstimate]
    outcomes: List[List[SimOutcome]]

    def to_json(self) -> Dict[str, Any]:
        return {
            "levels": ["inf" if m is None else m for m in self.levels],
            "estimates": [e.to_json() for e in self.estimates],
        }


def coupled_truncation_sweep(model: BRWModel, start: Any, plan: TrialPlan,
                             levels: Sequence[Optional[int]]) -> SweepResult:
    """
    Simulate several truncation levels on shared randomness.

    ``levels`` must be ascending; None (no truncation) may come last. The
    populations are checked to be ordered site by site after every step.

    Raises:
        CouplingError: A lower level held more particles somewhere.
        ValueError: Levels not ascending, or restrained dynamics requested.
    """
    levels = list(levels)
    if not levels:
        raise ValueError("at least one truncation level is required")
    finite = [m for m in levels if m is not None]
    if None in levels[:-1] or finite != sorted(finite) or len(set(finite)) != len(finite):
        raise ValueError(f"levels must be strictly ascending with None last, got {levels}")
    if plan.acceptance is not None or model.acceptance is not None:
        raise ValueError("restrained dynamics cannot be swept")
    engine = _Engine(model, plan)
    results = _run_all(engine, _initial(start), levels, plan)
    per_level = [[r[i] for r in results] for i in range(len(levels))]
    estimates = [_summarize("global", outs, plan) for outs in per_level]
    for prev, cur, m in zip(estimates, estimates[1:], levels[1:]):
        if cur.successes < prev.successes:
            raise CouplingError(f"survival count decreased at level {m}")
    return SweepResult(levels, estimates, per_level)


def one_step_moments(model: BRWModel, x: Label, samples: int, seed: int = 0,
                     chunk: int = 100_000) -> Dict[Label, Tuple[float, float]]:
    """
    Empirical mean and standard error of the number of children at each site
    after one step from ``samples`` independent particles at ``x``.
    """
    if samples < 2:
        raise ValueError(f"samples must be at least 2, got {samples}")
    sampler = _Sampler(model.law(x))
    rng = trial_rng(seed, 0)
    total = np.zeros(len(sampler.targets))
    square = np.zeros(len(sampler.targets))
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        if sampler.targets:
            rows = sampler.rows(rng, n, np.iinfo(np.int64).max)
            total += rows.sum(axis=0)
            square += (rows ** 2).sum(axis=0)
        done += n
    out: Dict[Label, Tuple[float, float]] = {}
    for j, y in enumerate(sampler.targets):
        mean = total[j] / samples
        var = max(square[j] / samples - mean ** 2, 0.0) * samples / (samples - 1)
        out[y] = (float(mean), math.sqrt(var / samples))
    return out


def write_trial_csv(path: str, outcomes: Sequence[SimOutcome], target: str = "A") -> int:
    """Write ``trial,stop_reason,final_gen,max_pop,visits_A`` rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trial", "stop_reason", "final_gen", "max_pop", "visits_A"])
        for i, o in enumerate(outcomes):
            writer.writerow([i, o.stop_reason, o.final_generation, o.max_population,
                             o.total_visits.get(target, 0)])
    return len(outcomes)
