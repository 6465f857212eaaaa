"""
Command-line front-end.

Subcommands::

    brwlab validate CONFIG           check a config and the model it builds
    brwlab run CONFIG|MANIFEST       run the tasks of an experiment
    brwlab reproduce ID|all          check catalog examples against their known facts
    brwlab catalog                   list catalog examples

Exit codes: 0 success, 2 rejected config or model, 3 failed task or fact.
"""
import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Sequence, TextIO, Tuple

import networkx
import numpy as np
import scipy

from .errors import BRWError, ConfigError, ModelRejectedError
from .genfun import (global_extinction_bracket, global_survival_certificate_check,
                     mv_certificate_check, mv_witness, never_hit_bracket)
from .knobs import SolverKnobs
from .model import (BRWModel, ExplicitFiniteLaw, FiniteSpace, Label, analyze_digraph, build_moment_kernel,
                    discrete_counterpart, project_local_isomorphism, validate_model)
from .simulate import (MODES, TrialPlan, coupled_truncation_sweep, estimate_survival,
                       write_trial_csv)
from .spaces import CATALOG, ExampleDescriptor, KnownFact, build_example, radial_projection
from .spectral import (classify_global_FBRW, classify_local_survival, collatz_wielandt_check,
                       estimate_growth_rates, export_series, geometry_diagnostics, n_step_moments,
                       perron_root, phi_gamma_series, window_perron_bound)
from .store import ResultStore

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_REJECTED = 2
EXIT_FAILED = 3

TASKS = ("validate", "classify-local", "classify-global", "extinction", "never-hit",
         "series", "diagnostics", "simulate", "sweep")

SETTINGS_DEFAULTS: Dict[str, Any] = {
    "radius": None,
    "N": 50,
    "tol": 1e-10,
    "trials": 1000,
    "horizon": 100,
    "cap": 10 ** 7,
    "seed": 0,
    "workers": 1,
    "x": None,
    "A": None,
    "mode": "global",
    "levels": [1, 2, 4, None],
    "t": 1.0,
}

REPORT_SCHEMA: Dict[str, Any] = {
    "schema": int,
    "experiment": str,
    "model": dict,
    "seed": int,
    "tasks": list,
}

TASK_SCHEMA: Dict[str, Any] = {
    "task": str,
    "status": str,
    "result": dict,
    "files": list,
}

CSV_COLUMNS = """\
CSV files written by `run`:
  extinction.csv, never-hit.csv   vertex,label,lower,upper
  moments.csv, phi.csv            n,value
  trials.csv                      trial,stop_reason,final_gen,max_pop,visits_A
"""


# ---------------------------------------------------------------------------
# Configs
# ---------------------------------------------------------------------------

def _tuplify(value: Any) -> Any:
    """JSON lists become tuples so they can serve as vertex labels."""
    if isinstance(value, list):
        return tuple(_tuplify(v) for v in value)
    if isinstance(value, dict):
        return {k: _tuplify(v) for k, v in value.items()}
    return value


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class ExperimentConfig:
    """
    A parsed experiment.

    Attributes:
        name (str): Experiment name used in reports and the result store.
        model (Dict): ``{"example": id, "params": {...}}``, an inline law table
            ``{"laws": {x: [[{y: k, ...}, p], ...]}, "root": x}`` or inline rates
            ``{"rates": {x: {y: k_xy}}, "lam": lam}``.
        tasks (List[Dict]): Task entries, each ``{"task": name, ...overrides}``.
        settings (Dict): Numeric settings shared by tasks.
        output (str): Output directory.
        raw (Dict): The config as read, for the manifest.
    """
    name: str
    model: Dict[str, Any]
    tasks: List[Dict[str, Any]]
    settings: Dict[str, Any]
    output: str
    raw: Dict[str, Any] = field(default_factory=dict)

    def task_settings(self, task: Dict[str, Any]) -> Dict[str, Any]:
        merged = dict(self.settings)
        merged.update({k: v for k, v in task.items() if k != "task"})
        return merged


def parse_config(data: Any, output: Optional[str] = None) -> ExperimentConfig:
    """
    Validate a decoded JSON config.

    Raises:
        ConfigError: Missing or mistyped fields, unknown tasks or examples.
    """
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if "config" in data and "config_sha256" in data:
        # a manifest written by a previous run
        data = data["config"]
    unknown = set(data) - {"name", "model", "tasks", "settings", "output"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    model = data.get("model")
    if not isinstance(model, dict):
        raise ConfigError("'model' must be an object")
    kinds = [k for k in ("example", "laws", "rates") if k in model]
    if len(kinds) != 1:
        raise ConfigError("'model' needs exactly one of 'example', 'laws' or 'rates'")
    if "example" in model and model["example"] not in CATALOG:
        raise ConfigError(f"unknown example {model['example']!r}; known: {', '.join(sorted(CATALOG))}")
    if "params" in model and not isinstance(model["params"], dict):
        raise ConfigError("'model.params' must be an object")
    if "rates" in model and "lam" not in model:
        raise ConfigError("inline rates need 'lam'")

    tasks_raw = data.get("tasks")
    if not isinstance(tasks_raw, list) or not tasks_raw:
        raise ConfigError("'tasks' must be a nonempty list")
    tasks: List[Dict[str, Any]] = []
    for entry in tasks_raw:
        task = {"task": entry} if isinstance(entry, str) else entry
        if not isinstance(task, dict) or task.get("task") not in TASKS:
            raise ConfigError(f"unknown task {entry!r}; known: {', '.join(TASKS)}")
        tasks.append(dict(task))

    settings = dict(SETTINGS_DEFAULTS)
    given = data.get("settings", {})
    if not isinstance(given, dict):
        raise ConfigError("'settings' must be an object")
    bad = set(given) - set(SETTINGS_DEFAULTS)
    if bad:
        raise ConfigError(f"unknown settings: {sorted(bad)}")
    settings.update(given)
    for key in ("N", "trials", "horizon", "cap", "seed", "workers"):
        if not isinstance(settings[key], int) or isinstance(settings[key], bool):
            raise ConfigError(f"setting {key!r} must be an integer, got {settings[key]!r}")
    if settings["radius"] is not None and (not isinstance(settings["radius"], int) or settings["radius"] < 0):
        raise ConfigError(f"setting 'radius' must be a nonnegative integer, got {settings['radius']!r}")
    if settings["mode"] not in MODES:
        raise ConfigError(f"setting 'mode' must be one of {MODES}")
    for task in tasks:
        if task["task"] in ("never-hit",) and not (task.get("A") or settings["A"]):
            raise ConfigError(f"task {task['task']!r} needs a target set 'A'")
        if task["task"] == "simulate" and task.get("mode", settings["mode"]) != "global" \
                and not (task.get("A") or settings["A"]):
            raise ConfigError("local simulation needs a target set 'A'")

    name = data.get("name") or (model.get("example") or "inline")
    out = output or data.get("output") or "brwlab-out"
    return ExperimentConfig(str(name), model, tasks, settings, str(out), raw=data)


def load_config(path: str, output: Optional[str] = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse_config(data, output)


def _parse_prob(value: Any) -> Any:
    if isinstance(value, str):
        try:
            return Fraction(value)
        except ValueError as exc:
            raise ConfigError(f"cannot parse probability {value!r}") from exc
    return value


def build_model(spec: Dict[str, Any]) -> Tuple[BRWModel, Optional[ExampleDescriptor]]:
    """
    Build the model described by a config's ``model`` entry.

    Returns:
        Tuple: The model and, for catalog examples, their descriptor.

    Raises:
        ModelRejectedError: Parameters outside the model's domain.
        ConfigError: A malformed inline table.
    """
    if "example" in spec:
        params = _tuplify(spec.get("params", {}))
        try:
            desc = build_example(spec["example"], **params)
        except TypeError as exc:
            raise ConfigError(f"bad parameters for {spec['example']!r}: {exc}") from exc
        return desc.model, desc
    if "rates" in spec:
        rates = spec["rates"]
        if not isinstance(rates, dict):
            raise ConfigError("'rates' must map vertices to rate rows")
        return discrete_counterpart(rates, _parse_prob(spec["lam"]), name=spec.get("name", "inline")), None
    laws_raw = spec["laws"]
    if not isinstance(laws_raw, dict) or not laws_raw:
        raise ConfigError("'laws' must be a nonempty object")
    laws = {}
    for x, configs in laws_raw.items():
        if not isinstance(configs, list):
            raise ConfigError(f"law of {x!r} must be a list of [config, probability] pairs")
        pairs = []
        for pair in configs:
            if not (isinstance(pair, list) and len(pair) == 2 and isinstance(pair[0], dict)):
                raise ConfigError(f"law of {x!r}: expected [config, probability], got {pair!r}")
            pairs.append((pair[0], _parse_prob(pair[1])))
        laws[x] = ExplicitFiniteLaw(pairs)
    labels = list(laws)
    for law in laws.values():
        for y in law.support():
            if y not in laws:
                raise ConfigError(f"vertex {y!r} receives children but has no law")
    root = spec.get("root", labels[0])
    return BRWModel(FiniteSpace(labels, root), laws, name=spec.get("name", "inline")), None


# ---------------------------------------------------------------------------
# Tasks
# ---------------------------------------------------------------------------

@dataclass
class TaskContext:
    model: BRWModel
    desc: Optional[ExampleDescriptor]
    settings: Dict[str, Any]
    out: str
    experiment: str
    store: ResultStore

    @property
    def radius(self) -> Optional[int]:
        r = self.settings["radius"]
        if r is None and self.desc is not None:
            return self.desc.validation_radius
        if r is None and not self.model.space.is_finite:
            return 20
        return r

    @property
    def x(self) -> Label:
        x = self.settings["x"]
        return self.model.space.root if x is None else _tuplify(x)

    @property
    def A(self) -> Optional[List[Label]]:
        A = self.settings["A"]
        return None if A is None else [_tuplify(a) for a in A]

    def plan(self) -> TrialPlan:
        s = self.settings
        return TrialPlan(trials=s["trials"], horizon=s["horizon"], population_cap=s["cap"], seed=s["seed"],
                         workers=s["workers"], target_sets={"A": tuple(self.A)} if self.A else {})

    def path(self, name: str) -> str:
        return os.path.join(self.out, name)


TaskResult = Tuple[Dict[str, Any], List[str]]


def _task_validate(ctx: TaskContext) -> TaskResult:
    return validate_model(ctx.model, ctx.radius).to_dict(), []


def _task_classify_local(ctx: TaskContext) -> TaskResult:
    return classify_local_survival(ctx.model, ctx.x, ctx.settings["N"]).to_json(), []


def _type_map(ctx: TaskContext) -> Callable[[Label], Label]:
    if ctx.desc is not None and ctx.desc.type_map is not None:
        return ctx.desc.type_map
    if ctx.model.space.is_finite:
        return lambda x: x
    raise ConfigError("classify-global needs a model with a finite type map")


def _task_classify_global(ctx: TaskContext) -> TaskResult:
    g = _type_map(ctx)
    report = classify_global_FBRW(ctx.model, g, ctx.x, radius=min(ctx.radius or 4, 4),
                                  growth_horizon=ctx.settings.get("growth_horizon"))
    return report.to_json(), []


def _task_extinction(ctx: TaskContext) -> TaskResult:
    knobs = SolverKnobs(tol=ctx.settings["tol"])
    vec = global_extinction_bracket(ctx.model, ctx.radius, knobs)
    vec.to_csv(ctx.path("extinction.csv"), ctx.model)
    result = vec.to_json()
    result["at_x"] = list(vec.at(ctx.x))
    return result, ["extinction.csv"]


def _task_never_hit(ctx: TaskContext) -> TaskResult:
    knobs = SolverKnobs(tol=ctx.settings["tol"])
    assert ctx.A is not None
    vec = never_hit_bracket(ctx.model, ctx.A, ctx.radius, knobs)
    vec.to_csv(ctx.path("never-hit.csv"), ctx.model)
    return vec.to_json(), ["never-hit.csv"]


def _task_series(ctx: TaskContext) -> TaskResult:
    kernel = build_moment_kernel(ctx.model)
    N = ctx.settings["N"]
    moments = n_step_moments(kernel, ctx.x, N)
    export_series(ctx.path("moments.csv"), moments)
    series = phi_gamma_series(kernel, ctx.x, ctx.x, ctx.settings["t"], N)
    export_series(ctx.path("phi.csv"), series)
    ms, mw = estimate_growth_rates(kernel, ctx.x, N)
    result = {
        "period": moments.period,
        "phi": series.phi,
        "gamma": series.gamma,
        "residual": series.residual,
        "M_s": ms.to_json(),
        "M_w": mw.to_json(),
    }
    return result, ["moments.csv", "phi.csv"]


def _task_diagnostics(ctx: TaskContext) -> TaskResult:
    return geometry_diagnostics(ctx.model, ctx.x, ctx.radius or 10).to_json(), []


def _task_simulate(ctx: TaskContext) -> TaskResult:
    mode = ctx.settings["mode"]
    estimate = estimate_survival(ctx.model, ctx.x, ctx.plan(), mode, ctx.A)
    write_trial_csv(ctx.path("trials.csv"), estimate.outcomes)
    ctx.store.record_outcomes(ctx.experiment, estimate.outcomes)
    result = estimate.to_json()
    result["stop_reasons"] = ctx.store.stop_reason_counts(ctx.experiment)
    return result, ["trials.csv"]


def _task_sweep(ctx: TaskContext) -> TaskResult:
    levels = [None if m in (None, "inf") else int(m) for m in ctx.settings["levels"]]
    sweep = coupled_truncation_sweep(ctx.model, ctx.x, ctx.plan(), levels)
    return sweep.to_json(), []


TASK_RUNNERS: Dict[str, Callable[[TaskContext], TaskResult]] = {
    "validate": _task_validate,
    "classify-local": _task_classify_local,
    "classify-global": _task_classify_global,
    "extinction": _task_extinction,
    "never-hit": _task_never_hit,
    "series": _task_series,
    "diagnostics": _task_diagnostics,
    "simulate": _task_simulate,
    "sweep": _task_sweep,
}


def validate_report(report: Dict[str, Any]) -> List[str]:
    """Problems found checking ``report`` against ``REPORT_SCHEMA``; empty when valid."""
    problems = []
    for key, kind in REPORT_SCHEMA.items():
        if not isinstance(report.get(key), kind):
            problems.append(f"report.{key} must be {kind.__name__}")
    for i, task in enumerate(report.get("tasks", [])):
        for key, kind in TASK_SCHEMA.items():
            if not isinstance(task.get(key), kind):
                problems.append(f"report.tasks[{i}].{key} must be {kind.__name__}")
        if task.get("status") not in ("ok", "failed"):
            problems.append(f"report.tasks[{i}].status must be 'ok' or 'failed'")
    return problems


def _resolve_seed(config: ExperimentConfig, seed: Optional[int]) -> int:
    if seed is not None:
        return seed
    env = os.environ.get("BRWLAB_SEED")
    if env:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"BRWLAB_SEED must be an integer, got {env!r}") from exc
    return int(config.settings["seed"])


def _versions() -> Dict[str, str]:
    from . import __version__
    return {
        "brwlab": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "networkx": networkx.__version__,
        "python": platform.python_version(),
    }


def _write_json(path: str, value: Any) -> None:
    with open(path, "w") as fh:
        json.dump(value, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_experiment(config: ExperimentConfig, seed: Optional[int] = None,
                   overrides: Optional[Dict[str, Any]] = None) -> int:
    """
    Run every task of ``config`` in order and write the outputs.

    Writes ``report.json``, per-task CSVs, ``results.db`` and
    ``manifest.json`` (config, its hash, the seed, package versions and the
    hash of each reproducible output file) into ``config.output``.

    Returns:
        int: ``EXIT_OK``, ``EXIT_REJECTED`` when the model is rejected, or
            ``EXIT_FAILED`` when a task raised.
    """
    for key, value in (overrides or {}).items():
        if value is not None:
            config.settings[key] = value
    config.settings["seed"] = _resolve_seed(config, seed)
    os.makedirs(config.output, exist_ok=True)
    resolved = dict(config.raw)
    resolved["settings"] = dict(config.settings)
    resolved.pop("output", None)
    config_hash = sha256_text(canonical_json(resolved))

    model, desc = build_model(config.model)
    if any(t["task"] == "classify-global" for t in config.tasks) and not model.space.is_finite \
            and (desc is None or desc.type_map is None):
        raise ConfigError("classify-global needs a finite model or an example with a type map")
    store = ResultStore(os.path.join(config.output, "results.db"))
    report: Dict[str, Any] = {
        "schema": 1,
        "experiment": config.name,
        "model": {"name": model.name, "spec": config.model},
        "seed": config.settings["seed"],
        "tasks": [],
    }
    status = EXIT_OK
    files: List[str] = []
    try:
        for i, task in enumerate(config.tasks):
            name = task["task"]
            ctx = TaskContext(model, desc, config.task_settings(task), config.output,
                              f"{config_hash}/{i}", store)
            logger.info("running task %s", name)
            try:
                result, written = TASK_RUNNERS[name](ctx)
            except (ModelRejectedError, ConfigError):
                raise
            except BRWError as exc:
                logger.error("task %s failed: %s", name, exc)
                report["tasks"].append({"task": name, "status": "failed", "result": {"error": str(exc)},
                                        "files": []})
                status = EXIT_FAILED
                break
            store.record_report(ctx.experiment, name, result)
            report["tasks"].append({"task": name, "status": "ok", "result": result, "files": written})
            files.extend(written)
    finally:
        store.close()

    problems = validate_report(report)
    if problems:
        raise ConfigError("; ".join(problems))
    _write_json(os.path.join(config.output, "report.json"), report)
    files.append("report.json")
    manifest = {
        "config": resolved,
        "config_sha256": config_hash,
        "seed": config.settings["seed"],
        "versions": _versions(),
        "files": {f: sha256_file(os.path.join(config.output, f)) for f in sorted(set(files))},
    }
    _write_json(os.path.join(config.output, "manifest.json"), manifest)
    return status


# ---------------------------------------------------------------------------
# Known facts
# ---------------------------------------------------------------------------

@dataclass
class FactResult:
    """One row of a reproduction table."""
    example: str
    name: str
    kind: str
    expected: Any
    computed: Any
    tolerance: float
    passed: bool
    reference: str

    def to_json(self) -> Dict[str, Any]:
        return {
            "example": self.example,
            "fact": self.name,
            "kind": self.kind,
            "expected": self.expected,
            "computed": self.computed,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "reference": self.reference,
        }


Checked = Tuple[Any, bool]


def _close(computed: float, fact: KnownFact) -> Checked:
    return computed, abs(computed - float(fact.expected)) <= fact.tolerance


def _image_qbar(desc: ExampleDescriptor, radius: int = 3) -> Callable[[Label], float]:
    if desc.type_map is None:
        raise ConfigError(f"example {desc.id!r} has no type map")
    g = desc.type_map
    projection = project_local_isomorphism(desc.model, g, radius)
    vec = global_extinction_bracket(projection.model)
    values = vec.lower_map()
    return lambda x: values[g(x)]


def _check_extinction(desc: ExampleDescriptor, fact: KnownFact) -> Checked:
    at = fact.params["at"]
    if fact.params.get("via") == "projection":
        return _close(_image_qbar(desc)(at), fact)
    vec = global_extinction_bracket(desc.model)
    lo, hi = vec.at(at)
    ok = abs(lo - float(fact.expected)) <= fact.tolerance and abs(hi - float(fact.expected)) <= fact.tolerance
    return lo, ok


def _check_lambda_w(desc: ExampleDescriptor, fact: KnownFact) -> Checked:
    assert desc.type_map is not None
    report = classify_global_FBRW(desc.model, desc.type_map, radius=fact.params.get("radius", 4))
    return _close(float(report.critical["lambda_w"]), fact)


def _check_lambda_s(desc: ExampleDescriptor, fact: KnownFact) -> Checked:
    lam = float(desc.params["lam"])
    horizon = fact.params["horizon"]
    if fact.params.get("radial"):
        image = radial_projection(desc.model).model
        kernel = build_moment_kernel(image)
        rho = window_perron_bound(kernel, image.space.root, horizon).lower
    else:
        kernel = build_moment_kernel(desc.model)
        ms, _ = estimate_growth_rates(kernel, desc.model.space.root, horizon)
        rho = ms.best
    return _close(lam / rho, fact)


def _check_local_verdict(desc: ExampleDescriptor, fact: KnownFact) -> Checked:
    report = classify_local_survival(desc.model, fact.params["at"], fact.params.get("N", 50))
    return report.local.value, report.local.value == fact.expected


def _check_perron(desc: ExampleDescriptor, fact: KnownFact) -> Checked:
    return _close(perron_root(np.asarray(fact.params["matrix"], dtype=float)).value, fact)


def _check_period(desc: ExampleDescriptor, fact: KnownFact) -> Checked:
    at = fact.params["at"]
    period = analyze_digraph(desc.model, desc.validation_radius, center=at).class_of(at).period
    return period, period == fact.expected


def _check_cw_witness(desc: ExampleDescriptor, fact: KnownFact) -> Checked:
    kernel = build_moment_kernel(desc.extras["unit_model"])
    check = collatz_wielandt_check(
        kernel, fact.params["lam"], desc.extras["witness"], radius=fact.params.get("radius", 30))
    return check.verified, check.verified == fact.expected


def _check_kernels_equal(desc: ExampleDescriptor, fact: KnownFact) -> Checked:
    radius = fact.params.get("radius", 40)
    a = build_example("noext-pair", variant="A").model
    b = build_example("noext-pair", variant="B").model
    ka, kb = build_moment_kernel(a), build_moment_kernel(b)
    labels = a.ball(None, radius).labels
    same = all(ka.row(x) == kb.row(x) for x in labels)
    return same, same == fact.expected


def _check_survival_upper(desc: ExampleDescriptor, fact: KnownFact) -> Checked:
    vec = global_extinction_bracket(desc.model, fact.params.get("radius", 40))
    upper = 1.0 - vec.at(desc.model.space.root)[0]
    return upper, upper <= float(fact.expected)


def _check_survival_mc(desc: ExampleDescriptor, fact: KnownFact) -> Checked:
    p = dict(fact.params)
    if os.environ.get("BRWLAB_SLOW") == "1":
        p.update(p.get("acceptance", {}))
    A = p.get("A")
    plan = TrialPlan(trials=p["trials"], horizon=p["horizon"], population_cap=p["cap"], seed=p.get("seed", 0),
                     target_sets={"A": tuple(A)} if A else {})
    est = estimate_survival(desc.model, p["start"], plan, p["mode"], A)
    expected = float(fact.expected)
    if p.get("compare") == "within":
        return est.estimate, abs(est.estimate - expected) <= p["tolerance"]
    if p.get("compare") == "contains":
        slack = p.get("slack", 0.0)
        return est.estimate, est.ci_low - slack <= expected <= est.ci_high + slack
    return est.estimate, est.ci_low >= expected


def _check_global_certificate(desc: ExampleDescriptor, fact: KnownFact) -> Checked:
    cert = global_survival_certificate_check(desc.model, desc.extras["witness"],
                                             radius=fact.params.get("radius", 30))
    return cert.verified, cert.verified == fact.expected


def _check_mv_certificate(desc: ExampleDescriptor, fact: KnownFact) -> Checked:
    A = fact.params["A"]
    radius = fact.params.get("radius", 30)
    qbar = _image_qbar(desc)
    hit = never_hit_bracket(desc.model, A, radius)
    v = mv_witness(hit.upper_map(), qbar, hit.labels)
    cert = mv_certificate_check(desc.model, A, v, qbar, radius)
    return cert.verified, cert.verified == fact.expected


def _check_row_sums(desc: ExampleDescriptor, fact: KnownFact) -> Checked:
    kernel = build_moment_kernel(desc.model)
    worst = max(kernel.row_sum(x) for x in desc.model.ball(None, fact.params.get("radius", 30)).labels)
    below = worst < 1.0
    return below, below == fact.expected


def _check_sequence_condition(desc: ExampleDescriptor, fact: KnownFact) -> Checked:
    verdict = desc.extras["sequence_check"].verdict
    return verdict, verdict == fact.expected


def _check_uniform_growth(desc: ExampleDescriptor, fact: KnownFact) -> Checked:
    p = fact.params
    report = geometry_diagnostics(desc.model, radius=p["radius"], nbar=p["nbar"], eps=p["eps"], K_w=p["K_w"])
    return report.uniform_growth, report.uniform_growth == fact.expected


FACT_CHECKERS: Dict[str, Callable[[ExampleDescriptor, KnownFact], Checked]] = {
    "extinction": _check_extinction,
    "lambda_w": _check_lambda_w,
    "lambda_s": _check_lambda_s,
    "local_verdict": _check_local_verdict,
    "perron": _check_perron,
    "period": _check_period,
    "cw_witness": _check_cw_witness,
    "kernels_equal": _check_kernels_equal,
    "survival_upper": _check_survival_upper,
    "survival_mc": _check_survival_mc,
    "global_certificate": _check_global_certificate,
    "mv_certificate": _check_mv_certificate,
    "row_sums_below_one": _check_row_sums,
    "sequence_condition": _check_sequence_condition,
    "uniform_growth": _check_uniform_growth,
}


def check_fact(desc: ExampleDescriptor, fact: KnownFact) -> FactResult:
    """Run the checker of one fact; checker errors count as failures."""
    try:
        computed, passed = FACT_CHECKERS[fact.kind](desc, fact)
    except BRWError as exc:
        logger.warning("fact %s/%s raised: %s", desc.id, fact.name, exc)
        computed, passed = f"error: {exc}", False
    if isinstance(computed, (np.floating, np.bool_)):
        computed = computed.item()
    return FactResult(desc.id, fact.name, fact.kind, fact.expected, computed, fact.tolerance,
                      bool(passed), fact.reference)


def reproduce_example(example_id: str, params: Optional[Dict[str, Any]] = None,
                      stream: Optional[TextIO] = None) -> List[FactResult]:
    """
    Check every known fact of a catalog example and print a table.

    Raises:
        KeyError: Unknown example id.
    """
    desc = build_example(example_id, **(params or {}))
    results = [check_fact(desc, fact) for fact in desc.facts]
    print_table(results, stream)
    return results


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def print_table(results: Sequence[FactResult], stream: Optional[TextIO] = None) -> None:
    stream = stream if stream is not None else sys.stdout
    rows = [("example", "fact", "expected", "computed", "tolerance", "verdict")]
    for r in results:
        rows.append((r.example, r.name, _fmt(r.expected), _fmt(r.computed), _fmt(r.tolerance),
                     "PASS" if r.passed else "FAIL"))
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    for row in rows:
        stream.write("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() + "\n")


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="brwlab",
        description="Analyze and simulate branching random walks.",
        epilog=CSV_COLUMNS + "\nEnvironment: BRWLAB_SEED overrides the config seed; "
               "BRWLAB_LOG_LEVEL sets the log level.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="More logging (repeatable).")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="Check a config and validate its model.")
    p.add_argument("config", help="Experiment config (JSON).")

    p = sub.add_parser("run", help="Run the tasks of an experiment config or manifest.")
    p.add_argument("config", help="Experiment config or manifest.json (JSON).")
    p.add_argument("--out", help="Output directory.")
    p.add_argument("--seed", type=int, help="Master seed.")
    p.add_argument("--trials", type=int, help="Override the number of trials.")
    p.add_argument("--radius", type=int, help="Override the truncation radius.")

    p = sub.add_parser("reproduce", help="Check catalog examples against their known facts.")
    p.add_argument("example", help="Catalog id or 'all'.")
    p.add_argument("--params", default="{}", help="Builder parameters as a JSON object.")
    p.add_argument("--json", dest="json_out", help="Also write the rows to this JSON file.")

    p = sub.add_parser("catalog", help="List catalog examples.")
    p.add_argument("--json", action="store_true", help="Print descriptors as JSON.")
    return parser


def _configure_logging(verbose: int) -> None:
    level_name = os.environ.get("BRWLAB_LOG_LEVEL")
    if verbose:
        level = logging.DEBUG if verbose > 1 else logging.INFO
    elif level_name:
        level = getattr(logging, level_name.upper(), logging.WARNING)
    else:
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _cmd_validate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    model, desc = build_model(config.model)
    radius = config.settings["radius"]
    if radius is None:
        radius = desc.validation_radius if desc is not None else (None if model.space.is_finite else 20)
    print(json.dumps(validate_model(model, radius).to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.out)
    status = run_experiment(config, args.seed, {"trials": args.trials, "radius": args.radius})
    print(os.path.join(config.output, "report.json"))
    return status


def _cmd_reproduce(args: argparse.Namespace) -> int:
    try:
        params = _tuplify(json.loads(args.params))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"--params is not valid JSON: {exc}") from exc
    if args.example == "all":
        ids = sorted(CATALOG)
        params = {}
    elif args.example in CATALOG:
        ids = [args.example]
    else:
        raise ConfigError(f"unknown example {args.example!r}; known: {', '.join(sorted(CATALOG))}")
    results: List[FactResult] = []
    for example_id in ids:
        desc = build_example(example_id, **params)
        results.extend(check_fact(desc, fact) for fact in desc.facts)
    print_table(results)
    if args.json_out:
        _write_json(args.json_out, [r.to_json() for r in results])
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def _cmd_catalog(args: argparse.Namespace) -> int:
    if args.json:
        print(json.dumps([build_example(i).to_json() for i in sorted(CATALOG)], indent=2, sort_keys=True))
        return EXIT_OK
    for example_id in sorted(CATALOG):
        desc = build_example(example_id)
        print(f"{example_id:26s} {len(desc.facts):2d} facts  {desc.model.name}")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "validate": _cmd_validate,
    "run": _cmd_run,
    "reproduce": _cmd_reproduce,
    "catalog": _cmd_catalog,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ModelRejectedError) as exc:
        print(f"brwlab: {exc}", file=sys.stderr)
        return EXIT_REJECTED
    except BRWError as exc:
        print(f"brwlab: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
