"""Experiment orchestration: configs, seeded trial scheduling, and report files.

Config files are flat key-value documents with sections (INI syntax); see the
commented examples under ``configs/``.  Reports consist of a deterministic
``trials.csv`` (byte-identical across reruns of the same config, independent
of the parallelism degree), a ``summary.json`` with aggregates, scaling fits
and environment metadata, and a ``timings.csv`` that is explicitly outside
the determinism contract.

Child seeds derive from the root seed through a splittable counter scheme:
``sha256(root | n | trial | tag)`` truncated to 64 bits, where ``tag`` names
the consumer ("instance", "permutation", or the algorithm label).  Adding an
algorithm therefore never perturbs the draws of the others.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from . import __version__
from .algorithms import (
    AlgorithmConfig,
    AlgorithmKind,
    RepairConfig,
    repair_feasibility,
    run_dla,
    run_multi_soa,
    run_pbd,
    run_sfa,
    run_sna,
    run_soa,
)
from .core import Instance, MultiInstance, StepSchedule
from .generators import GeneratorFamily, GeneratorSpec, PermutationPlan, generate, permute, read_mknap
from .metrics import TrialResult, aggregate, evaluate_trial, fit_scaling
from .simplex import DEFAULT_FEAS_TOL, DEFAULT_PIVOT_TOL, LpStatus, solve_relaxation

__all__ = [
    "FORMAT_VERSION",
    "ENV_WORKERS",
    "ConfigError",
    "AlgorithmChoice",
    "ExperimentConfig",
    "ExperimentReport",
    "TrialRow",
    "child_seed",
    "parse_algorithm_token",
    "load_config",
    "run_experiment",
    "load_report",
]

FORMAT_VERSION = "1"
ENV_WORKERS = "ONLINELP_WORKERS"

TRIALS_CSV_COLUMNS = (
    "n", "trial", "algorithm", "seed", "m", "objective", "lp_opt",
    "regret", "violation", "competitiveness", "max_dual_norm",
)
TIMINGS_CSV_COLUMNS = ("n", "trial", "algorithm", "wall_seconds")


class ConfigError(ValueError):
    """Invalid experiment configuration; maps to exit code 1 in the CLI."""


def child_seed(root: int, n: int, trial: int, tag: str = "") -> int:
    """Pure, stable derivation of a 64-bit child seed from (root, n, trial, tag)."""
    digest = hashlib.sha256(f"{root}|{n}|{trial}|{tag}".encode("ascii")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class AlgorithmChoice:
    kind: AlgorithmKind
    schedule: Optional[StepSchedule]
    label: str


_SCHEDULED = {AlgorithmKind.SOA, AlgorithmKind.SFA, AlgorithmKind.SNA}


def parse_algorithm_token(token: str) -> AlgorithmChoice:
    """Parse tokens like ``soa/sqrt_t``, ``multisoa``, ``dla``, ``pbd``."""
    token = token.strip().lower()
    name, slash, sched = token.partition("/")
    try:
        kind = AlgorithmKind(name)
    except ValueError:
        raise ConfigError(f"unknown algorithm {name!r}") from None
    if kind in _SCHEDULED:
        if not slash:
            raise ConfigError(f"{name} needs a schedule suffix, e.g. {name}/sqrt_t")
        try:
            schedule = StepSchedule(sched)
        except ValueError:
            raise ConfigError(f"unknown schedule {sched!r} in {token!r}") from None
        return AlgorithmChoice(kind=kind, schedule=schedule, label=token)
    if kind is AlgorithmKind.MULTI_SOA:
        if slash and sched != StepSchedule.SQRT_N.value:
            raise ConfigError("multisoa only supports the fixed sqrt_n schedule")
        return AlgorithmChoice(kind=kind, schedule=StepSchedule.SQRT_N, label="multisoa")
    if slash:
        raise ConfigError(f"{name} does not take a schedule")
    return AlgorithmChoice(kind=kind, schedule=None, label=name)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs; picklable so workers can receive it whole."""

    name: str
    seed: int
    trials: int
    n_values: Tuple[int, ...]
    algorithms: Tuple[AlgorithmChoice, ...]
    permute_arrivals: bool
    workers: int
    generator_params: Optional[Dict]
    benchmark_path: Optional[str]
    repair: RepairConfig
    output_dir: Optional[str]
    pivot_tol: float = DEFAULT_PIVOT_TOL
    feas_tol: float = DEFAULT_FEAS_TOL

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required")
        if (self.generator_params is None) == (self.benchmark_path is None):
            raise ConfigError("exactly one of generator and benchmark must be given")
        if self.generator_params is not None and not self.n_values:
            raise ConfigError("generator experiments need a non-empty n list")

    def spec_for(self, n: int, seed: int) -> GeneratorSpec:
        params = dict(self.generator_params)
        return GeneratorSpec(n=n, seed=seed, **params)

    def echo(self) -> Dict:
        """JSON-safe copy of the configuration for the report."""
        doc = {
            "name": self.name,
            "seed": self.seed,
            "trials": self.trials,
            "n_values": list(self.n_values),
            "algorithms": [a.label for a in self.algorithms],
            "permute": self.permute_arrivals,
            "workers": self.workers,
            "benchmark": self.benchmark_path,
            "repair": {
                "enabled": self.repair.enabled,
                "d_lo_override": self.repair.d_lo_override,
                "skip_if_feasible": self.repair.skip_if_feasible,
            },
            "pivot_tol": self.pivot_tol,
            "feas_tol": self.feas_tol,
        }
        if self.generator_params is not None:
            params = dict(self.generator_params)
            params["family"] = params["family"].value
            params["d_range"] = list(params["d_range"])
            doc["generator"] = params
        return doc


def _get(cp: configparser.ConfigParser, section: str, option: str, fallback=None):
    if cp.has_option(section, option):
        return cp.get(section, option)
    return fallback


def load_config(path) -> ExperimentConfig:
    """Read and validate an experiment config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not cp.has_section("experiment"):
        raise ConfigError("missing [experiment] section")

    def bad(msg: str) -> ConfigError:
        return ConfigError(f"{path}: {msg}")

    try:
        name = _get(cp, "experiment", "name", path.stem)
        seed = int(_get(cp, "experiment", "seed", "0"))
        trials = int(_get(cp, "experiment", "trials", "1"))
        raw_n = _get(cp, "experiment", "n_values", "")
        n_values = tuple(int(v) for v in raw_n.replace(",", " ").split())
        raw_algos = _get(cp, "experiment", "algorithms", "")
        algorithms = tuple(parse_algorithm_token(t) for t in raw_algos.split(",") if t.strip())
        permute_arrivals = cp.getboolean("experiment", "permute", fallback=False)
        workers = int(_get(cp, "experiment", "workers", "0"))
    except ConfigError:
        raise
    except ValueError as exc:
        raise bad(f"invalid [experiment] value: {exc}") from None

    generator_params = None
    benchmark_path = None
    if cp.has_section("generator"):
        try:
            family = GeneratorFamily(_get(cp, "generator", "family", ""))
        except ValueError:
            raise bad(f"unknown generator family {_get(cp, 'generator', 'family', '')!r}") from None
        try:
            generator_params = {
                "family": family,
                "m": int(_get(cp, "generator", "m", "1")),
                "d_range": (
                    float(_get(cp, "generator", "d_lo", str(1.0 / 3.0))),
                    float(_get(cp, "generator", "d_hi", str(2.0 / 3.0))),
                ),
            }
            if cp.has_option("generator", "cauchy_truncation"):
                generator_params["cauchy_truncation"] = cp.getfloat("generator", "cauchy_truncation")
            for key in ("adversarial_low", "adversarial_high", "adversarial_capacity_fraction"):
                if cp.has_option("generator", key):
                    generator_params[key] = cp.getfloat("generator", key)
        except ValueError as exc:
            raise bad(f"invalid [generator] value: {exc}") from None
    if cp.has_section("benchmark"):
        benchmark_path = _get(cp, "benchmark", "path")
        if not benchmark_path:
            raise bad("[benchmark] needs a path")
        if not Path(benchmark_path).is_file():
            raise bad(f"benchmark file not found: {benchmark_path}")

    repair = RepairConfig(
        enabled=cp.getboolean("repair", "enabled", fallback=False),
        d_lo_override=(cp.getfloat("repair", "d_lo_override")
                       if cp.has_option("repair", "d_lo_override") else None),
        skip_if_feasible=cp.getboolean("repair", "skip_if_feasible", fallback=False),
    )
    output_dir = _get(cp, "output", "directory") if cp.has_section("output") else None
    pivot_tol = cp.getfloat("tolerances", "pivot_tol", fallback=DEFAULT_PIVOT_TOL) \
        if cp.has_section("tolerances") else DEFAULT_PIVOT_TOL
    feas_tol = cp.getfloat("tolerances", "feas_tol", fallback=DEFAULT_FEAS_TOL) \
        if cp.has_section("tolerances") else DEFAULT_FEAS_TOL

    try:
        return ExperimentConfig(
            name=name,
            seed=seed,
            trials=trials,
            n_values=n_values,
            algorithms=algorithms,
            permute_arrivals=permute_arrivals,
            workers=workers,
            generator_params=generator_params,
            benchmark_path=benchmark_path,
            repair=repair,
            output_dir=output_dir,
            pivot_tol=pivot_tol,
            feas_tol=feas_tol,
        )
    except ValueError as exc:
        raise bad(str(exc)) from None


@dataclass(frozen=True)
class TrialRow:
    """One deterministic line of trials.csv."""

    n: int
    trial: int
    algorithm: str
    seed: int
    m: int
    objective: float
    lp_opt: float
    regret: float
    violation: float
    competitiveness: Optional[float]
    max_dual_norm: float

    @classmethod
    def from_result(cls, trial: int, res: TrialResult) -> "TrialRow":
        return cls(
            n=res.n, trial=trial, algorithm=res.algorithm, seed=res.seed, m=res.m,
            objective=res.objective, lp_opt=res.offline_lp_opt, regret=res.regret,
            violation=res.violation, competitiveness=res.competitiveness,
            max_dual_norm=res.max_dual_norm,
        )

    def to_result(self, wall_time: float = 0.0, capacity_norm: float = float("nan")) -> TrialResult:
        return TrialResult(
            algorithm=self.algorithm, n=self.n, m=self.m, objective=self.objective,
            offline_lp_opt=self.lp_opt, regret=self.regret, violation=self.violation,
            competitiveness=self.competitiveness, wall_time=wall_time,
            max_dual_norm=self.max_dual_norm, seed=self.seed, capacity_norm=capacity_norm,
        )


def _fmt_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _run_algorithm(choice: AlgorithmChoice, inst: Instance, seed: int,
                   pivot_tol: float, feas_tol: float):
    if choice.kind is AlgorithmKind.SOA:
        return run_soa(inst, AlgorithmConfig(AlgorithmKind.SOA, choice.schedule, rng_seed=seed))
    if choice.kind is AlgorithmKind.SFA:
        return run_sfa(inst, AlgorithmConfig(AlgorithmKind.SFA, choice.schedule, rng_seed=seed))
    if choice.kind is AlgorithmKind.SNA:
        return run_sna(inst, AlgorithmConfig(AlgorithmKind.SNA, choice.schedule, rng_seed=seed))
    if choice.kind is AlgorithmKind.MULTI_SOA:
        minst = MultiInstance.from_instance(inst)
        return run_multi_soa(minst, AlgorithmConfig(AlgorithmKind.MULTI_SOA, StepSchedule.SQRT_N,
                                                    rng_seed=seed))
    if choice.kind is AlgorithmKind.DLA:
        return run_dla(inst, pivot_tol=pivot_tol, feas_tol=feas_tol)
    if choice.kind is AlgorithmKind.PBD:
        return run_pbd(inst, seed, pivot_tol=pivot_tol, feas_tol=feas_tol)
    raise ValueError(f"unsupported algorithm kind {choice.kind}")


def _load_benchmark_instance(cfg: ExperimentConfig, index: int) -> Instance:
    problems = read_mknap(cfg.benchmark_path)
    if index >= len(problems):
        raise ValueError(f"benchmark problem index {index} out of range")
    return problems[index][0]


def _trial_task(args):
    """Run every algorithm of one (n-or-problem, trial) cell; returns rows or an error."""
    cfg, key, trial = args
    rows: List[TrialRow] = []
    timings: List[Tuple[int, int, str, float]] = []
    try:
        if cfg.generator_params is not None:
            n = key
            seed_tag = ""
            inst = generate(cfg.spec_for(n, child_seed(cfg.seed, n, trial, "instance")))
        else:
            inst = _load_benchmark_instance(cfg, key)
            n = inst.n
            seed_tag = f"b{key}:"
        if cfg.permute_arrivals:
            plan = PermutationPlan.random(
                inst.n, child_seed(cfg.seed, n, trial, seed_tag + "permutation"))
            inst = permute(inst, plan)
        t0 = time.perf_counter()
        lp = solve_relaxation(inst, pivot_tol=cfg.pivot_tol, feas_tol=cfg.feas_tol)
        lp_seconds = time.perf_counter() - t0
        if lp.status is not LpStatus.OPTIMAL:
            raise RuntimeError(f"offline relaxation returned {lp.status.value}")
        timings.append((n, trial, "offline_lp", lp_seconds))
        for choice in cfg.algorithms:
            seed = child_seed(cfg.seed, n, trial, seed_tag + choice.label)
            t0 = time.perf_counter()
            trace = _run_algorithm(choice, inst, seed, cfg.pivot_tol, cfg.feas_tol)
            wall = time.perf_counter() - t0
            res = evaluate_trial(inst, trace, lp.objective, algorithm=choice.label,
                                 wall_time=wall, seed=seed)
            rows.append(TrialRow.from_result(trial, res))
            timings.append((n, trial, choice.label, wall))
            if cfg.repair.enabled:
                rlabel = choice.label + "+repair"
                rseed = child_seed(cfg.seed, n, trial, seed_tag + rlabel)
                t0 = time.perf_counter()
                repaired = repair_feasibility(inst, trace, cfg.repair, rseed)
                rwall = time.perf_counter() - t0
                rres = evaluate_trial(inst, repaired, lp.objective, algorithm=rlabel,
                                      wall_time=rwall, seed=rseed)
                rows.append(TrialRow.from_result(trial, rres))
                timings.append((n, trial, rlabel, rwall))
        return rows, timings, None
    except Exception as exc:  # recorded per-trial; the experiment continues
        return [], [], {"n": int(key), "trial": int(trial), "error": f"{type(exc).__name__}: {exc}"}


def _resolve_workers(cfg: ExperimentConfig, override: Optional[int]) -> int:
    if override is not None and override > 0:
        return override
    if cfg.workers > 0:
        return cfg.workers
    env = os.environ.get(ENV_WORKERS, "")
    if env.isdigit() and int(env) > 0:
        return int(env)
    return 1


@dataclass
class ExperimentReport:
    """In-memory form of one experiment's outputs."""

    config: Dict
    rows: List[TrialRow]
    timings: List[Tuple[int, int, str, float]]
    aggregates: List[Dict]
    fits: Dict
    errors: List[Dict]
    meta: Dict

    def trials_csv(self) -> str:
        lines = [",".join(TRIALS_CSV_COLUMNS)]
        for row in self.rows:
            lines.append(",".join(_fmt_cell(getattr(row, col)) for col in TRIALS_CSV_COLUMNS))
        return "\n".join(lines) + "\n"

    def timings_csv(self) -> str:
        lines = [",".join(TIMINGS_CSV_COLUMNS)]
        for n, trial, algorithm, seconds in self.timings:
            lines.append(f"{n},{trial},{algorithm},{repr(float(seconds))}")
        return "\n".join(lines) + "\n"

    def summary_json(self) -> str:
        payload = {
            "format_version": FORMAT_VERSION,
            "config": self.config,
            "aggregates": self.aggregates,
            "fits": self.fits,
            "errors": self.errors,
            "meta": self.meta,
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    def save(self, directory) -> None:
        """Write trials.csv, timings.csv and summary.json atomically."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, payload in (("trials.csv", self.trials_csv()),
                              ("timings.csv", self.timings_csv()),
                              ("summary.json", self.summary_json())):
            target = directory / name
            tmp = directory / (name + ".tmp")
            tmp.write_text(payload, encoding="ascii")
            os.replace(tmp, target)


def _parse_opt_float(cell: str) -> Optional[float]:
    return None if cell == "" else float(cell)


def load_report(directory) -> ExperimentReport:
    """Load a saved report; re-saving it reproduces the same bytes."""
    directory = Path(directory)
    summary = json.loads((directory / "summary.json").read_text(encoding="ascii"))
    rows: List[TrialRow] = []
    lines = (directory / "trials.csv").read_text(encoding="ascii").splitlines()
    if lines and lines[0] != ",".join(TRIALS_CSV_COLUMNS):
        raise ValueError("unexpected trials.csv header")
    for line in lines[1:]:
        cells = line.split(",")
        rows.append(TrialRow(
            n=int(cells[0]), trial=int(cells[1]), algorithm=cells[2], seed=int(cells[3]),
            m=int(cells[4]), objective=float(cells[5]), lp_opt=float(cells[6]),
            regret=float(cells[7]), violation=float(cells[8]),
            competitiveness=_parse_opt_float(cells[9]), max_dual_norm=float(cells[10]),
        ))
    timings: List[Tuple[int, int, str, float]] = []
    tlines = (directory / "timings.csv").read_text(encoding="ascii").splitlines()
    for line in tlines[1:]:
        cells = line.split(",")
        timings.append((int(cells[0]), int(cells[1]), cells[2], float(cells[3])))
    return ExperimentReport(
        config=summary["config"],
        rows=rows,
        timings=timings,
        aggregates=summary["aggregates"],
        fits=summary["fits"],
        errors=summary["errors"],
        meta=summary["meta"],
    )


def run_experiment(cfg: ExperimentConfig, *, workers: Optional[int] = None) -> ExperimentReport:
    """Run all (n, trial) cells, aggregate, and fit scaling laws.

    Per cell: a child seed yields the instance (and permutation when enabled),
    the offline relaxation is solved once, and every configured algorithm runs
    on the identical bits.  Results do not depend on the parallelism degree;
    rows are sorted by (n, trial, algorithm) before any reduction.
    """
    if cfg.generator_params is not None:
        keys = list(cfg.n_values)
    else:
        keys = list(range(len(read_mknap(cfg.benchmark_path))))
    tasks = [(cfg, key, trial) for key in keys for trial in range(cfg.trials)]
    nworkers = _resolve_workers(cfg, workers)
    started = time.perf_counter()
    if nworkers > 1:
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            outcomes = list(pool.map(_trial_task, tasks))
    else:
        outcomes = [_trial_task(t) for t in tasks]
    total_seconds = time.perf_counter() - started

    rows: List[TrialRow] = []
    timings: List[Tuple[int, int, str, float]] = []
    errors: List[Dict] = []
    for row_chunk, timing_chunk, error in outcomes:
        rows.extend(row_chunk)
        timings.extend(timing_chunk)
        if error is not None:
            errors.append(error)
    rows.sort(key=lambda r: (r.n, r.trial, r.algorithm))
    timings.sort(key=lambda t: (t[0], t[1], t[2]))

    groups: Dict[Tuple[str, int], List[TrialResult]] = {}
    for row in rows:
        groups.setdefault((row.algorithm, row.n), []).append(row.to_result())
    aggregates = []
    for (label, n) in sorted(groups):
        summary = aggregate(groups[(label, n)])
        doc = dataclasses.asdict(summary)
        # wall-time means belong to the timing side channel, not the aggregate
        doc.pop("mean_wall_time", None)
        aggregates.append(doc)

    fits: Dict = {}
    by_label: Dict[str, List[Dict]] = {}
    for doc in aggregates:
        by_label.setdefault(doc["algorithm"], []).append(doc)
    for label, docs in sorted(by_label.items()):
        docs = sorted(docs, key=lambda d: d["n"])
        ns = [d["n"] for d in docs]
        entry = {}
        for measure in ("regret", "violation"):
            try:
                fit = fit_scaling(ns, [d[f"mean_{measure}"] for d in docs],
                                  [d[f"stderr_{measure}"] for d in docs])
                entry[measure] = dataclasses.asdict(fit)
                entry[measure]["ns"] = list(fit.ns)
                entry[measure]["means"] = list(fit.means)
                entry[measure]["stderrs"] = list(fit.stderrs)
                entry[measure]["excluded_ns"] = list(fit.excluded_ns)
            except ValueError as exc:
                entry[measure] = {"error": str(exc)}
        fits[label] = entry

    wall_by_alg: Dict[str, float] = {}
    for n, trial, label, seconds in timings:
        wall_by_alg[label] = wall_by_alg.get(label, 0.0) + seconds
    generator_notes = ""
    if cfg.generator_params is not None:
        probe = cfg.spec_for(max(cfg.n_values), 0)
        generator_notes = probe.notes()
    meta = {
        "format_version": FORMAT_VERSION,
        "package_version": __version__,
        "root_seed": cfg.seed,
        "workers": nworkers,
        "total_wall_seconds": total_seconds,
        "wall_seconds_by_algorithm": {k: wall_by_alg[k] for k in sorted(wall_by_alg)},
        "competitiveness_denominator": "lp_relaxation",
        "generator_notes": generator_notes,
        "seed_scheme": "sha256(root|n|trial|tag)[:8]",
    }
    return ExperimentReport(
        config=cfg.echo(),
        rows=rows,
        timings=timings,
        aggregates=aggregates,
        fits=fits,
        errors=errors,
        meta=meta,
    )
