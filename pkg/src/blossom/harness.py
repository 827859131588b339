"""Seeded experiment runs, CSV traces, and summary tables."""

from __future__ import annotations

import csv
import dataclasses
import importlib
import json
import logging
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .acquisitions import probability_of_improvement
from .controller import BlossomConfig, Phase, RunResult, StepRecord, StopReason, run
from .gp import Domain
from .kernels import KernelFamily, KernelSpec
from .objectives import BENCHMARKS, draw_gp_objective, log_transform, make_benchmark

log = logging.getLogger(__name__)

ALGORITHMS = ("blossom", "ei-pi", "bayes-aqstop")
GP_DRAW = "gpdraw"
BLOSSOM_FIELDS = {f.name for f in dataclasses.fields(BlossomConfig)}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """One objective, one algorithm and stopping parameter, several seeds.

    ``objective`` is a benchmark name, ``"gpdraw"`` (a Matern 5/2 sample path
    per seed, on ``[0, 1]^dim``), or ``"module:attr"`` naming a callable, in
    which case ``lower`` and ``upper`` are required and ``known_minimum`` is
    used for regret if given. ``blossom`` holds overrides for
    :class:`BlossomConfig` fields.
    """

    objective: str
    algorithm: str = "blossom"
    stop_param: float = 1e-2
    seeds: list = field(default_factory=lambda: [0])
    max_iterations: int = 200
    output_dir: Path = Path("results")
    dim: int | None = None
    log_transform: bool = True
    lower: list | None = None
    upper: list | None = None
    known_minimum: float | None = None
    gp_lengthscale: float = 0.2
    gp_output_scale: float = 1.0
    workers: int = 1
    blossom: dict = field(default_factory=dict)

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        self.seeds = [int(s) for s in self.seeds]
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {', '.join(ALGORITHMS)}")
        if not self.stop_param > 0:
            raise ConfigError("stop must be positive")
        unknown = set(self.blossom) - BLOSSOM_FIELDS
        if unknown:
            raise ConfigError(f"unknown BlossomConfig fields: {', '.join(sorted(unknown))}")
        name = self.objective
        if ":" in name:
            if self.lower is None or self.upper is None:
                raise ConfigError("external objectives need lower and upper bounds")
        elif name != GP_DRAW and name.lower().replace("-", "").replace("_", "") not in BENCHMARKS:
            raise ConfigError(f"unknown objective {name!r}; supported: {', '.join(BENCHMARKS + (GP_DRAW,))}")

    @property
    def dimension(self):
        if ":" in self.objective:
            return len(self.lower)
        if self.objective == GP_DRAW:
            return self.dim or 2
        return make_benchmark(self.objective).dimension

    @property
    def tag(self):
        return f"{self.algorithm}-{self.stop_param:g}"

    def blossom_config(self, seed):
        base = {"max_iterations": self.max_iterations, "seed": seed, **self.blossom}
        if self.algorithm == "blossom":
            base["target_global_regret"] = self.stop_param
        else:
            base["switching"] = False
            if self.algorithm == "ei-pi":
                base["bayes_acquisition"] = "ei"
        return BlossomConfig(**base)


@dataclass
class SummaryRow:
    objective: str
    algorithm: str
    mean_regret: float
    mean_steps: float
    mean_step_regret_product: float
    n_runs: int
    mean_bayes_steps: float = float("nan")


def _make_objective(cfg: ExperimentConfig, seed: int):
    """Return ``(callable, domain, known_minimum or None, oracle or None)``."""
    name = cfg.objective
    if ":" in name:
        module, attr = name.split(":", 1)
        fn = getattr(importlib.import_module(module), attr)
        return fn, Domain(np.array(cfg.lower, float), np.array(cfg.upper, float)), cfg.known_minimum, None
    if name == GP_DRAW:
        d = cfg.dim or 2
        kernel = KernelSpec(KernelFamily.MATERN52, cfg.gp_output_scale, (cfg.gp_lengthscale,) * d)
        draw = draw_gp_objective(kernel, Domain.cube(0.0, 1.0, d), seed)
        return draw, draw.domain, None, draw.oracle_minimum
    bench = make_benchmark(name)
    if cfg.dim is not None and cfg.dim != bench.dimension:
        raise ConfigError(f"{bench.name} is {bench.dimension}-dimensional, not {cfg.dim}")
    if cfg.log_transform:
        bench = log_transform(bench)
    return bench.evaluate, bench.domain, bench.known_minimum, None


def _stop_hook(cfg: ExperimentConfig):
    if cfg.algorithm == "ei-pi":

        def hook(step):
            return probability_of_improvement(step.context, step.proposal.x) < cfg.stop_param

        return hook
    if cfg.algorithm == "bayes-aqstop":
        return lambda step: step.proposal.value < cfg.stop_param
    return None


def _fmt(v):
    if v is None:
        return ""
    return format(float(v), ".17g")


def trace_columns(dim):
    return (
        ["iteration", "phase"]
        + [f"x_{k}" for k in range(dim)]
        + ["y", "incumbent_y", "region_radius", "regret_estimate", "jitter", "wall_time_s"]
    )


def write_trace(path, trace, dim):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trace_columns(dim))
        for r in trace:
            w.writerow(
                [r.iteration, r.phase.value]
                + [_fmt(v) for v in r.x]
                + [_fmt(r.y), _fmt(r.incumbent_y), _fmt(r.region_radius), _fmt(r.regret_estimate)]
                + [_fmt(r.jitter), _fmt(r.wall_time_s)]
            )


def read_trace(path):
    """Parse a trace CSV back into :class:`StepRecord` objects.

    ``incumbent_x`` is not stored; it is rebuilt as the first point attaining
    each new running minimum.
    """
    out = []
    best_x = None
    best_y = np.inf
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = sum(1 for h in header if h.startswith("x_"))
        for row in reader:
            x = np.array([float(v) for v in row[2 : 2 + d]])
            y, inc_y, radius, regret, jitter, wall = row[2 + d :]
            y = float(y)
            if y < best_y:
                best_x, best_y = x.copy(), y
            out.append(
                StepRecord(
                    iteration=int(row[0]),
                    phase=Phase(row[1]),
                    x=x,
                    y=y,
                    incumbent_x=best_x.copy(),
                    incumbent_y=float(inc_y),
                    region_radius=float(radius) if radius else None,
                    regret_estimate=float(regret) if regret else None,
                    jitter=float(jitter),
                    wall_time_s=float(wall),
                )
            )
    return out


def _run_one(cfg: ExperimentConfig, seed: int):
    stem = f"{cfg.objective.replace(':', '_')}_{cfg.tag}_seed{seed}"
    meta = {
        "objective": cfg.objective,
        "algorithm": cfg.algorithm,
        "stop_param": cfg.stop_param,
        "tag": cfg.tag,
        "seed": seed,
        "log_transform": cfg.log_transform,
    }
    try:
        fn, domain, y_star, oracle = _make_objective(cfg, seed)
        result = run(fn, domain, cfg.blossom_config(seed), _stop_hook(cfg))
        if oracle is not None:
            y_star, _ = oracle()
            y_star = min(y_star, result.recommended_y)
        regret = None if y_star is None else result.recommended_y - y_star
    except Exception as exc:
        log.exception("seed %d failed before the run could start", seed)
        result = RunResult(np.array([]), np.nan, [], StopReason.ERROR, 0, message=f"{type(exc).__name__}: {exc}")
        domain, y_star, regret = None, None, None
    dim = domain.dim if domain is not None else 0
    write_trace(cfg.output_dir / f"{stem}.csv", result.trace, dim)
    meta.update(
        {
            "trace_file": f"{stem}.csv",
            "dimension": dim,
            "terminated_reason": result.terminated_reason.value,
            "recommendation": [float(v) for v in result.recommendation],
            "recommended_y": result.recommended_y,
            "known_minimum": y_star,
            "regret": regret,
            "total_evals": result.total_evals,
            "n_bayes_iterations": result.n_bayes_iterations,
            "message": result.message,
            "blossom_config": dataclasses.asdict(cfg.blossom_config(seed)),
        }
    )
    with open(cfg.output_dir / f"{stem}.json", "w") as fh:
        json.dump(meta, fh, indent=2, default=str)
    return result


def run_experiment(cfg: ExperimentConfig) -> list:
    """Run every seed and write ``<stem>.csv`` traces and ``<stem>.json`` metadata."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    if cfg.workers > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_run_one, [cfg] * len(cfg.seeds), cfg.seeds))
    return [_run_one(cfg, s) for s in cfg.seeds]


def _load_runs(results_dir):
    results_dir = Path(results_dir)
    runs = []
    for meta_path in sorted(results_dir.glob("*.json")):
        with open(meta_path) as fh:
            meta = json.load(fh)
        if "trace_file" not in meta:
            continue
        trace = read_trace(results_dir / meta["trace_file"])
        runs.append((meta, trace))
    if not runs:
        raise FileNotFoundError(f"no experiment runs found in {results_dir}")
    return runs


def summarize(results_dir) -> list:
    """One :class:`SummaryRow` per (objective, algorithm and parameter).

    Steps are the number of trace rows (every objective evaluation); runs
    without a regret (failed, or no known minimum) are left out of the means.
    """
    groups = defaultdict(list)
    for meta, trace in _load_runs(results_dir):
        groups[(meta["objective"], meta["tag"])].append((meta, trace))
    rows = []
    for (objective, tag), runs in sorted(groups.items()):
        scored = [(m["regret"], len(t), sum(1 for r in t if r.phase != Phase.LOCAL)) for m, t in runs if m["regret"] is not None]
        if scored:
            regret, steps, bayes = (np.array(c, dtype=float) for c in zip(*scored))
            rows.append(
                SummaryRow(objective, tag, regret.mean(), steps.mean(), float(np.mean(steps * regret)), len(scored), bayes.mean())
            )
        else:
            rows.append(SummaryRow(objective, tag, np.nan, np.nan, np.nan, 0))
    return rows


def survival_table(results_dir):
    """Fraction of runs still active after ``n`` steps, per group; ``{tag: array}``."""
    groups = defaultdict(list)
    for meta, trace in _load_runs(results_dir):
        groups[f"{meta['objective']}/{meta['tag']}"].append(len(trace))
    longest = max(max(v) for v in groups.values())
    steps = np.arange(longest + 1)
    return steps, {k: np.array([(np.array(v) > n).mean() for n in steps]) for k, v in sorted(groups.items())}


def write_summary(rows, path, results_dir=None):
    """Write the summary CSV, a three-block text table, and (optionally) survival CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        names = [f.name for f in dataclasses.fields(SummaryRow)]
        w.writerow(names)
        for r in rows:
            w.writerow([getattr(r, n) if isinstance(getattr(r, n), str) else _fmt(getattr(r, n)) for n in names])
    path.with_suffix(".txt").write_text(format_table(rows))
    if results_dir is not None:
        steps, table = survival_table(results_dir)
        with open(path.with_name(path.stem + "_survival.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n"] + list(table))
            for i, n in enumerate(steps):
                w.writerow([n] + [_fmt(v[i]) for v in table.values()])


def format_table(rows):
    """Three blocks (mean regret, mean steps, mean steps x regret); objectives by algorithm."""
    objectives = sorted({r.objective for r in rows})
    tags = sorted({r.algorithm for r in rows})
    lookup = {(r.objective, r.algorithm): r for r in rows}
    width = max([12] + [len(t) + 2 for t in tags])
    lines = []
    for title, attr in (
        ("Regret", "mean_regret"),
        ("Steps", "mean_steps"),
        ("Steps x regret", "mean_step_regret_product"),
    ):
        lines.append(title)
        lines.append("objective".ljust(14) + "".join(t.rjust(width) for t in tags))
        for o in objectives:
            cells = []
            for t in tags:
                r = lookup.get((o, t))
                cells.append(("-" if r is None else f"{getattr(r, attr):.3g}").rjust(width))
            lines.append(o.ljust(14) + "".join(cells))
        lines.append("")
    return "\n".join(lines)
