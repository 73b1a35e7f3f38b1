"""Experiment configuration, orchestration and reporting.

Configurations are INI files with an ``[experiment]`` and an optional
``[solver]`` section (keys of :class:`~pcbb.config.SolverConfig`)::

    [experiment]
    problem = heat2d
    grid = 64
    ratio = 100
    penalty = 10
    iterations = 15

    [solver]
    window = 20

The heat problems run a fixed number of iterations (solver ``tol = 0``)
from the uniform design ``w = volume_fraction`` with unit load, ``k_alpha = 1``
and ``k_beta = ratio``.
"""

from __future__ import annotations

import configparser
import dataclasses
import logging
import math
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import solver as _solver
from .config import ConfigError, SolverConfig
from .corpus import active_set_oracle, random_knapsack, random_quadratic
from .fields import write_field_csv, write_field_vtk
from .heat_fvm import Grid, HeatObjective, HeatProblem
from .projection import project
from .solver import IterationRecord, solve

logger = logging.getLogger(__name__)

PROBLEMS = ("heat2d", "heat3d", "quadratic", "projection-bench")
SYNTHETIC = ("quadratic", "projection-bench")
HISTORY_HEADER = "iter,f,d1_inf,beta,alpha_bar,f_evals,g_evals,f_scaled"

EXIT_OK = 0
EXIT_MAX_ITER = 2
EXIT_LINE_SEARCH = 3
EXIT_CONFIG = 64

# negative curvature jumps to step_max, the behaviour behind the clamped
# 1e30 stepsizes reported for the high-contrast runs
PROTOCOL_SOLVER = {"negative_curvature_step": "max"}

_SOLVER_FIELDS = {f.name: f for f in dataclasses.fields(SolverConfig)}
_SOLVER_TYPES = {
    "decrease_tol": "optfloat",
    "negative_curvature_step": "str",
    "initial_step_norm": "str",
    "reference_rule": "str",
    **{k: "int" for k in ("unit_step_limit", "reset_period", "window", "cycle_length", "max_iter", "max_backtracks")},
}


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str = "heat2d"
    grid: int = 32
    ratio: float = 2.0
    penalty: float = 1.0
    volume_fraction: float = 0.4
    iterations: Optional[int] = None
    size: int = 6
    trials: int = 3
    seed: Optional[int] = None
    output: str = "out"
    pcg_tol: float = 1e-12
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        def check(cond, key, msg):
            if not cond:
                raise ConfigError(f"{key}: {msg}", "experiment", key)

        check(self.problem in PROBLEMS, "problem", f"must be one of {', '.join(PROBLEMS)}")
        check(self.grid >= 2, "grid", "must be >= 2")
        check(self.ratio >= 1, "ratio", "conductivity ratio must be >= 1")
        check(self.penalty >= 1, "penalty", "must be >= 1")
        check(0 < self.volume_fraction < 1, "volume_fraction", "must lie in (0, 1)")
        check(self.iterations is None or self.iterations >= 0, "iterations", "must be >= 0")
        check(self.size >= 1, "size", "must be >= 1")
        check(self.trials >= 1, "trials", "must be >= 1")
        check(self.pcg_tol > 0, "pcg_tol", "must be positive")
        check(
            self.problem not in SYNTHETIC or self.seed is not None,
            "seed",
            f"a seed is mandatory for the synthetic problem '{self.problem}'",
        )
        for key in self.solver:
            if key not in _SOLVER_FIELDS or key == "max_iter":
                raise ConfigError(f"unknown solver key '{key}'", "solver", key)
        try:
            self.solver_config()
        except ConfigError as exc:
            key = next((k for k in self.solver if k in str(exc)), None)
            raise ConfigError(f"solver: {exc}", "solver", key) from None

    @property
    def is_heat(self) -> bool:
        return self.problem.startswith("heat")

    def resolved_iterations(self) -> int:
        if self.iterations is not None:
            return self.iterations
        return 15 if self.is_heat else 1000

    def solver_config(self) -> SolverConfig:
        base = {"tol": 0.0 if self.is_heat else 1e-10, **PROTOCOL_SOLVER}
        base.update(self.solver)
        return SolverConfig(max_iter=self.resolved_iterations(), **base)

    def resolved(self) -> "ExperimentConfig":
        """Copy with every default made explicit."""
        scfg = dataclasses.asdict(self.solver_config())
        scfg.pop("max_iter")
        return dataclasses.replace(self, iterations=self.resolved_iterations(), solver=scfg)


def format_number(v) -> str:
    """Shortest round-trip text, exponent without ``+`` or leading zeros (``1e30``)."""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    s = repr(v)
    if "e" in s:
        mant, exp = s.split("e")
        s = f"{mant}e{int(exp)}"
    return s


def _format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (int, float)):
        return format_number(v)
    return str(v)


def write_config(cfg: ExperimentConfig, path: str | os.PathLike) -> None:
    lines = ["[experiment]"]
    for f in dataclasses.fields(cfg):
        if f.name != "solver":
            lines.append(f"{f.name} = {_format_value(getattr(cfg, f.name))}")
    lines.append("")
    lines.append("[solver]")
    for key in sorted(cfg.solver):
        lines.append(f"{key} = {_format_value(cfg.solver[key])}")
    Path(path).write_text("\n".join(lines) + "\n")


_EXPERIMENT_TYPES = {
    "problem": "str",
    "grid": "int",
    "ratio": "float",
    "penalty": "float",
    "volume_fraction": "float",
    "iterations": "optint",
    "size": "int",
    "trials": "int",
    "seed": "optint",
    "output": "str",
    "pcg_tol": "float",
}


def _convert(kind: str, text: str):
    text = text.strip()
    if kind.startswith("opt"):
        if text == "" or text.lower() == "none":
            return None
        kind = kind[3:]
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    return text


def _line_map(text: str) -> dict:
    lines, section = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            lines[(section, None)] = no
            continue
        m = re.match(r"\s*([^#;=:\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            lines[(section, m.group(1))] = no
    return lines


def parse_config(text: str, source: str = "<config>", overrides: Optional[dict] = None) -> ExperimentConfig:
    """Parse INI text; ``overrides`` maps ``"section.key"`` to raw strings.

    Errors are reported as ``source:line: message``.
    """
    where = _line_map(text)

    def fail(msg, section=None, key=None):
        no = where.get((section, key)) or where.get((section, None))
        loc = f"{source}:{no}" if no else source
        raise ConfigError(f"{loc}: {msg}")

    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    raw = {s: dict(parser.items(s)) for s in parser.sections()}
    for section in raw:
        if section not in ("experiment", "solver"):
            fail(f"unknown section [{section}]", section)
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.rpartition(".")
        raw.setdefault(section or "experiment", {})[key] = str(value)

    kwargs = {}
    for key, value in raw.get("experiment", {}).items():
        if key not in _EXPERIMENT_TYPES:
            fail(f"unknown key '{key}'", "experiment", key)
        try:
            kwargs[key] = _convert(_EXPERIMENT_TYPES[key], value)
        except ValueError:
            fail(f"{key}: cannot parse '{value}' as {_EXPERIMENT_TYPES[key]}", "experiment", key)
    solver = {}
    for key, value in raw.get("solver", {}).items():
        if key not in _SOLVER_FIELDS:
            fail(f"unknown solver key '{key}'", "solver", key)
        kind = _SOLVER_TYPES.get(key, "float")
        try:
            solver[key] = _convert(kind, value)
        except ValueError:
            fail(f"{key}: cannot parse '{value}' as {kind}", "solver", key)
    try:
        return ExperimentConfig(**kwargs, solver=solver)
    except ConfigError as exc:
        fail(str(exc), exc.section, exc.key)


def read_config(path: str | os.PathLike, overrides: Optional[dict] = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), str(path), overrides)


def _history_row(rec: IterationRecord, f0: float) -> str:
    scaled = rec.f / f0 if f0 != 0 else math.nan
    vals = (rec.k, rec.f, rec.d1_inf, rec.beta, rec.alpha_bar, rec.evals, rec.grad_evals, scaled)
    return ",".join(format_number(v) for v in vals)


class HistoryWriter:
    """Appends history rows to a CSV file as they are produced."""

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self._fh = open(self.path, "w", newline="\n")
        self._fh.write(HISTORY_HEADER + "\n")
        self._fh.flush()
        self.f0 = None

    def __call__(self, rec: IterationRecord) -> None:
        if self.f0 is None:
            self.f0 = rec.f
        self._fh.write(_history_row(rec, self.f0) + "\n")
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class RunReport:
    config: ExperimentConfig
    status: str
    history: list = field(default_factory=list)
    fields: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        if self.status == _solver.LINE_SEARCH_FAILURE:
            return EXIT_LINE_SEARCH
        if self.status == _solver.MAX_ITER and self.config.solver_config().tol > 0:
            return EXIT_MAX_ITER
        return EXIT_OK


def write_history(report: RunReport | list, path: str | os.PathLike) -> None:
    history = report.history if isinstance(report, RunReport) else report
    with HistoryWriter(path) as writer:
        for rec in history:
            writer(rec)


def heat_problem(cfg: ExperimentConfig) -> HeatProblem:
    dim = 2 if cfg.problem == "heat2d" else 3
    return HeatProblem(
        Grid(dim, cfg.grid),
        k_alpha=1.0,
        k_beta=cfg.ratio,
        p=cfg.penalty,
        load=1.0,
        volume_fraction=cfg.volume_fraction,
    )


def run_experiment(cfg: ExperimentConfig, write: bool = True) -> RunReport:
    out = Path(cfg.output)
    if write:
        out.mkdir(parents=True, exist_ok=True)
        write_config(cfg.resolved(), out / "config_resolved.txt")
    timings = {}

    if cfg.problem == "projection-bench":
        t0 = time.perf_counter()
        rows = projection_bench(cfg.size, cfg.trials, cfg.seed)
        timings["bench"] = time.perf_counter() - t0
        if write:
            write_bench(rows, out / "bench.csv")
        return RunReport(cfg, "completed", timings=timings, extra={"bench": rows})

    t0 = time.perf_counter()
    if cfg.is_heat:
        prob = heat_problem(cfg)
        obj = HeatObjective(prob, cfg.pcg_tol)
        kset, x0 = prob.feasible_set(), prob.initial_design()
    else:
        inst = random_quadratic(cfg.size, np.random.default_rng(cfg.seed))
        obj, kset, x0 = inst, inst.kset, np.zeros(cfg.size)
    timings["setup"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    writer = HistoryWriter(out / "history.csv") if write else None
    try:
        result = solve(obj, kset, x0, cfg.solver_config(), on_record=writer)
    finally:
        if writer is not None:
            writer.close()
    timings["solve"] = time.perf_counter() - t0

    report = RunReport(cfg, result.status, history=result.history, timings=timings)
    report.fields["design"] = result.x_final
    if cfg.is_heat:
        t0 = time.perf_counter()
        report.fields["state"] = obj.state(result.x_final).theta
        report.extra["state_solves"] = obj.state_solves
        report.extra["adjoint_solves"] = obj.adjoint_solves
        if write:
            for name in ("design", "state"):
                write_field_csv(out / f"{name}_final.csv", prob.grid, report.fields[name], name)
                write_field_vtk(out / f"{name}_final.vtk", prob.grid, report.fields[name], name)
        timings["output"] = time.perf_counter() - t0
    else:
        x_star = active_set_oracle(inst.Q, inst.q, kset)
        report.extra["oracle_error"] = float(np.max(np.abs(result.x_final - x_star)))
        if write:
            np.savetxt(out / "solution.csv", np.column_stack([result.x_final, x_star]), delimiter=",",
                       header="x,x_oracle", comments="")
    report.extra["feasibility"] = abs(kset.residual(result.x_final))
    return report


def projection_bench(n: int, trials: int, seed) -> list[dict]:
    """Time ``trials`` projections of random points onto random ``n``-dimensional sets."""
    rng = np.random.default_rng(seed)
    times, iters, resid = [], [], []
    for _ in range(trials):
        kset = random_knapsack(n, rng)
        x = rng.normal(scale=3.0, size=n)
        t0 = time.perf_counter()
        y, info = project(x, kset, full_output=True)
        times.append(time.perf_counter() - t0)
        iters.append(info.iterations)
        resid.append(abs(kset.residual(y)) / kset.feasibility_scale(y))
    return [
        {
            "n": n,
            "trials": trials,
            "time_mean": float(np.mean(times)),
            "time_min": float(np.min(times)),
            "time_max": float(np.max(times)),
            "brent_iter_mean": float(np.mean(iters)),
            "brent_iter_max": int(np.max(iters)),
            "rel_residual_max": float(np.max(resid)),
        }
    ]


def write_bench(rows: list[dict], path: str | os.PathLike) -> None:
    if not rows:
        return
    keys = list(rows[0])
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(keys) + "\n")
        for row in rows:
            fh.write(",".join(format_number(row[k]) for k in keys) + "\n")


def check_gradient(
    prob: HeatProblem,
    directions: int = 20,
    seed: int = 0,
    step: float = 1e-6,
    pcg_tol: float = 1e-12,
) -> np.ndarray:
    """Relative errors of adjoint directional derivatives against central differences.

    The design is drawn inside ``[0.1, 0.9]`` and each direction has zero
    mean, so both perturbed designs stay feasible.
    """
    rng = np.random.default_rng(seed)
    obj = HeatObjective(prob, pcg_tol)
    w = rng.uniform(0.1, 0.9, prob.n)
    _, g = obj.value_and_grad(w)
    errors = np.empty(directions)
    for i in range(directions):
        dw = rng.normal(size=prob.n)
        dw -= dw.mean()
        dw /= np.max(np.abs(dw))
        fd = (obj.value(w + step * dw) - obj.value(w - step * dw)) / (2 * step)
        exact = float(g @ dw)
        errors[i] = abs(exact - fd) / abs(exact)
    return errors
