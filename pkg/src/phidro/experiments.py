"""Monte Carlo harness: deviation frequencies, estimator bias and sample-complexity curves.

Every trial owns a pre-assigned slice of the Philox stream (see :mod:`phidro.saa`),
and per-trial estimates are reduced in trial order, so results do not depend on
the number of worker threads.
"""
from __future__ import annotations

import csv
import io
import json
import math
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, TextIO

from .bounds import HardInstance, hard_instance, sample_lower_bound, sample_upper_bound
from .divergence import Growth, parse_divergence
from .errors import ConfigError, GrowthUnbounded, PhiDroError
from .risk import FiniteInstance, primal_value
from .saa import draw_empirical, saa_estimate, truncated_saa_estimate, truncation_level

CSV_HEADER = (
    "n",
    "trials",
    "eps",
    "deviation_freq",
    "mean_estimate",
    "std_estimate",
    "r_true",
    "predicted_lb",
    "predicted_ub",
    "seed",
)

TRUNCATION_MODES = ("sandwich", "theorem_rate", "fixed")


class TrialFailure(PhiDroError):
    """A single trial raised; the experiment is aborted rather than silently skipping it."""

    def __init__(self, n: int, trial: int, cause: BaseException):
        super().__init__(f"trial {trial} at n={n} failed: {type(cause).__name__}: {cause}")
        self.n = n
        self.trial = trial
        self.rows_written = 0


@dataclass(frozen=True)
class Truncation:
    mode: str
    L: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in TRUNCATION_MODES:
            raise ConfigError("truncation.mode", f"expected one of {TRUNCATION_MODES}, got {self.mode!r}")
        if self.mode == "fixed":
            if self.L is None or not (isinstance(self.L, (int, float)) and self.L >= 1.0):
                raise ConfigError("truncation.L", "fixed truncation needs a level L >= 1")
        elif self.L is not None:
            raise ConfigError("truncation.L", f"L is only allowed with mode 'fixed', not {self.mode!r}")

    def level(self, inst: FiniteInstance, eps: float) -> float:
        if self.mode == "fixed":
            return float(self.L)
        return truncation_level(inst.spec, inst.B, inst.tau, eps, self.mode)

    def to_dict(self) -> dict[str, Any]:
        return {"mode": self.mode} if self.L is None else {"mode": self.mode, "L": self.L}


@dataclass(frozen=True)
class ExperimentConfig:
    instance: FiniteInstance
    n_grid: tuple[int, ...]
    eps: float
    delta: float = 0.1
    trials: int = 100
    seed: int = 0
    truncation: Truncation | None = None
    output_path: str | None = None
    hard: HardInstance | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "n_grid", tuple(self.n_grid))
        if not all(isinstance(n, int) and not isinstance(n, bool) and n >= 1 for n in self.n_grid):
            raise ConfigError("n_grid", "entries must be positive integers")
        if any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ConfigError("n_grid", "must be strictly increasing")
        if not (isinstance(self.trials, int) and not isinstance(self.trials, bool) and self.trials >= 1):
            raise ConfigError("trials", "must be an integer >= 1")
        if not (isinstance(self.eps, (int, float)) and math.isfinite(self.eps) and self.eps > 0.0):
            raise ConfigError("eps", "must be a finite number > 0")
        if not (isinstance(self.delta, (int, float)) and 0.0 < self.delta < 1.0):
            raise ConfigError("delta", "must lie in (0, 1)")
        if not (isinstance(self.seed, int) and not isinstance(self.seed, bool) and 0 <= self.seed < 2**64):
            raise ConfigError("seed", "must be an integer in [0, 2**64)")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config", "must be a JSON object")
        known = {"instance", "n_grid", "eps", "delta", "trials", "seed", "truncation", "output_path"}
        extra = sorted(set(data) - known)
        if extra:
            raise ConfigError(extra[0], "unknown field")
        for name in ("instance", "n_grid", "eps"):
            if name not in data:
                raise ConfigError(name, "required field is missing")
        inst, hard = _parse_instance(data["instance"])
        if not isinstance(data["n_grid"], list):
            raise ConfigError("n_grid", "must be a list of integers")
        truncation = data.get("truncation")
        if truncation is not None:
            if not isinstance(truncation, dict) or "mode" not in truncation:
                raise ConfigError("truncation", "must be an object with a 'mode' field")
            extra = sorted(set(truncation) - {"mode", "L"})
            if extra:
                raise ConfigError(f"truncation.{extra[0]}", "unknown field")
            truncation = Truncation(truncation["mode"], truncation.get("L"))
        output = data.get("output_path")
        if output is not None and not isinstance(output, str):
            raise ConfigError("output_path", "must be a string")
        return cls(
            instance=inst,
            n_grid=tuple(data["n_grid"]),
            eps=data["eps"],
            delta=data.get("delta", 0.1),
            trials=data.get("trials", 100),
            seed=data.get("seed", 0),
            truncation=truncation,
            output_path=output,
            hard=hard,
        )

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _parse_instance(data: Any) -> tuple[FiniteInstance, HardInstance | None]:
    """A FiniteInstance object, or hard-instance generator parameters."""
    if not isinstance(data, dict):
        raise ConfigError("instance", "must be a JSON object")
    if "atoms" in data:
        try:
            return FiniteInstance.from_dict(data), None
        except ValueError as exc:
            raise ConfigError("instance", str(exc)) from None
    extra = sorted(set(data) - {"divergence", "tau", "p", "eps", "B"})
    if extra:
        raise ConfigError(f"instance.{extra[0]}", "unknown field")
    for name in ("divergence", "tau"):
        if name not in data:
            raise ConfigError(f"instance.{name}", "required field is missing")
    try:
        spec = parse_divergence(data["divergence"])
    except ValueError as exc:
        raise ConfigError("instance.divergence", str(exc)) from None
    try:
        hard = hard_instance(spec, float(data["tau"]), p=data.get("p"), eps=data.get("eps"), B=float(data.get("B", 1.0)))
    except (ValueError, TypeError, PhiDroError) as exc:
        raise ConfigError("instance", str(exc)) from None
    return hard.instance, hard


@dataclass(frozen=True)
class CurvePoint:
    n: int
    trials: int
    eps: float
    deviation_freq: float
    mean_estimate: float
    std_estimate: float
    r_true: float
    predicted_lb: float = math.nan
    predicted_ub: float = math.nan
    seed: int = 0

    def row(self) -> list[str]:
        fmt = lambda v: format(v, ".17g")
        return [
            str(self.n),
            str(self.trials),
            fmt(self.eps),
            fmt(self.deviation_freq),
            fmt(self.mean_estimate),
            fmt(self.std_estimate),
            fmt(self.r_true),
            fmt(self.predicted_lb),
            fmt(self.predicted_ub),
            str(self.seed),
        ]


def _estimates(
    inst: FiniteInstance,
    n: int,
    trials: int,
    seed: int,
    L: float | None = None,
    threads: int = 1,
) -> list[float]:
    """R_n (or R_{n,L}) for trials 0..trials-1, in trial order."""
    cache: dict[tuple, float] = {}

    def one(trial: int) -> float:
        try:
            emp = draw_empirical(inst, n, seed, trial)
            key = (emp.indices, emp.counts)
            if key not in cache:
                cache[key] = saa_estimate(emp, inst) if L is None else truncated_saa_estimate(emp, inst, L)
            return cache[key]
        except Exception as exc:
            raise TrialFailure(n, trial, exc) from exc

    if threads <= 1:
        return [one(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(trials)))


def _moments(values: list[float]) -> tuple[float, float]:
    mean = math.fsum(values) / len(values)
    if len(values) < 2:
        return mean, 0.0
    return mean, math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1))


def deviation_frequency(
    inst: FiniteInstance,
    n: int,
    eps: float,
    trials: int,
    seed: int = 0,
    *,
    L: float | None = None,
    r_true: float | None = None,
    threads: int = 1,
) -> CurvePoint:
    """Fraction of trials with ``|R_n - R| >= eps``; ``R_{n,L}`` replaces ``R_n`` when ``L`` is given."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if trials < 100:
        warnings.warn(f"only {trials} trials; frequencies will be noisy", stacklevel=2)
    r = primal_value(inst) if r_true is None else r_true
    est = _estimates(inst, n, trials, seed, L, threads)
    hits = sum(1 for e in est if abs(e - r) >= eps)
    mean, std = _moments(est)
    return CurvePoint(n, trials, float(eps), hits / trials, mean, std, r, seed=seed)


def bias_estimate(inst: FiniteInstance, n: int, trials: int, seed: int = 0, *, threads: int = 1) -> tuple[float, float]:
    """Sample mean and standard error of R_n over ``trials`` draws."""
    if trials < 2:
        raise ValueError("bias_estimate needs trials >= 2")
    mean, std = _moments(_estimates(inst, n, trials, seed, None, threads))
    return mean, std / math.sqrt(trials)


def predicted_bounds(cfg: ExperimentConfig) -> tuple[float, float]:
    """(lower, upper) sample-size predictions; inf where no finite bound exists, nan where undefined."""
    inst = cfg.instance
    spec = inst.spec
    if spec.growth_class is Growth.SUBLINEAR:
        lb = float(cfg.hard.le_cam_n) if cfg.hard is not None else math.nan
        return lb, math.inf
    try:
        lb = sample_lower_bound(spec, inst.tau, inst.B, cfg.eps)
    except GrowthUnbounded:
        lb = math.inf
    except ValueError:
        lb = math.nan
    try:
        ub = sample_upper_bound(spec, inst.tau, inst.B, cfg.eps, cfg.delta, "increment")
    except GrowthUnbounded:
        ub = math.inf
    except ValueError:
        ub = math.nan
    return lb, ub


def complexity_curve(
    cfg: ExperimentConfig,
    *,
    threads: int = 1,
    progress: Callable[[CurvePoint], None] | None = None,
) -> list[CurvePoint]:
    points: list[CurvePoint] = []
    _run(cfg, threads, lambda p: points.append(p), progress)
    return points


def _run(
    cfg: ExperimentConfig,
    threads: int,
    sink: Callable[[CurvePoint], None],
    progress: Callable[[CurvePoint], None] | None,
) -> None:
    if not cfg.n_grid:
        return
    inst = cfg.instance
    r_true = primal_value(inst)
    lb, ub = predicted_bounds(cfg)
    L = cfg.truncation.level(inst, cfg.eps) if cfg.truncation is not None else None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for n in cfg.n_grid:
            pt = deviation_frequency(inst, n, cfg.eps, cfg.trials, cfg.seed, L=L, r_true=r_true, threads=threads)
            pt = CurvePoint(**{**pt.__dict__, "predicted_lb": lb, "predicted_ub": ub})
            sink(pt)
            if progress is not None:
                progress(pt)


@dataclass(frozen=True)
class RunSummary:
    rows: int
    failures: int
    output_path: str

    def to_dict(self) -> dict[str, Any]:
        return {"rows": self.rows, "failures": self.failures, "output_path": self.output_path}


def write_csv(cfg: ExperimentConfig, stream: TextIO, *, threads: int = 1, progress=None) -> int:
    """Write the header and one row per grid point, flushing each row; returns rows written."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    stream.flush()
    count = 0

    def sink(pt: CurvePoint) -> None:
        nonlocal count
        writer.writerow(pt.row())
        stream.flush()
        count += 1

    try:
        _run(cfg, threads, sink, progress)
    except TrialFailure as exc:
        exc.rows_written = count
        raise
    return count


def run_config(cfg: ExperimentConfig, *, threads: int = 1, progress=None) -> RunSummary:
    """Execute ``cfg`` and write its CSV to ``cfg.output_path`` (``-`` for stdout).

    A failing trial aborts the run after flushing the rows already computed; the
    raised :class:`TrialFailure` carries ``rows_written``.
    """
    if not cfg.output_path:
        raise ConfigError("output_path", "required to run an experiment")
    if cfg.output_path == "-":
        rows = write_csv(cfg, sys.stdout, threads=threads, progress=progress)
    else:
        with open(cfg.output_path, "w", newline="") as fh:
            rows = write_csv(cfg, fh, threads=threads, progress=progress)
    return RunSummary(rows, 0, cfg.output_path)


def curve_to_csv(points: list[CurvePoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for pt in points:
        writer.writerow(pt.row())
    return buf.getvalue()
