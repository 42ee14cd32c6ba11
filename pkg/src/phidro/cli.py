"""Command-line entry point.

Exit codes: 0 success, 2 invalid input, 3 solver failure, 4 I/O error.
JSON (or CSV) goes to stdout; diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path
from typing import Any, Sequence

from . import bounds
from .divergence import Growth, Kind, parse_divergence
from .errors import AssumptionViolated, ConfigError, EpsTooLarge, GrowthUnbounded, PhiDroError
from .experiments import ExperimentConfig, TrialFailure, run_config
from .risk import FiniteInstance, worst_case_expectation
from .saa import draw_empirical, saa_estimate, truncated_saa_estimate

EXIT_OK, EXIT_INVALID, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
ARBITRARY = "sample complexity can be made arbitrarily large"


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _jsonable(obj: Any) -> Any:
    """Replace non-finite floats by null so the output stays strict JSON."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _emit(payload: dict[str, Any]) -> None:
    json.dump(_jsonable(payload), sys.stdout, indent=2, allow_nan=False)
    sys.stdout.write("\n")


def _note(message: str) -> None:
    print(message, file=sys.stderr)


def _read_json(path: str) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(EXIT_INVALID, f"{path}: malformed JSON: {exc}") from None


def _load_instance(path: str) -> FiniteInstance:
    try:
        return FiniteInstance.from_dict(_read_json(path))
    except (ValueError, TypeError, KeyError) as exc:
        raise CliError(EXIT_INVALID, f"{path}: invalid instance: {exc}") from None


# argument types -------------------------------------------------------------


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(value) and value > 0.0):
        raise argparse.ArgumentTypeError(f"must be a finite number > 0, got {text!r}")
    return value


def _nonneg_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (math.isfinite(value) and value >= 0.0):
        raise argparse.ArgumentTypeError(f"must be a finite number >= 0, got {text!r}")
    return value


def _probability(text: str) -> float:
    value = _positive_float(text)
    if value >= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {text!r}")
    return value


def _int_at_least(lo: int):
    def parse(text: str) -> int:
        try:
            value = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
        if value < lo:
            raise argparse.ArgumentTypeError(f"must be >= {lo}, got {value}")
        return value

    return parse


def _seed(text: str) -> int:
    value = _int_at_least(0)(text)
    if value >= 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return value


def _divergence(text: str):
    try:
        return parse_divergence(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phidro", description="Worst-case expectations over phi-divergence balls.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="exact worst-case expectation of a finite instance")
    p.add_argument("--instance", required=True, metavar="FILE")
    p.add_argument("--tol", type=_positive_float, default=1e-9)

    p = sub.add_parser("estimate", help="SAA estimate from n sampled atoms")
    p.add_argument("--instance", required=True, metavar="FILE")
    p.add_argument("--n", required=True, type=_int_at_least(1))
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--trial", type=_int_at_least(0), default=0)
    p.add_argument("--truncate", type=_positive_float, metavar="L")
    p.add_argument("--tol", type=_positive_float, default=1e-9)

    p = sub.add_parser("hard-instance", help="two-point hard instance for a divergence")
    p.add_argument("--divergence", required=True, type=_divergence, metavar="NAME[:key=val]")
    p.add_argument("--tau", required=True, type=_positive_float)
    p.add_argument("--p", type=_probability)
    p.add_argument("--eps", type=_positive_float)
    p.add_argument("--B", type=_positive_float, default=1.0)

    p = sub.add_parser("bounds", help="sample-complexity lower and upper bounds")
    p.add_argument("--divergence", required=True, type=_divergence, metavar="NAME[:key=val]")
    p.add_argument("--tau", required=True, type=_positive_float)
    p.add_argument("--B", required=True, type=_positive_float)
    p.add_argument("--eps", required=True, type=_positive_float)
    p.add_argument("--delta", required=True, type=_probability)

    p = sub.add_parser("experiment", help="run a Monte Carlo experiment config and write CSV")
    p.add_argument("--config", required=True, metavar="FILE")
    p.add_argument("--threads", type=_int_at_least(1), default=1)
    p.add_argument("--seed", type=_seed)
    p.add_argument("--trials", type=_int_at_least(1))
    p.add_argument("--eps", type=_positive_float)
    p.add_argument("--delta", type=_probability)
    p.add_argument("--output", metavar="PATH", help="CSV path, '-' for stdout")
    return parser


# commands -------------------------------------------------------------------


def cmd_eval(args: argparse.Namespace) -> int:
    inst = _load_instance(args.instance)
    _emit(worst_case_expectation(inst, args.tol).to_dict())
    return EXIT_OK


def cmd_estimate(args: argparse.Namespace) -> int:
    inst = _load_instance(args.instance)
    if args.truncate is not None and args.truncate < 1.0:
        raise CliError(EXIT_INVALID, "--truncate must be >= 1")
    emp = draw_empirical(inst, args.n, args.seed, args.trial)
    out: dict[str, Any] = {"n": args.n, "seed": args.seed, "trial": args.trial, "r_n": saa_estimate(emp, inst, args.tol)}
    if args.truncate is not None:
        out["L"] = args.truncate
        out["r_n_L"] = truncated_saa_estimate(emp, inst, args.truncate, args.tol)
    _emit(out)
    return EXIT_OK


def cmd_hard_instance(args: argparse.Namespace) -> int:
    spec = args.divergence
    if spec.growth_class is Growth.SUBLINEAR:
        if args.p is None or args.eps is not None:
            raise CliError(EXIT_INVALID, f"{spec.label} is sublinear: pass --p (and not --eps)")
        consts = bounds.sublinear_constants(spec, args.tau)
        hard = bounds.sublinear_hard_instance(spec, args.tau, args.p)
        _emit({"hard_instance": hard.to_dict(), "constants": consts.to_dict()})
    else:
        if args.eps is None or args.p is not None:
            raise CliError(EXIT_INVALID, f"{spec.label} is not sublinear: pass --eps and --B (and not --p)")
        hard = bounds.superlinear_hard_instance(spec, args.tau, args.B, args.eps)
        _emit({"hard_instance": hard.to_dict()})
    return EXIT_OK


def _try(fn, *a, **kw) -> float | None:
    try:
        return fn(*a, **kw)
    except GrowthUnbounded as exc:
        _note(f"warning: {exc}")
        return None


def cmd_bounds(args: argparse.Namespace) -> int:
    spec, tau, B, eps, delta = args.divergence, args.tau, args.B, args.eps, args.delta
    if spec.kind is Kind.ESS_SUP:
        raise CliError(EXIT_INVALID, f"{spec.label}: {ARBITRARY}")
    if eps > B:
        raise CliError(EXIT_INVALID, "--eps must not exceed --B")
    if spec.growth_class is Growth.SUBLINEAR:
        consts = bounds.sublinear_constants(spec, tau)
        hard = bounds.sublinear_hard_instance(spec, tau, consts.p_max)
        _note(f"{spec.label} has sublinear growth; {ARBITRARY}")
        _emit({
            "divergence": spec.to_dict(),
            "growth": spec.growth_class.value,
            "constants": consts.to_dict(),
            "le_cam_n": hard.le_cam_n,
            "hard_instance": hard.to_dict(),
        })
        return EXIT_OK
    out: dict[str, Any] = {
        "divergence": spec.to_dict(),
        "growth": spec.growth_class.value,
        "lower": _try(bounds.sample_lower_bound, spec, tau, B, eps),
    }
    for mode in ("hoeffding", "bernstein", "increment"):
        out[f"upper_{mode}"] = _try(bounds.sample_upper_bound, spec, tau, B, eps, delta, mode)
    try:
        hard = bounds.superlinear_hard_instance(spec, tau, B, eps)
        out["le_cam_n"], out["hard_instance"] = hard.le_cam_n, hard.to_dict()
    except (EpsTooLarge, GrowthUnbounded) as exc:
        _note(f"warning: no hard instance: {exc}")
        out["le_cam_n"], out["hard_instance"] = None, None
    _emit(out)
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    data = _read_json(args.config)
    if not isinstance(data, dict):
        raise CliError(EXIT_INVALID, f"{args.config}: config must be a JSON object")
    for flag, key in (("seed", "seed"), ("trials", "trials"), ("eps", "eps"), ("delta", "delta"), ("output", "output_path")):
        value = getattr(args, flag)
        if value is not None:
            data[key] = value
    cfg = ExperimentConfig.from_dict(data)

    def progress(pt) -> None:
        _note(f"n={pt.n} deviation_freq={pt.deviation_freq:.4f} mean={pt.mean_estimate:.6g} r_true={pt.r_true:.6g}")

    try:
        summary = run_config(cfg, threads=args.threads, progress=progress)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {cfg.output_path}: {exc.strerror or exc}") from None
    except TrialFailure as exc:
        _note(json.dumps({"rows": exc.rows_written, "failures": 1, "output_path": cfg.output_path}))
        raise CliError(EXIT_SOLVER, str(exc)) from None
    _note(json.dumps(summary.to_dict()))
    return EXIT_OK


COMMANDS = {
    "eval": cmd_eval,
    "estimate": cmd_estimate,
    "hard-instance": cmd_hard_instance,
    "bounds": cmd_bounds,
    "experiment": cmd_experiment,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        _note(f"error: {exc}")
        return exc.code
    except ConfigError as exc:
        _note(f"error: invalid config field {exc.field!r}: {exc}")
        return EXIT_INVALID
    except (ValueError, AssumptionViolated) as exc:
        _note(f"error: {exc}")
        return EXIT_INVALID
    except PhiDroError as exc:
        _note(f"solver error: {type(exc).__name__}: {exc}")
        return EXIT_SOLVER
    except OSError as exc:
        _note(f"I/O error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
