"""Command-line interface.

Subcommands: ``bounds``, ``sensitivity``, ``simulate`` and ``oracle``.
Options may also come from a ``--config`` file of ``key = value`` lines
(an optional ``[censbounds]`` section header is accepted); flags given on
the command line win.  Exit codes: 0 success, 2 invalid input or
configuration, 3 estimation failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
import time

import numpy as np

from . import __version__
from .data import DataValidationError, atomic_write_text, load_dataset
from .dgp import DGPParams
from .estimators import SensitivityParams, naive_estimate
from .nuisance import NUISANCE_NAMES, EstimationError, LearnerSpec
from .oracle import (
    QuadratureError,
    QuadratureSpec,
    format_table,
    population_bounds,
    population_truth_dgp,
    running_example,
    running_example_report,
)
from .pipeline import ASSUMPTION_SETS, fit_influence, required_params, run_bounds
from .sensitivity import max_delta_for_sign, region_csv, tipping_analysis
from .simulation import GENERATOR_NAME, PRESETS, StudyConfig, generate_population, run_study

__all__ = ["main", "build_parser", "ConfigError"]

EXIT_OK, EXIT_CONFIG, EXIT_ESTIMATION = 0, 2, 3


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# argument types


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in str(text).replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers separated by commas, got {text!r}") from None


def _constants(text: str) -> float | dict[str, float]:
    """``1.5`` or ``e=1,pi0=-2`` (unlisted nuisances keep 1)."""
    text = str(text).strip()
    if "=" not in text:
        return float(text)
    out = {}
    for part in text.split(","):
        key, _, value = part.partition("=")
        key = key.strip()
        if key not in NUISANCE_NAMES:
            raise argparse.ArgumentTypeError(f"unknown nuisance {key!r}; expected one of {', '.join(NUISANCE_NAMES)}")
        out[key] = float(value)
    return out


# --------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser, formats: tuple[str, ...]) -> None:
    p.add_argument("--config", help="key = value file; command-line flags override it")
    p.add_argument("--out", default="-", help="output path ('-' for stdout)")
    p.add_argument("--format", choices=formats, default=formats[0])


def _add_params(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("sensitivity parameters")
    for name in ("tau", "tau0", "tau1", "delta0", "delta1"):
        g.add_argument(f"--{name.replace('_', '-')}", type=float)
    for name, default in (("delta_l0", 0.0), ("delta_u0", 1.0), ("delta_l1", 0.0), ("delta_u1", 1.0)):
        g.add_argument(f"--{name.replace('_', '-')}", type=float, default=default)
    g.add_argument("--epsilon", type=float, default=0.05, help="smoothing scale for the direct-effect bounds")


def _add_fitting(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("nuisance fitting")
    g.add_argument("--learner", choices=("logistic", "kernel"), default="logistic")
    g.add_argument("--folds", type=_positive_int, default=2)
    g.add_argument("--seeds", type=_positive_int, default=11, help="number of sample splits")
    g.add_argument("--seed", type=int, default=0, help="first split seed")
    g.add_argument("--eps-clip", type=float, default=0.01)
    g.add_argument("--ci-alpha", type=float, default=0.05)
    g.add_argument("--jobs", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="censbounds", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bounds", help="estimate bounds or point values from a CSV")
    b.add_argument("--data", help="CSV with columns y,a,c,<covariates> (required)")
    b.add_argument("--set", dest="assumption", choices=ASSUMPTION_SETS, default="general")
    _add_params(b)
    _add_fitting(b)
    _add_common(b, ("json", "table"))

    s = sub.add_parser("sensitivity", help="tipping point and sign-robustness analysis")
    src = s.add_mutually_exclusive_group()
    src.add_argument("--data")
    src.add_argument("--example", choices=("running",))
    s.add_argument("--tau", type=_float_list, default=[10.0], help="risk ratios for region curves, e.g. 3,10")
    s.add_argument("--grid-size", type=_positive_int, default=101)
    s.add_argument("--region-csv", help="also write the region curves to this CSV")
    _add_fitting(s)
    _add_common(s, ("json", "csv"))

    m = sub.add_parser("simulate", help="Monte-Carlo study on the simulation design")
    m.add_argument("--mode", choices=("perturb", "learner"), default="perturb")
    m.add_argument("--alpha", type=float, default=0.3, help="perturbation rate exponent")
    m.add_argument("--n", type=_positive_int, default=1000)
    m.add_argument("--reps", type=_positive_int, default=1000)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--pop-size", type=_positive_int, default=2_000_000)
    m.add_argument("--pop-seed", type=int, default=0)
    m.add_argument("--preset", choices=sorted(PRESETS), help="named perturbation constants")
    m.add_argument("--c1", type=_constants, help="bias constant: scalar or e=..,pi0=..")
    m.add_argument("--c2", type=_constants, help="variance constant: scalar or e=..,pi0=..")
    m.add_argument("--learner", choices=("logistic", "kernel"), default="logistic")
    m.add_argument("--folds", type=_positive_int, default=2)
    m.add_argument("--epsilon", type=float, default=0.05)
    m.add_argument("--eps-clip", type=float, default=0.01)
    m.add_argument("--ci-alpha", type=float, default=0.05)
    m.add_argument("--nodes", type=_positive_int, default=1024, help="quadrature nodes for the true values")
    m.add_argument("--jobs", type=int, default=1)
    m.add_argument("--keep-replications", action="store_true")
    _add_common(m, ("csv", "json"))

    o = sub.add_parser("oracle", help="exact population values")
    src = o.add_mutually_exclusive_group()
    src.add_argument("--example", choices=("running",))
    src.add_argument("--dgp", choices=("default",))
    for name, default in (("beta0", 1.0), ("beta1", 1.0), ("tau0", 0.5), ("tau1", 0.5), ("delta0", 0.5),
                          ("delta1", 0.5)):  # fmt: skip
        o.add_argument(f"--{name}", type=float, default=default, help="design parameter (with --dgp)")
    o.add_argument("--epsilon", type=float, default=0.05)
    o.add_argument("--nodes", type=_positive_int, default=1024)
    _add_common(o, ("json", "table"))
    return parser


# --------------------------------------------------------------------------
# config files


def _read_config(path: str) -> dict[str, str]:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    if not text.lstrip().startswith("["):
        text = "[censbounds]\n" + text
    try:
        cp.read_string(text, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from None
    out: dict[str, str] = {}
    for section in cp.sections():
        for key, value in cp.items(section):
            out[key.replace("-", "_")] = value
    return out


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:  # argparse has no public accessor
        if command in action.choices:
            return action.choices[command]
    raise KeyError(command)


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    values = _read_config(args.config)
    sp = _subparser(parser, args.command)
    known = {}
    for a in sp._actions:
        if a.dest in ("help", "config"):
            continue
        known[a.dest] = a
        for opt in a.option_strings:
            known[opt.lstrip("-").replace("-", "_")] = a
    unknown = sorted(set(values) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys for '{args.command}': {', '.join(unknown)}")
    defaults = {}
    for key, raw in values.items():
        action = known[key]
        if action.const is not None and action.nargs == 0:  # store_true flags
            if raw.strip().lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ConfigError(f"config key {key} expects true/false")
            defaults[action.dest] = raw.strip().lower() in ("true", "1", "yes")
            continue
        try:
            value = action.type(raw) if action.type else raw
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise ConfigError(f"bad value for config key {key}: {raw!r} ({exc})") from None
        if action.choices is not None and value not in action.choices:
            raise ConfigError(f"config key {key} must be one of {', '.join(map(str, action.choices))}")
        defaults[action.dest] = value
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)


# --------------------------------------------------------------------------
# output


def _resolved(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("out",)}


def _envelope(args: argparse.Namespace, seeds, result: dict) -> dict:
    return {
        "tool": "censbounds",
        "version": __version__,
        "command": args.command,
        "config": _resolved(args),
        "seeds": list(seeds),
        "generator": GENERATOR_NAME,
        "result": result,
    }


def _csv_header(args: argparse.Namespace, seeds) -> str:
    return (
        f"# censbounds {__version__} {args.command}\n"
        f"# generator: {GENERATOR_NAME}\n"
        f"# seeds: {json.dumps(list(seeds))}\n"
        f"# config: {json.dumps(_resolved(args), sort_keys=True)}\n"
    )


def _emit(text: str, out: str) -> None:
    if out == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        atomic_write_text(out, text)


def _json(obj) -> str:
    def fallback(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        raise TypeError(f"cannot serialize {type(o).__name__}")

    return json.dumps(obj, indent=2, default=fallback, allow_nan=False) + "\n"


def _params(args: argparse.Namespace) -> SensitivityParams:
    keys = ("tau", "tau0", "tau1", "delta0", "delta1", "delta_l0", "delta_u0", "delta_l1", "delta_u1", "epsilon")
    return SensitivityParams(**{k: getattr(args, k) for k in keys})


def _learner(args: argparse.Namespace) -> LearnerSpec:
    return LearnerSpec(kind=args.learner, eps_clip=args.eps_clip)


def _seeds(args: argparse.Namespace) -> list[int]:
    return list(range(args.seed, args.seed + args.seeds))


# --------------------------------------------------------------------------
# commands


def cmd_bounds(args: argparse.Namespace) -> int:
    if not args.data:
        raise ConfigError("bounds needs --data")
    params = _params(args)
    required_params(args.assumption, params)
    d = load_dataset(args.data)
    seeds = _seeds(args)
    agg = run_bounds(d, args.assumption, params, seeds=seeds, folds=args.folds, learner=_learner(args),
                     alpha_level=args.ci_alpha, n_jobs=args.jobs)[args.assumption]  # fmt: skip
    est = agg.as_estimate()
    result = est.to_dict()
    result["n"] = d.n
    result["per_seed"] = [
        {"seed": s, "lower": e.lower, "upper": e.upper, "se_lower": e.se_lower, "se_upper": e.se_upper}
        for s, e in zip(seeds, agg.per_seed)
    ]
    if args.format == "json":
        _emit(_json(_envelope(args, seeds, result)), args.out)
    else:
        rows = {"lower": est.lower, "upper": est.upper, "se_lower": est.se_lower, "se_upper": est.se_upper,
                "ci_low": est.ci_lower[0], "ci_high": est.ci_upper[1]}  # fmt: skip
        _emit(f"# {args.assumption}, n={d.n}, seeds={len(seeds)}\n" + format_table(rows), args.out)
    return EXIT_OK


def _sensitivity_inputs(args: argparse.Namespace):
    if args.data is None:
        pop = running_example()
        b = population_bounds(pop, SensitivityParams())
        naive, g0, g1 = b["naive"], b["grave_mu0"], b["grave_mu1"]
        slope_lower = b["omega2"] - g0
        slope_upper = b["omega1"] - g1
        signs = {
            "mono-pos.lower": {"parameter": "delta_u0", "delta": naive / slope_lower},
            "mono-pos.upper": {"parameter": "delta_u1", "delta": -naive / slope_upper},
            "mono-neg.lower": {"parameter": "delta_u1", "delta": naive / g1},
            "mono-neg.upper": {"parameter": "delta_u0", "delta": -naive / g0},
        }
        for v in signs.values():
            v["robust"] = not 0.0 <= v["delta"] <= 1.0
        return naive, g0, g1, signs, [], {"source": "running example (exact)"}
    d = load_dataset(args.data)
    seeds = _seeds(args)
    per = [fit_influence(d, s, args.folds, _learner(args)) for s in seeds]
    med = lambda xs: float(np.median(xs))  # noqa: E731
    naive = med([naive_estimate(r).lower for r in per])
    g0 = med([r["phi3_0"].mean() for r in per])
    g1 = med([r["phi3_1"].mean() for r in per])
    signs = {}
    for fam in ("mono-pos", "mono-neg"):
        for end in ("lower", "upper"):
            th = [max_delta_for_sign(r, fam, end) for r in per]
            delta = med([t.delta for t in th])
            signs[f"{fam}.{end}"] = {"parameter": th[0].parameter, "delta": delta, "robust": not 0.0 <= delta <= 1.0}
    return naive, g0, g1, signs, seeds, {"source": args.data, "n": d.n}


def cmd_sensitivity(args: argparse.Namespace) -> int:
    if args.data is None and args.example is None:
        raise ConfigError("sensitivity needs --data or --example")
    naive, g0, g1, signs, seeds, source = _sensitivity_inputs(args)
    grid = np.linspace(0.0, 1.0, args.grid_size)
    taus = [t for t in args.tau if t > 1]
    if len(taus) != len(args.tau):
        raise ConfigError("region curves need tau > 1")
    result = tipping_analysis(naive, g0, g1, taus, grid)
    csv = region_csv(result.region_curves) if result.region_curves else ""
    if args.region_csv:
        atomic_write_text(args.region_csv, _csv_header(args, seeds) + csv)
    if args.format == "csv":
        _emit(_csv_header(args, seeds) + csv, args.out)
    else:
        summary = {**source, **result.to_dict(), "sign_thresholds": signs}
        _emit(_json(_envelope(args, seeds, summary)), args.out)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    c1, c2 = 1.0, 1.0
    if args.preset:
        c1, c2 = PRESETS[args.preset]
    c1 = args.c1 if args.c1 is not None else c1
    c2 = args.c2 if args.c2 is not None else c2
    dgp = DGPParams(N=args.pop_size, seed=args.pop_seed)
    config = StudyConfig(n=args.n, reps=args.reps, mode=args.mode, alpha=args.alpha, c1=c1, c2=c2,
                         learner=_learner(args), folds=args.folds, epsilon=args.epsilon, alpha_level=args.ci_alpha,
                         eps_clip=args.eps_clip, seed=args.seed, n_jobs=args.jobs,
                         keep_replications=args.keep_replications)  # fmt: skip
    if config.n > dgp.N:
        raise ConfigError("--n exceeds --pop-size")
    t0 = time.perf_counter()
    truth = population_truth_dgp(dgp, QuadratureSpec(nodes=args.nodes), SensitivityParams(epsilon=args.epsilon))
    report = run_study(generate_population(dgp), truth, config)
    seeds = {"replications": args.seed, "population": args.pop_seed}
    if args.format == "csv":
        _emit(_csv_header(args, [args.seed, args.pop_seed]) + report.to_csv(), args.out)
    else:
        result = report.to_dict()
        result["seconds"] = round(time.perf_counter() - t0, 3)
        env = _envelope(args, [], result)
        env["seeds"] = seeds
        _emit(_json(env), args.out)
    return EXIT_OK


def cmd_oracle(args: argparse.Namespace) -> int:
    if args.dgp:
        dgp = DGPParams(beta0=args.beta0, beta1=args.beta1, tau0=args.tau0, tau1=args.tau1, delta0=args.delta0,
                        delta1=args.delta1)  # fmt: skip
        values = population_truth_dgp(dgp, QuadratureSpec(nodes=args.nodes), SensitivityParams(epsilon=args.epsilon))
    else:
        values = running_example_report()
    values = {k: float(v) for k, v in values.items()}
    if args.format == "table":
        _emit(format_table(values), args.out)
    else:
        _emit(_json(_envelope(args, [], values)), args.out)
    return EXIT_OK


COMMANDS = {"bounds": cmd_bounds, "sensitivity": cmd_sensitivity, "simulate": cmd_simulate, "oracle": cmd_oracle}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        try:
            args = _apply_config(parser, argv)
        except SystemExit as exc:  # argparse usage errors and --help/--version
            return int(exc.code or 0)
        if args.command == "oracle" and not args.dgp and not args.example:
            args.example = "running"
        return COMMANDS[args.command](args)
    except (ConfigError, DataValidationError) as exc:
        print(f"censbounds: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EstimationError, QuadratureError, np.linalg.LinAlgError) as exc:
        print(f"censbounds: estimation failed: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except ValueError as exc:  # invalid parameter combinations surface as ValueError
        print(f"censbounds: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"censbounds: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
