"""Command-line entry point.

Exit codes: 0 on success, 1 for invalid input or configuration, 2 when a
numerical precondition fails (stability, positive semi-definiteness,
singular asymptotic covariance).
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import defaultdict
from pathlib import Path

from . import __version__, formats, harness, markov, stats, stein
from .errors import ConfigError, NumericalError


class _Parser(argparse.ArgumentParser):
    """Usage errors are validation errors: exit 1, not argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _global_flags(defaults: bool) -> argparse.ArgumentParser:
    # the same flags are accepted before and after the subcommand; only the
    # top-level copy carries real defaults so a leaf never overwrites them
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p = _Parser(add_help=False)
    p.add_argument("--seed", type=int, default=d(None), help="override the config seed (u64)")
    p.add_argument("--threads", type=int, default=d(None), help="worker threads for replicate ensembles")
    p.add_argument("--out", type=Path, default=d(None), help="write output here instead of stdout")
    p.add_argument("--json", action="store_true", default=d(False), help="emit JSON instead of CSV")
    p.add_argument("--no-timing", action="store_true", default=d(False),
                   help="write wall_ms as 0 so reruns are byte-identical")
    return p


def build_parser() -> argparse.ArgumentParser:
    leaf = [_global_flags(False)]
    parser = _Parser(prog="markov-clt", parents=[_global_flags(True)],
                     description="Markov chain and TD central limit experiments.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    chain = sub.add_parser("chain", help="exact quantities of a finite chain")
    chain_sub = chain.add_subparsers(dest="action", required=True)
    for name, needs_reward, text in (
        ("stationary", False, "stationary distribution"),
        ("poisson", True, "Poisson equation solution"),
        ("sigma-inf", True, "asymptotic covariance"),
    ):
        p = chain_sub.add_parser(name, parents=leaf, help=text)
        p.add_argument("--input", required=True, type=Path, help="chain JSON")
        if needs_reward:
            p.add_argument("--reward", required=True, type=Path, help="reward JSON")

    bound = sub.add_parser("bound", help="martingale CLT bound")
    bound_sub = bound.add_subparsers(dest="action", required=True)
    p = bound_sub.add_parser("martingale", parents=leaf, help="bound for a chain's reward sums")
    p.add_argument("--input", required=True, type=Path, help="chain JSON")
    p.add_argument("--reward", required=True, type=Path, help="reward JSON")
    p.add_argument("--n", required=True, type=int, help="horizon")
    p.add_argument("--beta", default="0.5", help='moment exponent in (0, 1) or "schedule"')
    p.add_argument("--c-universal", type=float, default=1.0)
    p.add_argument("--start", type=int, default=None, help="start state (default: stationary)")

    exp = sub.add_parser("experiment", parents=leaf, help="run a configured experiment")
    exp.add_argument("kind", choices=harness.KINDS)
    exp.add_argument("--config", required=True, type=Path, help="experiment config JSON")

    fit = sub.add_parser("fit-rate", parents=leaf, help="log-log slopes of result curves")
    fit.add_argument("--input", type=Path, help="CSV written by `experiment`")
    fit.add_argument("--estimator", action="append", help="restrict to these estimators")
    fit.add_argument("--grid", type=float, nargs="+", help="explicit grid (with --values)")
    fit.add_argument("--values", type=float, nargs="+", help="explicit values (with --grid)")
    return parser


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8")


def _dump(doc) -> str:
    return json.dumps(formats.to_jsonable(doc), indent=2) + "\n"


def _cmd_chain(args):
    chain = formats.chain_from_json(args.input)
    if args.action == "stationary":
        return {"labels": chain.labels, "pi": markov.stationary(chain)}
    reward = formats.reward_from_json(args.reward)
    sol = markov.solve_poisson(chain, reward)
    if args.action == "poisson":
        return {"labels": chain.labels, "V": sol.V, "PV": sol.PV, "r_bar": sol.r_bar, "pi": sol.pi,
                "M_V": sol.M_V, "residual": markov.poisson_residual(chain, reward, sol)}
    cov = markov.asymptotic_covariance(chain, sol)
    return {"sigma_inf": cov.matrix, "positive_definite": cov.positive_definite,
            "min_eigenvalue": cov.min_eigenvalue}


def _cmd_bound(args):
    chain = formats.chain_from_json(args.input)
    reward = formats.reward_from_json(args.reward)
    if args.beta == "schedule":
        beta = stein.beta_schedule(args.n)
    else:
        try:
            beta = float(args.beta)
        except ValueError:
            raise ConfigError(f"--beta must be a number or \"schedule\", got {args.beta!r}") from None
    sol = markov.solve_poisson(chain, reward)
    cov = markov.asymptotic_covariance(chain, sol)
    harness.require_positive_definite(cov)
    const = stein.stein_constants(cov.matrix.shape[0], beta, args.c_universal)
    ms = stein.martingale_stats(chain, sol, cov.matrix, beta, args.n, args.start)
    return {"n": args.n, "beta": beta, "bound": stein.martingale_clt_bound(ms, const),
            "constants": vars(const), "sigma_inf": cov.matrix}


def _cmd_experiment(args):
    doc = formats.read_json(args.config)
    if doc.get("kind", args.kind) != args.kind:
        raise ConfigError(f"field 'kind' is {doc['kind']!r} but the command asked for {args.kind!r}")
    doc = {**doc, "kind": args.kind}
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.threads is not None:
        doc["threads"] = args.threads
    cfg = harness.ExperimentConfig.from_dict(doc, args.config.parent)
    result = harness.run(cfg)
    timing = not args.no_timing
    return harness.to_json(result, timing) if args.json else harness.to_csv(result, timing)


def _cmd_fit_rate(args):
    if args.grid or args.values:
        if not (args.grid and args.values):
            raise ConfigError("--grid and --values must be given together")
        rep = stats.RateReport.fit(args.grid, args.values)
        return {"slope": rep.slope, "intercept": rep.intercept}
    if args.input is None:
        raise ConfigError("fit-rate needs --input or --grid/--values")
    curves = defaultdict(lambda: ([], []))
    for r in harness.read_csv(args.input):
        if r.n > 0 and (not args.estimator or r.estimator in args.estimator):
            g, v = curves[(r.experiment, r.estimator)]
            g.append(r.n)
            v.append(r.value)
    out = []
    for (exp, name), (g, v) in curves.items():
        entry = {"experiment": exp, "estimator": name}
        if len(g) < 2 or min(v) <= 0:
            entry["error"] = "needs at least two positive values"
        else:
            rep = stats.RateReport.fit(g, v)
            entry.update(slope=rep.slope, intercept=rep.intercept)
        out.append(entry)
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "chain":
            text = _dump(_cmd_chain(args))
        elif args.command == "bound":
            text = _dump(_cmd_bound(args))
        elif args.command == "experiment":
            text = _cmd_experiment(args)
        else:
            text = _dump(_cmd_fit_rate(args))
        _emit(text, args.out)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
