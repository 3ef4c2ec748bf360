"""Command-line front end.

Subcommands: ``identify``, ``simulate``, ``effect``, ``bias``,
``experiment``.  Models are addressed either as ``builtin:<name>`` or as a
path to a JSON model document.  Exit codes: 0 success, 1 usage or I/O
error, 2 numerical failure, 3 not identifiable (identify only).

Estimation queries condition on exactly the ``--observe name=value`` pairs
given on the command line; variables not listed (and not the treatment)
are treated as latent regardless of their declared role, which is how the
observe/don't-observe comparisons are scripted.

Every command is deterministic given (model, flags, seed).  The
``CAUSALBIAS_THREADS`` environment variable caps worker threads used for
sampling.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import CausalBiasError, NumericalError, EstimationError
from .estimators import average_partial_effect, bias_report
from .graphs import identifiable_by_adjustment
from .inference import (
    InferenceOptions,
    importance_posterior,
    laplace_posterior,
    materialize_particles,
)
from .scm import Scm, load_scm, sample_observational, worker_count
from .zoo import LinearModelParams, builtin, builtin_names

__all__ = ["main"]


def _load_model(spec: str) -> Scm:
    if spec.startswith("builtin:"):
        return builtin(spec[len("builtin:") :])
    return load_scm(spec)


def _parse_observations(pairs: list[str]) -> dict[str, float]:
    out: dict[str, float] = {}
    for chunk in pairs:
        for item in chunk.split(","):
            item = item.strip()
            if not item:
                continue
            if "=" not in item:
                raise ValueError(f"expected name=value, got {item!r}")
            name, raw = item.split("=", 1)
            out[name.strip()] = float(raw)
    return out


def _parse_names(pairs: list[str]) -> list[str]:
    names: list[str] = []
    for chunk in pairs:
        names.extend(item.strip() for item in chunk.split(",") if item.strip())
    return names


def _emit(text: str, out: str | None) -> None:
    if out and out != "-":
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _g(v: float) -> str:
    return format(v, ".17g")


def _cmd_identify(args) -> int:
    scm = _load_model(args.model)
    graph = scm.graph()
    observed = (
        frozenset(_parse_names(args.observe))
        if args.observe
        else scm.roles.observed
    )
    verdict = identifiable_by_adjustment(
        graph, scm.roles.treatment, scm.roles.outcome, observed
    )
    _emit(json.dumps(verdict.to_json(), indent=2) + "\n", args.out)
    return 0 if verdict.identifiable else 3


def _cmd_simulate(args) -> int:
    scm = _load_model(args.model)
    dataset = sample_observational(scm, args.samples, args.seed)
    if args.out and args.out != "-":
        dataset.to_csv(args.out)
    else:
        sys.stdout.write(",".join(dataset.columns) + "\n")
        for row in dataset.data:
            sys.stdout.write(",".join(_g(v) for v in row) + "\n")
    return 0


def _cmd_effect(args) -> int:
    scm = _load_model(args.model)
    observed = _parse_observations(args.observe)
    opts = InferenceOptions(seed=args.seed, laplace_draws=args.samples)
    if args.method == "laplace":
        posterior = laplace_posterior(scm, args.x, observed, opts)
    else:
        posterior = importance_posterior(scm, args.x, observed, args.samples, args.seed)
    comp = materialize_particles(scm, args.x, observed, posterior, opts)
    effect, se = average_partial_effect(scm, args.x, observed, comp, opts)
    payload = {
        "x": args.x,
        "observed": observed,
        "effect_C": effect,
        "se_effect": se,
        "n_used": comp.n,
        "n_eff": comp.n_eff,
        "method": comp.diagnostics.get("method", args.method),
        "seed": args.seed,
        "diagnostics": comp.diagnostics,
    }
    if args.format == "json":
        _emit(json.dumps(payload, indent=2) + "\n", args.out)
    else:
        _emit(
            "x,C,se_C,n,n_eff,method,seed\n"
            f"{_g(args.x)},{_g(effect)},{_g(se)},{comp.n},{_g(comp.n_eff)},"
            f"{payload['method']},{args.seed}\n",
            args.out,
        )
    return 0


def _cmd_bias(args) -> int:
    scm = _load_model(args.model)
    observed = _parse_observations(args.observe)
    posterior = None
    if args.dump_posterior:
        opts = InferenceOptions(seed=args.seed, laplace_draws=args.samples)
        if args.method == "laplace":
            raw = laplace_posterior(scm, args.x, observed, opts)
        else:
            raw = importance_posterior(scm, args.x, observed, args.samples, args.seed)
        posterior = materialize_particles(scm, args.x, observed, raw, opts)
        names = list(posterior.noise)
        with open(args.dump_posterior, "w", encoding="utf-8") as fh:
            fh.write(",".join(names + ["weight"]) + "\n")
            for i in range(posterior.n):
                row = [_g(float(posterior.noise[m][i])) for m in names]
                row.append(_g(float(posterior.weights[i])))
                fh.write(",".join(row) + "\n")
    report = bias_report(
        scm,
        x=args.x,
        o=observed,
        method=args.method,
        samples=args.samples,
        seed=args.seed,
        posterior=posterior,
    )
    if args.format == "json":
        _emit(json.dumps(report.to_json(), indent=2) + "\n", args.out)
    else:
        _emit(report.csv_header() + "\n" + report.csv_row() + "\n", args.out)
    return 0


# two parameter configurations: a mild confounder (alpha=1) and a strong one
# (alpha=5) whose confounding-bias curve crosses the constant overcontrol
# level, so each observation choice wins on part of the treatment range
LESSER_EVIL_CONFIGS: tuple[LinearModelParams, ...] = (
    LinearModelParams(alpha=1.0, beta=1.0, gamma=1.0, delta=1.0),
    LinearModelParams(alpha=5.0, beta=0.75, gamma=1.5, delta=1.0),
)


def _experiment_lesser_evil(args) -> str:
    grid = np.linspace(-20.0, 20.0, args.grid_points + 2)[1:-1]
    lines = ["alpha,x,abs_bias_unobserved,se_unobserved,abs_bias_observed,se_observed"]
    for params in LESSER_EVIL_CONFIGS:
        alpha = params.alpha
        scm = builtin("lesser-evil", params)
        for x in grid:
            hidden = bias_report(scm, float(x), {}, method="laplace", seed=args.seed)
            seen = bias_report(
                scm, float(x), {"V2": args.observe_value}, method="laplace", seed=args.seed
            )
            lines.append(
                f"{_g(alpha)},{_g(float(x))},{_g(abs(hidden.bias_B))},{_g(hidden.se_bias)},"
                f"{_g(abs(seen.bias_B))},{_g(seen.se_bias)}"
            )
    return "\n".join(lines) + "\n"


ASCVD_OBSERVED_SETS: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("A+L+F+D", ("A", "L", "F", "D")),
    ("none", ()),
    ("A+L+F+D+M", ("A", "L", "F", "D", "M")),
    ("A+L+F+D+H", ("A", "L", "F", "D", "H")),
    ("H+M", ("H", "M")),
)


def _experiment_ascvd(args) -> str:
    scm = builtin("ascvd")
    draws = sample_observational(scm, args.draws, args.seed)
    lines = ["section,draw,observed_set,x,effect,bias,se_effect,se_bias,n_eff"]
    sums: dict[str, list[tuple[float, float]]] = {label: [] for label, _ in ASCVD_OBSERVED_SETS}
    seed_seq = np.random.SeedSequence(args.seed).spawn(args.draws)

    def run_draw(i: int) -> list[tuple[str, float, object]]:
        row = draws.row_assignment(i)
        x = row[scm.roles.treatment]
        draw_seed = int(seed_seq[i].generate_state(1)[0])
        out = []
        for label, names in ASCVD_OBSERVED_SETS:
            observed = {name: row[name] for name in names}
            report = bias_report(
                scm, x, observed, method="is", samples=args.samples, seed=draw_seed
            )
            out.append((label, x, report))
        return out

    # draws run in a worker pool; results are buffered and emitted in
    # draw-index order, so output is independent of scheduling
    workers = worker_count()
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_draw, range(args.draws)))
    else:
        results = [run_draw(i) for i in range(args.draws)]
    for i, chunk in enumerate(results):
        for label, x, report in chunk:
            sums[label].append((report.effect_C, report.bias_B))
            lines.append(
                f"draw,{i},{label},{_g(x)},{_g(report.effect_C)},{_g(report.bias_B)},"
                f"{_g(report.se_effect)},{_g(report.se_bias)},{_g(report.n_eff)}"
            )
    for label, _ in ASCVD_OBSERVED_SETS:
        effects = np.array([e for e, _ in sums[label]])
        biases = np.array([b for _, b in sums[label]])
        lines.append(
            f"mean,,{label},,{_g(effects.mean())},{_g(biases.mean())},,,"
        )
        lines.append(
            f"sd,,{label},,{_g(effects.std(ddof=0))},{_g(biases.std(ddof=0))},,,"
        )
    return "\n".join(lines) + "\n"


def _cmd_experiment(args) -> int:
    if args.name == "lesser-evil":
        text = _experiment_lesser_evil(args)
    elif args.name == "ascvd":
        text = _experiment_ascvd(args)
    else:
        raise ValueError(f"unknown experiment {args.name!r}")
    _emit(text, args.out)
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalbias",
        description="Identifiability checks and causal-bias estimation for "
        "structural causal models with continuous treatments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_model(p):
        p.add_argument(
            "--model",
            required=True,
            help=f"builtin:<name> (one of {', '.join(builtin_names())}) or a JSON model path",
        )

    def add_common(p):
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--samples", type=int, default=100_000)
        p.add_argument("--method", choices=("laplace", "is"), default="laplace")
        p.add_argument("--format", choices=("json", "csv"), default="json")
        p.add_argument("--out", default=None, help="output path (default stdout)")

    p = sub.add_parser("identify", help="decide identifiability by covariate adjustment")
    add_model(p)
    p.add_argument("--observe", action="append", default=[], metavar="NAME[,NAME...]")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_identify)

    p = sub.add_parser("simulate", help="write an observational sample as CSV")
    add_model(p)
    p.add_argument("--samples", type=int, default=3000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("effect", help="average partial effect on the treated")
    add_model(p)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--observe", action="append", default=[], metavar="NAME=VALUE[,...]")
    add_common(p)
    p.set_defaults(func=_cmd_effect)

    p = sub.add_parser("bias", help="full association/effect/bias report")
    add_model(p)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--observe", action="append", default=[], metavar="NAME=VALUE[,...]")
    p.add_argument("--dump-posterior", default=None, metavar="PATH")
    add_common(p)
    p.set_defaults(func=_cmd_bias)

    p = sub.add_parser("experiment", help="scripted reproductions as CSV tables")
    p.add_argument("name", choices=("lesser-evil", "ascvd"))
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--draws", type=int, default=200, help="ascvd: number of (x, o) draws")
    p.add_argument("--grid-points", type=int, default=200, help="lesser-evil: x grid size")
    p.add_argument(
        "--observe-value", type=float, default=2.0, help="lesser-evil: pinned V2 value"
    )
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_experiment)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return 1 if err.code not in (0, None) else 0
    try:
        return args.func(args)
    except (NumericalError, EstimationError, ArithmeticError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except (CausalBiasError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
