"""Command-line front end.

Subcommands: verify, falsify, transform, encode, batch, augment.
Verdicts go to standard output, diagnostics to standard error.  Exit
codes are a machine contract: 0 Robust, 1 NotRobust, 2 Undecided, 10
usage errors, 11 file errors, 12 invalid problem data.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from .core import DimensionError, DomainError, Image
from .encoder import UnsupportedCompositionError, VerificationQuery, encode_query
from .io import LoadError, load_image, load_query, save_image
from .milp import export_lp
from .network import forward
from .solver import SolverConfig
from .transforms import (
    Instantiation,
    Photometric,
    Subsample,
    Translation,
    Zoom,
    apply_one,
)
from .verifier import (
    NotRobust,
    Robust,
    Undecided,
    batch_verify,
    export_adversarial_set,
    falsify_bruteforce,
    format_batch_table,
    verify,
)

EXIT_ROBUST = 0
EXIT_NOT_ROBUST = 1
EXIT_UNDECIDED = 2
EXIT_USAGE = 10
EXIT_IO = 11
EXIT_INVALID = 12

DEFAULT_TIMEOUT = 200.0


class UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad flags; the exit-code contract
    reserves 2 for Undecided, so usage failures exit 10 instead."""

    def error(self, message):
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _ints(text: str, n: int, flag: str) -> tuple[int, ...]:
    parts = text.split(",")
    try:
        values = tuple(int(p) for p in parts)
    except ValueError:
        raise UsageError(f"{flag}: expected integers, got {text!r}") from None
    if len(values) != n:
        raise UsageError(f"{flag}: expected {n} comma-separated values")
    return values


def _floats(text: str, n: int, flag: str) -> tuple[float, ...]:
    parts = text.split(",")
    try:
        values = tuple(float(p) for p in parts)
    except ValueError:
        raise UsageError(f"{flag}: expected numbers, got {text!r}") from None
    if len(values) != n:
        raise UsageError(f"{flag}: expected {n} comma-separated values")
    return values


def _inline_specs(args):
    """Inline domain flags, photometric first (the only legal spot)."""
    specs = []
    if args.photometric:
        m1, m2, n1, n2 = _floats(args.photometric, 4, "--photometric")
        specs.append(Photometric(m1, m2, n1, n2))
    if args.translate:
        a, b, c, d = _ints(args.translate, 4, "--translate")
        specs.append(Translation.box(a, b, c, d))
    if args.subsample:
        lo, hi = _ints(args.subsample, 2, "--subsample")
        if hi < lo:
            raise UsageError("--subsample: empty interval")
        specs.append(Subsample(factors=tuple(range(lo, hi + 1))))
    if args.zoom:
        lo, hi = _ints(args.zoom, 2, "--zoom")
        if hi < lo:
            raise UsageError("--zoom: empty interval")
        specs.append(Zoom(factors=tuple(range(lo, hi + 1))))
    return tuple(specs)


def _build_query(args) -> tuple[VerificationQuery, SolverConfig]:
    if args.query:
        if args.network or args.image:
            raise UsageError("--query excludes --network/--image")
        query, config = load_query(args.query)
    else:
        if not (args.network and args.image):
            raise UsageError("need --query, or --network and --image")
        from .io import load_network
        net = load_network(args.network)
        im = load_image(args.image, index=args.image_index)
        specs = _inline_specs(args)
        label = forward(net, im).label
        query = VerificationQuery(net, im, label, specs, args.rho)
        config = SolverConfig(timeout_seconds=DEFAULT_TIMEOUT)
    if args.timeout is not None:
        config = SolverConfig(
            timeout_seconds=args.timeout,
            feasibility_tolerance=config.feasibility_tolerance,
            integrality_tolerance=config.integrality_tolerance,
            branching_rule=config.branching_rule,
            node_limit=config.node_limit,
        )
    return query, config


def _report_outcome(outcome, elapsed: float, counterexample_path: str) -> int:
    if isinstance(outcome, Robust):
        print(f"Robust ({elapsed:.2f}s)")
        return EXIT_ROBUST
    if isinstance(outcome, Undecided):
        print(f"Undecided: {outcome.reason} ({elapsed:.2f}s)")
        if outcome.detail:
            print(outcome.detail, file=sys.stderr)
        return EXIT_UNDECIDED
    assert isinstance(outcome, NotRobust)
    insts = ";".join(
        ",".join(f"{v:g}" for v in inst.values) if inst.values else "0"
        for inst in outcome.instantiations) or "-"
    print(f"NotRobust ({elapsed:.2f}s)")
    print(f"instantiation: {insts}")
    print(f"adversarial label: {outcome.adversarial_label} "
          f"(was {outcome.original_label}, "
          f"replay {'confirmed' if outcome.replay_confirmed else 'UNCONFIRMED'})")
    try:
        save_image(outcome.counterexample, counterexample_path)
        print(f"counterexample: {counterexample_path}")
    except (OSError, DomainError) as exc:
        print(f"could not write counterexample: {exc}", file=sys.stderr)
    return EXIT_NOT_ROBUST


def _cmd_verify(args) -> int:
    query, config = _build_query(args)
    start = time.perf_counter()
    outcome = verify(query, config)
    return _report_outcome(outcome, time.perf_counter() - start,
                           args.counterexample)


def _cmd_falsify(args) -> int:
    query, _ = _build_query(args)
    start = time.perf_counter()
    outcome = falsify_bruteforce(query, grid=args.grid)
    return _report_outcome(outcome, time.perf_counter() - start,
                           args.counterexample)


def _cmd_transform(args) -> int:
    im = load_image(args.image, index=args.image_index)
    chosen = [flag for flag in ("translate", "subsample", "zoom", "photometric")
              if getattr(args, flag)]
    if len(chosen) != 1:
        raise UsageError("transform needs exactly one of --translate, "
                         "--subsample, --zoom, --photometric")
    flag = chosen[0]
    if flag == "translate":
        tx, ty = _ints(args.translate, 2, "--translate")
        spec = Translation(offsets=((tx, ty),))
        inst = Instantiation(values=(float(tx), float(ty)))
    elif flag == "subsample":
        (d,) = _ints(args.subsample, 1, "--subsample")
        spec = Subsample(factors=(d,))
        inst = Instantiation(values=(float(d),))
    elif flag == "zoom":
        (d,) = _ints(args.zoom, 1, "--zoom")
        spec = Zoom(factors=(d,))
        inst = Instantiation(values=(float(d),))
    else:
        mu, nu = _floats(args.photometric, 2, "--photometric")
        spec = Photometric(mu, mu, nu, nu)
        inst = Instantiation(values=(mu, nu))
    out = apply_one(im, spec, inst)
    save_image(out, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_encode(args) -> int:
    query, _ = _build_query(args)
    model, _, _ = encode_query(query)
    text = export_lp(model)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(text)
    stats = model.stats()
    print(f"wrote {args.out} ({stats['variables']} variables, "
          f"{stats['constraints']} constraints, {stats['binaries']} binaries)")
    return 0


def _query_documents(directory: str) -> list[str]:
    try:
        names = sorted(os.listdir(directory))
    except OSError as exc:
        raise LoadError(f"{directory}: cannot list: {exc}") from exc
    paths = [os.path.join(directory, n) for n in names if n.endswith(".json")]
    if not paths:
        raise LoadError(f"{directory}: no .json query documents")
    return paths


def _load_batch(args) -> tuple[list[VerificationQuery], list[SolverConfig]]:
    queries, configs = [], []
    for path in _query_documents(args.queries):
        query, config = load_query(path)
        if args.timeout is not None:
            config = SolverConfig(
                timeout_seconds=args.timeout,
                feasibility_tolerance=config.feasibility_tolerance,
                integrality_tolerance=config.integrality_tolerance,
                branching_rule=config.branching_rule,
                node_limit=config.node_limit,
            )
        queries.append(query)
        configs.append(config)
    return queries, configs


def _cmd_batch(args) -> int:
    queries, configs = _load_batch(args)
    result = batch_verify(queries, configs=configs, jobs=args.jobs)
    with open(args.report, "w", encoding="utf-8") as fh:
        fh.write("domain\tverified\tmean_s\tltr\n")
        for row in result.rows:
            fh.write(f"{row.domain}\t{row.verified}\t"
                     f"{row.mean_seconds:.3f}\t{row.robust}\n")
    print(format_batch_table(result.rows), end="")
    print(f"report: {args.report}")
    return 0


def _cmd_augment(args) -> int:
    queries, configs = _load_batch(args)
    result = batch_verify(queries, configs=configs, jobs=args.jobs)
    count = export_adversarial_set(result.outcomes, args.out)
    print(f"wrote {count} adversarial images to {args.out}")
    return 0


def _add_query_flags(sub, counterexample=True):
    sub.add_argument("--query", help="query document path")
    sub.add_argument("--network", help="network document path")
    sub.add_argument("--image", help="image path (PGM or IDX)")
    sub.add_argument("--image-index", type=int, default=0,
                     help="image index within an IDX file")
    sub.add_argument("--translate", metavar="TXLO,TXHI,TYLO,TYHI",
                     help="translation box, integer lattice")
    sub.add_argument("--subsample", metavar="LO,HI",
                     help="subsample factor interval")
    sub.add_argument("--zoom", metavar="LO,HI", help="zoom factor interval")
    sub.add_argument("--photometric", metavar="MULO,MUHI,NULO,NUHI",
                     help="contrast/brightness box")
    sub.add_argument("--rho", type=float, default=0.0,
                     help="perturbation radius")
    sub.add_argument("--timeout", type=float, default=None,
                     help=f"solver timeout in seconds (default {DEFAULT_TIMEOUT:g})")
    if counterexample:
        sub.add_argument("--counterexample", default="counterexample.pgm",
                         help="where to write a found counterexample")


def build_parser() -> _Parser:
    parser = _Parser(prog="transcheck",
                     description="Robustness verification of CNNs under "
                                 "image transformations")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("verify", parents=[], help="decide robustness exactly")
    _add_query_flags(p)
    p.set_defaults(func=_cmd_verify)

    p = subs.add_parser("falsify", help="search the enumerated domain")
    _add_query_flags(p)
    p.add_argument("--grid", type=int, default=2,
                   help="lattice size per photometric axis")
    p.set_defaults(func=_cmd_falsify)

    p = subs.add_parser("transform", help="apply one concrete transformation")
    p.add_argument("--image", required=True)
    p.add_argument("--image-index", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--translate", metavar="TX,TY")
    p.add_argument("--subsample", metavar="D")
    p.add_argument("--zoom", metavar="D")
    p.add_argument("--photometric", metavar="MU,NU")
    p.set_defaults(func=_cmd_transform)

    p = subs.add_parser("encode", help="write the query model as LP text")
    _add_query_flags(p, counterexample=False)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_encode)

    p = subs.add_parser("batch", help="verify a directory of queries")
    p.add_argument("--queries", required=True, help="directory of query documents")
    p.add_argument("--report", required=True, help="tab-separated report path")
    p.add_argument("--timeout", type=float, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_batch)

    p = subs.add_parser("augment",
                        help="verify queries and export counterexamples")
    p.add_argument("--outcomes", dest="queries", required=True,
                   help="directory of query documents to verify")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--timeout", type=float, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_augment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LoadError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DomainError, DimensionError, UnsupportedCompositionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
