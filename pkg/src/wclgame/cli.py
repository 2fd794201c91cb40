"""Command line entry point.

Exit codes: 0 success, 1 invalid input (bad arguments, unreadable or
invalid scenario), 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time

from .errors import ValidationError
from .harness import export_results, generate_paper_scenario, load_scenario, run_experiment, save_scenario
from .harness.bench import alloc_bench, pso_bench, tgsp_bench, write_pso_traces

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("wclgame")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_INVALID)


def _scenario(arg: str, seed: int | None):
    if arg == "paper":
        return generate_paper_scenario(0 if seed is None else seed)
    try:
        sc = load_scenario(arg)
    except OSError as exc:
        raise ValidationError(f"cannot read scenario {arg}: {exc.strerror or exc}") from None
    return sc if seed is None else sc.with_seed(seed)


def _grid(text: str) -> tuple[int, int]:
    try:
        r, c = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like 10x10, got {text!r}") from None
    if r < 1 or c < 1 or r * c < 2:
        raise argparse.ArgumentTypeError("grid needs at least two nodes")
    return r, c


def _dump(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_run(args) -> int:
    sc = _scenario(args.scenario, args.seed)

    def progress(hour, out):
        log.info("hour %d: %d iteration(s), %s, max gap %.3f kWh",
                 hour, out.iterations, out.stop_reason, max(out.gaps()[-1:], default=0.0))

    t0 = time.perf_counter()
    bundle = run_experiment(sc, progress=progress)
    paths = export_results(bundle, args.out)
    print(f"{len(bundle.hours)} hour(s), {len(bundle.ev_rows)} EV rows in {time.perf_counter() - t0:.1f} s")
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_gen_paper(args) -> int:
    print(save_scenario(generate_paper_scenario(args.seed), args.out))
    return EXIT_OK


def cmd_tgsp_bench(args) -> int:
    rows, cols = args.grid
    res = tgsp_bench(rows, cols, args.lanes, args.trials, seed=args.seed)
    res.pop("ratios")
    res.pop("n")
    _dump(res)
    return EXIT_OK


def cmd_pso_bench(args) -> int:
    sc = _scenario(args.scenario, args.seed)
    variants = tuple(v.strip() for v in args.variants.split(",") if v.strip())
    res = pso_bench(sc, variants, seeds=args.seeds, hour=args.hour)
    if args.out:
        write_pso_traces(res, args.out)
    for v in variants:
        res[v].pop("traces")
    _dump(res)
    return EXIT_OK


def cmd_alloc_bench(args) -> int:
    res = alloc_bench(args.instances, seed=args.seed)
    res.pop("rows")
    _dump(res)
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = _scenario(args.scenario, None)
    n_evs = sum(len(c.evs) for c in sc.cohorts)
    print(f"ok: {sc.network.n_nodes} nodes, {len(sc.network.edges)} roads, {len(sc.wcls)} lanes, "
          f"{len(sc.cohorts)} cohort(s), {n_evs} EVs")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wclgame", description="Double-layer charging game for wireless charging lanes.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run", help="run every hourly game of a scenario and export CSVs")
    p.add_argument("--scenario", required=True, help="scenario TOML file, or 'paper' for the generated one")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides the scenario's)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("gen-paper", help="write the generated paper-style scenario as TOML")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_paper)

    p = sub.add_parser("tgsp-bench", help="TGSP against exhaustive ordering on random lattice instances")
    p.add_argument("--grid", type=_grid, default=(10, 10), help="lattice size RxC")
    p.add_argument("--lanes", type=int, default=4)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_tgsp_bench)

    p = sub.add_parser("pso-bench", help="compare swarm variants on one cohort")
    p.add_argument("--scenario", required=True, help="scenario TOML file, or 'paper'")
    p.add_argument("--variants", default="improved,traditional")
    p.add_argument("--seeds", type=int, default=5, help="number of paired seeds")
    p.add_argument("--hour", type=int, default=None, help="cohort hour (default: largest cohort)")
    p.add_argument("--seed", type=int, default=None, help="first seed (overrides the scenario's)")
    p.add_argument("--out", default=None, help="write per-iteration best fitness to this CSV")
    p.set_defaults(func=cmd_pso_bench)

    p = sub.add_parser("alloc-bench", help="charge allocator against lattice brute force")
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_alloc_bench)

    p = sub.add_parser("validate", help="load and check a scenario file")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for name in ("lanes", "trials", "instances", "seeds"):
        if getattr(args, name, 1) < 1:
            print(f"wclgame: error: --{name} must be at least 1", file=sys.stderr)
            return EXIT_INVALID
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"wclgame: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime error
        log.debug("runtime failure", exc_info=True)
        print(f"wclgame: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
