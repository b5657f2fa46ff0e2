"""Command-line entry point.

    fires bound     [--config cfg.json] [--mode oma|noma|both]
    fires optimize  [--config cfg.json] [--seed 1,2,3] [--mode ...] [--surface fires|star|both] [--out f.csv]
    fires baseline  [--config cfg.json] [--seed ...] [--mode ...] [--out f.csv]
    fires sweep     --config cfg.json [--seed ...] [--out f.csv] [--jobs N]
    fires bench     [--config cfg.json] [--seed ...] [--out f.csv]

Exit status: 0 on success, 2 on a configuration error, 3 when no run was
feasible anywhere.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .config import ConfigError, load_config
from .experiments import (bench_csv, run_baseline_star_ris, run_bench, run_bound, run_optimize, run_sweep,
                          runtime_ratio, to_csv, write_csv)

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE = 0, 2, 3


def _seed_list(text: str) -> tuple[int, ...]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty seed list")
    return tuple(out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fires", description="Coverage bounds and placement optimization "
                                "for fluid reflecting-and-emitting surfaces.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("bound", "closed-form radii at the configured operating point"),
                        ("optimize", "run the placement search"),
                        ("baseline", "score the fixed-position (centre preset) surface"),
                        ("sweep", "run the configured parameter sweep and write a CSV"),
                        ("bench", "runtime table over swarm size and element count")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="JSON experiment file (defaults to the built-in scenario)")
        s.add_argument("--seed", type=_seed_list, help="seed list, e.g. 1,2,5 or 1-10")
        s.add_argument("--out", help="output CSV path (stdout if omitted)")
        s.add_argument("--mode", choices=("oma", "noma", "both"))
        s.add_argument("--surface", choices=("fires", "star", "both"))
        s.add_argument("--jobs", type=int, help="worker processes for independent runs")
        s.add_argument("--timing", action="store_true", help="fill the secs column (not reproducible)")
    return p


def _emit(text: str, out) -> None:
    if out:
        write_csv(text, out)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        kw = {}
        if args.seed:
            kw["seeds"] = args.seed
        if args.mode:
            kw["mode"] = args.mode
        if args.surface:
            kw["surface"] = args.surface
        if args.jobs:
            if args.jobs < 1:
                raise ConfigError("--jobs", "must be at least 1")
            kw["jobs"] = args.jobs
        if args.timing:
            kw["timing"] = True
        config = replace(config, **kw)
        if args.command == "sweep" and config.axis is None:
            raise ConfigError("sweep", "the config file must define a sweep axis and values")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = args.out or config.out
    if args.command == "bound":
        any_feasible = False
        modes = ("oma", "noma") if config.mode == "both" else (config.mode,)
        for scheme in modes:
            res = run_bound(config, scheme)
            any_feasible |= res.feasible
            warn = "  [inside Rayleigh distance]" if res.rayleigh_warning else ""
            print(f"{scheme}: D_r={res.D_r:.4f} m  D_t={res.D_t:.4f} m  D_tot={res.D_tot:.4f} m  "
                  f"feasible={res.feasible}{warn}")
        return EXIT_OK if any_feasible else EXIT_INFEASIBLE

    if args.command == "bench":
        rows = run_bench(config)
        _emit(bench_csv(rows), out)
        ns = sorted({r.N_p for r in rows})
        if len(ns) >= 2:
            print(f"runtime ratio N_p={ns[-1]} vs {ns[0]}: {runtime_ratio(rows, 'N_p', ns[0], ns[-1]):.3f}",
                  file=sys.stderr)
        return EXIT_OK if any(r.D_tot_best > 0 for r in rows) else EXIT_INFEASIBLE

    if args.command == "sweep":
        records = run_sweep(config)
    elif args.command == "baseline":
        _, records = run_baseline_star_ris(config)
    else:
        _, records = run_optimize(config)
    _emit(to_csv(records), out)
    return EXIT_OK if any(r.feas_rate > 0 for r in records) else EXIT_INFEASIBLE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
